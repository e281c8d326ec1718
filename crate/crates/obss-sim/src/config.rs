//! Run configuration: flat `key = value` text with dotted section
//! prefixes. Every schema key is mandatory, unknown keys are fatal, and
//! the built-in default reproduces the reference scenario.

use crate::phy::{McsTable, MAX_INTER_BSS_NULLS};
use crate::rng::fnv1a64;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(String),
    #[error("missing mandatory key: {0}")]
    MissingKey(String),
    #[error("unknown key: {0}")]
    UnknownKey(String),
    #[error("duplicate key: {0}")]
    DuplicateKey(String),
    #[error("malformed line {0}: expected key = value")]
    MalformedLine(usize),
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
}

/// MCS table source: derived from the gap rule or listed explicitly.
#[derive(Debug, Clone, PartialEq)]
pub enum McsTableSpec {
    Auto,
    /// `(spectral efficiency, min SINR dB)` per index.
    Explicit(Vec<(f64, f64)>),
}

/// The full simulator configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ap_positions: Vec<(f64, f64)>,
    /// Room dimensions (x, y, z), meters.
    pub room: (f64, f64, f64),
    pub n_broadband: u32,
    pub n_ar: u32,

    /// Offered broadband load per STA, Mbit/s.
    pub ftp3_offered_mbps: f64,
    pub ftp3_size_bytes: u64,
    pub ar_period_ms: f64,
    pub ar_size_bytes: u64,

    pub fc_ghz: f64,

    pub bandwidth_mhz: u32,
    pub ap_antennas: u32,
    pub preamble_us: f64,
    pub mcs_gap_db: f64,
    /// Backoff applied to predicted SINR before MCS selection, dB.
    pub mcs_margin_db: f64,
    pub mcs_table: McsTableSpec,

    pub ap_power_dbm: f64,
    pub sta_power_dbm: f64,

    pub nf_ap_db: f64,
    pub nf_sta_db: f64,

    pub txop_ms: f64,
    pub slot_us: f64,
    pub sifs_us: f64,
    pub aifs_us: f64,
    pub ack_us: f64,
    pub trigger_us: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub cca_dbm: f64,

    pub suppression_db: f64,
    pub max_nulls: u32,
    pub safety_margin_db: f64,
    pub min_usable_dbm: f64,
    pub coordination_threshold_dbm: f64,
    pub refresh_txops: u32,
    pub coordination_us: f64,
    pub sounding_us: f64,
    pub csi_validity_ms: f64,
    pub reuse_cw: u32,

    pub duration_s: f64,
    pub warmup_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ap_positions: vec![(10.0, 10.0), (25.0, 10.0)],
            room: (35.0, 20.0, 3.0),
            n_broadband: 16,
            n_ar: 8,
            ftp3_offered_mbps: 100.0,
            ftp3_size_bytes: 500_000,
            ar_period_ms: 10.0,
            ar_size_bytes: 32,
            fc_ghz: 5.18,
            bandwidth_mhz: 80,
            ap_antennas: 8,
            preamble_us: 40.0,
            mcs_gap_db: 4.0,
            mcs_margin_db: 15.0,
            mcs_table: McsTableSpec::Auto,
            ap_power_dbm: 24.0,
            sta_power_dbm: 15.0,
            nf_ap_db: 7.0,
            nf_sta_db: 9.0,
            txop_ms: 4.0,
            slot_us: 9.0,
            sifs_us: 16.0,
            aifs_us: 34.0,
            ack_us: 44.0,
            trigger_us: 100.0,
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 10,
            cca_dbm: -82.0,
            suppression_db: 10.0,
            max_nulls: 4,
            safety_margin_db: 3.0,
            min_usable_dbm: -10.0,
            coordination_threshold_dbm: -75.0,
            refresh_txops: 100,
            coordination_us: 100.0,
            sounding_us: 300.0,
            csi_validity_ms: 20.0,
            reuse_cw: 15,
            duration_s: 30.0,
            warmup_s: 1.0,
        }
    }
}

/// Every schema key in canonical emission order.
pub const SCHEMA_KEYS: [&str; 41] = [
    "deployment.ap_positions",
    "deployment.room",
    "deployment.n_broadband",
    "deployment.n_ar",
    "traffic.ftp3.offered_mbps",
    "traffic.ftp3.size_bytes",
    "traffic.ar.period_ms",
    "traffic.ar.size_bytes",
    "channel.fc_ghz",
    "phy.bandwidth_mhz",
    "phy.ap_antennas",
    "phy.preamble_us",
    "phy.mcs_gap_db",
    "phy.mcs_margin_db",
    "phy.mcs_table",
    "power.ap_dbm",
    "power.sta_dbm",
    "noise.nf_ap_db",
    "noise.nf_sta_db",
    "mac.txop_ms",
    "mac.slot_us",
    "mac.sifs_us",
    "mac.aifs_us",
    "mac.ack_us",
    "mac.trigger_us",
    "mac.cw_min",
    "mac.cw_max",
    "mac.retry_limit",
    "mac.cca_dbm",
    "sr.suppression_db",
    "sr.max_nulls",
    "sr.safety_margin_db",
    "sr.min_usable_dbm",
    "sr.coordination_threshold_dbm",
    "sr.refresh_txops",
    "sr.coordination_us",
    "sr.sounding_us",
    "sr.csi_validity_ms",
    "sr.reuse_cw",
    "run.duration_s",
    "run.warmup_s",
];

impl RunConfig {
    /// FTP-3 file arrival rate per broadband STA, files/s.
    pub fn ftp3_lambda(&self) -> f64 {
        self.ftp3_offered_mbps * 1e6 / (self.ftp3_size_bytes as f64 * 8.0)
    }

    /// Build (and validate) the MCS table this config describes.
    pub fn build_mcs_table(&self) -> Result<McsTable, ConfigError> {
        let table = match &self.mcs_table {
            McsTableSpec::Auto => McsTable::shannon_gap(self.bandwidth_mhz, self.mcs_gap_db),
            McsTableSpec::Explicit(pairs) => McsTable::from_se_sinr(pairs, self.bandwidth_mhz),
        };
        table.map_err(|e| ConfigError::Invalid {
            key: "phy.mcs_table".into(),
            reason: e.to_string(),
        })
    }

    /// Canonical text form; `parse_config` of it yields back `self`.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let positions = self
            .ap_positions
            .iter()
            .map(|(x, y)| format!("{x},{y}"))
            .collect::<Vec<_>>()
            .join(";");
        let mcs_table = match &self.mcs_table {
            McsTableSpec::Auto => "auto".to_string(),
            McsTableSpec::Explicit(pairs) => pairs
                .iter()
                .map(|(se, thr)| format!("{se}:{thr}"))
                .collect::<Vec<_>>()
                .join(","),
        };
        let _ = writeln!(s, "deployment.ap_positions = {positions}");
        let _ = writeln!(
            s,
            "deployment.room = {},{},{}",
            self.room.0, self.room.1, self.room.2
        );
        let _ = writeln!(s, "deployment.n_broadband = {}", self.n_broadband);
        let _ = writeln!(s, "deployment.n_ar = {}", self.n_ar);
        let _ = writeln!(s, "traffic.ftp3.offered_mbps = {}", self.ftp3_offered_mbps);
        let _ = writeln!(s, "traffic.ftp3.size_bytes = {}", self.ftp3_size_bytes);
        let _ = writeln!(s, "traffic.ar.period_ms = {}", self.ar_period_ms);
        let _ = writeln!(s, "traffic.ar.size_bytes = {}", self.ar_size_bytes);
        let _ = writeln!(s, "channel.fc_ghz = {}", self.fc_ghz);
        let _ = writeln!(s, "phy.bandwidth_mhz = {}", self.bandwidth_mhz);
        let _ = writeln!(s, "phy.ap_antennas = {}", self.ap_antennas);
        let _ = writeln!(s, "phy.preamble_us = {}", self.preamble_us);
        let _ = writeln!(s, "phy.mcs_gap_db = {}", self.mcs_gap_db);
        let _ = writeln!(s, "phy.mcs_margin_db = {}", self.mcs_margin_db);
        let _ = writeln!(s, "phy.mcs_table = {mcs_table}");
        let _ = writeln!(s, "power.ap_dbm = {}", self.ap_power_dbm);
        let _ = writeln!(s, "power.sta_dbm = {}", self.sta_power_dbm);
        let _ = writeln!(s, "noise.nf_ap_db = {}", self.nf_ap_db);
        let _ = writeln!(s, "noise.nf_sta_db = {}", self.nf_sta_db);
        let _ = writeln!(s, "mac.txop_ms = {}", self.txop_ms);
        let _ = writeln!(s, "mac.slot_us = {}", self.slot_us);
        let _ = writeln!(s, "mac.sifs_us = {}", self.sifs_us);
        let _ = writeln!(s, "mac.aifs_us = {}", self.aifs_us);
        let _ = writeln!(s, "mac.ack_us = {}", self.ack_us);
        let _ = writeln!(s, "mac.trigger_us = {}", self.trigger_us);
        let _ = writeln!(s, "mac.cw_min = {}", self.cw_min);
        let _ = writeln!(s, "mac.cw_max = {}", self.cw_max);
        let _ = writeln!(s, "mac.retry_limit = {}", self.retry_limit);
        let _ = writeln!(s, "mac.cca_dbm = {}", self.cca_dbm);
        let _ = writeln!(s, "sr.suppression_db = {}", self.suppression_db);
        let _ = writeln!(s, "sr.max_nulls = {}", self.max_nulls);
        let _ = writeln!(s, "sr.safety_margin_db = {}", self.safety_margin_db);
        let _ = writeln!(s, "sr.min_usable_dbm = {}", self.min_usable_dbm);
        let _ = writeln!(
            s,
            "sr.coordination_threshold_dbm = {}",
            self.coordination_threshold_dbm
        );
        let _ = writeln!(s, "sr.refresh_txops = {}", self.refresh_txops);
        let _ = writeln!(s, "sr.coordination_us = {}", self.coordination_us);
        let _ = writeln!(s, "sr.sounding_us = {}", self.sounding_us);
        let _ = writeln!(s, "sr.csi_validity_ms = {}", self.csi_validity_ms);
        let _ = writeln!(s, "sr.reuse_cw = {}", self.reuse_cw);
        let _ = writeln!(s, "run.duration_s = {}", self.duration_s);
        let _ = writeln!(s, "run.warmup_s = {}", self.warmup_s);
        s
    }

    /// Stable hash of the canonical form; used to pair results.
    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_config_string().as_bytes())
    }
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{path:?}: {e}")))?;
    parse_config(&text)
}

/// Parse the flat key=value format. All schema keys are mandatory and must
/// appear exactly once; unknown keys are fatal.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::MalformedLine(lineno + 1))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !SCHEMA_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        if seen.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey(key));
        }
    }
    for key in SCHEMA_KEYS {
        if !seen.contains_key(key) {
            return Err(ConfigError::MissingKey(key.to_string()));
        }
    }

    let get = |key: &str| seen.get(key).expect("presence checked").as_str();

    let cfg = RunConfig {
        ap_positions: parse_positions(get("deployment.ap_positions"))?,
        room: parse_triple("deployment.room", get("deployment.room"))?,
        n_broadband: parse_num("deployment.n_broadband", get("deployment.n_broadband"))?,
        n_ar: parse_num("deployment.n_ar", get("deployment.n_ar"))?,
        ftp3_offered_mbps: parse_num(
            "traffic.ftp3.offered_mbps",
            get("traffic.ftp3.offered_mbps"),
        )?,
        ftp3_size_bytes: parse_num("traffic.ftp3.size_bytes", get("traffic.ftp3.size_bytes"))?,
        ar_period_ms: parse_num("traffic.ar.period_ms", get("traffic.ar.period_ms"))?,
        ar_size_bytes: parse_num("traffic.ar.size_bytes", get("traffic.ar.size_bytes"))?,
        fc_ghz: parse_num("channel.fc_ghz", get("channel.fc_ghz"))?,
        bandwidth_mhz: parse_num("phy.bandwidth_mhz", get("phy.bandwidth_mhz"))?,
        ap_antennas: parse_num("phy.ap_antennas", get("phy.ap_antennas"))?,
        preamble_us: parse_num("phy.preamble_us", get("phy.preamble_us"))?,
        mcs_gap_db: parse_num("phy.mcs_gap_db", get("phy.mcs_gap_db"))?,
        mcs_margin_db: parse_num("phy.mcs_margin_db", get("phy.mcs_margin_db"))?,
        mcs_table: parse_mcs_table(get("phy.mcs_table"))?,
        ap_power_dbm: parse_num("power.ap_dbm", get("power.ap_dbm"))?,
        sta_power_dbm: parse_num("power.sta_dbm", get("power.sta_dbm"))?,
        nf_ap_db: parse_num("noise.nf_ap_db", get("noise.nf_ap_db"))?,
        nf_sta_db: parse_num("noise.nf_sta_db", get("noise.nf_sta_db"))?,
        txop_ms: parse_num("mac.txop_ms", get("mac.txop_ms"))?,
        slot_us: parse_num("mac.slot_us", get("mac.slot_us"))?,
        sifs_us: parse_num("mac.sifs_us", get("mac.sifs_us"))?,
        aifs_us: parse_num("mac.aifs_us", get("mac.aifs_us"))?,
        ack_us: parse_num("mac.ack_us", get("mac.ack_us"))?,
        trigger_us: parse_num("mac.trigger_us", get("mac.trigger_us"))?,
        cw_min: parse_num("mac.cw_min", get("mac.cw_min"))?,
        cw_max: parse_num("mac.cw_max", get("mac.cw_max"))?,
        retry_limit: parse_num("mac.retry_limit", get("mac.retry_limit"))?,
        cca_dbm: parse_num("mac.cca_dbm", get("mac.cca_dbm"))?,
        suppression_db: parse_num("sr.suppression_db", get("sr.suppression_db"))?,
        max_nulls: parse_num("sr.max_nulls", get("sr.max_nulls"))?,
        safety_margin_db: parse_num("sr.safety_margin_db", get("sr.safety_margin_db"))?,
        min_usable_dbm: parse_num("sr.min_usable_dbm", get("sr.min_usable_dbm"))?,
        coordination_threshold_dbm: parse_num(
            "sr.coordination_threshold_dbm",
            get("sr.coordination_threshold_dbm"),
        )?,
        refresh_txops: parse_num("sr.refresh_txops", get("sr.refresh_txops"))?,
        coordination_us: parse_num("sr.coordination_us", get("sr.coordination_us"))?,
        sounding_us: parse_num("sr.sounding_us", get("sr.sounding_us"))?,
        csi_validity_ms: parse_num("sr.csi_validity_ms", get("sr.csi_validity_ms"))?,
        reuse_cw: parse_num("sr.reuse_cw", get("sr.reuse_cw"))?,
        duration_s: parse_num("run.duration_s", get("run.duration_s"))?,
        warmup_s: parse_num("run.warmup_s", get("run.warmup_s"))?,
    };
    validate(&cfg)?;
    Ok(cfg)
}

/// Range and consistency checks; every failure names its key.
pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let bad = |key: &str, reason: &str| {
        Err(ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        })
    };
    if cfg.ap_positions.is_empty() || cfg.ap_positions.len() > 8 {
        return bad("deployment.ap_positions", "need 1 to 8 APs");
    }
    if cfg.room.0 <= 0.0 || cfg.room.1 <= 0.0 || cfg.room.2 <= 0.0 {
        return bad("deployment.room", "dimensions must be positive");
    }
    for &(x, y) in &cfg.ap_positions {
        if !(0.0..=cfg.room.0).contains(&x) || !(0.0..=cfg.room.1).contains(&y) {
            return bad("deployment.ap_positions", "AP outside the room");
        }
    }
    if cfg.ftp3_offered_mbps <= 0.0 {
        return bad("traffic.ftp3.offered_mbps", "must be positive");
    }
    if cfg.ftp3_size_bytes == 0 {
        return bad("traffic.ftp3.size_bytes", "must be at least 1");
    }
    if cfg.ar_period_ms <= 0.0 {
        return bad("traffic.ar.period_ms", "must be positive");
    }
    if cfg.ar_size_bytes == 0 {
        return bad("traffic.ar.size_bytes", "must be at least 1");
    }
    if cfg.fc_ghz <= 0.0 {
        return bad("channel.fc_ghz", "must be positive");
    }
    if crate::phy::data_subcarriers(cfg.bandwidth_mhz).is_err() {
        return bad("phy.bandwidth_mhz", "supported: 20, 40, 80, 160");
    }
    if cfg.ap_antennas == 0 {
        return bad("phy.ap_antennas", "must be at least 1");
    }
    if cfg.preamble_us < 0.0 {
        return bad("phy.preamble_us", "must be non-negative");
    }
    if cfg.mcs_margin_db < 0.0 {
        return bad("phy.mcs_margin_db", "must be non-negative");
    }
    cfg.build_mcs_table()?;
    if !cfg.ap_power_dbm.is_finite() || !cfg.sta_power_dbm.is_finite() {
        return bad("power.ap_dbm", "must be finite");
    }
    if cfg.nf_ap_db < 0.0 || cfg.nf_sta_db < 0.0 {
        return bad("noise.nf_ap_db", "noise figure must be non-negative");
    }
    if cfg.txop_ms <= 0.0 {
        return bad("mac.txop_ms", "must be positive");
    }
    if cfg.slot_us <= 0.0 {
        return bad("mac.slot_us", "must be positive");
    }
    if cfg.sifs_us < 0.0 {
        return bad("mac.sifs_us", "must be non-negative");
    }
    if cfg.aifs_us <= cfg.sifs_us {
        return bad("mac.aifs_us", "must exceed mac.sifs_us");
    }
    if cfg.ack_us <= 0.0 || cfg.trigger_us <= 0.0 {
        return bad("mac.ack_us", "frame airtimes must be positive");
    }
    if cfg.cw_min == 0 {
        return bad("mac.cw_min", "must be at least 1");
    }
    if cfg.cw_max < cfg.cw_min {
        return bad("mac.cw_max", "must be at least mac.cw_min");
    }
    if !cfg.cca_dbm.is_finite() {
        return bad("mac.cca_dbm", "must be finite");
    }
    if cfg.suppression_db < 0.0 {
        return bad("sr.suppression_db", "must be non-negative");
    }
    if cfg.max_nulls > MAX_INTER_BSS_NULLS {
        return bad("sr.max_nulls", "at most 4");
    }
    if cfg.max_nulls >= cfg.ap_antennas {
        return bad("sr.max_nulls", "must leave at least one served stream");
    }
    if cfg.safety_margin_db < 0.0 {
        return bad("sr.safety_margin_db", "must be non-negative");
    }
    if cfg.refresh_txops == 0 {
        return bad("sr.refresh_txops", "must be at least 1");
    }
    if cfg.coordination_us < 0.0 || cfg.sounding_us < 0.0 {
        return bad("sr.coordination_us", "overheads must be non-negative");
    }
    if cfg.csi_validity_ms <= 0.0 {
        return bad("sr.csi_validity_ms", "must be positive");
    }
    if cfg.reuse_cw == 0 {
        return bad("sr.reuse_cw", "must be at least 1");
    }
    if cfg.duration_s < 0.0 {
        return bad("run.duration_s", "must be non-negative");
    }
    if cfg.warmup_s < 0.0 {
        return bad("run.warmup_s", "must be non-negative");
    }
    // the minimal TXOP exchange must fit the budget
    let overhead_us = cfg.trigger_us + 2.0 * cfg.sifs_us + cfg.ack_us + cfg.preamble_us;
    if cfg.txop_ms * 1000.0 <= overhead_us {
        return bad("mac.txop_ms", "too short for trigger + SIFS + data + ACK");
    }
    Ok(())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse::<T>().map_err(|_| ConfigError::Invalid {
        key: key.into(),
        reason: format!("cannot parse {value:?}"),
    })
}

fn parse_positions(value: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    let key = "deployment.ap_positions";
    value
        .split(';')
        .map(|pair| {
            let (x, y) = pair.split_once(',').ok_or(ConfigError::Invalid {
                key: key.into(),
                reason: format!("expected x,y in {pair:?}"),
            })?;
            Ok((parse_num(key, x.trim())?, parse_num(key, y.trim())?))
        })
        .collect()
}

fn parse_triple(key: &str, value: &str) -> Result<(f64, f64, f64), ConfigError> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(ConfigError::Invalid {
            key: key.into(),
            reason: "expected x,y,z".into(),
        });
    }
    Ok((
        parse_num(key, parts[0])?,
        parse_num(key, parts[1])?,
        parse_num(key, parts[2])?,
    ))
}

fn parse_mcs_table(value: &str) -> Result<McsTableSpec, ConfigError> {
    if value == "auto" {
        return Ok(McsTableSpec::Auto);
    }
    let key = "phy.mcs_table";
    let pairs = value
        .split(',')
        .map(|entry| {
            let (se, thr) = entry.split_once(':').ok_or(ConfigError::Invalid {
                key: key.into(),
                reason: format!("expected se:min_sinr in {entry:?}"),
            })?;
            Ok((parse_num(key, se.trim())?, parse_num(key, thr.trim())?))
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok(McsTableSpec::Explicit(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_text() {
        let cfg = RunConfig::default();
        let text = cfg.to_config_string();
        let parsed = parse_config(&text).unwrap();
        assert_eq!(parsed, cfg);
        assert_eq!(parsed.hash(), cfg.hash());
    }

    #[test]
    fn default_matches_reference_scenario() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.ap_positions, vec![(10.0, 10.0), (25.0, 10.0)]);
        assert_eq!(cfg.room, (35.0, 20.0, 3.0));
        assert_eq!((cfg.n_broadband, cfg.n_ar), (16, 8));
        assert_eq!(cfg.ftp3_lambda(), 25.0);
        assert_eq!(cfg.ar_period_ms, 10.0);
        assert_eq!(cfg.ar_size_bytes, 32);
        assert_eq!(cfg.fc_ghz, 5.18);
        assert_eq!(cfg.bandwidth_mhz, 80);
        assert_eq!(cfg.ap_antennas, 8);
        assert_eq!((cfg.ap_power_dbm, cfg.sta_power_dbm), (24.0, 15.0));
        assert_eq!((cfg.nf_ap_db, cfg.nf_sta_db), (7.0, 9.0));
        assert_eq!(cfg.txop_ms, 4.0);
        assert_eq!(cfg.suppression_db, 10.0);
        assert_eq!(cfg.max_nulls, 4);
    }

    #[test]
    fn unknown_key_is_fatal_with_name() {
        let mut text = RunConfig::default().to_config_string();
        text.push_str("mac.foo = 3\n");
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::UnknownKey("mac.foo".into()))
        );
    }

    #[test]
    fn missing_key_is_fatal_with_name() {
        let text: String = RunConfig::default()
            .to_config_string()
            .lines()
            .filter(|l| !l.starts_with("mac.txop_ms"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::MissingKey("mac.txop_ms".into()))
        );
    }

    #[test]
    fn type_and_range_errors_name_the_key() {
        let text = RunConfig::default()
            .to_config_string()
            .replace("mac.cw_min = 15", "mac.cw_min = banana");
        match parse_config(&text) {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "mac.cw_min"),
            other => panic!("expected invalid-value error, got {other:?}"),
        }

        let text = RunConfig::default()
            .to_config_string()
            .replace("phy.bandwidth_mhz = 80", "phy.bandwidth_mhz = 30");
        match parse_config(&text) {
            Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "phy.bandwidth_mhz"),
            other => panic!("expected invalid-value error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let mut text = RunConfig::default().to_config_string();
        text.push_str("run.warmup_s = 2\n");
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::DuplicateKey("run.warmup_s".into()))
        );
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let mut text = String::from("# scenario defaults\n\n");
        text.push_str(&RunConfig::default().to_config_string());
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn explicit_mcs_table_round_trips() {
        let cfg = RunConfig {
            mcs_table: McsTableSpec::Explicit(vec![(0.5, 0.2), (1.0, 4.0), (2.0, 9.0)]),
            ..RunConfig::default()
        };
        let parsed = parse_config(&cfg.to_config_string()).unwrap();
        assert_eq!(parsed.mcs_table, cfg.mcs_table);
        assert_eq!(parsed.build_mcs_table().unwrap().len(), 3);
    }

    #[test]
    fn config_hash_distinguishes_configs() {
        let a = RunConfig::default();
        let b = RunConfig {
            n_ar: 9,
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), b.hash());
    }
}
