//! Post-receive-filter SINR under zero-forcing with inter-BSS nulls, MCS
//! selection, PHY rates, airtime, and the packet-success decision.
//!
//! ZF is modeled in the power domain: serving K streams and steering V
//! nulls with M antennas leaves a per-stream degrees-of-freedom gain of
//! 10·log10(M − K − V + 1), and each nulled interferer is attenuated by a
//! finite per-device suppression instead of being removed.

use crate::units::{sum_powers, Db, Dbm, Scalar};
use crate::{GainDb, NodeId};
use std::collections::BTreeSet;
use thiserror::Error;

/// OFDM symbol duration, seconds.
pub const T_SYM_S: f64 = 13.6e-6;
/// Hard cap on inter-BSS receive nulls per AP.
pub const MAX_INTER_BSS_NULLS: u32 = 4;
/// Default data-frame preamble duration, seconds.
pub const DEFAULT_PREAMBLE_S: f64 = 40e-6;

/// Per-stream spectral efficiencies of the default 12-entry MCS ladder,
/// bits/s/Hz (BPSK 1/2 up to 1024-QAM 5/6).
pub const DEFAULT_SPECTRAL_EFFICIENCY: [f64; 12] = [
    0.5,
    1.0,
    1.5,
    2.0,
    3.0,
    4.0,
    4.5,
    5.0,
    6.0,
    20.0 / 3.0,
    7.5,
    25.0 / 3.0,
];

#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("infeasible receive config: M={m}, K={k}, V={v}")]
    InfeasibleConfig { m: u32, k: u32, v: u32 },
    #[error("MCS table is empty")]
    EmptyTable,
    #[error("MCS table entry {index}: {what} must increase strictly")]
    NonMonotoneTable { index: u8, what: &'static str },
    #[error("unsupported bandwidth: {0} MHz")]
    UnsupportedBandwidth(u32),
}

/// Number of data subcarriers at a supported channel bandwidth.
pub fn data_subcarriers(bandwidth_mhz: u32) -> Result<u32, PhyError> {
    match bandwidth_mhz {
        20 => Ok(234),
        40 => Ok(468),
        80 => Ok(980),
        160 => Ok(1960),
        other => Err(PhyError::UnsupportedBandwidth(other)),
    }
}

/// One modulation-and-coding entry.
#[derive(Debug, Clone, PartialEq)]
pub struct McsEntry {
    pub index: u8,
    /// Per-stream spectral efficiency, bits/s/Hz.
    pub spectral_efficiency: f64,
    /// Minimum post-filter SINR that decodes, dB.
    pub min_sinr: GainDb,
    /// Per-stream data rate at the configured bandwidth, bits/s.
    pub data_rate_bps: f64,
}

/// MCS table sorted by index, strictly increasing in rate and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    /// Default table: thresholds from the Shannon-gap rule
    /// `min_sinr = 10·log10((2^SE − 1)·Γ)` with gap `gap_db`.
    pub fn shannon_gap(bandwidth_mhz: u32, gap_db: f64) -> Result<Self, PhyError> {
        let gamma = 10f64.powf(gap_db / 10.0);
        let pairs: Vec<(f64, f64)> = DEFAULT_SPECTRAL_EFFICIENCY
            .iter()
            .map(|&se| (se, 10.0 * ((2f64.powf(se) - 1.0) * gamma).log10()))
            .collect();
        Self::from_se_sinr(&pairs, bandwidth_mhz)
    }

    /// Build from explicit (spectral efficiency, min SINR dB) pairs; the
    /// index is the position in the list.
    pub fn from_se_sinr(pairs: &[(f64, f64)], bandwidth_mhz: u32) -> Result<Self, PhyError> {
        if pairs.is_empty() {
            return Err(PhyError::EmptyTable);
        }
        let n_sd = data_subcarriers(bandwidth_mhz)? as f64;
        let mut entries = Vec::with_capacity(pairs.len());
        for (i, &(se, min_sinr)) in pairs.iter().enumerate() {
            let entry = McsEntry {
                index: i as u8,
                spectral_efficiency: se,
                min_sinr: Db::new(min_sinr),
                data_rate_bps: se * n_sd / T_SYM_S,
            };
            if let Some(prev) = entries.last() {
                let prev: &McsEntry = prev;
                if entry.data_rate_bps <= prev.data_rate_bps {
                    return Err(PhyError::NonMonotoneTable {
                        index: entry.index,
                        what: "data rate",
                    });
                }
                if entry.min_sinr.value() <= prev.min_sinr.value() {
                    return Err(PhyError::NonMonotoneTable {
                        index: entry.index,
                        what: "min SINR",
                    });
                }
            }
            entries.push(entry);
        }
        Ok(McsTable { entries })
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn get(&self, index: u8) -> &McsEntry {
        &self.entries[index as usize]
    }

    /// Most robust entry; the fallback when SINR is below every threshold.
    pub fn lowest(&self) -> &McsEntry {
        &self.entries[0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Receive-filter configuration of an AP for one reception.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveConfig {
    /// Antennas M.
    pub antennas: u32,
    /// Spatially multiplexed served streams K.
    pub served_streams: u32,
    /// Inter-BSS nulls V.
    pub nulls: u32,
    /// Devices the nulls point at.
    pub nulled_device_ids: BTreeSet<NodeId>,
}

impl ReceiveConfig {
    pub fn new(antennas: u32, served_streams: u32, nulled: BTreeSet<NodeId>) -> Self {
        ReceiveConfig {
            antennas,
            served_streams,
            nulls: nulled.len() as u32,
            nulled_device_ids: nulled,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.served_streams >= 1
            && self.nulls == self.nulled_device_ids.len() as u32
            && zf_feasible(self.antennas, self.served_streams, self.nulls)
    }
}

/// True iff K streams plus V nulls fit the antenna budget and the null cap.
pub fn zf_feasible(m: u32, k: u32, v: u32) -> bool {
    k + v <= m && v <= MAX_INTER_BSS_NULLS
}

/// Per-stream ZF degrees-of-freedom gain: 10·log10(M − K − V + 1).
pub fn array_gain<F: Scalar>(m: u32, k: u32, v: u32) -> Db<F> {
    debug_assert!(zf_feasible(m, k, v));
    Db::new(F::c(10.0) * F::c((m - k - v + 1) as f64).log10())
}

/// Post-filter SINR: signal plus array gain over noise plus residual
/// interference. Each interferer is `(received power, is_nulled)`; nulled
/// interferers are attenuated by exactly `suppression` dB.
pub fn post_filter_sinr<F: Scalar>(
    signal: Dbm<F>,
    interferers: &[(Dbm<F>, bool)],
    noise: Dbm<F>,
    cfg: &ReceiveConfig,
    suppression: Db<F>,
) -> Result<Db<F>, PhyError> {
    if !zf_feasible(cfg.antennas, cfg.served_streams, cfg.nulls) || cfg.served_streams == 0 {
        return Err(PhyError::InfeasibleConfig {
            m: cfg.antennas,
            k: cfg.served_streams,
            v: cfg.nulls,
        });
    }
    let gain = array_gain::<F>(cfg.antennas, cfg.served_streams, cfg.nulls);
    let mut denominator = vec![noise];
    for &(power, is_nulled) in interferers {
        let residual = if is_nulled { power - suppression } else { power };
        denominator.push(residual);
    }
    let total = sum_powers(&denominator).expect("non-empty by construction");
    Ok((signal + gain) - total)
}

/// Highest-index entry whose threshold the SINR meets; `None` when the
/// SINR is below every threshold (callers fall back to the lowest MCS with
/// expected failure).
pub fn select_mcs(sinr: GainDb, table: &McsTable) -> Option<&McsEntry> {
    table
        .entries
        .iter()
        .rev()
        .find(|entry| entry.min_sinr.value() <= sinr.value())
}

/// Aggregate PHY rate of `streams` spatial streams, bits/s.
pub fn phy_rate(mcs: &McsEntry, streams: u32) -> f64 {
    debug_assert!(streams >= 1);
    mcs.data_rate_bps * streams as f64
}

/// Airtime of a data frame: preamble plus payload bits over the PHY rate.
pub fn tx_duration(bytes: u64, mcs: &McsEntry, streams: u32, preamble_s: f64) -> f64 {
    debug_assert!(bytes >= 1);
    preamble_s + (8 * bytes) as f64 / phy_rate(mcs, streams)
}

/// Step-function PER on the worst-case-window SINR; boundary inclusive.
pub fn decode_success(sinr: GainDb, mcs: &McsEntry) -> bool {
    sinr.value() >= mcs.min_sinr.value()
}
