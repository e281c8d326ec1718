//! The event-driven simulator core: deployment construction, DCF
//! contention with freeze/resume, triggered uplink TXOPs, spatial-reuse
//! windows, CBF coordination, and result collection.
//!
//! One run is single-threaded and a pure function of
//! `(config, mode, master seed)`.

use crate::channel::{received_power, LinkTable, Position3D, AP_HEIGHT_M, STA_HEIGHT_M};
use crate::config::{validate, ConfigError, RunConfig};
use crate::event::{EventClass, EventError, EventQueue, SimTime};
use crate::mac::{
    ack_and_retry, pack_uplink, AckOutcome, ContentionState, FrameRole, PacketPiece, Transmission,
};
use crate::metrics;
use crate::phy::{
    array_gain, decode_success, post_filter_sinr, select_mcs, McsTable, ReceiveConfig,
};
use crate::rng::RngStreams;
use crate::sr::{
    compute_psr_field, configure_cbf_txop, dynamic_coordination, establish_coordination_set,
    evaluate_opportunity, CoordinationSet, CsiCache, PsrField,
};
use crate::traffic::{cbr_arrivals, ftp3_arrivals, Packet, TrafficClass};
use crate::units::{noise_floor, Db, Dbm};
use crate::{GainDb, NodeId, PowerDbm};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// Channel-access regime under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    NoSr,
    Psr,
    Cbf,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::NoSr, Mode::Psr, Mode::Cbf];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::NoSr => "no-sr",
            Mode::Psr => "psr",
            Mode::Cbf => "cbf",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "no-sr" => Ok(Mode::NoSr),
            "psr" => Ok(Mode::Psr),
            "cbf" => Ok(Mode::Cbf),
            other => Err(format!("unknown mode {other:?} (expected no-sr, psr, cbf)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl From<EventError> for SimError {
    fn from(e: EventError) -> Self {
        SimError::Invariant(e.to_string())
    }
}

/// One delivered packet's latency record.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencySample {
    pub sta_id: NodeId,
    pub class: TrafficClass,
    pub arrival_s: f64,
    pub latency_s: f64,
    pub retries: u32,
}

/// Packet bookkeeping per class over the whole run (no warm-up filter).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassCounts {
    pub generated: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub queued: u64,
    /// Delivered/dropped restricted to packets arriving after warm-up.
    pub delivered_measured: u64,
    pub dropped_measured: u64,
}

/// Spatial-reuse pipeline counters for one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SrStats {
    /// TXOPs that advertised a reuse window.
    pub windows: u64,
    /// Opportunity evaluations that produced a usable transmit power.
    pub granted: u64,
    /// Opportunity evaluations denied (allowed power below the floor).
    pub denied: u64,
    /// Reuse data PPDUs transmitted.
    pub attempts: u64,
    /// Reuse exchanges fully acknowledged.
    pub successes: u64,
    /// Protected-STA nominations across CBF TXOPs.
    pub nominated: u64,
}

/// Delivered-bit rate of one STA over the measurement interval.
#[derive(Debug, Clone, PartialEq)]
pub struct StaThroughput {
    pub sta_id: NodeId,
    pub class: TrafficClass,
    pub delivered_bits: u64,
    pub throughput_bps: f64,
}

/// Everything one run produces; bit-identical across repeated runs with
/// equal inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: u64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub samples: Vec<LatencySample>,
    pub sta_throughput: Vec<StaThroughput>,
    pub broadband: ClassCounts,
    pub ar: ClassCounts,
    pub event_count: u64,
    pub txop_count: u64,
    pub coordination_refreshes: u64,
    pub sr: SrStats,
    /// Full transmission trace, populated by [`run_with_trace`].
    pub trace: Option<Vec<Transmission>>,
}

impl RunResult {
    pub fn counts(&self, class: TrafficClass) -> &ClassCounts {
        match class {
            TrafficClass::Broadband => &self.broadband,
            TrafficClass::AugmentedReality => &self.ar,
        }
    }
}

/// Run one simulation.
pub fn run(cfg: &RunConfig, mode: Mode, seed: u64) -> Result<RunResult, SimError> {
    run_opts(cfg, mode, seed, false)
}

/// Run one simulation and keep the full transmission trace.
pub fn run_with_trace(cfg: &RunConfig, mode: Mode, seed: u64) -> Result<RunResult, SimError> {
    run_opts(cfg, mode, seed, true)
}

fn run_opts(cfg: &RunConfig, mode: Mode, seed: u64, trace: bool) -> Result<RunResult, SimError> {
    validate(cfg)?;
    let mut sim = Sim::build(cfg, mode, seed, trace)?;
    sim.run_loop()?;
    Ok(sim.finish())
}

// ---------------------------------------------------------------------------
// Engine internals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum Payload {
    Arrival { sta: usize, pkt: usize },
    ApGrant { ap: usize, gen: u64 },
    ReuseGrant { sta: usize, gen: u64 },
    TxEnd { tx: u64 },
    UplinkStart { txop: u64 },
    DonorAckTimer { txop: u64 },
    WindowEnd { txop: u64 },
    ReuseAckStart { reuse: u64 },
    ReuseFailTimer { reuse: u64 },
}

/// One transmission on the air with receive powers cached per node at the
/// fade state of its start.
#[derive(Debug)]
struct Airtime {
    id: u64,
    node: NodeId,
    start: SimTime,
    end: SimTime,
    role: FrameRole,
    txop: u64,
    rx_dbm: Vec<f64>,
    rx_mw: Vec<f64>,
}

impl Airtime {
    fn active_at(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    fn overlaps(&self, start: SimTime, end: SimTime) -> bool {
        self.start < end && start < self.end
    }
}

#[derive(Debug, Clone)]
struct Contender {
    remaining_slots: u32,
    frozen: bool,
    count_start: SimTime,
    grant_time: SimTime,
    gen: u64,
}

#[derive(Debug, Clone)]
struct ReuseState {
    txop: u64,
    window_end: SimTime,
    allowed: PowerDbm,
    contender: Contender,
}

#[derive(Debug, Clone)]
struct QueuedPacket {
    id: u64,
    class: TrafficClass,
    arrival: SimTime,
    remaining_bytes: u64,
    retries: u32,
}

#[derive(Debug)]
struct StaState {
    node: NodeId,
    ap: usize,
    class: TrafficClass,
    queue: VecDeque<QueuedPacket>,
    /// Scheduled in a pending trigger of its own AP.
    committed: bool,
    /// Mid-air uplink or reuse exchange.
    in_flight: bool,
    reuse: Option<ReuseState>,
}

#[derive(Debug)]
struct ApState {
    node: NodeId,
    contention: ContentionState,
    contender: Option<Contender>,
    in_txop: bool,
    class_rr: usize,
    coordination: Option<CoordinationSet>,
}

#[derive(Debug, Clone)]
struct SchedEntry {
    sta: usize,
    mcs_index: u8,
    pieces: Vec<PacketPiece>,
    trigger_ok: bool,
    rx_tx: Option<u64>,
    decode_ok: Option<bool>,
}

#[derive(Debug)]
struct TxopState {
    donor: usize,
    trig_start: SimTime,
    trig_end: SimTime,
    ul_start: SimTime,
    ul_end: SimTime,
    schedule: Vec<SchedEntry>,
    psr: Option<PsrField>,
    donor_cfg: ReceiveConfig,
    shared_cfg: BTreeMap<usize, ReceiveConfig>,
    shared_ack_power: BTreeMap<usize, PowerDbm>,
    protected: BTreeSet<NodeId>,
    started: u32,
}

#[derive(Debug)]
struct ReuseExchange {
    txop: u64,
    sta: usize,
    ap: usize,
    mcs_index: u8,
    pieces: Vec<PacketPiece>,
    data_tx: u64,
    data_start: SimTime,
    data_end: SimTime,
    cfg: ReceiveConfig,
    ack_tx: Option<u64>,
    window_end: SimTime,
    allowed: PowerDbm,
}

struct Timing {
    slot: SimTime,
    sifs: SimTime,
    aifs: SimTime,
    ack: SimTime,
    trigger: SimTime,
    coordination: SimTime,
    sounding: SimTime,
    txop: SimTime,
    end: SimTime,
    warmup: SimTime,
}

struct Sim<'a> {
    cfg: &'a RunConfig,
    mode: Mode,
    seed: u64,
    tn: Timing,
    queue: EventQueue<Payload>,
    rng: RngStreams,
    links: LinkTable,
    mcs: McsTable,
    noise_dbm: Vec<f64>,
    aps: Vec<ApState>,
    stas: Vec<StaState>,
    arrivals: Vec<Vec<Packet>>,
    medium: Vec<Airtime>,
    next_air_id: u64,
    txops: BTreeMap<u64, TxopState>,
    next_txop_id: u64,
    txop_counter: u64,
    reuses: BTreeMap<u64, ReuseExchange>,
    next_reuse_id: u64,
    csi: CsiCache,
    samples: Vec<LatencySample>,
    delivered_bits: Vec<u64>,
    broadband: ClassCounts,
    ar: ClassCounts,
    coordination_refreshes: u64,
    sr: SrStats,
    trace: Option<Vec<Transmission>>,
    suppression: GainDb,
    cca_mw: f64,
    mcs_margin: GainDb,
}

impl<'a> Sim<'a> {
    fn build(cfg: &'a RunConfig, mode: Mode, seed: u64, trace: bool) -> Result<Self, SimError> {
        let mut rng = RngStreams::new(seed);
        let n_aps = cfg.ap_positions.len();
        let n_stas = (cfg.n_broadband + cfg.n_ar) as usize;

        let mut positions: Vec<Position3D> = cfg
            .ap_positions
            .iter()
            .map(|&(x, y)| Position3D::new(x, y, AP_HEIGHT_M.min(cfg.room.2)))
            .collect();
        for _ in 0..n_stas {
            let x = rng.topology.gen_range(0.0..cfg.room.0);
            let y = rng.topology.gen_range(0.0..cfg.room.1);
            positions.push(Position3D::new(x, y, STA_HEIGHT_M.min(cfg.room.2)));
        }

        let links = LinkTable::build(&positions, cfg.fc_ghz, &mut rng.shadowing);
        let mcs = cfg.build_mcs_table()?;

        let ap_noise = noise_floor(cfg.bandwidth_mhz as f64 * 1e6, Db::new(cfg.nf_ap_db))
            .expect("validated bandwidth")
            .value();
        let sta_noise = noise_floor(cfg.bandwidth_mhz as f64 * 1e6, Db::new(cfg.nf_sta_db))
            .expect("validated bandwidth")
            .value();
        let mut noise_dbm = vec![ap_noise; n_aps];
        noise_dbm.extend(std::iter::repeat(sta_noise).take(n_stas));

        // association: strongest average received signal
        let mut stas = Vec::with_capacity(n_stas);
        for i in 0..n_stas {
            let node = NodeId((n_aps + i) as u32);
            let mut best_ap = 0usize;
            let mut best_rx = f64::NEG_INFINITY;
            for ap in 0..n_aps {
                let rx = links
                    .avg_received_power(Dbm::new(cfg.ap_power_dbm), NodeId(ap as u32), node)
                    .value();
                if rx > best_rx {
                    best_rx = rx;
                    best_ap = ap;
                }
            }
            let class = if i < cfg.n_broadband as usize {
                TrafficClass::Broadband
            } else {
                TrafficClass::AugmentedReality
            };
            stas.push(StaState {
                node,
                ap: best_ap,
                class,
                queue: VecDeque::new(),
                committed: false,
                in_flight: false,
                reuse: None,
            });
        }

        // traffic: per-STA child streams in STA order
        let mut arrivals = Vec::with_capacity(n_stas);
        let mut next_id = 0u64;
        let lambda = cfg.ftp3_lambda();
        for sta in stas.iter() {
            let child_seed = rng.traffic.next_u64();
            let mut child = ChaCha8Rng::seed_from_u64(child_seed);
            let pkts = match sta.class {
                TrafficClass::Broadband => ftp3_arrivals(
                    lambda,
                    cfg.ftp3_size_bytes,
                    cfg.duration_s,
                    sta.node,
                    &mut next_id,
                    &mut child,
                ),
                TrafficClass::AugmentedReality => {
                    let period = cfg.ar_period_ms * 1e-3;
                    let offset = child.gen_range(0.0..period);
                    cbr_arrivals(
                        period,
                        cfg.ar_size_bytes,
                        offset,
                        cfg.duration_s,
                        sta.node,
                        &mut next_id,
                    )
                }
            };
            arrivals.push(pkts);
        }

        let aps = (0..n_aps)
            .map(|i| ApState {
                node: NodeId(i as u32),
                contention: ContentionState::new(cfg.cw_min),
                contender: None,
                in_txop: false,
                class_rr: 0,
                coordination: None,
            })
            .collect();

        let tn = Timing {
            slot: SimTime::from_micros(cfg.slot_us),
            sifs: SimTime::from_micros(cfg.sifs_us),
            aifs: SimTime::from_micros(cfg.aifs_us),
            ack: SimTime::from_micros(cfg.ack_us),
            trigger: SimTime::from_micros(cfg.trigger_us),
            coordination: SimTime::from_micros(cfg.coordination_us),
            sounding: SimTime::from_micros(cfg.sounding_us),
            txop: SimTime::from_micros(cfg.txop_ms * 1e3),
            end: SimTime::from_secs(cfg.duration_s),
            warmup: SimTime::from_secs(cfg.warmup_s),
        };

        let mut sim = Sim {
            cfg,
            mode,
            seed,
            tn,
            queue: EventQueue::new(),
            rng,
            links,
            mcs,
            noise_dbm,
            aps,
            stas,
            arrivals,
            medium: Vec::new(),
            next_air_id: 0,
            txops: BTreeMap::new(),
            next_txop_id: 0,
            txop_counter: 0,
            reuses: BTreeMap::new(),
            next_reuse_id: 0,
            csi: CsiCache::new(),
            samples: Vec::new(),
            delivered_bits: vec![0; n_stas],
            broadband: ClassCounts::default(),
            ar: ClassCounts::default(),
            coordination_refreshes: 0,
            sr: SrStats::default(),
            trace: if trace { Some(Vec::new()) } else { None },
            suppression: Db::new(cfg.suppression_db),
            cca_mw: 10f64.powf(cfg.cca_dbm / 10.0),
            mcs_margin: Db::new(cfg.mcs_margin_db),
        };

        if sim.mode == Mode::Cbf {
            sim.establish_sets(0);
        }

        for sta_idx in 0..sim.stas.len() {
            for pkt_idx in 0..sim.arrivals[sta_idx].len() {
                let t = SimTime::from_secs(sim.arrivals[sta_idx][pkt_idx].arrival_s);
                sim.queue.schedule(
                    t,
                    EventClass::Arrival,
                    Payload::Arrival {
                        sta: sta_idx,
                        pkt: pkt_idx,
                    },
                )?;
            }
            let generated = sim.arrivals[sta_idx].len() as u64;
            match sim.stas[sta_idx].class {
                TrafficClass::Broadband => sim.broadband.generated += generated,
                TrafficClass::AugmentedReality => sim.ar.generated += generated,
            }
        }

        Ok(sim)
    }

    fn establish_sets(&mut self, now_txop: u64) {
        let all_aps: Vec<NodeId> = self.aps.iter().map(|a| a.node).collect();
        let pairs: Vec<(NodeId, NodeId)> = self
            .stas
            .iter()
            .map(|s| (s.node, NodeId(s.ap as u32)))
            .collect();
        let sta_power = Dbm::new(self.cfg.sta_power_dbm);
        for ap_idx in 0..self.aps.len() {
            let links = &self.links;
            let set = establish_coordination_set(
                self.aps[ap_idx].node,
                &all_aps,
                &pairs,
                |sta, ap| links.avg_received_power(sta_power, sta, ap),
                Dbm::new(self.cfg.coordination_threshold_dbm),
                self.cfg.refresh_txops as u64,
                now_txop,
            );
            self.aps[ap_idx].coordination = set;
        }
        self.coordination_refreshes += 1;
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        while let Some(t) = self.queue.peek_time() {
            if t > self.tn.end {
                break;
            }
            let event = self.queue.dispatch_next().expect("peeked");
            self.handle(event.time, event.payload)?;
        }
        Ok(())
    }

    fn handle(&mut self, now: SimTime, payload: Payload) -> Result<(), SimError> {
        match payload {
            Payload::Arrival { sta, pkt } => self.on_arrival(now, sta, pkt),
            Payload::ApGrant { ap, gen } => self.on_ap_grant(now, ap, gen),
            Payload::ReuseGrant { sta, gen } => self.on_reuse_grant(now, sta, gen),
            Payload::TxEnd { tx } => self.on_tx_end(now, tx),
            Payload::UplinkStart { txop } => self.on_uplink_start(now, txop),
            Payload::DonorAckTimer { txop } => self.on_donor_ack_timer(now, txop),
            Payload::WindowEnd { txop } => {
                self.on_window_end(txop);
                Ok(())
            }
            Payload::ReuseAckStart { reuse } => self.on_reuse_ack_start(now, reuse),
            Payload::ReuseFailTimer { reuse } => self.on_reuse_fail(now, reuse),
        }
    }

    // -- medium ------------------------------------------------------------

    fn begin_tx(
        &mut self,
        node: NodeId,
        power_dbm: f64,
        start: SimTime,
        end: SimTime,
        role: FrameRole,
        txop: u64,
    ) -> Result<u64, SimError> {
        let n = self.noise_dbm.len();
        let mut rx_dbm = vec![f64::NEG_INFINITY; n];
        let mut rx_mw = vec![0.0; n];
        for j in 0..n {
            let other = NodeId(j as u32);
            if other == node {
                continue;
            }
            let rx = received_power(Dbm::new(power_dbm), self.links.link(node, other)).value();
            rx_dbm[j] = rx;
            rx_mw[j] = 10f64.powf(rx / 10.0);
        }
        let id = self.next_air_id;
        self.next_air_id += 1;
        self.medium.push(Airtime {
            id,
            node,
            start,
            end,
            role,
            txop,
            rx_dbm,
            rx_mw,
        });
        if let Some(trace) = &mut self.trace {
            trace.push(Transmission {
                id,
                tx_node: node,
                power: Dbm::new(power_dbm),
                start,
                end,
                role,
                txop_id: txop,
            });
        }
        self.queue
            .schedule(end, EventClass::FrameEnd, Payload::TxEnd { tx: id })?;
        Ok(id)
    }

    fn air(&self, id: u64) -> &Airtime {
        self.medium
            .iter()
            .find(|a| a.id == id)
            .expect("airtime present until pruned")
    }

    /// Aggregate CCA at a node, linear domain, with a role/exchange filter.
    fn cca_busy_at<F>(&self, node: NodeId, now: SimTime, include: F) -> bool
    where
        F: Fn(&Airtime) -> bool,
    {
        let mut total = 0.0;
        for tx in &self.medium {
            if tx.active_at(now) && tx.node != node && include(tx) {
                total += tx.rx_mw[node.index()];
            }
        }
        total >= self.cca_mw
    }

    /// Worst-case post-filter SINR of a reception over its window, probing
    /// every instant the interferer set changes.
    fn worst_case_sinr<F>(
        &self,
        rx_node: NodeId,
        signal_dbm: f64,
        start: SimTime,
        end: SimTime,
        cfg: &ReceiveConfig,
        exclude: F,
    ) -> GainDb
    where
        F: Fn(&Airtime) -> bool,
    {
        let overlapping: Vec<&Airtime> = self
            .medium
            .iter()
            .filter(|tx| tx.overlaps(start, end) && tx.node != rx_node && !exclude(tx))
            .collect();
        let mut points: Vec<SimTime> = vec![start];
        for tx in &overlapping {
            if tx.start > start && tx.start < end {
                points.push(tx.start);
            }
        }
        points.sort_unstable();
        points.dedup();

        let noise = Dbm::new(self.noise_dbm[rx_node.index()]);
        let signal = Dbm::new(signal_dbm);
        let mut worst = f64::INFINITY;
        for &p in &points {
            let interferers: Vec<(PowerDbm, bool)> = overlapping
                .iter()
                .filter(|tx| tx.active_at(p))
                .map(|tx| {
                    (
                        Dbm::new(tx.rx_dbm[rx_node.index()]),
                        cfg.nulled_device_ids.contains(&tx.node),
                    )
                })
                .collect();
            let sinr = post_filter_sinr(signal, &interferers, noise, cfg, self.suppression)
                .expect("feasible by construction");
            worst = worst.min(sinr.value());
        }
        Db::new(worst)
    }

    /// True when `node` transmitted at any point during the window
    /// (half-duplex: it cannot also receive).
    fn transmitted_during(&self, node: NodeId, start: SimTime, end: SimTime) -> bool {
        self.medium
            .iter()
            .any(|tx| tx.node == node && tx.overlaps(start, end))
    }

    // -- contention machinery ------------------------------------------------

    fn ap_has_data(&self, ap: usize) -> bool {
        self.stas
            .iter()
            .any(|s| s.ap == ap && !s.queue.is_empty())
    }

    fn schedulable_stas(&self, ap: usize, class: TrafficClass) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.stas.len())
            .filter(|&i| {
                let s = &self.stas[i];
                s.ap == ap && s.class == class && !s.queue.is_empty() && !s.committed && !s.in_flight
            })
            .collect();
        // longest queue first, node id breaks ties
        out.sort_by_key(|&i| {
            let bytes: u64 = self.stas[i].queue.iter().map(|p| p.remaining_bytes).sum();
            (std::cmp::Reverse(bytes), self.stas[i].node)
        });
        out
    }

    fn arm_ap(&mut self, ap_idx: usize, now: SimTime) -> Result<(), SimError> {
        debug_assert!(!self.aps[ap_idx].in_txop);
        let node = self.aps[ap_idx].node;
        self.aps[ap_idx].contention.draw_backoff(&mut self.rng.backoff);
        let remaining = self.aps[ap_idx].contention.backoff_slots;
        let busy = self.cca_busy_at(node, now, |_| true);
        let gen = self.aps[ap_idx]
            .contender
            .as_ref()
            .map(|c| c.gen + 1)
            .unwrap_or(0);
        let mut contender = Contender {
            remaining_slots: remaining,
            frozen: busy,
            count_start: now,
            grant_time: now,
            gen,
        };
        if !busy {
            let grant = now + self.tn.aifs + slots(self.tn.slot, remaining);
            contender.grant_time = grant;
            self.queue.schedule(
                grant,
                EventClass::FrameStart,
                Payload::ApGrant { ap: ap_idx, gen },
            )?;
        }
        self.aps[ap_idx].contender = Some(contender);
        Ok(())
    }

    fn arm_reuse(
        &mut self,
        sta_idx: usize,
        now: SimTime,
        count_from: SimTime,
        txop: u64,
        window_end: SimTime,
        allowed: PowerDbm,
    ) -> Result<(), SimError> {
        let node = self.stas[sta_idx].node;
        let remaining = self.rng.backoff.gen_range(0..=self.cfg.reuse_cw);
        let busy = self.reuse_cca(node, now.max(count_from), txop);
        let gen = self.stas[sta_idx]
            .reuse
            .as_ref()
            .map(|r| r.contender.gen + 1)
            .unwrap_or(0);
        let start = now.max(count_from);
        let mut contender = Contender {
            remaining_slots: remaining,
            frozen: busy,
            count_start: start,
            grant_time: start,
            gen,
        };
        if !busy {
            let grant = start + self.tn.aifs + slots(self.tn.slot, remaining);
            contender.grant_time = grant;
            self.queue.schedule(
                grant,
                EventClass::FrameStart,
                Payload::ReuseGrant { sta: sta_idx, gen },
            )?;
        }
        self.stas[sta_idx].reuse = Some(ReuseState {
            txop,
            window_end,
            allowed,
            contender,
        });
        Ok(())
    }

    /// CCA for a reuse contender: the donor exchange it is riding on is
    /// excluded; everything else counts.
    fn reuse_cca(&self, node: NodeId, now: SimTime, txop: u64) -> bool {
        self.cca_busy_at(node, now, |tx| {
            !(tx.txop == txop
                && matches!(
                    tx.role,
                    FrameRole::Coordination
                        | FrameRole::Sounding
                        | FrameRole::Trigger
                        | FrameRole::TriggeredUplink
                        | FrameRole::DonorAck
                ))
        })
    }

    /// Re-evaluate every contender's carrier sense after a medium change.
    fn update_contenders(&mut self, now: SimTime) -> Result<(), SimError> {
        // APs
        for ap_idx in 0..self.aps.len() {
            if self.aps[ap_idx].in_txop || self.aps[ap_idx].contender.is_none() {
                continue;
            }
            let node = self.aps[ap_idx].node;
            let busy = self.cca_busy_at(node, now, |_| true);
            let (frozen, grant_time, count_start, remaining, gen) = {
                let c = self.aps[ap_idx].contender.as_ref().unwrap();
                (
                    c.frozen,
                    c.grant_time,
                    c.count_start,
                    c.remaining_slots,
                    c.gen,
                )
            };
            if !frozen && busy {
                // a grant firing this very instant still goes through
                if grant_time == now {
                    continue;
                }
                let consumed = consumed_slots(count_start, now, self.tn.aifs, self.tn.slot);
                let c = self.aps[ap_idx].contender.as_mut().unwrap();
                c.remaining_slots = c.remaining_slots.saturating_sub(consumed);
                c.frozen = true;
                c.gen += 1;
            } else if frozen && !busy {
                let gen = gen + 1;
                let grant = now + self.tn.aifs + slots(self.tn.slot, remaining);
                {
                    let c = self.aps[ap_idx].contender.as_mut().unwrap();
                    c.frozen = false;
                    c.count_start = now;
                    c.grant_time = grant;
                    c.gen = gen;
                }
                self.queue.schedule(
                    grant,
                    EventClass::FrameStart,
                    Payload::ApGrant { ap: ap_idx, gen },
                )?;
            }
        }

        // reuse contenders
        for sta_idx in 0..self.stas.len() {
            let Some(rs) = self.stas[sta_idx].reuse.clone() else {
                continue;
            };
            if now >= rs.window_end {
                continue; // window-end event clears it
            }
            let node = self.stas[sta_idx].node;
            let busy = self.reuse_cca(node, now, rs.txop);
            let c = &rs.contender;
            if !c.frozen && busy {
                if c.grant_time == now {
                    continue;
                }
                let consumed = consumed_slots(c.count_start, now, self.tn.aifs, self.tn.slot);
                let state = self.stas[sta_idx].reuse.as_mut().unwrap();
                state.contender.remaining_slots =
                    state.contender.remaining_slots.saturating_sub(consumed);
                state.contender.frozen = true;
                state.contender.gen += 1;
            } else if c.frozen && !busy {
                let gen = c.gen + 1;
                let grant = now + self.tn.aifs + slots(self.tn.slot, c.remaining_slots);
                {
                    let state = self.stas[sta_idx].reuse.as_mut().unwrap();
                    state.contender.frozen = false;
                    state.contender.count_start = now;
                    state.contender.grant_time = grant;
                    state.contender.gen = gen;
                }
                self.queue.schedule(
                    grant,
                    EventClass::FrameStart,
                    Payload::ReuseGrant { sta: sta_idx, gen },
                )?;
            }
        }
        Ok(())
    }

    // -- event handlers ------------------------------------------------------

    fn on_arrival(&mut self, now: SimTime, sta_idx: usize, pkt_idx: usize) -> Result<(), SimError> {
        let pkt = &self.arrivals[sta_idx][pkt_idx];
        let qp = QueuedPacket {
            id: pkt.id,
            class: pkt.class,
            arrival: now,
            remaining_bytes: pkt.size_bytes,
            retries: 0,
        };
        self.stas[sta_idx].queue.push_back(qp);
        let ap = self.stas[sta_idx].ap;
        if !self.aps[ap].in_txop && self.aps[ap].contender.is_none() {
            self.arm_ap(ap, now)?;
        }
        Ok(())
    }

    fn on_ap_grant(&mut self, now: SimTime, ap_idx: usize, gen: u64) -> Result<(), SimError> {
        {
            let ap = &self.aps[ap_idx];
            if ap.in_txop {
                return Ok(());
            }
            match &ap.contender {
                Some(c) if c.gen == gen && !c.frozen => {}
                _ => return Ok(()),
            }
        }
        self.aps[ap_idx].contender = None;
        self.begin_txop(now, ap_idx)
    }

    /// Pick the next traffic class round-robin over non-empty classes.
    fn pick_class(&mut self, ap_idx: usize) -> Option<TrafficClass> {
        const CLASSES: [TrafficClass; 2] = [TrafficClass::Broadband, TrafficClass::AugmentedReality];
        for i in 0..2 {
            let idx = (self.aps[ap_idx].class_rr + i) % 2;
            let class = CLASSES[idx];
            if !self.schedulable_stas(ap_idx, class).is_empty() {
                self.aps[ap_idx].class_rr = (idx + 1) % 2;
                return Some(class);
            }
        }
        None
    }

    fn begin_txop(&mut self, now: SimTime, ap_idx: usize) -> Result<(), SimError> {
        let Some(class) = self.pick_class(ap_idx) else {
            // nothing schedulable: release the TXOP
            if self.ap_has_data(ap_idx) {
                self.arm_ap(ap_idx, now)?;
            }
            return Ok(());
        };

        self.txop_counter += 1;
        let txop_counter = self.txop_counter;
        self.links.redraw_fades(&mut self.rng.fading);

        // semi-static coordination set refresh
        if self.mode == Mode::Cbf
            && self.aps[ap_idx]
                .coordination
                .as_ref()
                .is_some_and(|set| set.due_for_refresh(txop_counter))
        {
            self.establish_sets(txop_counter);
        }

        let donor_node = self.aps[ap_idx].node;
        let antennas = self.cfg.ap_antennas;
        let donor_noise = Dbm::new(self.noise_dbm[donor_node.index()]);
        let sta_power = Dbm::new(self.cfg.sta_power_dbm);

        // CBF phase 1/2: nominate protected OBSS STAs (needs a live set,
        // a positive suppression, and queued AR traffic across the boundary)
        let mut protected_ranked: Vec<NodeId> = Vec::new();
        if self.mode == Mode::Cbf && self.cfg.suppression_db > 0.0 {
            if let Some(set) = self.aps[ap_idx].coordination.clone() {
                let candidates: Vec<(NodeId, PowerDbm)> = (0..self.stas.len())
                    .filter(|&i| {
                        let s = &self.stas[i];
                        s.ap != ap_idx
                            && s.class == TrafficClass::AugmentedReality
                            && !s.queue.is_empty()
                            && !s.committed
                            && !s.in_flight
                    })
                    .map(|i| {
                        let node = self.stas[i].node;
                        (
                            node,
                            self.links.avg_received_power(sta_power, node, donor_node),
                        )
                    })
                    .collect();
                protected_ranked = dynamic_coordination(&set, &candidates, self.cfg.max_nulls);
                self.sr.nominated += protected_ranked.len() as u64;
            }
        }

        let nulls = protected_ranked.len() as u32;
        let stream_budget = (antennas - nulls).max(1) as usize;
        let candidates = self.schedulable_stas(ap_idx, class);
        let scheduled: Vec<usize> = candidates.into_iter().take(stream_budget).collect();
        if scheduled.is_empty() {
            if self.ap_has_data(ap_idx) {
                self.arm_ap(ap_idx, now)?;
            }
            return Ok(());
        }
        let k = scheduled.len() as u32;

        // CBF overheads: dynamic coordination always, sounding when stale
        let cbf_active = !protected_ranked.is_empty();
        let coord_dur = if cbf_active {
            self.tn.coordination
        } else {
            SimTime::ZERO
        };
        let sound_dur = if cbf_active {
            let mut pairs: Vec<(NodeId, NodeId)> = protected_ranked
                .iter()
                .map(|&p| (donor_node, p))
                .collect();
            for &s in &scheduled {
                let sta = &self.stas[s];
                // every shared AP serving a protected STA sounds the donor's uplinks
                for other_ap in 0..self.aps.len() {
                    if other_ap != ap_idx {
                        pairs.push((NodeId(other_ap as u32), sta.node));
                    }
                }
            }
            let links = &self.links;
            let charged = self.csi.sequential_sounding(
                &pairs,
                now.as_secs(),
                self.cfg.csi_validity_ms * 1e-3,
                |ap, sta| links.avg_received_power(sta_power, sta, ap),
            );
            if charged {
                self.tn.sounding
            } else {
                SimTime::ZERO
            }
        } else {
            SimTime::ZERO
        };

        let trig_start = now + coord_dur + sound_dur;
        let trig_end = trig_start + self.tn.trigger;
        let ul_start = trig_end + self.tn.sifs;
        let pre_ul = (ul_start - now) + self.tn.sifs + self.tn.ack;
        if self.tn.txop <= pre_ul {
            // overheads ate the whole budget; release
            if self.ap_has_data(ap_idx) {
                self.arm_ap(ap_idx, now)?;
            }
            return Ok(());
        }
        let ul_window_max = (self.tn.txop - pre_ul).as_secs();

        // receive configs and per-STA MCS under the planned (K, V)
        let donor_scheduled_nodes: Vec<NodeId> =
            scheduled.iter().map(|&i| self.stas[i].node).collect();
        let gain: GainDb = array_gain(antennas, k, nulls);

        let mut entries = Vec::with_capacity(scheduled.len());
        let mut field_inputs = Vec::with_capacity(scheduled.len());
        let mut window_need = 0.0f64;
        for &sta_idx in &scheduled {
            let sta_node = self.stas[sta_idx].node;
            let rx = received_power(sta_power, self.links.link(sta_node, donor_node));
            let predicted = (rx + gain - donor_noise) - self.mcs_margin;
            let mcs = select_mcs(Db::new(predicted.value()), &self.mcs)
                .unwrap_or_else(|| self.mcs.lowest());
            let queue_snapshot: Vec<(u64, u64)> = self.stas[sta_idx]
                .queue
                .iter()
                .map(|p| (p.id, p.remaining_bytes))
                .collect();
            let packed = pack_uplink(
                &queue_snapshot,
                mcs.data_rate_bps,
                ul_window_max,
                self.cfg.preamble_us * 1e-6,
            );
            let Some((pieces, need)) = packed else {
                continue;
            };
            window_need = window_need.max(need);
            field_inputs.push((rx, mcs.min_sinr));
            entries.push(SchedEntry {
                sta: sta_idx,
                mcs_index: mcs.index,
                pieces,
                trigger_ok: false,
                rx_tx: None,
                decode_ok: None,
            });
        }
        if entries.is_empty() {
            if self.ap_has_data(ap_idx) {
                self.arm_ap(ap_idx, now)?;
            }
            return Ok(());
        }

        let ul_window = SimTime::from_secs(window_need);
        let ul_end = ul_start + ul_window;
        debug_assert!(ul_end + self.tn.sifs + self.tn.ack <= now + self.tn.txop + SimTime(1));

        // PSR field and CBF plan
        let (psr, donor_cfg, shared_cfg, protected_set) = match self.mode {
            Mode::NoSr => (
                None,
                ReceiveConfig::new(antennas, k, BTreeSet::new()),
                BTreeMap::new(),
                BTreeSet::new(),
            ),
            Mode::Psr | Mode::Cbf => {
                let base = compute_psr_field(
                    Dbm::new(self.cfg.ap_power_dbm),
                    &field_inputs,
                    gain,
                    Db::new(self.cfg.safety_margin_db),
                    donor_noise,
                );
                if self.mode == Mode::Cbf && cbf_active {
                    // rank donor uplinks by average strength at the shared APs
                    let plan = configure_cbf_txop(
                        antennas,
                        &donor_scheduled_nodes,
                        &protected_ranked,
                        &base,
                        self.suppression,
                        self.cfg.max_nulls,
                    );
                    let mut shared = BTreeMap::new();
                    for other_ap in 0..self.aps.len() {
                        if other_ap != ap_idx {
                            shared.insert(other_ap, plan.shared_cfg.clone());
                        }
                    }
                    (
                        Some(plan.psr_field),
                        plan.donor_cfg,
                        shared,
                        plan.protected.iter().copied().collect(),
                    )
                } else {
                    (
                        Some(base),
                        ReceiveConfig::new(antennas, k, BTreeSet::new()),
                        BTreeMap::new(),
                        BTreeSet::new(),
                    )
                }
            }
        };

        // the shared APs' ACKs inside the window obey the unrelaxed cap
        let mut shared_ack_power = BTreeMap::new();
        if let Some(field) = &psr {
            for other_ap in 0..self.aps.len() {
                if other_ap == ap_idx {
                    continue;
                }
                let other_node = self.aps[other_ap].node;
                let rpl = received_power(
                    Dbm::new(self.cfg.ap_power_dbm),
                    self.links.link(donor_node, other_node),
                );
                let allowed = (field.donor_tx_power + (field.acceptable_interference - rpl))
                    .value()
                    .min(self.cfg.ap_power_dbm);
                shared_ack_power.insert(other_ap, Dbm::new(allowed));
            }
        }

        // commit
        let txop_id = self.next_txop_id;
        self.next_txop_id += 1;
        for entry in &entries {
            self.stas[entry.sta].committed = true;
        }
        let donor_power = self.cfg.ap_power_dbm;
        if coord_dur > SimTime::ZERO {
            self.begin_tx(
                donor_node,
                donor_power,
                now,
                now + coord_dur,
                FrameRole::Coordination,
                txop_id,
            )?;
        }
        if sound_dur > SimTime::ZERO {
            self.begin_tx(
                donor_node,
                donor_power,
                now + coord_dur,
                trig_start,
                FrameRole::Sounding,
                txop_id,
            )?;
        }
        self.begin_tx(
            donor_node,
            donor_power,
            trig_start,
            trig_end,
            FrameRole::Trigger,
            txop_id,
        )?;
        self.queue.schedule(
            ul_start,
            EventClass::FrameStart,
            Payload::UplinkStart { txop: txop_id },
        )?;
        self.queue.schedule(
            ul_end + self.tn.sifs,
            EventClass::FrameStart,
            Payload::DonorAckTimer { txop: txop_id },
        )?;
        if psr.is_some() {
            self.queue.schedule(
                ul_end,
                EventClass::Timer,
                Payload::WindowEnd { txop: txop_id },
            )?;
        }

        self.txops.insert(
            txop_id,
            TxopState {
                donor: ap_idx,
                trig_start,
                trig_end,
                ul_start,
                ul_end,
                schedule: entries,
                psr,
                donor_cfg,
                shared_cfg,
                shared_ack_power,
                protected: protected_set,
                started: 0,
            },
        );
        self.aps[ap_idx].in_txop = true;
        self.medium.retain(|tx| tx.end + self.tn.txop + self.tn.txop >= now);
        self.update_contenders(now)
    }

    fn on_tx_end(&mut self, now: SimTime, tx_id: u64) -> Result<(), SimError> {
        let (role, txop) = {
            let tx = self.air(tx_id);
            (tx.role, tx.txop)
        };
        match role {
            FrameRole::Trigger => self.on_trigger_end(now, tx_id, txop)?,
            FrameRole::TriggeredUplink => self.on_uplink_end(now, tx_id, txop),
            FrameRole::DonorAck => self.on_donor_ack_end(now, txop)?,
            FrameRole::ReuseData => self.on_reuse_data_end(now, tx_id)?,
            FrameRole::ReuseAck => self.on_reuse_ack_end(now, tx_id)?,
            FrameRole::Coordination | FrameRole::Sounding => {}
        }
        self.update_contenders(now)
    }

    fn on_trigger_end(&mut self, now: SimTime, tx_id: u64, txop_id: u64) -> Result<(), SimError> {
        let (trig_start, trig_end, donor_idx, ul_start, ul_end) = {
            let t = &self.txops[&txop_id];
            (t.trig_start, t.trig_end, t.donor, t.ul_start, t.ul_end)
        };
        debug_assert!(now == trig_end);
        let robust = self.mcs.lowest().min_sinr;

        // scheduled STAs decode the trigger
        let sched_stas: Vec<usize> = self.txops[&txop_id]
            .schedule
            .iter()
            .map(|e| e.sta)
            .collect();
        for (pos, &sta_idx) in sched_stas.iter().enumerate() {
            let node = self.stas[sta_idx].node;
            let rx = self.air(tx_id).rx_dbm[node.index()];
            let ok = if rx < self.cfg.cca_dbm {
                false
            } else {
                let cfg = ReceiveConfig::new(1, 1, BTreeSet::new());
                let sinr = self.worst_case_sinr(node, rx, trig_start, trig_end, &cfg, |tx| {
                    tx.id == tx_id
                });
                sinr.value() >= robust.value()
            };
            self.txops.get_mut(&txop_id).unwrap().schedule[pos].trigger_ok = ok;
        }

        // OBSS devices evaluate the advertised opportunity
        let Some(field) = self.txops[&txop_id].psr.clone() else {
            return Ok(());
        };
        self.sr.windows += 1;
        let donor = donor_idx;
        for sta_idx in 0..self.stas.len() {
            let sta = &self.stas[sta_idx];
            if sta.ap == donor
                || sta.class != TrafficClass::AugmentedReality
                || sta.queue.is_empty()
                || sta.committed
                || sta.in_flight
                || sta.reuse.is_some()
            {
                continue;
            }
            let node = sta.node;
            let rpl = self.air(tx_id).rx_dbm[node.index()];
            if rpl < self.cfg.cca_dbm {
                continue;
            }
            let cfg = ReceiveConfig::new(1, 1, BTreeSet::new());
            let sinr =
                self.worst_case_sinr(node, rpl, trig_start, trig_end, &cfg, |tx| tx.id == tx_id);
            if sinr.value() < robust.value() {
                continue;
            }
            let allowed = evaluate_opportunity(
                node,
                Dbm::new(rpl),
                &field,
                Dbm::new(self.cfg.sta_power_dbm),
                Dbm::new(self.cfg.min_usable_dbm),
            );
            if let Some(power) = allowed {
                self.sr.granted += 1;
                self.arm_reuse(sta_idx, now, ul_start, txop_id, ul_end, power)?;
            } else {
                self.sr.denied += 1;
            }
        }
        Ok(())
    }

    fn on_uplink_start(&mut self, now: SimTime, txop_id: u64) -> Result<(), SimError> {
        let (donor_idx, ul_start, ul_end) = {
            let t = &self.txops[&txop_id];
            (t.donor, t.ul_start, t.ul_end)
        };
        debug_assert!(now == ul_start);
        let entries: Vec<(usize, usize, bool)> = self.txops[&txop_id]
            .schedule
            .iter()
            .enumerate()
            .map(|(pos, e)| (pos, e.sta, e.trigger_ok))
            .collect();
        let mut started = 0;
        for (pos, sta_idx, trigger_ok) in entries {
            if !trigger_ok {
                continue;
            }
            let node = self.stas[sta_idx].node;
            let tx = self.begin_tx(
                node,
                self.cfg.sta_power_dbm,
                ul_start,
                ul_end,
                FrameRole::TriggeredUplink,
                txop_id,
            )?;
            self.stas[sta_idx].in_flight = true;
            self.txops.get_mut(&txop_id).unwrap().schedule[pos].rx_tx = Some(tx);
            started += 1;
        }
        self.txops.get_mut(&txop_id).unwrap().started = started;
        let _ = donor_idx;
        self.update_contenders(now)
    }

    fn on_uplink_end(&mut self, now: SimTime, tx_id: u64, txop_id: u64) {
        let (donor_idx, ul_start, ul_end, donor_cfg, protected) = {
            let t = &self.txops[&txop_id];
            (
                t.donor,
                t.ul_start,
                t.ul_end,
                t.donor_cfg.clone(),
                t.protected.clone(),
            )
        };
        debug_assert!(now == ul_end);
        let donor_node = self.aps[donor_idx].node;
        let pos = self.txops[&txop_id]
            .schedule
            .iter()
            .position(|e| e.rx_tx == Some(tx_id))
            .expect("reception belongs to its txop");
        let mcs_index = self.txops[&txop_id].schedule[pos].mcs_index;
        let signal = self.air(tx_id).rx_dbm[donor_node.index()];

        // co-scheduled MU streams are ZF-separated, not interference
        let ok = if self.transmitted_during(donor_node, ul_start, ul_end) {
            false
        } else {
            let sinr = self.worst_case_sinr(donor_node, signal, ul_start, ul_end, &donor_cfg, |tx| {
                tx.txop == txop_id && tx.role == FrameRole::TriggeredUplink
            });
            decode_success(sinr, self.mcs.get(mcs_index))
        };
        let _ = protected;
        self.txops.get_mut(&txop_id).unwrap().schedule[pos].decode_ok = Some(ok);
    }

    fn on_donor_ack_timer(&mut self, now: SimTime, txop_id: u64) -> Result<(), SimError> {
        let (donor_idx, started) = {
            let t = &self.txops[&txop_id];
            (t.donor, t.started)
        };
        if started == 0 {
            // the trigger drew no uplink at all: a failed exchange
            self.aps[donor_idx].contention.on_failure(self.cfg.cw_max);
            self.close_txop(now, txop_id)?;
            return Ok(());
        }
        let donor_node = self.aps[donor_idx].node;
        self.begin_tx(
            donor_node,
            self.cfg.ap_power_dbm,
            now,
            now + self.tn.ack,
            FrameRole::DonorAck,
            txop_id,
        )?;
        self.update_contenders(now)
    }

    fn on_donor_ack_end(&mut self, now: SimTime, txop_id: u64) -> Result<(), SimError> {
        let donor_idx = self.txops[&txop_id].donor;
        let entries: Vec<SchedEntry> = self.txops[&txop_id].schedule.clone();
        let mut any_success = false;
        for entry in &entries {
            if entry.rx_tx.is_none() {
                // never transmitted (trigger not decoded): no retry charged
                continue;
            }
            let ok = entry.decode_ok.unwrap_or(false);
            if ok {
                any_success = true;
            }
            self.apply_pieces(now, entry.sta, &entry.pieces, ok);
            self.stas[entry.sta].in_flight = false;
        }
        for entry in &entries {
            self.stas[entry.sta].committed = false;
        }
        if any_success {
            self.aps[donor_idx].contention.on_success(self.cfg.cw_min);
        } else {
            self.aps[donor_idx].contention.on_failure(self.cfg.cw_max);
        }
        self.close_txop(now, txop_id)
    }

    fn close_txop(&mut self, now: SimTime, txop_id: u64) -> Result<(), SimError> {
        let donor_idx = self.txops[&txop_id].donor;
        // clear any commitments left by never-started uplinks
        let stas: Vec<usize> = self.txops[&txop_id].schedule.iter().map(|e| e.sta).collect();
        for sta_idx in stas {
            self.stas[sta_idx].committed = false;
            self.stas[sta_idx].in_flight = false;
        }
        self.txops.remove(&txop_id);
        self.aps[donor_idx].in_txop = false;
        if self.ap_has_data(donor_idx) {
            self.arm_ap(donor_idx, now)?;
        }
        self.update_contenders(now)
    }

    fn on_window_end(&mut self, txop_id: u64) {
        for sta in &mut self.stas {
            if sta.reuse.as_ref().is_some_and(|r| r.txop == txop_id) {
                sta.reuse = None;
            }
        }
    }

    fn on_reuse_grant(&mut self, now: SimTime, sta_idx: usize, gen: u64) -> Result<(), SimError> {
        let Some(rs) = self.stas[sta_idx].reuse.clone() else {
            return Ok(());
        };
        if rs.contender.gen != gen || rs.contender.frozen {
            return Ok(());
        }
        self.stas[sta_idx].reuse = None;
        if self.stas[sta_idx].committed || self.stas[sta_idx].in_flight {
            return Ok(());
        }
        if now >= rs.window_end {
            return Ok(());
        }
        // an exchange must finish, ACK included, before the window closes
        let available = rs.window_end - now;
        if available <= self.tn.sifs + self.tn.ack {
            return Ok(());
        }
        let data_window = (available - self.tn.sifs - self.tn.ack).as_secs();

        let ap_idx = self.stas[sta_idx].ap;
        let ap_node = self.aps[ap_idx].node;
        let sta_node = self.stas[sta_idx].node;
        // the coordinated receive filter serves protected STAs only;
        // anything else is received on a plain single-stream port
        let protected = self.txops[&rs.txop].protected.contains(&sta_node);
        let cfg = if protected {
            self.txops[&rs.txop]
                .shared_cfg
                .get(&ap_idx)
                .cloned()
                .unwrap_or_else(|| ReceiveConfig::new(self.cfg.ap_antennas, 1, BTreeSet::new()))
        } else {
            ReceiveConfig::new(self.cfg.ap_antennas, 1, BTreeSet::new())
        };

        // protected devices get an informed MCS: the serving AP knows the
        // donor's schedule from sounding and its own nulls; everyone else
        // cannot see the interference and falls back to the robust MCS
        let (mcs_index, data_rate_bps) = if protected {
            let rx = received_power(rs.allowed, self.links.link(sta_node, ap_node));
            let sta_power = Dbm::new(self.cfg.sta_power_dbm);
            let interferers: Vec<(PowerDbm, bool)> = self.txops[&rs.txop]
                .schedule
                .iter()
                .map(|e| {
                    let n = self.stas[e.sta].node;
                    (
                        self.links.avg_received_power(sta_power, n, ap_node),
                        cfg.nulled_device_ids.contains(&n),
                    )
                })
                .collect();
            let noise = Dbm::new(self.noise_dbm[ap_node.index()]);
            let predicted = post_filter_sinr(rx, &interferers, noise, &cfg, self.suppression)
                .expect("feasible by construction");
            let mcs = select_mcs(Db::new((predicted - self.mcs_margin).value()), &self.mcs)
                .unwrap_or_else(|| self.mcs.lowest());
            (mcs.index, mcs.data_rate_bps)
        } else {
            let mcs = self.mcs.lowest();
            (mcs.index, mcs.data_rate_bps)
        };

        let queue_snapshot: Vec<(u64, u64)> = self.stas[sta_idx]
            .queue
            .iter()
            .map(|p| (p.id, p.remaining_bytes))
            .collect();
        let Some((pieces, dur)) = pack_uplink(
            &queue_snapshot,
            data_rate_bps,
            data_window,
            self.cfg.preamble_us * 1e-6,
        ) else {
            return Ok(());
        };

        let data_end = now + SimTime::from_secs(dur);
        let tx = self.begin_tx(
            sta_node,
            rs.allowed.value(),
            now,
            data_end,
            FrameRole::ReuseData,
            rs.txop,
        )?;
        self.stas[sta_idx].in_flight = true;
        self.sr.attempts += 1;
        let reuse_id = self.next_reuse_id;
        self.next_reuse_id += 1;
        self.reuses.insert(
            reuse_id,
            ReuseExchange {
                txop: rs.txop,
                sta: sta_idx,
                ap: ap_idx,
                mcs_index,
                pieces,
                data_tx: tx,
                data_start: now,
                data_end,
                cfg,
                ack_tx: None,
                window_end: rs.window_end,
                allowed: rs.allowed,
            },
        );
        self.update_contenders(now)
    }

    fn on_reuse_data_end(&mut self, now: SimTime, tx_id: u64) -> Result<(), SimError> {
        let (reuse_id, exchange) = {
            let (id, e) = self
                .reuses
                .iter()
                .find(|(_, e)| e.data_tx == tx_id)
                .expect("exchange registered");
            (*id, (e.txop, e.sta, e.ap, e.mcs_index, e.data_start, e.data_end, e.cfg.clone()))
        };
        let (txop_id, sta_idx, ap_idx, mcs_index, start, end, cfg) = exchange;
        let ap_node = self.aps[ap_idx].node;
        let signal = self.air(tx_id).rx_dbm[ap_node.index()];

        let protected = self
            .txops
            .get(&txop_id)
            .map(|t| t.protected.clone())
            .unwrap_or_default();
        let sta_node = self.stas[sta_idx].node;
        let both_protected = |other: NodeId| {
            protected.contains(&other) && protected.contains(&sta_node)
        };

        let ok = if self.transmitted_during(ap_node, start, end) {
            false
        } else {
            let sinr = self.worst_case_sinr(ap_node, signal, start, end, &cfg, |tx| {
                tx.id == tx_id
                    || (tx.role == FrameRole::ReuseData
                        && tx.txop == txop_id
                        && both_protected(tx.node))
            });
            decode_success(sinr, self.mcs.get(mcs_index))
        };

        if ok {
            self.queue.schedule(
                now + self.tn.sifs,
                EventClass::FrameStart,
                Payload::ReuseAckStart { reuse: reuse_id },
            )?;
        } else {
            self.queue.schedule(
                now + self.tn.sifs + self.tn.ack,
                EventClass::Timer,
                Payload::ReuseFailTimer { reuse: reuse_id },
            )?;
        }
        Ok(())
    }

    fn on_reuse_ack_start(&mut self, now: SimTime, reuse_id: u64) -> Result<(), SimError> {
        let (ap_idx, txop_id) = {
            let e = &self.reuses[&reuse_id];
            (e.ap, e.txop)
        };
        let power = self
            .txops
            .get(&txop_id)
            .and_then(|t| t.shared_ack_power.get(&ap_idx).copied())
            .unwrap_or(Dbm::new(self.cfg.min_usable_dbm));
        let ap_node = self.aps[ap_idx].node;
        let tx = self.begin_tx(
            ap_node,
            power.value(),
            now,
            now + self.tn.ack,
            FrameRole::ReuseAck,
            txop_id,
        )?;
        self.reuses.get_mut(&reuse_id).unwrap().ack_tx = Some(tx);
        self.update_contenders(now)
    }

    fn on_reuse_ack_end(&mut self, now: SimTime, tx_id: u64) -> Result<(), SimError> {
        let reuse_id = *self
            .reuses
            .iter()
            .find(|(_, e)| e.ack_tx == Some(tx_id))
            .expect("ack belongs to an exchange")
            .0;
        let e = self.reuses.remove(&reuse_id).expect("present");
        self.sr.successes += 1;
        self.apply_pieces(now, e.sta, &e.pieces, true);
        self.stas[e.sta].in_flight = false;
        if !self.stas[e.sta].queue.is_empty() && now < e.window_end {
            self.arm_reuse(e.sta, now, now, e.txop, e.window_end, e.allowed)?;
        }
        Ok(())
    }

    fn on_reuse_fail(&mut self, now: SimTime, reuse_id: u64) -> Result<(), SimError> {
        let e = self.reuses.remove(&reuse_id).expect("present");
        self.apply_pieces(now, e.sta, &e.pieces, false);
        // one failed attempt per window; the packet falls back to the
        // triggered path or the next opportunity
        self.stas[e.sta].in_flight = false;
        Ok(())
    }

    // -- outcome application --------------------------------------------------

    fn apply_pieces(&mut self, now: SimTime, sta_idx: usize, pieces: &[PacketPiece], success: bool) {
        let warmup = self.tn.warmup;
        let end = self.tn.end;
        for piece in pieces {
            let Some(pos) = self.stas[sta_idx]
                .queue
                .iter()
                .position(|p| p.id == piece.packet_id)
            else {
                continue; // already dropped
            };
            let (arrival, class) = {
                let p = &self.stas[sta_idx].queue[pos];
                (p.arrival, p.class)
            };
            let measured = arrival >= warmup;
            if success {
                let p = &mut self.stas[sta_idx].queue[pos];
                p.remaining_bytes = p.remaining_bytes.saturating_sub(piece.bytes);
                if now >= warmup && now <= end {
                    self.delivered_bits[sta_idx] += piece.bytes * 8;
                }
                if p.remaining_bytes == 0 {
                    let retries = p.retries;
                    self.stas[sta_idx].queue.remove(pos);
                    let counts = self.counts_mut(class);
                    counts.delivered += 1;
                    if measured {
                        counts.delivered_measured += 1;
                        self.samples.push(LatencySample {
                            sta_id: self.stas[sta_idx].node,
                            class,
                            arrival_s: arrival.as_secs(),
                            latency_s: (now - arrival).as_secs(),
                            retries,
                        });
                    }
                }
            } else {
                let outcome = {
                    let p = &mut self.stas[sta_idx].queue[pos];
                    ack_and_retry(&mut p.retries, false, self.cfg.retry_limit)
                };
                if outcome == AckOutcome::Dropped {
                    self.stas[sta_idx].queue.remove(pos);
                    let counts = self.counts_mut(class);
                    counts.dropped += 1;
                    if measured {
                        counts.dropped_measured += 1;
                    }
                }
            }
        }
    }

    fn counts_mut(&mut self, class: TrafficClass) -> &mut ClassCounts {
        match class {
            TrafficClass::Broadband => &mut self.broadband,
            TrafficClass::AugmentedReality => &mut self.ar,
        }
    }

    fn finish(mut self) -> RunResult {
        for sta in &self.stas {
            let counts = match sta.class {
                TrafficClass::Broadband => &mut self.broadband,
                TrafficClass::AugmentedReality => &mut self.ar,
            };
            counts.queued += sta.queue.len() as u64;
        }
        let measured_s = (self.cfg.duration_s - self.cfg.warmup_s).max(0.0);
        let sta_throughput = self
            .stas
            .iter()
            .enumerate()
            .map(|(i, sta)| StaThroughput {
                sta_id: sta.node,
                class: sta.class,
                delivered_bits: self.delivered_bits[i],
                throughput_bps: if measured_s > 0.0 {
                    self.delivered_bits[i] as f64 / measured_s
                } else {
                    0.0
                },
            })
            .collect();
        RunResult {
            mode: self.mode,
            seed: self.seed,
            config_hash: self.cfg.hash(),
            duration_s: self.cfg.duration_s,
            warmup_s: self.cfg.warmup_s,
            samples: self.samples,
            sta_throughput,
            broadband: self.broadband,
            ar: self.ar,
            event_count: self.queue.dispatched(),
            txop_count: self.txop_counter,
            coordination_refreshes: self.coordination_refreshes,
            sr: self.sr,
            trace: self.trace,
        }
    }
}

fn slots(slot: SimTime, n: u32) -> SimTime {
    SimTime(slot.0 * n as u64)
}

/// Backoff slots consumed between the start of a counting phase and a
/// freeze at `now`; AIFS elapses first, then one slot per idle slot time.
fn consumed_slots(count_start: SimTime, now: SimTime, aifs: SimTime, slot: SimTime) -> u32 {
    let aifs_end = count_start + aifs;
    if now <= aifs_end {
        0
    } else {
        ((now - aifs_end).0 / slot.0) as u32
    }
}

/// Convenience: aggregate one run per seed and pool them.
pub fn run_seeds(
    cfg: &RunConfig,
    mode: Mode,
    first_seed: u64,
    n_seeds: u64,
) -> Result<Vec<RunResult>, SimError> {
    (first_seed..first_seed + n_seeds)
        .map(|seed| run(cfg, mode, seed))
        .collect()
}

pub use metrics::aggregate;

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        RunConfig {
            n_broadband: 2,
            n_ar: 2,
            duration_s: 2.0,
            warmup_s: 0.2,
            ..RunConfig::default()
        }
    }

    #[test]
    fn conservation_per_class() {
        let cfg = small_cfg();
        for mode in Mode::ALL {
            let r = run(&cfg, mode, 11).unwrap();
            for class in [TrafficClass::Broadband, TrafficClass::AugmentedReality] {
                let c = r.counts(class);
                assert_eq!(
                    c.generated,
                    c.delivered + c.dropped + c.queued,
                    "conservation violated for {class} in {mode}"
                );
                assert!(c.generated > 0);
            }
        }
    }

    #[test]
    fn deterministic_repeat() {
        let cfg = small_cfg();
        let a = run(&cfg, Mode::Cbf, 3).unwrap();
        let b = run(&cfg, Mode::Cbf, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_duration_is_empty() {
        let cfg = RunConfig {
            duration_s: 0.0,
            warmup_s: 0.0,
            ..small_cfg()
        };
        let r = run(&cfg, Mode::NoSr, 1).unwrap();
        assert!(r.samples.is_empty());
        assert_eq!(r.broadband.generated, 0);
        assert!(r.sta_throughput.iter().all(|t| t.throughput_bps == 0.0));
    }

    #[test]
    fn single_ap_modes_identical() {
        let cfg = RunConfig {
            ap_positions: vec![(15.0, 10.0)],
            n_broadband: 2,
            n_ar: 2,
            duration_s: 2.0,
            warmup_s: 0.2,
            ..RunConfig::default()
        };
        let no_sr = run(&cfg, Mode::NoSr, 5).unwrap();
        let psr = run(&cfg, Mode::Psr, 5).unwrap();
        let cbf = run(&cfg, Mode::Cbf, 5).unwrap();
        assert_eq!(no_sr.samples, psr.samples);
        assert_eq!(psr.samples, cbf.samples);
        assert_eq!(no_sr.broadband, cbf.broadband);
        assert_eq!(no_sr.ar, cbf.ar);
    }

    #[test]
    fn lone_ar_stas_have_low_latency() {
        // two BSSs, one AR STA each, no broadband: latency is just
        // contention plus a short exchange
        let cfg = RunConfig {
            n_broadband: 0,
            n_ar: 2,
            duration_s: 3.0,
            warmup_s: 0.5,
            ..RunConfig::default()
        };
        let r = run(&cfg, Mode::Cbf, 7).unwrap();
        assert!(r.ar.delivered > 0);
        let mut lat: Vec<f64> = r.samples.iter().map(|s| s.latency_s).collect();
        lat.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = lat[lat.len() / 2];
        assert!(median < 0.005, "median {median} s");
    }

    #[test]
    fn traffic_and_channel_identical_across_modes() {
        // paired comparison contract: same shadowing and arrival draws
        let cfg = small_cfg();
        let a = run_with_trace(&cfg, Mode::NoSr, 2).unwrap();
        let b = run_with_trace(&cfg, Mode::Cbf, 2).unwrap();
        assert_eq!(a.broadband.generated, b.broadband.generated);
        assert_eq!(a.ar.generated, b.ar.generated);
    }

    #[test]
    fn mode_string_round_trip() {
        for mode in Mode::ALL {
            assert_eq!(mode.as_str().parse::<Mode>().unwrap(), mode);
        }
        assert!("x".parse::<Mode>().is_err());
    }
}
