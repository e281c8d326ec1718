//! Discrete-event simulator of uplink Wi-Fi in overlapping BSSs.
//!
//! Models two (or more) multi-antenna APs sharing an 80 MHz channel with
//! trigger-based uplink MU-MIMO, and compares three channel-access regimes:
//!
//! - `no-sr` — plain CSMA/CA with triggered uplink, no spatial reuse;
//! - `psr` — parameterised spatial reuse: the trigger frame advertises the
//!   donor AP's transmit power and the maximum interference it tolerates,
//!   and OBSS devices derive a transmit-power cap for concurrent access;
//! - `cbf` — multi-AP coordinated beamforming on top of PSR: the APs keep a
//!   semi-static coordination set, nominate the strongest latency-sensitive
//!   interferers per TXOP, steer receive nulls at them, and relax their
//!   power caps by the per-device suppression.
//!
//! A run is a deterministic function of `(config, mode, seed)`. The primary
//! output is the per-packet MAC latency distribution of the
//! augmented-reality traffic class, summarised as median/p95/p99/p99.99.
//!
//! Core unit and link-budget math is generic over the scalar type (f32/f64)
//! via num-traits; the simulator itself runs on the f64 aliases exported at
//! the crate root ([`PowerDbm`], [`GainDb`]).

pub mod channel;
pub mod cli;
pub mod config;
pub mod event;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod rng;
pub mod sim;
pub mod sr;
pub mod traffic;
pub mod units;

pub use units::{Db, Dbm, Scalar, POWER_TOL_DB};

/// Power in dBm at the default scalar precision.
pub type PowerDbm = Dbm<f64>;
/// Dimensionless ratio in dB at the default scalar precision.
pub type GainDb = Db<f64>;

/// Identifier of a node (AP or STA) within one deployment.
///
/// APs occupy `0..n_aps`, STAs follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
