//! Uplink traffic generation: Poisson file arrivals for the broadband
//! class and constant-rate short packets for the augmented-reality class.

use crate::NodeId;
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Traffic class of a packet or STA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrafficClass {
    Broadband,
    AugmentedReality,
}

impl TrafficClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficClass::Broadband => "broadband",
            TrafficClass::AugmentedReality => "ar",
        }
    }
}

impl std::fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A traffic unit queued at a STA; the latency sample source.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub sta_id: NodeId,
    pub class: TrafficClass,
    pub size_bytes: u64,
    pub arrival_s: f64,
    pub retries: u32,
    pub delivered_s: Option<f64>,
}

/// Rate parameters of one STA's arrival process.
#[derive(Debug, Clone, PartialEq)]
pub enum TrafficSpec {
    /// Poisson file arrivals: `lambda` files/s of `size_bytes` each.
    Ftp3 { lambda: f64, size_bytes: u64 },
    /// Constant arrivals every `period_s` of `size_bytes` each.
    Cbr {
        period_s: f64,
        size_bytes: u64,
        offset_s: f64,
    },
}

/// Poisson (FTP model 3) arrivals over `[0, horizon_s)`: i.i.d. exponential
/// inter-arrival times with mean `1/lambda`.
pub fn ftp3_arrivals<R: Rng>(
    lambda: f64,
    size_bytes: u64,
    horizon_s: f64,
    sta_id: NodeId,
    next_id: &mut u64,
    rng: &mut R,
) -> Vec<Packet> {
    assert!(lambda > 0.0, "lambda must be positive");
    let exp = Exp::new(lambda).expect("valid rate");
    let mut packets = Vec::new();
    let mut t = exp.sample(rng);
    while t < horizon_s {
        packets.push(Packet {
            id: *next_id,
            sta_id,
            class: TrafficClass::Broadband,
            size_bytes,
            arrival_s: t,
            retries: 0,
            delivered_s: None,
        });
        *next_id += 1;
        t += exp.sample(rng);
    }
    packets
}

/// Constant-rate arrivals at `offset, offset+period, ... < horizon`.
pub fn cbr_arrivals(
    period_s: f64,
    size_bytes: u64,
    offset_s: f64,
    horizon_s: f64,
    sta_id: NodeId,
    next_id: &mut u64,
) -> Vec<Packet> {
    assert!(period_s > 0.0, "period must be positive");
    assert!(
        (0.0..period_s).contains(&offset_s),
        "offset must lie in [0, period)"
    );
    let mut packets = Vec::new();
    let mut k = 0u64;
    loop {
        let t = offset_s + k as f64 * period_s;
        if t >= horizon_s {
            break;
        }
        packets.push(Packet {
            id: *next_id,
            sta_id,
            class: TrafficClass::AugmentedReality,
            size_bytes,
            arrival_s: t,
            retries: 0,
            delivered_s: None,
        });
        *next_id += 1;
        k += 1;
    }
    packets
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn offered_load_maps_to_rate() {
        // 100 Mbit/s offered at 0.5 MByte per file is 25 files/s
        let lambda = 100e6 / (500_000.0 * 8.0);
        assert_eq!(lambda, 25.0);
    }

    #[test]
    fn ftp3_mean_count_matches_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut next_id = 0;
        let trials = 1000;
        let horizon = 10.0;
        let mut total = 0usize;
        for _ in 0..trials {
            total += ftp3_arrivals(25.0, 500_000, horizon, NodeId(5), &mut next_id, &mut rng).len();
        }
        let mean = total as f64 / trials as f64;
        // per-trial sigma = sqrt(250); 3 standard errors over 1000 trials
        let bound = 3.0 * (250.0f64).sqrt() / (trials as f64).sqrt();
        assert!(
            (mean - 250.0).abs() <= bound,
            "mean {mean} outside 250 ± {bound}"
        );
    }

    #[test]
    fn ftp3_deterministic_per_seed() {
        let mut id_a = 0;
        let mut id_b = 0;
        let a = ftp3_arrivals(
            25.0,
            500_000,
            5.0,
            NodeId(1),
            &mut id_a,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        let b = ftp3_arrivals(
            25.0,
            500_000,
            5.0,
            NodeId(1),
            &mut id_b,
            &mut ChaCha8Rng::seed_from_u64(9),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn cbr_schedule() {
        let mut next_id = 0;
        let pkts = cbr_arrivals(0.010, 32, 0.0, 0.100, NodeId(2), &mut next_id);
        assert_eq!(pkts.len(), 10);
        for (k, p) in pkts.iter().enumerate() {
            assert!((p.arrival_s - 0.010 * k as f64).abs() < 1e-12);
            assert_eq!(p.size_bytes, 32);
        }

        let offset = cbr_arrivals(0.010, 32, 0.003, 0.100, NodeId(2), &mut next_id);
        assert!((offset[0].arrival_s - 0.003).abs() < 1e-12);

        let empty = cbr_arrivals(0.010, 32, 0.0, 0.0, NodeId(2), &mut next_id);
        assert!(empty.is_empty());
    }

    #[test]
    fn ids_unique_across_generators() {
        let mut next_id = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ftp3_arrivals(25.0, 500_000, 2.0, NodeId(0), &mut next_id, &mut rng);
        let b = cbr_arrivals(0.010, 32, 0.001, 2.0, NodeId(1), &mut next_id);
        let mut ids: Vec<u64> = a.iter().chain(b.iter()).map(|p| p.id).collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }
}
