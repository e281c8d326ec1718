//! CSMA/CA contention state, the shared-medium bookkeeping, trigger-frame
//! packing, and acknowledgement/retry outcomes.

use crate::channel::{received_power, LinkTable};
use crate::event::SimTime;
use crate::sr::PsrField;
use crate::units::sum_powers;
use crate::{NodeId, PowerDbm};
use rand::Rng;

/// DCF contention state of one contender.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentionState {
    pub contention_window: u32,
    pub backoff_slots: u32,
}

impl ContentionState {
    pub fn new(cw_min: u32) -> Self {
        ContentionState {
            contention_window: cw_min,
            backoff_slots: 0,
        }
    }

    /// Redraw the backoff uniformly over `[0, contention_window]`.
    pub fn draw_backoff<R: Rng>(&mut self, rng: &mut R) {
        self.backoff_slots = rng.gen_range(0..=self.contention_window);
    }

    /// Successful exchange: window back to minimum.
    pub fn on_success(&mut self, cw_min: u32) {
        self.contention_window = cw_min;
    }

    /// Failed exchange: window doubles up to the cap.
    pub fn on_failure(&mut self, cw_max: u32) {
        self.contention_window = (2 * self.contention_window + 1).min(cw_max);
    }
}

/// What a frame on the air is for; receivers and CCA filters dispatch on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameRole {
    Coordination,
    Sounding,
    Trigger,
    TriggeredUplink,
    DonorAck,
    ReuseData,
    ReuseAck,
}

/// One transmission on the shared channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub id: u64,
    pub tx_node: NodeId,
    pub power: PowerDbm,
    pub start: SimTime,
    pub end: SimTime,
    pub role: FrameRole,
    /// TXOP the frame belongs to.
    pub txop_id: u64,
}

impl Transmission {
    pub fn active_at(&self, t: SimTime) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, start: SimTime, end: SimTime) -> bool {
        self.start < end && start < self.end
    }
}

/// Per-channel set of transmissions: the active ones plus a recent tail so
/// receivers can evaluate worst-case interference over their window.
#[derive(Debug, Default)]
pub struct MediumState {
    next_id: u64,
    log: Vec<Transmission>,
}

impl MediumState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin(
        &mut self,
        tx_node: NodeId,
        power: PowerDbm,
        start: SimTime,
        end: SimTime,
        role: FrameRole,
        txop_id: u64,
    ) -> u64 {
        debug_assert!(end > start, "transmission must have positive duration");
        let id = self.next_id;
        self.next_id += 1;
        self.log.push(Transmission {
            id,
            tx_node,
            power,
            start,
            end,
            role,
            txop_id,
        });
        id
    }

    pub fn get(&self, id: u64) -> Option<&Transmission> {
        self.log.iter().find(|t| t.id == id)
    }

    pub fn active_at(&self, t: SimTime) -> impl Iterator<Item = &Transmission> {
        self.log.iter().filter(move |tx| tx.active_at(t))
    }

    pub fn overlapping(&self, start: SimTime, end: SimTime) -> impl Iterator<Item = &Transmission> {
        self.log.iter().filter(move |tx| tx.overlaps(start, end))
    }

    /// Drop entries that ended before `horizon`; call once per TXOP.
    pub fn prune(&mut self, horizon: SimTime) {
        self.log.retain(|tx| tx.end >= horizon);
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }
}

/// Clear-channel assessment: the aggregate received power of ongoing
/// transmissions at `node` (those passing `include`) meets the threshold.
pub fn cca_busy<F>(
    node: NodeId,
    now: SimTime,
    medium: &MediumState,
    links: &LinkTable,
    threshold: PowerDbm,
    include: F,
) -> bool
where
    F: Fn(&Transmission) -> bool,
{
    let powers: Vec<PowerDbm> = medium
        .active_at(now)
        .filter(|tx| tx.tx_node != node && include(tx))
        .map(|tx| received_power(tx.power, links.link(tx.tx_node, node)))
        .collect();
    if powers.is_empty() {
        return false;
    }
    let total = sum_powers(&powers).expect("non-empty");
    total.value() >= threshold.value()
}

/// A slice of one queued packet carried in an uplink PPDU.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketPiece {
    pub packet_id: u64,
    pub bytes: u64,
}

/// One STA's allocation inside a trigger frame.
#[derive(Debug, Clone)]
pub struct ScheduledUplink {
    pub sta: NodeId,
    pub mcs_index: u8,
    pub duration_s: f64,
    pub pieces: Vec<PacketPiece>,
}

/// Scheduling grant plus, in the spatial-reuse modes, the PSR field.
#[derive(Debug, Clone)]
pub struct TriggerFrame {
    pub donor_ap: NodeId,
    pub schedule: Vec<ScheduledUplink>,
    /// Duration of the uplink phase (longest scheduled PPDU), seconds.
    pub ul_window_s: f64,
    pub psr_field: Option<PsrField>,
}

/// Fill one STA's PPDU from its queue snapshot, FIFO, fragmenting the last
/// packet taken if the airtime window requires it. `queue` holds
/// `(packet id, remaining bytes)`. Returns the pieces and the PPDU airtime.
pub fn pack_uplink(
    queue: &[(u64, u64)],
    data_rate_bps: f64,
    window_s: f64,
    preamble_s: f64,
) -> Option<(Vec<PacketPiece>, f64)> {
    if window_s <= preamble_s {
        return None;
    }
    let budget_bytes = ((window_s - preamble_s) * data_rate_bps / 8.0).floor() as u64;
    if budget_bytes == 0 {
        return None;
    }
    let mut pieces = Vec::new();
    let mut taken = 0u64;
    for &(packet_id, remaining) in queue {
        if taken >= budget_bytes {
            break;
        }
        let take = remaining.min(budget_bytes - taken);
        if take == 0 {
            continue;
        }
        pieces.push(PacketPiece {
            packet_id,
            bytes: take,
        });
        taken += take;
    }
    if pieces.is_empty() {
        return None;
    }
    let duration = preamble_s + taken as f64 * 8.0 / data_rate_bps;
    Some((pieces, duration))
}

/// Outcome of an acknowledged (or unacknowledged) transmission attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    Delivered,
    Requeue,
    Dropped,
}

/// Apply the acknowledgement rule to one packet's retry counter.
pub fn ack_and_retry(retries: &mut u32, success: bool, retry_limit: u32) -> AckOutcome {
    if success {
        return AckOutcome::Delivered;
    }
    *retries += 1;
    if *retries > retry_limit {
        AckOutcome::Dropped
    } else {
        AckOutcome::Requeue
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{LinkTable, Position3D};
    use crate::units::Dbm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn contention_window_doubles_and_resets() {
        let mut state = ContentionState::new(15);
        state.on_failure(1023);
        assert_eq!(state.contention_window, 31);
        state.on_failure(1023);
        assert_eq!(state.contention_window, 63);
        for _ in 0..10 {
            state.on_failure(1023);
        }
        assert_eq!(state.contention_window, 1023);
        state.on_success(15);
        assert_eq!(state.contention_window, 15);
    }

    #[test]
    fn backoff_draw_within_window() {
        let mut state = ContentionState::new(15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            state.draw_backoff(&mut rng);
            assert!(state.backoff_slots <= 15);
        }
    }

    fn test_links() -> LinkTable {
        // node 0 and node 1 ten meters apart, plus a far node 2
        let positions = vec![
            Position3D::new(0.0, 0.0, 3.0),
            Position3D::new(10.0, 0.0, 3.0),
            Position3D::new(0.0, 10.0, 1.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        LinkTable::build(&positions, 5.18, &mut rng)
    }

    #[test]
    fn cca_idle_when_quiet() {
        let medium = MediumState::new();
        let links = test_links();
        assert!(!cca_busy(
            NodeId(0),
            SimTime::from_micros(10.0),
            &medium,
            &links,
            Dbm::new(-82.0),
            |_| true
        ));
    }

    #[test]
    fn cca_aggregates_ongoing_power() {
        let links = test_links();
        let mut medium = MediumState::new();
        // at 10 m the pathloss is ~64-77 dB, so 15 dBm lands well above -82
        medium.begin(
            NodeId(1),
            Dbm::new(15.0),
            SimTime::ZERO,
            SimTime::from_micros(100.0),
            FrameRole::TriggeredUplink,
            0,
        );
        assert!(cca_busy(
            NodeId(0),
            SimTime::from_micros(50.0),
            &medium,
            &links,
            Dbm::new(-82.0),
            |_| true
        ));
        // after it ends the medium is idle again
        assert!(!cca_busy(
            NodeId(0),
            SimTime::from_micros(150.0),
            &medium,
            &links,
            Dbm::new(-82.0),
            |_| true
        ));
        // a filter can hide the transmission
        assert!(!cca_busy(
            NodeId(0),
            SimTime::from_micros(50.0),
            &medium,
            &links,
            Dbm::new(-82.0),
            |tx| tx.role != FrameRole::TriggeredUplink
        ));
    }

    #[test]
    fn cca_sums_two_marginal_signals() {
        // two transmissions each received at exactly -85 dBm sum to -81.99
        let positions = vec![
            Position3D::new(0.0, 0.0, 1.0),
            Position3D::new(20.0, 0.0, 1.0),
            Position3D::new(0.0, 20.0, 1.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let links = LinkTable::build(&positions, 5.18, &mut rng);
        // choose per-tx power so each arrives at -85 at node 0
        let l1 = links.link(NodeId(1), NodeId(0));
        let p1 = -85.0 + l1.pathloss.value() + l1.shadowing.value();
        let l2 = links.link(NodeId(2), NodeId(0));
        let p2 = -85.0 + l2.pathloss.value() + l2.shadowing.value();
        let mut medium = MediumState::new();
        let span = SimTime::from_micros(100.0);
        medium.begin(NodeId(1), Dbm::new(p1), SimTime::ZERO, span, FrameRole::ReuseData, 0);
        assert!(!cca_busy(
            NodeId(0),
            SimTime::from_micros(1.0),
            &medium,
            &links,
            Dbm::new(-82.0),
            |_| true
        ));
        medium.begin(NodeId(2), Dbm::new(p2), SimTime::ZERO, span, FrameRole::ReuseData, 0);
        assert!(cca_busy(
            NodeId(0),
            SimTime::from_micros(1.0),
            &medium,
            &links,
            Dbm::new(-82.0),
            |_| true
        ));
    }

    #[test]
    fn pack_single_small_packet() {
        let rate = 0.5 * 980.0 / 13.6e-6; // lowest MCS at 80 MHz
        let (pieces, dur) = pack_uplink(&[(7, 32)], rate, 3.8e-3, 40e-6).unwrap();
        assert_eq!(pieces, vec![PacketPiece { packet_id: 7, bytes: 32 }]);
        assert!((dur - 4.710530612244898e-5).abs() < 1e-12);
    }

    #[test]
    fn pack_fragments_large_file() {
        let rate = 5.0 * 980.0 / 13.6e-6;
        let window = 3.824e-3;
        let (pieces, dur) = pack_uplink(&[(1, 500_000)], rate, window, 40e-6).unwrap();
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].bytes < 500_000);
        assert!(dur <= window + 1e-12);
        // remaining bytes need at least two more windows
        let remaining = 500_000 - pieces[0].bytes;
        assert!(remaining as f64 * 8.0 / rate > window);
    }

    #[test]
    fn pack_takes_whole_queue_when_it_fits() {
        let rate = 5.0 * 980.0 / 13.6e-6;
        let (pieces, _) = pack_uplink(&[(1, 32), (2, 32), (3, 32)], rate, 3.8e-3, 40e-6).unwrap();
        assert_eq!(pieces.len(), 3);
        assert!(pieces.iter().all(|p| p.bytes == 32));
    }

    #[test]
    fn pack_rejects_window_smaller_than_preamble() {
        let rate = 5.0 * 980.0 / 13.6e-6;
        assert!(pack_uplink(&[(1, 32)], rate, 30e-6, 40e-6).is_none());
    }

    #[test]
    fn ack_and_retry_rules() {
        let mut retries = 0;
        assert_eq!(ack_and_retry(&mut retries, true, 10), AckOutcome::Delivered);
        assert_eq!(retries, 0);

        assert_eq!(ack_and_retry(&mut retries, false, 10), AckOutcome::Requeue);
        assert_eq!(retries, 1);

        let mut at_limit = 10;
        assert_eq!(ack_and_retry(&mut at_limit, false, 10), AckOutcome::Dropped);
        assert_eq!(at_limit, 11);
    }
}
