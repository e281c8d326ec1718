//! Deterministic discrete-event core: simulation time, event ordering,
//! and the queue with its past-scheduling trap.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use thiserror::Error;

/// Simulation time in integer nanoseconds; exact ordering, no float ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(s: f64) -> Self {
        debug_assert!(s >= 0.0 && s.is_finite());
        SimTime((s * 1e9).round() as u64)
    }

    pub fn from_micros(us: f64) -> Self {
        Self::from_secs(us * 1e-6)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        debug_assert!(self.0 >= rhs.0);
        SimTime(self.0 - rhs.0)
    }
}

/// Tie-break class at equal timestamps; frame ends resolve before new
/// frames start, timers, then fresh arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventClass {
    FrameEnd = 0,
    FrameStart = 1,
    Timer = 2,
    Arrival = 3,
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub class: EventClass,
    pub seq: u64,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.class == other.class && self.seq == other.seq
    }
}

impl<P> Eq for Event<P> {}

impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want the earliest event on top
        (other.time, other.class, other.seq).cmp(&(self.time, self.class, self.seq))
    }
}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EventError {
    #[error("scheduled into the past: event at {event_ns} ns, clock at {clock_ns} ns")]
    ScheduleIntoPast { event_ns: u64, clock_ns: u64 },
}

/// Time-ordered event queue with strict (time, class, insertion) order.
#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Event<P>>,
    next_seq: u64,
    clock: SimTime,
    dispatched: u64,
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            next_seq: 0,
            clock: SimTime::ZERO,
            dispatched: 0,
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: SimTime, class: EventClass, payload: P) -> Result<(), EventError> {
        if time < self.clock {
            return Err(EventError::ScheduleIntoPast {
                event_ns: time.0,
                clock_ns: self.clock.0,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            time,
            class,
            seq,
            payload,
        });
        Ok(())
    }

    /// Time of the earliest pending event.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.time)
    }

    /// Pop the next event and advance the clock to it.
    pub fn dispatch_next(&mut self) -> Option<Event<P>> {
        let event = self.heap.pop()?;
        debug_assert!(event.time >= self.clock, "clock must not run backwards");
        self.clock = event.time;
        self.dispatched += 1;
        Some(event)
    }
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priority_order_at_equal_time() {
        let mut q = EventQueue::new();
        let t = SimTime::from_micros(5000.0);
        q.schedule(t, EventClass::Arrival, "arrival").unwrap();
        q.schedule(t, EventClass::FrameEnd, "frame-end").unwrap();
        q.schedule(t, EventClass::Timer, "timer").unwrap();
        q.schedule(t, EventClass::FrameStart, "frame-start").unwrap();
        let order: Vec<&str> = std::iter::from_fn(|| q.dispatch_next().map(|e| e.payload)).collect();
        assert_eq!(order, ["frame-end", "frame-start", "timer", "arrival"]);
    }

    #[test]
    fn insertion_order_breaks_full_ties() {
        let mut q = EventQueue::new();
        let t = SimTime::from_micros(100.0);
        q.schedule(t, EventClass::Timer, 1).unwrap();
        q.schedule(t, EventClass::Timer, 2).unwrap();
        q.schedule(t, EventClass::Timer, 3).unwrap();
        let order: Vec<i32> = std::iter::from_fn(|| q.dispatch_next().map(|e| e.payload)).collect();
        assert_eq!(order, [1, 2, 3]);
    }

    #[test]
    fn scheduling_into_past_is_an_error() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(10.0), EventClass::Timer, ())
            .unwrap();
        q.dispatch_next();
        let err = q.schedule(SimTime::from_micros(9.0), EventClass::Timer, ());
        assert!(err.is_err());
    }

    #[test]
    fn clock_is_monotone() {
        let mut q = EventQueue::new();
        for us in [30.0, 10.0, 20.0, 10.0] {
            q.schedule(SimTime::from_micros(us), EventClass::Timer, ()).unwrap();
        }
        let mut last = SimTime::ZERO;
        while let Some(e) = q.dispatch_next() {
            assert!(e.time >= last);
            last = e.time;
        }
        assert_eq!(q.dispatched(), 4);
    }

    #[test]
    fn time_conversions() {
        assert_eq!(SimTime::from_secs(1.0).0, 1_000_000_000);
        assert_eq!(SimTime::from_micros(13.6).0, 13_600);
        assert!((SimTime(2_500_000_000).as_secs() - 2.5).abs() < 1e-12);
    }
}
