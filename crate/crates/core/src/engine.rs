//! Deterministic discrete-event core.
//!
//! Virtual time is an integer nanosecond count. Events are ordered by
//! `(time, seq)` where `seq` is a per-engine insertion counter, so two events
//! scheduled for the same instant are dispatched in the order they were
//! scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

// ============================================================================
// Time
// ============================================================================

/// Nanoseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const NANOSECOND: SimTime = SimTime(1);
    pub const MICROSECOND: SimTime = SimTime(1_000);
    pub const MILLISECOND: SimTime = SimTime(1_000_000);
    pub const SECOND: SimTime = SimTime(1_000_000_000);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative or non-finite input is
    /// clamped to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !s.is_finite() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e9).round() as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        Self::from_secs_f64(ms / 1e3)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Smallest multiple of `period` that is `>= self`.
    pub fn ceil_to(self, period: SimTime) -> SimTime {
        assert!(period.0 > 0, "period must be positive");
        SimTime(self.0.div_ceil(period.0) * period.0)
    }

    /// Largest multiple of `period` that is `<= self`.
    pub fn floor_to(self, period: SimTime) -> SimTime {
        assert!(period.0 > 0, "period must be positive");
        SimTime(self.0 / period.0 * period.0)
    }

    pub fn is_multiple_of(self, period: SimTime) -> bool {
        period.0 > 0 && self.0 % period.0 == 0
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime underflow"))
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 1_000_000 == 0 {
            write!(f, "{}ms", self.0 / 1_000_000)
        } else if self.0 % 1_000 == 0 {
            write!(f, "{}us", self.0 / 1_000)
        } else {
            write!(f, "{}ns", self.0)
        }
    }
}

/// Identifier of a simulated node (eNB, UE, AP, client).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled in the past: now={now}, requested={requested}")]
    ScheduleInPast { now: SimTime, requested: SimTime },
    #[error("run_until target {target} is before the current clock {now}")]
    RunBackwards { now: SimTime, target: SimTime },
    #[error("empty sampling range [{lo}, {hi}]")]
    EmptyRange { lo: u64, hi: u64 },
}

// ============================================================================
// Events
// ============================================================================

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.time == other.0.time && self.0.seq == other.0.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: reverse so the earliest (time, seq) is on top
        (other.0.time, other.0.seq).cmp(&(self.0.time, self.0.seq))
    }
}

/// One dispatched event, as recorded by the optional trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub time: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub label: String,
}

/// Event queue plus virtual clock.
pub struct Engine<P> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Queued<P>>,
    last_dispatched: Option<(SimTime, u64)>,
    dispatched: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl<P> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Engine<P> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            last_dispatched: None,
            dispatched: 0,
            trace: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceEntry>> {
        self.trace.take()
    }

    /// Queues `payload` for `target` at `time`. Returns the assigned sequence
    /// number.
    pub fn schedule(
        &mut self,
        time: SimTime,
        target: NodeId,
        payload: P,
    ) -> Result<u64, EngineError> {
        if time < self.now {
            return Err(EngineError::ScheduleInPast {
                now: self.now,
                requested: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued(Event {
            time,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    pub fn schedule_in(
        &mut self,
        delay: SimTime,
        target: NodeId,
        payload: P,
    ) -> Result<u64, EngineError> {
        self.schedule(self.now + delay, target, payload)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|q| q.0.time)
    }

    /// Pops the next event if it is due at or before `t_end`, advancing the
    /// clock to its time.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>>
    where
        P: fmt::Debug,
    {
        if self.heap.peek()?.0.time > t_end {
            return None;
        }
        let Queued(ev) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now, "clock would move backwards");
        debug_assert!(
            self.last_dispatched
                .is_none_or(|last| (ev.time, ev.seq) > last),
            "event dispatched out of (time, seq) order"
        );
        self.last_dispatched = Some((ev.time, ev.seq));
        self.now = ev.time;
        self.dispatched += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                time: ev.time,
                seq: ev.seq,
                target: ev.target,
                label: format!("{:?}", ev.payload),
            });
        }
        Some(ev)
    }

    /// Moves the clock forward to `t_end` once no events remain before it.
    pub fn advance_to(&mut self, t_end: SimTime) -> Result<(), EngineError> {
        if t_end < self.now {
            return Err(EngineError::RunBackwards {
                now: self.now,
                target: t_end,
            });
        }
        self.now = t_end;
        Ok(())
    }

    /// Dispatches every event with `time <= t_end` through `handler`, then
    /// sets the clock to `t_end`.
    pub fn run_until<E, F>(&mut self, t_end: SimTime, mut handler: F) -> Result<(), E>
    where
        P: fmt::Debug,
        E: From<EngineError>,
        F: FnMut(&mut Self, Event<P>) -> Result<(), E>,
    {
        if t_end < self.now {
            return Err(EngineError::RunBackwards {
                now: self.now,
                target: t_end,
            }
            .into());
        }
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev)?;
        }
        self.advance_to(t_end)?;
        Ok(())
    }
}

// ============================================================================
// Random streams
// ============================================================================

/// What a random stream is used for. Part of the stream seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Backoff,
    Traffic,
    Calibration,
    Test,
}

impl StreamPurpose {
    fn code(self) -> u64 {
        match self {
            StreamPurpose::Backoff => 1,
            StreamPurpose::Traffic => 2,
            StreamPurpose::Calibration => 3,
            StreamPurpose::Test => 4,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-node pseudo-random stream: ChaCha8 seeded from
/// `(master_seed, node, purpose)` through SplitMix64.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub const ALGORITHM: &'static str = "chacha8/splitmix64";

    pub fn new(master_seed: u64, node: NodeId, purpose: StreamPurpose) -> Self {
        let stream = splitmix64((u64::from(node.0) << 8) | purpose.code());
        let seed = splitmix64(master_seed ^ stream);
        RngStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: u64, hi: u64) -> Result<u64, EngineError> {
        if lo > hi {
            return Err(EngineError::EmptyRange { lo, hi });
        }
        Ok(self.rng.gen_range(lo..=hi))
    }

    /// Uniform real in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }
}

/// Free-function form of [`RngStream::uniform_int`].
pub fn sample_uniform_int(rng: &mut RngStream, lo: u64, hi: u64) -> Result<u64, EngineError> {
    rng.uniform_int(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_time_events_follow_insertion_order() {
        let mut eng: Engine<u32> = Engine::new();
        eng.schedule(SimTime::ZERO, NodeId(0), 1).unwrap();
        eng.schedule(SimTime::ZERO, NodeId(0), 2).unwrap();
        let a = eng.pop_until(SimTime::ZERO).unwrap();
        let b = eng.pop_until(SimTime::ZERO).unwrap();
        assert_eq!((a.payload, b.payload), (1, 2));
        assert!(a.seq < b.seq);
    }

    #[test]
    fn clock_lands_on_slot_boundary() {
        let mut eng: Engine<()> = Engine::new();
        eng.schedule(SimTime::from_nanos(9_000), NodeId(0), ())
            .unwrap();
        let ev = eng.pop_until(SimTime::SECOND).unwrap();
        assert_eq!(ev.time, SimTime::from_micros(9));
        assert_eq!(eng.now(), SimTime::from_nanos(9_000));
    }

    #[test]
    fn scheduling_in_the_past_fails() {
        let mut eng: Engine<()> = Engine::new();
        eng.schedule(SimTime::from_micros(10), NodeId(0), ())
            .unwrap();
        eng.pop_until(SimTime::SECOND).unwrap();
        let err = eng
            .schedule(SimTime::from_micros(5), NodeId(0), ())
            .unwrap_err();
        assert!(matches!(err, EngineError::ScheduleInPast { .. }));
    }

    #[test]
    fn run_until_on_empty_queue_moves_clock() {
        let mut eng: Engine<()> = Engine::new();
        let mut n = 0;
        eng.run_until::<EngineError, _>(SimTime::SECOND, |_, _| {
            n += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(n, 0);
        assert_eq!(eng.now(), SimTime::SECOND);
    }

    #[test]
    fn run_until_boundary_is_inclusive() {
        let mut eng: Engine<()> = Engine::new();
        eng.schedule(SimTime::SECOND, NodeId(0), ()).unwrap();
        eng.schedule(SimTime::SECOND + SimTime::NANOSECOND, NodeId(0), ())
            .unwrap();
        let mut seen = Vec::new();
        eng.run_until::<EngineError, _>(SimTime::SECOND, |_, ev| {
            seen.push(ev.time);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![SimTime::SECOND]);
        assert_eq!(eng.pending(), 1);
    }

    #[test]
    fn handler_may_schedule_more_events() {
        let mut eng: Engine<u32> = Engine::new();
        eng.schedule(SimTime::ZERO, NodeId(0), 0).unwrap();
        let mut count = 0;
        eng.run_until::<EngineError, _>(SimTime::from_millis(1), |e, ev| {
            count += 1;
            if ev.payload < 9 {
                e.schedule_in(SimTime::from_micros(9), NodeId(0), ev.payload + 1)?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 10);
    }

    #[test]
    fn degenerate_range() {
        let mut rng = RngStream::new(1, NodeId(0), StreamPurpose::Test);
        for _ in 0..100 {
            assert_eq!(rng.uniform_int(5, 5).unwrap(), 5);
        }
        assert!(rng.uniform_int(6, 5).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, node, purpose| {
            let mut r = RngStream::new(seed, NodeId(node), purpose);
            (0..32)
                .map(|_| r.uniform_int(0, 1_000_000).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(
            draw(7, 1, StreamPurpose::Backoff),
            draw(7, 1, StreamPurpose::Backoff)
        );
        assert_ne!(
            draw(7, 1, StreamPurpose::Backoff),
            draw(7, 2, StreamPurpose::Backoff)
        );
        assert_ne!(
            draw(7, 1, StreamPurpose::Backoff),
            draw(7, 1, StreamPurpose::Traffic)
        );
        assert_ne!(
            draw(7, 1, StreamPurpose::Backoff),
            draw(8, 1, StreamPurpose::Backoff)
        );
    }

    #[test]
    fn time_helpers() {
        let t = SimTime::from_micros(2_300);
        assert_eq!(t.ceil_to(SimTime::MILLISECOND), SimTime::from_millis(3));
        assert_eq!(t.floor_to(SimTime::MILLISECOND), SimTime::from_millis(2));
        assert_eq!(
            SimTime::from_millis(3).ceil_to(SimTime::MILLISECOND),
            SimTime::from_millis(3)
        );
        assert_eq!(SimTime::from_secs_f64(1.5), SimTime::from_millis(1_500));
        assert_eq!(format!("{}", SimTime::from_micros(43)), "43us");
    }
}
