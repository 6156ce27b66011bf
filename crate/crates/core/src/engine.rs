//! Event calendar, simulation clock and reproducible random streams.
//!
//! The calendar is generic over the time scalar so the same engine can run on
//! `f32` or `f64` clocks. Simulations in this crate use the [`crate::Calendar`]
//! alias (seconds as `f64`).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// Simulated time in seconds. Never moves backwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock<T> {
    now: T,
}

impl<T: Float> SimClock<T> {
    pub fn new() -> Self {
        Self { now: T::zero() }
    }

    pub fn now(&self) -> T {
        self.now
    }

    /// Moves the clock forward to `t`.
    pub fn advance_to(&mut self, t: T) -> Result<(), SimError> {
        if !(t >= self.now) {
            return Err(SimError::TimeReversal {
                now: self.now.to_f64().unwrap_or(f64::NAN),
                requested: t.to_f64().unwrap_or(f64::NAN),
            });
        }
        self.now = t;
        Ok(())
    }
}

impl<T: Float> Default for SimClock<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Handle returned by [`EventCalendar::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

struct Entry<T, E> {
    at: T,
    seq: u64,
    event: E,
}

// Min-heap on (at, seq) through a reversed Ord.
impl<T: Float, E> Ord for Entry<T, E> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .partial_cmp(&self.at)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl<T: Float, E> PartialOrd for Entry<T, E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Float, E> PartialEq for Entry<T, E> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}

impl<T: Float, E> Eq for Entry<T, E> {}

/// Pending events ordered by `(timestamp, insertion sequence)`.
///
/// Events at equal timestamps run in insertion order. Scheduling in the past
/// is rejected rather than clamped.
pub struct EventCalendar<T, E> {
    clock: SimClock<T>,
    heap: BinaryHeap<Entry<T, E>>,
    cancelled: HashSet<u64>,
    next_seq: u64,
    executed: u64,
}

impl<T: Float, E> EventCalendar<T, E> {
    pub fn new() -> Self {
        Self {
            clock: SimClock::new(),
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_seq: 0,
            executed: 0,
        }
    }

    pub fn now(&self) -> T {
        self.clock.now()
    }

    /// Number of events popped for execution so far.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Number of scheduled, not yet executed and not cancelled events.
    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending() == 0
    }

    pub fn schedule(&mut self, at: T, event: E) -> Result<EventHandle, SimError> {
        if !(at >= self.clock.now()) {
            return Err(SimError::ScheduleInPast {
                now: self.clock.now().to_f64().unwrap_or(f64::NAN),
                requested: at.to_f64().unwrap_or(f64::NAN),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry { at, seq, event });
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: T, event: E) -> Result<EventHandle, SimError> {
        let at = self.clock.now() + delay;
        self.schedule(at, event)
    }

    /// Cancels a pending event. Returns `false` if it already ran or was
    /// cancelled before.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq || self.cancelled.contains(&handle.0) {
            return false;
        }
        if !self.heap.iter().any(|e| e.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    /// Time of the next live event, if any.
    pub fn peek_time(&mut self) -> Option<T> {
        self.skip_cancelled();
        self.heap.peek().map(|e| e.at)
    }

    fn skip_cancelled(&mut self) {
        while let Some(top) = self.heap.peek() {
            if self.cancelled.remove(&top.seq) {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Pops the next event with timestamp `<= t_end`, advancing the clock to
    /// its timestamp.
    pub fn next_until(&mut self, t_end: T) -> Option<(T, E)> {
        self.skip_cancelled();
        match self.heap.peek() {
            Some(top) if top.at <= t_end => {}
            _ => return None,
        }
        let entry = self.heap.pop()?;
        // Entries are never earlier than the clock: schedule() guards it.
        self.clock.now = entry.at;
        self.executed += 1;
        Some((entry.at, entry.event))
    }

    /// Executes every event with timestamp `<= t_end` through `handler`, then
    /// sets the clock to `t_end`. Returns the number of executed events.
    pub fn run_until<F>(&mut self, t_end: T, mut handler: F) -> Result<u64, SimError>
    where
        F: FnMut(&mut Self, T, E) -> Result<(), SimError>,
    {
        if !(t_end >= self.clock.now()) {
            return Err(SimError::TimeReversal {
                now: self.clock.now().to_f64().unwrap_or(f64::NAN),
                requested: t_end.to_f64().unwrap_or(f64::NAN),
            });
        }
        let mut count = 0;
        while let Some((t, ev)) = self.next_until(t_end) {
            handler(self, t, ev)?;
            count += 1;
        }
        self.clock.advance_to(t_end)?;
        Ok(count)
    }
}

impl<T: Float, E> Default for EventCalendar<T, E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Identifies one random stream: a base seed plus a stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub stream: u64,
}

/// Random number stream for one process. ChaCha8 keyed by the seed, with the
/// stream index selecting an independent keystream.
pub type RngStream = ChaCha8Rng;

pub fn derive_stream(seed: u64, stream: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream-id layout: devices take two streams each (traffic, access), cell
/// processes live above `CELL_STREAM_BASE`.
pub const CELL_STREAM_BASE: u64 = 1 << 40;

pub fn device_traffic_stream(device: u32) -> u64 {
    2 * u64::from(device)
}

pub fn device_access_stream(device: u32) -> u64 {
    2 * u64::from(device) + 1
}
