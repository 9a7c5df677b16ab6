use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

/// Simulation time in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub fn from_secs(s: f64) -> Self {
        SimTime((s.max(0.0) * 1e9).round() as u64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 * 1e-9
    }
}

#[derive(Debug, Clone)]
pub struct Event<A> {
    pub time: SimTime,
    /// Insertion counter; breaks ties between equal times.
    pub ordinal: u64,
    pub action: A,
}

impl<A> Event<A> {
    pub fn time_s(&self) -> f64 {
        self.time.as_secs()
    }
}

impl<A> PartialEq for Event<A> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.ordinal) == (other.time, other.ordinal)
    }
}

impl<A> Eq for Event<A> {}

impl<A> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Event<A> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.ordinal).cmp(&(other.time, other.ordinal))
    }
}

/// Min-queue over `(time, ordinal)`.
#[derive(Debug)]
pub struct EventQueue<A> {
    heap: BinaryHeap<Reverse<Event<A>>>,
    next_ordinal: u64,
    now: SimTime,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_ordinal: 0, now: SimTime(0) }
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedule at `time`; times in the past are moved to now.
    pub fn schedule(&mut self, time: SimTime, action: A) -> u64 {
        let ordinal = self.next_ordinal;
        self.next_ordinal += 1;
        let time = time.max(self.now);
        self.heap.push(Reverse(Event { time, ordinal, action }));
        ordinal
    }

    pub fn schedule_in(&mut self, delay_s: f64, action: A) -> u64 {
        let t = SimTime(self.now.0 + SimTime::from_secs(delay_s).0);
        self.schedule(t, action)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn pop(&mut self) -> Option<Event<A>> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.time;
        Some(e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
