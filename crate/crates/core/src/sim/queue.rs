//! Deterministic event queue ordered by `(time, node, kind rank, insertion)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::clock::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventKey {
    pub time: SimTime,
    pub node: u32,
    pub rank: u8,
    pub seq: u64,
}

struct Entry<E> {
    key: EventKey,
    ev: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event scheduled at {at} but the clock is already at {now}")]
pub struct PastEvent {
    pub at: SimTime,
    pub now: SimTime,
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, at: SimTime, node: u32, rank: u8, ev: E) -> Result<EventKey, PastEvent> {
        if at < self.now {
            return Err(PastEvent { at, now: self.now });
        }
        let key = EventKey {
            time: at,
            node,
            rank,
            seq: self.seq,
        };
        self.seq += 1;
        self.heap.push(Entry { key, ev });
        Ok(key)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.key.time)
    }

    /// Pops the next event if it is due at or before `until`.
    pub fn pop_until(&mut self, until: SimTime) -> Option<(EventKey, E)> {
        if self.heap.peek()?.key.time > until {
            return None;
        }
        let e = self.heap.pop()?;
        self.now = e.key.time;
        Some((e.key, e.ev))
    }
}
