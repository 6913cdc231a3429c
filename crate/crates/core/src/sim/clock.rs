//! Drifting hardware clocks with analytically computed ticks.
//!
//! A clock is a sequence of segments; within one segment every tick period
//! is the same integer number of sim units. Segments are created lazily as
//! queries move forward and dropped once simulated time has passed them.

use std::collections::VecDeque;

use crate::ring::{Ring, RingValue};

pub type SimTime = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub index: u64,
    /// Absolute tick count at `start_time`.
    pub start_tick: u64,
    pub start_time: SimTime,
    pub period: i64,
}

#[derive(Debug, Clone)]
pub struct HwClock {
    ring: Ring,
    h0: RingValue,
    seg_len: u64,
    segs: VecDeque<Segment>,
}

impl HwClock {
    /// `first_tick` is the time of tick 1, in `(0, first_period]`.
    pub fn new(ring: Ring, h0: RingValue, seg_len: u64, first_tick: SimTime, first_period: i64) -> Self {
        assert!(seg_len > 0 && first_period > 0);
        let mut segs = VecDeque::new();
        segs.push_back(Segment {
            index: 0,
            start_tick: 0,
            start_time: first_tick - first_period,
            period: first_period,
        });
        HwClock { ring, h0, seg_len, segs }
    }

    pub fn h0(&self) -> RingValue {
        self.h0
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segs.iter()
    }

    fn end_time(s: &Segment, seg_len: u64) -> SimTime {
        s.start_time + seg_len as i64 * s.period
    }

    /// Appends segments until the last one ends after `t`, asking `period`
    /// for each new segment's tick period. Returns the new segments.
    pub fn extend_to_time(&mut self, t: SimTime, mut period: impl FnMut(u64) -> i64) -> Vec<Segment> {
        let mut added = Vec::new();
        loop {
            let last = *self.segs.back().expect("at least one segment");
            if Self::end_time(&last, self.seg_len) > t {
                return added;
            }
            added.push(self.push_next(&last, period(last.index + 1)));
        }
    }

    /// Like [`extend_to_time`](Self::extend_to_time) but up to an absolute tick count.
    pub fn extend_to_tick(&mut self, k: u64, mut period: impl FnMut(u64) -> i64) -> Vec<Segment> {
        let mut added = Vec::new();
        loop {
            let last = *self.segs.back().expect("at least one segment");
            if last.start_tick + self.seg_len > k {
                return added;
            }
            added.push(self.push_next(&last, period(last.index + 1)));
        }
    }

    fn push_next(&mut self, last: &Segment, period: i64) -> Segment {
        assert!(period > 0);
        let s = Segment {
            index: last.index + 1,
            start_tick: last.start_tick + self.seg_len,
            start_time: Self::end_time(last, self.seg_len),
            period,
        };
        self.segs.push_back(s);
        s
    }

    /// Drops segments that end at or before `t`.
    pub fn prune_before(&mut self, t: SimTime) {
        while self.segs.len() > 1 && self.segs[1].start_time <= t {
            self.segs.pop_front();
        }
    }

    /// Number of ticks at or before `t`. The covering segment must exist.
    pub fn count(&self, t: SimTime) -> u64 {
        let s = self
            .segs
            .iter()
            .rev()
            .find(|s| s.start_time <= t)
            .unwrap_or_else(|| panic!("clock queried at {t} before its retained history"));
        debug_assert!(t < Self::end_time(s, self.seg_len) || std::ptr::eq(s, self.segs.back().unwrap()));
        let k = ((t - s.start_time) / s.period) as u64;
        debug_assert!(k <= self.seg_len || std::ptr::eq(s, self.segs.back().unwrap()));
        s.start_tick + k
    }

    /// Time of absolute tick `k >= 1`. The covering segment must exist.
    pub fn time_of_tick(&self, k: u64) -> SimTime {
        let s = self
            .segs
            .iter()
            .rev()
            .find(|s| s.start_tick <= k)
            .expect("tick inside retained history");
        s.start_time + (k - s.start_tick) as i64 * s.period
    }

    /// Hardware reading for an absolute tick count.
    pub fn reading(&self, count: u64) -> RingValue {
        self.ring.reduce(self.h0.get() as i128 + count as i128)
    }

    /// `H(t)`.
    pub fn read(&self, t: SimTime) -> RingValue {
        self.reading(self.count(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate_ticks() {
        let r = Ring::new(100).unwrap();
        let mut c = HwClock::new(r, 95.into(), 4, 10, 10);
        c.extend_to_time(200, |_| 10);
        assert_eq!(c.count(0), 0);
        assert_eq!(c.count(9), 0);
        assert_eq!(c.count(10), 1);
        assert_eq!(c.count(59), 5);
        assert_eq!(c.read(59).get(), 0);
        assert_eq!(c.time_of_tick(7), 70);
    }

    #[test]
    fn variable_segments_roundtrip() {
        let r = Ring::new(1000).unwrap();
        let mut c = HwClock::new(r, 0.into(), 3, 5, 7);
        let periods = [7, 9, 8, 11, 7, 10];
        c.extend_to_tick(17, |i| periods[i as usize % periods.len()]);
        for k in 1..=17u64 {
            let t = c.time_of_tick(k);
            assert_eq!(c.count(t), k);
            assert_eq!(c.count(t - 1), k - 1);
        }
        let before = c.time_of_tick(12);
        c.prune_before(before);
        assert_eq!(c.count(before), 12);
    }
}
