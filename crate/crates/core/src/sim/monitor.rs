//! Online precision/accuracy checker and stabilization detector.
//!
//! Every sample carries the clocks of all monitored nodes at one instant.
//! Precision is checked per sample. Accuracy is checked over every sample
//! pair of the same node at most `delta` apart, exactly, using sliding-window
//! extrema of `den*U -/+ num*t` where `U = C*T_H - t` on the unwrapped clock.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::clock::SimTime;
use crate::ring::{Ring, RingValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorConfig {
    pub tick_nominal: i64,
    pub rho_num: i64,
    pub rho_den: i64,
    pub eps0: u64,
    /// Longest pair distance checked for accuracy, in sim units.
    pub delta: SimTime,
    pub window_sim: SimTime,
    pub horizon_windows: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Precision { spread: u64 },
    Accuracy { node: usize, since: SimTime },
}

#[derive(Debug, Clone, Default)]
struct Track {
    last: Option<RingValue>,
    unwrapped: i128,
    vmin: VecDeque<(SimTime, i128)>,
    wmax: VecDeque<(SimTime, i128)>,
}

#[derive(Debug, Clone)]
pub struct SyncMonitor {
    cfg: MonitorConfig,
    ring: Ring,
    tracks: Vec<Track>,
    /// Samples before this instant are outside the current candidate interval.
    start: SimTime,
    pub precision_violations: u64,
    pub accuracy_violations: u64,
    pub samples: u64,
    pub max_spread: u64,
    pub max_spread_since_start: u64,
    buf: Vec<RingValue>,
}

impl SyncMonitor {
    pub fn new(cfg: MonitorConfig, ring: Ring, nodes: usize) -> Self {
        SyncMonitor {
            cfg,
            ring,
            tracks: vec![Track::default(); nodes],
            start: 0,
            precision_violations: 0,
            accuracy_violations: 0,
            samples: 0,
            max_spread: 0,
            max_spread_since_start: 0,
            buf: Vec::new(),
        }
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.cfg
    }

    pub fn violations(&self) -> u64 {
        self.precision_violations + self.accuracy_violations
    }

    /// First window whose start lies inside the current candidate interval.
    pub fn candidate_window(&self) -> u64 {
        (self.start + self.cfg.window_sim - 1).div_euclid(self.cfg.window_sim).max(0) as u64
    }

    /// Stabilization window, once the confirmation horizon has passed cleanly.
    pub fn stabilized_at(&self, now: SimTime) -> Option<u64> {
        let w = self.candidate_window();
        let confirm = (w + self.cfg.horizon_windows) as i64 * self.cfg.window_sim;
        (now >= confirm).then_some(w)
    }

    fn restart(&mut self, from: SimTime) {
        if from > self.start {
            self.start = from;
            self.max_spread_since_start = 0;
        }
    }

    /// Feeds one sample; `clocks[k]` is the clock of monitored node `k` at `t`.
    pub fn observe(&mut self, t: SimTime, clocks: &[RingValue]) -> Vec<Violation> {
        debug_assert_eq!(clocks.len(), self.tracks.len());
        self.samples += 1;
        let mut out = Vec::new();
        let spread = self.ring.spread(clocks);
        self.max_spread = self.max_spread.max(spread);
        let precise = spread <= self.cfg.eps0;
        if !precise {
            self.precision_violations += 1;
            out.push(Violation::Precision { spread });
            self.restart(t + 1);
        }

        let c = self.cfg;
        let k = c.rho_den as i128 * c.eps0 as i128 * c.tick_nominal as i128;
        for (node, &clk) in clocks.iter().enumerate() {
            let ring = self.ring;
            let tr = &mut self.tracks[node];
            tr.unwrapped += match tr.last {
                Some(prev) => ring.signed_diff(clk, prev) as i128,
                None => clk.get() as i128,
            };
            tr.last = Some(clk);
            if !precise {
                continue;
            }
            let u = tr.unwrapped * c.tick_nominal as i128 - t as i128;
            let v = c.rho_den as i128 * u - c.rho_num as i128 * t as i128;
            let w = c.rho_den as i128 * u + c.rho_num as i128 * t as i128;
            let lo = self.start.max(t - c.delta);
            while tr.vmin.front().is_some_and(|e| e.0 < lo) {
                tr.vmin.pop_front();
            }
            while tr.wmax.front().is_some_and(|e| e.0 < lo) {
                tr.wmax.pop_front();
            }
            // latest earlier sample that breaks the rate bound together with this one
            let mut since: Option<SimTime> = None;
            for e in tr.vmin.iter().take_while(|e| v - e.1 > k) {
                since = Some(since.map_or(e.0, |s| s.max(e.0)));
            }
            for e in tr.wmax.iter().take_while(|e| e.1 - w > k) {
                since = Some(since.map_or(e.0, |s| s.max(e.0)));
            }
            if let Some(s) = since {
                self.accuracy_violations += 1;
                out.push(Violation::Accuracy { node, since: s });
                while tr.vmin.front().is_some_and(|e| e.0 <= s) {
                    tr.vmin.pop_front();
                }
                while tr.wmax.front().is_some_and(|e| e.0 <= s) {
                    tr.wmax.pop_front();
                }
                if s + 1 > self.start {
                    self.start = s + 1;
                    self.max_spread_since_start = 0;
                }
            }
            while tr.vmin.back().is_some_and(|e| e.1 >= v) {
                tr.vmin.pop_back();
            }
            tr.vmin.push_back((t, v));
            while tr.wmax.back().is_some_and(|e| e.1 <= w) {
                tr.wmax.pop_back();
            }
            tr.wmax.push_back((t, w));
        }
        if precise {
            self.max_spread_since_start = self.max_spread_since_start.max(spread);
        }
        out
    }

    /// Convenience for callers holding clocks in another container.
    pub fn observe_iter(&mut self, t: SimTime, clocks: impl IntoIterator<Item = RingValue>) -> Vec<Violation> {
        let mut buf = std::mem::take(&mut self.buf);
        buf.clear();
        buf.extend(clocks);
        let out = self.observe(t, &buf);
        self.buf = buf;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> MonitorConfig {
        MonitorConfig {
            tick_nominal: 100,
            rho_num: 1,
            rho_den: 100,
            eps0: 5,
            delta: 10_000,
            window_sim: 1000,
            horizon_windows: 3,
        }
    }

    #[test]
    fn single_perfect_clock_is_synchronized() {
        let r = Ring::new(1 << 20).unwrap();
        let mut m = SyncMonitor::new(cfg(), r, 1);
        for k in 0..500i64 {
            assert!(m.observe(k * 100, &[RingValue::new(k as u64 + 7)]).is_empty());
        }
        assert_eq!(m.stabilized_at(499 * 100), Some(0));
    }

    #[test]
    fn constant_offset_beyond_precision() {
        let r = Ring::new(1 << 20).unwrap();
        let mut m = SyncMonitor::new(cfg(), r, 2);
        let v = m.observe(0, &[RingValue::new(10), RingValue::new(16)]);
        assert_eq!(v, vec![Violation::Precision { spread: 6 }]);
        assert!(m.observe(100, &[RingValue::new(11), RingValue::new(16)]).is_empty());
    }

    #[test]
    fn rate_violation_moves_start() {
        let r = Ring::new(1 << 20).unwrap();
        let mut m = SyncMonitor::new(cfg(), r, 1);
        // clock runs 10% fast: after 60 ticks of real time it is 6 ahead (> eps0 + rho*60)
        let mut found = false;
        for k in 0..200i64 {
            let c = (k * 11 / 10) as u64;
            if !m.observe(k * 100, &[RingValue::new(c)]).is_empty() {
                found = true;
            }
        }
        assert!(found);
        assert!(m.candidate_window() > 0);
    }

    #[test]
    fn wraparound_is_continuous() {
        let r = Ring::new(64).unwrap();
        let mut m = SyncMonitor::new(cfg(), r, 1);
        for k in 0..300i64 {
            assert!(m.observe(k * 100, &[RingValue::new((k % 64) as u64)]).is_empty());
        }
    }
}
