//! Circular clock algebra over `[[tau_max]]`.
//!
//! Every clock, record and offset in the protocol lives on a ring of
//! `tau_max` ticks. This module provides modular addition/subtraction, ring
//! distance, a deterministic circular ordering and the ring median built on
//! top of it. All arithmetic is exact integer arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RingError {
    #[error("ring modulus must be at least 2, got {0}")]
    BadModulus(u64),
    #[error("operand {value} out of range for modulus {modulus}")]
    OutOfRange { value: u64, modulus: u64 },
    #[error("operation requires a non-empty multiset")]
    Empty,
}

/// A tick value on the clock ring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RingValue(u64);

impl RingValue {
    pub const fn new(v: u64) -> Self {
        RingValue(v)
    }

    pub const fn get(self) -> u64 {
        self.0
    }
}

impl From<u64> for RingValue {
    fn from(v: u64) -> Self {
        RingValue(v)
    }
}

impl fmt::Display for RingValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// The ring `[[modulus]]` together with its operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ring {
    modulus: u64,
}

impl Ring {
    pub fn new(modulus: u64) -> Result<Self, RingError> {
        if modulus < 2 {
            return Err(RingError::BadModulus(modulus));
        }
        Ok(Ring { modulus })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Validates that `v` is a member of the ring.
    pub fn value(&self, v: u64) -> Result<RingValue, RingError> {
        if v >= self.modulus {
            Err(RingError::OutOfRange {
                value: v,
                modulus: self.modulus,
            })
        } else {
            Ok(RingValue(v))
        }
    }

    /// Reduces any integer (possibly negative) onto the ring.
    pub fn reduce(&self, v: i128) -> RingValue {
        RingValue(v.rem_euclid(self.modulus as i128) as u64)
    }

    fn check(&self, v: RingValue) -> Result<(), RingError> {
        self.value(v.0).map(|_| ())
    }

    pub fn wrap_add(&self, a: RingValue, b: RingValue) -> Result<RingValue, RingError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.add(a, b))
    }

    pub fn wrap_sub(&self, a: RingValue, b: RingValue) -> Result<RingValue, RingError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.sub(a, b))
    }

    pub fn ring_dist(&self, a: RingValue, b: RingValue) -> Result<u64, RingError> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.dist(a, b))
    }

    /// `a ⊕ b`. Operands are assumed to be ring members.
    #[inline]
    pub fn add(&self, a: RingValue, b: RingValue) -> RingValue {
        debug_assert!(a.0 < self.modulus && b.0 < self.modulus);
        let s = a.0 + b.0;
        RingValue(if s >= self.modulus { s - self.modulus } else { s })
    }

    /// `a ⊕ k` for an arbitrary (signed) shift.
    #[inline]
    pub fn shift(&self, a: RingValue, k: i64) -> RingValue {
        self.reduce(a.0 as i128 + k as i128)
    }

    /// `a ⊖ b`, always in `[0, modulus)`.
    #[inline]
    pub fn sub(&self, a: RingValue, b: RingValue) -> RingValue {
        debug_assert!(a.0 < self.modulus && b.0 < self.modulus);
        RingValue(if a.0 >= b.0 {
            a.0 - b.0
        } else {
            a.0 + self.modulus - b.0
        })
    }

    /// Ring distance `min(a ⊖ b, b ⊖ a)`.
    #[inline]
    pub fn dist(&self, a: RingValue, b: RingValue) -> u64 {
        let d = self.sub(a, b).0;
        d.min(self.modulus - d)
    }

    /// Signed difference `a - b` mapped into `(-modulus/2, modulus/2]`.
    #[inline]
    pub fn signed_diff(&self, a: RingValue, b: RingValue) -> i64 {
        let d = self.sub(a, b).0;
        if d * 2 > self.modulus {
            d as i64 - self.modulus as i64
        } else {
            d as i64
        }
    }

    /// Orders a multiset along the ring.
    ///
    /// The ring is cut at the largest gap between circularly adjacent values;
    /// the result ascends along the remaining arc. Among equally large gaps the
    /// one whose end value is smallest wins, so a set that is already spread
    /// evenly comes back in plain ascending order.
    pub fn circ_sort(&self, values: &[RingValue]) -> Result<Vec<RingValue>, RingError> {
        if values.is_empty() {
            return Err(RingError::Empty);
        }
        for v in values {
            self.check(*v)?;
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let start = self.cut_index(&sorted);
        sorted.rotate_left(start);
        Ok(sorted)
    }

    /// Index (into an ascending slice) of the first element after the cut.
    fn cut_index(&self, sorted: &[RingValue]) -> usize {
        let n = sorted.len();
        if sorted[0] == sorted[n - 1] {
            return 0;
        }
        // the gap ending at sorted[j] starts at sorted[j-1], cyclically;
        // strict > on an ascending scan keeps the smallest end value on ties
        let mut best = 0usize;
        let mut best_gap = 0u64;
        for j in 0..n {
            let gap = self.sub(sorted[j], sorted[(j + n - 1) % n]).0;
            if gap > best_gap {
                best_gap = gap;
                best = j;
            }
        }
        best
    }

    /// Median of a multiset on the ring: lower-middle element after `circ_sort`.
    pub fn ring_med(&self, values: &[RingValue]) -> Result<RingValue, RingError> {
        let sorted = self.circ_sort(values)?;
        Ok(sorted[(sorted.len() - 1) / 2])
    }

    /// Ring median of the present entries, `None` when all are absent.
    pub fn med_present<I>(&self, values: I) -> Option<RingValue>
    where
        I: IntoIterator<Item = Option<RingValue>>,
    {
        let v: Vec<RingValue> = values.into_iter().flatten().collect();
        if v.is_empty() {
            None
        } else {
            self.ring_med(&v).ok()
        }
    }

    /// Length of the smallest arc covering all values (`modulus - largest gap`).
    pub fn spread(&self, values: &[RingValue]) -> u64 {
        if values.len() < 2 {
            return 0;
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let mut max_gap = self.sub(sorted[0], sorted[n - 1]).0;
        if sorted[0] == sorted[n - 1] {
            return 0;
        }
        for j in 1..n {
            max_gap = max_gap.max(sorted[j].0 - sorted[j - 1].0);
        }
        self.modulus - max_gap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(v: &[u64]) -> Vec<RingValue> {
        v.iter().copied().map(RingValue::new).collect()
    }

    #[test]
    fn add_sub_examples() {
        let r = Ring::new(100).unwrap();
        assert_eq!(r.wrap_add(90.into(), 20.into()).unwrap().get(), 10);
        assert_eq!(r.wrap_add(0.into(), 0.into()).unwrap().get(), 0);
        let r1000 = Ring::new(1000).unwrap();
        assert_eq!(r1000.wrap_add(999.into(), 1.into()).unwrap().get(), 0);

        assert_eq!(r.wrap_sub(10.into(), 90.into()).unwrap().get(), 20);
        assert_eq!(r.wrap_sub(5.into(), 5.into()).unwrap().get(), 0);
        assert_eq!(r1000.wrap_sub(0.into(), 1.into()).unwrap().get(), 999);
    }

    #[test]
    fn dist_examples() {
        let r = Ring::new(100).unwrap();
        assert_eq!(r.ring_dist(95.into(), 5.into()).unwrap(), 10);
        assert_eq!(r.ring_dist(5.into(), 5.into()).unwrap(), 0);
        assert_eq!(r.ring_dist(0.into(), 50.into()).unwrap(), 50);
    }

    #[test]
    fn operand_checks() {
        assert_eq!(Ring::new(1), Err(RingError::BadModulus(1)));
        let r = Ring::new(100).unwrap();
        assert!(matches!(
            r.wrap_add(100.into(), 1.into()),
            Err(RingError::OutOfRange { value: 100, .. })
        ));
        assert!(r.ring_dist(3.into(), 200.into()).is_err());
        assert_eq!(r.circ_sort(&[]), Err(RingError::Empty));
        assert_eq!(r.ring_med(&[]), Err(RingError::Empty));
    }

    #[test]
    fn circ_sort_examples() {
        let r = Ring::new(100).unwrap();
        assert_eq!(r.circ_sort(&rv(&[2, 98, 4])).unwrap(), rv(&[98, 2, 4]));
        assert_eq!(r.circ_sort(&rv(&[7, 7, 7])).unwrap(), rv(&[7, 7, 7]));
        assert_eq!(
            r.circ_sort(&rv(&[50, 0, 75, 25])).unwrap(),
            rv(&[0, 25, 50, 75])
        );
    }

    #[test]
    fn median_examples() {
        let r = Ring::new(100).unwrap();
        assert_eq!(r.ring_med(&rv(&[10, 12, 14])).unwrap().get(), 12);
        assert_eq!(r.ring_med(&rv(&[98, 2, 4])).unwrap().get(), 2);
        assert_eq!(r.ring_med(&rv(&[1, 3, 5, 7])).unwrap().get(), 3);
    }

    #[test]
    fn signed_diff_and_spread() {
        let r = Ring::new(100).unwrap();
        assert_eq!(r.signed_diff(2.into(), 98.into()), 4);
        assert_eq!(r.signed_diff(98.into(), 2.into()), -4);
        assert_eq!(r.spread(&rv(&[98, 2, 4])), 6);
        assert_eq!(r.spread(&rv(&[5, 5])), 0);
        assert_eq!(r.spread(&rv(&[0, 50])), 50);
    }
}
