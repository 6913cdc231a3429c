//! Fault-tolerant computational core: MSR reduce/select/mean, the
//! deterministic and randomized averaging functions, the accuracy and
//! majority filters and the two guarded conditions.

use num_rational::Rational64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Params;
use crate::ring::{Ring, RingValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FtError {
    #[error("fault budget exceeded: {len} values cannot tolerate f = {f}")]
    FaultBudget { len: usize, f: usize },
    #[error("insufficient data: {usable} usable columns, need {needed}")]
    InsufficientData { usable: usize, needed: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

/// Dense `n1 x n0` grid of optional entries; row = plane, column = MES.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    cells: Vec<Option<T>>,
}

impl<T: Copy> Matrix<T> {
    pub fn new(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            cells: vec![None; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Option<T>>>) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged matrix");
        Matrix {
            rows: n,
            cols: m,
            cells: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize) -> Option<T> {
        self.cells[p * self.cols + i]
    }

    #[inline]
    pub fn set(&mut self, p: usize, i: usize, v: Option<T>) {
        self.cells[p * self.cols + i] = v;
    }

    pub fn row(&self, p: usize) -> &[Option<T>] {
        &self.cells[p * self.cols..(p + 1) * self.cols]
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = Option<T>> + '_ {
        (0..self.rows).map(move |p| self.get(p, i))
    }

    pub fn clear(&mut self) {
        self.cells.iter_mut().for_each(|c| *c = None);
    }
}

pub type ClockMatrix = Matrix<RingValue>;
pub type MsgMatrix = Matrix<RingValue>;
/// Accuracy counters; an absent entry counts as 0.
pub type AccMatrix = Matrix<u32>;

/// The subset of parameters the core functions need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FtParams {
    pub ring: Ring,
    pub n0: usize,
    pub n1: usize,
    pub f0: usize,
    pub f1: usize,
    pub a0: u32,
    pub eps0: u64,
    pub eps1: u64,
    pub eps2: u64,
    pub t: u64,
    pub acc_hw_threshold: u64,
}

impl FtParams {
    pub fn from_params(p: &Params) -> Self {
        let d = &p.derived;
        FtParams {
            ring: d.ring,
            n0: p.system.n0,
            n1: p.system.n1,
            f0: p.system.f0,
            f1: p.system.f1,
            a0: p.system.a0,
            eps0: d.eps0,
            eps1: d.eps1,
            eps2: d.eps2,
            t: d.t,
            acc_hw_threshold: d.acc_hw_threshold,
        }
    }
}

/// Drops the `f` smallest and `f` largest values in circular order.
pub fn msr_reduce(ring: &Ring, values: &[RingValue], f: usize) -> Result<Vec<RingValue>, FtError> {
    if values.len() <= 2 * f {
        return Err(FtError::FaultBudget { len: values.len(), f });
    }
    let sorted = ring.circ_sort(values).expect("non-empty and in range");
    Ok(sorted[f..sorted.len() - f].to_vec())
}

/// Keeps the elements at positions `0, f, 2f, ...`.
pub fn msr_select(values: &[RingValue], f: usize) -> Result<Vec<RingValue>, FtError> {
    if values.is_empty() {
        return Err(FtError::FaultBudget { len: 0, f });
    }
    Ok(values.iter().copied().step_by(f.max(1)).collect())
}

/// Rounded mean of values listed in arc order starting at `values[0]`.
///
/// Ties round toward the arc start.
pub fn circular_mean(ring: &Ring, values: &[RingValue]) -> RingValue {
    let base = values[0];
    let len = values.len() as i128;
    let sum: i128 = values.iter().map(|v| ring.sub(*v, base).get() as i128).sum();
    // nearest integer to sum/len, halves rounded down
    let num = 2 * sum - len;
    let den = 2 * len;
    let q = num.div_euclid(den) + i128::from(num.rem_euclid(den) != 0);
    ring.reduce(base.get() as i128 + q)
}

/// Ring median of every column with at least `n1 - f1` present entries.
pub fn column_medians(c: &ClockMatrix, p: &FtParams) -> Vec<RingValue> {
    let need = p.n1 - p.f1;
    let mut out = Vec::with_capacity(c.cols());
    let mut buf = Vec::with_capacity(c.rows());
    for i in 0..c.cols() {
        buf.clear();
        buf.extend(c.column(i).flatten());
        if buf.len() >= need && !buf.is_empty() {
            out.push(p.ring.ring_med(&buf).expect("non-empty"));
        }
    }
    out
}

/// Deterministic fault-tolerant average of a clock matrix.
pub fn fta(c: &ClockMatrix, p: &FtParams) -> Result<RingValue, FtError> {
    let med = column_medians(c, p);
    let needed = 2 * p.f0 + 1;
    if med.len() < needed {
        return Err(FtError::InsufficientData {
            usable: med.len(),
            needed,
        });
    }
    fta_of_medians(&p.ring, &med, p.f0)
}

/// Reduce, select and average an already collapsed vector.
pub fn fta_of_medians(ring: &Ring, med: &[RingValue], f0: usize) -> Result<RingValue, FtError> {
    let reduced = msr_reduce(ring, med, f0)?;
    let selected = msr_select(&reduced, f0)?;
    Ok(circular_mean(ring, &selected))
}

/// Which branch the randomized function took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RftBranch {
    Fta,
    /// Uniform pick; index 0..n1 is a row median, n1 is `c_pre`.
    Pick(usize),
}

/// Draws `true` with exact probability `prob`.
pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, prob: Rational64) -> bool {
    let den = *prob.denom();
    let num = *prob.numer();
    if num <= 0 {
        // still consume one draw so the stream position does not depend on prob
        let _ = rng.gen::<u64>();
        return false;
    }
    rng.gen_range(0..den) < num
}

/// Randomized fault-tolerant function for three planes.
///
/// With probability `p0` the result is [`fta`]; otherwise one of the three
/// row medians or `c_pre`, uniformly. An empty row contributes `c_pre`.
pub fn rft<R: Rng + ?Sized>(
    c: &ClockMatrix,
    c_pre: RingValue,
    p0: Rational64,
    rng: &mut R,
    p: &FtParams,
) -> Result<(RingValue, RftBranch), FtError> {
    if p.n1 != 3 || c.rows() != 3 {
        return Err(FtError::Unsupported(format!(
            "randomized averaging is defined for n1 = 3 only (n1 = {})",
            p.n1
        )));
    }
    if bernoulli(rng, p0) {
        return fta(c, p).map(|v| (v, RftBranch::Fta));
    }
    let k = rng.gen_range(0..4usize);
    let v = if k < 3 {
        p.ring.med_present(c.row(k).iter().copied()).unwrap_or(c_pre)
    } else {
        c_pre
    };
    Ok((v, RftBranch::Pick(k)))
}

/// Basic accuracy condition over one record pair.
pub fn accuracy_check(
    m_curr: RingValue,
    m_pre: RingValue,
    h_curr: RingValue,
    h_pre: RingValue,
    p: &FtParams,
) -> bool {
    let r = &p.ring;
    let t = r.reduce(p.t as i128);
    r.dist(m_curr, r.add(m_pre, t)) <= 2 * p.eps0 && r.dist(h_curr, r.add(h_pre, t)) <= p.acc_hw_threshold
}

pub fn update_acc_counter(counter: u32, ok: bool, a0: u32) -> u32 {
    if ok {
        (counter + 1).min(a0)
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResult {
    pub p_acc: Vec<usize>,
    pub p_maj: Vec<usize>,
    pub p_acma: Vec<usize>,
    pub majority_values: Vec<Option<RingValue>>,
}

/// Accuracy filter on `A` and majority filter on `M`.
pub fn filters(m: &MsgMatrix, a: &AccMatrix, p: &FtParams) -> FilterResult {
    let need = p.n0 - p.f0;
    let mut res = FilterResult {
        p_acc: Vec::new(),
        p_maj: Vec::new(),
        p_acma: Vec::new(),
        majority_values: vec![None; m.rows()],
    };
    for row in 0..m.rows() {
        let acc_ok = a.row(row).iter().filter(|v| **v == Some(p.a0)).count() >= need;
        if acc_ok {
            res.p_acc.push(row);
        }
        let maj = p.ring.med_present(m.row(row).iter().copied()).filter(|mp| {
            m.row(row).iter().filter(|v| **v == Some(*mp)).count() >= need
        });
        if let Some(mp) = maj {
            res.p_maj.push(row);
            res.majority_values[row] = Some(mp);
            if acc_ok {
                res.p_acma.push(row);
            }
        }
    }
    res
}

/// Calls `f` on every `k`-subset of `items`, stopping early when it returns true.
fn any_subset(items: &[usize], k: usize, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        let left = k - cur.len();
        for j in start..=items.len().saturating_sub(left) {
            if j >= items.len() {
                break;
            }
            cur.push(items[j]);
            if rec(items, k, j + 1, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    if k > items.len() {
        return false;
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), f)
}

/// Number of columns whose entries in every row of `rows` lie in `[anchor, anchor + width]`.
fn columns_in_window(c: &ClockMatrix, rows: &[usize], anchor: RingValue, width: u64, ring: &Ring) -> usize {
    (0..c.cols())
        .filter(|&i| {
            rows.iter().all(|&r| match c.get(r, i) {
                Some(v) => ring.sub(v, anchor).get() <= width,
                None => false,
            })
        })
        .count()
}

/// Stabilization condition.
///
/// Equivalent to pairwise closeness as long as `eps1 < tau_max / 3`, which
/// validation guarantees through `tau_max >= 4T`.
pub fn check_stb(c: &ClockMatrix, p_acma: &[usize], p: &FtParams) -> bool {
    let k = p.n1 - p.f1;
    let need = p.n0 - p.f0;
    let ring = p.ring;
    // a qualifying larger row set contains a qualifying set of size exactly k
    any_subset(p_acma, k.max(1), &mut |rows| {
        rows.iter().any(|&r| {
            (0..c.cols()).any(|i| match c.get(r, i) {
                Some(a) => columns_in_window(c, rows, a, p.eps1, &ring) >= need,
                None => false,
            })
        })
    })
}

/// Weak-reference condition; returns the window center if one qualifies.
pub fn check_weak(c: &ClockMatrix, p: &FtParams) -> Option<RingValue> {
    let k = (p.n1 - p.f1).max(1);
    let need = (p.n0 - 2 * p.f0).max(1);
    let half = p.eps2 / 2;
    let ring = p.ring;
    let mut anchors: Vec<RingValue> = (0..c.rows()).flat_map(|r| c.row(r).iter().flatten().copied()).collect();
    if anchors.is_empty() {
        return None;
    }
    anchors = ring.circ_sort(&anchors).expect("non-empty");
    anchors.dedup();
    let planes: Vec<usize> = (0..c.rows()).collect();
    for a in anchors {
        if any_subset(&planes, k, &mut |rows| columns_in_window(c, rows, a, 2 * half, &ring) >= need) {
            return Some(ring.shift(a, half as i64));
        }
    }
    None
}
