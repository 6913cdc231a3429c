//! Static system parameters, the TT-slot schedule, validation and every
//! derived protocol constant.
//!
//! Time comes in two units. *Ticks* count hardware-clock ticks and are what
//! the protocol sees. *Sim units* are the integer time base of the simulator;
//! one nominal tick lasts `tick_nominal` sim units.

use std::fmt;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio, Rational64};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ring::{Ring, RingValue};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configuration failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error("failed to parse configuration: {0}")]
    Parse(String),
    #[error("unknown configuration keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("failed to read configuration file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Exact rational read from a config value: an integer, `"a/b"`, or a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rational(pub Rational64);

impl Rational {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
            let d: i64 = d.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
            if d == 0 {
                return Err(format!("{s:?}: zero denominator"));
            }
            return Ok(Rational(Ratio::new(n, d)));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(b) => (true, b),
            None => (false, s),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() {
            return Err(format!("{s:?}: not a number"));
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 15 {
            return Err(format!("{s:?}: not a decimal number"));
        }
        let den = 10i64.pow(frac.len() as u32);
        let int_v: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|e| format!("{s:?}: {e}"))? };
        let frac_v: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|e| format!("{s:?}: {e}"))? };
        let num = int_v * den + frac_v;
        Ok(Rational(Ratio::new(if neg { -num } else { num }, den)))
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Rational(Ratio::from_integer(i))),
            Raw::Str(s) => Rational::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n0: usize,
    pub n1: usize,
    pub f0: usize,
    pub f1: usize,
    pub tau_max: u64,
    /// Nominal tick duration `T_H` in sim units.
    pub tick_nominal: i64,
    pub rho: Rational,
    /// Maximal message delay in sim units.
    pub d_max: i64,
    /// Minimal message delay in sim units (exclusive lower bound is 0).
    #[serde(default = "default_d_min")]
    pub d_min: i64,
    /// Maximal basic round cycle in ticks.
    pub t0: u64,
    pub a0: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps0: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps1: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps2: Option<u64>,
    /// Intra-plane round-start skew bound in sim units; defaults to `d_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_rnd: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Rational>,
}

fn default_d_min() -> i64 {
    1
}

/// One TT-slot as `[begin, end]` tick offsets from the round start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub begin: u64,
    pub end: u64,
}

impl Slot {
    pub const fn new(begin: u64, end: u64) -> Self {
        Slot { begin, end }
    }
}

impl Serialize for Slot {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.begin, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Slot {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Pair([u64; 2]),
            Named { begin: u64, end: u64 },
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Pair(v) => v.into(),
            Raw::Named { begin, end } => Slot::new(begin, end),
        })
    }
}

impl From<[u64; 2]> for Slot {
    fn from(v: [u64; 2]) -> Self {
        Slot::new(v[0], v[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TTSchedule {
    /// MES → plane clock-vector send slot.
    pub vc_send: Slot,
    /// MWS receive slot for the clock vectors.
    pub mc_recv: Slot,
    /// MWS clock broadcast slot.
    pub c_send: Slot,
    /// MES receive slot for the MWS clock.
    pub c_recv: Slot,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "pass");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Constants computed from [`SystemParams`] and [`TTSchedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedParams {
    pub ring: Ring,
    pub d_max_ticks: u64,
    /// Round-start skew bound rounded up to ticks.
    pub rnd_ticks: u64,
    pub eps_rnd: i64,
    pub eps0: u64,
    pub eps1: u64,
    pub eps2: u64,
    /// Nominal SIG cycle in ticks.
    pub t: u64,
    pub c0: u64,
    pub k0: u32,
    pub g0: u32,
    pub q0: Rational64,
    pub p0: Rational64,
    pub delta_tt0: RingValue,
    pub delta_tt1: RingValue,
    pub delta_tt2: RingValue,
    pub delta_tt3: RingValue,
    /// Hardware-clock conjunct of the accuracy condition, already rounded up to ticks.
    pub acc_hw_threshold: u64,
    pub q1_bound: BigRational,
    /// `1 / (2 e^2 (2 g0 + 1)(g0 + 1))`.
    pub q1_closed_form: f64,
    /// `T_max = 2T(1+rho)` in ticks.
    pub t_max_ticks: Rational64,
    /// `T_max` in sim units, rounded down.
    pub t_max_sim: i64,
    /// Length of one accounting window in sim units; equal to `t_max_sim`.
    pub window_sim: i64,
    /// Expected stabilization bound `2/q1 + g0` in windows.
    pub stb_exp_windows: f64,
    pub warnings: Vec<String>,
}

impl DerivedParams {
    pub fn q1_bound_f64(&self) -> f64 {
        big_to_f64(&self.q1_bound)
    }

    /// Lemma-style per-window resynchronization bound `2 q0 (1-q0)^g0`.
    pub fn resync_bound(&self) -> f64 {
        let q0 = r64_to_f64(self.q0);
        2.0 * q0 * (1.0 - q0).powi(self.g0 as i32)
    }
}

pub fn r64_to_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn big_to_f64(r: &BigRational) -> f64 {
    // scale to keep precision for tiny values
    let num = r.numer().to_f64().unwrap_or(f64::NAN);
    let den = r.denom().to_f64().unwrap_or(f64::NAN);
    if num.is_finite() && den.is_finite() {
        num / den
    } else {
        let bits = r.denom().bits().saturating_sub(900) as i64;
        let shift = BigInt::one() << bits;
        (r.numer() / &shift).to_f64().unwrap_or(0.0) / (r.denom() / &shift).to_f64().unwrap_or(f64::INFINITY)
    }
}

fn ceil_r(r: Rational64) -> i64 {
    r.ceil().to_integer()
}

fn floor_r(r: Rational64) -> i64 {
    r.floor().to_integer()
}

/// Smallest `k >= 1` with `base^k >= x`, exact in rational arithmetic.
fn ceil_log(base: u64, x: Rational64) -> (u32, bool) {
    if x <= Rational64::one() {
        return (1, true);
    }
    let mut k = 0u32;
    let mut pow = BigRational::one();
    let b = BigRational::from_integer(BigInt::from(base));
    let xb = BigRational::new(BigInt::from(*x.numer()), BigInt::from(*x.denom()));
    while pow < xb {
        pow *= &b;
        k += 1;
    }
    (k.max(1), false)
}

pub fn d_max_ticks(p: &SystemParams) -> u64 {
    // ceil(d_max / ((1 - rho) T_H))
    let one = Rational64::one();
    let denom = (one - p.rho.0) * Rational64::from_integer(p.tick_nominal);
    if denom <= Rational64::zero() {
        return u64::MAX;
    }
    ceil_r(Rational64::from_integer(p.d_max) / denom).max(0) as u64
}

/// Sim-time bounds for the instant of local slot offset `k` after a round anchor.
fn slot_time_bounds(p: &SystemParams, k: u64) -> (Rational64, Rational64) {
    let one = Rational64::one();
    let th = Rational64::from_integer(p.tick_nominal);
    let lo = Rational64::from_integer(k.saturating_sub(1) as i64) * (one - p.rho.0) * th;
    let hi = Rational64::from_integer(k as i64) * (one + p.rho.0) * th;
    (lo, hi)
}

/// Checks every structural invariant of a parameter set and schedule.
pub fn validate(p: &SystemParams, s: &TTSchedule) -> ValidationReport {
    let mut r = ValidationReport::default();
    if p.n0 <= 3 * p.f0 {
        r.fail(format!("n0 > 3*f0 violated (n0={}, f0={})", p.n0, p.f0));
    }
    if p.n1 <= 2 * p.f1 {
        r.fail(format!("n1 > 2*f1 violated (n1={}, f1={})", p.n1, p.f1));
    }
    let rho = p.rho.0;
    if rho < Rational64::zero() || rho >= Rational64::one() {
        r.fail(format!("0 <= rho < 1 violated (rho={})", p.rho));
    }
    if p.tick_nominal <= 0 {
        r.fail("tick_nominal > 0 violated");
    }
    if p.d_max <= 0 {
        r.fail("d_max > 0 violated");
    }
    if p.d_min <= 0 || p.d_min > p.d_max {
        r.fail(format!("0 < d_min <= d_max violated (d_min={})", p.d_min));
    }
    if p.a0 < 1 {
        r.fail("a0 >= 1 violated");
    }
    if p.tau_max < 2 {
        r.fail("tau_max >= 2 violated");
    }
    if let Some(e) = p.eps_rnd {
        if e < 0 {
            r.fail("eps_rnd >= 0 violated");
        }
    }
    for (name, v) in [("q0", p.q0), ("p0", p.p0)] {
        if let Some(v) = v {
            if v.0 < Rational64::zero() || v.0 > Rational64::one() {
                r.fail(format!("{name} must be a probability (got {v})"));
            }
        }
    }
    if !r.passed() {
        return r;
    }

    if p.eps1.is_none() || p.eps2.is_none() {
        if rho * Rational64::from_integer(8) >= Rational64::one() {
            r.fail("rho < 1/8 required when eps1/eps2 are defaulted");
            return r;
        }
    }
    let (eps0, eps1, eps2, t) = resolve_windows(p);
    if eps0 == 0 {
        r.fail("eps0 > 0 violated");
    }
    if eps1 < eps0 {
        r.fail(format!("eps1 >= eps0 violated (eps1={eps1}, eps0={eps0})"));
    }
    if eps2 < eps1 {
        r.fail(format!("eps2 >= eps1 violated (eps2={eps2}, eps1={eps1})"));
    }
    if p.tau_max < 4 * t {
        r.fail(format!("tau_max >= 4*T violated (tau_max={}, T={t})", p.tau_max));
    }

    // slot ordering within one round
    for (name, sl) in [
        ("vc_send", s.vc_send),
        ("mc_recv", s.mc_recv),
        ("c_send", s.c_send),
        ("c_recv", s.c_recv),
    ] {
        if sl.begin > sl.end {
            r.fail(format!("slot {name}: begin <= end violated"));
        }
    }
    let chain = [
        ("end(vc_send) <= end(mc_recv)", s.vc_send.end <= s.mc_recv.end),
        ("begin(mc_recv) <= begin(vc_send)", s.mc_recv.begin <= s.vc_send.begin),
        ("end(mc_recv) <= begin(c_send)", s.mc_recv.end <= s.c_send.begin),
        ("begin(c_recv) <= begin(c_send)", s.c_recv.begin <= s.c_send.begin),
        ("end(c_send) <= end(c_recv)", s.c_send.end <= s.c_recv.end),
        ("end(c_recv) <= T0", s.c_recv.end <= p.t0),
    ];
    for (name, ok) in chain {
        if !ok {
            r.fail(format!("schedule ordering {name} violated"));
        }
    }

    // every message sent in a send slot must land inside the matching receive slot
    let eps_rnd = Rational64::from_integer(p.eps_rnd.unwrap_or(p.d_max));
    let d_max = Rational64::from_integer(p.d_max);
    let d_min = Rational64::from_integer(p.d_min);
    let (_, mc_open_hi) = slot_time_bounds(p, s.mc_recv.begin);
    let (vc_lo, vc_hi) = slot_time_bounds(p, s.vc_send.begin);
    let (mc_close_lo, _) = slot_time_bounds(p, s.mc_recv.end);
    if mc_open_hi > vc_lo {
        r.fail("mc_recv must open before the earliest vc_send transmission");
    }
    if eps_rnd + vc_hi + d_max > mc_close_lo {
        r.fail("mc_recv closes before the latest vc_send arrival (widen the slot)");
    }
    let (_, cr_open_hi) = slot_time_bounds(p, s.c_recv.begin);
    let (cs_lo, cs_hi) = slot_time_bounds(p, s.c_send.begin);
    let (cr_close_lo, _) = slot_time_bounds(p, s.c_recv.end);
    if eps_rnd + cr_open_hi > cs_lo + d_min {
        r.fail("c_recv must open before the earliest c_send arrival");
    }
    if cs_hi + d_max > cr_close_lo {
        r.fail("c_recv closes before the latest c_send arrival (widen the slot)");
    }
    r
}

/// Resolves `(eps0, eps1, eps2, T)` including defaults.
///
/// `T = T0 + eps2` while the default `eps1` grows with `T`; the pair is the
/// least fixed point, reached by iterating from `T = T0`.
fn resolve_windows(p: &SystemParams) -> (u64, u64, u64, u64) {
    let rho = p.rho.0;
    let dmt = d_max_ticks(p) as i64;
    let eps0 = p.eps0.unwrap_or_else(|| {
        floor_r(Rational64::from_integer(3) * (Rational64::one() + rho) * Rational64::from_integer(dmt))
            .max(0) as u64
    });
    let mut t = p.t0;
    for _ in 0..10_000 {
        let eps1 = p.eps1.unwrap_or_else(|| {
            let v = Rational64::from_integer(2 * eps0 as i64)
                + Rational64::from_integer(4) * rho * Rational64::from_integer(t as i64)
                + Rational64::from_integer(2 * dmt);
            ceil_r(v) as u64
        });
        let eps2 = p.eps2.unwrap_or(2 * eps1);
        let next = p.t0 + eps2;
        if next == t {
            return (eps0, eps1, eps2, t);
        }
        t = next;
    }
    let eps1 = p.eps1.unwrap_or(0);
    (eps0, eps1, p.eps2.unwrap_or(2 * eps1), t)
}

/// `ceil((2 eps0 + 2 rho T + d_max_ticks) / (1 - rho)^2)`, evaluated exactly.
pub fn accuracy_hw_threshold(eps0: u64, rho: Rational64, t: u64, d_max_ticks: u64) -> u64 {
    let one = Rational64::one();
    let v = (Rational64::from_integer(2 * eps0 as i64)
        + Rational64::from_integer(2) * rho * Rational64::from_integer(t as i64)
        + Rational64::from_integer(d_max_ticks as i64))
        / ((one - rho) * (one - rho));
    ceil_r(v) as u64
}

/// Computes all derived constants. Requires `validate` to pass.
pub fn derive(p: &SystemParams, s: &TTSchedule) -> Result<DerivedParams, ConfigError> {
    let report = validate(p, s);
    if !report.passed() {
        return Err(ConfigError::Validation(report));
    }
    let mut warnings = Vec::new();
    let ring = Ring::new(p.tau_max).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let rho = p.rho.0;
    let one = Rational64::one();
    let (eps0, eps1, eps2, t) = resolve_windows(p);
    let dmt = d_max_ticks(p);
    let eps_rnd = p.eps_rnd.unwrap_or(p.d_max);
    let rnd_ticks = ceil_r(Rational64::from_integer(eps_rnd) / ((one - rho) * Rational64::from_integer(p.tick_nominal))) as u64;

    let c0 = if p.f0 == 0 {
        // no Byzantine MES: reduce/select are identities and one round suffices
        u64::MAX
    } else {
        ((p.n0 - 2 * p.f0 - 1) / p.f0) as u64 + 1
    };
    if c0 < 2 {
        return Err(ConfigError::Invalid(format!(
            "contraction base c0 = {c0} < 2; MSR cannot contract"
        )));
    }
    let tr = Rational64::from_integer(t as i64);
    let log_arg = (Rational64::from_integer(2 * eps2 as i64)
        + Rational64::from_integer(8) * rho * (one + rho) * tr)
        / Rational64::from_integer(eps0 as i64);
    let (k0, clamped) = if c0 == u64::MAX { (1, false) } else { ceil_log(c0, log_arg) };
    if clamped {
        warnings.push(format!(
            "eps0 >= 2*eps2 + 8*rho*(1+rho)*T (ratio {log_arg}); k0 set to 1"
        ));
    }
    let g0 = p.a0 + k0;
    let q0 = p.q0.map(|r| r.0).unwrap_or_else(|| Ratio::new(1, 2 * g0 as i64 + 1));
    let p0 = p.p0.map(|r| r.0).unwrap_or_else(|| one - Ratio::new(1, g0 as i64 + 1));

    let q1_bound = {
        let big = |r: Rational64| BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()));
        let (bq0, bp0) = (big(q0), big(p0));
        let bone = BigRational::one();
        let mut v = bq0.clone();
        v *= num_traits::pow(&bone - &bq0, 2 * g0 as usize);
        v *= num_traits::pow(bp0.clone(), g0 as usize);
        v *= &bone - &bp0;
        v / BigRational::from_integer(BigInt::from(2))
    };
    let q1_closed_form = 1.0
        / (2.0 * std::f64::consts::E.powi(2) * (2.0 * g0 as f64 + 1.0) * (g0 as f64 + 1.0));

    let delta = |a: u64, b: u64| ring.reduce(a as i128 - b as i128);
    let delta_tt0 = delta(s.c_send.end, s.c_recv.begin);
    let delta_tt1 = delta(s.c_send.end, s.vc_send.begin);
    let delta_tt2 = delta(s.c_recv.end, s.c_send.end);
    let delta_tt3 = delta(s.c_send.end, s.mc_recv.end);

    let acc_hw_threshold = accuracy_hw_threshold(eps0, rho, t, dmt);

    let t_max_ticks = Rational64::from_integer(2) * tr * (one + rho);
    let t_max_sim = floor_r(t_max_ticks * Rational64::from_integer(p.tick_nominal));
    let window_sim = t_max_sim;
    let q1f = big_to_f64(&q1_bound);
    let stb_exp_windows = if q1f > 0.0 { 2.0 / q1f + g0 as f64 } else { f64::INFINITY };

    Ok(DerivedParams {
        ring,
        d_max_ticks: dmt,
        rnd_ticks,
        eps_rnd,
        eps0,
        eps1,
        eps2,
        t,
        c0,
        k0,
        g0,
        q0,
        p0,
        delta_tt0,
        delta_tt1,
        delta_tt2,
        delta_tt3,
        acc_hw_threshold,
        q1_bound,
        q1_closed_form,
        t_max_ticks,
        t_max_sim,
        window_sim,
        stb_exp_windows,
        warnings,
    })
}

/// Parameters plus schedule plus everything derived from them.
#[derive(Debug, Clone)]
pub struct Params {
    pub system: SystemParams,
    pub schedule: TTSchedule,
    pub derived: DerivedParams,
}

impl Params {
    pub fn new(system: SystemParams, schedule: TTSchedule) -> Result<Self, ConfigError> {
        let derived = derive(&system, &schedule)?;
        Ok(Params {
            system,
            schedule,
            derived,
        })
    }

    pub fn ring(&self) -> Ring {
        self.derived.ring
    }

    pub fn n0(&self) -> usize {
        self.system.n0
    }

    pub fn n1(&self) -> usize {
        self.system.n1
    }
}

/// The desk-scale reference system: three planes, four MES, one fault of each kind.
pub fn reference_system() -> SystemParams {
    SystemParams {
        n0: 4,
        n1: 3,
        f0: 1,
        f1: 1,
        tau_max: 3616,
        tick_nominal: 1000,
        rho: Rational(Ratio::new(1, 1000)),
        d_max: 8000,
        d_min: 1,
        t0: 80,
        a0: 3,
        eps0: None,
        eps1: None,
        eps2: None,
        eps_rnd: Some(2000),
        q0: None,
        p0: None,
    }
}

pub fn reference_schedule() -> TTSchedule {
    TTSchedule {
        vc_send: Slot::new(0, 0),
        mc_recv: Slot::new(0, 14),
        c_send: Slot::new(48, 50),
        c_recv: Slot::new(44, 58),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n0: usize, f0: usize, n1: usize, f1: usize) -> SystemParams {
        SystemParams {
            n0,
            f0,
            n1,
            f1,
            ..reference_system()
        }
    }

    #[test]
    fn reference_validates() {
        let r = validate(&reference_system(), &reference_schedule());
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn fault_bounds() {
        let s = reference_schedule();
        assert!(validate(&params(4, 1, 3, 1), &s).passed());
        let r = validate(&params(3, 1, 3, 1), &s);
        assert!(r.violations.iter().any(|v| v.contains("n0 > 3*f0")), "{r}");
        let r = validate(&params(4, 1, 2, 1), &s);
        assert!(r.violations.iter().any(|v| v.contains("n1 > 2*f1")), "{r}");
    }

    #[test]
    fn schedule_coverage_checked() {
        let mut s = reference_schedule();
        s.mc_recv.end = 3;
        let r = validate(&reference_system(), &s);
        assert!(r.violations.iter().any(|v| v.contains("mc_recv closes")), "{r}");
        let mut s = reference_schedule();
        s.c_recv.begin = 47;
        let r = validate(&reference_system(), &s);
        assert!(r.violations.iter().any(|v| v.contains("c_recv must open")), "{r}");
    }

    #[test]
    fn c0_for_four_nodes() {
        let d = derive(&reference_system(), &reference_schedule()).unwrap();
        assert_eq!(d.c0, 2);
    }

    #[test]
    fn reference_derived_values() {
        let d = derive(&reference_system(), &reference_schedule()).unwrap();
        eprintln!("{d:?}");
        assert_eq!(d.d_max_ticks, 9);
        assert_eq!(d.eps0, 27);
        assert_eq!((d.eps1, d.eps2, d.t), (73, 146, 226));
        assert_eq!((d.k0, d.g0), (4, 7));
        assert_eq!(reference_system().tau_max, 16 * d.t);
        assert_eq!(d.delta_tt0.get(), 6);
        assert_eq!(d.delta_tt1.get(), 50);
        assert_eq!(d.delta_tt2.get(), 8);
        assert_eq!(d.delta_tt3.get(), 36);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(Rational::parse("1/1000").unwrap().0, Ratio::new(1, 1000));
        assert_eq!(Rational::parse("0.001").unwrap().0, Ratio::new(1, 1000));
        assert_eq!(Rational::parse("2").unwrap().0, Ratio::from_integer(2));
        assert_eq!(Rational::parse(".5").unwrap().0, Ratio::new(1, 2));
        assert!(Rational::parse("1/0").is_err());
        assert!(Rational::parse("abc").is_err());
    }

    #[test]
    fn ceil_log_exact() {
        assert_eq!(ceil_log(2, Ratio::new(8, 1)), (3, false));
        assert_eq!(ceil_log(2, Ratio::new(17, 2)), (4, false));
        assert_eq!(ceil_log(3, Ratio::new(1, 2)), (1, true));
    }
}
