//! Campaign statistics and one-sided binomial bounds.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

/// One-sided Clopper-Pearson lower bound for `successes` out of `trials`.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> f64 {
    assert!(successes <= trials, "successes exceed trials");
    if successes == 0 || trials == 0 {
        return 0.0;
    }
    if successes == trials {
        return alpha.powf(1.0 / trials as f64);
    }
    // `alpha` quantile of Beta(x, n - x + 1). statrs 0.17's own inverse_cdf
    // stops at a coarse step, so bisect the regularized incomplete beta.
    let (a, b) = (successes as f64, (trials - successes + 1) as f64);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Binomial proportion with its lower confidence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub frequency: f64,
    pub lower: f64,
    pub alpha: f64,
}

impl Proportion {
    pub fn new(successes: u64, trials: u64, alpha: f64) -> Self {
        Proportion {
            successes,
            trials,
            frequency: if trials == 0 { 0.0 } else { successes as f64 / trials as f64 },
            lower: clopper_pearson_lower(successes, trials, alpha),
            alpha,
        }
    }

    /// Whether the lower bound clears `bound`.
    pub fn clears(&self, bound: f64) -> bool {
        self.trials > 0 && self.lower >= bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub min: u64,
    pub median: u64,
    pub p95: u64,
    pub max: u64,
}

impl Distribution {
    pub fn of(values: &[u64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_unstable();
        let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Some(Distribution {
            count: v.len(),
            mean: v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64,
            min: v[0],
            median: at(0.5),
            p95: at(0.95),
            max: v[v.len() - 1],
        })
    }
}
