//! Coin-only model of the grandmaster election.
//!
//! Every nonfaulty MWS runs exchanging periods of `T` ticks whose real
//! length is drawn within the drift bound, and tosses its coin once per
//! period with the same grand_life rule as the protocol. No network, no
//! clocks. Time is cut into windows of length `T_max`; a window counts when
//! it contains at least one resynchronization point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ssbcs_core::config::Params;
use ssbcs_core::ftcore::bernoulli;
use ssbcs_core::sim::clock::SimTime;
use ssbcs_core::sim::{resync_points, Toss};

use crate::stats::Proportion;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoinModelResult {
    pub seed: u64,
    pub planes: usize,
    /// Windows skipped before counting so grand_life no longer reflects the initial state.
    pub burn_in: u64,
    pub resync: Proportion,
    /// `2 q0 (1 - q0)^g0`.
    pub bound: f64,
    pub pass: bool,
}

/// Runs `windows` counted windows with `planes` nonfaulty MWS nodes.
pub fn coin_model(params: &Params, planes: usize, windows: u64, seed: u64, alpha: f64) -> CoinModelResult {
    assert!(planes >= 2, "resynchronization needs two nonfaulty MWS nodes");
    let d = &params.derived;
    let s = &params.system;
    let q0 = d.q0;
    let g0 = d.g0;
    let burn_in = g0 as u64;
    let total = windows + burn_in;
    let window = d.window_sim;
    let end: SimTime = total as i64 * window;
    let nominal = d.t as i64 * s.tick_nominal;
    let (rn, rd) = (*s.rho.0.numer(), *s.rho.0.denom());
    let lo = (nominal * (rd - rn) + rd - 1) / rd;
    let hi = nominal * (rd + rn) / rd;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tosses: Vec<Toss> = Vec::new();
    for plane in 0..planes {
        let mut gl: u32 = rng.gen_range(0..=g0);
        let mut t: SimTime = rng.gen_range(0..hi);
        while t < end {
            let before = gl;
            let head = bernoulli(&mut rng, q0);
            if head {
                gl = g0;
            }
            gl = gl.saturating_sub(1);
            tosses.push(Toss {
                t,
                plane,
                grand_life_before: before,
                head,
            });
            t += rng.gen_range(lo..=hi);
        }
    }
    let all: Vec<usize> = (0..planes).collect();
    let mut hit: Vec<u64> = resync_points(&tosses, &all)
        .into_iter()
        .map(|t| (t / window) as u64)
        .filter(|&w| w >= burn_in && w < total)
        .collect();
    hit.dedup();
    let resync = Proportion::new(hit.len() as u64, windows, alpha);
    let bound = d.resync_bound();
    CoinModelResult {
        seed,
        planes,
        burn_in,
        resync,
        bound,
        pass: resync.clears(bound),
    }
}
