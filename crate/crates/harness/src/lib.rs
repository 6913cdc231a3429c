//! Experiment runner for the ssbcs simulator: single runs, seeded
//! campaigns, the coin-only election model, and their statistics.

pub mod lemma1;
pub mod run;
pub mod stats;

pub use run::{run_monte_carlo, run_once, summarize, Campaign, RunMode, RunResult, StatsSummary};
