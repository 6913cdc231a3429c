//! Scenario files.
//!
//! A scenario is a TOML document with four tables:
//!
//! ```toml
//! [system]      # SystemParams
//! [schedule]    # TT-slots as [begin, end] tick pairs
//! [adversary]   # strategy name, strategy knobs, optional fault assignment
//! [run]         # initial state, horizon, seeds, confirmation windows
//! ```
//!
//! In strict mode any key not in the schema is an error; otherwise such keys
//! are logged and ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{reference_schedule, reference_system, ConfigError, Params, SystemParams, TTSchedule};
use crate::sim::adversary::{Strategy, StrategyParams};
use crate::sim::{FaultAssignment, InitPolicy, SimConfig};

/// Environment variable consulted for the scenario path when none is given.
pub const CONFIG_ENV: &str = "SSBCS_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversarySection {
    pub strategy: Strategy,
    pub noise_slot_jitter: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_bias: Option<u64>,
    /// Defaults to the last `f0` MES.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faulty_mes: Option<Vec<usize>>,
    /// Defaults to the last `f1` planes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faulty_planes: Option<Vec<usize>>,
}

impl Default for AdversarySection {
    fn default() -> Self {
        let sp = StrategyParams::default();
        AdversarySection {
            strategy: Strategy::Silent,
            noise_slot_jitter: sp.noise_slot_jitter,
            split_bias: sp.split_bias,
            faulty_mes: None,
            faulty_planes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub init: InitPolicy,
    /// Windows simulated before a run is declared unsynchronized.
    pub horizon_windows: u64,
    /// Explicit seed list; overrides `seed_count`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub seed_count: u64,
    pub seed_base: u64,
    /// Clean windows needed to declare stabilization; defaults to `g0 + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confirm_windows: Option<u64>,
    /// Ticks per drift segment.
    pub seg_len: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            init: InitPolicy::Random,
            horizon_windows: 10_000,
            seeds: None,
            seed_count: 30,
            seed_base: 0,
            confirm_windows: None,
            seg_len: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub system: SystemParams,
    pub schedule: TTSchedule,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub params: Params,
}

/// Dotted paths present in `input` but absent from `known`.
fn unknown_keys(input: &toml::Value, known: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    let (toml::Value::Table(a), toml::Value::Table(b)) = (input, known) else {
        return;
    };
    for (k, v) in a {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match b.get(k) {
            None => out.push(path),
            Some(kv) => unknown_keys(v, kv, &path, out),
        }
    }
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_toml(text: &str, strict: bool) -> Result<Self, ConfigError> {
        let raw: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let file: ScenarioFile = raw.clone().try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let known = toml::Value::try_from(&file).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut extra = Vec::new();
        unknown_keys(&raw, &known, "", &mut extra);
        if !extra.is_empty() {
            if strict {
                return Err(ConfigError::UnknownKeys(extra));
            }
            log::warn!("ignoring unknown configuration keys: {}", extra.join(", "));
        }
        Self::from_file(file)
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self, ConfigError> {
        let params = Params::new(file.system.clone(), file.schedule)?;
        let s = Scenario { file, params };
        s.sim_config()
            .faults
            .validate(&s.params)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }

    pub fn load(path: &Path, strict: bool) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text, strict)
    }

    /// The built-in reference scenario with the given strategy.
    pub fn reference(strategy: Strategy, init: InitPolicy) -> Self {
        let file = ScenarioFile {
            system: reference_system(),
            schedule: reference_schedule(),
            adversary: AdversarySection {
                strategy,
                ..Default::default()
            },
            run: RunSection {
                init,
                ..Default::default()
            },
        };
        Self::from_file(file).expect("reference scenario is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&self.file).expect("scenario serializes")
    }

    pub fn strategy(&self) -> Strategy {
        self.file.adversary.strategy
    }

    pub fn horizon_windows(&self) -> u64 {
        self.file.run.horizon_windows
    }

    pub fn seeds(&self) -> Vec<u64> {
        let r = &self.file.run;
        match &r.seeds {
            Some(v) => v.clone(),
            None => (r.seed_base..r.seed_base + r.seed_count).collect(),
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let a = &self.file.adversary;
        let r = &self.file.run;
        let mut cfg = SimConfig::new(self.params.clone(), a.strategy, r.init);
        cfg.strategy_params = StrategyParams {
            noise_slot_jitter: a.noise_slot_jitter,
            split_bias: a.split_bias,
        };
        let dflt = FaultAssignment::default_for(&self.params);
        cfg.faults = FaultAssignment {
            faulty_mes: a.faulty_mes.clone().unwrap_or(dflt.faulty_mes),
            faulty_planes: a.faulty_planes.clone().unwrap_or(dflt.faulty_planes),
        };
        if let Some(c) = r.confirm_windows {
            cfg.confirm_windows = c;
        }
        cfg.seg_len = r.seg_len;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"
[system]
n0 = 4
n1 = 3
f0 = 1
f1 = 1
tau_max = 3616
tick_nominal = 1000
rho = "1/1000"
d_max = 8000
t0 = 80
a0 = 3
eps_rnd = 2000

[schedule]
vc_send = [0, 0]
mc_recv = [0, 14]
c_send = [48, 50]
c_recv = [44, 58]

[adversary]
strategy = "split_brain"

[run]
init = "random"
seed_count = 3
"#;

    #[test]
    fn parses_reference_document() {
        let s = Scenario::from_toml(DOC, true).unwrap();
        assert_eq!(s.file.system, reference_system());
        assert_eq!(s.file.schedule, reference_schedule());
        assert_eq!(s.strategy(), Strategy::SplitBrain);
        assert_eq!(s.seeds(), vec![0, 1, 2]);
    }

    #[test]
    fn strict_mode_rejects_unknown_keys() {
        let doc = DOC.replace("a0 = 3", "a0 = 3\nfoo = 1").replace("[run]", "[run]\nbar = true");
        match Scenario::from_toml(&doc, true) {
            Err(ConfigError::UnknownKeys(k)) => assert_eq!(k, vec!["run.bar", "system.foo"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(Scenario::from_toml(&doc, false).is_ok());
    }

    #[test]
    fn roundtrip() {
        let s = Scenario::reference(Strategy::MaxSkew, InitPolicy::Synchronized);
        let back = Scenario::from_toml(&s.to_toml(), true).unwrap();
        assert_eq!(back.file, s.file);
    }

    #[test]
    fn invalid_system_reports_invariant() {
        let doc = DOC.replace("n0 = 4", "n0 = 3");
        let e = Scenario::from_toml(&doc, true).unwrap_err().to_string();
        assert!(e.contains("n0 > 3*f0"), "{e}");
    }
}
