//! Built-in Byzantine adversaries.
//!
//! The adversary owns the environment's free choices (tick periods, delays,
//! round-start skews) and the outputs of faulty components. Faulty MES nodes
//! and faulty planes run the honest state machines underneath; a strategy
//! decides what actually leaves them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{TTMessageDown, TTMessageUp};
use crate::ring::{Ring, RingValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Faulty components send nothing.
    Silent,
    /// Uniformly random payloads and send offsets.
    RandomNoise,
    /// Feeds the two honest planes diverging views.
    SplitBrain,
    /// Drift, delay and skew always at their bounds; faulty parts silent.
    MaxSkew,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Silent,
        Strategy::RandomNoise,
        Strategy::SplitBrain,
        Strategy::MaxSkew,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Silent => "silent",
            Strategy::RandomNoise => "random_noise",
            Strategy::SplitBrain => "split_brain",
            Strategy::MaxSkew => "max_skew",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm || st.name().replace('_', "") == norm)
            .ok_or_else(|| format!("unknown adversary strategy {s:?}"))
    }
}

/// Strategy knobs; every field has a default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Ticks by which random faulty-MES send offsets may leave the slot.
    pub noise_slot_jitter: u64,
    /// Offset added to the mirrored clock in the split-brain attack; `None` = `eps1/2`.
    pub split_bias: Option<u64>,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            noise_slot_jitter: 5,
            split_bias: None,
        }
    }
}

/// Model bounds the adversary must respect for honest components.
#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub period_min: i64,
    pub period_max: i64,
    pub d_min: i64,
    pub d_max: i64,
    pub eps_rnd: i64,
    pub a0: u32,
    pub n0: usize,
    pub n1: usize,
    pub f0: usize,
    pub eps1: u64,
    pub ring: Ring,
}

/// Read-only facts a strategy may use when crafting faulty output.
#[derive(Debug, Clone)]
pub struct View<'a> {
    pub honest_planes: &'a [usize],
    pub honest_mes: &'a [usize],
    /// Current clock value of each plane's MWS.
    pub mws_clock: &'a [RingValue],
    /// Ticks between begin and end of the clock send slot.
    pub c_send_len: u64,
}

/// One message a faulty plane delivers to one MES.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Forged {
    pub to: usize,
    pub m: RingValue,
    pub delay: i64,
}

pub struct Adversary {
    pub strategy: Strategy,
    pub params: StrategyParams,
    pub bounds: Bounds,
    drift_rng: Vec<ChaCha8Rng>,
    delay_rng: ChaCha8Rng,
    skew_rng: ChaCha8Rng,
    fault_rng: ChaCha8Rng,
}

impl Adversary {
    pub fn new(
        strategy: Strategy,
        params: StrategyParams,
        bounds: Bounds,
        drift_rng: Vec<ChaCha8Rng>,
        delay_rng: ChaCha8Rng,
        skew_rng: ChaCha8Rng,
        fault_rng: ChaCha8Rng,
    ) -> Self {
        Adversary {
            strategy,
            params,
            bounds,
            drift_rng,
            delay_rng,
            skew_rng,
            fault_rng,
        }
    }

    /// Tick period of clock segment `seg` of `node` (raw, unclamped).
    pub fn choose_period(&mut self, node: usize, seg: u64) -> i64 {
        let b = self.bounds;
        match self.strategy {
            Strategy::MaxSkew => {
                let _ = seg;
                if node % 2 == 0 {
                    b.period_min
                } else {
                    b.period_max
                }
            }
            _ => self.drift_rng[node].gen_range(b.period_min..=b.period_max),
        }
    }

    /// Delay of one message through an honest plane (raw, unclamped).
    pub fn choose_delay(&mut self) -> i64 {
        let b = self.bounds;
        match self.strategy {
            Strategy::MaxSkew => b.d_max,
            _ => self.delay_rng.gen_range(b.d_min..=b.d_max),
        }
    }

    /// Round-start offset of one plane member (raw, unclamped).
    pub fn choose_skew(&mut self, plane: usize, member: usize, round: u64) -> i64 {
        let b = self.bounds;
        match self.strategy {
            Strategy::MaxSkew => {
                if (round as usize + member + plane) % 2 == 0 {
                    0
                } else {
                    b.eps_rnd
                }
            }
            _ => self.skew_rng.gen_range(0..=b.eps_rnd),
        }
    }

    fn random_vec(&mut self) -> TTMessageUp {
        let b = self.bounds;
        let rng = &mut self.fault_rng;
        TTMessageUp {
            sender: 0,
            c_vec: (0..b.n1).map(|_| Some(RingValue::new(rng.gen_range(0..b.ring.modulus())))).collect(),
            a_vec: (0..b.n1).map(|_| rng.gen_range(0..=b.a0)).collect(),
            m_vec: (0..b.n1).map(|_| Some(RingValue::new(rng.gen_range(0..b.ring.modulus())))).collect(),
        }
    }

    /// What faulty MES `mes` sends into `plane` this round, as
    /// `(message, send offset in ticks)`; `None` sends nothing.
    pub fn faulty_mes_payload(
        &mut self,
        mes: usize,
        plane: usize,
        honest: &TTMessageUp,
        slot: (u64, u64),
        view: &View<'_>,
    ) -> Option<(TTMessageUp, i64)> {
        match self.strategy {
            Strategy::Silent | Strategy::MaxSkew => None,
            Strategy::RandomNoise => {
                let j = self.params.noise_slot_jitter as i64;
                let off = self.fault_rng.gen_range(slot.0 as i64 - j..=slot.1 as i64 + j);
                let mut m = self.random_vec();
                m.sender = mes;
                Some((m, off))
            }
            Strategy::SplitBrain => {
                let a = view.honest_planes.first().copied();
                if Some(plane) == a {
                    let mut m = honest.clone();
                    m.a_vec.iter_mut().for_each(|v| *v = self.bounds.a0);
                    Some((m, slot.0 as i64))
                } else {
                    let mut m = self.random_vec();
                    m.sender = mes;
                    m.a_vec.iter_mut().for_each(|v| *v = 0);
                    Some((m, slot.0 as i64))
                }
            }
        }
    }

    /// Deliveries a faulty plane makes in place of its honest downlink.
    pub fn faulty_plane_script(
        &mut self,
        plane: usize,
        honest: Option<TTMessageDown>,
        recipients: &[usize],
        view: &View<'_>,
    ) -> Vec<Forged> {
        let _ = plane;
        let b = self.bounds;
        match self.strategy {
            Strategy::Silent | Strategy::MaxSkew => Vec::new(),
            Strategy::RandomNoise => recipients
                .iter()
                .map(|&to| Forged {
                    to,
                    m: RingValue::new(self.fault_rng.gen_range(0..b.ring.modulus())),
                    delay: self.fault_rng.gen_range(b.d_min..=b.d_max),
                })
                .collect(),
            Strategy::SplitBrain => {
                let Some(a) = view.honest_planes.first().copied() else {
                    return honest
                        .map(|h| recipients.iter().map(|&to| Forged { to, m: h.m, delay: b.d_min }).collect())
                        .unwrap_or_default();
                };
                let bias = self.params.split_bias.unwrap_or(b.eps1 / 2);
                let mirrored = b.ring.shift(view.mws_clock[a], (view.c_send_len + bias) as i64);
                let far = b.ring.shift(mirrored, (b.ring.modulus() / 2) as i64);
                let favoured = b.n0.saturating_sub(2 * b.f0).max(1);
                let mut honest_seen = 0;
                recipients
                    .iter()
                    .map(|&to| {
                        let fav = if view.honest_mes.contains(&to) {
                            honest_seen += 1;
                            honest_seen <= favoured
                        } else {
                            true
                        };
                        Forged {
                            to,
                            m: if fav { mirrored } else { far },
                            delay: b.d_min,
                        }
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_names_roundtrip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("SplitBrain".parse::<Strategy>().unwrap(), Strategy::SplitBrain);
        assert!("nope".parse::<Strategy>().is_err());
    }
}
