//! Line-delimited JSON trace.
//!
//! One record per line, tagged by `ev`. Field order follows the variant
//! definitions below and is stable.

use std::io::{self, BufWriter, Write};

use serde::{Deserialize, Serialize};

use super::clock::SimTime;
use crate::protocol::{AdjustRule, TTMessageUp};
use crate::ring::RingValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    VcSend,
    McRecv,
    CSend,
    CRecv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Begin,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        seed: u64,
        strategy: String,
        faulty_mes: Vec<usize>,
        faulty_planes: Vec<usize>,
    },
    Drift {
        t: SimTime,
        node: usize,
        seg: u64,
        start_tick: u64,
        period: i64,
    },
    Sig {
        t: SimTime,
        plane: usize,
        round: u64,
        h: RingValue,
        c: RingValue,
    },
    Abort {
        t: SimTime,
        plane: usize,
        node: usize,
        round: u64,
    },
    Slot {
        t: SimTime,
        plane: usize,
        node: usize,
        slot: SlotKind,
        edge: Edge,
        round: u64,
        h: RingValue,
    },
    SendUp {
        t: SimTime,
        plane: usize,
        from: usize,
        arrive: SimTime,
        forged: bool,
        msg: TTMessageUp,
    },
    SendDown {
        t: SimTime,
        plane: usize,
        to: usize,
        arrive: SimTime,
        forged: bool,
        m: RingValue,
    },
    Deliver {
        t: SimTime,
        plane: usize,
        to: usize,
        accepted: bool,
    },
    Drop {
        t: SimTime,
        plane: usize,
        from: usize,
        reason: String,
    },
    Decision {
        t: SimTime,
        plane: usize,
        round: u64,
        head: bool,
        grand_life_before: u32,
        grand_life_after: u32,
        stb: bool,
        weak: Option<RingValue>,
        rule: AdjustRule,
        c_new: RingValue,
    },
    Adjust {
        t: SimTime,
        node: usize,
        from: RingValue,
        to: RingValue,
    },
    Warn {
        t: SimTime,
        msg: String,
    },
    Violation {
        t: SimTime,
        detail: super::monitor::Violation,
    },
    Window {
        w: u64,
        max_spread: u64,
    },
    End {
        t: SimTime,
        stabilization_window: Option<u64>,
        violations: u64,
    },
}

pub enum Trace {
    Off,
    Memory(Vec<u8>),
    Writer(BufWriter<Box<dyn Write + Send>>),
}

impl Trace {
    pub fn writer(w: Box<dyn Write + Send>) -> Self {
        Trace::Writer(BufWriter::new(w))
    }

    pub fn enabled(&self) -> bool {
        !matches!(self, Trace::Off)
    }

    /// Writes the record built by `f`, which is only called when tracing is on.
    pub fn emit(&mut self, f: impl FnOnce() -> TraceEvent) -> io::Result<()> {
        match self {
            Trace::Off => Ok(()),
            Trace::Memory(buf) => {
                serde_json::to_writer(&mut *buf, &f())?;
                buf.push(b'\n');
                Ok(())
            }
            Trace::Writer(w) => {
                serde_json::to_writer(&mut *w, &f())?;
                w.write_all(b"\n")
            }
        }
    }

    pub fn flush(&mut self) -> io::Result<()> {
        match self {
            Trace::Writer(w) => w.flush(),
            _ => Ok(()),
        }
    }

    /// Bytes of an in-memory trace; empty for other sinks.
    pub fn into_bytes(self) -> Vec<u8> {
        match self {
            Trace::Memory(b) => b,
            _ => Vec::new(),
        }
    }
}

/// Parses a trace back into records.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
