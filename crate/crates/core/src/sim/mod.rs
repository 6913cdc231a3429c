//! Deterministic discrete-event simulation of the whole system.
//!
//! Node ids: MES `i` is node `i`, the MWS of plane `p` is node `n0 + p`.
//! Each plane is collapsed to its MWS plus one virtual CES per MES; a SIG
//! starts a round at every member after an adversarial skew, and TT-slot
//! boundaries ride on each member's own hardware clock.

pub mod adversary;
pub mod clock;
pub mod monitor;
pub mod queue;
pub mod trace;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Params;
use crate::protocol::{MesState, MwsState, ProtoCtx, TTMessageUp};
use crate::ring::RingValue;
use adversary::{Adversary, Bounds, Strategy, StrategyParams, View};
use clock::{HwClock, SimTime};
use monitor::{MonitorConfig, SyncMonitor};
use queue::{EventQueue, PastEvent};
use trace::{Edge, SlotKind, Trace, TraceEvent};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("internal fault: {0}")]
    PastEvent(#[from] PastEvent),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
    #[error("invalid fault assignment: {0}")]
    Faults(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultAssignment {
    pub faulty_mes: Vec<usize>,
    pub faulty_planes: Vec<usize>,
}

impl FaultAssignment {
    /// The last `f0` MES and the last `f1` planes.
    pub fn default_for(p: &Params) -> Self {
        let s = &p.system;
        FaultAssignment {
            faulty_mes: (s.n0 - s.f0..s.n0).collect(),
            faulty_planes: (s.n1 - s.f1..s.n1).collect(),
        }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self, p: &Params) -> Result<(), SimError> {
        let s = &p.system;
        let uniq = |v: &[usize]| {
            let mut w = v.to_vec();
            w.sort_unstable();
            w.dedup();
            w.len() == v.len()
        };
        if self.faulty_mes.len() > s.f0 || self.faulty_mes.iter().any(|&i| i >= s.n0) || !uniq(&self.faulty_mes) {
            return Err(SimError::Faults(format!("faulty_mes {:?} (n0={}, f0={})", self.faulty_mes, s.n0, s.f0)));
        }
        if self.faulty_planes.len() > s.f1
            || self.faulty_planes.iter().any(|&p| p >= s.n1)
            || !uniq(&self.faulty_planes)
        {
            return Err(SimError::Faults(format!(
                "faulty_planes {:?} (n1={}, f1={})",
                self.faulty_planes, s.n1, s.f1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// All clocks agree, records describe one clean previous round.
    Synchronized,
    /// Every state variable drawn uniformly.
    Random,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: Params,
    pub strategy: Strategy,
    pub strategy_params: StrategyParams,
    pub faults: FaultAssignment,
    pub init: InitPolicy,
    /// Ticks per drift segment.
    pub seg_len: u64,
    /// Clean windows required before declaring stabilization.
    pub confirm_windows: u64,
}

impl SimConfig {
    pub fn new(params: Params, strategy: Strategy, init: InitPolicy) -> Self {
        let faults = FaultAssignment::default_for(&params);
        let confirm_windows = params.derived.g0 as u64 + 1;
        SimConfig {
            params,
            strategy,
            strategy_params: StrategyParams::default(),
            faults,
            init,
            seg_len: 32,
            confirm_windows,
        }
    }
}

/// One coin toss of a nonfaulty MWS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toss {
    pub t: SimTime,
    pub plane: usize,
    pub grand_life_before: u32,
    pub head: bool,
}

/// Counts resynchronization points in a toss log.
///
/// A head toss of one nonfaulty MWS at `t` is a resynchronization point when
/// some other nonfaulty MWS has `grand_life = 0` up to its first exchanging
/// window after `t` and tosses tails there. Returns the toss times.
pub fn resync_points(tosses: &[Toss], planes: &[usize]) -> Vec<SimTime> {
    let by_plane: Vec<Vec<&Toss>> = planes
        .iter()
        .map(|p| {
            let mut v: Vec<&Toss> = tosses.iter().filter(|x| x.plane == *p).collect();
            v.sort_by_key(|x| x.t);
            v
        })
        .collect();
    let mut out = Vec::new();
    for (a, ta) in by_plane.iter().enumerate() {
        for h in ta.iter().filter(|x| x.head) {
            let hit = by_plane.iter().enumerate().any(|(b, tb)| {
                if a == b {
                    return false;
                }
                let k = tb.partition_point(|x| x.t <= h.t);
                tb.get(k).is_some_and(|n| n.grand_life_before == 0 && !n.head)
            });
            if hit {
                out.push(h.t);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub end_time: SimTime,
    pub windows: u64,
    pub stabilization_window: Option<u64>,
    pub precision_violations: u64,
    pub accuracy_violations: u64,
    pub max_spread: u64,
    pub max_spread_since_stb: Option<u64>,
    pub resync_points: u64,
    /// Nominal exchanging periods in which nonfaulty MWS nodes saw different `E_stb` outcomes.
    pub stb_disagreements: u64,
    pub clamp_warnings: u64,
    pub events: u64,
}

#[derive(Debug, Clone)]
enum Ev {
    MwsTick { plane: usize, gen: u64 },
    MesSlot { plane: usize, mes: usize, gen: u64, slot: SlotKind, edge: Edge },
    MwsSlot { plane: usize, gen: u64, slot: SlotKind, edge: Edge },
    DeliverUp { plane: usize, msg: Box<TTMessageUp> },
    DeliverDown { plane: usize, to: usize, m: RingValue },
    Sample,
}

const RANK_DELIVER: u8 = 0;
const RANK_SLOT: u8 = 1;
const RANK_TICK: u8 = 2;
const RANK_SAMPLE: u8 = 3;

#[derive(Debug, Clone, Copy, Default)]
struct MemberRound {
    gen: u64,
    round: u64,
    anchor_count: u64,
    active: bool,
    open: bool,
    got: bool,
    h_begin: RingValue,
}

pub struct World {
    cfg: SimConfig,
    ctx: ProtoCtx,
    n0: usize,
    n1: usize,
    clocks: Vec<HwClock>,
    mes: Vec<MesState>,
    mws: Vec<MwsState>,
    mes_round: Vec<Vec<MemberRound>>,
    mws_round: Vec<MemberRound>,
    plane_round: Vec<u64>,
    tick_gen: Vec<u64>,
    faulty_mes: Vec<bool>,
    faulty_plane: Vec<bool>,
    honest_mes: Vec<usize>,
    honest_planes: Vec<usize>,
    queue: EventQueue<Ev>,
    adversary: Adversary,
    proto_rng: Vec<ChaCha8Rng>,
    monitor: SyncMonitor,
    trace: Trace,
    tosses: Vec<Toss>,
    stb_log: Vec<(u64, usize, bool)>,
    window_max: (u64, u64),
    stabilized: Option<u64>,
    clamp_warnings: u64,
    events: u64,
    seed: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl World {
    pub fn new(cfg: SimConfig, seed: u64, trace: Trace) -> Result<Self, SimError> {
        cfg.faults.validate(&cfg.params)?;
        let p = &cfg.params;
        let s = &p.system;
        let d = &p.derived;
        let (n0, n1) = (s.n0, s.n1);
        let ring = d.ring;
        let ctx = ProtoCtx::new(p);
        let one = num_rational::Rational64::from_integer(1);
        let th = num_rational::Rational64::from_integer(s.tick_nominal);
        let period_min = ((one - s.rho.0) * th).ceil().to_integer();
        let period_max = ((one + s.rho.0) * th).floor().to_integer();
        let bounds = Bounds {
            period_min,
            period_max,
            d_min: s.d_min,
            d_max: s.d_max,
            eps_rnd: d.eps_rnd,
            a0: s.a0,
            n0,
            n1,
            f0: s.f0,
            eps1: d.eps1,
            ring,
        };
        let nodes = n0 + n1;
        let mut adversary = Adversary::new(
            cfg.strategy,
            cfg.strategy_params,
            bounds,
            (0..nodes).map(|k| stream(seed, 100 + k as u64)).collect(),
            stream(seed, 1),
            stream(seed, 2),
            stream(seed, 3),
        );
        let mut init_rng = stream(seed, 4);
        let proto_rng = (0..n1).map(|q| stream(seed, 200 + q as u64)).collect();

        let mut clocks = Vec::with_capacity(nodes);
        for k in 0..nodes {
            let period = adversary.choose_period(k, 0).clamp(period_min, period_max);
            let h0 = ring.reduce(init_rng.gen_range(0..ring.modulus()) as i128);
            let first = init_rng.gen_range(1..=period);
            clocks.push(HwClock::new(ring, h0, cfg.seg_len, first, period));
        }

        let mut faulty_mes = vec![false; n0];
        cfg.faults.faulty_mes.iter().for_each(|&i| faulty_mes[i] = true);
        let mut faulty_plane = vec![false; n1];
        cfg.faults.faulty_planes.iter().for_each(|&q| faulty_plane[q] = true);
        let honest_mes: Vec<usize> = (0..n0).filter(|&i| !faulty_mes[i]).collect();
        let honest_planes: Vec<usize> = (0..n1).filter(|&q| !faulty_plane[q]).collect();

        let (mes, mws) = match cfg.init {
            InitPolicy::Synchronized => Self::init_synchronized(&ctx, p, &clocks),
            InitPolicy::Random => Self::init_random(&ctx, &mut init_rng),
        };

        let rho = s.rho.0;
        let mcfg = MonitorConfig {
            tick_nominal: s.tick_nominal,
            rho_num: *rho.numer(),
            rho_den: *rho.denom(),
            eps0: d.eps0,
            delta: d.t_max_sim,
            window_sim: d.window_sim,
            horizon_windows: cfg.confirm_windows,
        };
        let monitor = SyncMonitor::new(mcfg, ring, honest_mes.len() + honest_planes.len());

        let mut w = World {
            ctx,
            n0,
            n1,
            clocks,
            mes,
            mws,
            mes_round: vec![vec![MemberRound::default(); n1]; n0],
            mws_round: vec![MemberRound::default(); n1],
            plane_round: vec![0; n1],
            tick_gen: vec![0; n1],
            faulty_mes,
            faulty_plane,
            honest_mes,
            honest_planes,
            queue: EventQueue::new(),
            adversary,
            proto_rng,
            monitor,
            trace,
            tosses: Vec::new(),
            stb_log: Vec::new(),
            window_max: (0, 0),
            stabilized: None,
            clamp_warnings: 0,
            events: 0,
            seed,
            cfg,
        };
        let start = TraceEvent::Start {
            seed,
            strategy: w.cfg.strategy.name().to_string(),
            faulty_mes: w.cfg.faults.faulty_mes.clone(),
            faulty_planes: w.cfg.faults.faulty_planes.clone(),
        };
        w.trace.emit(|| start)?;
        for k in 0..nodes {
            let s0 = *w.clocks[k].segments().next().expect("segment");
            w.trace.emit(|| TraceEvent::Drift {
                t: s0.start_time.max(0),
                node: k,
                seg: 0,
                start_tick: 0,
                period: s0.period,
            })?;
        }
        for q in 0..n1 {
            w.schedule_tick(q)?;
        }
        w.queue.schedule(0, u32::MAX, RANK_SAMPLE, Ev::Sample)?;
        Ok(w)
    }

    fn init_synchronized(ctx: &ProtoCtx, p: &Params, clocks: &[HwClock]) -> (Vec<MesState>, Vec<MwsState>) {
        let ring = ctx.ft.ring;
        let (n0, n1) = (ctx.ft.n0, ctx.ft.n1);
        let t = ctx.ft.t as i64;
        let c0 = ring.shift(RingValue::new(0), -1);
        let m = ring.shift(RingValue::new(0), -t + p.schedule.c_send.end as i64);
        let mes = (0..n0)
            .map(|i| {
                let h = clocks[i].read(0);
                let off = ring.sub(c0, h);
                let h_rec = ring.sub(m, off);
                let mut s = MesState::new(n1);
                s.clock_offset = off;
                for q in 0..n1 {
                    s.m_rec[q] = Some(m);
                    s.h_rec[q] = Some(h_rec);
                    s.c_tilde[q] = Some(off);
                    s.prev_m[q] = Some(ring.shift(m, -t));
                    s.prev_h[q] = Some(ring.shift(h_rec, -t));
                    s.acc[q] = ctx.ft.a0;
                }
                s
            })
            .collect();
        let mws = (0..n1)
            .map(|q| {
                let mut s = MwsState::new(ctx);
                s.clock_offset = ring.sub(c0, clocks[n0 + q].read(0));
                s.c_tilde_old = s.clock_offset;
                s
            })
            .collect();
        (mes, mws)
    }

    fn init_random(ctx: &ProtoCtx, rng: &mut ChaCha8Rng) -> (Vec<MesState>, Vec<MwsState>) {
        let ring = ctx.ft.ring;
        let (n0, n1) = (ctx.ft.n0, ctx.ft.n1);
        let rv = |rng: &mut ChaCha8Rng| RingValue::new(rng.gen_range(0..ring.modulus()));
        let mes = (0..n0)
            .map(|_| {
                let mut s = MesState::new(n1);
                s.clock_offset = rv(rng);
                for q in 0..n1 {
                    let (m, h) = (rv(rng), rv(rng));
                    s.m_rec[q] = Some(m);
                    s.h_rec[q] = Some(h);
                    s.c_tilde[q] = Some(ring.sub(m, h));
                    s.prev_m[q] = Some(rv(rng));
                    s.prev_h[q] = Some(rv(rng));
                    s.acc[q] = rng.gen_range(0..=ctx.ft.a0);
                }
                s
            })
            .collect();
        let mws = (0..n1)
            .map(|_| {
                let mut s = MwsState::new(ctx);
                s.clock_offset = rv(rng);
                s.grand_life = rng.gen_range(0..=ctx.g0);
                s.b_coin = rng.gen_bool(0.5);
                s.tau_idl = rng.gen_range(0..=ctx.tau_max());
                s.c_tilde_old = rv(rng);
                s
            })
            .collect();
        (mes, mws)
    }

    pub fn params(&self) -> &Params {
        &self.cfg.params
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn monitor(&self) -> &SyncMonitor {
        &self.monitor
    }

    pub fn tosses(&self) -> &[Toss] {
        &self.tosses
    }

    pub fn honest_planes(&self) -> &[usize] {
        &self.honest_planes
    }

    pub fn honest_mes(&self) -> &[usize] {
        &self.honest_mes
    }

    pub fn mws_state(&self, plane: usize) -> &MwsState {
        &self.mws[plane]
    }

    pub fn mes_state(&self, i: usize) -> &MesState {
        &self.mes[i]
    }

    fn mws_node(&self, plane: usize) -> usize {
        self.n0 + plane
    }

    /// Hardware reading of `node` at the current time.
    pub fn hw(&mut self, node: usize) -> RingValue {
        let t = self.now();
        self.hw_at(node, t)
    }

    fn hw_at(&mut self, node: usize, t: SimTime) -> RingValue {
        self.ensure_time(node, t);
        self.clocks[node].read(t)
    }

    fn ensure_time(&mut self, node: usize, t: SimTime) {
        let (adv, clocks) = (&mut self.adversary, &mut self.clocks);
        let b = adv.bounds;
        let mut raw = Vec::new();
        let added = clocks[node].extend_to_time(t, |seg| {
            let p = adv.choose_period(node, seg);
            raw.push(p);
            p.clamp(b.period_min, b.period_max)
        });
        self.note_segments(node, &added, &raw);
    }

    fn ensure_tick(&mut self, node: usize, k: u64) {
        let (adv, clocks) = (&mut self.adversary, &mut self.clocks);
        let b = adv.bounds;
        let mut raw = Vec::new();
        let added = clocks[node].extend_to_tick(k, |seg| {
            let p = adv.choose_period(node, seg);
            raw.push(p);
            p.clamp(b.period_min, b.period_max)
        });
        self.note_segments(node, &added, &raw);
    }

    fn note_segments(&mut self, node: usize, added: &[clock::Segment], raw: &[i64]) {
        for (s, &r) in added.iter().zip(raw) {
            if r != s.period {
                self.clamp_warnings += 1;
                let msg = format!("tick period {r} of node {node} clamped to {}", s.period);
                let t = self.now();
                let _ = self.trace.emit(|| TraceEvent::Warn { t, msg });
            }
            let s = *s;
            let _ = self.trace.emit(|| TraceEvent::Drift {
                t: s.start_time,
                node,
                seg: s.index,
                start_tick: s.start_tick,
                period: s.period,
            });
        }
    }

    fn time_of_count(&mut self, node: usize, k: u64) -> SimTime {
        self.ensure_tick(node, k);
        self.clocks[node].time_of_tick(k)
    }

    fn count_at(&mut self, node: usize, t: SimTime) -> u64 {
        self.ensure_time(node, t);
        self.clocks[node].count(t)
    }

    fn clamp_delay(&mut self, raw: i64) -> i64 {
        let b = self.adversary.bounds;
        let d = raw.clamp(b.d_min, b.d_max);
        if d != raw {
            self.clamp_warnings += 1;
            let t = self.now();
            let _ = self.trace.emit(|| TraceEvent::Warn {
                t,
                msg: format!("delay {raw} clamped to {d}"),
            });
        }
        d
    }

    fn clamp_skew(&mut self, raw: i64) -> i64 {
        let e = self.adversary.bounds.eps_rnd;
        let s = raw.clamp(0, e);
        if s != raw {
            self.clamp_warnings += 1;
            let t = self.now();
            let _ = self.trace.emit(|| TraceEvent::Warn {
                t,
                msg: format!("round skew {raw} clamped to {s}"),
            });
        }
        s
    }

    fn schedule_tick(&mut self, plane: usize) -> Result<(), SimError> {
        self.tick_gen[plane] += 1;
        let node = self.mws_node(plane);
        let now = self.now();
        let n = self.count_at(node, now);
        let h = self.clocks[node].reading(n);
        let k = self.mws[plane].ticks_to_next_action(h, &self.ctx);
        let at = self.time_of_count(node, n + k);
        let gen = self.tick_gen[plane];
        self.queue.schedule(at, node as u32, RANK_TICK, Ev::MwsTick { plane, gen })?;
        Ok(())
    }

    fn slot_time(&mut self, node: usize, anchor: SimTime, anchor_count: u64, offset: u64) -> SimTime {
        if offset == 0 {
            anchor
        } else {
            self.time_of_count(node, anchor_count + offset)
        }
    }

    fn start_round(&mut self, plane: usize) -> Result<(), SimError> {
        let now = self.now();
        self.plane_round[plane] += 1;
        let round = self.plane_round[plane];
        let sched = self.cfg.params.schedule;
        let mws_node = self.mws_node(plane);
        let h = self.hw(mws_node);
        let c = self.mws[plane].clock(h, &self.ctx);
        self.trace.emit(|| TraceEvent::Sig { t: now, plane, round, h, c })?;

        // MWS member
        if self.mws_round[plane].active {
            self.trace.emit(|| TraceEvent::Abort {
                t: now,
                plane,
                node: mws_node,
                round: round - 1,
            })?;
            self.mws[plane].on_begin_mc_recv();
        }
        let anchor_count = self.count_at(mws_node, now);
        let r = &mut self.mws_round[plane];
        r.gen += 1;
        r.round = round;
        r.anchor_count = anchor_count;
        r.active = true;
        r.open = false;
        let gen = r.gen;
        for (slot, sl) in [(SlotKind::McRecv, sched.mc_recv), (SlotKind::CSend, sched.c_send)] {
            for (edge, off) in [(Edge::Begin, sl.begin), (Edge::End, sl.end)] {
                let at = self.slot_time(mws_node, now, anchor_count, off);
                self.queue
                    .schedule(at, mws_node as u32, RANK_SLOT, Ev::MwsSlot { plane, gen, slot, edge })?;
            }
        }

        // virtual CES of every MES
        for i in 0..self.n0 {
            if self.mes_round[i][plane].active {
                self.trace.emit(|| TraceEvent::Abort {
                    t: now,
                    plane,
                    node: i,
                    round: round - 1,
                })?;
            }
            let raw = self.adversary.choose_skew(plane, i, round);
            let skew = self.clamp_skew(raw);
            let anchor = now + skew;
            let ac = self.count_at(i, anchor);
            let r = &mut self.mes_round[i][plane];
            r.gen += 1;
            r.round = round;
            r.anchor_count = ac;
            r.active = true;
            r.open = false;
            r.got = false;
            let gen = r.gen;
            let slots: [(SlotKind, Edge, u64); 3] = [
                (SlotKind::VcSend, Edge::Begin, sched.vc_send.begin),
                (SlotKind::CRecv, Edge::Begin, sched.c_recv.begin),
                (SlotKind::CRecv, Edge::End, sched.c_recv.end),
            ];
            for (slot, edge, off) in slots {
                let at = self.slot_time(i, anchor, ac, off);
                self.queue.schedule(
                    at,
                    i as u32,
                    RANK_SLOT,
                    Ev::MesSlot {
                        plane,
                        mes: i,
                        gen,
                        slot,
                        edge,
                    },
                )?;
            }
        }
        Ok(())
    }

    fn view_clocks(&mut self) -> Vec<RingValue> {
        (0..self.n1)
            .map(|q| {
                let h = self.hw(self.n0 + q);
                self.mws[q].clock(h, &self.ctx)
            })
            .collect()
    }

    fn honest_clocks(&mut self) -> Vec<RingValue> {
        let mut out = Vec::with_capacity(self.honest_mes.len() + self.honest_planes.len());
        for k in 0..self.honest_mes.len() {
            let i = self.honest_mes[k];
            let h = self.hw(i);
            out.push(self.mes[i].clock(h, &self.ctx));
        }
        for k in 0..self.honest_planes.len() {
            let q = self.honest_planes[k];
            let h = self.hw(self.n0 + q);
            out.push(self.mws[q].clock(h, &self.ctx));
        }
        out
    }

    fn sample(&mut self) -> Result<(), SimError> {
        let now = self.now();
        let clocks = self.honest_clocks();
        let spread = self.ctx.ft.ring.spread(&clocks);
        let w = (now / self.cfg.params.derived.window_sim) as u64;
        if w != self.window_max.0 {
            let (pw, pm) = self.window_max;
            self.trace.emit(|| TraceEvent::Window { w: pw, max_spread: pm })?;
            self.window_max = (w, 0);
        }
        self.window_max.1 = self.window_max.1.max(spread);
        let v = self.monitor.observe(now, &clocks);
        for detail in v {
            self.trace.emit(|| TraceEvent::Violation { t: now, detail })?;
        }
        if self.stabilized.is_none() {
            self.stabilized = self.monitor.stabilized_at(now);
        }
        Ok(())
    }

    fn on_mes_slot(&mut self, plane: usize, i: usize, gen: u64, slot: SlotKind, edge: Edge) -> Result<(), SimError> {
        if self.mes_round[i][plane].gen != gen {
            return Ok(());
        }
        let now = self.now();
        let h = self.hw(i);
        let round = self.mes_round[i][plane].round;
        self.trace.emit(|| TraceEvent::Slot {
            t: now,
            plane,
            node: i,
            slot,
            edge,
            round,
            h,
        })?;
        match (slot, edge) {
            (SlotKind::VcSend, Edge::Begin) => self.mes_send_up(plane, i, h)?,
            (SlotKind::CRecv, Edge::Begin) => {
                let r = &mut self.mes_round[i][plane];
                r.open = true;
                r.got = false;
                r.h_begin = h;
            }
            (SlotKind::CRecv, Edge::End) => {
                let r = &mut self.mes_round[i][plane];
                r.open = false;
                r.active = false;
                let before = self.mes[i].clock(h, &self.ctx);
                if let Some(to) = self.mes[i].on_end_c_recv(h, &self.ctx) {
                    self.trace.emit(|| TraceEvent::Adjust {
                        t: now,
                        node: i,
                        from: before,
                        to,
                    })?;
                    if !self.faulty_mes[i] {
                        self.sample()?;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn mes_send_up(&mut self, plane: usize, i: usize, h: RingValue) -> Result<(), SimError> {
        let now = self.now();
        let honest = self.mes[i].on_begin_vc_send(i, h, &self.ctx);
        let (msg, send_at, forged) = if self.faulty_mes[i] {
            let sched = self.cfg.params.schedule.vc_send;
            let clocks = self.view_clocks();
            let view = View {
                honest_planes: &self.honest_planes,
                honest_mes: &self.honest_mes,
                mws_clock: &clocks,
                c_send_len: self.cfg.params.schedule.c_send.end - self.cfg.params.schedule.c_send.begin,
            };
            let Some((mut msg, off)) =
                self.adversary.faulty_mes_payload(i, plane, &honest, (sched.begin, sched.end), &view)
            else {
                return Ok(());
            };
            msg.sender = i;
            if off < sched.begin as i64 || off > sched.end as i64 {
                self.trace.emit(|| TraceEvent::Drop {
                    t: now,
                    plane,
                    from: i,
                    reason: format!("send offset {off} outside slot"),
                })?;
                return Ok(());
            }
            let ac = self.mes_round[i][plane].anchor_count;
            let at = if off as u64 == sched.begin {
                now
            } else {
                self.time_of_count(i, ac + off as u64)
            };
            (msg, at.max(now), true)
        } else {
            (honest, now, false)
        };
        let raw = self.adversary.choose_delay();
        let delay = self.clamp_delay(raw);
        let arrive = send_at + delay;
        let mws_node = self.mws_node(plane);
        self.trace.emit(|| TraceEvent::SendUp {
            t: send_at,
            plane,
            from: i,
            arrive,
            forged,
            msg: msg.clone(),
        })?;
        self.queue.schedule(
            arrive,
            mws_node as u32,
            RANK_DELIVER,
            Ev::DeliverUp {
                plane,
                msg: Box::new(msg),
            },
        )?;
        Ok(())
    }

    fn on_mws_slot(&mut self, plane: usize, gen: u64, slot: SlotKind, edge: Edge) -> Result<(), SimError> {
        if self.mws_round[plane].gen != gen {
            return Ok(());
        }
        let now = self.now();
        let node = self.mws_node(plane);
        let h = self.hw(node);
        let round = self.mws_round[plane].round;
        self.trace.emit(|| TraceEvent::Slot {
            t: now,
            plane,
            node,
            slot,
            edge,
            round,
            h,
        })?;
        match (slot, edge) {
            (SlotKind::McRecv, Edge::Begin) => {
                self.mws[plane].on_begin_mc_recv();
                self.mws_round[plane].open = true;
            }
            (SlotKind::McRecv, Edge::End) => {
                self.mws_round[plane].open = false;
                let d = self.mws[plane].on_end_mc_recv(h, &mut self.proto_rng[plane], &self.ctx);
                self.trace.emit(|| TraceEvent::Decision {
                    t: now,
                    plane,
                    round,
                    head: d.head,
                    grand_life_before: d.grand_life_before,
                    grand_life_after: d.grand_life_after,
                    stb: d.stb,
                    weak: d.weak,
                    rule: d.rule,
                    c_new: d.c_new,
                })?;
                if !self.faulty_plane[plane] {
                    self.tosses.push(Toss {
                        t: now,
                        plane,
                        grand_life_before: d.grand_life_before,
                        head: d.head,
                    });
                    let period = self.cfg.params.derived.t as i64 * self.cfg.params.system.tick_nominal;
                    self.stb_log.push(((now / period) as u64, plane, d.stb));
                }
            }
            (SlotKind::CSend, Edge::Begin) => self.mws_send_down(plane)?,
            (SlotKind::CSend, Edge::End) => {
                self.mws_round[plane].active = false;
                let before = self.mws[plane].clock(h, &self.ctx);
                if self.mws[plane].on_end_c_send(h, &self.ctx).is_some() {
                    let to = self.mws[plane].clock(h, &self.ctx);
                    self.trace.emit(|| TraceEvent::Adjust {
                        t: now,
                        node,
                        from: before,
                        to,
                    })?;
                }
                self.schedule_tick(plane)?;
                if !self.faulty_plane[plane] {
                    self.sample()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn mws_send_down(&mut self, plane: usize) -> Result<(), SimError> {
        let now = self.now();
        let honest = self.mws[plane].on_begin_c_send(plane);
        let deliveries: Vec<(usize, RingValue, i64, bool)> = if self.faulty_plane[plane] {
            let clocks = self.view_clocks();
            let recipients: Vec<usize> = (0..self.n0).collect();
            let view = View {
                honest_planes: &self.honest_planes,
                honest_mes: &self.honest_mes,
                mws_clock: &clocks,
                c_send_len: self.cfg.params.schedule.c_send.end - self.cfg.params.schedule.c_send.begin,
            };
            self.adversary
                .faulty_plane_script(plane, honest, &recipients, &view)
                .into_iter()
                .map(|f| (f.to, f.m, f.delay.max(0), true))
                .collect()
        } else {
            let Some(msg) = honest else { return Ok(()) };
            let mut v = Vec::with_capacity(self.n0);
            for to in 0..self.n0 {
                let raw = self.adversary.choose_delay();
                let d = self.clamp_delay(raw);
                v.push((to, msg.m, d, false));
            }
            v
        };
        for (to, m, delay, forged) in deliveries {
            let arrive = now + delay;
            self.trace.emit(|| TraceEvent::SendDown {
                t: now,
                plane,
                to,
                arrive,
                forged,
                m,
            })?;
            self.queue
                .schedule(arrive, to as u32, RANK_DELIVER, Ev::DeliverDown { plane, to, m })?;
        }
        Ok(())
    }

    fn on_deliver_up(&mut self, plane: usize, msg: Box<TTMessageUp>) -> Result<(), SimError> {
        let now = self.now();
        let to = self.mws_node(plane);
        let accepted = self.mws_round[plane].open && self.mws[plane].on_up_msg(&msg, &self.ctx);
        self.trace.emit(|| TraceEvent::Deliver {
            t: now,
            plane,
            to,
            accepted,
        })?;
        Ok(())
    }

    fn on_deliver_down(&mut self, plane: usize, to: usize, m: RingValue) -> Result<(), SimError> {
        let now = self.now();
        let r = self.mes_round[to][plane];
        let accepted = r.open && !r.got;
        if accepted {
            self.mes_round[to][plane].got = true;
            self.mes[to].on_clock_msg(plane, m, r.h_begin, &self.ctx);
        }
        self.trace.emit(|| TraceEvent::Deliver {
            t: now,
            plane,
            to,
            accepted,
        })?;
        Ok(())
    }

    fn on_tick(&mut self, plane: usize, gen: u64) -> Result<(), SimError> {
        if self.tick_gen[plane] != gen {
            return Ok(());
        }
        let node = self.mws_node(plane);
        let h = self.hw(node);
        if self.mws[plane].on_tick(h, &self.ctx) {
            self.start_round(plane)?;
        }
        self.schedule_tick(plane)
    }

    fn step(&mut self, ev: Ev) -> Result<(), SimError> {
        self.events += 1;
        match ev {
            Ev::MwsTick { plane, gen } => self.on_tick(plane, gen),
            Ev::MesSlot {
                plane,
                mes,
                gen,
                slot,
                edge,
            } => self.on_mes_slot(plane, mes, gen, slot, edge),
            Ev::MwsSlot { plane, gen, slot, edge } => self.on_mws_slot(plane, gen, slot, edge),
            Ev::DeliverUp { plane, msg } => self.on_deliver_up(plane, msg),
            Ev::DeliverDown { plane, to, m } => self.on_deliver_down(plane, to, m),
            Ev::Sample => {
                self.sample()?;
                let now = self.now();
                for c in &mut self.clocks {
                    c.prune_before(now);
                }
                let th = self.cfg.params.system.tick_nominal;
                self.queue.schedule(now + th, u32::MAX, RANK_SAMPLE, Ev::Sample)?;
                Ok(())
            }
        }
    }

    /// Processes events up to `t_end`, or until stabilization when `stop_on_stable`.
    pub fn run_until(&mut self, t_end: SimTime, stop_on_stable: bool) -> Result<(), SimError> {
        while let Some((_, ev)) = self.queue.pop_until(t_end) {
            self.step(ev)?;
            if stop_on_stable && self.stabilized.is_some() {
                break;
            }
        }
        Ok(())
    }

    /// Runs for `windows` accounting windows.
    pub fn run_windows(&mut self, windows: u64, stop_on_stable: bool) -> Result<(), SimError> {
        let t_end = windows as i64 * self.cfg.params.derived.window_sim;
        self.run_until(t_end, stop_on_stable)
    }

    pub fn stabilization_window(&self) -> Option<u64> {
        self.stabilized
    }

    /// Closes the trace and reports.
    pub fn finish(mut self) -> Result<(Summary, Trace), SimError> {
        let s = self.summary();
        let (t, stabilization_window, violations) = (s.end_time, s.stabilization_window, self.monitor.violations());
        let (pw, pm) = self.window_max;
        self.trace.emit(|| TraceEvent::Window { w: pw, max_spread: pm })?;
        self.trace.emit(|| TraceEvent::End {
            t,
            stabilization_window,
            violations,
        })?;
        self.trace.flush()?;
        Ok((s, self.trace))
    }

    pub fn summary(&self) -> Summary {
        let mut disagreements = 0u64;
        let mut k = 0;
        let log = &self.stb_log;
        while k < log.len() {
            let w = log[k].0;
            let mut j = k;
            let (mut t, mut f) = (false, false);
            while j < log.len() && log[j].0 == w {
                if log[j].2 {
                    t = true;
                } else {
                    f = true;
                }
                j += 1;
            }
            if t && f {
                disagreements += 1;
            }
            k = j;
        }
        let now = self.now();
        Summary {
            end_time: now,
            windows: (now / self.cfg.params.derived.window_sim) as u64,
            stabilization_window: self.stabilized,
            precision_violations: self.monitor.precision_violations,
            accuracy_violations: self.monitor.accuracy_violations,
            max_spread: self.monitor.max_spread,
            max_spread_since_stb: self.stabilized.map(|_| self.monitor.max_spread_since_start),
            resync_points: resync_points(&self.tosses, &self.honest_planes).len() as u64,
            stb_disagreements: disagreements,
            clamp_warnings: self.clamp_warnings,
            events: self.events,
        }
    }
}
