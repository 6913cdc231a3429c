//! Per-node protocol state machines: the MES relay/filter side and the MWS
//! side with SIG generation, coin tossing and clock adjustment.
//!
//! The machines are passive. The simulator decides when a slot boundary or a
//! message arrival happens and calls the matching method with the node's
//! current hardware-clock reading.

use num_rational::Rational64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Params;
use crate::ftcore::{
    self, bernoulli, AccMatrix, ClockMatrix, FtError, FtParams, Matrix, MsgMatrix, RftBranch,
};
use crate::ring::RingValue;

/// Everything a state machine needs from the configuration.
#[derive(Debug, Clone, Copy)]
pub struct ProtoCtx {
    pub ft: FtParams,
    pub delta_tt0: RingValue,
    pub delta_tt1: RingValue,
    pub delta_tt2: RingValue,
    pub delta_tt3: RingValue,
    pub q0: Rational64,
    pub p0: Rational64,
    pub g0: u32,
    pub t0: u64,
}

impl ProtoCtx {
    pub fn new(p: &Params) -> Self {
        let d = &p.derived;
        ProtoCtx {
            ft: FtParams::from_params(p),
            delta_tt0: d.delta_tt0,
            delta_tt1: d.delta_tt1,
            delta_tt2: d.delta_tt2,
            delta_tt3: d.delta_tt3,
            q0: d.q0,
            p0: d.p0,
            g0: d.g0,
            t0: p.system.t0,
        }
    }

    pub fn tau_max(&self) -> u64 {
        self.ft.ring.modulus()
    }
}

/// MES → plane message: the MES's view of every plane.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TTMessageUp {
    pub sender: usize,
    pub c_vec: Vec<Option<RingValue>>,
    pub a_vec: Vec<u32>,
    pub m_vec: Vec<Option<RingValue>>,
}

/// Plane → MES clock message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TTMessageDown {
    pub plane: usize,
    pub m: RingValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MesState {
    pub m_rec: Vec<Option<RingValue>>,
    pub h_rec: Vec<Option<RingValue>>,
    pub c_tilde: Vec<Option<RingValue>>,
    pub prev_m: Vec<Option<RingValue>>,
    pub prev_h: Vec<Option<RingValue>>,
    pub acc: Vec<u32>,
    pub clock_offset: RingValue,
}

impl MesState {
    /// A cold MES without records.
    pub fn new(n1: usize) -> Self {
        MesState {
            m_rec: vec![None; n1],
            h_rec: vec![None; n1],
            c_tilde: vec![None; n1],
            prev_m: vec![None; n1],
            prev_h: vec![None; n1],
            acc: vec![0; n1],
            clock_offset: RingValue::new(0),
        }
    }

    pub fn clock(&self, h: RingValue, ctx: &ProtoCtx) -> RingValue {
        ctx.ft.ring.add(h, self.clock_offset)
    }

    /// Records a clock message from plane `p`; `h_now` is the hardware reading
    /// the record is stamped with.
    pub fn on_clock_msg(&mut self, p: usize, m: RingValue, h_now: RingValue, ctx: &ProtoCtx) {
        let ring = ctx.ft.ring;
        self.prev_m[p] = self.m_rec[p];
        self.prev_h[p] = self.h_rec[p];
        let h = ring.add(h_now, ctx.delta_tt0);
        self.m_rec[p] = Some(m);
        self.h_rec[p] = Some(h);
        self.c_tilde[p] = Some(ring.sub(m, h));
        self.acc[p] = match (self.prev_m[p], self.prev_h[p]) {
            (Some(mp), Some(hp)) => {
                let ok = ftcore::accuracy_check(m, mp, h, hp, &ctx.ft);
                ftcore::update_acc_counter(self.acc[p].min(ctx.ft.a0), ok, ctx.ft.a0)
            }
            _ => 0,
        };
    }

    /// Builds the vector this MES sends upward at the beginning of its send slot.
    pub fn on_begin_vc_send(&self, sender: usize, h_now: RingValue, ctx: &ProtoCtx) -> TTMessageUp {
        let ring = ctx.ft.ring;
        let shift = ring.add(h_now, ctx.delta_tt1);
        TTMessageUp {
            sender,
            c_vec: self.c_tilde.iter().map(|c| c.map(|c| ring.add(c, shift))).collect(),
            a_vec: self.acc.clone(),
            m_vec: self.m_rec.clone(),
        }
    }

    /// Re-derives the local clock from the records at the end of a receive
    /// slot. Returns the new clock value, or `None` when no record exists.
    pub fn on_end_c_recv(&mut self, h_now: RingValue, ctx: &ProtoCtx) -> Option<RingValue> {
        let ring = ctx.ft.ring;
        // c̄_q = c̃_q ⊕ H ⊖ δ_tt2 and C = med(c̄) ⊕ δ_tt2, which cancels to med(c̃_q ⊕ H)
        let proj = self.c_tilde.iter().map(|c| c.map(|c| ring.add(c, h_now)));
        let c = ring.med_present(proj)?;
        self.clock_offset = ring.sub(c, h_now);
        Some(c)
    }
}

/// How an MWS chose its next clock value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustRule {
    Fta,
    Weak,
    Own,
    Rft(RftBranch),
    /// FTA lacked data; kept the projected own clock.
    Fallback,
}

/// Record of one exchanging-window decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowDecision {
    pub head: bool,
    pub grand_life_before: u32,
    pub grand_life_after: u32,
    pub stb: bool,
    pub weak: Option<RingValue>,
    pub rule: AdjustRule,
    pub c_new: RingValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MwsState {
    pub grand_life: u32,
    pub b_coin: bool,
    /// `tau_max` encodes the idle sentinel.
    pub tau_idl: u64,
    pub c_tilde_old: RingValue,
    pub c_new: Option<RingValue>,
    latched: Option<RingValue>,
    pub c_mat: ClockMatrix,
    pub a_mat: AccMatrix,
    pub m_mat: MsgMatrix,
    received: Vec<bool>,
    pub clock_offset: RingValue,
}

impl MwsState {
    pub fn new(ctx: &ProtoCtx) -> Self {
        let (n1, n0) = (ctx.ft.n1, ctx.ft.n0);
        MwsState {
            grand_life: 0,
            b_coin: false,
            tau_idl: ctx.tau_max(),
            c_tilde_old: RingValue::new(0),
            c_new: None,
            latched: None,
            c_mat: Matrix::new(n1, n0),
            a_mat: Matrix::new(n1, n0),
            m_mat: Matrix::new(n1, n0),
            received: vec![false; n0],
            clock_offset: RingValue::new(0),
        }
    }

    pub fn clock(&self, h: RingValue, ctx: &ProtoCtx) -> RingValue {
        ctx.ft.ring.add(h, self.clock_offset)
    }

    pub fn is_idle(&self, ctx: &ProtoCtx) -> bool {
        self.tau_idl >= ctx.tau_max()
    }

    /// Per-tick SIG logic; returns whether a SIG is emitted at this tick.
    pub fn on_tick(&mut self, h_now: RingValue, ctx: &ProtoCtx) -> bool {
        let ring = ctx.ft.ring;
        if self.is_idle(ctx) {
            if self.clock(h_now, ctx).get() % ctx.ft.t == 0 {
                self.tau_idl = ring.add(h_now, ring.reduce(ctx.t0 as i128)).get();
                return true;
            }
        } else if ring.sub(RingValue::new(self.tau_idl), h_now).get() > ctx.t0 {
            self.tau_idl = ctx.tau_max();
        }
        false
    }

    /// Smallest `k >= 1` such that [`on_tick`](Self::on_tick) at `h_now + k`
    /// changes the state, assuming nothing else happens in between.
    pub fn ticks_to_next_action(&self, h_now: RingValue, ctx: &ProtoCtx) -> u64 {
        let ring = ctx.ft.ring;
        let t = ctx.ft.t;
        if self.is_idle(ctx) {
            let c = self.clock(h_now, ctx).get();
            if ctx.tau_max() % t == 0 {
                return t - c % t;
            }
            (1..=ctx.tau_max())
                .find(|k| (c + k) % ctx.tau_max() % t == 0)
                .unwrap_or(ctx.tau_max())
        } else {
            let d = ring.sub(RingValue::new(self.tau_idl), h_now).get();
            if d >= ctx.t0 + 2 {
                1
            } else {
                d + 1
            }
        }
    }

    /// Opens the receive slot: clears the matrices of the previous round.
    pub fn on_begin_mc_recv(&mut self) {
        self.c_mat.clear();
        self.a_mat.clear();
        self.m_mat.clear();
        self.received.iter_mut().for_each(|r| *r = false);
        self.c_new = None;
        self.latched = None;
    }

    /// Stores one MES column. Returns false (and ignores the message) when a
    /// column from that sender already arrived this round.
    pub fn on_up_msg(&mut self, msg: &TTMessageUp, ctx: &ProtoCtx) -> bool {
        let i = msg.sender;
        if i >= self.received.len() || self.received[i] {
            return false;
        }
        self.received[i] = true;
        for q in 0..ctx.ft.n1 {
            self.c_mat.set(q, i, msg.c_vec.get(q).copied().flatten());
            self.a_mat.set(q, i, msg.a_vec.get(q).map(|a| (*a).min(ctx.ft.a0)));
            self.m_mat.set(q, i, msg.m_vec.get(q).copied().flatten());
        }
        true
    }

    /// Coin toss, grandmaster bookkeeping and the choice of `c_new`.
    pub fn on_end_mc_recv<R: Rng + ?Sized>(&mut self, h_now: RingValue, rng: &mut R, ctx: &ProtoCtx) -> WindowDecision {
        let ring = ctx.ft.ring;
        let own = ring.add(self.clock(h_now, ctx), ctx.delta_tt3);
        let head = bernoulli(rng, ctx.q0);
        self.b_coin = head;
        let grand_life_before = self.grand_life;
        if head {
            self.grand_life = ctx.g0;
        }
        let fr = ftcore::filters(&self.m_mat, &self.a_mat, &ctx.ft);
        let stb = ftcore::check_stb(&self.c_mat, &fr.p_acma, &ctx.ft);
        let fta_or_own = |c: &ClockMatrix| match ftcore::fta(c, &ctx.ft) {
            Ok(v) => (v, AdjustRule::Fta),
            Err(_) => (own, AdjustRule::Fallback),
        };
        let mut weak = None;
        let (c_new, rule) = if self.grand_life > 0 {
            self.grand_life -= 1;
            if !self.b_coin || stb {
                fta_or_own(&self.c_mat)
            } else {
                weak = ftcore::check_weak(&self.c_mat, &ctx.ft);
                match weak {
                    Some(w) => (w, AdjustRule::Weak),
                    None => (own, AdjustRule::Own),
                }
            }
        } else if stb {
            fta_or_own(&self.c_mat)
        } else {
            let c_pre = ring.add(ring.add(h_now, ctx.delta_tt3), self.c_tilde_old);
            match ftcore::rft(&self.c_mat, c_pre, ctx.p0, rng, &ctx.ft) {
                Ok((v, b)) => (v, AdjustRule::Rft(b)),
                Err(FtError::Unsupported(msg)) => panic!("{msg}"),
                Err(_) => (own, AdjustRule::Fallback),
            }
        };
        self.c_new = Some(c_new);
        WindowDecision {
            head,
            grand_life_before,
            grand_life_after: self.grand_life,
            stb,
            weak,
            rule,
            c_new,
        }
    }

    /// Latches `c_new` for sending; `None` when no decision was made this round.
    pub fn on_begin_c_send(&mut self, plane: usize) -> Option<TTMessageDown> {
        self.latched = self.c_new;
        self.latched.map(|m| TTMessageDown { plane, m })
    }

    /// Applies the latched value. Returns the signed adjustment in ticks, if any.
    pub fn on_end_c_send(&mut self, h_now: RingValue, ctx: &ProtoCtx) -> Option<i64> {
        let ring = ctx.ft.ring;
        let before = self.clock(h_now, ctx);
        self.c_tilde_old = ring.sub(before, h_now);
        self.tau_idl = ctx.tau_max();
        let target = self.latched.take()?;
        self.clock_offset = ring.sub(target, h_now);
        Some(ring.signed_diff(target, before))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{reference_schedule, reference_system};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> ProtoCtx {
        ProtoCtx::new(&Params::new(reference_system(), reference_schedule()).unwrap())
    }

    #[test]
    fn first_message_sets_records() {
        let c = ctx();
        let mut s = MesState::new(3);
        s.on_clock_msg(1, 500.into(), 100.into(), &c);
        let h = c.ft.ring.add(100.into(), c.delta_tt0);
        assert_eq!(s.m_rec[1], Some(500.into()));
        assert_eq!(s.h_rec[1], Some(h));
        assert_eq!(s.c_tilde[1], Some(c.ft.ring.sub(500.into(), h)));
        assert_eq!(s.acc[1], 0);
    }

    #[test]
    fn periodic_messages_reach_cap() {
        let c = ctx();
        let r = c.ft.ring;
        let mut s = MesState::new(3);
        let (mut m, mut h) = (RingValue::new(17), RingValue::new(900));
        for round in 0..=c.ft.a0 {
            s.on_clock_msg(0, m, h, &c);
            assert_eq!(s.acc[0], round);
            m = r.shift(m, c.ft.t as i64);
            h = r.shift(h, c.ft.t as i64);
        }
        s.on_clock_msg(0, r.shift(m, 3 * c.ft.eps0 as i64), h, &c);
        assert_eq!(s.acc[0], 0);
    }

    #[test]
    fn vc_send_projection() {
        let mut c = ctx();
        c.ft.ring = crate::ring::Ring::new(1000).unwrap();
        c.delta_tt1 = 30.into();
        let mut s = MesState::new(3);
        s.c_tilde[1] = Some(500.into());
        let up = s.on_begin_vc_send(2, 200.into(), &c);
        assert_eq!(up.c_vec, vec![None, Some(730.into()), None]);
        assert_eq!(up, s.on_begin_vc_send(2, 200.into(), &c));
        let cold = MesState::new(3).on_begin_vc_send(0, 5.into(), &c);
        assert!(cold.c_vec.iter().all(Option::is_none));
    }

    #[test]
    fn end_c_recv_uses_median() {
        let c = ctx();
        let r = c.ft.ring;
        let mut s = MesState::new(3);
        assert_eq!(s.on_end_c_recv(50.into(), &c), None);
        assert_eq!(s.clock_offset, RingValue::new(0));
        let h = RingValue::new(40);
        for (q, v) in [100u64, 900, 102].into_iter().enumerate() {
            s.c_tilde[q] = Some(r.sub(v.into(), h));
        }
        assert_eq!(s.on_end_c_recv(h, &c), Some(102.into()));
        assert_eq!(s.clock(h, &c), 102.into());
    }

    #[test]
    fn sig_and_watchdog() {
        let c = ctx();
        let r = c.ft.ring;
        let mut s = MwsState::new(&c);
        assert!(s.on_tick(0.into(), &c));
        assert_eq!(s.tau_idl, c.t0);
        assert!(!s.is_idle(&c));
        // no further SIG while busy; watchdog re-arms after T0 + 1 ticks
        for k in 1..=c.t0 {
            assert!(!s.on_tick(r.shift(0.into(), k as i64), &c));
            assert!(!s.is_idle(&c));
        }
        assert!(!s.on_tick(r.shift(0.into(), c.t0 as i64 + 1), &c));
        assert!(s.is_idle(&c));
    }

    #[test]
    fn next_action_matches_tick_walk() {
        let c = ctx();
        let r = c.ft.ring;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut s = MwsState::new(&c);
            s.clock_offset = r.reduce(rng.gen_range(0..c.tau_max()) as i128);
            if rng.gen_bool(0.5) {
                s.tau_idl = rng.gen_range(0..c.tau_max());
            }
            let h0 = r.reduce(rng.gen_range(0..c.tau_max()) as i128);
            let k = s.ticks_to_next_action(h0, &c);
            let mut walk = s.clone();
            for j in 1..k {
                let before = walk.clone();
                walk.on_tick(r.shift(h0, j as i64), &c);
                assert_eq!(walk, before);
            }
            let before = walk.clone();
            walk.on_tick(r.shift(h0, k as i64), &c);
            assert_ne!(walk, before);
        }
    }

    #[test]
    fn grandmaster_keeps_clock_without_conditions() {
        let mut c = ctx();
        c.q0 = Rational64::new(1, 1);
        let mut s = MwsState::new(&c);
        s.on_begin_mc_recv();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = RingValue::new(1234);
        let d = s.on_end_mc_recv(h, &mut rng, &c);
        assert!(d.head);
        assert_eq!(d.grand_life_after, c.g0 - 1);
        assert_eq!(d.rule, AdjustRule::Own);
        assert_eq!(d.c_new, c.ft.ring.add(s.clock(h, &c), c.delta_tt3));
    }

    #[test]
    fn stable_matrix_uses_fta() {
        let mut c = ctx();
        c.q0 = Rational64::new(0, 1);
        let mut s = MwsState::new(&c);
        s.on_begin_mc_recv();
        for i in 0..c.ft.n0 {
            s.on_up_msg(
                &TTMessageUp {
                    sender: i,
                    c_vec: vec![Some(700.into()); 3],
                    a_vec: vec![c.ft.a0; 3],
                    m_vec: vec![Some(40.into()); 3],
                },
                &c,
            );
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = s.on_end_mc_recv(5.into(), &mut rng, &c);
        assert!(d.stb);
        assert_eq!((d.rule, d.c_new), (AdjustRule::Fta, 700.into()));
        assert_eq!(s.on_begin_c_send(2), Some(TTMessageDown { plane: 2, m: 700.into() }));
        let h = RingValue::new(150);
        let before = s.clock(h, &c);
        s.on_end_c_send(h, &c);
        assert_eq!(s.c_tilde_old, c.ft.ring.sub(before, h));
        assert_eq!(s.clock(h, &c), 700.into());
        assert!(s.is_idle(&c));
    }

    #[test]
    fn duplicate_columns_ignored() {
        let c = ctx();
        let mut s = MwsState::new(&c);
        s.on_begin_mc_recv();
        let msg = |v: u64| TTMessageUp {
            sender: 1,
            c_vec: vec![Some(v.into()); 3],
            a_vec: vec![0; 3],
            m_vec: vec![None; 3],
        };
        assert!(s.on_up_msg(&msg(10), &c));
        assert!(!s.on_up_msg(&msg(20), &c));
        assert_eq!(s.c_mat.get(0, 1), Some(10.into()));
    }

    #[test]
    fn aborted_round_emits_nothing() {
        let c = ctx();
        let mut s = MwsState::new(&c);
        s.on_begin_mc_recv();
        assert_eq!(s.on_begin_c_send(0), None);
        assert_eq!(s.on_end_c_send(9.into(), &c), None);
    }
}
