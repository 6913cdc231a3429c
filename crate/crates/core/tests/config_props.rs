use proptest::prelude::*;

use ssbcs_core::config::{big_to_f64, derive, reference_schedule, reference_system, validate, SystemParams};

fn sys(n0: usize, f0: usize) -> SystemParams {
    SystemParams {
        n0,
        f0,
        ..reference_system()
    }
}

#[test]
fn reference_file_matches_builtin() {
    let text = include_str!("../../../scenarios/reference.toml");
    let sc = ssbcs_core::scenario::Scenario::from_toml(text, true).unwrap();
    assert_eq!(sc.file.system, reference_system());
    assert_eq!(sc.file.schedule, reference_schedule());
}

#[test]
fn k0_never_grows_with_n0() {
    for f0 in 1..=3 {
        let mut prev = u32::MAX;
        for n0 in 3 * f0 + 1..=40 {
            let d = derive(&sys(n0, f0), &reference_schedule()).unwrap();
            assert!(d.k0 <= prev, "n0={n0} f0={f0}");
            prev = d.k0;
        }
    }
}

#[test]
fn long_horizon_failure_is_negligible_at_the_closed_form() {
    // every q1 at or above 1/(90 e^2) leaves (1 - q1)^10000 below 3e-7
    let q = 1.0 / (90.0 * std::f64::consts::E.powi(2));
    assert!((1.0 - q).powi(10_000) < 3e-7);
    for n0 in 13..=30 {
        let d = derive(&sys(n0, 1), &reference_schedule()).unwrap();
        let q1 = big_to_f64(&d.q1_bound);
        if q1 >= q {
            assert!((1.0 - q1).powi(10_000) < 3e-7);
        }
    }
}

#[test]
fn defaults_follow_g0() {
    for n0 in 4..=20 {
        let d = derive(&sys(n0, 1), &reference_schedule()).unwrap();
        let g = d.g0 as i64;
        assert_eq!(d.q0, num_rational::Rational64::new(1, 2 * g + 1));
        assert_eq!(d.p0, num_rational::Rational64::new(g, g + 1));
        assert_eq!(d.g0, 3 + d.k0);
    }
}

proptest! {
    #[test]
    fn derive_is_pure(n0 in 4usize..30, a0 in 1u32..6, t0 in 60u64..200) {
        let s = SystemParams { n0, a0, t0, tau_max: 100_000, ..reference_system() };
        let sched = reference_schedule();
        prop_assume!(validate(&s, &sched).passed());
        let a = derive(&s, &sched).unwrap();
        let b = derive(&s, &sched).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fault_bounds_are_enforced(n0 in 1usize..12, f0 in 0usize..4, n1 in 1usize..6, f1 in 0usize..3) {
        let s = SystemParams { n0, f0, n1, f1, ..reference_system() };
        let r = validate(&s, &reference_schedule());
        if n0 <= 3 * f0 {
            prop_assert!(r.violations.iter().any(|v| v.contains("n0 > 3*f0")));
        }
        if n1 <= 2 * f1 {
            prop_assert!(r.violations.iter().any(|v| v.contains("n1 > 2*f1")));
        }
    }
}
