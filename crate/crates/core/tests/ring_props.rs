use proptest::prelude::*;

use ssbcs_core::ring::{Ring, RingValue};

fn rv(v: u64) -> RingValue {
    RingValue::new(v)
}

#[test]
fn add_sub_inverse_exhaustive() {
    for tau in 2..=64 {
        let r = Ring::new(tau).unwrap();
        for a in 0..tau {
            for b in 0..tau {
                let s = r.wrap_add(rv(a), rv(b)).unwrap();
                assert_eq!(r.wrap_sub(s, rv(b)).unwrap(), rv(a));
            }
        }
    }
}

#[test]
fn triangle_inequality_exhaustive() {
    for tau in 2..=32 {
        let r = Ring::new(tau).unwrap();
        for a in 0..tau {
            for b in 0..tau {
                let ab = r.dist(rv(a), rv(b));
                assert!(ab <= tau / 2);
                assert_eq!(ab, r.dist(rv(b), rv(a)));
                for c in 0..tau {
                    assert!(r.dist(rv(a), rv(c)) <= ab + r.dist(rv(b), rv(c)));
                }
            }
        }
    }
}

/// Median after cutting at every candidate gap; keeps the cut with the largest gap.
fn brute_median(tau: u64, vals: &[u64]) -> u64 {
    let mut s = vals.to_vec();
    s.sort_unstable();
    let n = s.len();
    let best = (0..n)
        .max_by_key(|&j| {
            let prev = s[(j + n - 1) % n];
            let gap = (s[j] + tau - prev) % tau;
            (if gap == 0 && n > 1 && s[0] == s[n - 1] { tau } else { gap }, std::cmp::Reverse(s[j]))
        })
        .unwrap();
    let rot: Vec<u64> = s[best..].iter().chain(&s[..best]).copied().collect();
    rot[(n - 1) / 2]
}

fn unique_largest_gap(tau: u64, vals: &[u64]) -> bool {
    let mut s = vals.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() < 2 {
        return true;
    }
    let n = s.len();
    let mut gaps: Vec<u64> = (0..n).map(|j| (s[j] + tau - s[(j + n - 1) % n]) % tau).collect();
    gaps.sort_unstable();
    gaps[n - 1] > gaps[n - 2]
}

fn multiset() -> impl Strategy<Value = (u64, Vec<u64>)> {
    (2u64..5000).prop_flat_map(|tau| (Just(tau), prop::collection::vec(0..tau, 1..12)))
}

proptest! {
    #[test]
    fn median_is_a_member((tau, v) in multiset()) {
        let r = Ring::new(tau).unwrap();
        let vals: Vec<RingValue> = v.iter().map(|&x| rv(x)).collect();
        let m = r.ring_med(&vals).unwrap();
        prop_assert!(vals.contains(&m));
    }

    #[test]
    fn median_matches_brute_force((tau, v) in multiset()) {
        let r = Ring::new(tau).unwrap();
        let vals: Vec<RingValue> = v.iter().map(|&x| rv(x)).collect();
        prop_assert_eq!(r.ring_med(&vals).unwrap().get(), brute_median(tau, &v));
    }

    #[test]
    fn median_rotation_equivariant((tau, v) in multiset(), k in 0u64..5000) {
        prop_assume!(unique_largest_gap(tau, &v));
        let r = Ring::new(tau).unwrap();
        let k = k % tau;
        let vals: Vec<RingValue> = v.iter().map(|&x| rv(x)).collect();
        let shifted: Vec<RingValue> = v.iter().map(|&x| rv((x + k) % tau)).collect();
        let m = r.ring_med(&vals).unwrap();
        prop_assert_eq!(r.ring_med(&shifted).unwrap(), r.add(m, rv(k)));
    }

    #[test]
    fn circ_sort_is_order_independent((tau, v) in multiset(), seed in any::<u64>()) {
        let r = Ring::new(tau).unwrap();
        let vals: Vec<RingValue> = v.iter().map(|&x| rv(x)).collect();
        let mut perm = vals.clone();
        let n = perm.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(r.circ_sort(&vals).unwrap(), r.circ_sort(&perm).unwrap());
    }

    #[test]
    fn circ_sort_arc_skips_largest_gap((tau, v) in multiset()) {
        let r = Ring::new(tau).unwrap();
        let vals: Vec<RingValue> = v.iter().map(|&x| rv(x)).collect();
        let s = r.circ_sort(&vals).unwrap();
        // walking the output never wraps past its start
        let mut walked = 0;
        for w in s.windows(2) {
            walked += r.sub(w[1], w[0]).get();
        }
        prop_assert!(walked < tau);
        prop_assert_eq!(walked, r.spread(&vals));
    }
}
