use std::sync::OnceLock;

use proptest::prelude::*;

use ietjoin::construction::{build_switch, SwitchSpec};
use ietjoin::joinings::{
    bary_recursion, kr_bounds, kr_distance, Atom, BaryState, DiscreteMeasure2D, KrOptions,
};
use ietjoin::params;
use ietjoin::towers::build_tower;
use ietjoin::{ExactIet, ExactRotation};

fn unit_brute(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm over all matchings
    let mut c = vec![0usize; n];
    let cost = |p: &[usize]| -> f64 {
        (0..n)
            .map(|i| (a[i].0 - b[p[i]].0).abs() + (a[i].1 - b[p[i]].1).abs())
            .sum()
    };
    best = best.min(cost(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best / n as f64
}

fn pts(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..=max)
}

fn uniform(p: &[(f64, f64)]) -> DiscreteMeasure2D {
    DiscreteMeasure2D::new(
        p.iter()
            .map(|&(x, y)| Atom {
                x,
                y,
                w: 1.0 / p.len() as f64,
            })
            .collect(),
    )
    .unwrap()
}

fn weighted(max: usize) -> impl Strategy<Value = DiscreteMeasure2D> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.05f64..1.0), 1..=max).prop_map(|v| {
        let s: f64 = v.iter().map(|a| a.2).sum();
        DiscreteMeasure2D::new(
            v.into_iter()
                .map(|(x, y, w)| Atom { x, y, w: w / s })
                .collect(),
        )
        .unwrap()
    })
}

/// Small exact 3-IETs, lengths up to 10^6.
fn small_iet() -> impl Strategy<Value = ExactIet> {
    (1u128..1_000_000, 1u128..1_000_000, 1u128..1_000_000)
        .prop_map(|(a, b, c)| ExactIet::new(a, b, c).unwrap())
}

fn golden_iet() -> &'static ExactIet {
    static S: OnceLock<ExactIet> = OnceLock::new();
    S.get_or_init(|| params::golden_type().iet)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kr_matches_brute_force((a, b) in (1usize..=6).prop_flat_map(|n| (prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), n), prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), n)))) {
        let d = kr_distance(&uniform(&a), &uniform(&b)).unwrap();
        prop_assert!((d - unit_brute(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn kr_is_a_metric(p in weighted(20), q in weighted(20), r in weighted(20)) {
        let pq = kr_distance(&p, &q).unwrap();
        prop_assert!((pq - kr_distance(&q, &p).unwrap()).abs() < 1e-9);
        prop_assert!(kr_distance(&p, &r).unwrap() <= pq + kr_distance(&q, &r).unwrap() + 1e-9);
        prop_assert!(kr_distance(&p, &p).unwrap().abs() < 1e-12);
        prop_assert!(pq >= 0.0);
    }

    #[test]
    fn kr_bounds_bracket_exact(a in pts(300), b in pts(300)) {
        let (mu, nu) = (uniform(&a), uniform(&b));
        let d = kr_distance(&mu, &nu).unwrap();
        let e = kr_bounds(&mu, &nu, &KrOptions::default()).unwrap();
        prop_assert!(e.lower <= d + 1e-9 && d <= e.upper + 1e-9, "{} {} {}", e.lower, d, e.upper);
    }

    #[test]
    fn psi_is_additive(iet in small_iet(), y in any::<u128>(), m1 in 0u128..5000, m2 in 0u128..5000) {
        let rot = iet.rotation();
        let y = y % rot.d;
        let left = rot.psi(y, m1 + m2);
        prop_assert_eq!(left, rot.psi(y, m1) + rot.psi(rot.rot(y, m1), m2));
        let brute = (0..m1).filter(|&u| rot.rot(y, u) < rot.n).count() as u128;
        prop_assert_eq!(rot.psi(y, m1), brute);
    }

    #[test]
    fn powers_compose(iet in small_iet(), y in any::<u128>(), j in -3000i128..3000, k in -3000i128..3000) {
        let y = y % iet.total();
        prop_assert_eq!(iet.pow(j + k, y), iet.pow(j, iet.pow(k, y)));
        prop_assert_eq!(iet.pow(-k, iet.pow(k, y)), y);
        let mut cache = Vec::new();
        prop_assert_eq!(iet.pow_cached(k, y, &mut cache), iet.pow(k, y));
        let mut z = y;
        for _ in 0..k.unsigned_abs().min(50) {
            z = if k >= 0 { iet.apply(z) } else { iet.apply_inv(z) };
        }
        prop_assert_eq!(iet.pow(k.signum() * k.abs().min(50), y), z);
    }

    #[test]
    fn rotation_first_return_is_t(iet in small_iet(), y in any::<u128>()) {
        let rot: ExactRotation = iet.rotation();
        let y = y % rot.n;
        let mut z = rot.rot(y, 1);
        while z >= rot.n {
            z = rot.rot(z, 1);
        }
        prop_assert_eq!(z, iet.apply(y));
    }

    #[test]
    fn tower_levels_chain(iet in small_iet(), a in 0.0f64..0.9, w in 0.0005f64..0.01, n in 1u128..40, off in 0.0f64..1.0) {
        let tot = iet.total();
        let lo = (a * tot as f64) as u128;
        let hi = (lo + ((w * tot as f64) as u128).max(1)).min(tot);
        if let Ok(t) = build_tower(&iet, lo, hi, n) {
            let o = ((off * t.width() as f64) as u128).min(t.width() - 1);
            for i in 0..t.levels.len() - 1 {
                prop_assert_eq!(iet.apply(t.levels[i] + o), t.levels[i + 1] + o);
            }
            let mut sorted = t.sorted_levels();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), t.levels.len());
            for w2 in sorted.windows(2) {
                prop_assert!(w2[1] - w2[0] >= t.width());
            }
        }
    }

    #[test]
    fn bary_preserves_mean(g in prop::collection::vec(0.0f64..1.0, 2..6), a in 0.05f64..0.5, b in 0.05f64..0.5, steps in 1usize..30) {
        let st = BaryState { d: g.len(), gamma: g.clone(), a: vec![a], b: vec![b], delta: vec![] };
        let r = bary_recursion(&st, steps).unwrap();
        let m0 = r.means[0];
        for m in &r.means {
            prop_assert!((m - m0).abs() < 1e-12);
        }
        for w in r.gaps.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn switch_exponent_and_shadowing(a in -4i128..=4, b in -4i128..=4, u in 0.0f64..1.0) {
        prop_assume!(a != b);
        let iet = golden_iet();
        let mut spec = SwitchSpec::new(a, b, 0.05);
        spec.samples = 0;
        let r = build_switch(iet, &spec).unwrap();
        let delta = a - b;
        prop_assert_eq!(r.n, b + (r.m as i128 + 1) * delta);
        prop_assert_eq!(r.n, a + r.m as i128 * delta);
        // chain T^{a + i m sgn} x, consecutive points one s-step apart
        let x = ((u * iet.total() as f64) as u128).min(iet.total() - 1);
        prop_assume!(r.in_a(x));
        let step = |i: i128| iet.coord(iet.pow(a + i * r.m as i128 * delta.signum(), x));
            let bound = r.s.unsigned_abs() as f64 / iet.total() as f64 * (1.0 + 1e-6);
            for i in 1..=delta.abs() {
            prop_assert!((step(i) - step(i - 1)).abs() <= bound);
        }
        prop_assert!((iet.coord(iet.pow(r.n, x)) - iet.coord(iet.pow(a, x))).abs() <= delta.abs() as f64 * bound);
    }
}
