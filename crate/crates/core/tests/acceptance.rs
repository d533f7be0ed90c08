//! Acceptance criteria. Each test prints one PASS/FAIL line and asserts it.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ietjoin::construction::{build_switch, non_simplicity_witness, SwitchSpec, WitnessConfig};
use ietjoin::joinings::{
    approx_by_powers, bary_recursion, kr_distance, sample_product, transport_exact,
    weak_closure_check, Atom, BaryState, DiscreteMeasure2D, TestFunction,
};
use ietjoin::params;
use ietjoin::renorm::{crossing_count_at, find_renorm_times};
use ietjoin::towers::{build_tower, suggest_towers};
use ietjoin::Iet3;

fn report(id: u32, name: &str, pass: bool, elapsed: Duration, limit: Duration, detail: String) {
    let ok = pass && elapsed < limit;
    println!(
        "criterion {id} [{}] {name}: {detail}; {:.1}s of {:.0}s",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(elapsed < limit, "criterion {id} over time: {elapsed:?}");
}

#[test]
fn criterion_1_rotation_correspondence() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut checked, mut undefined, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..1000 {
        let mut l: [f64; 3] = [
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.01..1.0),
            rng.gen_range(0.01..1.0),
        ];
        let s: f64 = l.iter().sum();
        l.iter_mut().for_each(|v| *v /= s);
        let iet = Iet3::new(l[0], l[1], l[2]).unwrap();
        let rot = iet.to_rotation();
        for _ in 0..10 {
            let x: f64 = rng.gen_range(0.0..1.0);
            let m: u64 = rng.gen_range(1..=10_000);
            let y0 = x * rot.kappa;
            let mut y = y0;
            let mut near = false;
            for _ in 0..m {
                y = rot.rotate(y);
                near |= y < 1e-11
                    || (y - rot.kappa).abs() < 1e-11
                    || (y - (1.0 - rot.alpha)).abs() < 1e-11;
            }
            if y >= rot.kappa || near {
                undefined += 1;
                continue;
            }
            let k = rot.psi_count(rot.rotate(y0), m).unwrap();
            let tx = iet.apply_pow(k as i64, x).unwrap();
            worst = worst.max((tx - y / rot.kappa).abs());
            checked += 1;
        }
    }
    let pass = checked > 1000 && worst <= 1e-9;
    report(
        1,
        "rotation correspondence",
        pass,
        t0.elapsed(),
        Duration::from_secs(30),
        format!("{checked} pairs checked ({undefined} undefined), max error {worst:.3e}"),
    );
}

#[test]
fn criterion_2_tower_rigidity() {
    let t0 = Instant::now();
    let g = params::golden_type();
    let cands = suggest_towers(&g.iet, 20);
    let good: Vec<_> = cands
        .iter()
        .filter(|c| {
            let s = &c.stats;
            s.coverage > 0.9
                && s.rigidity < 0.05
                && s.tilde_measure <= s.hat_measure
                && s.hat_measure <= s.coverage
        })
        .collect();
    let detail = match good.first() {
        Some(c) => format!(
            "q = {} height {}: coverage {:.4}, rigidity {:.2e}, tilde {:.4} <= hat {:.4}",
            c.q,
            c.height,
            c.stats.coverage,
            c.stats.rigidity,
            c.stats.tilde_measure,
            c.stats.hat_measure
        ),
        None => format!("no qualifying tower among {} candidates", cands.len()),
    };
    report(
        2,
        "tower rigidity",
        !good.is_empty() && cands.len() <= 20,
        t0.elapsed(),
        Duration::from_secs(120),
        detail,
    );
}

#[test]
fn criterion_3_crossing_dichotomy() {
    let g = params::golden_type();
    let rot = g.rotation();
    let search = find_renorm_times(&g.iet, 0.3, 40.0).unwrap();
    assert!(!search.accepted.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut lines = Vec::new();
    let mut pass = true;
    let mut slowest = Duration::ZERO;
    for rt in &search.accepted {
        let t0 = Instant::now();
        let (mut lo, mut hi) = (0usize, 0usize);
        let n = 10_000;
        for _ in 0..n {
            let x = rng.gen_range(0..rot.n);
            let c = crossing_count_at(&rot, rt.q, x);
            if c == rt.m {
                lo += 1;
            } else if c == rt.m + 1 {
                hi += 1;
            }
        }
        slowest = slowest.max(t0.elapsed());
        let (f_lo, f_hi) = (lo as f64 / n as f64, hi as f64 / n as f64);
        pass &= f_lo + f_hi >= 0.99 && f_lo >= 0.1 && f_hi >= 0.1;
        lines.push(format!("q={} m={}: {:.3}/{:.3}", rt.q, rt.m, f_lo, f_hi));
    }
    report(
        3,
        "crossing dichotomy",
        pass,
        slowest,
        Duration::from_secs(60),
        lines.join(", "),
    );
}

#[test]
fn criterion_4_switch_verification() {
    let t0 = Instant::now();
    let g = params::golden_type();
    let res = build_switch(&g.iet, &SwitchSpec::new(0, 1, 0.05)).unwrap();
    let rep = &res.report;
    let failing: Vec<&str> = rep
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.as_str())
        .collect();
    let detail = format!(
        "n = {}, shadowing {:.4}/{:.4}, measures {:.4}/{:.4}, return {} vs 1.5r = {}, KR {:.4}/{:.4} < {:.4}{}",
        res.n,
        rep.shadow_a.as_ref().map_or(0.0, |s| s.fraction),
        rep.shadow_b.as_ref().map_or(0.0, |s| s.fraction),
        res.measure_a,
        res.measure_b,
        rep.return_lower,
        3 * res.r / 2,
        rep.kr_a_max,
        rep.kr_b_max,
        rep.kr_bound,
        if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
    );
    let pass = res.verified && rep.samples == 10_000 && rep.checks.len() == 7;
    report(
        4,
        "switch verification",
        pass,
        t0.elapsed(),
        Duration::from_secs(300),
        detail,
    );
}

#[test]
fn criterion_5_weak_closure() {
    let t0 = Instant::now();
    let g = params::golden_type();
    let mut spec = SwitchSpec::new(0, 1, 0.05);
    spec.samples = 0;
    let sw = build_switch(&g.iet, &spec).unwrap();
    let rep =
        weak_closure_check(&g.iet, 1, sw.n.unsigned_abs() + 100, 100_000, 5, Some(sw.n)).unwrap();
    let detail = format!(
        "switch n = {}, best n = {}, KR error {:.4}",
        sw.n, rep.best_n, rep.kr_error
    );
    report(
        5,
        "weak closure",
        rep.kr_error <= 0.1,
        t0.elapsed(),
        Duration::from_secs(300),
        detail,
    );
}

fn brute_unit(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    fn rec(
        a: &[(f64, f64)],
        b: &[(f64, f64)],
        used: &mut Vec<bool>,
        i: usize,
        acc: f64,
        best: &mut f64,
    ) {
        if i == a.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..b.len() {
            if !used[j] {
                used[j] = true;
                let c = (a[i].0 - b[j].0).abs() + (a[i].1 - b[j].1).abs();
                rec(a, b, used, i + 1, acc + c, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(a, b, &mut vec![false; b.len()], 0, 0.0, &mut best);
    best / a.len() as f64
}

fn random_points(rng: &mut ChaCha8Rng, k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
        .collect()
}

/// Weights that are multiples of 1/6, expanded into six unit atoms.
fn sixths(rng: &mut ChaCha8Rng) -> (Vec<Atom>, Vec<(f64, f64)>) {
    let k = rng.gen_range(1..=6);
    let pts = random_points(rng, k);
    let mut counts = vec![1usize; k];
    for _ in k..6 {
        counts[rng.gen_range(0..k)] += 1;
    }
    let atoms = pts
        .iter()
        .zip(&counts)
        .map(|(&(x, y), &c)| Atom {
            x,
            y,
            w: c as f64 / 6.0,
        })
        .collect();
    let units = pts
        .iter()
        .zip(&counts)
        .flat_map(|(&p, &c)| std::iter::repeat_n(p, c))
        .collect();
    (atoms, units)
}

fn measure(rng: &mut ChaCha8Rng, max: usize) -> DiscreteMeasure2D {
    let k = rng.gen_range(1..=max);
    let ws: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = ws.iter().sum();
    let atoms = random_points(rng, k)
        .into_iter()
        .zip(ws)
        .map(|((x, y), w)| Atom { x, y, w: w / s })
        .collect();
    DiscreteMeasure2D::new(atoms).unwrap()
}

#[test]
fn criterion_6_kr_exactness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        if case % 2 == 0 {
            let n = rng.gen_range(1..=6);
            let (a, b) = (random_points(&mut rng, n), random_points(&mut rng, n));
            let to = |v: &[(f64, f64)]| {
                v.iter()
                    .map(|&(x, y)| Atom {
                        x,
                        y,
                        w: 1.0 / n as f64,
                    })
                    .collect::<Vec<_>>()
            };
            let mu = DiscreteMeasure2D::new(to(&a)).unwrap();
            let nu = DiscreteMeasure2D::new(to(&b)).unwrap();
            worst = worst.max((kr_distance(&mu, &nu).unwrap() - brute_unit(&a, &b)).abs());
        } else {
            let (a, ua) = sixths(&mut rng);
            let (b, ub) = sixths(&mut rng);
            worst = worst.max((transport_exact(&a, &b) - brute_unit(&ua, &ub)).abs());
        }
    }
    let (mut sym, mut tri, mut zero) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (p, q, r) = (
            measure(&mut rng, 50),
            measure(&mut rng, 50),
            measure(&mut rng, 50),
        );
        let (pq, qp) = (kr_distance(&p, &q).unwrap(), kr_distance(&q, &p).unwrap());
        let (pr, qr) = (kr_distance(&p, &r).unwrap(), kr_distance(&q, &r).unwrap());
        sym = sym.max((pq - qp).abs());
        tri = tri.max(pr - pq - qr);
        zero = zero.max(kr_distance(&p, &p).unwrap());
        assert!(pq > 0.0, "distinct random measures at distance zero");
    }
    let pass = worst <= 1e-9 && sym <= 1e-9 && tri <= 1e-9 && zero <= 1e-12;
    let detail = format!(
        "max deviation from brute force {worst:.2e}, symmetry {sym:.2e}, triangle excess {tri:.2e}, d(p,p) {zero:.2e}"
    );
    report(
        6,
        "KR solver exactness",
        pass,
        t0.elapsed(),
        Duration::from_secs(60),
        detail,
    );
}

#[test]
fn criterion_7_power_approximation() {
    let t0 = Instant::now();
    let g = params::golden_type();
    let cands = suggest_towers(&g.iet, 20);
    let best = cands
        .iter()
        .filter(|c| c.stats.coverage > 0.95)
        .min_by(|a, b| a.stats.rigidity.total_cmp(&b.stats.rigidity))
        .expect("a tower with coverage above 0.95");
    let tower = build_tower(&g.iet, best.base[0], best.base[1], best.height).unwrap();
    let prod = sample_product(&g.iet, 100_000, 7);
    let rep = approx_by_powers(&g.iet, &prod, &tower, 256, &[TestFunction::Coord]).unwrap();
    let err = rep.l2_errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let sum = rep.coefficients.sum;
    let detail = format!(
        "tower q = {} (coverage {:.4}, rigidity {:.2e}), L2 error {err:.4}, sum of coefficients {sum:.15}",
        best.q, best.stats.coverage, best.stats.rigidity
    );
    let pass =
        err <= 0.1 && sum <= 1.0 + 1e-12 && rep.coefficients.coeffs.iter().all(|c| c.1 >= 0.0);
    report(
        7,
        "approximation by powers",
        pass,
        t0.elapsed(),
        Duration::from_secs(300),
        detail,
    );
}

#[test]
fn criterion_8_hilbert_recursion() {
    let t0 = Instant::now();
    let st = BaryState {
        d: 2,
        gamma: vec![1.0, 0.0],
        a: vec![0.7],
        b: vec![0.3],
        delta: vec![],
    };
    let rep = bary_recursion(&st, 20).unwrap();
    let err = (rep.decay_rate - 0.4).abs();
    let detail = format!(
        "measured ratio {:.12}, expected |a - b| = 0.4",
        rep.decay_rate
    );
    report(
        8,
        "Hilbert-metric recursion",
        err <= 1e-6,
        t0.elapsed(),
        Duration::from_secs(1),
        detail,
    );
}

#[test]
fn criterion_9_non_simplicity_witness() {
    let t0 = Instant::now();
    let g = params::golden_type();
    let rep = non_simplicity_witness(&g.iet, &WitnessConfig::new(3, 100_000, 7)).unwrap();
    let detail = format!(
        "C_hat {:.4}, budget {:.5}; KR to mixture {:.5} < budget; KR to product {:.4} > 4 budget {:.4}; \
         fat fibers {:.3}; Birkhoff spread {:.4}; keep-away {:.4} <= {:.4}",
        rep.c_hat,
        rep.budget,
        rep.mixture_kr.upper,
        rep.product_kr.lower,
        4.0 * rep.budget,
        rep.fiber_fraction,
        rep.birkhoff.value,
        rep.keep_away.value,
        rep.median_step
    );
    report(
        9,
        "non-simplicity witness",
        rep.witness,
        t0.elapsed(),
        Duration::from_secs(900),
        detail,
    );
}
