//! Search for a power T^n whose joining is close to the equal mixture of the
//! identity and T^k.

use serde::{Deserialize, Serialize};

use super::kr::{kr_bounds, KrEstimate, KrOptions};
use super::measure::{powers_of, sample_power_mixture, stratified_points};
use crate::error::{Error, Result};
use crate::iet_core::ExactIet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub k: i128,
    pub horizon: u128,
    pub samples: usize,
    pub best_n: i128,
    /// certified upper end of the KR interval at best_n
    pub kr_error: f64,
    pub estimate: KrEstimate,
    /// screened candidates (n, screening score), best first
    pub screened: Vec<(i128, f64)>,
}

/// Number of sample points used by the screening pass.
pub const SCREEN_POINTS: usize = 4000;
/// Candidates passed from screening to the full KR evaluation.
pub const SCREEN_KEEP: usize = 5;

/// Screening score: cost of sending each atom to the nearer of its two target
/// atoms plus the cost of fixing the resulting imbalance.
fn score(iet: &ExactIet, xs: &[u128], tk: &[u128], ys: &[u128]) -> f64 {
    let mut cost = 0.0;
    let mut near_x = 0usize;
    let mut spread = 0.0;
    for ((&x, &t), &y) in xs.iter().zip(tk).zip(ys) {
        let (fx, ft, fy) = (iet.coord(x), iet.coord(t), iet.coord(y));
        let (dx, dt) = ((fy - fx).abs(), (fy - ft).abs());
        if dx <= dt {
            near_x += 1;
        }
        cost += dx.min(dt);
        spread += (fx - ft).abs();
    }
    let n = xs.len() as f64;
    cost / n + (near_x as f64 / n - 0.5).abs() * spread / n
}

/// Minimize the KR distance between nu^{(n)} and (nu^{(0)} + nu^{(k)})/2 over
/// |n| <= horizon: every n is screened on a subsample, the best few (and the
/// optional hint) are evaluated with N atoms.
pub fn weak_closure_check(
    iet: &ExactIet,
    k: i128,
    horizon: u128,
    n_atoms: usize,
    seed: u64,
    hint: Option<i128>,
) -> Result<ClosureReport> {
    if horizon == 0 || n_atoms == 0 {
        return Err(Error::InvalidInput("horizon and N must be positive".into()));
    }
    let sub = stratified_points(iet, SCREEN_POINTS.min(n_atoms), seed ^ 0x5eed);
    let tk = powers_of(iet, &sub, k);
    let mut scores: Vec<(i128, f64)> = Vec::with_capacity(2 * horizon as usize + 1);
    scores.push((0, score(iet, &sub, &tk, &sub)));
    for dir in [1i128, -1] {
        let mut ys = sub.clone();
        for step in 1..=horizon as i128 {
            for y in ys.iter_mut() {
                *y = if dir > 0 {
                    iet.apply(*y)
                } else {
                    iet.apply_inv(*y)
                };
            }
            scores.push((dir * step, score(iet, &sub, &tk, &ys)));
        }
    }
    scores.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.abs().cmp(&b.0.abs())));
    let mut cands: Vec<i128> = scores.iter().take(SCREEN_KEEP).map(|s| s.0).collect();
    if let Some(h) = hint {
        if h.unsigned_abs() <= horizon && !cands.contains(&h) {
            cands.push(h);
        }
    }
    let xs = stratified_points(iet, n_atoms, seed);
    let target = sample_power_mixture(iet, &[(0.5, 0), (0.5, k)], &xs);
    let opts = KrOptions::default();
    let mut best: Option<(i128, KrEstimate)> = None;
    for n in cands {
        let nu = sample_power_mixture(iet, &[(1.0, n)], &xs);
        let e = kr_bounds(&nu, &target, &opts)?;
        if best.as_ref().is_none_or(|b| e.upper < b.1.upper) {
            best = Some((n, e));
        }
    }
    let (best_n, estimate) = best.expect("at least one candidate");
    scores.truncate(20);
    Ok(ClosureReport {
        k,
        horizon,
        samples: n_atoms,
        best_n,
        kr_error: estimate.upper,
        estimate,
        screened: scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_case() {
        let iet = ExactIet::from_decimals(&["0.2", "0.3", "0.5"]).unwrap();
        let p = iet.total() as i128;
        let r = weak_closure_check(&iet, p, 25, 500, 1, None).unwrap();
        assert!(r.kr_error < 1e-12, "{r:?}");
        assert_eq!(r.best_n % p, 0);
    }
}
