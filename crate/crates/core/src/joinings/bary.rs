//! The cyclic switch recursion on d strands and its contraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaryState {
    pub d: usize,
    pub gamma: Vec<f64>,
    /// per-step weights, reused cyclically
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaryReport {
    pub trajectory: Vec<Vec<f64>>,
    /// max pairwise gap after each step, starting with the initial state
    pub gaps: Vec<f64>,
    /// geometric mean of successive gap ratios
    pub decay_rate: f64,
    /// per-cycle contraction bound 1 - 2 min(a,b)/(a+b) for the first step weights
    pub cycle_bound: f64,
    pub means: Vec<f64>,
}

fn gap(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Iterate gamma^(l) <- (a gamma^(l-1) + b gamma^(l)) / (a + b), plus an
/// alternating perturbation of size delta, clamped to [0, 1].
pub fn bary_recursion(state: &BaryState, steps: usize) -> Result<BaryReport> {
    let d = state.d;
    if d < 2 || state.gamma.len() != d {
        return Err(Error::InvalidParameters(
            "need d >= 2 and d values of gamma".into(),
        ));
    }
    if state.a.is_empty() || state.a.len() != state.b.len() {
        return Err(Error::InvalidParameters(
            "a and b must be non-empty and of equal length".into(),
        ));
    }
    for (&a, &b) in state.a.iter().zip(&state.b) {
        if !(a > 0.0 && b > 0.0 && a + b <= 1.0 + 1e-15) {
            return Err(Error::InvalidParameters(format!(
                "need a, b > 0 and a + b <= 1, got {a}, {b}"
            )));
        }
    }
    if state.gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Error::InvalidParameters("gamma must lie in [0, 1]".into()));
    }
    let mut g = state.gamma.clone();
    let mut trajectory = vec![g.clone()];
    let mut gaps = vec![gap(&g)];
    let mut means = vec![g.iter().sum::<f64>() / d as f64];
    for step in 0..steps {
        let a = state.a[step % state.a.len()];
        let b = state.b[step % state.b.len()];
        let dl = if state.delta.is_empty() {
            0.0
        } else {
            state.delta[step % state.delta.len()]
        };
        let (wa, wb) = (a / (a + b), b / (a + b));
        let next: Vec<f64> = (0..d)
            .map(|l| {
                let prev = g[(l + d - 1) % d];
                let sign = if (l + step) % 2 == 0 { 1.0 } else { -1.0 };
                (wa * prev + wb * g[l] + sign * dl).clamp(0.0, 1.0)
            })
            .collect();
        g = next;
        gaps.push(gap(&g));
        means.push(g.iter().sum::<f64>() / d as f64);
        trajectory.push(g.clone());
    }
    let ratios: Vec<f64> = gaps
        .windows(2)
        .filter(|w| w[0] > 1e-300 && w[1] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let decay_rate = if ratios.is_empty() {
        0.0
    } else {
        (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp()
    };
    let (a, b) = (state.a[0], state.b[0]);
    Ok(BaryReport {
        trajectory,
        gaps,
        decay_rate,
        cycle_bound: 1.0 - 2.0 * a.min(b) / (a + b),
        means,
    })
}
