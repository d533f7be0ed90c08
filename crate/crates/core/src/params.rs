//! Documented parameter sets.
//!
//! The golden-type set uses a rotation number whose continued fraction is
//! mostly ones, interrupted by a few large partial quotients. Each large
//! quotient after a 4 gives a convergent where the renormalized torus is close
//! to the square one; `kappa` is tuned so the marked point sits near the middle
//! there. One quotient of 64 gives a convergent with an almost complete
//! Rokhlin tower.

use serde::{Deserialize, Serialize};

use crate::arith::{self, mulmod};
use crate::error::{Error, Result};
use crate::iet_core::{ExactIet, ExactRotation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracTarget {
    /// convergent index of the denominator
    pub index: usize,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentedParams {
    pub name: String,
    pub quotients: Vec<u128>,
    pub kappa0: f64,
    pub targets: Vec<FracTarget>,
    pub tower_index: usize,
    pub switch_indices: Vec<usize>,
    pub iet: ExactIet,
}

impl DocumentedParams {
    pub fn rotation(&self) -> ExactRotation {
        self.iet.rotation()
    }

    /// Achieved frac(q_i kappa) for every target.
    pub fn achieved(&self) -> Vec<(u128, f64)> {
        let rot = self.rotation();
        let cs = rot.convergents();
        self.targets
            .iter()
            .map(|t| {
                let q = cs[t.index].q;
                (q, arith::ratio_f64(mulmod(q, rot.n, rot.d), rot.d))
            })
            .collect()
    }
}

/// The rational P/D with the given partial quotients [a0; a1, a2, ...].
pub fn ratio_of_quotients(quotients: &[u128]) -> Result<(u128, u128)> {
    let (mut p0, mut q0, mut p1, mut q1) = (0u128, 1u128, 1u128, 0u128);
    for &a in quotients {
        let p = a
            .checked_mul(p1)
            .and_then(|v| v.checked_add(p0))
            .ok_or_else(|| Error::Range("continued fraction overflows".into()))?;
        let q = a
            .checked_mul(q1)
            .and_then(|v| v.checked_add(q0))
            .ok_or_else(|| Error::Range("continued fraction overflows".into()))?;
        p0 = p1;
        q0 = q1;
        p1 = p;
        q1 = q;
    }
    Ok((p1, q1))
}

fn frac_err(q: u128, n: u128, d: u128, target: f64) -> f64 {
    let f = arith::ratio_f64(mulmod(q, n, d), d);
    let e = target - f;
    e - e.round()
}

/// Choose n near kappa0 * d so that frac(q_i n / d) is close to each target.
///
/// Targets are met in order of increasing q_i. Each step hits its own target
/// exactly; among the corrections that do (they differ by multiples of d/q_i
/// and stay within 5% of d, at most 256 each way) it keeps the one that disturbs the earlier
/// targets least.
pub fn tune_kappa(p: u128, d: u128, kappa0: f64, targets: &[FracTarget]) -> u128 {
    let cs = arith::convergents(p, d);
    let mut ts: Vec<(u128, f64)> = targets.iter().map(|t| (cs[t.index].q, t.target)).collect();
    ts.sort_by_key(|t| t.0);
    let mut n = (kappa0 * d as f64) as u128;
    for (i, &(q, target)) in ts.iter().enumerate() {
        let diff = frac_err(q, n, d, target);
        let kmax = ((0.05 * q as f64) as i64).clamp(0, 256);
        let mut best: Option<(f64, u128)> = None;
        for k in -kmax..=kmax {
            let delta = ((diff + k as f64) * (d as f64) / (q as f64)).round() as i128;
            let cand = (n as i128 + delta) as u128;
            let cost = ts[..i]
                .iter()
                .map(|&(q0, t0)| frac_err(q0, cand, d, t0).abs())
                .fold(0.0, f64::max);
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, cand));
            }
        }
        n = best.map(|b| b.1).unwrap_or(n);
    }
    n
}

/// Golden-type parameters: the switch levels sit at convergents 12, 19, 23 and
/// the tower at convergent 15.
pub fn golden_type() -> DocumentedParams {
    let mut quotients = vec![0u128];
    quotients.extend(std::iter::repeat_n(1, 11));
    quotients.extend([4, 4096, 1, 1, 64, 1, 1, 4, 1 << 21, 1, 1, 4, 1 << 54]);
    quotients.extend(std::iter::repeat_n(1, 5));
    let targets = vec![
        FracTarget {
            index: 11,
            target: 0.0,
        },
        FracTarget {
            index: 12,
            target: 0.5,
        },
        FracTarget {
            index: 15,
            target: 0.02,
        },
        FracTarget {
            index: 18,
            target: 0.0,
        },
        FracTarget {
            index: 19,
            target: 0.5,
        },
        FracTarget {
            index: 22,
            target: 0.0,
        },
        FracTarget {
            index: 23,
            target: 0.5,
        },
    ];
    build("golden-type", quotients, 0.8, targets, 15, vec![12, 19, 23])
        .expect("documented parameters are valid")
}

/// Rational approximation of the golden mean with the given kappa.
pub fn golden(depth: usize, kappa: f64) -> Result<ExactIet> {
    let mut quotients = vec![0u128];
    quotients.extend(std::iter::repeat_n(1, depth));
    let (p, d) = ratio_of_quotients(&quotients)?;
    let n = (kappa * d as f64).round() as u128;
    ExactIet::from_rotation(ExactRotation { d, p, n })
}

pub fn build(
    name: &str,
    quotients: Vec<u128>,
    kappa0: f64,
    targets: Vec<FracTarget>,
    tower_index: usize,
    switch_indices: Vec<usize>,
) -> Result<DocumentedParams> {
    let (p, d) = ratio_of_quotients(&quotients)?;
    let n = tune_kappa(p, d, kappa0, &targets);
    let iet = ExactIet::from_rotation(ExactRotation { d, p, n })?;
    Ok(DocumentedParams {
        name: name.into(),
        quotients,
        kappa0,
        targets,
        tower_index,
        switch_indices,
        iet,
    })
}
