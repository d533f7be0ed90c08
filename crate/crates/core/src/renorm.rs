//! Marked flat tori, the diagonal flow, reduction to a fundamental domain, and
//! the search for renormalization times close to the square torus with marked
//! points half apart.

use serde::{Deserialize, Serialize};

use crate::arith::{self, mulmod, Convergent};
use crate::error::{Error, Result};
use crate::iet_core::{ExactIet, ExactRotation, Iet3};

/// Unit-area lattice (basis columns) with the offset of the second marked point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedTorus {
    /// basis[i] is the i-th generator.
    pub basis: [[f64; 2]; 2],
    pub marked: [f64; 2],
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn comb(i: f64, a: [f64; 2], j: f64, b: [f64; 2]) -> [f64; 2] {
    [i * a[0] + j * b[0], i * a[1] + j * b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    dot(a, a).sqrt()
}

impl MarkedTorus {
    pub fn det(&self) -> f64 {
        let [a, b] = self.basis;
        a[0] * b[1] - a[1] * b[0]
    }

    /// Coordinates of v in the basis.
    pub fn coords(&self, v: [f64; 2]) -> [f64; 2] {
        let [a, b] = self.basis;
        let det = self.det();
        [
            (v[0] * b[1] - v[1] * b[0]) / det,
            (a[0] * v[1] - a[1] * v[0]) / det,
        ]
    }
}

pub fn torus_of_iet(iet: &Iet3) -> MarkedTorus {
    let r = iet.to_rotation();
    MarkedTorus {
        basis: [[1.0, 0.0], [-r.alpha, 1.0]],
        marked: [r.kappa, 0.0],
    }
}

pub fn apply_gt(torus: &MarkedTorus, t: f64) -> Result<MarkedTorus> {
    if !t.is_finite() || t.abs() > 500.0 {
        return Err(Error::Range(format!("|t| = {t} exceeds 500")));
    }
    let (e, f) = (t.exp(), (-t).exp());
    let g = |v: [f64; 2]| [e * v[0], f * v[1]];
    Ok(MarkedTorus {
        basis: [g(torus.basis[0]), g(torus.basis[1])],
        marked: g(torus.marked),
    })
}

/// Lagrange-Gauss reduction with the marked offset moved into the
/// fundamental parallelogram. Orientation is kept positive.
pub fn reduce(torus: &MarkedTorus) -> MarkedTorus {
    let [mut a, mut b] = torus.basis;
    for _ in 0..10_000 {
        if dot(a, a) > dot(b, b) {
            std::mem::swap(&mut a, &mut b);
        }
        let mu = (dot(a, b) / dot(a, a)).round();
        if mu == 0.0 {
            break;
        }
        b = sub(b, comb(mu, a, 0.0, a));
    }
    if a[0] * b[1] - a[1] * b[0] < 0.0 {
        b = [-b[0], -b[1]];
    }
    let mut out = MarkedTorus {
        basis: [a, b],
        marked: torus.marked,
    };
    let c = out.coords(torus.marked);
    let fr = |x: f64| {
        let f = x - x.floor();
        if f >= 1.0 {
            0.0
        } else {
            f
        }
    };
    out.marked = comb(fr(c[0]), a, fr(c[1]), b);
    out
}

/// The eight signed permutation matrices, as basis pairs.
fn square_bases() -> Vec<[[f64; 2]; 2]> {
    let mut out = Vec::with_capacity(8);
    for &(s1, s2) in &[(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        out.push([[s1, 0.0], [0.0, s2]]);
        out.push([[0.0, s1], [s2, 0.0]]);
    }
    out
}

/// Matrix term of the distance to the square torus.
pub fn basis_distance(torus: &MarkedTorus) -> f64 {
    let r = reduce(torus);
    square_bases()
        .iter()
        .map(|s| {
            r.basis
                .iter()
                .flatten()
                .zip(s.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Marked-point term: distance to the nearest image of (+-1/2, 0).
pub fn marked_distance(torus: &MarkedTorus) -> f64 {
    let r = reduce(torus);
    let [a, b] = r.basis;
    let mut best = f64::INFINITY;
    for sgn in [0.5, -0.5] {
        for i in -2..=2 {
            for j in -2..=2 {
                let w = comb(i as f64, a, j as f64, b);
                let v = sub(sub(r.marked, [sgn, 0.0]), w);
                best = best.min(norm(v));
            }
        }
    }
    best
}

pub fn dist_to_hat(torus: &MarkedTorus) -> f64 {
    basis_distance(torus).max(marked_distance(torus))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerticalOffset {
    pub v1: f64,
    pub v2: f64,
    pub s_adjust: f64,
}

/// Smallest representative of (0,1) modulo the lattice, and the flow time
/// that puts the torus into the section.
pub fn vertical_return_offset(torus: &MarkedTorus) -> Result<VerticalOffset> {
    let r = reduce(torus);
    let [a, b] = r.basis;
    let mut best: [f64; 2] = [0.0, 1.0];
    let mut bn = f64::INFINITY;
    for i in -3..=3 {
        for j in -3..=3 {
            let v = sub([0.0, 1.0], comb(i as f64, a, j as f64, b));
            let n = norm(v);
            // prefer the representative on the same side as the unit vertical
            if n < bn - 1e-15 || ((n - bn).abs() <= 1e-15 && v[1].abs() < best[1].abs()) {
                bn = n;
                best = v;
            }
        }
    }
    let (v1, v2) = (best[0], best[1]);
    if v2 >= 1.0 {
        return Err(Error::NoAdjustment(v2));
    }
    Ok(VerticalOffset {
        v1,
        v2,
        s_adjust: -(1.0 - v2).ln(),
    })
}

/// Horizontal displacement of the time-one vertical flow for a torus in the section.
pub fn rho_of_torus(torus: &MarkedTorus, tol: f64) -> Result<f64> {
    let v = vertical_return_offset(torus)?;
    if v.v2.abs() > tol {
        return Err(Error::InvalidInput(format!(
            "torus not in the section: v2 = {}",
            v.v2
        )));
    }
    if v.v1 == 0.0 {
        return Err(Error::DegenerateRotation(
            "zero horizontal displacement".into(),
        ));
    }
    Ok(v.v1.abs())
}

/// Lattice vector (p, q) of the rotation lattice with defect s = qP - pD,
/// together with a neighbour completing it to a basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticePair {
    pub p: u128,
    pub q: u128,
    pub s: i128,
    pub p2: u128,
    pub q2: u128,
    pub s2: i128,
}

impl LatticePair {
    /// pq2 - p2q, which is +-1.
    pub fn det(&self) -> i128 {
        self.p
            .wrapping_mul(self.q2)
            .wrapping_sub(self.p2.wrapping_mul(self.q)) as i128
    }
}

/// g_{ln q} of the marked torus, computed from exact integer data.
pub fn exact_torus(rot: &ExactRotation, pair: &LatticePair) -> MarkedTorus {
    let d = rot.d as f64;
    let q = pair.q as f64;
    let b1 = [-(q * pair.s as f64) / d, 1.0];
    let b2 = [-(q * pair.s2 as f64) / d, pair.q2 as f64 / q];
    let det = pair.det();
    let frac_of = |k: u128, sign: i128| {
        let r = mulmod(k, rot.n, rot.d);
        let r = if sign < 0 && r != 0 { rot.d - r } else { r };
        arith::ratio_f64(r, rot.d)
    };
    let fx = frac_of(pair.q2, det);
    let fy = frac_of(pair.q, -det);
    MarkedTorus {
        basis: [b1, b2],
        marked: comb(fx, b1, fy, b2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    Convergent,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormTime {
    pub t: f64,
    pub dist_hat: f64,
    pub in_s: bool,
    pub v_offset: [f64; 2],
    /// typical crossing count floor(q kappa)
    pub m: u128,
    pub rho: f64,
    pub v_len: f64,
    pub q: u128,
    pub p: u128,
    pub s: i128,
    /// frac(q kappa), the measure share of the count m + 1
    pub theta: f64,
    pub source: CandidateSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub t: f64,
    pub q: u128,
    pub dist_hat: f64,
    pub accepted: bool,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormSearch {
    pub accepted: Vec<RenormTime>,
    pub candidates: Vec<CandidateReport>,
}

/// Tolerance on v2 for section membership.
pub const SECTION_TOL: f64 = 1e-9;

fn evaluate(rot: &ExactRotation, pair: &LatticePair, source: CandidateSource) -> RenormTime {
    let torus = exact_torus(rot, pair);
    let dist_hat = dist_to_hat(&torus);
    let (in_s, v) = match vertical_return_offset(&torus) {
        Ok(v) => (
            v.v2.abs() <= SECTION_TOL && v.v1.abs() <= 0.5 + SECTION_TOL,
            [v.v1, v.v2],
        ),
        Err(_) => (false, [f64::NAN, f64::NAN]),
    };
    let (m, r) = arith::muladd_divrem(pair.q, rot.n, 0, rot.d);
    let theta = arith::ratio_f64(r, rot.d);
    let rho = pair.q as f64 * pair.s.unsigned_abs() as f64 / rot.d as f64;
    RenormTime {
        t: (pair.q as f64).ln(),
        dist_hat,
        in_s,
        v_offset: v,
        m,
        rho,
        v_len: 1.0 - theta,
        q: pair.q,
        p: pair.p,
        s: pair.s,
        theta,
        source,
    }
}

fn convergent_pairs(cs: &[Convergent]) -> Vec<LatticePair> {
    cs.windows(2)
        .filter(|w| w[1].q > w[0].q)
        .map(|w| LatticePair {
            p: w[1].p,
            q: w[1].q,
            s: w[1].s,
            p2: w[0].p,
            q2: w[0].q,
            s2: w[0].s,
        })
        .collect()
}

/// Lattice vector closest to (0,1) in g_t of the rotation lattice, among
/// convergents and intermediate fractions.
fn nearest_vertical(rot: &ExactRotation, cs: &[Convergent], t: f64) -> Option<LatticePair> {
    let et = t.exp();
    let d = rot.d as f64;
    let cost = |q: u128, s: i128| {
        let h = et * s as f64 / d;
        let v = 1.0 - q as f64 / et;
        h * h + v * v
    };
    let mut best: Option<(f64, LatticePair)> = None;
    let mut consider = |pair: LatticePair| {
        let c = cost(pair.q, pair.s);
        if best.is_none_or(|(b, _)| c < b) {
            best = Some((c, pair));
        }
    };
    for k in 1..cs.len() {
        let (prev, cur) = (cs[k - 1], cs[k]);
        if cur.q as f64 > 4.0 * et {
            break;
        }
        consider(LatticePair {
            p: cur.p,
            q: cur.q,
            s: cur.s,
            p2: prev.p,
            q2: prev.q,
            s2: prev.s,
        });
        if k + 1 < cs.len() && cur.q > 0 {
            let a_next = cs[k + 1].a;
            let c0 = ((et - prev.q as f64) / cur.q as f64).round().max(1.0);
            for dc in [-1.0, 0.0, 1.0] {
                let c = c0 + dc;
                if c < 1.0 || c > a_next as f64 {
                    continue;
                }
                let c = c as u128;
                let q = prev.q + c * cur.q;
                let p = prev.p + c * cur.p;
                let s = prev.s + c as i128 * cur.s;
                consider(LatticePair {
                    p,
                    q,
                    s,
                    p2: cur.p,
                    q2: cur.q,
                    s2: cur.s,
                });
            }
        }
    }
    best.map(|b| b.1)
}

/// Renormalization times t <= t_max with g_t omega_T within delta of the
/// square torus and in the section.
pub fn find_renorm_times(iet: &ExactIet, delta: f64, t_max: f64) -> Result<RenormSearch> {
    if !(delta > 0.0 && t_max > 0.0) {
        return Err(Error::InvalidParameters(
            "delta and t_max must be positive".into(),
        ));
    }
    let rot = iet.rotation();
    let cs = rot.convergents();
    let mut pairs: Vec<(LatticePair, CandidateSource)> = convergent_pairs(&cs)
        .into_iter()
        .map(|p| (p, CandidateSource::Convergent))
        .collect();
    let steps = (t_max / 0.01).floor() as usize;
    for i in 1..=steps {
        let t = i as f64 * 0.01;
        if let Some(pair) = nearest_vertical(&rot, &cs, t) {
            if !pairs.iter().any(|(p, _)| p.q == pair.q) {
                pairs.push((pair, CandidateSource::Grid));
            }
        }
    }
    pairs.retain(|(p, _)| p.q >= 2 && (p.q as f64).ln() <= t_max);
    pairs.sort_by_key(|(p, _)| p.q);
    let mut accepted = Vec::new();
    let mut candidates = Vec::new();
    for (pair, source) in pairs {
        let rt = evaluate(&rot, &pair, source);
        let reason = if pair.s == 0 {
            "closed orbit: rational rotation".to_string()
        } else if !rt.in_s {
            format!(
                "not in section: v = ({:.3e}, {:.3e})",
                rt.v_offset[0], rt.v_offset[1]
            )
        } else if rt.dist_hat >= delta {
            format!("dist_hat {:.4} >= delta", rt.dist_hat)
        } else if rt.m == 0 {
            "crossing count zero".to_string()
        } else {
            String::new()
        };
        let ok = reason.is_empty();
        candidates.push(CandidateReport {
            t: rt.t,
            q: rt.q,
            dist_hat: rt.dist_hat,
            accepted: ok,
            reason: if ok { "accepted".into() } else { reason },
        });
        if ok {
            accepted.push(rt);
        }
    }
    Ok(RenormSearch {
        accepted,
        candidates,
    })
}

/// Crossing heights 1..=M with M = e^t (rounded when e^t is within 1e-9 of an integer).
pub fn crossing_count(iet: &ExactIet, t: f64, x: u128) -> Result<u128> {
    let rot = iet.rotation();
    if x >= rot.n {
        return Err(Error::InvalidInput("x must lie in K".into()));
    }
    let e = t.exp();
    let r = e.round();
    let m = if (e - r).abs() <= 1e-9 * e.max(1.0) {
        r
    } else {
        e.floor()
    };
    Ok(crossing_count_at(&rot, m as u128, x))
}

/// #{1 <= j <= M : R^j x in K}.
pub fn crossing_count_at(rot: &ExactRotation, m: u128, x: u128) -> u128 {
    let start = rot.rot(x, 1);
    rot.psi(start, m)
}

/// rho at the candidate time closest to t.
pub fn rho_of(iet: &ExactIet, t: f64) -> Result<f64> {
    let rot = iet.rotation();
    let cs = rot.convergents();
    let pair = nearest_vertical(&rot, &cs, t)
        .ok_or_else(|| Error::SearchFailure("no lattice vector".into()))?;
    if pair.s == 0 {
        return Err(Error::DegenerateRotation(
            "rational rotation number, orbit closed".into(),
        ));
    }
    let torus = exact_torus(&rot, &pair);
    rho_of_torus(&torus, SECTION_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(marked: [f64; 2]) -> MarkedTorus {
        MarkedTorus {
            basis: [[1.0, 0.0], [0.0, 1.0]],
            marked,
        }
    }

    #[test]
    fn torus_examples() {
        let t = torus_of_iet(&Iet3::new(0.2, 0.3, 0.5).unwrap());
        assert!((t.basis[1][0] + 0.8 / 1.3).abs() < 1e-15);
        assert!((t.marked[0] - 1.0 / 1.3).abs() < 1e-15);
        assert_eq!(t.det(), 1.0);
        let g = apply_gt(&sq([0.3, 0.0]), 2f64.ln()).unwrap();
        assert!((g.marked[0] - 0.6).abs() < 1e-15);
        let back = apply_gt(&apply_gt(&t, 3.7).unwrap(), -3.7).unwrap();
        assert!((back.basis[1][0] - t.basis[1][0]).abs() < 1e-12);
        assert!(apply_gt(&t, 501.0).is_err());
    }

    #[test]
    fn reduce_examples() {
        let r = reduce(&sq([1.5, 0.0]));
        assert!((r.marked[0] - 0.5).abs() < 1e-15 && r.marked[1].abs() < 1e-15);
        let r = reduce(&MarkedTorus {
            basis: [[1.0, 0.0], [5.3, 1.0]],
            marked: [0.0, 0.0],
        });
        assert!((r.basis[1][0] - 0.3).abs() < 1e-12 && (r.basis[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hat_distance_examples() {
        assert!(dist_to_hat(&sq([0.5, 0.0])) < 1e-15);
        assert!((dist_to_hat(&sq([0.4, 0.0])) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn vertical_offset_examples() {
        let v = vertical_return_offset(&sq([0.0, 0.0])).unwrap();
        assert!(v.v1.abs() < 1e-15 && v.v2.abs() < 1e-15 && v.s_adjust.abs() < 1e-15);
        let t = MarkedTorus {
            basis: [[1.0, 0.0], [-0.3, 1.0]],
            marked: [0.0, 0.0],
        };
        let v = vertical_return_offset(&t).unwrap();
        assert!((v.v1 - 0.3).abs() < 1e-12 && v.v2.abs() < 1e-15);
        let t = MarkedTorus {
            basis: [[1.0, 0.0], [-0.05, 1.0]],
            marked: [0.0, 0.0],
        };
        assert!((rho_of_torus(&t, 1e-9).unwrap() - 0.05).abs() < 1e-12);
        // A lattice with (0, 0.9) as shortest vertical gives v2 = 0.1.
        let t = MarkedTorus {
            basis: [[1.0 / 0.9, 0.0], [0.0, 0.9]],
            marked: [0.0, 0.0],
        };
        let v = vertical_return_offset(&t).unwrap();
        assert!((v.v2 - 0.1).abs() < 1e-12);
        assert!((v.s_adjust - 0.10536051565782628).abs() < 1e-12);
    }

    #[test]
    fn crossing_one_step() {
        // alpha = 0.25, kappa = 0.6 as d = 20, p = 5, n = 12
        let iet = ExactIet::from_rotation(ExactRotation { d: 20, p: 5, n: 12 });
        // kappa + alpha < 1 has no 3-IET, so count on the rotation directly
        assert!(iet.is_err());
        let rot = ExactRotation { d: 20, p: 5, n: 12 };
        assert_eq!(crossing_count_at(&rot, 1, 0), 1);
    }
}
