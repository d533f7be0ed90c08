//! Discrete measures on the unit square and empirical joinings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iet_core::ExactIet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// Finitely supported probability measure on [0,1)^2.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure2D {
    pub atoms: Vec<Atom>,
}

pub const MASS_TOL: f64 = 1e-12;

impl DiscreteMeasure2D {
    /// Checked constructor: coordinates in [0,1), positive weights summing to 1.
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let m = DiscreteMeasure2D { atoms };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for a in &self.atoms {
            if !(0.0..1.0).contains(&a.x) || !(0.0..1.0).contains(&a.y) {
                return Err(Error::InvalidInput(format!(
                    "atom ({}, {}) outside the unit square",
                    a.x, a.y
                )));
            }
            if a.w.is_nan() || a.w <= 0.0 {
                return Err(Error::InvalidInput(format!("non-positive weight {}", a.w)));
            }
        }
        let t = self.total();
        if (t - 1.0).abs() > MASS_TOL * (1.0 + self.atoms.len() as f64).sqrt().max(1.0) {
            return Err(Error::InvalidInput(format!("total weight {t} is not 1")));
        }
        Ok(())
    }

    /// Equal weights on the given points.
    pub fn uniform(points: &[(f64, f64)]) -> Self {
        let w = 1.0 / points.len() as f64;
        DiscreteMeasure2D {
            atoms: points.iter().map(|&(x, y)| Atom { x, y, w }).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.w * f(a.x, a.y)).sum()
    }

    /// Convex combination sum c_k m_k.
    pub fn mixture(parts: &[(f64, &DiscreteMeasure2D)]) -> Self {
        let mut atoms = Vec::new();
        for (c, m) in parts {
            atoms.extend(m.atoms.iter().map(|a| Atom { w: a.w * c, ..*a }));
        }
        DiscreteMeasure2D { atoms }
    }

    /// Coordinates swapped.
    pub fn transpose(&self) -> Self {
        DiscreteMeasure2D {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    x: a.y,
                    y: a.x,
                    w: a.w,
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.atoms.len() * 72 + 8);
        s.push_str("x,y,w\n");
        for a in &self.atoms {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", a.x, a.y, a.w));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with('x')) {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
            if v.len() != 3 {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected x,y,w",
                    i + 1
                )));
            }
            atoms.push(Atom {
                x: v[0],
                y: v[1],
                w: v[2],
            });
        }
        DiscreteMeasure2D::new(atoms)
    }
}

/// Stratified sample: one point per bin [i/N, (i+1)/N), jittered uniformly inside it.
pub fn stratified_points(iet: &ExactIet, n: usize, seed: u64) -> Vec<u128> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tot = iet.total();
    (0..n)
        .map(|i| {
            let u: f64 = rng.gen();
            let x = (i as f64 + u) / n as f64;
            let lo = iet.point(i as f64 / n as f64);
            let hi = iet.point((i + 1) as f64 / n as f64).max(lo + 1).min(tot);
            iet.point(x).clamp(lo, hi - 1)
        })
        .collect()
}

/// T^a on every point, using the cached fast power.
pub fn powers_of(iet: &ExactIet, pts: &[u128], a: i128) -> Vec<u128> {
    let mut cache = Vec::new();
    pts.iter()
        .map(|&p| iet.pow_cached(a, p, &mut cache))
        .collect()
}

/// Equal-weight atoms (x_i, y_i) from exact points.
pub fn joining_from_points(iet: &ExactIet, xs: &[u128], ys: &[u128]) -> DiscreteMeasure2D {
    let w = 1.0 / xs.len() as f64;
    DiscreteMeasure2D {
        atoms: xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| Atom {
                x: iet.coord(x),
                y: iet.coord(y),
                w,
            })
            .collect(),
    }
}

/// N atoms (x_i, T^a x_i) with stratified x_i.
pub fn sample_power_joining(iet: &ExactIet, a: i128, n: usize, seed: u64) -> DiscreteMeasure2D {
    let xs = stratified_points(iet, n, seed);
    let ys = powers_of(iet, &xs, a);
    joining_from_points(iet, &xs, &ys)
}

/// Mixture sum c_k nu^{(a_k)} on a common stratified sample: for each x_i, an
/// atom (x_i, T^{a_k} x_i) of weight c_k / N.
pub fn sample_power_mixture(
    iet: &ExactIet,
    parts: &[(f64, i128)],
    xs: &[u128],
) -> DiscreteMeasure2D {
    let n = xs.len() as f64;
    let mut atoms = Vec::with_capacity(xs.len() * parts.len());
    let ys: Vec<Vec<u128>> = parts.iter().map(|&(_, a)| powers_of(iet, xs, a)).collect();
    for (i, &x) in xs.iter().enumerate() {
        for (k, &(c, _)) in parts.iter().enumerate() {
            atoms.push(Atom {
                x: iet.coord(x),
                y: iet.coord(ys[k][i]),
                w: c / n,
            });
        }
    }
    DiscreteMeasure2D { atoms }
}

/// Empirical product: x_i stratified, y a seeded permutation of another stratified sample.
pub fn sample_product(iet: &ExactIet, n: usize, seed: u64) -> DiscreteMeasure2D {
    use rand::seq::SliceRandom;
    let xs = stratified_points(iet, n, seed);
    let mut ys = stratified_points(iet, n, seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    ys.shuffle(&mut rng);
    joining_from_points(iet, &xs, &ys)
}

/// L atoms (T^i x, T^{i+n} x), i = 0..L-1.
pub fn empirical_orbit_joining(
    iet: &ExactIet,
    x: u128,
    n: i128,
    l: usize,
) -> Result<DiscreteMeasure2D> {
    if l == 0 {
        return Err(Error::InvalidInput("L must be at least 1".into()));
    }
    if x >= iet.total() {
        return Err(Error::InvalidInput("x outside the interval".into()));
    }
    let w = 1.0 / l as f64;
    let mut a = x;
    let mut b = iet.pow(n, x);
    let mut atoms = Vec::with_capacity(l);
    for _ in 0..l {
        atoms.push(Atom {
            x: iet.coord(a),
            y: iet.coord(b),
            w,
        });
        a = iet.apply(a);
        b = iet.apply(b);
    }
    Ok(DiscreteMeasure2D { atoms })
}

/// Estimate of the orbit joining of length L from `k` orbit times drawn
/// uniformly in [0, L); the full orbit when L <= k.
pub fn sampled_orbit_joining(
    iet: &ExactIet,
    x: u128,
    n: i128,
    l: u128,
    k: usize,
    seed: u64,
) -> Result<DiscreteMeasure2D> {
    if l <= k as u128 {
        return empirical_orbit_joining(iet, x, n, l as usize);
    }
    if x >= iet.total() {
        return Err(Error::InvalidInput("x outside the interval".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<u128> = (0..k).map(|_| rng.gen_range(0..l)).collect();
    times.sort_unstable();
    let y = iet.pow(n, x);
    let w = 1.0 / k as f64;
    let atoms = times
        .iter()
        .map(|&i| Atom {
            x: iet.coord(iet.pow(i as i128, x)),
            y: iet.coord(iet.pow(i as i128, y)),
            w,
        })
        .collect();
    Ok(DiscreteMeasure2D { atoms })
}
