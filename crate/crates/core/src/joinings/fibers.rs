//! Disintegration along x, fiber statistics, the operator A_sigma and the
//! approximation of A_sigma by non-negative combinations of powers along a tower.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::measure::{Atom, DiscreteMeasure2D};
use crate::error::{Error, Result};
use crate::iet_core::ExactIet;
use crate::towers::{tower_sets, Tower};

/// Atoms grouped by equal-width x-bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disintegration {
    pub bins: usize,
    pub mass: Vec<f64>,
    pub atoms: Vec<Vec<Atom>>,
}

impl Disintegration {
    pub fn is_empty_bin(&self, b: usize) -> bool {
        self.atoms[b].is_empty()
    }

    /// Normalized conditional (y, w) of bin b.
    pub fn conditional(&self, b: usize) -> Vec<(f64, f64)> {
        let m = self.mass[b];
        self.atoms[b].iter().map(|a| (a.y, a.w / m)).collect()
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        (b as f64 + 0.5) / self.bins as f64
    }

    /// Sum over bins of mass times conditional, as a y-measure.
    pub fn reassemble_y(&self) -> Vec<(f64, f64)> {
        (0..self.bins)
            .filter(|&b| !self.is_empty_bin(b))
            .flat_map(|b| {
                self.conditional(b)
                    .into_iter()
                    .map(move |(y, w)| (y, w * self.mass[b]))
            })
            .collect()
    }
}

pub fn disintegrate(m: &DiscreteMeasure2D, bins: usize) -> Result<Disintegration> {
    if bins == 0 {
        return Err(Error::InvalidInput("bins must be at least 1".into()));
    }
    let mut atoms = vec![Vec::new(); bins];
    let mut mass = vec![0.0; bins];
    for a in &m.atoms {
        let b = ((a.x * bins as f64) as usize).min(bins - 1);
        atoms[b].push(*a);
        mass[b] += a.w;
    }
    Ok(Disintegration { bins, mass, atoms })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberStats {
    /// None for empty bins
    pub diameters: Vec<Option<f64>>,
    pub threshold: f64,
    pub fraction_above: f64,
}

/// Support diameter of each conditional. Conditional mass is pooled in
/// y-cells of width `resolution`, and cells lighter than `mass_floor` are dropped.
pub fn fiber_diameter_stats(
    d: &Disintegration,
    mass_floor: f64,
    threshold: f64,
    resolution: f64,
) -> FiberStats {
    let mut diameters = Vec::with_capacity(d.bins);
    for b in 0..d.bins {
        if d.is_empty_bin(b) {
            diameters.push(None);
            continue;
        }
        let mut cells: BTreeMap<i64, (f64, f64, f64)> = BTreeMap::new();
        for (y, w) in d.conditional(b) {
            let e = cells.entry((y / resolution).floor() as i64).or_insert((
                0.0,
                f64::INFINITY,
                f64::NEG_INFINITY,
            ));
            e.0 += w;
            e.1 = e.1.min(y);
            e.2 = e.2.max(y);
        }
        let kept: Vec<&(f64, f64, f64)> = cells.values().filter(|c| c.0 >= mass_floor).collect();
        let diam = if kept.is_empty() {
            0.0
        } else {
            let lo = kept.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let hi = kept.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        diameters.push(Some(diam));
    }
    let nonempty: Vec<f64> = diameters.iter().flatten().copied().collect();
    let above = nonempty.iter().filter(|&&v| v > threshold).count();
    FiberStats {
        fraction_above: if nonempty.is_empty() {
            0.0
        } else {
            above as f64 / nonempty.len() as f64
        },
        diameters,
        threshold,
    }
}

/// Built-in test functions of y, with declared Lipschitz and sup norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFunction {
    Coord,
    Hat { center: f64, radius: f64 },
    Cos { k: u32 },
    Sin { k: u32 },
}

impl TestFunction {
    pub fn eval(&self, y: f64) -> f64 {
        use std::f64::consts::TAU;
        match *self {
            TestFunction::Coord => y,
            TestFunction::Hat { center, radius } => {
                (1.0 - (y - center).abs() / radius).max(0.0) * radius
            }
            TestFunction::Cos { k } => (TAU * k as f64 * y).cos() / (TAU * k as f64),
            TestFunction::Sin { k } => (TAU * k as f64 * y).sin() / (TAU * k as f64),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    pub fn sup_norm(&self) -> f64 {
        use std::f64::consts::TAU;
        match *self {
            TestFunction::Coord => 1.0,
            TestFunction::Hat { radius, .. } => radius,
            TestFunction::Cos { k } | TestFunction::Sin { k } => 1.0 / (TAU * k as f64),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            TestFunction::Coord => "y".into(),
            TestFunction::Hat { center, radius } => format!("hat({center},{radius})"),
            TestFunction::Cos { k } => format!("cos{k}"),
            TestFunction::Sin { k } => format!("sin{k}"),
        }
    }

    /// The fixed family used in reports.
    pub fn standard_family() -> Vec<TestFunction> {
        vec![
            TestFunction::Coord,
            TestFunction::Hat {
                center: 0.5,
                radius: 0.25,
            },
            TestFunction::Hat {
                center: 0.25,
                radius: 0.25,
            },
            TestFunction::Cos { k: 1 },
            TestFunction::Sin { k: 1 },
        ]
    }
}

/// Per-bin conditional expectation of f; None on empty bins.
pub fn apply_asigma(d: &Disintegration, f: &TestFunction) -> Vec<Option<f64>> {
    (0..d.bins)
        .map(|b| {
            (!d.is_empty_bin(b)).then(|| d.conditional(b).iter().map(|&(y, w)| w * f.eval(y)).sum())
        })
        .collect()
}

/// Sparse non-negative coefficients c_i, i < height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub tower_base: [u128; 2],
    pub tower_height: u128,
    /// (i, c_i) with c_i > 0, by increasing i
    pub coeffs: Vec<(u128, f64)>,
    pub sum: f64,
}

impl CoefficientVector {
    pub fn get(&self, i: u128) -> f64 {
        self.coeffs
            .binary_search_by_key(&i, |c| c.0)
            .map(|k| self.coeffs[k].1)
            .unwrap_or(0.0)
    }

    pub fn l1_diff(&self, other: &CoefficientVector) -> f64 {
        let mut m: BTreeMap<u128, f64> = BTreeMap::new();
        for &(i, c) in &self.coeffs {
            *m.entry(i).or_default() += c;
        }
        for &(i, c) in &other.coeffs {
            *m.entry(i).or_default() -= c;
        }
        m.values().map(|v| v.abs()).sum()
    }
}

/// Level lookup for a tower: sorted left endpoints with their level index.
pub struct LevelIndex {
    lefts: Vec<u128>,
    index: Vec<u32>,
    width: u128,
    base: u128,
    hat: Vec<(u128, u128)>,
}

impl LevelIndex {
    pub fn new(tower: &Tower, iet: &ExactIet) -> Self {
        let mut order: Vec<u32> = (0..tower.levels.len() as u32).collect();
        order.sort_unstable_by_key(|&i| tower.levels[i as usize]);
        let lefts = order.iter().map(|&i| tower.levels[i as usize]).collect();
        let hat = tower_sets(tower, iet).hat_base;
        LevelIndex {
            lefts,
            index: order,
            width: tower.width(),
            base: tower.base[0],
            hat,
        }
    }

    /// (level, offset) of y, if y is in the tower.
    pub fn locate(&self, y: u128) -> Option<(u128, u128)> {
        let k = self.lefts.partition_point(|&l| l <= y);
        if k == 0 || y >= self.lefts[k - 1] + self.width {
            return None;
        }
        Some((self.index[k - 1] as u128, y - self.lefts[k - 1]))
    }

    /// Level of y inside the hat tower, if any.
    pub fn hat_level(&self, y: u128) -> Option<u128> {
        let (lvl, off) = self.locate(y)?;
        let p = self.base + off;
        self.hat
            .iter()
            .any(|&(a, b)| a <= p && p < b)
            .then_some(lvl)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub coefficients: CoefficientVector,
    pub base_bin: usize,
    pub bins: usize,
    /// (test function name, discrete L2 error over the x-grid)
    pub l2_errors: Vec<(String, f64)>,
    /// mass of the base conditional outside the hat tower
    pub outside_mass: f64,
}

fn bin_coefficients(
    iet: &ExactIet,
    idx: &LevelIndex,
    d: &Disintegration,
    b: usize,
    n: u128,
) -> (BTreeMap<u128, f64>, f64) {
    let mut c: BTreeMap<u128, f64> = BTreeMap::new();
    let mut inside = 0.0;
    let m = d.mass[b];
    for a in &d.atoms[b] {
        let (Some(j), Some(l)) = (idx.hat_level(iet.point(a.x)), idx.hat_level(iet.point(a.y)))
        else {
            continue;
        };
        let i = (l + n - j) % n;
        *c.entry(i).or_default() += a.w / m;
        inside += a.w / m;
    }
    (c, 1.0 - inside)
}

fn map_l1(a: &BTreeMap<u128, f64>, b: &BTreeMap<u128, f64>) -> f64 {
    let mut s = 0.0;
    for (k, v) in a {
        s += (v - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, v) in b {
        if !a.contains_key(k) {
            s += v.abs();
        }
    }
    s
}

/// Coefficients c_i read off one fiber, and the L2 error of
/// A_sigma f - sum c_i f(T^i x) over the x-grid, for each test function.
///
/// Each atom (x', y') of the chosen fiber contributes to the index that
/// carries the level of x' to the level of y' inside the hat tower.
pub fn approx_by_powers(
    iet: &ExactIet,
    m: &DiscreteMeasure2D,
    tower: &Tower,
    bins: usize,
    fs: &[TestFunction],
) -> Result<ApproxReport> {
    if tower.total != iet.total() || tower.levels.len() as u128 != tower.height {
        return Err(Error::InvalidInput(
            "tower does not belong to this iet".into(),
        ));
    }
    let d = disintegrate(m, bins)?;
    let idx = LevelIndex::new(tower, iet);
    let n = tower.height;
    let per_bin: Vec<Option<(BTreeMap<u128, f64>, f64)>> = (0..bins)
        .map(|b| (!d.is_empty_bin(b)).then(|| bin_coefficients(iet, &idx, &d, b, n)))
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for b in 0..bins {
        let Some((c, out)) = &per_bin[b] else {
            continue;
        };
        let mut dis = 0.0;
        let mut k = 0;
        for nb in [b.wrapping_sub(1), b + 1] {
            if let Some(Some((c2, _))) = per_bin.get(nb) {
                dis += map_l1(c, c2);
                k += 1;
            }
        }
        let score = (1.0 - out) - if k > 0 { 0.5 * dis / k as f64 } else { 1.0 };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, b));
        }
    }
    let (_, b0) = best.ok_or_else(|| Error::InvalidInput("empty measure".into()))?;
    let (cmap, outside) = per_bin[b0].clone().unwrap();
    let coeffs: Vec<(u128, f64)> = cmap.into_iter().filter(|&(_, v)| v > 0.0).collect();
    let sum = coeffs.iter().map(|c| c.1).sum();
    let cv = CoefficientVector {
        tower_base: tower.base,
        tower_height: n,
        coeffs,
        sum,
    };
    let mut cache = Vec::new();
    let mut err2 = vec![0.0; fs.len()];
    let mut tot = 0.0;
    for b in 0..bins {
        if d.is_empty_bin(b) {
            continue;
        }
        let xb = iet.point(d.bin_center(b));
        let mut approx = vec![0.0; fs.len()];
        for &(i, c) in &cv.coeffs {
            let y = iet.coord(iet.pow_cached(i as i128, xb, &mut cache));
            for (k, f) in fs.iter().enumerate() {
                approx[k] += c * f.eval(y);
            }
        }
        let cond = d.conditional(b);
        for (k, f) in fs.iter().enumerate() {
            let a: f64 = cond.iter().map(|&(y, w)| w * f.eval(y)).sum();
            err2[k] += d.mass[b] * (a - approx[k]).powi(2);
        }
        tot += d.mass[b];
    }
    let l2_errors = fs
        .iter()
        .zip(err2)
        .map(|(f, e)| (f.name(), (e / tot).sqrt()))
        .collect();
    Ok(ApproxReport {
        coefficients: cv,
        base_bin: b0,
        bins,
        l2_errors,
        outside_mass: outside,
    })
}
