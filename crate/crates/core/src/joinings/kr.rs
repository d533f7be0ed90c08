//! Kantorovich-Rubinstein (Wasserstein-1) distance for the taxicab metric on
//! the square.
//!
//! Small inputs are solved exactly as a transportation problem by successive
//! shortest paths with potentials. Large inputs get a certified interval: the
//! upper end is the cost of an explicit coupling (equal-mass x-strips, atoms
//! pooled at barycentres, exact transport inside each strip), the lower end is
//! the best gap over a family of 1-Lipschitz test functions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::measure::{Atom, DiscreteMeasure2D};
use crate::error::{Error, Result};

fn l1(a: &Atom, b: &Atom) -> f64 {
    (a.x - b.x).abs() + (a.y - b.y).abs()
}

/// Atoms with identical coordinates merged.
pub fn merge_duplicates(atoms: &[Atom]) -> Vec<Atom> {
    let mut idx: HashMap<(u64, u64), usize> = HashMap::with_capacity(atoms.len());
    let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        let key = (a.x.to_bits(), a.y.to_bits());
        match idx.get(&key) {
            Some(&k) => out[k].w += a.w,
            None => {
                idx.insert(key, out.len());
                out.push(*a);
            }
        }
    }
    out
}

/// Optimal transport cost between two weighted point sets of equal mass.
///
/// Primal-dual successive shortest paths on the complete bipartite graph; with
/// unit supplies this is the Hungarian method.
pub fn transport_exact(src: &[Atom], dst: &[Atom]) -> f64 {
    let (n, m) = (src.len(), dst.len());
    if n == 0 || m == 0 {
        return 0.0;
    }
    let w0 = src[0].w;
    let unit = src.iter().chain(dst).all(|a| a.w == w0);
    if unit && n == m {
        return assignment(src, dst) * w0;
    }
    let (mut sup, mut dem): (Vec<f64>, Vec<f64>) = if unit {
        (vec![1.0; n], vec![1.0; m])
    } else {
        (
            src.iter().map(|a| a.w).collect(),
            dst.iter().map(|a| a.w).collect(),
        )
    };
    let scale = if unit { w0 } else { 1.0 };
    let total: f64 = sup.iter().sum();
    let eps = if unit {
        0.5
    } else {
        1e-13 * total / (n + m) as f64
    };
    let tiny = if unit { 0.5 } else { 1e-18 };
    let cost: Vec<f64> = (0..n * m).map(|k| l1(&src[k / m], &dst[k % m])).collect();
    let mut flow = vec![0.0f64; n * m];
    let (mut pu, mut pv) = (vec![0.0f64; n], vec![0.0f64; m]);
    const NONE: usize = usize::MAX;
    let mut du = vec![0.0f64; n];
    let mut dv = vec![0.0f64; m];
    let mut done_u = vec![false; n];
    let mut done_v = vec![false; m];
    let mut prev_u = vec![NONE; n];
    let mut prev_v = vec![NONE; m];
    loop {
        if sup.iter().all(|&s| s <= eps) || dem.iter().all(|&d| d <= eps) {
            break;
        }
        for i in 0..n {
            du[i] = if sup[i] > eps { 0.0 } else { f64::INFINITY };
            done_u[i] = false;
            prev_u[i] = NONE;
        }
        for j in 0..m {
            dv[j] = f64::INFINITY;
            done_v[j] = false;
            prev_v[j] = NONE;
        }
        let mut target = NONE;
        loop {
            let mut best = f64::INFINITY;
            let mut pick = (false, NONE);
            for i in 0..n {
                if !done_u[i] && du[i] < best {
                    best = du[i];
                    pick = (true, i);
                }
            }
            for j in 0..m {
                if !done_v[j] && dv[j] < best {
                    best = dv[j];
                    pick = (false, j);
                }
            }
            if pick.1 == NONE {
                break;
            }
            if pick.0 {
                let i = pick.1;
                done_u[i] = true;
                let row = &cost[i * m..(i + 1) * m];
                for j in 0..m {
                    if !done_v[j] {
                        let nd = du[i] + (row[j] + pu[i] - pv[j]).max(0.0);
                        if nd < dv[j] {
                            dv[j] = nd;
                            prev_v[j] = i;
                        }
                    }
                }
            } else {
                let j = pick.1;
                done_v[j] = true;
                if dem[j] > eps {
                    target = j;
                    break;
                }
                for i in 0..n {
                    if !done_u[i] && flow[i * m + j] > tiny * 0.5 {
                        let nd = dv[j] + (-cost[i * m + j] + pv[j] - pu[i]).max(0.0);
                        if nd < du[i] {
                            du[i] = nd;
                            prev_u[i] = j;
                        }
                    }
                }
            }
        }
        if target == NONE {
            break;
        }
        let dt = dv[target];
        for i in 0..n {
            pu[i] += du[i].min(dt);
        }
        for j in 0..m {
            pv[j] += dv[j].min(dt);
        }
        // Walk back: sink <- source (forward edge) <- sink (backward edge) ...
        let mut amt = dem[target];
        let mut j = target;
        let root;
        loop {
            let i = prev_v[j];
            let jb = prev_u[i];
            if jb == NONE {
                root = i;
                break;
            }
            amt = amt.min(flow[i * m + jb]);
            j = jb;
        }
        amt = amt.min(sup[root]);
        let mut j = target;
        loop {
            let i = prev_v[j];
            flow[i * m + j] += amt;
            let jb = prev_u[i];
            if jb == NONE {
                break;
            }
            flow[i * m + jb] -= amt;
            j = jb;
        }
        sup[root] -= amt;
        dem[target] -= amt;
    }
    flow.iter().zip(&cost).map(|(f, c)| f * c).sum::<f64>() * scale
}

/// Minimum-cost perfect matching between equal-size point sets (Hungarian
/// method with row potentials), returned as the total cost.
fn assignment(src: &[Atom], dst: &[Atom]) -> f64 {
    let n = src.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let a = &src[i0 - 1];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = l1(a, &dst[j - 1]) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| l1(&src[p[j] - 1], &dst[j - 1])).sum()
}

/// Largest support accepted by `kr_distance` after merging duplicates.
pub const EXACT_LIMIT: usize = 2500;

/// Exact W1 under the taxicab metric.
pub fn kr_distance(mu: &DiscreteMeasure2D, nu: &DiscreteMeasure2D) -> Result<f64> {
    let (a, b) = (mu.total(), nu.total());
    if (a - b).abs() > 1e-9 * a.max(b).max(1.0) {
        return Err(Error::InvalidInput(format!(
            "unbalanced masses {a} and {b}"
        )));
    }
    let x = merge_duplicates(&mu.atoms);
    let y = merge_duplicates(&nu.atoms);
    if x.len() > EXACT_LIMIT || y.len() > EXACT_LIMIT {
        return Err(Error::InvalidInput(format!(
            "supports of {} and {} atoms exceed the exact limit {EXACT_LIMIT}; use kr_bounds",
            x.len(),
            y.len()
        )));
    }
    Ok(transport_exact(&x, &y))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrOptions {
    pub strips: usize,
    pub bins: usize,
    pub lane_res: f64,
    pub max_lanes: usize,
}

impl Default for KrOptions {
    fn default() -> Self {
        KrOptions {
            strips: 16,
            bins: 1024,
            lane_res: 1.0 / 512.0,
            max_lanes: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrEstimate {
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
    pub method: String,
}

/// Main values of y - x, the lines along which atoms are pooled.
pub fn lanes_of(measures: &[&DiscreteMeasure2D], res: f64, max_lanes: usize) -> Vec<f64> {
    let cells = (2.0 / res).ceil() as usize + 1;
    let mut mass = vec![0.0f64; cells];
    let mut mom = vec![0.0f64; cells];
    let mut total = 0.0;
    for m in measures {
        for a in &m.atoms {
            let d = a.y - a.x;
            let k = (((d + 1.0) / res) as usize).min(cells - 1);
            mass[k] += a.w;
            mom[k] += a.w * d;
            total += a.w;
        }
    }
    let mut peaks: Vec<(f64, f64)> = (0..cells)
        .filter(|&k| mass[k] > 1e-3 * total)
        .map(|k| (mass[k], mom[k] / mass[k]))
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    peaks.truncate(max_lanes);
    let mut lanes: Vec<f64> = peaks.into_iter().map(|p| p.1).collect();
    if lanes.is_empty() {
        lanes.push(0.0);
    }
    lanes.sort_by(f64::total_cmp);
    lanes
}

fn nearest_lane(lanes: &[f64], d: f64) -> usize {
    let k = lanes.partition_point(|&c| c < d);
    match k {
        0 => 0,
        k if k == lanes.len() => k - 1,
        k => {
            if d - lanes[k - 1] <= lanes[k] - d {
                k - 1
            } else {
                k
            }
        }
    }
}

/// Split a measure, sorted by x, into `s` pieces of equal mass.
fn equal_mass_strips(atoms: &[Atom], s: usize) -> Vec<Vec<Atom>> {
    let mut v: Vec<Atom> = atoms.to_vec();
    v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let total: f64 = v.iter().map(|a| a.w).sum();
    let per = total / s as f64;
    let mut out: Vec<Vec<Atom>> = vec![Vec::new(); s];
    let mut k = 0;
    let mut room = per;
    for a in v {
        let mut w = a.w;
        while w > 0.0 {
            if k == s - 1 {
                out[k].push(Atom { w, ..a });
                break;
            }
            if w <= room {
                out[k].push(Atom { w, ..a });
                room -= w;
                w = 0.0;
            } else {
                if room > 0.0 {
                    out[k].push(Atom { w: room, ..a });
                }
                w -= room;
                k += 1;
                room = per;
            }
        }
    }
    out
}

/// Pool atoms by (x-bin, lane) at their barycentre; returns the pooled atoms
/// and the transport cost of the pooling.
fn pool(atoms: &[Atom], lanes: &[f64], bins: usize) -> (Vec<Atom>, f64) {
    let mut idx: HashMap<(usize, usize), usize> = HashMap::new();
    let mut acc: Vec<(f64, f64, f64)> = Vec::new();
    let keys: Vec<usize> = atoms
        .iter()
        .map(|a| {
            let b = ((a.x * bins as f64) as usize).min(bins - 1);
            let l = nearest_lane(lanes, a.y - a.x);
            let n = idx.len();
            let k = *idx.entry((b, l)).or_insert(n);
            if k == acc.len() {
                acc.push((0.0, 0.0, 0.0));
            }
            acc[k].0 += a.w;
            acc[k].1 += a.w * a.x;
            acc[k].2 += a.w * a.y;
            k
        })
        .collect();
    let pooled: Vec<Atom> = acc
        .iter()
        .map(|&(w, sx, sy)| Atom {
            x: sx / w,
            y: sy / w,
            w,
        })
        .collect();
    let disp = atoms
        .iter()
        .zip(&keys)
        .map(|(a, &k)| a.w * l1(a, &pooled[k]))
        .sum();
    (pooled, disp)
}

/// Cost of an explicit coupling, hence an upper bound for W1.
pub fn kr_upper_strips(mu: &DiscreteMeasure2D, nu: &DiscreteMeasure2D, opts: &KrOptions) -> f64 {
    let lanes = lanes_of(&[mu, nu], opts.lane_res, opts.max_lanes);
    let sa = equal_mass_strips(&mu.atoms, opts.strips);
    let sb = equal_mass_strips(&nu.atoms, opts.strips);
    let mut total = 0.0;
    for (a, b) in sa.iter().zip(&sb) {
        let (pa, da) = pool(a, &lanes, opts.bins);
        let (pb, db) = pool(b, &lanes, opts.bins);
        let (ma, mb): (f64, f64) = (pa.iter().map(|t| t.w).sum(), pb.iter().map(|t| t.w).sum());
        // Rounding leaves the two strip masses a few ulps apart.
        let mut pb = pb;
        if mb > 0.0 {
            for t in &mut pb {
                t.w *= ma / mb;
            }
        }
        total += da + db + transport_exact(&pa, &pb) + (ma - mb).abs();
    }
    total
}

/// Best gap over 1-Lipschitz test functions, a lower bound for W1.
pub fn kr_lower_tests(mu: &DiscreteMeasure2D, nu: &DiscreteMeasure2D, lanes: &[f64]) -> f64 {
    let mut best: f64 = 0.0;
    let mut gap = |f: &dyn Fn(f64, f64) -> f64| {
        best = best.max((mu.integrate(f) - nu.integrate(f)).abs());
    };
    gap(&|x, _| x);
    gap(&|_, y| y);
    gap(&|x, y| (y - x).abs());
    let la = lanes_of(&[mu], 1.0 / 512.0, 12);
    let lb = lanes_of(&[nu], 1.0 / 512.0, 12);
    for set in [lanes, &la[..], &lb[..]] {
        gap(&|x, y| {
            set.iter()
                .map(|c| (y - x - c).abs())
                .fold(f64::INFINITY, f64::min)
        });
        for &c in set {
            gap(&|x, y| (y - x - c).abs());
            gap(&|x, y| (y - x - c).clamp(-0.05, 0.05));
        }
    }
    best
}

/// Certified interval for W1: exact below the size limit, otherwise the
/// coupling upper bound and the test-function lower bound.
pub fn kr_bounds(
    mu: &DiscreteMeasure2D,
    nu: &DiscreteMeasure2D,
    opts: &KrOptions,
) -> Result<KrEstimate> {
    match kr_distance(mu, nu) {
        Ok(d) => Ok(KrEstimate {
            lower: d,
            upper: d,
            exact: true,
            method: "exact transport".into(),
        }),
        Err(Error::InvalidInput(msg)) if msg.contains("exact limit") => {
            let lanes = lanes_of(&[mu, nu], opts.lane_res, opts.max_lanes);
            let upper = kr_upper_strips(mu, nu, opts);
            let lower = kr_lower_tests(mu, nu, &lanes).min(upper);
            Ok(KrEstimate {
                lower,
                upper,
                exact: false,
                method: format!(
                    "strip coupling ({} strips, {} bins) / test functions",
                    opts.strips, opts.bins
                ),
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(v: &[(f64, f64, f64)]) -> DiscreteMeasure2D {
        DiscreteMeasure2D {
            atoms: v.iter().map(|&(x, y, w)| Atom { x, y, w }).collect(),
        }
    }

    #[test]
    fn examples() {
        let a = atoms(&[(0.1, 0.2, 1.0)]);
        let b = atoms(&[(0.4, 0.2, 1.0)]);
        assert!((kr_distance(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(kr_distance(&a, &a).unwrap(), 0.0);
        let mu = atoms(&[(0.0, 0.0, 0.5), (0.9, 0.9, 0.5)]);
        let nu = atoms(&[(0.1, 0.0, 0.5), (0.8, 0.9, 0.5)]);
        assert!((kr_distance(&mu, &nu).unwrap() - 0.1).abs() < 1e-12);
        let bad = atoms(&[(0.1, 0.1, 0.5)]);
        assert!(kr_distance(&mu, &bad).is_err());
    }

    #[test]
    fn unequal_weights() {
        // Half of the mass at 0 moves to 0.5 in x.
        let mu = atoms(&[(0.0, 0.0, 1.0)]);
        let nu = atoms(&[(0.0, 0.0, 0.5), (0.5, 0.0, 0.5)]);
        assert!((kr_distance(&mu, &nu).unwrap() - 0.25).abs() < 1e-15);
        let mu = atoms(&[(0.0, 0.0, 0.3), (0.2, 0.0, 0.7)]);
        let nu = atoms(&[(0.1, 0.0, 0.6), (0.5, 0.0, 0.4)]);
        // 1D: integral of |F - G|.
        let want = 0.1 * 0.3 + 0.1 * 0.3 + 0.3 * 0.4;
        assert!((kr_distance(&mu, &nu).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn strip_bound_brackets_exact() {
        let pts: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                (
                    (i as f64 + 0.5) / 400.0,
                    ((i * 37 % 400) as f64 + 0.5) / 400.0,
                )
            })
            .collect();
        let qts: Vec<(f64, f64)> = (0..400)
            .map(|i| {
                (
                    (i as f64 + 0.5) / 400.0,
                    ((i * 91 % 400) as f64 + 0.5) / 400.0,
                )
            })
            .collect();
        let mu = DiscreteMeasure2D::uniform(&pts);
        let nu = DiscreteMeasure2D::uniform(&qts);
        let exact = kr_distance(&mu, &nu).unwrap();
        let opts = KrOptions {
            strips: 4,
            bins: 64,
            ..Default::default()
        };
        let up = kr_upper_strips(&mu, &nu, &opts);
        let lanes = lanes_of(&[&mu, &nu], 1.0 / 512.0, 12);
        let lo = kr_lower_tests(&mu, &nu, &lanes);
        assert!(
            lo <= exact + 1e-12 && exact <= up + 1e-12,
            "{lo} {exact} {up}"
        );
    }
}
