//! Rokhlin towers over intervals, their rigidity statistics and the
//! refined towers over I ∩ T^{±n} I and I ∩ T^{±n} I ∩ T^{±2n} I.

use serde::{Deserialize, Serialize};

use crate::arith;
use crate::error::{Error, Result};
use crate::iet_core::{ExactIet, ExactRotation, Iet3};

/// Largest height accepted by `build_tower`.
pub const MAX_HEIGHT: u128 = 50_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    /// base [a, b) in integer coordinates
    pub base: [u128; 2],
    pub height: u128,
    pub total: u128,
    /// left endpoints of T^i I, in order of i
    #[serde(skip)]
    pub levels: Vec<u128>,
}

impl Tower {
    pub fn width(&self) -> u128 {
        self.base[1] - self.base[0]
    }

    pub fn base_f64(&self) -> (f64, f64) {
        (
            arith::ratio_f64(self.base[0], self.total),
            arith::ratio_f64(self.base[1], self.total),
        )
    }

    pub fn level(&self, i: usize) -> (u128, u128) {
        (self.levels[i], self.levels[i] + self.width())
    }

    /// Sorted left endpoints, for membership queries.
    pub fn sorted_levels(&self) -> Vec<u128> {
        let mut v = self.levels.clone();
        v.sort_unstable();
        v
    }

    /// CSV of level endpoints a,b in order of i.
    pub fn levels_csv(&self) -> String {
        let mut out = String::from("a,b\n");
        for i in 0..self.levels.len() {
            let (a, b) = self.level(i);
            out.push_str(&format!(
                "{:.16e},{:.16e}\n",
                arith::ratio_f64(a, self.total),
                arith::ratio_f64(b, self.total)
            ));
        }
        out
    }
}

/// x lies in a tower whose sorted level endpoints are `sorted`.
pub fn in_levels(sorted: &[u128], width: u128, x: u128) -> bool {
    match sorted.partition_point(|&l| l <= x) {
        0 => false,
        k => x < sorted[k - 1] + width,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerStats {
    pub coverage: f64,
    pub rigidity: f64,
    pub hat_measure: f64,
    pub tilde_measure: f64,
}

/// Tower over [a, b) of height n, certified by exact transport.
pub fn build_tower(iet: &ExactIet, a: u128, b: u128, n: u128) -> Result<Tower> {
    let total = iet.total();
    if !(a < b && b <= total) || n == 0 {
        return Err(Error::InvalidInput("need a < b <= total and n >= 1".into()));
    }
    if n > MAX_HEIGHT {
        return Err(Error::InvalidInput(format!(
            "height {n} above {MAX_HEIGHT}"
        )));
    }
    let w = b - a;
    let cuts = [iet.l[0], iet.l[0] + iet.l[1]];
    let mut levels = Vec::with_capacity(n as usize);
    let mut x = a;
    for i in 0..n {
        levels.push(x);
        if i + 1 < n {
            if cuts.iter().any(|&c| x < c && c < x + w) {
                return Err(Error::LevelSplit { level: i });
            }
            x = iet.apply(x);
        }
    }
    let mut sorted = levels.clone();
    sorted.sort_unstable();
    if let Some(k) = sorted.windows(2).position(|p| p[1] - p[0] < w) {
        let bad = sorted[k + 1];
        let i = levels.iter().rposition(|&l| l == bad).unwrap_or(0);
        return Err(Error::Overlap { level: i as u128 });
    }
    Ok(Tower {
        base: [a, b],
        height: n,
        total,
        levels,
    })
}

/// Binary64 front end: the iet is scaled to integers by 2^60.
pub fn build_tower_f64(iet: &Iet3, a: f64, b: f64, n: u128) -> Result<(ExactIet, Tower)> {
    let e = ExactIet::from_f64(iet)?;
    let tot = e.total() as f64;
    let (ia, ib) = ((a * tot).round() as u128, (b * tot).round() as u128);
    let t = build_tower(&e, ia, ib.min(e.total()), n)?;
    Ok((e, t))
}

fn normalize(mut v: Vec<(u128, u128)>) -> Vec<(u128, u128)> {
    v.sort_unstable();
    let mut out: Vec<(u128, u128)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Image of a union of intervals under T^steps (or T^{-steps}).
pub fn push_pieces(
    iet: &ExactIet,
    pieces: &[(u128, u128)],
    steps: u128,
    forward: bool,
) -> Vec<(u128, u128)> {
    let mut cur = pieces.to_vec();
    for _ in 0..steps {
        let mut next = Vec::with_capacity(cur.len() + 2);
        for &(a, b) in &cur {
            if forward {
                next.extend(iet.transport(a, b));
            } else {
                next.extend(iet.transport_inv(a, b));
            }
        }
        cur = if next.len() > 16 {
            normalize(next)
        } else {
            next
        };
    }
    normalize(cur)
}

fn intersect(x: &[(u128, u128)], y: &[(u128, u128)]) -> Vec<(u128, u128)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < x.len() && j < y.len() {
        let lo = x[i].0.max(y[j].0);
        let hi = x[i].1.min(y[j].1);
        if lo < hi {
            out.push((lo, hi));
        }
        if x[i].1 < y[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

fn measure(x: &[(u128, u128)]) -> u128 {
    x.iter().map(|(a, b)| b - a).sum()
}

/// Exact interval data behind the statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct TowerSets {
    pub forward: Vec<(u128, u128)>,
    pub backward: Vec<(u128, u128)>,
    pub hat_base: Vec<(u128, u128)>,
    pub tilde_base: Vec<(u128, u128)>,
}

pub fn tower_sets(tower: &Tower, iet: &ExactIet) -> TowerSets {
    let base = [(tower.base[0], tower.base[1])];
    let n = tower.height;
    let fwd = push_pieces(iet, &base, n, true);
    let bwd = push_pieces(iet, &base, n, false);
    let fwd2 = push_pieces(iet, &fwd, n, true);
    let bwd2 = push_pieces(iet, &bwd, n, false);
    let hat = intersect(&intersect(&base, &fwd), &bwd);
    let tilde = intersect(&intersect(&hat, &fwd2), &bwd2);
    TowerSets {
        forward: fwd,
        backward: bwd,
        hat_base: hat,
        tilde_base: tilde,
    }
}

pub fn tower_stats(tower: &Tower, iet: &ExactIet) -> TowerStats {
    let sets = tower_sets(tower, iet);
    let base = [(tower.base[0], tower.base[1])];
    let w = tower.width();
    let tot = tower.total as f64;
    let common = measure(&intersect(&base, &sets.forward));
    let n = tower.height as f64;
    TowerStats {
        coverage: n * w as f64 / tot,
        rigidity: 2.0 * (w - common) as f64 / w as f64,
        hat_measure: n * measure(&sets.hat_base) as f64 / tot,
        tilde_measure: n * measure(&sets.tilde_base) as f64 / tot,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerCandidate {
    /// convergent index and denominator the base comes from
    pub index: usize,
    pub q: u128,
    pub base: [u128; 2],
    pub height: u128,
    pub stats: TowerStats,
}

/// Next point of {-uP, N - uP : u < q} strictly right of z, or None.
pub(crate) fn next_jump(rot: &ExactRotation, q: u128, z: u128) -> Option<u128> {
    let step = rot.d - rot.p;
    let c1 = rot.n % rot.d;
    let count = |len: u128| {
        arith::count_in_arc(0, step, q, z + 1, len, rot.d)
            + arith::count_in_arc(c1, step, q, z + 1, len, rot.d)
    };
    let room = rot.n.saturating_sub(z);
    if room == 0 || count(room) == 0 {
        return None;
    }
    let (mut lo, mut hi) = (0u128, room);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(z + hi)
}

/// Best base for the convergent denominator q: a gap of the jump set of
/// psi_q trimmed to the minimal return distance below q.
fn convergent_base(
    rot: &ExactRotation,
    q: u128,
    cap: u128,
    samples: u128,
) -> Option<(u128, u128, u128)> {
    let step = rot.d - rot.p;
    let mut best: Option<(u128, u128, u128, f64)> = None;
    let take = q.min(samples);
    for u in 0..take {
        let v = arith::mulmod(u, step, rot.d);
        for z in [v, (v + rot.n) % rot.d] {
            if z >= rot.n {
                continue;
            }
            let Some(e) = next_jump(rot, q, z) else {
                continue;
            };
            let w = (e - z).min(cap);
            if w == 0 {
                continue;
            }
            let h = rot.psi(z, q);
            let score = h as f64 * w as f64;
            if best.is_none_or(|b| score > b.3) {
                best = Some((z, z + w, h, score));
            }
        }
    }
    best.map(|b| (b.0, b.1, b.2))
}

/// Towers from convergent denominators, by increasing q, keeping a chain of
/// nondecreasing coverage. Every returned candidate passed `build_tower`.
pub fn suggest_towers(iet: &ExactIet, k_max: usize) -> Vec<TowerCandidate> {
    let rot = iet.rotation();
    let cs = rot.convergents();
    let mut out: Vec<TowerCandidate> = Vec::new();
    let mut examined = 0;
    for k in 0..cs.len() {
        let c = cs[k];
        if examined >= k_max {
            break;
        }
        if c.q < 2 || k > 0 && cs[k - 1].q == c.q {
            continue;
        }
        examined += 1;
        if c.q as f64 * iet.rotation().kappa() > MAX_HEIGHT as f64 {
            break;
        }
        let cap = cs[..k]
            .iter()
            .rev()
            .find(|p| p.q < c.q)
            .map_or(rot.d, |p| p.s.unsigned_abs().max(1));
        let Some((a, b, h)) = convergent_base(&rot, c.q, cap, 512) else {
            continue;
        };
        if h == 0 {
            continue;
        }
        let Ok(tower) = build_tower(iet, a, b, h) else {
            continue;
        };
        let stats = tower_stats(&tower, iet);
        if out
            .last()
            .is_none_or(|l| stats.coverage >= l.stats.coverage)
        {
            out.push(TowerCandidate {
                index: c.index,
                q: c.q,
                base: [a, b],
                height: h,
                stats,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params;

    #[test]
    fn periodic_tower() {
        let iet = ExactIet::from_decimals(&["0.2", "0.3", "0.5"]).unwrap();
        let n = iet.total();
        // Period of an integer iet: T is a rotation of the integer circle.
        let mut y = iet.apply(0);
        let mut period = 1u128;
        while y != 0 {
            y = iet.apply(y);
            period += 1;
        }
        assert_eq!(period, n);
        let t = build_tower(&iet, 0, 1, period).unwrap();
        let st = tower_stats(&t, &iet);
        assert_eq!(st.rigidity, 0.0);
        assert_eq!(st.hat_measure, st.coverage);
        assert_eq!(st.coverage, 1.0);
    }

    #[test]
    fn pigeonhole_fails() {
        let iet = Iet3::new(0.213, 0.347, 0.44).unwrap();
        let r = build_tower_f64(&iet, 0.0, 0.5, 3);
        assert!(matches!(
            r,
            Err(Error::LevelSplit { .. }) | Err(Error::Overlap { .. })
        ));
    }

    #[test]
    fn golden_type_suggestions() {
        let g = params::golden_type();
        let cands = suggest_towers(&g.iet, 20);
        assert!(!cands.is_empty());
        for w in cands.windows(2) {
            assert!(w[1].stats.coverage >= w[0].stats.coverage);
        }
        let best = cands
            .iter()
            .find(|c| c.stats.coverage > 0.9 && c.stats.rigidity < 0.05)
            .unwrap();
        assert_eq!(best.q, 5_448_633);
        let s = best.stats;
        assert!(
            s.tilde_measure <= s.hat_measure && s.hat_measure <= s.coverage && s.coverage <= 1.0
        );
    }

    #[test]
    fn golden_tower_coverage() {
        let gm = params::golden(40, 1.0 / 1.3).unwrap();
        let cands = suggest_towers(&gm, 20);
        assert!(cands.iter().any(|c| c.stats.coverage > 0.9));
    }
}
