//! Switching a joining from one power of T to another on half of the space.
//!
//! Everything is computed in the rotation picture on the integers. At a
//! renormalization time with convergent denominator q, R^q y = y + s and the
//! count c(y) = psi_q(y) takes the values m and m + 1. The count jumps at
//! Z = {-uP, N - uP : u < q}. A is the tower over a short interval J placed
//! at the edge of an m-arc, B the (m + 1)-arcs shrunk away from Z.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Check;
use crate::arith::{count_in_arc, mulmod};
use crate::error::{Error, Result};
use crate::iet_core::{ExactIet, ExactRotation};
use crate::joinings::{kr_distance, sample_power_joining, sampled_orbit_joining};
use crate::renorm::{find_renorm_times, RenormTime};
use crate::towers::{build_tower, next_jump, Tower, MAX_HEIGHT};

/// Atoms per orbit measure in the KR checks; longer orbits are sampled.
pub const KR_WINDOW_CAP: u128 = 500;
/// Points per set used in the KR checks.
pub const KR_POINTS: usize = 8;
/// Above this q the measure of B is estimated from samples.
pub const EXACT_ARCS_LIMIT: u128 = 1 << 20;
const B_SAMPLES: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchSpec {
    pub a: i128,
    pub b: i128,
    pub epsilon: f64,
    /// renormalization time; searched when absent
    pub t: Option<f64>,
    pub delta: f64,
    pub t_max: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SwitchSpec {
    pub fn new(a: i128, b: i128, epsilon: f64) -> Self {
        SwitchSpec {
            a,
            b,
            epsilon,
            t: None,
            delta: 0.3,
            t_max: 40.0,
            samples: 10_000,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowStats {
    pub checked: usize,
    pub within: usize,
    pub fraction: f64,
    pub max_error: f64,
    /// |a - b| |s| / N, the error on the good set
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub samples: usize,
    pub shadow_a: Option<ShadowStats>,
    pub shadow_b: Option<ShadowStats>,
    pub return_lower: u128,
    pub return_upper: u128,
    /// atoms per orbit measure in the KR checks
    pub kr_window: u128,
    pub kr_a_max: f64,
    pub kr_b_max: f64,
    pub kr_bound: f64,
    /// measure of K outside A and B plus the sampled shadowing failures
    pub exceptional: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchResult {
    pub a: i128,
    pub b: i128,
    pub epsilon: f64,
    pub n: i128,
    pub m: u128,
    pub r: u128,
    pub l: u128,
    pub t: f64,
    pub rho: f64,
    pub v_len: f64,
    pub theta: f64,
    pub q: u128,
    pub s: i128,
    pub p_hat: u128,
    pub window: u128,
    /// J = [j0, j1) in integer coordinates
    pub j: [u128; 2],
    /// A is the union over u < q of [a_start + uP, a_start + uP + a_len) inside K
    pub a_start: u128,
    pub a_len: u128,
    /// B: count m + 1 and no jump point within b_margin
    pub b_margin: u128,
    pub measure_a: f64,
    pub measure_b: f64,
    pub measure_b_exact: bool,
    pub rot: ExactRotation,
    pub report: SwitchReport,
    pub verified: bool,
    pub failing: Vec<String>,
}

impl SwitchResult {
    pub fn in_a(&self, y: u128) -> bool {
        let rot = &self.rot;
        if y >= rot.n {
            return false;
        }
        let lo = (y + rot.d - (self.a_len - 1) % rot.d) % rot.d;
        count_in_arc(self.a_start, rot.p, self.q, lo, self.a_len, rot.d) > 0
    }

    pub fn in_b(&self, y: u128) -> bool {
        let rot = &self.rot;
        y < rot.n
            && rot.psi(y, self.q) == self.m + 1
            && jumps_near(rot, self.q, y, self.b_margin) == 0
    }

    /// J in [0, 1) coordinates.
    pub fn j_f64(&self) -> (f64, f64) {
        let n = self.rot.n;
        (
            crate::arith::ratio_f64(self.j[0], n),
            crate::arith::ratio_f64(self.j[1], n),
        )
    }

    pub fn measure_j(&self) -> f64 {
        crate::arith::ratio_f64(self.j[1] - self.j[0], self.rot.n)
    }

    /// The r levels of A as an explicit tower over J.
    pub fn a_tower(&self, iet: &ExactIet) -> Result<Tower> {
        if self.r > MAX_HEIGHT {
            return Err(Error::Range(format!(
                "r = {} exceeds the explicit tower limit",
                self.r
            )));
        }
        build_tower(iet, self.j[0], self.j[1], self.r)
    }
}

/// Jump points of psi_q within distance w of y.
fn jumps_near(rot: &ExactRotation, q: u128, y: u128, w: u128) -> u128 {
    let lo = (y + rot.d - w % rot.d) % rot.d;
    let step = rot.d - rot.p;
    count_in_arc(0, step, q, lo, 2 * w + 1, rot.d)
        + count_in_arc(rot.n % rot.d, step, q, lo, 2 * w + 1, rot.d)
}

struct Geometry {
    window: u128,
    p_hat: u128,
    j: [u128; 2],
    a_start: u128,
    a_len: u128,
    b_margin: u128,
    r: u128,
}

fn geometry(rot: &ExactRotation, rt: &RenormTime, delta: u128) -> Result<Geometry> {
    let q = rt.q;
    let sa = rt.s.unsigned_abs();
    if sa == 0 {
        return Err(Error::DegenerateRotation(
            "closed orbit at this time".into(),
        ));
    }
    let window = 2 + delta;
    let step = rot.d - rot.p;
    // an m-arc [z, e) inside K
    let mut arc = None;
    for u in 1..q.min(4096) {
        let z = (rot.n + mulmod(u, step, rot.d)) % rot.d;
        if z >= rot.n || rot.psi(z, q) != rt.m {
            continue;
        }
        if let Some(e) = next_jump(rot, q, z) {
            arc = Some((z, e));
            break;
        }
    }
    let (z, e) = arc.ok_or_else(|| Error::SearchFailure("no m-arc found".into()))?;
    let p_hat = ((e - z) / sa) as i128 - 2 * window as i128 - 3;
    if p_hat < 1 {
        return Err(Error::TooCoarse(p_hat));
    }
    let p_hat = p_hat as u128;
    let len = p_hat * sa;
    let (j, a_start) = if rt.s > 0 {
        let j0 = z + (window + 1) * sa;
        ([j0, j0 + sa], j0)
    } else {
        let j0 = e - (window + 2) * sa;
        ([j0, j0 + sa], j0 + sa - len)
    };
    let r = rt.m * p_hat;
    // every arc of A keeps distance window*|s| from Z and from Z - s
    let w = window * sa;
    let lo = (a_start + rot.d - w) % rot.d;
    let hits = count_in_arc(0, step, 2 * q - 1, lo, len + 2 * w, rot.d)
        + count_in_arc(rot.n % rot.d, step, 2 * q - 1, lo, len + 2 * w, rot.d);
    if hits != 0 {
        return Err(Error::SearchFailure(format!(
            "A arcs come within {w} of a jump point"
        )));
    }
    if rot.psi(j[0], q * p_hat) != r {
        return Err(Error::SearchFailure(
            "flow box over J does not have m visits per unit".into(),
        ));
    }
    Ok(Geometry {
        window,
        p_hat,
        j,
        a_start,
        a_len: len,
        b_margin: (4 + delta) * sa,
        r,
    })
}

/// Exact measure of B for moderate q by sweeping the sorted jump points.
fn measure_b_exact(rot: &ExactRotation, q: u128, m: u128, w: u128) -> u128 {
    let mut ev: Vec<(u128, i8)> = Vec::with_capacity(2 * q as usize);
    let mut v = 0u128;
    for _ in 0..q {
        let z1 = (rot.d - v) % rot.d;
        let z2 = (rot.n + rot.d - v) % rot.d;
        if z1 <= rot.n {
            ev.push((z1, 1));
        }
        if z2 <= rot.n {
            ev.push((z2, -1));
        }
        v = (v + rot.p) % rot.d;
    }
    ev.sort_unstable();
    let mut pos: Vec<u128> = ev.iter().map(|e| e.0).collect();
    pos.dedup();
    let mut total = 0u128;
    for win in pos.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        if lo >= rot.n {
            break;
        }
        if rot.psi(lo, q) == m + 1 && hi - lo > 2 * w + 1 {
            total += hi - lo - 2 * w - 1;
        }
    }
    total
}

fn sample_set(
    res: &SwitchResult,
    count: usize,
    rng: &mut ChaCha8Rng,
    in_set: impl Fn(&SwitchResult, u128) -> bool,
) -> Vec<u128> {
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count && tries < 50 * count + 100 {
        tries += 1;
        let y = rng.gen_range(0..res.rot.n);
        if in_set(res, y) {
            out.push(y);
        }
    }
    out
}

fn shadow(
    iet: &ExactIet,
    pts: &[u128],
    n: i128,
    target: i128,
    eps: f64,
    predicted: f64,
) -> ShadowStats {
    let (mut cn, mut ct) = (Vec::new(), Vec::new());
    let mut within = 0;
    let mut max_error: f64 = 0.0;
    for &x in pts {
        let y1 = iet.pow_cached(n, x, &mut cn);
        let y2 = iet.pow_cached(target, x, &mut ct);
        let err = (iet.coord(y1) - iet.coord(y2)).abs();
        if err < eps {
            within += 1;
        }
        max_error = max_error.max(err);
    }
    ShadowStats {
        checked: pts.len(),
        within,
        fraction: if pts.is_empty() {
            1.0
        } else {
            within as f64 / pts.len() as f64
        },
        max_error,
        predicted,
    }
}

fn kr_max(iet: &ExactIet, pts: &[u128], n: i128, target: i128, l: u128, seed: u64) -> Result<f64> {
    let atoms = l.min(KR_WINDOW_CAP) as usize;
    let nu = sample_power_joining(iet, target, atoms, seed);
    let mut worst: f64 = 0.0;
    for (i, &x) in pts.iter().take(KR_POINTS).enumerate() {
        let orbit = sampled_orbit_joining(iet, x, n, l, atoms, seed.wrapping_add(i as u64))?;
        worst = worst.max(kr_distance(&orbit, &nu)?);
    }
    Ok(worst)
}

/// Re-check the conclusions of the switch on fresh samples.
pub fn verify_switch(
    iet: &ExactIet,
    res: &SwitchResult,
    samples: usize,
    seed: u64,
) -> Result<SwitchReport> {
    let (return_lower, return_upper) = iet.return_bounds(res.j[0], res.j[1]);
    let window = res.l.clamp(1, KR_WINDOW_CAP);
    let kr_bound = 2.0 * res.epsilon + 4.0 / (window as f64).sqrt();
    if samples == 0 {
        return Ok(SwitchReport {
            samples,
            shadow_a: None,
            shadow_b: None,
            return_lower,
            return_upper,
            kr_window: window,
            kr_a_max: 0.0,
            kr_b_max: 0.0,
            kr_bound,
            exceptional: (1.0 - res.measure_a - res.measure_b).max(0.0),
            checks: Vec::new(),
            pass: true,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pa = sample_set(res, samples, &mut rng, SwitchResult::in_a);
    let pb = sample_set(res, samples, &mut rng, SwitchResult::in_b);
    let predicted =
        (res.a - res.b).unsigned_abs() as f64 * res.s.unsigned_abs() as f64 / res.rot.n as f64;
    let sa = shadow(iet, &pa, res.n, res.a, res.epsilon, predicted);
    let sb = shadow(iet, &pb, res.n, res.b, res.epsilon, predicted);
    let kr_a_max = kr_max(iet, &pa, res.n, res.a, res.l.max(1), seed ^ 0xa)?;
    let kr_b_max = kr_max(iet, &pb, res.n, res.b, res.l.max(1), seed ^ 0xb)?;
    let half = 0.5 - res.epsilon;
    let checks = vec![
        Check::at_least("shadowing on A", sa.fraction, 0.95),
        Check::at_least("shadowing on B", sb.fraction, 0.95),
        Check::at_least("measure of A", res.measure_a, half),
        Check::at_least("measure of B", res.measure_b, half),
        Check::at_least("return time of J", return_lower as f64, 1.5 * res.r as f64),
        Check::below("KR on A", kr_a_max, kr_bound),
        Check::below("KR on B", kr_b_max, kr_bound),
    ];
    let exceptional = (1.0 - res.measure_a - res.measure_b).max(0.0)
        + res.measure_a * (1.0 - sa.fraction)
        + res.measure_b * (1.0 - sb.fraction);
    let pass = checks.iter().all(|c| c.pass);
    Ok(SwitchReport {
        samples,
        shadow_a: Some(sa),
        shadow_b: Some(sb),
        return_lower,
        return_upper,
        kr_window: window,
        kr_a_max,
        kr_b_max,
        kr_bound,
        exceptional,
        checks,
        pass,
    })
}

/// Build the switch at the given renormalization time.
pub fn switch_at(iet: &ExactIet, rt: &RenormTime, spec: &SwitchSpec) -> Result<SwitchResult> {
    let rot = iet.rotation();
    let delta = (spec.a - spec.b).unsigned_abs();
    let g = geometry(&rot, rt, delta)?;
    let n = spec.b + (rt.m as i128 + 1) * (spec.a - spec.b);
    let measure_a = g.r as f64 * rt.s.unsigned_abs() as f64 / rot.n as f64;
    let mut res = SwitchResult {
        a: spec.a,
        b: spec.b,
        epsilon: spec.epsilon,
        n,
        m: rt.m,
        r: g.r,
        l: rt.m,
        t: rt.t,
        rho: rt.rho,
        v_len: rt.v_len,
        theta: rt.theta,
        q: rt.q,
        s: rt.s,
        p_hat: g.p_hat,
        window: g.window,
        j: g.j,
        a_start: g.a_start,
        a_len: g.a_len,
        b_margin: g.b_margin,
        measure_a,
        measure_b: 0.0,
        measure_b_exact: false,
        rot,
        report: SwitchReport {
            samples: 0,
            shadow_a: None,
            shadow_b: None,
            return_lower: 0,
            return_upper: 0,
            kr_window: 0,
            kr_a_max: 0.0,
            kr_b_max: 0.0,
            kr_bound: 0.0,
            exceptional: 0.0,
            checks: Vec::new(),
            pass: false,
        },
        verified: false,
        failing: Vec::new(),
    };
    if rt.q <= EXACT_ARCS_LIMIT {
        res.measure_b = measure_b_exact(&rot, rt.q, rt.m, g.b_margin) as f64 / rot.n as f64;
        res.measure_b_exact = true;
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d);
        let hits = (0..B_SAMPLES)
            .filter(|&i| {
                let u: f64 = rng.gen();
                let y = iet.point((i as f64 + u) / B_SAMPLES as f64);
                res.in_b(y)
            })
            .count();
        res.measure_b = hits as f64 / B_SAMPLES as f64;
    }
    let report = verify_switch(iet, &res, spec.samples, spec.seed)?;
    res.failing = report
        .checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.name.clone())
        .collect();
    res.verified = report.pass;
    res.report = report;
    Ok(res)
}

/// Build and verify a switch from T^a to T^b. Without a given time, the
/// accepted renormalization times are tried by increasing q.
pub fn build_switch(iet: &ExactIet, spec: &SwitchSpec) -> Result<SwitchResult> {
    if spec.a == spec.b {
        return Err(Error::InvalidParameters("a and b must differ".into()));
    }
    if !(spec.epsilon > 0.0 && spec.epsilon < 0.2) {
        return Err(Error::InvalidParameters(format!(
            "epsilon must lie in (0, 0.2), got {}",
            spec.epsilon
        )));
    }
    let t_max = spec.t.map_or(spec.t_max, |t| spec.t_max.max(t + 1.0));
    let search = find_renorm_times(iet, spec.delta, t_max)?;
    let delta = (spec.a - spec.b).unsigned_abs() as f64;
    let n = iet.total() as f64;
    if let Some(t) = spec.t {
        let rt = search
            .accepted
            .iter()
            .find(|rt| (rt.t - t).abs() < 1e-6)
            .ok_or_else(|| {
                Error::SearchFailure(format!("t = {t} is not an accepted renormalization time"))
            })?;
        return switch_at(iet, rt, spec);
    }
    for rt in &search.accepted {
        if delta * rt.s.unsigned_abs() as f64 / n >= spec.epsilon {
            continue;
        }
        match switch_at(iet, rt, spec) {
            Ok(res) => return Ok(res),
            Err(Error::TooCoarse(_)) | Err(Error::SearchFailure(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SearchFailure(
        "no accepted renormalization time admits the switch".into(),
    ))
}
