//! Symmetric 3-interval exchanges, their rotation picture, visit counts and
//! return times.
//!
//! `Iet3` is the binary64 view. `ExactIet` holds integer lengths over a common
//! denominator and realizes T as the first return of an integer rotation, which
//! gives exact powers for exponents far beyond direct iteration.

use serde::{Deserialize, Serialize};

use crate::arith::{self, count_below, count_in, muladd_divrem, mulmod};
use crate::error::{Error, Result};

/// Per-step error bound of binary64 branch arithmetic.
pub const F64_STEP_ERROR: f64 = 4.0 * f64::EPSILON / 2.0;

const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeTag {
    ExactRational,
    Binary64,
    ExtendedPrecision,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArithmeticMode {
    pub tag: ModeTag,
    pub tolerance: f64,
}

impl ArithmeticMode {
    pub fn exact() -> Self {
        ArithmeticMode {
            tag: ModeTag::ExactRational,
            tolerance: 0.0,
        }
    }
    pub fn binary64() -> Self {
        ArithmeticMode {
            tag: ModeTag::Binary64,
            tolerance: F64_STEP_ERROR,
        }
    }
    /// Accumulated tolerance after `steps` iterations.
    pub fn drift(&self, steps: u64) -> f64 {
        self.tolerance * steps as f64
    }
}

/// Symmetric 3-IET on [0,1) with lengths summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iet3 {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl Iet3 {
    /// Normalizes the lengths to total one.
    pub fn new(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(l1) && ok(l2) && ok(l3)) {
            return Err(Error::InvalidParameters(format!(
                "lengths must be finite and non-negative: {l1}, {l2}, {l3}"
            )));
        }
        let s = l1 + l2 + l3;
        if s <= 0.0 {
            return Err(Error::InvalidParameters("lengths sum to zero".into()));
        }
        let (l1, l2) = (l1 / s, l2 / s);
        Ok(Iet3 {
            l1,
            l2,
            l3: 1.0 - l1 - l2,
        })
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn check(x: f64) -> Result<()> {
        if (0.0..1.0).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain(x))
        }
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        Self::check(x)?;
        Ok(self.step(x))
    }

    /// Branch step without the domain check.
    pub fn step(&self, x: f64) -> f64 {
        let y = if x < self.l1 {
            x + self.l2 + self.l3
        } else if x < self.l1 + self.l2 {
            x + self.l3 - self.l1
        } else {
            x - self.l1 - self.l2
        };
        y.clamp(0.0, BELOW_ONE)
    }

    /// Inverse branch step: the 3-IET with lengths (l3, l2, l1).
    pub fn step_inv(&self, y: f64) -> f64 {
        let x = if y < self.l3 {
            y + self.l1 + self.l2
        } else if y < self.l3 + self.l2 {
            y - self.l3 + self.l1
        } else {
            y - self.l2 - self.l3
        };
        x.clamp(0.0, BELOW_ONE)
    }

    pub fn apply_pow(&self, n: i64, x: f64) -> Result<f64> {
        Self::check(x)?;
        let mut y = x;
        if n >= 0 {
            for _ in 0..n {
                y = self.step(y);
            }
        } else {
            for _ in 0..n.unsigned_abs() {
                y = self.step_inv(y);
            }
        }
        Ok(y)
    }

    pub fn inverse(&self) -> Iet3 {
        Iet3 {
            l1: self.l3,
            l2: self.l2,
            l3: self.l1,
        }
    }

    pub fn to_rotation(&self) -> RotationRep {
        let den = self.l1 + 2.0 * self.l2 + self.l3;
        RotationRep {
            alpha: (self.l2 + self.l3) / den,
            kappa: (self.l1 + self.l2 + self.l3) / den,
        }
    }

    pub fn from_rotation(rep: RotationRep) -> Result<Self> {
        rep.validate()?;
        Iet3::new(
            rep.kappa - rep.alpha,
            1.0 - rep.kappa,
            rep.alpha + rep.kappa - 1.0,
        )
    }

    /// Discontinuities of T inside (0,1).
    pub fn discontinuities(&self) -> [f64; 2] {
        [self.l1, self.l1 + self.l2]
    }

    pub fn orbit(&self, x: f64, len: usize) -> Result<OrbitSegment> {
        Self::check(x)?;
        let mut points = Vec::with_capacity(len);
        let mut y = x;
        for _ in 0..len {
            points.push(y);
            y = self.step(y);
        }
        Ok(OrbitSegment {
            start: x,
            len,
            points,
        })
    }

    /// Images of a half-open interval under T, split at discontinuities.
    pub fn transport(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(3);
        let cuts = [0.0, self.l1, self.l1 + self.l2, 1.0];
        let shift = [self.l2 + self.l3, self.l3 - self.l1, -self.l1 - self.l2];
        for i in 0..3 {
            let lo = a.max(cuts[i]);
            let hi = b.min(cuts[i + 1]);
            if hi > lo {
                out.push((lo + shift[i], hi + shift[i]));
            }
        }
        out
    }

    /// Smallest n in [1, n_max] with T^n J meeting J in positive measure.
    pub fn min_return_time(&self, a: f64, b: f64, n_max: u64) -> Result<Option<u64>> {
        if !(0.0 <= a && a < b && b <= 1.0) || n_max == 0 {
            return Err(Error::InvalidParameters(format!(
                "bad interval [{a},{b}) or n_max"
            )));
        }
        let tol = 1e-12;
        let mut pieces = vec![(a, b)];
        for n in 1..=n_max {
            let mut next = Vec::with_capacity(pieces.len() + 2);
            for &(lo, hi) in &pieces {
                next.extend(self.transport(lo, hi));
            }
            if next.iter().any(|&(lo, hi)| lo.max(a) < hi.min(b) - tol) {
                return Ok(Some(n));
            }
            pieces = next;
        }
        Ok(None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationRep {
    pub alpha: f64,
    pub kappa: f64,
}

impl RotationRep {
    pub fn validate(&self) -> Result<()> {
        let RotationRep { alpha, kappa } = *self;
        if !(alpha > 0.0 && alpha < 1.0 && kappa <= 1.0 && kappa > alpha && alpha + kappa > 1.0) {
            return Err(Error::InvalidParameters(format!(
                "need 0 < alpha < kappa <= 1 and alpha + kappa > 1, got alpha={alpha}, kappa={kappa}"
            )));
        }
        Ok(())
    }

    pub fn rotate(&self, x: f64) -> f64 {
        let y = x + self.alpha;
        if y >= 1.0 {
            y - 1.0
        } else {
            y
        }
    }

    /// Visits of x, R x, ..., R^{M-1} x to [0, kappa).
    pub fn psi_count(&self, x: f64, m: u64) -> Result<u64> {
        Iet3::check(x)?;
        let mut y = x;
        let mut c = 0;
        for _ in 0..m {
            if y < self.kappa {
                c += 1;
            }
            y = self.rotate(y);
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub start: f64,
    pub len: usize,
    pub points: Vec<f64>,
}

/// Integer rotation y -> y + p mod d with induced set K = [0, n).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactRotation {
    pub d: u128,
    pub p: u128,
    pub n: u128,
}

impl ExactRotation {
    pub fn rot(&self, y: u128, u: u128) -> u128 {
        let s = mulmod(u, self.p, self.d);
        let z = y + s;
        if z >= self.d {
            z - self.d
        } else {
            z
        }
    }

    pub fn rot_back(&self, y: u128, u: u128) -> u128 {
        let s = mulmod(u, self.p, self.d);
        if y >= s {
            y - s
        } else {
            y + self.d - s
        }
    }

    /// psi_M(y): visits to K among y, y+p, ..., y+(M-1)p.
    pub fn psi(&self, y: u128, m: u128) -> u128 {
        count_below(y, self.p, m, self.n, self.d)
    }

    /// Visits to K among y, y-p, ..., y-(M-1)p.
    pub fn psi_back(&self, y: u128, m: u128) -> u128 {
        count_below(y, self.d - self.p, m, self.n, self.d)
    }

    /// Hits of {y + u p : u < m} in [lo, hi).
    pub fn hits(&self, y: u128, m: u128, lo: u128, hi: u128) -> u128 {
        count_in(y, self.p, m, lo, hi, self.d)
    }

    pub fn alpha(&self) -> f64 {
        arith::ratio_f64(self.p, self.d)
    }

    pub fn kappa(&self) -> f64 {
        arith::ratio_f64(self.n, self.d)
    }

    pub fn convergents(&self) -> Vec<arith::Convergent> {
        arith::convergents(self.p, self.d)
    }

    /// Rotation time of the k-th return of y in K (k >= 0), forward or backward.
    pub fn return_index(&self, y: u128, k: u128, forward: bool) -> u128 {
        if k == 0 {
            return 0;
        }
        let step = if forward { self.p } else { self.d - self.p };
        let pred = |m: u128| count_below(y, step, m + 1, self.n, self.d) > k;
        let est = muladd_divrem(k, self.d, 0, self.n).0.clamp(k, 2 * k);
        let (mut lo, mut hi);
        let mut r: u128 = 8;
        if pred(est) {
            hi = est;
            loop {
                let c = est.saturating_sub(r).max(k);
                if c == k {
                    if pred(k) {
                        return k;
                    }
                    lo = k;
                    break;
                }
                if !pred(c) {
                    lo = c;
                    break;
                }
                hi = c;
                r = r.saturating_mul(4);
            }
        } else {
            lo = est;
            loop {
                let c = est.saturating_add(r).min(2 * k);
                if pred(c) {
                    hi = c;
                    break;
                }
                lo = c;
                r = r.saturating_mul(4);
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pred(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Whether M is the rotation time of the k-th return of y.
    pub fn is_return_index(&self, y: u128, k: u128, m: u128, forward: bool) -> bool {
        let z = if forward {
            self.rot(y, m)
        } else {
            self.rot_back(y, m)
        };
        if z >= self.n {
            return false;
        }
        let c = if forward {
            self.psi(y, m)
        } else {
            self.psi_back(y, m)
        };
        c == k
    }
}

/// Exact 3-IET on the integers {0, ..., n-1}, n = l1 + l2 + l3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactIet {
    pub l: [u128; 3],
}

/// Largest total length accepted, so that rotation sums stay far from overflow.
pub const MAX_TOTAL: u128 = 1u128 << 120;

impl ExactIet {
    pub fn new(l1: u128, l2: u128, l3: u128) -> Result<Self> {
        let n = l1.checked_add(l2).and_then(|v| v.checked_add(l3));
        match n {
            Some(n) if n > 0 && n + l2 <= MAX_TOTAL => Ok(ExactIet { l: [l1, l2, l3] }),
            _ => Err(Error::InvalidParameters(
                "integer lengths must be positive in total and below 2^120".into(),
            )),
        }
    }

    /// Binary64 lengths, scaled by 2^60 and rounded.
    pub fn from_f64(iet: &Iet3) -> Result<Self> {
        let s = (1u128 << 60) as f64;
        let a = (iet.l1 * s).round() as u128;
        let b = (iet.l2 * s).round() as u128;
        let c = (iet.l3 * s).round() as u128;
        ExactIet::new(a, b, c)
    }

    /// Decimal strings such as "0.2" read as exact rationals.
    pub fn from_decimals(parts: &[&str]) -> Result<Self> {
        if parts.len() != 3 {
            return Err(Error::InvalidParameters("need three lengths".into()));
        }
        let mut nums = [0u128; 3];
        let mut scale = 0usize;
        for p in parts {
            let p = p.trim();
            let frac = p.split_once('.').map(|(_, f)| f.len()).unwrap_or(0);
            scale = scale.max(frac);
        }
        if scale > 30 {
            return Err(Error::InvalidParameters("too many decimal digits".into()));
        }
        for (i, p) in parts.iter().enumerate() {
            let p = p.trim();
            let (ip, fp) = p.split_once('.').unwrap_or((p, ""));
            let digits = format!("{ip}{fp}{}", "0".repeat(scale - fp.len()));
            nums[i] = digits.parse::<u128>().map_err(|_| {
                Error::InvalidParameters(format!("not a non-negative decimal: {p}"))
            })?;
        }
        let g = arith::gcd(arith::gcd(nums[0], nums[1]), nums[2]).max(1);
        ExactIet::new(nums[0] / g, nums[1] / g, nums[2] / g)
    }

    /// From an exact rotation with 0 < n <= d, p + n > d, n > p.
    pub fn from_rotation(rot: ExactRotation) -> Result<Self> {
        let ExactRotation { d, p, n } = rot;
        if !(p > 0 && p < d && n <= d && n > p && p + n > d) {
            return Err(Error::InvalidParameters(format!(
                "rotation (d={d}, p={p}, n={n}) has no 3-IET"
            )));
        }
        ExactIet::new(n - p, d - n, p + n - d)
    }

    pub fn total(&self) -> u128 {
        self.l[0] + self.l[1] + self.l[2]
    }

    pub fn rotation(&self) -> ExactRotation {
        let [a, b, c] = self.l;
        ExactRotation {
            d: a + 2 * b + c,
            p: b + c,
            n: a + b + c,
        }
    }

    pub fn to_f64(&self) -> Iet3 {
        let n = self.total();
        let l1 = arith::ratio_f64(self.l[0], n);
        let l2 = arith::ratio_f64(self.l[1], n);
        Iet3 {
            l1,
            l2,
            l3: 1.0 - l1 - l2,
        }
    }

    pub fn coord(&self, y: u128) -> f64 {
        arith::ratio_f64(y, self.total())
    }

    /// Grid point floor(x * n).
    pub fn point(&self, x: f64) -> u128 {
        let n = self.total();
        let v = (x.clamp(0.0, 1.0) * n as f64) as u128;
        v.min(n - 1)
    }

    pub fn apply(&self, y: u128) -> u128 {
        let [a, b, c] = self.l;
        if y < a {
            y + b + c
        } else if y < a + b {
            y + c - a
        } else {
            y - a - b
        }
    }

    pub fn apply_inv(&self, y: u128) -> u128 {
        let [a, b, c] = self.l;
        if y < c {
            y + a + b
        } else if y < c + b {
            y + a - c
        } else {
            y - b - c
        }
    }

    /// T^k y through the rotation picture.
    pub fn pow(&self, k: i128, y: u128) -> u128 {
        let rot = self.rotation();
        let m = rot.return_index(y, k.unsigned_abs(), k >= 0);
        if k >= 0 {
            rot.rot(y, m)
        } else {
            rot.rot_back(y, m)
        }
    }

    /// T^k y, trying cached rotation times first. Points sharing a piece of
    /// T^k share the rotation time, so a small cache hits often.
    pub fn pow_cached(&self, k: i128, y: u128, cache: &mut Vec<u128>) -> u128 {
        let rot = self.rotation();
        let fwd = k >= 0;
        let kk = k.unsigned_abs();
        if kk <= 4 {
            return self.pow_direct(k, y);
        }
        let hit = cache
            .iter()
            .position(|&m| rot.is_return_index(y, kk, m, fwd));
        let m = match hit {
            Some(i) => {
                let m = cache.remove(i);
                cache.insert(0, m);
                m
            }
            None => {
                let m = rot.return_index(y, kk, fwd);
                cache.insert(0, m);
                cache.truncate(12);
                m
            }
        };
        if fwd {
            rot.rot(y, m)
        } else {
            rot.rot_back(y, m)
        }
    }

    /// T^k y by direct iteration.
    pub fn pow_direct(&self, k: i128, y: u128) -> u128 {
        let mut z = y;
        if k >= 0 {
            for _ in 0..k {
                z = self.apply(z);
            }
        } else {
            for _ in 0..k.unsigned_abs() {
                z = self.apply_inv(z);
            }
        }
        z
    }

    /// Images of [a, b) under T.
    pub fn transport(&self, a: u128, b: u128) -> Vec<(u128, u128)> {
        let [l1, l2, _] = self.l;
        let n = self.total();
        let cuts = [0, l1, l1 + l2, n];
        let mut out = Vec::with_capacity(3);
        for i in 0..3 {
            let lo = a.max(cuts[i]);
            let hi = b.min(cuts[i + 1]);
            if hi > lo {
                out.push((self.apply(lo), self.apply(lo) + (hi - lo)));
            }
        }
        out
    }

    /// Images of [a, b) under T^{-1}.
    pub fn transport_inv(&self, a: u128, b: u128) -> Vec<(u128, u128)> {
        let [_, l2, l3] = self.l;
        let n = self.total();
        let cuts = [0, l3, l3 + l2, n];
        let mut out = Vec::with_capacity(3);
        for i in 0..3 {
            let lo = a.max(cuts[i]);
            let hi = b.min(cuts[i + 1]);
            if hi > lo {
                out.push((self.apply_inv(lo), self.apply_inv(lo) + (hi - lo)));
            }
        }
        out
    }

    /// Return time of J = [a, b) to itself.
    ///
    /// Up to `transport_limit` steps the answer is exact by interval
    /// transport. Beyond it the rotation picture gives a certified lower bound
    /// and an explicit upper bound.
    pub fn min_return_time(
        &self,
        a: u128,
        b: u128,
        n_max: u128,
        transport_limit: u128,
    ) -> Result<ReturnTime> {
        let n = self.total();
        if !(a < b && b <= n) || n_max == 0 {
            return Err(Error::InvalidParameters("bad interval or n_max".into()));
        }
        let mut pieces = vec![(a, b)];
        let lim = n_max.min(transport_limit);
        for k in 1..=lim {
            let mut next = Vec::with_capacity(pieces.len() + 2);
            for &(lo, hi) in &pieces {
                next.extend(self.transport(lo, hi));
            }
            if next.iter().any(|&(lo, hi)| lo.max(a) < hi.min(b)) {
                return Ok(ReturnTime::Exact(k));
            }
            pieces = next;
            if pieces.len() > 4096 {
                break;
            }
        }
        if lim == n_max && pieces.len() <= 4096 {
            return Ok(ReturnTime::NotFound);
        }
        let (lower, upper) = self.return_bounds(a, b);
        if lower > n_max {
            return Ok(ReturnTime::NotFound);
        }
        if lower == upper {
            Ok(ReturnTime::Exact(lower))
        } else {
            Ok(ReturnTime::Bounds { lower, upper })
        }
    }

    /// Certified (lower, upper) bounds for the return time of [a, b) under T.
    pub fn return_bounds(&self, a: u128, b: u128) -> (u128, u128) {
        let rot = self.rotation();
        let w = b - a;
        let u1 = first_rotation_return(&rot, w);
        // psi_{u1}(y) >= psi_{u1}(a) minus the exits from K met while y runs over (a, b).
        let base = rot.psi(a, u1);
        let drops = count_in(rot.n, rot.d - rot.p, u1, a + 1, b, rot.d);
        let lower = base - drops.min(base);
        // A point of J landing in J after u1 rotation steps.
        let h = mulmod(u1, rot.p, rot.d);
        let y = if h < rot.d / 2 {
            a
        } else {
            (a + (rot.d - h)).min(b - 1)
        };
        let upper = rot.psi(y, u1);
        (lower, upper.max(lower))
    }
}

/// Smallest u >= 1 with |u p mod d| < w (circular distance).
pub fn first_rotation_return(rot: &ExactRotation, w: u128) -> u128 {
    let circ = |u: u128| {
        let v = mulmod(u, rot.p, rot.d);
        v.min(rot.d - v)
    };
    const DIRECT: u128 = 1024;
    for u in 1..=DIRECT {
        if circ(u) < w {
            return u;
        }
    }
    let cs = rot.convergents();
    // Best approximations beyond DIRECT are q_{k-1} + j q_k, j = 1..a_{k+1}.
    for k in 1..cs.len() {
        let (prev, cur) = (cs[k - 1], cs[k]);
        if k + 1 >= cs.len() {
            break;
        }
        let a_next = cs[k + 1].a;
        let sp = prev.s.unsigned_abs();
        let sc = cur.s.unsigned_abs();
        if sc == 0 {
            break;
        }
        // values sp - j*sc, want first j with value < w
        let j = if sp < w { 1 } else { (sp - w) / sc + 1 };
        if j <= a_next {
            let u = prev.q + j * cur.q;
            if u > DIRECT && circ(u) < w {
                return u;
            }
        }
    }
    rot.d
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReturnTime {
    Exact(u128),
    Bounds { lower: u128, upper: u128 },
    NotFound,
}

impl ReturnTime {
    /// Certified lower bound, if found.
    pub fn lower(&self) -> Option<u128> {
        match *self {
            ReturnTime::Exact(n) => Some(n),
            ReturnTime::Bounds { lower, .. } => Some(lower),
            ReturnTime::NotFound => None,
        }
    }
}
