//! Integer helpers: wide products, floor sums, hit counts along arithmetic
//! progressions mod d, and continued fractions.

const LO: u128 = u64::MAX as u128;

/// Full 256-bit product as (hi, lo).
pub fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    let (a1, a0) = (a >> 64, a & LO);
    let (b1, b0) = (b >> 64, b & LO);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & LO) + (p10 & LO);
    let lo = (p00 & LO) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// Divide the 256-bit value (hi, lo) by m. Requires hi < m so the quotient fits.
///
/// Long division in base 2^64 after normalizing m, two quotient digits.
pub fn div_wide(hi: u128, lo: u128, m: u128) -> (u128, u128) {
    debug_assert!(m > 0 && hi < m);
    if hi == 0 {
        return (lo / m, lo % m);
    }
    const B: u128 = 1 << 64;
    let s = m.leading_zeros();
    let v = m << s;
    let (vn1, vn0) = (v >> 64, v & LO);
    let un32 = if s == 0 {
        hi
    } else {
        (hi << s) | (lo >> (128 - s))
    };
    let un10 = lo << s;
    let (un1, un0) = (un10 >> 64, un10 & LO);
    let digit = |num: u128, next: u128| -> u128 {
        let mut q = num / vn1;
        let mut rhat = num - q * vn1;
        while q >= B || q * vn0 > (rhat << 64) + next {
            q -= 1;
            rhat += vn1;
            if rhat >= B {
                break;
            }
        }
        q
    };
    let q1 = digit(un32, un1);
    let un21 = (un32 << 64)
        .wrapping_add(un1)
        .wrapping_sub(q1.wrapping_mul(v));
    let q0 = digit(un21, un0);
    let r = (un21 << 64)
        .wrapping_add(un0)
        .wrapping_sub(q0.wrapping_mul(v))
        >> s;
    ((q1 << 64) | q0, r)
}

/// (a*n + b) div/mod m with a 256-bit intermediate; the quotient must fit in u128.
pub fn muladd_divrem(a: u128, n: u128, b: u128, m: u128) -> (u128, u128) {
    if let Some(v) = a.checked_mul(n).and_then(|x| x.checked_add(b)) {
        return (v / m, v % m);
    }
    let (mut hi, lo) = mul_wide(a, n);
    let (lo, c) = lo.overflowing_add(b);
    hi += c as u128;
    div_wide(hi, lo, m)
}

/// a*b mod m.
pub fn mulmod(a: u128, b: u128, m: u128) -> u128 {
    let (hi, lo) = mul_wide(a % m, b % m);
    div_wide(hi, lo, m).1
}

fn tri_wrapping(n: u128) -> u128 {
    // n(n-1)/2 mod 2^128
    if n.is_multiple_of(2) {
        (n / 2).wrapping_mul(n.wrapping_sub(1))
    } else {
        n.wrapping_mul((n - 1) / 2)
    }
}

/// sum_{i<n} floor((a*i + b)/m), reduced mod 2^128.
///
/// Differences of floor sums that are known to be small come out exact.
pub fn floor_sum_wrapping(mut n: u128, mut m: u128, mut a: u128, mut b: u128) -> u128 {
    let mut ans = 0u128;
    loop {
        if n == 0 {
            return ans;
        }
        if a >= m {
            ans = ans.wrapping_add(tri_wrapping(n).wrapping_mul(a / m));
            a %= m;
        }
        if b >= m {
            ans = ans.wrapping_add(n.wrapping_mul(b / m));
            b %= m;
        }
        if a == 0 {
            return ans;
        }
        let (y_q, y_r) = muladd_divrem(a, n, b, m);
        if y_q == 0 {
            return ans;
        }
        n = y_q;
        b = y_r;
        std::mem::swap(&mut m, &mut a);
    }
}

/// #{u < cnt : (c0 + u*step) mod d < t}, for c0, step < d and t <= d < 2^126.
pub fn count_below(c0: u128, step: u128, cnt: u128, t: u128, d: u128) -> u128 {
    if t == 0 || cnt == 0 {
        return 0;
    }
    if t >= d {
        return cnt;
    }
    let f1 = floor_sum_wrapping(cnt, d, step, c0);
    let f2 = floor_sum_wrapping(cnt, d, step, c0 + d - t);
    cnt.wrapping_add(f1).wrapping_sub(f2)
}

/// #{u < cnt : (c0 + u*step) mod d in [lo, hi)}.
pub fn count_in(c0: u128, step: u128, cnt: u128, lo: u128, hi: u128, d: u128) -> u128 {
    if hi <= lo {
        return 0;
    }
    count_below(c0, step, cnt, hi, d) - count_below(c0, step, cnt, lo, d)
}

/// Hits of the progression in a circular arc [lo, lo+len) mod d.
pub fn count_in_arc(c0: u128, step: u128, cnt: u128, lo: u128, len: u128, d: u128) -> u128 {
    if len >= d {
        return cnt;
    }
    let lo = lo % d;
    let hi = lo + len;
    if hi <= d {
        count_in(c0, step, cnt, lo, hi, d)
    } else {
        count_in(c0, step, cnt, lo, d, d) + count_in(c0, step, cnt, 0, hi - d, d)
    }
}

pub fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Inverse of a mod m for gcd(a, m) = 1.
pub fn modinv(a: u128, m: u128) -> Option<u128> {
    if m == 1 {
        return Some(0);
    }
    // Track coefficients mod m to stay unsigned.
    let (mut r0, mut r1) = (m, a % m);
    let (mut s0, mut s1) = (0u128, 1u128);
    while r1 != 0 {
        let q = r0 / r1;
        let r2 = r0 - q * r1;
        let s2 = (s0 + m - mulmod(q, s1, m)) % m;
        r0 = r1;
        r1 = r2;
        s0 = s1;
        s1 = s2;
    }
    (r0 == 1).then_some(s0)
}

/// Partial quotients of p/q.
pub fn cf_expand(mut p: u128, mut q: u128) -> Vec<u128> {
    let mut out = Vec::new();
    while q != 0 {
        out.push(p / q);
        let r = p % q;
        p = q;
        q = r;
    }
    out
}

/// Convergent p_k/q_k of a ratio P/D together with s_k = q_k P - p_k D.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Convergent {
    pub index: usize,
    pub p: u128,
    pub q: u128,
    pub s: i128,
    /// partial quotient a_{index}
    pub a: u128,
}

/// Convergents of P/D with 0 < P < D. Index 0 is 0/1.
pub fn convergents(p_num: u128, d: u128) -> Vec<Convergent> {
    let quots = cf_expand(p_num, d);
    let mut out = Vec::with_capacity(quots.len());
    let (mut pm2, mut qm2) = (0u128, 1u128);
    let (mut pm1, mut qm1) = (1u128, 0u128);
    for (i, &a) in quots.iter().enumerate() {
        let p = a * pm1 + pm2;
        let q = a * qm1 + qm2;
        let s = signed_defect(q, p, p_num, d);
        out.push(Convergent {
            index: i,
            p,
            q,
            s,
            a,
        });
        pm2 = pm1;
        qm2 = qm1;
        pm1 = p;
        qm1 = q;
    }
    out
}

/// q*P - p*D as i128; valid while the true value is small.
pub fn signed_defect(q: u128, p: u128, p_num: u128, d: u128) -> i128 {
    let x = q.wrapping_mul(p_num);
    let y = p.wrapping_mul(d);
    x.wrapping_sub(y) as i128
}

/// Nearest-integer ratio a/b as f64 for values that do not fit f64 exactly.
pub fn ratio_f64(a: u128, b: u128) -> f64 {
    let q = a / b;
    let r = a % b;
    q as f64 + r as f64 / b as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn div_wide_bitwise(hi: u128, lo: u128, m: u128) -> (u128, u128) {
        let mut r = hi;
        let mut q = 0u128;
        for i in (0..128).rev() {
            let carry = r >> 127;
            r = (r << 1) | ((lo >> i) & 1);
            q <<= 1;
            if carry == 1 || r >= m {
                r = r.wrapping_sub(m);
                q |= 1;
            }
        }
        (q, r)
    }

    proptest! {
        #[test]
        fn div_wide_matches_bitwise(m in 1u128.., hi_seed: u128, lo: u128, shift in 0u32..128) {
            let m = (m >> shift).max(1);
            let hi = hi_seed % m;
            prop_assert_eq!(div_wide(hi, lo, m), div_wide_bitwise(hi, lo, m));
        }
    }

    #[test]
    fn div_wide_edges() {
        for m in [
            1u128,
            2,
            3,
            u64::MAX as u128,
            1 << 64,
            (1 << 64) + 1,
            u128::MAX,
            u128::MAX - 1,
            1 << 127,
        ] {
            for hi in [0u128, 1, m / 2, m - 1] {
                if hi >= m {
                    continue;
                }
                for lo in [0u128, 1, u128::MAX, 1 << 64, u64::MAX as u128] {
                    assert_eq!(
                        div_wide(hi, lo, m),
                        div_wide_bitwise(hi, lo, m),
                        "{hi} {lo} {m}"
                    );
                }
            }
        }
    }

    fn brute_floor_sum(n: u128, m: u128, a: u128, b: u128) -> u128 {
        (0..n).map(|i| (a * i + b) / m).sum()
    }

    #[test]
    fn wide_product_matches_small() {
        let (hi, lo) = mul_wide(u128::MAX, u128::MAX);
        assert_eq!(lo, 1);
        assert_eq!(hi, u128::MAX - 1);
        let (q, r) = div_wide(hi, lo, u128::MAX);
        assert_eq!((q, r), (u128::MAX, 0));
    }

    #[test]
    fn floor_sum_small_cases() {
        for n in 0..20u128 {
            for m in 1..12u128 {
                for a in 0..15u128 {
                    for b in 0..15u128 {
                        assert_eq!(floor_sum_wrapping(n, m, a, b), brute_floor_sum(n, m, a, b));
                    }
                }
            }
        }
    }

    #[test]
    fn count_below_matches_loop() {
        let d = 97u128;
        for step in [0u128, 1, 13, 50, 96] {
            for c0 in [0u128, 5, 96] {
                for t in [0u128, 1, 40, 97] {
                    let want = (0..300u128).filter(|u| (c0 + u * step) % d < t).count() as u128;
                    assert_eq!(count_below(c0, step, 300, t, d), want);
                }
            }
        }
    }

    #[test]
    fn huge_counts_are_consistent() {
        // Splitting a long progression must add up.
        let d: u128 = 10u128.pow(30) + 7;
        let step: u128 = 6_180_339_887_498_948_482_045_868_343;
        let c0 = 12345u128;
        let cnt: u128 = 10u128.pow(25);
        let t = d / 3;
        let whole = count_below(c0, step, cnt, t, d);
        let half = cnt / 2;
        let c1 = (c0 + mulmod(half, step, d)) % d;
        let split = count_below(c0, step, half, t, d) + count_below(c1, step, cnt - half, t, d);
        assert_eq!(whole, split);
        let frac = whole as f64 / cnt as f64;
        assert!((frac - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn convergents_of_small_ratio() {
        let cs = convergents(13, 31);
        let qs: Vec<u128> = cs.iter().map(|c| c.q).collect();
        assert_eq!(cf_expand(13, 31), vec![0, 2, 2, 1, 1, 2]);
        assert_eq!(qs, vec![1, 2, 5, 7, 12, 31]);
        assert_eq!(cs.last().unwrap().s, 0);
        for c in &cs {
            assert_eq!(c.s, c.q as i128 * 13 - c.p as i128 * 31);
        }
    }

    #[test]
    fn modinv_works() {
        for m in [7u128, 31, 1000003] {
            for a in 1..50u128 {
                if gcd(a, m) == 1 {
                    assert_eq!(mulmod(a, modinv(a, m).unwrap(), m), 1);
                }
            }
        }
        assert_eq!(modinv(6, 9), None);
    }
}
