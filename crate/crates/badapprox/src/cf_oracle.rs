//! Continued fractions as one-dimensional ground truth: Lagrange constants,
//! Bad_κ membership and the known dimension asymptotics at m = n = 1.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{invalid, Result};

/// Convergents with q_k·q_{k+1} beyond this are not trusted for f64 input:
/// q²·(rounding error of x) must stay well below the quantities measured.
const FLOAT_TRUST: f64 = 8589934592.0; // 2^33

/// Where the number being expanded comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// num/den, exact.
    Rational(BigInt, BigInt),
    /// A double, treated as an approximation of a real number.
    Float(f64),
    /// (P + √D)/Q with D not a square and Q | D − P².
    QuadraticSurd { p: i64, d: i64, q: i64 },
}

impl Source {
    pub fn golden() -> Self {
        Source::QuadraticSurd { p: -1, d: 5, q: 2 }
    }

    pub fn sqrt2_minus_one() -> Self {
        Source::QuadraticSurd { p: -1, d: 2, q: 1 }
    }

    pub fn rational(num: i64, den: i64) -> Self {
        Source::Rational(BigInt::from(num), BigInt::from(den))
    }

    pub fn value(&self) -> f64 {
        match self {
            Source::Rational(a, b) => BigRational::new(a.clone(), b.clone()).to_f64().unwrap_or(f64::NAN),
            Source::Float(x) => *x,
            Source::QuadraticSurd { p, d, q } => (*p as f64 + (*d as f64).sqrt()) / *q as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CFExpansion {
    x: f64,
    partial_quotients: Vec<u64>,
    convergents: Vec<(BigInt, BigInt)>,
    /// Complete quotients α_{k+1} = [a_{k+1}; a_{k+2}, …] for surds.
    tails: Vec<f64>,
    /// x itself for rational and float input.
    exact: Option<BigRational>,
    rational: bool,
}

impl CFExpansion {
    /// Expands x ∈ (0,1) to at most `depth` partial quotients.
    pub fn new(source: &Source, depth: usize) -> Result<Self> {
        let x = source.value();
        if !(x > 0.0 && x < 1.0) {
            return invalid(format!("x must lie in (0,1), got {x}"));
        }
        if depth == 0 {
            return invalid("depth must be positive");
        }
        let (quotients, rational, tails) = match source {
            Source::Rational(a, b) => {
                let (qs, done) = rational_quotients(a.clone(), b.clone(), depth);
                (qs, done, Vec::new())
            }
            Source::Float(v) => float_quotients(*v, depth),
            Source::QuadraticSurd { p, d, q } => surd_quotients(*p, *d, *q, depth)?,
        };
        let mut convergents = Vec::with_capacity(quotients.len());
        let (mut p0, mut q0) = (BigInt::zero(), BigInt::one());
        let (mut p1, mut q1) = (BigInt::one(), BigInt::zero());
        for &a in &quotients {
            let a = BigInt::from(a);
            let p2 = &a * &p0 + &p1;
            let q2 = &a * &q0 + &q1;
            p1 = std::mem::replace(&mut p0, p2);
            q1 = std::mem::replace(&mut q0, q2);
            convergents.push((p0.clone(), q0.clone()));
        }
        let exact = match source {
            Source::Rational(a, b) => Some(BigRational::new(a.clone(), b.clone())),
            Source::Float(v) => BigRational::from_float(*v),
            Source::QuadraticSurd { .. } => None,
        };
        Ok(CFExpansion { x, partial_quotients: quotients, convergents, tails, exact, rational })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn partial_quotients(&self) -> &[u64] {
        &self.partial_quotients
    }

    /// (p_k, q_k) for k = 1..N.
    pub fn convergents(&self) -> &[(BigInt, BigInt)] {
        &self.convergents
    }

    /// Whether the expansion terminated, i.e. x was found to be rational.
    pub fn is_rational(&self) -> bool {
        self.rational
    }

    /// q_k·|q_k x − p_k| = 1/(α_{k+1} + q_{k−1}/q_k) for k = 1..N−1.
    pub fn scaled_errors(&self) -> Vec<f64> {
        if let Some(x) = &self.exact {
            return self.convergents[..self.convergents.len().saturating_sub(1)]
                .iter()
                .map(|(p, q)| {
                    let qr = BigRational::from_integer(q.clone());
                    (&qr * (&qr * x - BigRational::from_integer(p.clone()))).abs().to_f64().unwrap_or(f64::NAN)
                })
                .collect();
        }
        let mut out = Vec::new();
        for k in 0..self.convergents.len().saturating_sub(1) {
            let qk = self.convergents[k].1.to_f64().unwrap_or(f64::INFINITY);
            let qprev = if k == 0 { 0.0 } else { self.convergents[k - 1].1.to_f64().unwrap_or(f64::INFINITY) };
            out.push(1.0 / (self.tails[k + 1] + qprev / qk));
        }
        out
    }
}

fn rational_quotients(mut a: BigInt, mut b: BigInt, depth: usize) -> (Vec<u64>, bool) {
    // x = a/b ∈ (0,1); first step inverts
    let mut out = Vec::new();
    std::mem::swap(&mut a, &mut b);
    while out.len() < depth {
        if b.is_zero() {
            return (out, true);
        }
        let (qt, r) = a.div_rem(&b);
        out.push(qt.to_u64().unwrap_or(u64::MAX));
        a = b;
        b = r;
        if a.is_zero() {
            break;
        }
    }
    let done = b.is_zero();
    (out, done)
}

fn float_quotients(v: f64, depth: usize) -> (Vec<u64>, bool, Vec<f64>) {
    // exact dyadic expansion of v, cut where it stops tracking the real number
    let bits = v.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64 - 1075;
    let mant = (bits & ((1u64 << 52) - 1)) | (1u64 << 52);
    let (num, den) = if exp >= 0 {
        (BigInt::from(mant) << exp as usize, BigInt::one())
    } else {
        (BigInt::from(mant), BigInt::one() << (-exp) as usize)
    };
    let (qs, done) = rational_quotients(num, den, depth.saturating_add(1));
    let mut kept = Vec::new();
    let (mut q0, mut q1) = (1.0f64, 0.0f64);
    for (i, &a) in qs.iter().enumerate() {
        let q2 = a as f64 * q0 + q1;
        if q0 * q2 > FLOAT_TRUST || kept.len() == depth {
            return (kept, false, Vec::new());
        }
        kept.push(a);
        q1 = q0;
        q0 = q2;
        if i + 1 == qs.len() && done {
            return (kept, true, Vec::new());
        }
    }
    (kept, false, Vec::new())
}

fn surd_quotients(p: i64, d: i64, q: i64, depth: usize) -> Result<(Vec<u64>, bool, Vec<f64>)> {
    let s = d.sqrt();
    if d <= 0 || s * s == d {
        return invalid(format!("D={d} must be a positive non-square"));
    }
    if q <= 0 || (d - p * p) % q != 0 {
        return invalid(format!("need Q > 0 dividing D − P², got P={p}, D={d}, Q={q}"));
    }
    let sd = (d as f64).sqrt();
    // invert: 1/x = (−P + √D)/((D − P²)/Q)
    let (mut pp, mut qq) = (-p as i128, ((d - p * p) / q) as i128);
    let d = d as i128;
    let s = s as i128;
    let mut qs = Vec::with_capacity(depth);
    let mut tails = Vec::with_capacity(depth);
    while qs.len() < depth {
        if qq <= 0 {
            return invalid("surd recurrence left the reduced range");
        }
        tails.push((pp as f64 + sd) / qq as f64);
        let a = (pp + s).div_euclid(qq);
        qs.push(a as u64);
        pp = a * qq - pp;
        qq = (d - pp * pp) / qq;
    }
    Ok((qs, false, tails))
}

/// Convergent-based estimate of liminf_q q‖qx‖.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeEstimate {
    pub value: f64,
    pub error_bar: f64,
}

/// Estimates liminf q‖qx‖ from the convergents k ≤ depth: the minimum of
/// q_k‖q_k x‖ over the last quarter of the expansion, with the spread of
/// that quarter as error bar. Rational x gives 0.
pub fn lagrange_constant(source: &Source, depth: usize) -> Result<LagrangeEstimate> {
    if depth > 64 {
        return invalid(format!("depth at most 64, got {depth}"));
    }
    let cf = CFExpansion::new(source, depth)?;
    if cf.is_rational() {
        return Ok(LagrangeEstimate { value: 0.0, error_bar: 0.0 });
    }
    let v = cf.scaled_errors();
    if v.len() < 4 {
        return invalid("expansion too short to estimate a liminf");
    }
    // any three consecutive convergents contain one below 1/√5
    let tail = &v[(3 * v.len() / 4).min(v.len() - 3)..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = match source {
        Source::Float(_) => 1e-6,
        _ => 1e-14,
    };
    Ok(LagrangeEstimate { value: lo, error_bar: hi - lo + slack })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Member,
    NotMember,
    Indeterminate,
}

impl Membership {
    pub fn is_member(self) -> bool {
        self == Membership::Member
    }
}

/// Whether liminf q‖qx‖ > κ, decided only when the margin beats the error bar.
pub fn bad_kappa_test(source: &Source, kappa: f64, depth: usize) -> Result<Membership> {
    let est = lagrange_constant(source, depth)?;
    Ok(if est.value - est.error_bar > kappa {
        Membership::Member
    } else if est.value + est.error_bar < kappa || (est.value == 0.0 && kappa >= 0.0) {
        Membership::NotMember
    } else {
        Membership::Indeterminate
    })
}

/// Truncated Hensley asymptotic, with a flag for κ inside (0, 0.05].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HensleyValue {
    pub value: f64,
    pub in_guard: bool,
}

/// 1 − (6/π²)κ − (72/π⁴)κ²|log κ|, the O(κ²) remainder dropped.
pub fn hensley_dim(kappa: f64) -> HensleyValue {
    let value = if kappa == 0.0 {
        1.0
    } else {
        1.0 - 6.0 / (PI * PI) * kappa - 72.0 / PI.powi(4) * kappa * kappa * kappa.ln().abs()
    };
    HensleyValue { value, in_guard: kappa > 0.0 && kappa <= 0.05 }
}

/// Kurzweil's bounds (1 − 0.99κ, 1 − 0.25κ).
pub fn kurzweil_band(kappa: f64) -> (f64, f64) {
    (1.0 - 0.99 * kappa, 1.0 - 0.25 * kappa)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub citation: &'static str,
}

/// κ beyond which the one-dimensional Bad_κ has dimension zero.
pub fn moreira_threshold() -> Threshold {
    Threshold { value: 1.0 / 3.0, citation: "Moreira: dim Bad_κ = 0 iff κ ≥ 1/3 (m = n = 1)" }
}

/// Whether x = a/b is hit in the window: some q ∈ [q1, q2] and integer p
/// with |qx − p| ≤ ψ(q). Only convergents and their multiples are checked,
/// which is complete while qψ(q) < 1/2 on the window and ψ is nonincreasing.
pub fn window_hit(a: u128, b: u128, q1: f64, q2: f64, psi: impl Fn(f64) -> f64) -> bool {
    debug_assert!(a < b);
    // |q_j a − p_j b| equals the j-th Euclid remainder
    let (mut s_prev, mut s) = (b, a);
    let (mut q_prev, mut q) = (0u128, 1u128);
    let bf = b as f64;
    loop {
        let qf = q as f64;
        if qf > q2 {
            return false;
        }
        let dist = s as f64 / bf;
        let k = if qf >= q1 { 1.0 } else { (q1 / qf).ceil() };
        let qq = k * qf;
        if qq <= q2 && k * dist <= psi(qq) {
            return true;
        }
        if s == 0 {
            return false;
        }
        let t = s_prev / s;
        let r = s_prev - t * s;
        s_prev = s;
        s = r;
        let next = t.saturating_mul(q).saturating_add(q_prev);
        q_prev = q;
        q = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::RngCore;

    use crate::rng::shard_rng;

    // direct recurrence on floats, independent of the BigInt path
    fn oracle_min_tail(x: f64, depth: usize) -> f64 {
        let (mut p0, mut q0, mut p1, mut q1) = (0f64, 1f64, 1f64, 0f64);
        let mut y = x;
        let mut vals = Vec::new();
        for _ in 0..depth {
            y = 1.0 / y;
            let a = y.floor();
            y -= a;
            let (p2, q2) = (a * p0 + p1, a * q0 + q1);
            p1 = p0;
            q1 = q0;
            p0 = p2;
            q0 = q2;
            vals.push(q0 * (q0 * x - p0).abs());
        }
        vals[depth / 2..].iter().copied().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn lagrange_examples() {
        let g = lagrange_constant(&Source::golden(), 30).unwrap();
        assert!((g.value - 1.0 / 5f64.sqrt()).abs() < 1e-5, "{g:?}");
        assert!((oracle_min_tail((5f64.sqrt() - 1.0) / 2.0, 20) - g.value).abs() < 1e-5);
        let s = lagrange_constant(&Source::sqrt2_minus_one(), 30).unwrap();
        assert!((s.value - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-5, "{s:?}");
        assert!((oracle_min_tail(2f64.sqrt() - 1.0, 12) - s.value).abs() < 1e-3);
        assert_eq!(lagrange_constant(&Source::rational(1, 2), 30).unwrap().value, 0.0);
        let f = lagrange_constant(&Source::Float((5f64.sqrt() - 1.0) / 2.0), 40).unwrap();
        assert!((f.value - 1.0 / 5f64.sqrt()).abs() < 1e-4, "{f:?}");
        assert!(lagrange_constant(&Source::golden(), 65).is_err());
    }

    #[test]
    fn surd_quotients_are_periodic() {
        let cf = CFExpansion::new(&Source::golden(), 20).unwrap();
        assert!(cf.partial_quotients().iter().all(|&a| a == 1));
        let cf = CFExpansion::new(&Source::sqrt2_minus_one(), 20).unwrap();
        assert!(cf.partial_quotients().iter().all(|&a| a == 2));
        // √3 − 1 = [0; 1, 2, 1, 2, …]
        let cf = CFExpansion::new(&Source::QuadraticSurd { p: -1, d: 3, q: 1 }, 6).unwrap();
        assert_eq!(cf.partial_quotients(), &[1, 2, 1, 2, 1, 2]);
        assert!(CFExpansion::new(&Source::QuadraticSurd { p: 0, d: 4, q: 4 }, 5).is_err());
    }

    #[test]
    fn membership() {
        assert_eq!(bad_kappa_test(&Source::golden(), 0.3, 30).unwrap(), Membership::Member);
        assert_eq!(bad_kappa_test(&Source::golden(), 0.5, 30).unwrap(), Membership::NotMember);
        assert!(bad_kappa_test(&Source::golden(), 0.0, 30).unwrap().is_member());
        assert!(bad_kappa_test(&Source::golden(), 0.34, 30).unwrap().is_member());
        assert_eq!(bad_kappa_test(&Source::rational(3, 7), 0.0, 30).unwrap(), Membership::NotMember);
        assert_eq!(
            bad_kappa_test(&Source::golden(), 1.0 / 5f64.sqrt(), 30).unwrap(),
            Membership::Indeterminate
        );
    }

    #[test]
    fn recurrence_and_alternation_exact() {
        let mut rng = shard_rng(17, 0);
        for _ in 0..10_000 {
            let den = (rng.next_u64() % 1_000_000_000) as i64 + 2;
            let num = (rng.next_u64() % (den as u64 - 1)) as i64 + 1;
            let cf = CFExpansion::new(&Source::rational(num, den), 64).unwrap();
            assert!(cf.is_rational());
            let x = BigRational::new(BigInt::from(num), BigInt::from(den));
            let c = cf.convergents();
            let a = cf.partial_quotients();
            for k in 0..c.len() {
                if k >= 2 {
                    assert_eq!(c[k].1, BigInt::from(a[k]) * &c[k - 1].1 + &c[k - 2].1);
                    assert!(c[k].1 > c[k - 1].1);
                }
                let diff = BigRational::new(c[k].0.clone(), c[k].1.clone()) - &x;
                let diff_next = c.get(k + 1).map(|(p, q)| BigRational::new(p.clone(), q.clone()) - &x);
                if let Some(dn) = diff_next {
                    if !dn.is_zero() {
                        assert!(diff.is_positive() != dn.is_positive());
                    }
                }
                // p_k q_{k-1} − p_{k-1} q_k = ±1
                if k >= 1 {
                    let det = &c[k].0 * &c[k - 1].1 - &c[k - 1].0 * &c[k].1;
                    assert_eq!(det.abs(), BigInt::one());
                }
            }
            assert_eq!(BigRational::new(c.last().unwrap().0.clone(), c.last().unwrap().1.clone()), x);
        }
    }

    #[test]
    fn hurwitz_envelope() {
        let mut rng = shard_rng(23, 0);
        for _ in 0..500 {
            let x = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
            if let Ok(est) = lagrange_constant(&Source::Float(x), 40) {
                assert!(est.value <= 1.0 / 5f64.sqrt() + est.error_bar + 1e-9);
            }
        }
    }

    #[test]
    fn dimension_asymptotics() {
        let h = hensley_dim(0.01);
        assert!(h.in_guard);
        assert!((h.value - 0.993581).abs() < 5e-6, "{}", h.value);
        assert_eq!(hensley_dim(0.0).value, 1.0);
        assert!(!hensley_dim(0.1).in_guard);
        let theta11 = 6.0 / (PI * PI);
        let k = 1e-7;
        assert_relative_eq!((hensley_dim(k).value - 1.0) / k, -theta11, max_relative = 1e-4);
        for kappa in [0.001, 0.01, 0.03, 0.05] {
            let (lo, hi) = kurzweil_band(kappa);
            let h = hensley_dim(kappa).value;
            assert!(lo <= h && h <= hi);
            let gap = h - (1.0 - theta11 * kappa) + 72.0 / PI.powi(4) * kappa * kappa * kappa.ln().abs();
            assert!(gap.abs() < 1e-15);
        }
        let (lo, hi) = kurzweil_band(0.01);
        assert_relative_eq!(lo, 0.9901);
        assert_relative_eq!(hi, 0.9975);
        assert_eq!(kurzweil_band(0.0), (1.0, 1.0));
        assert_eq!(moreira_threshold().value, 1.0 / 3.0);
    }

    #[test]
    fn window_hit_matches_brute_force() {
        let mut rng = shard_rng(29, 0);
        let psi = |q: f64| 0.05 / q;
        for _ in 0..3000 {
            let b = 1u128 << 40;
            let a = (rng.next_u64() as u128) % b;
            let x = a as f64 / b as f64;
            let brute = (10..=1000).any(|q| {
                let v = q as f64 * x;
                (v - v.round()).abs() <= psi(q as f64)
            });
            assert_eq!(window_hit(a, b, 10.0, 1000.0, psi), brute, "x = {x}");
        }
        // exact rationals hit at their own denominator and its multiples
        assert!(window_hit(3, 7, 10.0, 20.0, psi));
        assert!(!window_hit(3, 7, 22.0, 27.0, psi));
    }
}
