//! Target sets Δ_ψ(p,q) = {A ∈ K : ‖Aq − p‖_μ ≤ ψ(‖q‖_ν)} inside the unit
//! cube K = [0,1]^{m×n}: exact and sampled measures, hit lists, thickness.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::core_theory::{ApproxFunction, NormKind, NormSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::{count_hits, proportion, shard_rng, unit};
use crate::tolerances::ENUMERATION_BUDGET;

/// Largest number of nonzero entries a row density accepts.
pub const MAX_ROW_TERMS: usize = 20;

/// One target set Δ(p, q) with a fixed radius.
#[derive(Debug, Clone, PartialEq)]
pub struct Slab {
    pub p: Vec<i64>,
    pub q: Vec<i64>,
    pub radius: f64,
}

impl Slab {
    pub fn new(p: Vec<i64>, q: Vec<i64>, radius: f64) -> Result<Self> {
        if q.iter().all(|&x| x == 0) {
            return invalid("q must be nonzero");
        }
        if !(radius.is_finite() && radius > 0.0) {
            return invalid(format!("radius must be positive, got {radius}"));
        }
        if p.is_empty() {
            return invalid("p must have at least one coordinate");
        }
        Ok(Slab { p, q, radius })
    }

    /// The slab of ψ at (p, q), with radius ψ(‖q‖_ν).
    pub fn of_psi(p: Vec<i64>, q: Vec<i64>, psi: &ApproxFunction, nv: &NormSpec) -> Result<Self> {
        let r = psi.psi(nv.norm_i64(&q));
        Slab::new(p, q, r)
    }

    pub fn m(&self) -> usize {
        self.p.len()
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// Membership of a matrix A (m×n).
    pub fn contains(&self, a: &DMatrix<f64>, mu: &NormSpec) -> bool {
        let r = residual(a, &self.p, &self.q);
        mu.norm(&r) <= self.radius
    }
}

/// Aq − p.
pub fn residual(a: &DMatrix<f64>, p: &[i64], q: &[i64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * q[j] as f64).sum::<f64>() - p[i] as f64)
        .collect()
}

/// Distribution of Σ_j q_j t_j with t_j independent uniform on [0,1].
///
/// The CDF is (1/(k!·Π|q_j|)) Σ_s c_s (y − s)_+^k over the signed subset
/// sums s of the nonzero |q_j|, shifted by the sum of the negative q_j.
/// Piece coefficients are computed exactly and stored as floats in the
/// variable x = y − (left breakpoint).
#[derive(Debug, Clone)]
pub struct RowDensity {
    q: Vec<i64>,
    k: usize,
    shift: i64,
    weights: BTreeMap<i64, BigInt>,
    breaks: Vec<i64>,
    pieces: Vec<Vec<f64>>,
}

fn binomials(k: usize) -> Vec<BigInt> {
    let mut row = vec![BigInt::one()];
    for i in 0..k {
        let next = row.last().unwrap() * BigInt::from(k - i) / BigInt::from(i + 1);
        row.push(next);
    }
    row
}

impl RowDensity {
    pub fn new(q: &[i64]) -> Result<Self> {
        let nz: Vec<i64> = q.iter().copied().filter(|&x| x != 0).collect();
        if nz.is_empty() {
            return invalid("row density needs a nonzero q");
        }
        if nz.len() > MAX_ROW_TERMS {
            return invalid(format!("at most {MAX_ROW_TERMS} nonzero entries, got {}", nz.len()));
        }
        let k = nz.len();
        let shift: i64 = nz.iter().filter(|&&x| x < 0).sum();
        let mut weights: BTreeMap<i64, BigInt> = BTreeMap::new();
        weights.insert(0, BigInt::one());
        for &x in &nz {
            let a = x.abs();
            let mut next = weights.clone();
            for (s, c) in &weights {
                *next.entry(s + a).or_insert_with(BigInt::zero) -= c;
            }
            next.retain(|_, c| !c.is_zero());
            weights = next;
        }
        let denom: BigInt = nz.iter().fold(BigInt::one(), |acc, &x| acc * BigInt::from(x.abs()))
            * (1..=k).fold(BigInt::one(), |acc, i| acc * BigInt::from(i));
        let binom = binomials(k);
        // global polynomial Σ_{s ≤ b} c_s (y − s)^k, coefficients of y^j
        let mut global = vec![BigInt::zero(); k + 1];
        let mut breaks = Vec::with_capacity(weights.len());
        let mut pieces = Vec::with_capacity(weights.len());
        let total: i64 = nz.iter().map(|x| x.abs()).sum();
        for (&s, c) in &weights {
            let ms = BigInt::from(-s);
            let mut pw = BigInt::one(); // (−s)^{k−j}, built from j = k down
            for j in (0..=k).rev() {
                global[j] += c * &binom[j] * &pw;
                pw *= &ms;
            }
            if s >= total {
                break;
            }
            // Taylor shift to x = y − s
            let local = taylor_shift(&global, s);
            let coeffs = local
                .iter()
                .map(|v| BigRational::new(v.clone(), denom.clone()).to_f64().unwrap_or(0.0))
                .collect();
            breaks.push(s + shift);
            pieces.push(coeffs);
        }
        Ok(RowDensity { q: q.to_vec(), k, shift, weights, breaks, pieces })
    }

    pub fn q(&self) -> &[i64] {
        &self.q
    }

    /// Number of nonzero entries; each piece has degree k (CDF) or k−1 (density).
    pub fn terms(&self) -> usize {
        self.k
    }

    /// Support [Σ min(q_j,0), Σ max(q_j,0)].
    pub fn support(&self) -> (i64, i64) {
        let hi: i64 = self.q.iter().filter(|&&x| x > 0).sum();
        (self.shift, hi)
    }

    pub fn breakpoints(&self) -> &[i64] {
        &self.breaks
    }

    fn piece(&self, y: f64) -> Option<(usize, f64)> {
        let (lo, hi) = self.support();
        if y <= lo as f64 || y >= hi as f64 {
            return None;
        }
        let i = self.breaks.partition_point(|&b| (b as f64) <= y).saturating_sub(1);
        Some((i, y - self.breaks[i] as f64))
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let (lo, _) = self.support();
        match self.piece(y) {
            None => {
                if y <= lo as f64 {
                    0.0
                } else {
                    1.0
                }
            }
            Some((i, x)) => {
                let v = self.pieces[i].iter().rev().fold(0.0, |acc, c| acc * x + c);
                v.clamp(0.0, 1.0)
            }
        }
    }

    pub fn pdf(&self, y: f64) -> f64 {
        match self.piece(y) {
            None => 0.0,
            Some((i, x)) => {
                let c = &self.pieces[i];
                let mut acc = 0.0;
                for j in (1..c.len()).rev() {
                    acc = acc * x + j as f64 * c[j];
                }
                acc.max(0.0)
            }
        }
    }

    /// P(|S − center| ≤ r).
    pub fn window(&self, center: f64, r: f64) -> f64 {
        (self.cdf(center + r) - self.cdf(center - r)).max(0.0)
    }

    /// Total mass, computed in exact rational arithmetic.
    pub fn total_mass_exact(&self) -> BigRational {
        let (lo, hi) = self.support();
        let top = BigInt::from(hi - lo);
        let mut acc = BigInt::zero();
        for (&s, c) in &self.weights {
            let base = &top - BigInt::from(s);
            if base.is_positive() {
                acc += c * num_traits::pow(base, self.k);
            }
        }
        let denom: BigInt = self.q.iter().filter(|&&x| x != 0).fold(BigInt::one(), |a, &x| a * BigInt::from(x.abs()))
            * (1..=self.k).fold(BigInt::one(), |a, i| a * BigInt::from(i));
        BigRational::new(acc, denom)
    }
}

/// Coefficients of p(x + s) given those of p(y).
fn taylor_shift(coeffs: &[BigInt], s: i64) -> Vec<BigInt> {
    let mut c = coeffs.to_vec();
    let s = BigInt::from(s);
    let n = c.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            let t = &c[j + 1] * &s;
            c[j] += t;
        }
    }
    c
}

/// λ_K(Δ) for a sup-norm μ, as a product of row factors.
pub fn slab_measure_exact(slab: &Slab, mu: &NormSpec) -> Result<f64> {
    if mu.kind() != NormKind::Sup {
        return Err(Error::ExactMeasureRequiresSup);
    }
    if mu.dim() != slab.m() {
        return invalid("mu dimension differs from the length of p");
    }
    let rho = RowDensity::new(&slab.q)?;
    let r = slab.radius / mu.scale();
    Ok(slab.p.iter().map(|&p| rho.window(p as f64, r)).product())
}

/// Monte Carlo estimate of λ_K(Δ) for any μ, with its standard error.
pub fn slab_measure_mc(slab: &Slab, mu: &NormSpec, samples: u64, seed: u64) -> Result<(f64, f64)> {
    if samples < 1000 {
        return invalid(format!("need at least 1000 samples, got {samples}"));
    }
    if mu.dim() != slab.m() {
        return invalid("mu dimension differs from the length of p");
    }
    let (m, n) = (slab.m(), slab.n());
    let hits = count_hits(samples, seed, |rng| {
        let mut r = vec![0.0; m];
        for (i, ri) in r.iter_mut().enumerate() {
            let s: f64 = (0..n).map(|j| unit(rng) * slab.q[j] as f64).sum();
            *ri = s - slab.p[i] as f64;
        }
        mu.norm(&r) <= slab.radius
    });
    Ok(proportion(hits, samples))
}

/// Integer vectors q with Q1 ≤ ‖q‖_ν ≤ Q2, one of each ±q pair (first
/// nonzero coordinate positive), in lexicographic order, with their norms.
pub fn q_shell(nv: &NormSpec, q1: f64, q2: f64) -> Result<Vec<(Vec<i64>, f64)>> {
    if !(q1 >= 0.0 && q2 >= q1 && q2.is_finite()) {
        return invalid(format!("bad window Q1={q1}, Q2={q2}"));
    }
    let n = nv.dim();
    let half = (q2 / nv.scale()).floor() as i64;
    let side = 2 * half as u128 + 1;
    let required = side.checked_pow(n as u32).unwrap_or(u128::MAX);
    if required > ENUMERATION_BUDGET {
        return Err(Error::BudgetExceeded { required, limit: ENUMERATION_BUDGET });
    }
    let mut out = Vec::new();
    let mut q = vec![-half; n];
    loop {
        if let Some(&first) = q.iter().find(|&&x| x != 0) {
            if first > 0 {
                let norm = nv.norm_i64(&q);
                if norm >= q1 && norm <= q2 {
                    out.push((q.clone(), norm));
                }
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if q[i] < half {
                q[i] += 1;
                break;
            }
            q[i] = -half;
        }
    }
}

/// Nearest integer with ties broken downward.
#[inline]
pub fn round_half_down(x: f64) -> f64 {
    (x - 0.5).ceil()
}

/// One pair (p, q) with A ∈ Δ_ψ(p, q).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hit {
    pub p: Vec<i64>,
    pub q: Vec<i64>,
}

/// All (p, q) with Q1 ≤ ‖q‖_ν ≤ Q2 and ‖Aq − p‖_μ ≤ ψ(‖q‖_ν), one
/// representative per ± pair. p is the nearest integer vector to Aq.
pub fn hit_list(
    a: &DMatrix<f64>,
    psi: &ApproxFunction,
    q1: f64,
    q2: f64,
    mu: &NormSpec,
    nv: &NormSpec,
) -> Result<Vec<Hit>> {
    check_shapes(a, mu, nv)?;
    let shell = q_shell(nv, q1, q2)?;
    let mut out = Vec::new();
    for (q, norm) in shell {
        let r = psi.psi(norm);
        if r <= 0.0 {
            continue;
        }
        hits_for_q(a, &q, r, mu, &mut out);
    }
    Ok(out)
}

fn check_shapes(a: &DMatrix<f64>, mu: &NormSpec, nv: &NormSpec) -> Result<()> {
    if a.nrows() != mu.dim() || a.ncols() != nv.dim() {
        return invalid(format!(
            "matrix is {}x{}, norms expect {}x{}",
            a.nrows(),
            a.ncols(),
            mu.dim(),
            nv.dim()
        ));
    }
    Ok(())
}

fn hits_for_q(a: &DMatrix<f64>, q: &[i64], r: f64, mu: &NormSpec, out: &mut Vec<Hit>) {
    let m = a.nrows();
    let aq = residual(a, &vec![0; m], q);
    let p: Vec<i64> = aq.iter().map(|&v| round_half_down(v) as i64).collect();
    let res: Vec<f64> = aq.iter().zip(&p).map(|(v, &pi)| v - pi as f64).collect();
    if mu.norm(&res) <= r {
        out.push(Hit { p, q: q.to_vec() });
    }
}

/// Upper bound on the ν→μ operator norm of E.
pub fn operator_norm_bound(e: &DMatrix<f64>, mu: &NormSpec, nv: &NormSpec) -> f64 {
    let worst = (0..e.nrows())
        .map(|i| {
            let row: Vec<f64> = e.row(i).iter().copied().collect();
            nv.dual_norm(&row)
        })
        .fold(0.0, f64::max);
    mu.sup_bound() * worst
}

/// μ rescaled so that every A ∈ K has ν→μ operator norm at most 1/2.
pub fn cube_normalized(mu: &NormSpec, nv: &NormSpec) -> Result<NormSpec> {
    let ones = DMatrix::from_element(mu.dim(), nv.dim(), 1.0);
    let bound = operator_norm_bound(&ones, mu, nv);
    mu.scaled(1.0 / (2.0 * bound))
}

/// Thickness test with the default perturbation size and 10^4 samples.
pub fn thickness_check(slab: &Slab, psi2_radius: f64, mu: &NormSpec, nv: &NormSpec) -> bool {
    thickness_check_with(slab, psi2_radius, mu, nv, 1.0, 10_000, 0x5eed)
}

/// Samples A ∈ Δ_{ψ1}(p,q) and perturbations B = A + E with
/// ‖E‖ ≤ inflation·ψ2/‖q‖_ν, and checks B ∈ Δ_{ψ1+ψ2}(p,q). Half the
/// perturbations are random, half are the rank-one worst case. Returns
/// false on the first counterexample.
pub fn thickness_check_with(
    slab: &Slab,
    psi2_radius: f64,
    mu: &NormSpec,
    nv: &NormSpec,
    inflation: f64,
    samples: u64,
    seed: u64,
) -> bool {
    let (m, n) = (slab.m(), slab.n());
    let psi1 = slab.radius;
    let qf: Vec<f64> = slab.q.iter().map(|&x| x as f64).collect();
    let qn = nv.norm(&qf);
    let q2: f64 = qf.iter().map(|x| x * x).sum();
    let s = nv.dual_witness(&qf);
    let budget = inflation * psi2_radius / qn;
    let limit = (psi1 + psi2_radius) * (1.0 + 1e-12) + 1e-15;
    let mut rng = shard_rng(seed, 0);
    for it in 0..samples {
        // a point of the slab: random A0, then push its residual to e'
        let a0 = DMatrix::from_fn(m, n, |_, _| unit(&mut rng));
        let e0 = residual(&a0, &slab.p, &slab.q);
        let mut target: Vec<f64> = (0..m).map(|_| (2.0 * unit(&mut rng) - 1.0) * psi1).collect();
        let tn = mu.norm(&target);
        if tn > 0.0 && (tn > psi1 || it % 2 == 0) {
            for t in target.iter_mut() {
                *t *= psi1 / tn;
            }
        }
        let a = DMatrix::from_fn(m, n, |i, j| a0[(i, j)] + (target[i] - e0[i]) * qf[j] / q2);
        let e = if it % 2 == 0 {
            let raw = DMatrix::from_fn(m, n, |_, _| 2.0 * unit(&mut rng) - 1.0);
            let u = operator_norm_bound(&raw, mu, nv);
            if u == 0.0 {
                continue;
            }
            raw * (budget / u)
        } else {
            let tn = mu.norm(&target);
            let dir: Vec<f64> = if tn > 0.0 {
                target.iter().map(|t| t / tn).collect()
            } else {
                let mut d = vec![0.0; m];
                d[0] = 1.0 / mu.norm(&{
                    let mut e = vec![0.0; m];
                    e[0] = 1.0;
                    e
                });
                d
            };
            DMatrix::from_fn(m, n, |i, j| dir[i] * s[j] * budget)
        };
        let b = a + e;
        if mu.norm(&residual(&b, &slab.p, &slab.q)) > limit {
            return false;
        }
    }
    true
}
