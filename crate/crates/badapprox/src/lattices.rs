//! Unimodular lattices in R^d: reduction, enumeration, minima, duals,
//! covolumes of sections and the irregularity statistics.

use nalgebra::DMatrix;
use num_integer::Integer;
use rand::RngCore;

use crate::core_theory::{unit_ball_volume, NormKind, NormSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::unit;
use crate::tolerances::{ENUMERATION_BUDGET, UNIMODULAR};

/// Largest dimension the enumeration routines accept.
pub const MAX_DIM: usize = 8;

/// A norm on R^d: either one norm, or the mixed norm ‖(p,q)‖ = ‖p‖_μ ∨ ‖q‖_ν
/// with p the first m coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum LatticeNorm {
    Plain(NormSpec),
    Mixed { mu: NormSpec, nv: NormSpec },
}

impl LatticeNorm {
    pub fn sup(d: usize) -> Self {
        LatticeNorm::Plain(NormSpec::sup(d))
    }

    pub fn euclid(d: usize) -> Self {
        LatticeNorm::Plain(NormSpec::new(NormKind::L2, d).expect("positive dimension"))
    }

    pub fn mixed(mu: NormSpec, nv: NormSpec) -> Self {
        LatticeNorm::Mixed { mu, nv }
    }

    pub fn dim(&self) -> usize {
        match self {
            LatticeNorm::Plain(s) => s.dim(),
            LatticeNorm::Mixed { mu, nv } => mu.dim() + nv.dim(),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            LatticeNorm::Plain(s) => s.norm(x),
            LatticeNorm::Mixed { mu, nv } => {
                let m = mu.dim();
                mu.norm(&x[..m]).max(nv.norm(&x[m..]))
            }
        }
    }

    /// c with ‖x‖₂ ≤ c‖x‖.
    pub fn euclid_bound(&self) -> f64 {
        match self {
            LatticeNorm::Plain(s) => s.euclid_bound(),
            LatticeNorm::Mixed { mu, nv } => mu.euclid_bound().hypot(nv.euclid_bound()),
        }
    }

    /// Lebesgue volume of the unit ball.
    pub fn volume(&self) -> Result<f64> {
        match self {
            LatticeNorm::Plain(s) => unit_ball_volume(s),
            LatticeNorm::Mixed { mu, nv } => Ok(unit_ball_volume(mu)? * unit_ball_volume(nv)?),
        }
    }
}

/// A lattice in R^d given by a basis (columns). `Lattice` values built by
/// [`Lattice::new`] are unimodular.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    basis: DMatrix<f64>,
}

impl Lattice {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        if !basis.is_square() || basis.nrows() == 0 {
            return invalid("basis must be a nonempty square matrix");
        }
        let det = basis.determinant();
        if (det.abs() - 1.0).abs() > UNIMODULAR {
            return invalid(format!("basis determinant is {det}, expected ±1"));
        }
        Ok(Lattice { basis })
    }

    /// Z^d.
    pub fn standard(d: usize) -> Self {
        Lattice { basis: DMatrix::identity(d, d) }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Lattice::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(entries)))
    }

    /// A random unimodular lattice: Gaussian-like basis rescaled to det 1.
    pub fn random(d: usize, rng: &mut impl RngCore) -> Self {
        loop {
            let b = DMatrix::from_fn(d, d, |_, _| {
                // sum of uniforms, roughly normal
                (0..4).map(|_| unit(rng)).sum::<f64>() - 2.0
            });
            let det = b.determinant();
            if det.abs() > 1e-3 {
                let mut b = b * det.abs().powf(-1.0 / d as f64);
                if det < 0.0 {
                    b.column_mut(0).neg_mut();
                }
                return Lattice { basis: b };
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn det(&self) -> f64 {
        self.basis.determinant()
    }

    /// Lebesgue covolume.
    pub fn covolume(&self) -> f64 {
        self.det().abs()
    }

    /// Basis B^{-T}.
    pub fn dual(&self) -> Lattice {
        let b = &self.basis;
        let inv = b.clone().try_inverse().expect("unimodular basis is invertible");
        // one Newton step X + X(I - BX)
        let resid = DMatrix::identity(b.nrows(), b.ncols()) - b * &inv;
        let inv = &inv + &inv * resid;
        Lattice { basis: inv.transpose() }
    }

    /// B·c.
    pub fn point(&self, coeffs: &[i64]) -> Vec<f64> {
        combine(&self.basis, coeffs)
    }

    /// The same lattice with an LLL-reduced basis.
    pub fn reduced(&self) -> Lattice {
        Lattice { basis: lll(&self.basis).0 }
    }

    /// g·Λ.
    pub fn transform(&self, g: &DMatrix<f64>) -> Result<Lattice> {
        Lattice::new(g * &self.basis)
    }
}

fn combine(basis: &DMatrix<f64>, coeffs: &[i64]) -> Vec<f64> {
    (0..basis.nrows())
        .map(|i| (0..basis.ncols()).map(|j| basis[(i, j)] * coeffs[j] as f64).sum())
        .collect()
}

fn dot_cols(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    a.column(i).dot(&b.column(j))
}

/// Gram–Schmidt: orthogonal vectors b*_i (columns) and coefficients μ_{ij}.
fn gram_schmidt(b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<f64>) {
    let k = b.ncols();
    let mut bs = b.clone();
    let mut mu = DMatrix::zeros(k, k);
    let mut norms = vec![0.0; k];
    for i in 0..k {
        for j in 0..i {
            let m = if norms[j] > 0.0 { dot_cols(b, i, &bs, j) / norms[j] } else { 0.0 };
            mu[(i, j)] = m;
            let col = bs.column(j).clone_owned();
            bs.column_mut(i).axpy(-m, &col, 1.0);
        }
        mu[(i, i)] = 1.0;
        norms[i] = bs.column(i).norm_squared();
    }
    (bs, mu, norms)
}

/// LLL reduction (δ = 0.99) of the columns of b; returns the reduced basis
/// and the integer transform U with reduced = b·U.
pub fn lll(b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = b.ncols();
    let mut b = b.clone();
    let mut u = DMatrix::<f64>::identity(k, k);
    if k < 2 {
        return (b, u);
    }
    let delta = 0.99;
    let mut i = 1;
    let mut guard = 0usize;
    while i < k {
        guard += 1;
        if guard > 100_000 {
            break;
        }
        for j in (0..i).rev() {
            let (_, mu, _) = gram_schmidt(&b);
            let q = mu[(i, j)].round();
            if q != 0.0 {
                let bj = b.column(j).clone_owned();
                b.column_mut(i).axpy(-q, &bj, 1.0);
                let uj = u.column(j).clone_owned();
                u.column_mut(i).axpy(-q, &uj, 1.0);
            }
        }
        let (_, mu, norms) = gram_schmidt(&b);
        let m = mu[(i, i - 1)];
        if norms[i] >= (delta - m * m) * norms[i - 1] {
            i += 1;
        } else {
            b.swap_columns(i, i - 1);
            u.swap_columns(i, i - 1);
            i = (i - 1).max(1);
        }
    }
    (b, u)
}

/// Depth-first enumeration of all nonzero integer combinations with
/// Euclidean length at most √r2. `visit` sees the coefficient vector and may
/// return a smaller r2.
fn enumerate<F>(b: &DMatrix<f64>, mut r2: f64, budget: u128, mut visit: F) -> Result<()>
where
    F: FnMut(&[i64]) -> Option<f64>,
{
    let k = b.ncols();
    let (_, mu, norms) = gram_schmidt(b);
    if norms.iter().any(|&x| x <= 0.0) {
        return invalid("basis vectors are dependent");
    }
    let mut c = vec![0i64; k];
    let mut partial = vec![0.0; k + 1];
    let mut nodes: u128 = 0;
    // level i state: centre and current offset
    fn centre(c: &[i64], mu: &DMatrix<f64>, i: usize) -> f64 {
        -(i + 1..c.len()).map(|j| c[j] as f64 * mu[(j, i)]).sum::<f64>()
    }
    let mut lo = vec![0i64; k];
    let mut hi = vec![0i64; k];
    let mut level = k;
    // descend into level k-1
    let setup = |lvl: usize, c: &mut [i64], partial: &[f64], r2: f64, lo: &mut [i64], hi: &mut [i64]| -> bool {
        let rem = r2 - partial[lvl + 1];
        if rem < 0.0 {
            return false;
        }
        let cen = centre(c, &mu, lvl);
        let w = (rem / norms[lvl]).sqrt();
        lo[lvl] = (cen - w).ceil() as i64;
        hi[lvl] = (cen + w).floor() as i64;
        c[lvl] = lo[lvl];
        lo[lvl] <= hi[lvl]
    };
    level -= 1;
    if !setup(level, &mut c, &partial, r2, &mut lo, &mut hi) {
        return Ok(());
    }
    loop {
        if c[level] > hi[level] {
            // exhausted this level
            level += 1;
            if level == k {
                return Ok(());
            }
            c[level] += 1;
            continue;
        }
        nodes += 1;
        if nodes > budget {
            return Err(Error::BudgetExceeded { required: nodes, limit: budget });
        }
        let cen = centre(&c, &mu, level);
        let d = c[level] as f64 - cen;
        partial[level] = partial[level + 1] + d * d * norms[level];
        if partial[level] > r2 {
            c[level] += 1;
            continue;
        }
        if level == 0 {
            if c.iter().any(|&x| x != 0) {
                if let Some(nr) = visit(&c) {
                    r2 = r2.min(nr);
                }
            }
            c[0] += 1;
            continue;
        }
        level -= 1;
        if !setup(level, &mut c, &partial, r2, &mut lo, &mut hi) {
            c[level] = hi[level] + 1;
        }
    }
}

/// Shortest nonzero vector of the lattice spanned by the columns of b, in
/// the given norm: (vector, length, coefficients w.r.t. b).
pub fn shortest_in_span(b: &DMatrix<f64>, norm: &LatticeNorm) -> Result<(Vec<f64>, f64, Vec<i64>)> {
    if b.ncols() == 0 {
        return invalid("empty basis");
    }
    if b.ncols() > MAX_DIM {
        return invalid(format!("dimension {} exceeds {MAX_DIM}", b.ncols()));
    }
    let (red, u) = lll(b);
    let c = norm.euclid_bound();
    let mut best = (Vec::new(), f64::INFINITY, Vec::new());
    for j in 0..red.ncols() {
        let v: Vec<f64> = red.column(j).iter().copied().collect();
        let l = norm.norm(&v);
        if l < best.1 {
            let mut e = vec![0i64; red.ncols()];
            e[j] = 1;
            best = (v, l, e);
        }
    }
    let r2 = (c * best.1).powi(2) * (1.0 + 1e-12);
    enumerate(&red, r2, ENUMERATION_BUDGET, |coef| {
        let v = combine(&red, coef);
        let l = norm.norm(&v);
        if l < best.1 * (1.0 - 1e-14) {
            best = (v, l, coef.to_vec());
            Some((c * l).powi(2) * (1.0 + 1e-12))
        } else {
            None
        }
    })?;
    let coeffs = mat_int_vec(&u, &best.2);
    Ok((best.0, best.1, coeffs))
}

fn mat_int_vec(u: &DMatrix<f64>, c: &[i64]) -> Vec<i64> {
    (0..u.nrows())
        .map(|i| (0..u.ncols()).map(|j| u[(i, j)] * c[j] as f64).sum::<f64>().round() as i64)
        .collect()
}

/// λ_1 and a minimiser.
pub fn shortest_vector(lat: &Lattice, norm: &LatticeNorm) -> Result<(Vec<f64>, f64)> {
    check_norm(lat, norm)?;
    let (v, l, _) = shortest_in_span(&lat.basis, norm)?;
    Ok((v, l))
}

fn check_norm(lat: &Lattice, norm: &LatticeNorm) -> Result<()> {
    if norm.dim() != lat.dim() {
        return invalid(format!("norm on R^{} used for a lattice in R^{}", norm.dim(), lat.dim()));
    }
    if lat.dim() > MAX_DIM {
        return invalid(format!("dimension {} exceeds {MAX_DIM}", lat.dim()));
    }
    Ok(())
}

/// All nonzero lattice vectors with ‖r‖ ≤ radius, as (coefficients, vector, norm).
pub fn vectors_within(lat: &Lattice, norm: &LatticeNorm, radius: f64) -> Result<Vec<(Vec<i64>, Vec<f64>, f64)>> {
    check_norm(lat, norm)?;
    let (red, u) = lll(&lat.basis);
    let r2 = (norm.euclid_bound() * radius).powi(2) * (1.0 + 1e-12);
    let mut out = Vec::new();
    enumerate(&red, r2, ENUMERATION_BUDGET, |coef| {
        let v = combine(&red, coef);
        let l = norm.norm(&v);
        if l <= radius {
            out.push((mat_int_vec(&u, coef), v, l));
        }
        None
    })?;
    Ok(out)
}

/// Successive minima λ_1 ≤ … ≤ λ_d.
pub fn successive_minima(lat: &Lattice, norm: &LatticeNorm) -> Result<Vec<f64>> {
    check_norm(lat, norm)?;
    let red = lat.reduced();
    let d = lat.dim();
    let radius = (0..d)
        .map(|j| norm.norm(&red.basis.column(j).iter().copied().collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let mut all = vectors_within(&red, norm, radius)?;
    all.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut chosen: Vec<Vec<f64>> = Vec::new();
    let mut minima = Vec::new();
    for (_, v, l) in all {
        if independent(&chosen, &v) {
            chosen.push(v);
            minima.push(l);
            if minima.len() == d {
                break;
            }
        }
    }
    Ok(minima)
}

fn independent(chosen: &[Vec<f64>], v: &[f64]) -> bool {
    let mut w = v.to_vec();
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    for c in chosen {
        let mut o = c.clone();
        for p in &ortho {
            let t = dot(&o, p) / dot(p, p);
            o.iter_mut().zip(p).for_each(|(a, b)| *a -= t * b);
        }
        ortho.push(o);
    }
    for p in &ortho {
        let t = dot(&w, p) / dot(p, p);
        w.iter_mut().zip(p).for_each(|(a, b)| *a -= t * b);
    }
    dot(&w, &w) > 1e-18 * dot(v, v).max(1e-300)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unimodular U with cᵀU = (g, 0, …, 0); columns 2..d span the integer kernel of c.
pub fn kernel_basis(c: &[i64]) -> Result<(i64, Vec<Vec<i64>>)> {
    let d = c.len();
    if c.iter().all(|&x| x == 0) {
        return invalid("coefficient vector must be nonzero");
    }
    let mut v: Vec<i128> = c.iter().map(|&x| x as i128).collect();
    let mut u: Vec<Vec<i128>> = (0..d).map(|i| (0..d).map(|j| (i == j) as i128).collect()).collect(); // columns
    for j in 1..d {
        let (a, b) = (v[0], v[j]);
        if b == 0 {
            continue;
        }
        let e = a.extended_gcd(&b);
        let (g, x, y) = (e.gcd, e.x, e.y);
        let (col0, colj) = (u[0].clone(), u[j].clone());
        u[0] = col0.iter().zip(&colj).map(|(p, q)| x * p + y * q).collect();
        u[j] = col0.iter().zip(&colj).map(|(p, q)| (-b / g) * p + (a / g) * q).collect();
        v[0] = g;
        v[j] = 0;
    }
    let mut g = v[0];
    if g < 0 {
        g = -g;
        u[0].iter_mut().for_each(|x| *x = -*x);
    }
    let to64 = |x: i128| i64::try_from(x).map_err(|_| Error::Precision("kernel basis overflows i64".into()));
    let cols = u[1..]
        .iter()
        .map(|col| col.iter().map(|&x| to64(x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok((to64(g)?, cols))
}

/// Basis (columns) of Λ* ∩ r^⊥ for r = B·c.
fn dual_perp_basis(lat: &Lattice, c: &[i64]) -> Result<DMatrix<f64>> {
    let d = lat.dim();
    let (_, cols) = kernel_basis(c)?;
    let dual = lat.dual();
    let mut s = DMatrix::zeros(d, d - 1);
    for (k, col) in cols.iter().enumerate() {
        let v = combine(&dual.basis, col);
        for i in 0..d {
            s[(i, k)] = v[i];
        }
    }
    // kernel coefficients can be large; reduce before any Gram computation
    Ok(lll(&s).0)
}

/// Irr(r) = ‖r‖ / λ_1(Λ* ∩ r^⊥)^{d−1} for r = B·c.
pub fn irregularity(lat: &Lattice, c: &[i64], norm: &LatticeNorm) -> Result<f64> {
    check_norm(lat, norm)?;
    if c.len() != lat.dim() {
        return invalid("coefficient vector has the wrong length");
    }
    let r = lat.point(c);
    let rn = norm.norm(&r);
    if c.iter().all(|&x| x == 0) {
        return invalid("r must be nonzero");
    }
    let d = lat.dim();
    if d == 1 {
        return Ok(rn);
    }
    let s = dual_perp_basis(lat, c)?;
    let (_, l, _) = shortest_in_span(&s, norm)?;
    Ok(rn / l.powi(d as i32 - 1))
}

/// Irr(Λ) = λ_1^{−(2d−1)}.
pub fn lattice_irregularity(lat: &Lattice, norm: &LatticeNorm) -> Result<f64> {
    let (_, l) = shortest_vector(lat, norm)?;
    Ok(l.powi(-(2 * lat.dim() as i32 - 1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorReport {
    pub coeffs: Vec<i64>,
    pub vector: Vec<f64>,
    pub norm: f64,
    pub primitive: bool,
    pub irr: f64,
}

pub fn vector_report(lat: &Lattice, c: &[i64], norm: &LatticeNorm) -> Result<VectorReport> {
    let irr = irregularity(lat, c, norm)?;
    let vector = lat.point(c);
    let g = c.iter().fold(0i64, |a, &b| a.gcd(&b));
    Ok(VectorReport { coeffs: c.to_vec(), norm: norm.norm(&vector), vector, primitive: g == 1, irr })
}

/// Irregularities of all nonzero lattice vectors with ‖r‖ ≤ q, computed once
/// per primitive direction: (Irr(r), ‖r‖) for primitive r up to sign.
pub fn irregularity_profile(lat: &Lattice, norm: &LatticeNorm, q: f64) -> Result<Vec<(f64, f64)>> {
    let all = vectors_within(lat, norm, q)?;
    let mut out = Vec::new();
    for (c, _, l) in all {
        let g = c.iter().fold(0i64, |a, &b| a.gcd(&b));
        if g != 1 {
            continue;
        }
        // one of ±c: first nonzero coefficient positive
        if *c.iter().find(|&&x| x != 0).unwrap() < 0 {
            continue;
        }
        out.push((irregularity(lat, &c, norm)?, l));
    }
    Ok(out)
}

/// #{r ∈ Λ : Irr(r) ≥ K, ‖r‖ ≤ Q} / Q^d for each K, from a profile.
pub fn epsilon_from_profile(profile: &[(f64, f64)], d: usize, ks: &[f64], q: f64) -> Vec<f64> {
    ks.iter()
        .map(|&k| {
            let mut count = 0u64;
            for &(irr, l) in profile {
                // multiples j·r with j·Irr(r) ≥ K and j‖r‖ ≤ Q, both signs
                let top = (q / l * (1.0 + 1e-12)).floor() as u64;
                let from = ((k / irr) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
                if top >= from {
                    count += 2 * (top - from + 1);
                }
            }
            count as f64 / q.powi(d as i32)
        })
        .collect()
}

/// ε_K(Λ, Q) for each K in `ks`. Requires Q ≥ K·Irr(Λ) for every K.
pub fn epsilon_k_scan(lat: &Lattice, norm: &LatticeNorm, ks: &[f64], q: f64) -> Result<Vec<f64>> {
    let irr = lattice_irregularity(lat, norm)?;
    if let Some(&k) = ks.iter().find(|&&k| !(k >= 1.0) || q < k * irr) {
        return invalid(format!("need K ≥ 1 and Q ≥ K·Irr(Λ): K={k}, Q={q}, Irr(Λ)={irr}"));
    }
    let profile = irregularity_profile(lat, norm, q)?;
    Ok(epsilon_from_profile(&profile, lat.dim(), ks, q))
}

/// Covolumes of Λ ∩ Rr and Λ* ∩ r^⊥, in Lebesgue measure and in the
/// normalisation where the Euclidean unit ball has measure 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionCovolumes {
    pub line_lebesgue: f64,
    pub perp_lebesgue: f64,
    pub line_unit_ball: f64,
    pub perp_unit_ball: f64,
}

pub fn section_covolumes(lat: &Lattice, c: &[i64]) -> Result<SectionCovolumes> {
    let g = c.iter().fold(0i64, |a, &b| a.gcd(&b));
    if g == 0 {
        return invalid("r must be nonzero");
    }
    let prim: Vec<i64> = c.iter().map(|&x| x / g).collect();
    let r = lat.point(&prim);
    let line = dot(&r, &r).sqrt();
    let d = lat.dim();
    let perp = if d == 1 {
        1.0
    } else {
        let s = dual_perp_basis(lat, &prim)?;
        (s.transpose() * &s).determinant().abs().sqrt()
    };
    let v = |k: usize| unit_ball_volume(&NormSpec::new(NormKind::L2, k).expect("k ≥ 1")).unwrap_or(1.0);
    let perp_vol = if d > 1 { v(d - 1) } else { 1.0 };
    Ok(SectionCovolumes {
        line_lebesgue: line,
        perp_lebesgue: perp,
        line_unit_ball: line / v(1),
        perp_unit_ball: perp / perp_vol,
    })
}

/// Upper bound ½Σλ_i for the codiameter (covering radius).
pub fn codiameter_bound(lat: &Lattice, norm: &LatticeNorm) -> Result<f64> {
    Ok(0.5 * successive_minima(lat, norm)?.iter().sum::<f64>())
}
