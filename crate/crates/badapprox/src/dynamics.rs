//! The dictionary between approximation and the flow g_t on unimodular
//! lattices: u_A, g_t, Δ, r_ψ, the block-time lattices Λ_ω and a sampled
//! check of the Dani correspondence.

use nalgebra::DMatrix;

use crate::core_theory::{ApproxFunction, Dimensions, NormSpec};
use crate::error::{invalid, Error, Result};
use crate::fractal::{CodingScheme, Word};
use crate::geometry::hit_list;
use crate::lattices::{lll, shortest_vector, Lattice, LatticeNorm};
use crate::tolerances::BISECTION;

/// u_A = [I_m −A; 0 I_n].
pub fn make_u(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let mut u = DMatrix::identity(m + n, m + n);
    for i in 0..m {
        for j in 0..n {
            u[(i, m + j)] = -a[(i, j)];
        }
    }
    u
}

/// g_t = diag(e^{t/m} I_m, e^{−t/n} I_n).
pub fn make_g(t: f64, dims: Dimensions) -> DMatrix<f64> {
    let (m, n) = (dims.m, dims.n);
    let mut g = DMatrix::zeros(m + n, m + n);
    for i in 0..m {
        g[(i, i)] = (t / m as f64).exp();
    }
    for j in 0..n {
        g[(m + j, m + j)] = (-t / n as f64).exp();
    }
    g
}

/// Δ(Λ) = −log λ_1(Λ).
pub fn delta_fn(lat: &Lattice, norm: &LatticeNorm) -> Result<f64> {
    let (_, l) = shortest_vector(lat, norm)?;
    Ok(-l.ln())
}

/// g_t u_A Z^d with a reduced basis.
pub fn flow_lattice(a: &DMatrix<f64>, t: f64) -> Result<Lattice> {
    let dims = Dimensions::new(a.nrows(), a.ncols())?;
    let b = make_g(t, dims) * make_u(a);
    Lattice::new(lll(&b).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowPoint {
    pub t: f64,
    pub a: DMatrix<f64>,
    pub lattice: Lattice,
    pub delta: f64,
}

pub fn flow_point(a: &DMatrix<f64>, t: f64, mu: &NormSpec, nv: &NormSpec) -> Result<FlowPoint> {
    if a.nrows() != mu.dim() || a.ncols() != nv.dim() {
        return invalid("matrix shape does not match the norms");
    }
    let lattice = flow_lattice(a, t)?;
    let delta = delta_fn(&lattice, &LatticeNorm::mixed(mu.clone(), nv.clone()))?;
    Ok(FlowPoint { t, a: a.clone(), lattice, delta })
}

// h(r) = ln φ(e^{t/n − r})/m + r·d/m; zero exactly at r_ψ(t), nondecreasing in r.
fn h(psi: &ApproxFunction, t: f64, r: f64) -> f64 {
    let dims = psi.dims();
    let (m, n, d) = (dims.m as f64, dims.n as f64, dims.d() as f64);
    psi.phi_log(t / n - r).ln() / m + r * d / m
}

/// Start t₀ of the domain of r_ψ: the least t ≥ 0 at which the defining
/// equation has a root with both sides at most 1.
pub fn r_psi_domain(psi: &ApproxFunction) -> Result<f64> {
    let dims = psi.dims();
    let (m, n) = (dims.m as f64, dims.n as f64);
    if psi.m_psi() <= 0.0 {
        return Err(Error::Domain("psi vanishes".into()));
    }
    // root ≤ t/n needs h(t/n) ≥ 0; root ≥ −t/m needs h(−t/m) ≤ 0. Both monotone in t.
    let ok = |t: f64| h(psi, t, t / n) >= 0.0 && h(psi, t, -t / m) <= 0.0;
    if ok(0.0) {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Domain("no solution of the r_psi equation for t ≤ 1e6".into()));
        }
    }
    let mut lo = 0.0;
    while hi - lo > BISECTION * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// r_ψ(t): the root of ψ(e^{t/n − r}) = e^{−t/m − r}.
pub fn r_psi_solve(psi: &ApproxFunction, t: f64) -> Result<f64> {
    let dims = psi.dims();
    let (m, n) = (dims.m as f64, dims.n as f64);
    if !t.is_finite() {
        return invalid("t must be finite");
    }
    let t0 = r_psi_domain(psi)?;
    if t < t0 - BISECTION * t0.max(1.0) {
        return Err(Error::Domain(format!("t={t} lies below the domain start t0={t0}")));
    }
    let (mut lo, mut hi) = (-t / m, t / n);
    if h(psi, t, lo) > 0.0 {
        lo = hi.min(lo);
    }
    while hi - lo > BISECTION * 1e-3 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(psi, t, mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Residual of the r_ψ equation in log form: ln ψ(e^{t/n−r}) + t/m + r.
pub fn r_psi_residual(psi: &ApproxFunction, t: f64, r: f64) -> f64 {
    h(psi, t, r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaniRow {
    pub t: f64,
    pub r: f64,
    pub delta: f64,
    pub excursion: bool,
    /// Scale band (Q_prev, Q_t] with Q_t = e^{t/n − r_ψ(t)}.
    pub band: (f64, f64),
    pub hit: bool,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaniReport {
    pub rows: Vec<DaniRow>,
    pub agreement: f64,
    pub horizon: f64,
}

/// For each t: does Δ(g_t u_A Z^d) ≥ r_ψ(t) agree with the existence of a
/// ψ-approximation whose denominator lies in the band ending at Q_t?
pub fn dani_check(
    a: &DMatrix<f64>,
    psi: &ApproxFunction,
    t_grid: &[f64],
    mu: &NormSpec,
    nv: &NormSpec,
) -> Result<DaniReport> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) {
        return invalid("t grid must be finite and nonempty");
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("t grid must be increasing");
    }
    let n = a.ncols() as f64;
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut q_prev = 0.0f64;
    for &t in t_grid {
        let r = r_psi_solve(psi, t)?;
        let fp = flow_point(a, t, mu, nv)?;
        let excursion = fp.delta >= r;
        let q_t = (t / n - r).exp();
        let lo = q_prev.max(1.0);
        let hit = if q_t >= lo {
            // open at the lower end
            hit_list(a, psi, lo, q_t, mu, nv)?
                .iter()
                .any(|h| nv.norm_i64(&h.q) > q_prev)
        } else {
            false
        };
        rows.push(DaniRow { t, r, delta: fp.delta, excursion, band: (q_prev, q_t), hit, agree: excursion == hit });
        q_prev = q_prev.max(q_t);
    }
    let agreement = rows.iter().filter(|r| r.agree).count() as f64 / rows.len() as f64;
    let horizon = *t_grid.last().unwrap();
    Ok(DaniReport { rows, agreement, horizon })
}

/// Λ_ω = g_{δ log N^k} u_{π(ω)} Z^d, built from the integer lattice
/// {(E, q) : E ≡ −Cq mod N^k} with C = N^k π(ω), scaled by N^{−km/d}.
pub fn cylinder_lattice(scheme: &CodingScheme, word: &Word) -> Result<Lattice> {
    let dims = scheme.dims();
    let (m, n, d) = (dims.m, dims.n, dims.d());
    if word.len() > scheme.depth() {
        return invalid(format!("word length {} exceeds schedule depth {}", word.len(), scheme.depth()));
    }
    let bits = scheme.log2_nk(word.len());
    if bits > 52 {
        return Err(Error::Precision(format!("N^k = 2^{bits} exceeds exact f64 range")));
    }
    let c = scheme.offset(word)?;
    let nk = (bits as f64).exp2();
    let mut b = DMatrix::zeros(d, d);
    for i in 0..m {
        b[(i, i)] = nk;
    }
    for j in 0..n {
        for i in 0..m {
            b[(i, m + j)] = -(c[i * n + j] as f64);
        }
        b[(m + j, m + j)] = 1.0;
    }
    let red = lll(&b).0;
    let s = (-(bits as f64) * m as f64 / d as f64).exp2();
    Lattice::new(red * s)
}
