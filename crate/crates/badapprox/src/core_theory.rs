//! Ambient dimensions, norms, the constants η and θ, approximation and
//! dimension functions, the window integral F_ψ, the exponent L_{f,ψ} and
//! the Hausdorff-measure trichotomy.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::tolerances::{ANALYTIC_TIE, NUMERIC_TIE_BARS};

/// The shape (m, n) of the matrices under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dimensions {
    pub m: usize,
    pub n: usize,
}

impl Dimensions {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid(format!("dimensions must be positive, got m={m}, n={n}"));
        }
        Ok(Dimensions { m, n })
    }

    /// d = m + n.
    pub fn d(&self) -> usize {
        self.m + self.n
    }

    /// D = m·n, the dimension of the matrix space.
    pub fn big_d(&self) -> usize {
        self.m * self.n
    }

    /// δ = D/d.
    pub fn delta(&self) -> f64 {
        self.big_d() as f64 / self.d() as f64
    }

    /// α = m/d.
    pub fn alpha(&self) -> f64 {
        self.m as f64 / self.d() as f64
    }
}

/// Which norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    Sup,
    L1,
    L2,
    Lp(f64),
}

impl NormKind {
    /// The exponent p, with sup as infinity.
    pub fn exponent(&self) -> f64 {
        match *self {
            NormKind::Sup => f64::INFINITY,
            NormKind::L1 => 1.0,
            NormKind::L2 => 2.0,
            NormKind::Lp(p) => p,
        }
    }

    /// The dual norm kind (Hölder conjugate).
    pub fn dual(&self) -> NormKind {
        match *self {
            NormKind::Sup => NormKind::L1,
            NormKind::L1 => NormKind::Sup,
            NormKind::L2 => NormKind::L2,
            NormKind::Lp(p) if p == 1.0 => NormKind::Sup,
            NormKind::Lp(p) => NormKind::Lp(p / (p - 1.0)),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::Sup => write!(f, "sup"),
            NormKind::L1 => write!(f, "l1"),
            NormKind::L2 => write!(f, "l2"),
            NormKind::Lp(p) => write!(f, "lp:{p}"),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    /// Accepts `sup`, `l1`, `l2` and `lp:<p>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sup" | "max" | "linf" => Ok(NormKind::Sup),
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            other => {
                let p = other
                    .strip_prefix("lp:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown norm '{s}'")))?;
                if p.is_finite() && p >= 1.0 {
                    Ok(NormKind::Lp(p))
                } else {
                    invalid(format!("lp exponent must be finite and >= 1, got {p}"))
                }
            }
        }
    }
}

/// A norm on R^dim, optionally multiplied by a positive scale factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSpec {
    kind: NormKind,
    dim: usize,
    scale: f64,
}

impl NormSpec {
    pub fn new(kind: NormKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("norm dimension must be positive");
        }
        if let NormKind::Lp(p) = kind {
            if !(p.is_finite() && p >= 1.0) {
                return Err(Error::NormVolumeUnavailable(format!("lp with p={p}")));
            }
        }
        Ok(NormSpec { kind, dim, scale: 1.0 })
    }

    pub fn sup(dim: usize) -> Self {
        NormSpec { kind: NormKind::Sup, dim: dim.max(1), scale: 1.0 }
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// The same norm multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return invalid(format!("norm scale must be positive, got {c}"));
        }
        Ok(NormSpec { scale: self.scale * c, ..*self })
    }

    /// Norm of the unscaled kind.
    fn raw(kind: NormKind, x: &[f64]) -> f64 {
        match kind {
            NormKind::Sup => x.iter().fold(0.0, |a, v| a.max(v.abs())),
            NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
            NormKind::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            NormKind::Lp(p) => x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.scale * Self::raw(self.kind, x)
    }

    /// Norm of an integer vector.
    pub fn norm_i64(&self, x: &[i64]) -> f64 {
        let v: Vec<f64> = x.iter().map(|&a| a as f64).collect();
        self.norm(&v)
    }

    /// Dual norm: sup over ‖y‖ ≤ 1 of x·y.
    pub fn dual_norm(&self, x: &[f64]) -> f64 {
        Self::raw(self.kind.dual(), x) / self.scale
    }

    /// A vector s with s·x = ‖x‖ and dual norm of s equal to 1.
    pub fn dual_witness(&self, x: &[f64]) -> Vec<f64> {
        let nx = self.norm(x);
        let mut s = vec![0.0; x.len()];
        if nx == 0.0 {
            return s;
        }
        match self.kind {
            NormKind::Sup => {
                let (i, _) = x
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, v)| if v.abs() > b.1 { (i, v.abs()) } else { b });
                s[i] = x[i].signum() * self.scale;
            }
            NormKind::L1 => {
                for (si, xi) in s.iter_mut().zip(x) {
                    *si = xi.signum() * self.scale;
                }
            }
            _ => {
                let p = self.kind.exponent();
                let raw = nx / self.scale;
                for (si, xi) in s.iter_mut().zip(x) {
                    *si = xi.signum() * (xi.abs() / raw).powf(p - 1.0) * self.scale;
                }
            }
        }
        s
    }

    /// A constant c with ‖x‖₂ ≤ c·‖x‖ for all x.
    pub fn euclid_bound(&self) -> f64 {
        let p = self.kind.exponent();
        let c = if p <= 2.0 { 1.0 } else { (self.dim as f64).powf(0.5 - 1.0 / p) };
        c / self.scale
    }

    /// A constant c with ‖x‖ ≤ c·‖x‖_∞ for all x.
    pub fn sup_bound(&self) -> f64 {
        let p = self.kind.exponent();
        let c = if p.is_infinite() { 1.0 } else { (self.dim as f64).powf(1.0 / p) };
        c * self.scale
    }

    /// Lebesgue volume of the unit ball.
    pub fn volume(&self) -> f64 {
        unit_ball_volume(self).expect("constructed norms have volumes")
    }
}

/// Lebesgue volume of the unit ball of `norm`.
pub fn unit_ball_volume(norm: &NormSpec) -> Result<f64> {
    let d = norm.dim as f64;
    let base = match norm.kind {
        NormKind::Sup => 2f64.powi(norm.dim as i32),
        NormKind::L1 => (1..=norm.dim).fold(1.0, |acc, k| acc * 2.0 / k as f64),
        NormKind::L2 => (0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0)).exp(),
        NormKind::Lp(p) => {
            if !(p.is_finite() && p >= 1.0) {
                return Err(Error::NormVolumeUnavailable(format!("lp with p={p}")));
            }
            (d * LN_2 + d * ln_gamma(1.0 + 1.0 / p) - ln_gamma(1.0 + d / p)).exp()
        }
    };
    Ok(base / norm.scale.powi(norm.dim as i32))
}

/// Riemann zeta at real s > 1, by Euler–Maclaurin summation.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta needs s > 1");
    // B_2j / (2j)!
    const B: [f64; 7] = [
        1.0 / 6.0 / 2.0,
        -1.0 / 30.0 / 24.0,
        1.0 / 42.0 / 720.0,
        -1.0 / 30.0 / 40320.0,
        5.0 / 66.0 / 3628800.0,
        -691.0 / 2730.0 / 479001600.0,
        7.0 / 6.0 / 87178291200.0,
    ];
    let n = 16.0f64;
    let mut sum: f64 = (1..16).rev().map(|k| (k as f64).powf(-s)).sum();
    sum += n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s);
    let mut rising = s; // s(s+1)...(s+2j-2)
    let mut npow = n.powf(-s - 1.0);
    for (j, b) in B.iter().enumerate() {
        sum += b * rising * npow;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        npow /= n * n;
    }
    sum
}

fn check_norm_dims(dims: Dimensions, mu: &NormSpec, nv: &NormSpec) -> Result<()> {
    if mu.dim != dims.m || nv.dim != dims.n {
        return invalid(format!(
            "norm dimensions ({}, {}) do not match (m, n) = ({}, {})",
            mu.dim, nv.dim, dims.m, dims.n
        ));
    }
    Ok(())
}

/// η = n·V_μ·V_ν / (2ζ(m+n)).
pub fn eta(dims: Dimensions, mu: &NormSpec, nv: &NormSpec) -> Result<f64> {
    check_norm_dims(dims, mu, nv)?;
    Ok(dims.n as f64 * mu.volume() * nv.volume() / (2.0 * zeta(dims.d() as f64)))
}

/// θ = V_μ·V_ν/(2ζ(m+n)) · mn/(m+n).
pub fn theta(dims: Dimensions, mu: &NormSpec, nv: &NormSpec) -> Result<f64> {
    check_norm_dims(dims, mu, nv)?;
    Ok(mu.volume() * nv.volume() / (2.0 * zeta(dims.d() as f64)) * dims.delta())
}

/// Piecewise log-linear table of ψ, stored as ln φ against ln q.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    u: Vec<f64>,
    lphi: Vec<f64>,
    monotone: bool,
}

impl Table {
    /// True if φ is nonincreasing at every sample (hence everywhere).
    pub fn monotone(&self) -> bool {
        self.monotone
    }

    fn phi_log(&self, u: f64) -> f64 {
        let k = self.u.len();
        if u <= self.u[0] {
            return self.lphi[0].exp();
        }
        if u >= self.u[k - 1] {
            return self.lphi[k - 1].exp();
        }
        let i = self.u.partition_point(|&x| x <= u) - 1;
        let t = (u - self.u[i]) / (self.u[i + 1] - self.u[i]);
        (self.lphi[i] + t * (self.lphi[i + 1] - self.lphi[i])).exp()
    }

    /// ∫_a^b φ(e^u) du.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let k = self.u.len();
        let mut total = 0.0;
        // constant tails
        let lo_end = b.min(self.u[0]);
        if lo_end > a {
            total += self.lphi[0].exp() * (lo_end - a);
        }
        let hi_start = a.max(self.u[k - 1]);
        if b > hi_start {
            total += self.lphi[k - 1].exp() * (b - hi_start);
        }
        for i in 0..k - 1 {
            let (u0, u1) = (self.u[i], self.u[i + 1]);
            let (x0, x1) = (a.max(u0), b.min(u1));
            if x1 <= x0 {
                continue;
            }
            let s = (self.lphi[i + 1] - self.lphi[i]) / (u1 - u0);
            let f0 = self.lphi[i] + s * (x0 - u0);
            let w = x1 - x0;
            total += if (s * w).abs() < 1e-8 {
                f0.exp() * w * (1.0 + 0.5 * s * w + s * s * w * w / 6.0)
            } else {
                f0.exp() * (s * w).exp_m1() / s
            };
        }
        total
    }
}

/// The family a ψ belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum PsiFamily {
    /// ψ(q) = κ^{1/m} q^{-n/m}, so φ ≡ κ.
    PowerLaw { kappa: f64 },
    /// ψ(q) = γ^{1/m} q^{-n/m} log(2∨q)^{-1/m}, so φ = γ / log(2∨q).
    LogCorrected { gamma: f64 },
    /// Piecewise log-linear between samples, φ constant outside the grid.
    Tabulated(Table),
    /// ψ ≡ 0.
    Zero,
}

/// An approximation function ψ together with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxFunction {
    dims: Dimensions,
    family: PsiFamily,
}

impl ApproxFunction {
    pub fn power_law(dims: Dimensions, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return invalid(format!("kappa must be positive, got {kappa}"));
        }
        Ok(ApproxFunction { dims, family: PsiFamily::PowerLaw { kappa } })
    }

    pub fn log_corrected(dims: Dimensions, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return invalid(format!("gamma must be positive, got {gamma}"));
        }
        Ok(ApproxFunction { dims, family: PsiFamily::LogCorrected { gamma } })
    }

    /// From samples (q, ψ(q)) with strictly increasing q ≥ 1 and ψ > 0.
    pub fn tabulated(dims: Dimensions, samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return invalid("a tabulated psi needs at least two samples");
        }
        let mut u = Vec::with_capacity(samples.len());
        let mut lphi = Vec::with_capacity(samples.len());
        for (i, &(q, psi)) in samples.iter().enumerate() {
            if !(q.is_finite() && q >= 1.0 && psi.is_finite() && psi > 0.0) {
                return invalid(format!("bad sample ({q}, {psi})"));
            }
            if i > 0 && q <= samples[i - 1].0 {
                return invalid("sample grid must be strictly increasing");
            }
            u.push(q.ln());
            lphi.push(dims.n as f64 * q.ln() + dims.m as f64 * psi.ln());
        }
        let monotone = lphi.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        Ok(ApproxFunction { dims, family: PsiFamily::Tabulated(Table { u, lphi, monotone }) })
    }

    pub fn zero(dims: Dimensions) -> Self {
        ApproxFunction { dims, family: PsiFamily::Zero }
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn family(&self) -> &PsiFamily {
        &self.family
    }

    /// Short label such as `kappa=0.05`.
    pub fn label(&self) -> String {
        match &self.family {
            PsiFamily::PowerLaw { kappa } => format!("kappa={kappa}"),
            PsiFamily::LogCorrected { gamma } => format!("logcorrected:gamma={gamma}"),
            PsiFamily::Tabulated(t) => format!("tabulated:{}", t.u.len()),
            PsiFamily::Zero => "zero".to_string(),
        }
    }

    /// φ as a function of u = ln q.
    pub fn phi_log(&self, u: f64) -> f64 {
        match &self.family {
            PsiFamily::PowerLaw { kappa } => *kappa,
            PsiFamily::LogCorrected { gamma } => gamma / u.max(LN_2),
            PsiFamily::Tabulated(t) => t.phi_log(u),
            PsiFamily::Zero => 0.0,
        }
    }

    /// φ(q) = q^n ψ(q)^m.
    pub fn phi(&self, q: f64) -> f64 {
        self.phi_log(q.ln())
    }

    /// ψ(q).
    pub fn psi(&self, q: f64) -> f64 {
        let phi = self.phi(q);
        if phi == 0.0 {
            return 0.0;
        }
        ((phi.ln() - self.dims.n as f64 * q.ln()) / self.dims.m as f64).exp()
    }

    /// Ψ(q) = ψ(q)/q, the thickness of a slab.
    pub fn big_psi(&self, q: f64) -> f64 {
        self.psi(q) / q
    }

    /// M_ψ = φ(1).
    pub fn m_psi(&self) -> f64 {
        self.phi_log(0.0)
    }

    /// F_ψ(Q1, Q2) = ∫ q^{n-1} ψ(q)^m dq.
    pub fn f_psi(&self, q1: f64, q2: f64) -> Result<f64> {
        if !(q1.is_finite() && q1 > 0.0) {
            return invalid(format!("Q1 must be positive, got {q1}"));
        }
        if !(q2 >= q1) {
            return invalid(format!("need Q1 <= Q2, got Q1={q1}, Q2={q2}"));
        }
        Ok(self.f_log(q1.ln(), q2.ln()))
    }

    /// F_ψ between e^a and e^b, for a ≤ b. Works far beyond f64 range of q.
    pub fn f_log(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        match &self.family {
            PsiFamily::PowerLaw { kappa } => kappa * (b - a),
            PsiFamily::LogCorrected { gamma } => {
                let flat = (b.min(LN_2) - a.min(LN_2)) / LN_2;
                let tail = b.max(LN_2).ln() - a.max(LN_2).ln();
                gamma * (flat + tail)
            }
            PsiFamily::Tabulated(t) => t.integral(a, b),
            PsiFamily::Zero => 0.0,
        }
    }

    /// F_ψ over [e^a, e^{a+w}], with the width passed separately so that
    /// families with constant φ return exactly φ·w.
    pub fn f_span(&self, a: f64, w: f64) -> f64 {
        match &self.family {
            PsiFamily::PowerLaw { kappa } => kappa * w,
            _ => self.f_log(a, a + w),
        }
    }

    /// The function γψ.
    pub fn scaled(&self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return invalid(format!("scale must be positive, got {gamma}"));
        }
        let g = gamma.powi(self.dims.m as i32);
        let family = match &self.family {
            PsiFamily::PowerLaw { kappa } => PsiFamily::PowerLaw { kappa: kappa * g },
            PsiFamily::LogCorrected { gamma } => PsiFamily::LogCorrected { gamma: gamma * g },
            PsiFamily::Tabulated(t) => PsiFamily::Tabulated(Table {
                u: t.u.clone(),
                lphi: t.lphi.iter().map(|l| l + g.ln()).collect(),
                monotone: t.monotone,
            }),
            PsiFamily::Zero => PsiFamily::Zero,
        };
        Ok(ApproxFunction { dims: self.dims, family })
    }

    /// If φ_other = c·φ_self identically, returns c.
    pub fn scale_ratio(&self, other: &ApproxFunction) -> Option<f64> {
        if self.dims != other.dims {
            return None;
        }
        match (&self.family, &other.family) {
            (PsiFamily::PowerLaw { kappa: a }, PsiFamily::PowerLaw { kappa: b }) => Some(b / a),
            (PsiFamily::LogCorrected { gamma: a }, PsiFamily::LogCorrected { gamma: b }) => {
                Some(b / a)
            }
            (PsiFamily::Tabulated(s), PsiFamily::Tabulated(o)) => {
                if s.u != o.u {
                    return None;
                }
                let d0 = o.lphi[0] - s.lphi[0];
                let same = s.lphi.iter().zip(&o.lphi).all(|(x, y)| (y - x - d0).abs() < 1e-12);
                same.then(|| d0.exp())
            }
            _ => None,
        }
    }

    /// Whether φ is known to be nonincreasing.
    pub fn phi_monotone(&self) -> bool {
        match &self.family {
            PsiFamily::Tabulated(t) => t.monotone,
            _ => true,
        }
    }

    /// Whether ∫ φ(q)/q dq diverges.
    pub fn divergent(&self) -> bool {
        match &self.family {
            PsiFamily::Zero => false,
            _ => true,
        }
    }
}

/// The family a dimension function belongs to.
#[derive(Debug, Clone, PartialEq)]
pub enum DimFamily {
    /// f(ρ) = ρ^s.
    Power { s: f64 },
    /// f(ρ) = ρ^{mn} |log ρ|^s.
    LogPower { s: f64 },
    /// f(ρ) = ρ^{mn} exp F_ψ(1, ρ^{-m/(m+n)}), frozen above ρ0.
    Corollary { psi: Box<ApproxFunction>, rho0: f64 },
}

/// A dimension function f.
#[derive(Debug, Clone, PartialEq)]
pub struct DimFunction {
    dims: Dimensions,
    family: DimFamily,
}

impl DimFunction {
    pub fn power(dims: Dimensions, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= dims.big_d() as f64) {
            return invalid(format!("power exponent must lie in (0, {}], got {s}", dims.big_d()));
        }
        Ok(DimFunction { dims, family: DimFamily::Power { s } })
    }

    pub fn log_power(dims: Dimensions, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return invalid(format!("log-power exponent must be positive, got {s}"));
        }
        Ok(DimFunction { dims, family: DimFamily::LogPower { s } })
    }

    pub fn corollary(psi: &ApproxFunction, rho0: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho0 <= 1.0) {
            return invalid(format!("rho0 must lie in (0, 1], got {rho0}"));
        }
        Ok(DimFunction {
            dims: psi.dims,
            family: DimFamily::Corollary { psi: Box::new(psi.clone()), rho0 },
        })
    }

    pub fn dims(&self) -> Dimensions {
        self.dims
    }

    pub fn family(&self) -> &DimFamily {
        &self.family
    }

    /// ln f(ρ) for ρ = e^l, l < 0.
    pub fn ln_eval(&self, l: f64) -> f64 {
        self.dims.big_d() as f64 * l + self.ln_excess(l)
    }

    /// ln(f/f_*) at ρ = e^l, where f_*(ρ) = ρ^{mn}.
    pub fn ln_excess(&self, l: f64) -> f64 {
        let dd = self.dims.big_d() as f64;
        match &self.family {
            DimFamily::Power { s } => (s - dd) * l,
            DimFamily::LogPower { s } => s * l.abs().ln(),
            DimFamily::Corollary { psi, rho0 } => {
                let l = l.min(rho0.ln());
                psi.f_log(0.0, -self.dims.alpha() * l)
            }
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.ln_eval(rho.ln()).exp()
    }

    /// Checks, on ρ = 2^-k for k = 8..=60, that f is nondecreasing and
    /// that f decreases toward 0.
    pub fn check_shape(&self) -> bool {
        let vals: Vec<f64> = (8..=60).map(|k| self.ln_eval(-(k as f64) * LN_2)).collect();
        let nondecreasing = vals.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        nondecreasing && vals[vals.len() - 1] < vals[0]
    }
}

/// Value of L_{f,ψ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LExponent {
    pub value: f64,
    pub analytic: bool,
    pub error_bar: f64,
}

impl LExponent {
    fn exact(value: f64) -> Self {
        LExponent { value, analytic: true, error_bar: 0.0 }
    }
}

/// The default grid ρ_k = 2^-k, k = 8..=60.
pub fn default_rho_grid() -> Vec<f64> {
    (8..=60).map(|k| 2f64.powi(-k)).collect()
}

/// L_{f,ψ}, exact when the pair is in the analytic table, otherwise the
/// grid estimate on [`default_rho_grid`].
pub fn l_exponent(f: &DimFunction, psi: &ApproxFunction) -> Result<LExponent> {
    if f.dims != psi.dims {
        return invalid("f and psi have different dimensions");
    }
    if let PsiFamily::Zero = psi.family {
        return Err(Error::FPsiVanishes);
    }
    let dd = f.dims.big_d() as f64;
    let alpha = f.dims.alpha();
    let inf = f64::INFINITY;
    let exact = match (&f.family, &psi.family) {
        (DimFamily::Power { s }, _) if *s == dd => Some(0.0),
        (DimFamily::Power { s }, PsiFamily::PowerLaw { kappa }) => Some((dd - s) / (kappa * alpha)),
        (DimFamily::Power { .. }, PsiFamily::LogCorrected { .. }) => Some(inf),
        (DimFamily::LogPower { s }, PsiFamily::LogCorrected { gamma }) => Some(s / gamma),
        (DimFamily::LogPower { .. }, PsiFamily::PowerLaw { .. }) => Some(0.0),
        (DimFamily::Corollary { psi: base, .. }, _) => match base.scale_ratio(psi) {
            Some(c) => Some(1.0 / c),
            None => match (&base.family, &psi.family) {
                (PsiFamily::Zero, _) => Some(0.0),
                (PsiFamily::PowerLaw { .. }, PsiFamily::LogCorrected { .. }) => Some(inf),
                (PsiFamily::LogCorrected { .. }, PsiFamily::PowerLaw { .. }) => Some(0.0),
                _ => None,
            },
        },
        _ => None,
    };
    match exact {
        Some(v) => Ok(LExponent::exact(v)),
        None => l_exponent_on_grid(f, psi, &default_rho_grid()),
    }
}

/// Grid estimate of the liminf: minimum over the tail half of the grid,
/// with the spread over that half as error bar.
pub fn l_exponent_on_grid(f: &DimFunction, psi: &ApproxFunction, grid: &[f64]) -> Result<LExponent> {
    if grid.len() < 32 {
        return invalid(format!("grid needs at least 32 points, got {}", grid.len()));
    }
    if grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) || grid.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("grid must decrease inside (0, 1)");
    }
    let alpha = f.dims.alpha();
    let vals: Vec<Option<f64>> = grid
        .iter()
        .map(|&r| {
            let l = r.ln();
            let den = psi.f_log(0.0, -alpha * l);
            (den > 0.0).then(|| f.ln_excess(l) / den)
        })
        .collect();
    if vals.iter().all(|v| v.is_none()) {
        return Err(Error::FPsiVanishes);
    }
    let tail: Vec<f64> = vals[vals.len() / 2..].iter().flatten().copied().collect();
    if tail.is_empty() {
        return Err(Error::FPsiVanishes);
    }
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(LExponent { value: lo, analytic: false, error_bar: (hi - lo).max(f64::EPSILON * lo.abs()) })
}

/// Outcome of the trichotomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// H^f(Bad_ψ) = 0.
    Zero,
    /// H^f(Bad_ψ) = ∞.
    Infinity,
    /// L too close to η to decide.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub l_value: f64,
    pub eta_value: f64,
    pub analytic: bool,
    pub error_bar: f64,
}

/// Compares L_{f,ψ} with η.
pub fn classify(
    f: &DimFunction,
    psi: &ApproxFunction,
    dims: Dimensions,
    mu: &NormSpec,
    nv: &NormSpec,
) -> Result<Classification> {
    if psi.dims != dims || f.dims != dims {
        return invalid("f, psi and dims disagree");
    }
    match &psi.family {
        PsiFamily::PowerLaw { .. } => {
            return Err(Error::Precondition(
                "psi/psi_* must tend to 0; a pure power law keeps it constant".into(),
            ))
        }
        PsiFamily::Tabulated(t) if !t.monotone => {
            return Err(Error::Precondition("tabulated psi has no monotonicity witness".into()))
        }
        _ => {}
    }
    let e = eta(dims, mu, nv)?;
    let l = l_exponent(f, psi)?;
    let tie = if l.analytic {
        (l.value - e).abs() <= ANALYTIC_TIE * e
    } else {
        (l.value - e).abs() <= NUMERIC_TIE_BARS * l.error_bar
    };
    let verdict = if tie {
        Verdict::Unknown
    } else if l.value < e {
        Verdict::Zero
    } else {
        Verdict::Infinity
    };
    Ok(Classification { verdict, l_value: l.value, eta_value: e, analytic: l.analytic, error_bar: l.error_bar })
}

/// Hausdorff dimension (n−1)m + (m+n)/(1+c) of the c-approximable set.
pub fn jbbd_dimension(dims: Dimensions, c: f64) -> Result<f64> {
    let floor = dims.n as f64 / dims.m as f64;
    if c.is_nan() || c < floor {
        return invalid(format!("need c >= n/m = {floor}, got {c}"));
    }
    Ok(((dims.n - 1) * dims.m) as f64 + dims.d() as f64 / (1.0 + c))
}
