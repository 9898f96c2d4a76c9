//! Experiment configuration as read from JSON.

use badapprox::core_theory::{ApproxFunction, DimFunction, Dimensions, NormKind, NormSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Constants,
    Classify,
    WindowMeasure,
    MultiplicitySum,
    Schedule,
    TreeDimension,
    DaniCheck,
    HensleyCompare,
    EpsilonScan,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Constants => "constants",
            Experiment::Classify => "classify",
            Experiment::WindowMeasure => "window-measure",
            Experiment::MultiplicitySum => "multiplicity-sum",
            Experiment::Schedule => "schedule",
            Experiment::TreeDimension => "tree-dimension",
            Experiment::DaniCheck => "dani-check",
            Experiment::HensleyCompare => "hensley-compare",
            Experiment::EpsilonScan => "epsilon-scan",
        }
    }

    /// Runs that draw random numbers and therefore need a seed.
    pub fn stochastic(self) -> bool {
        matches!(self, Experiment::WindowMeasure | Experiment::TreeDimension)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PsiSpec {
    PowerLaw { kappa: f64 },
    LogCorrected { gamma: f64 },
    /// Pairs (q, ψ(q)).
    Tabulated { samples: Vec<(f64, f64)> },
    Zero,
}

impl PsiSpec {
    pub fn build(&self, dims: Dimensions) -> badapprox::Result<ApproxFunction> {
        match self {
            PsiSpec::PowerLaw { kappa } => ApproxFunction::power_law(dims, *kappa),
            PsiSpec::LogCorrected { gamma } => ApproxFunction::log_corrected(dims, *gamma),
            PsiSpec::Tabulated { samples } => ApproxFunction::tabulated(dims, samples),
            PsiSpec::Zero => Ok(ApproxFunction::zero(dims)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FSpec {
    Power { s: f64 },
    LogPower { s: f64 },
    Corollary { psi: PsiSpec, rho0: f64 },
}

impl FSpec {
    pub fn build(&self, dims: Dimensions) -> badapprox::Result<DimFunction> {
        match self {
            FSpec::Power { s } => DimFunction::power(dims, *s),
            FSpec::LogPower { s } => DimFunction::log_power(dims, *s),
            FSpec::Corollary { psi, rho0 } => DimFunction::corollary(&psi.build(dims)?, *rho0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeChoice {
    Survivor,
    Avoidance,
}

fn default_dims() -> [usize; 2] {
    [1, 1]
}

fn sup() -> String {
    "sup".to_string()
}

/// One experiment. Field names are the JSON keys; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    /// (m, n).
    #[serde(default = "default_dims")]
    pub dims: [usize; 2],
    /// `sup`, `l1`, `l2` or `lp:<p>`.
    #[serde(default = "sup")]
    pub mu: String,
    #[serde(default = "sup")]
    pub nv: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FSpec>,
    #[serde(rename = "Q1", default, skip_serializing_if = "Option::is_none")]
    pub q1: Option<f64>,
    #[serde(rename = "Q2", default, skip_serializing_if = "Option::is_none")]
    pub q2: Option<f64>,
    /// Shorthand for a power-law psi.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<f64>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(rename = "Q0", default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeChoice>,
    /// Row-major m×n matrix A.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config")
    }
}

pub fn parse_norm(s: &str, dim: usize) -> Result<NormSpec, String> {
    let kind = match s {
        "sup" => NormKind::Sup,
        "l1" => NormKind::L1,
        "l2" => NormKind::L2,
        other => match other.strip_prefix("lp:").map(str::parse::<f64>) {
            Some(Ok(p)) => NormKind::Lp(p),
            _ => return Err(format!("unknown norm '{s}' (use sup, l1, l2 or lp:<p>)")),
        },
    };
    NormSpec::new(kind, dim).map_err(|e| e.to_string())
}

fn need<T>(issues: &mut Vec<String>, v: &Option<T>, name: &str, exp: Experiment) {
    if v.is_none() {
        issues.push(format!("{} needs '{name}'", exp.name()));
    }
}

impl ExperimentConfig {
    pub fn dimensions(&self) -> Result<Dimensions, String> {
        Dimensions::new(self.dims[0], self.dims[1]).map_err(|e| e.to_string())
    }

    /// psi from `psi` or the `kappa` shorthand.
    pub fn psi_spec(&self) -> Option<PsiSpec> {
        match (&self.psi, self.kappa) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(kappa)) => Some(PsiSpec::PowerLaw { kappa }),
            _ => None,
        }
    }

    /// Every violated precondition for running `exp`, empty when valid.
    pub fn issues(&self, exp: Experiment) -> Vec<String> {
        let mut out = Vec::new();
        let dims = match self.dimensions() {
            Ok(d) => Some(d),
            Err(e) => {
                out.push(e);
                None
            }
        };
        if let Err(e) = parse_norm(&self.mu, self.dims[0].max(1)) {
            out.push(format!("mu: {e}"));
        }
        if let Err(e) = parse_norm(&self.nv, self.dims[1].max(1)) {
            out.push(format!("nv: {e}"));
        }
        if let Some(e) = self.experiment {
            if e != exp {
                out.push(format!("config names experiment '{}' but '{}' was requested", e.name(), exp.name()));
            }
        }
        if self.psi.is_some() && self.kappa.is_some() {
            out.push("give either 'psi' or 'kappa', not both".into());
        }
        if let (Some(spec), Some(d)) = (self.psi_spec(), dims) {
            if let Err(e) = spec.build(d) {
                out.push(format!("psi: {e}"));
            }
        }
        if let (Some(spec), Some(d)) = (&self.f, dims) {
            if let Err(e) = spec.build(d) {
                out.push(format!("f: {e}"));
            }
        }
        if let Some(q1) = self.q1 {
            if !(q1.is_finite() && q1 >= 1.0) {
                out.push(format!("Q1 must be at least 1, got {q1}"));
            }
        }
        if let (Some(q1), Some(q2)) = (self.q1, self.q2) {
            if !(q2.is_finite() && q2 >= q1) {
                out.push(format!("Q2 must be finite and at least Q1, got Q1={q1}, Q2={q2}"));
            }
        }
        if let Some(b) = self.beta {
            if !(b.is_finite() && b > 0.0) {
                out.push(format!("beta must be positive, got {b}"));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                out.push(format!("alpha must lie in (0,1), got {a}"));
            }
        }
        if self.depth == Some(0) {
            out.push("depth must be positive".into());
        }
        if self.samples == Some(0) {
            out.push("samples must be positive".into());
        }
        if let Some(q0) = self.q0 {
            if !(q0.is_finite() && q0 >= 1.0) {
                out.push(format!("Q0 must be at least 1, got {q0}"));
            }
        }
        let psi = self.psi_spec();
        match exp {
            Experiment::Constants => {}
            Experiment::Classify => {
                need(&mut out, &psi, "psi", exp);
                need(&mut out, &self.f, "f", exp);
            }
            Experiment::WindowMeasure | Experiment::MultiplicitySum => {
                need(&mut out, &psi, "psi", exp);
                need(&mut out, &self.q1, "Q1", exp);
                need(&mut out, &self.q2, "Q2", exp);
                if exp == Experiment::WindowMeasure {
                    need(&mut out, &self.samples, "samples", exp);
                }
            }
            Experiment::Schedule => {
                need(&mut out, &psi, "psi", exp);
                need(&mut out, &self.beta, "beta", exp);
                need(&mut out, &self.depth, "depth", exp);
            }
            Experiment::TreeDimension => {
                need(&mut out, &psi, "psi", exp);
                need(&mut out, &self.beta, "beta", exp);
                need(&mut out, &self.depth, "depth", exp);
            }
            Experiment::DaniCheck => {
                need(&mut out, &psi, "psi", exp);
                need(&mut out, &self.matrix, "matrix", exp);
                need(&mut out, &self.t_max, "t_max", exp);
                if let Some(s) = self.steps {
                    if s == 0 {
                        out.push("steps must be positive".into());
                    }
                }
            }
            Experiment::HensleyCompare => {
                need(&mut out, &self.kappa, "kappa", exp);
                if let Some(k) = self.kappa {
                    if !(k > 0.0 && k < 1.0) {
                        out.push(format!("kappa must lie in (0,1), got {k}"));
                    }
                }
            }
            Experiment::EpsilonScan => {
                need(&mut out, &self.k, "K", exp);
                need(&mut out, &self.q, "Q", exp);
                if let Some(ks) = &self.k {
                    if ks.is_empty() || ks.iter().any(|&k| !(k >= 1.0)) {
                        out.push("K must be a nonempty list of values at least 1".into());
                    }
                }
            }
        }
        if let (Some(m), Some(d)) = (&self.matrix, dims) {
            if m.len() != d.big_d() {
                out.push(format!("matrix needs m*n = {} entries, got {}", d.big_d(), m.len()));
            }
        }
        if exp.stochastic() && self.seed.is_none() {
            out.push(format!("{} is stochastic and needs 'seed' (config or --seed)", exp.name()));
        }
        out
    }
}
