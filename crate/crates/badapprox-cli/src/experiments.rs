//! One function per experiment, each filling a [`RunRecord`].

use badapprox::cf_oracle::{hensley_dim, kurzweil_band, moreira_threshold};
use badapprox::core_theory::{classify, eta, theta, unit_ball_volume, zeta, ApproxFunction, Dimensions, NormSpec, PsiFamily};
use badapprox::dynamics::{dani_check, make_g, make_u, r_psi_domain};
use badapprox::fractal::{build_avoidance_tree, build_survivor_tree, dimension_bounds, BuildOptions, CodingScheme};
use badapprox::lattices::{epsilon_k_scan, Lattice, LatticeNorm};
use badapprox::scheduler::{build_schedule, constant_exponent, constant_schedule, Schedule};
use badapprox::window_measure::{sum_with_multiplicity, window_report};
use nalgebra::DMatrix;
use serde_json::{json, Map, Value};

use crate::config::{parse_norm, Experiment, ExperimentConfig, TreeChoice};
use crate::CliError;

/// What an experiment hands back before it is wrapped into a record.
#[derive(Default)]
pub struct Outcome {
    pub results: Map<String, Value>,
    pub rows: Vec<Map<String, Value>>,
    pub regime: Map<String, Value>,
    pub comparisons: Map<String, Value>,
}

impl Outcome {
    fn put(&mut self, k: &str, v: impl Into<Value>) {
        self.results.insert(k.to_string(), v.into());
    }

    fn compare(&mut self, estimate: &str, predicted: &str, anchor: &str) {
        self.comparisons.insert(estimate.to_string(), json!([predicted, anchor]));
    }
}

struct Setup {
    dims: Dimensions,
    mu: NormSpec,
    nv: NormSpec,
    psi: Option<ApproxFunction>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let dims = cfg.dimensions().map_err(|e| CliError::Validation(vec![e]))?;
    let mu = parse_norm(&cfg.mu, dims.m).map_err(|e| CliError::Validation(vec![e]))?;
    let nv = parse_norm(&cfg.nv, dims.n).map_err(|e| CliError::Validation(vec![e]))?;
    let psi = cfg.psi_spec().map(|p| p.build(dims)).transpose()?;
    Ok(Setup { dims, mu, nv, psi })
}

fn head(o: &mut Outcome, cfg: &ExperimentConfig, s: &Setup) {
    o.put("m", s.dims.m);
    o.put("n", s.dims.n);
    o.put("mu", cfg.mu.clone());
    o.put("nv", cfg.nv.clone());
}

fn psi_label(psi: &ApproxFunction) -> String {
    match psi.family() {
        PsiFamily::PowerLaw { kappa } => kappa.to_string(),
        _ => psi.label(),
    }
}

fn schedule_for(psi: &ApproxFunction, beta: f64, alpha: f64, depth: usize) -> badapprox::Result<Schedule> {
    match psi.family() {
        PsiFamily::PowerLaw { .. } => constant_schedule(psi, beta, alpha, depth),
        _ => build_schedule(psi, beta, alpha, depth),
    }
}

pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let s = setup(cfg)?;
    let mut o = Outcome::default();
    match exp {
        Experiment::Constants => {
            head(&mut o, cfg, &s);
            o.put("zeta", zeta(s.dims.d() as f64));
            o.put("V_mu", unit_ball_volume(&s.mu)?);
            o.put("V_nu", unit_ball_volume(&s.nv)?);
            o.put("theta", theta(s.dims, &s.mu, &s.nv)?);
            o.put("eta", eta(s.dims, &s.mu, &s.nv)?);
        }
        Experiment::Classify => {
            let psi = s.psi.as_ref().expect("validated");
            let f = cfg.f.as_ref().expect("validated").build(s.dims)?;
            let c = classify(&f, psi, s.dims, &s.mu, &s.nv)?;
            head(&mut o, cfg, &s);
            o.put("psi", psi.label());
            o.put("verdict", format!("{:?}", c.verdict).to_lowercase());
            o.put("L", c.l_value);
            o.put("eta", c.eta_value);
            o.put("analytic", c.analytic);
            o.put("error_bar", c.error_bar);
            o.compare("L", "eta", "trichotomy: zero below eta, infinite above");
        }
        Experiment::WindowMeasure => {
            let psi = s.psi.as_ref().expect("validated");
            let (q1, q2) = (cfg.q1.unwrap(), cfg.q2.unwrap());
            let (samples, seed) = (cfg.samples.unwrap(), cfg.seed.unwrap());
            let r = window_report(psi, q1, q2, &s.mu, &s.nv, samples, seed, 0)?;
            let e = eta(s.dims, &s.mu, &s.nv)?;
            head(&mut o, cfg, &s);
            o.put("kappa_or_family", psi_label(psi));
            o.put("Q1", q1);
            o.put("Q2", q2);
            o.put("samples", samples);
            o.put("seed", seed);
            o.put("estimate", r.mc_measure);
            o.put("stderr", r.stderr);
            o.put("F_psi", r.predicted_f);
            o.put("eta", e);
            o.put("prediction", r.predicted_measure);
            o.put("ratio", r.law_ratio(e));
            o.put("regime", r.regime.to_string());
            o.regime.insert("regime".into(), r.regime.to_string().into());
            o.compare("estimate", "prediction", "measure law 1 - exp(-eta F)");
        }
        Experiment::MultiplicitySum => {
            let psi = s.psi.as_ref().expect("validated");
            let (q1, q2) = (cfg.q1.unwrap(), cfg.q2.unwrap());
            let sum = sum_with_multiplicity(psi, q1, q2, &s.mu, &s.nv)?;
            let e = eta(s.dims, &s.mu, &s.nv)?;
            let f = psi.f_psi(q1, q2)?;
            let regime = badapprox::window_measure::regime(psi, q1, q2)?.to_string();
            head(&mut o, cfg, &s);
            o.put("kappa_or_family", psi_label(psi));
            o.put("Q1", q1);
            o.put("Q2", q2);
            o.put("sum", sum);
            o.put("F_psi", f);
            o.put("eta", e);
            o.put("prediction", e * f);
            o.put("ratio", sum / (e * f));
            o.put("regime", regime.clone());
            o.regime.insert("regime".into(), regime.into());
            o.compare("sum", "prediction", "primitive multiplicity sum ~ eta F");
        }
        Experiment::Schedule => {
            let psi = s.psi.as_ref().expect("validated");
            let beta = cfg.beta.unwrap();
            let alpha = cfg.alpha.unwrap_or(0.5);
            let depth = cfg.depth.unwrap();
            let sched = build_schedule(psi, beta, alpha, depth)?;
            o.put("m", s.dims.m);
            o.put("n", s.dims.n);
            o.put("kappa_or_family", psi_label(psi));
            o.put("beta", beta);
            o.put("alpha", alpha);
            o.put("depth", depth);
            o.put("exponent_first", sched.exponent(0));
            o.put("exponent_last", sched.exponent(depth - 1));
            let closed = match psi.family() {
                PsiFamily::PowerLaw { kappa } => Value::from(constant_exponent(*kappa, beta, alpha)?),
                _ => Value::Null,
            };
            o.put("closed_form_exponent", closed);
            o.put("log2_N_depth", sched.log2_nprod(depth));
            o.put("upper_bound", sched.upper_bound());
            o.put("bounds_hold", sched.check_bounds());
            o.compare("exponent_first", "closed_form_exponent", "constant exponent ceil(beta/(kappa alpha log 2))");
            for k in 0..depth {
                let mut row = Map::new();
                row.insert("k".into(), (k + 1).into());
                row.insert("exponent".into(), sched.exponent(k).into());
                row.insert("log2_N".into(), sched.log2_nprod(k + 1).into());
                row.insert("ln_Q".into(), sched.ln_q(k + 1).into());
                row.insert("block_mass".into(), sched.block_mass(k).into());
                o.rows.push(row);
            }
        }
        Experiment::TreeDimension => {
            let psi = s.psi.as_ref().expect("validated");
            let beta = cfg.beta.unwrap();
            let alpha = cfg.alpha.unwrap_or(0.5);
            let depth = cfg.depth.unwrap();
            let q0 = cfg.q0.unwrap_or(1.0);
            let seed = cfg.seed.unwrap();
            let base = match psi.family() {
                PsiFamily::Zero => ApproxFunction::power_law(s.dims, 1.0)?,
                _ => psi.clone(),
            };
            let sched = schedule_for(&base, beta, alpha, depth)?;
            let scheme = CodingScheme::new(sched, s.dims);
            let mut opts = BuildOptions::new(depth);
            opts.seed = seed;
            if let Some(n) = cfg.samples {
                opts.samples = n as usize;
            }
            let choice = cfg.tree.unwrap_or(TreeChoice::Survivor);
            let tree = match choice {
                TreeChoice::Survivor => build_survivor_tree(psi, q0, &scheme, &opts)?,
                TreeChoice::Avoidance => build_avoidance_tree(psi, q0, &scheme, &opts)?,
            };
            let e = eta(s.dims, &s.mu, &s.nv)?;
            let power = badapprox::core_theory::DimFunction::power(s.dims, s.dims.big_d() as f64)?;
            let f = cfg.f.as_ref().map(|f| f.build(s.dims)).transpose()?.unwrap_or(power);
            let b = dimension_bounds(&tree, &f)?;
            o.put("m", s.dims.m);
            o.put("n", s.dims.n);
            o.put("kappa_or_family", psi_label(psi));
            o.put("tree", tree.kind().to_string());
            o.put("beta", beta);
            o.put("depth", depth);
            o.put("Q0", q0);
            o.put("samples", opts.samples);
            o.put("seed", seed);
            o.put("truncated", tree.truncated());
            o.put("died_at", tree.died_at().map(Value::from).unwrap_or(Value::Null));
            o.put("eta_beta", e * beta);
            let mean_minus = (1..=tree.resolved_depth()).map(|k| tree.p_minus(k)).sum::<f64>() / tree.resolved_depth() as f64;
            o.put("mean_P_minus", mean_minus);
            o.put("s_lower", b.s_lower);
            o.put("s_upper", b.s_upper);
            o.put("lower_valid", b.lower_valid);
            o.put("hausdorff_lower", b.hausdorff_lower);
            o.put("box_upper", b.box_upper);
            o.compare("mean_P_minus", "eta_beta", "removal fraction ~ eta beta per level");
            let band = (1..=tree.resolved_depth()).all(|k| {
                let p = tree.p_minus(k);
                p >= 0.5 * e * beta && p <= 2.0 * e * beta
            });
            o.regime.insert("eta_beta_band".into(), if band { "inside" } else { "outside" }.into());
            o.regime.insert("sampled".into(), tree.truncated().into());
            for k in 1..=tree.resolved_depth() {
                let mut row = Map::new();
                row.insert("k".into(), k.into());
                row.insert("P_minus".into(), tree.p_minus(k).into());
                row.insert("P_plus".into(), tree.p_plus(k).into());
                row.insert("M_minus".into(), tree.m_minus(k).into());
                row.insert("M_plus".into(), tree.m_plus(k).into());
                row.insert("P_minus_over_eta_beta".into(), (tree.p_minus(k) / (e * beta)).into());
                row.insert("nodes".into(), tree.levels()[k - 1].len().into());
                o.rows.push(row);
            }
        }
        Experiment::DaniCheck => {
            let psi = s.psi.as_ref().expect("validated");
            let a = DMatrix::from_row_slice(s.dims.m, s.dims.n, cfg.matrix.as_ref().unwrap());
            let t0 = r_psi_domain(psi)?;
            let t_max = cfg.t_max.unwrap();
            let steps = cfg.steps.unwrap_or(100);
            if t_max <= t0 {
                return Err(CliError::Validation(vec![format!("t_max must exceed the domain start {t0}")]));
            }
            let grid: Vec<f64> = (1..=steps).map(|i| t0 + (t_max - t0) * i as f64 / steps as f64).collect();
            let rep = dani_check(&a, psi, &grid, &s.mu, &s.nv)?;
            head(&mut o, cfg, &s);
            o.put("psi", psi.label());
            o.put("t0", t0);
            o.put("t_max", t_max);
            o.put("steps", steps);
            o.put("excursions", rep.rows.iter().filter(|r| r.excursion).count());
            o.put("hits", rep.rows.iter().filter(|r| r.hit).count());
            o.put("agreement", rep.agreement);
            for r in &rep.rows {
                let mut row = Map::new();
                row.insert("t".into(), r.t.into());
                row.insert("r_psi".into(), r.r.into());
                row.insert("delta".into(), r.delta.into());
                row.insert("excursion".into(), r.excursion.into());
                row.insert("band_lo".into(), r.band.0.into());
                row.insert("band_hi".into(), r.band.1.into());
                row.insert("hit".into(), r.hit.into());
                row.insert("agree".into(), r.agree.into());
                o.rows.push(row);
            }
        }
        Experiment::HensleyCompare => {
            let kappa = cfg.kappa.unwrap();
            let h = hensley_dim(kappa);
            let (lo, hi) = kurzweil_band(kappa);
            let th = moreira_threshold();
            o.put("kappa", kappa);
            o.put("hensley", h.value);
            o.put("in_guard", h.in_guard);
            o.put("kurzweil_lo", lo);
            o.put("kurzweil_hi", hi);
            o.put("inside_band", h.value > lo && h.value < hi);
            o.put("first_order", 1.0 - 6.0 / std::f64::consts::PI.powi(2) * kappa);
            o.put("moreira_threshold", th.value);
            o.compare("hensley", "first_order", "dim Bad_kappa = 1 - (6/pi^2) kappa + o(kappa)");
            o.regime.insert("guard".into(), if h.in_guard { "asymptotic" } else { "outside" }.into());
        }
        Experiment::EpsilonScan => {
            let ks = cfg.k.clone().unwrap();
            let q = cfg.q.unwrap();
            let t = cfg.t.unwrap_or(0.0);
            let a = match &cfg.matrix {
                Some(m) => DMatrix::from_row_slice(s.dims.m, s.dims.n, m),
                None => DMatrix::zeros(s.dims.m, s.dims.n),
            };
            let basis = make_g(t, s.dims) * make_u(&a);
            let lat = Lattice::new(basis)?.reduced();
            let eps = epsilon_k_scan(&lat, &LatticeNorm::mixed(s.mu.clone(), s.nv.clone()), &ks, q)?;
            head(&mut o, cfg, &s);
            o.put("t", t);
            o.put("Q", q);
            o.put("nonincreasing", eps.windows(2).all(|w| w[1] <= w[0]));
            for (k, e) in ks.iter().zip(&eps) {
                let mut row = Map::new();
                row.insert("K".into(), (*k).into());
                row.insert("epsilon".into(), (*e).into());
                o.rows.push(row);
            }
        }
    }
    Ok(o)
}
