use std::path::PathBuf;
use std::process::ExitCode;

use badapprox_cli::{load_config, persist_sweep, run_to, sweep, sweep_csv, CliError, Experiment};
use clap::{Args, Parser, Subcommand};

const COLUMNS: &str = "\
CSV columns (one row per run, in this order):
  constants         m,n,mu,nv,zeta,V_mu,V_nu,theta,eta
  classify          m,n,mu,nv,psi,verdict,L,eta,analytic,error_bar
  window-measure    m,n,mu,nv,kappa_or_family,Q1,Q2,samples,seed,estimate,stderr,F_psi,eta,prediction,ratio,regime
  multiplicity-sum  m,n,mu,nv,kappa_or_family,Q1,Q2,sum,F_psi,eta,prediction,ratio,regime
  schedule          m,n,kappa_or_family,beta,alpha,depth,exponent_first,exponent_last,closed_form_exponent,log2_N_depth,upper_bound,bounds_hold
                    (+ <name>_rows.csv: k,exponent,log2_N,ln_Q,block_mass)
  tree-dimension    m,n,kappa_or_family,tree,beta,depth,Q0,samples,seed,truncated,died_at,eta_beta,mean_P_minus,s_lower,s_upper,lower_valid,hausdorff_lower,box_upper
                    (+ rows: k,P_minus,P_plus,M_minus,M_plus,P_minus_over_eta_beta,nodes)
  dani-check        m,n,mu,nv,psi,t0,t_max,steps,excursions,hits,agreement
                    (+ rows: t,r_psi,delta,excursion,band_lo,band_hi,hit,agree)
  hensley-compare   kappa,hensley,in_guard,kurzweil_lo,kurzweil_hi,inside_band,first_order,moreira_threshold
  epsilon-scan      m,n,mu,nv,t,Q,nonincreasing  (+ rows: K,epsilon)
Sweeps write sweep_<param>.csv with columns <param>,status,error followed by the experiment's columns.

Exit codes: 0 success, 2 validation error, 3 budget exceeded, 1 other failures.";

#[derive(Parser)]
#[command(name = "badapprox", version, about = "Seeded experiments on badly approximable matrices", after_long_help = COLUMNS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the CSV table and the JSON record.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Name of a field set in the template, e.g. kappa.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// theta and eta for the given dimensions and norms.
    Constants(RunArgs),
    /// Zero / infinity verdict for a dimension function and psi.
    Classify(RunArgs),
    /// Monte Carlo measure of the window W_psi(Q1, Q2).
    WindowMeasure(RunArgs),
    /// Exact primitive multiplicity sum over a window.
    MultiplicitySum(RunArgs),
    /// Block schedule N_k with its mass bounds.
    Schedule(RunArgs),
    /// Survivor or avoidance tree and its dimension bounds.
    TreeDimension(RunArgs),
    /// Excursions of g_t u_A Z^d against approximations.
    DaniCheck(RunArgs),
    /// Hensley's expansion against Kurzweil's band.
    HensleyCompare(RunArgs),
    /// epsilon_K over a list of K for one lattice.
    EpsilonScan(RunArgs),
    /// Reruns a template over the values of one parameter.
    Sweep(SweepArgs),
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    if let Some(h) = e.hint() {
        eprintln!("hint: {h}");
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (exp, args) = match cli.command {
        Command::Constants(a) => (Experiment::Constants, a),
        Command::Classify(a) => (Experiment::Classify, a),
        Command::WindowMeasure(a) => (Experiment::WindowMeasure, a),
        Command::MultiplicitySum(a) => (Experiment::MultiplicitySum, a),
        Command::Schedule(a) => (Experiment::Schedule, a),
        Command::TreeDimension(a) => (Experiment::TreeDimension, a),
        Command::DaniCheck(a) => (Experiment::DaniCheck, a),
        Command::HensleyCompare(a) => (Experiment::HensleyCompare, a),
        Command::EpsilonScan(a) => (Experiment::EpsilonScan, a),
        Command::Sweep(s) => return run_sweep(s),
    };
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let out = args.out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    match run_to(exp, &cfg, out.as_deref()) {
        Ok(rec) => {
            print!("{}", rec.summary());
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn run_sweep(args: SweepArgs) -> ExitCode {
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let Some(exp) = cfg.experiment else {
        return fail(CliError::Validation(vec!["a sweep template must name its 'experiment'".into()]));
    };
    let rows = match sweep(exp, &cfg, &args.param, &args.values) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let out = args.out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    if let Some(dir) = out {
        if let Err(e) = persist_sweep(exp, &args.param, &rows, &dir) {
            return fail(e.into());
        }
    }
    match sweep_csv(&args.param, &rows) {
        Ok(bytes) => print!("{}", String::from_utf8_lossy(&bytes)),
        Err(e) => return fail(e.into()),
    }
    ExitCode::SUCCESS
}
