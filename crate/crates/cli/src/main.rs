use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpbvi_core::dist::SupportGrid;
use dpbvi_core::envs::{self, BeliefSet};
use dpbvi_core::harness::{
    self, compare_run, export_policy, export_trace, import_policy, AlgorithmReport, Policy,
    RunReport,
};
use dpbvi_core::model::{Belief, Pomdp};
use dpbvi_core::solver::SolveOptions;
use dpbvi_core::{dpbvi, pbvi};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const EXIT_USAGE: u8 = 1;
const EXIT_MODEL: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dpbvi",
    version,
    about = "Point-based POMDP planning with scalar and distributional backups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write its policy.
    Solve(SolveArgs),
    /// Run both solvers in lockstep and record the per-iteration error trace.
    Compare(CompareArgs),
    /// Evaluate a saved policy at one belief.
    Eval(EvalArgs),
    /// Parse a model file and report invariant violations.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Pbvi,
    Dpbvi,
}

#[derive(Args)]
struct RunArgs {
    /// `two-state`, `doorkey`, or a path to a model file.
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Atoms on the return grid.
    #[arg(long, default_value_t = 51)]
    atoms: usize,
    /// Return grid bounds as `lo,hi`.
    #[arg(long, value_parser = parse_support)]
    support: Option<(f64, f64)>,
    /// Exit with status 3 if a solver hits the iteration limit.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    algo: Algo,
    /// Where to write the policy document.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Where to write the CSV error trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    env: String,
    /// Comma-separated state probabilities.
    #[arg(long, value_parser = parse_probs, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    belief: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    env: PathBuf,
}

fn parse_support(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("bad upper bound `{hi}`"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("need finite lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

fn parse_probs(s: &str) -> Result<f64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("bad probability `{s}`"))
}

enum Failure {
    Usage(String),
    Model(String),
}

impl Failure {
    fn usage(flag: &str, msg: impl std::fmt::Display) -> Self {
        Failure::Usage(format!("invalid value for '--{flag}': {msg}"))
    }
}

struct Env {
    id: String,
    model: Pomdp,
    beliefs: BeliefSet,
    default_support: (f64, f64),
}

fn load_env(arg: &str) -> Result<Env, Failure> {
    match arg {
        "two-state" => {
            let (model, beliefs) = envs::build_two_state();
            Ok(Env {
                id: arg.into(),
                model,
                beliefs,
                default_support: (0.0, 100.0),
            })
        }
        "doorkey" => {
            let (model, beliefs) = envs::build_doorkey();
            Ok(Env {
                id: arg.into(),
                model,
                beliefs,
                default_support: (0.0, 5.0),
            })
        }
        path => {
            let model = load_model(Path::new(path))?;
            let beliefs = BeliefSet::corners_and_start(&model);
            let default_support = return_bounds(&model);
            Ok(Env {
                id: path.into(),
                model,
                beliefs,
                default_support,
            })
        }
    }
}

fn load_model(path: &Path) -> Result<Pomdp, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Model(format!("{}: {e}", path.display())))?;
    envs::parse_pomdp(&text).map_err(|e| Failure::Model(format!("{}: {e}", path.display())))
}

/// Bounds on any discounted return, widened to include zero.
fn return_bounds(model: &Pomdp) -> (f64, f64) {
    let (rmin, rmax) = model.reward_bounds();
    let horizon = 1.0 / (1.0 - model.discount());
    let lo = (rmin * horizon).min(0.0);
    let hi = (rmax * horizon).max(0.0);
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

fn options(run: &RunArgs) -> Result<SolveOptions, Failure> {
    if !(run.epsilon > 0.0 && run.epsilon.is_finite()) {
        return Err(Failure::usage("epsilon", "must be positive"));
    }
    if run.max_iters == 0 {
        return Err(Failure::usage("max-iters", "must be at least 1"));
    }
    Ok(SolveOptions::new(run.epsilon, run.max_iters))
}

fn grid(run: &RunArgs, env: &Env) -> Result<SupportGrid, Failure> {
    let (lo, hi) = run.support.unwrap_or(env.default_support);
    SupportGrid::new(lo, hi, run.atoms).map_err(|e| Failure::usage("atoms", e))
}

fn print_json(value: &impl serde::Serialize) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serializes")
    );
}

fn strict_status(strict: bool, report: &RunReport) -> u8 {
    if strict && !report.all_converged() {
        EXIT_NONCONVERGENCE
    } else {
        0
    }
}

fn solve(args: SolveArgs) -> Result<u8, Failure> {
    let env = load_env(&args.run.env)?;
    let opts = options(&args.run)?;
    let names = env.model.action_names().to_vec();
    let start = Instant::now();
    let (policy, iterations, converged, last, grid) = match args.algo {
        Algo::Pbvi => {
            let s = pbvi::solve(&env.model, &env.beliefs, &opts);
            let last = s.residuals.last().copied();
            let policy = Policy::Alpha {
                action_names: names,
                set: s.set,
            };
            (policy, s.iterations, s.converged, last, None)
        }
        Algo::Dpbvi => {
            let g = grid(&args.run, &env)?;
            let s = dpbvi::solve(&env.model, &env.beliefs, g, &opts);
            let last = s.residuals.last().copied();
            let policy = Policy::Psi {
                action_names: names,
                set: s.set,
            };
            (policy, s.iterations, s.converged, last, Some(g.into()))
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    if let Some(out) = &args.out {
        harness::write_atomic(out, export_policy(&policy).as_bytes())
            .map_err(|e| Failure::Model(format!("{}: {e}", out.display())))?;
    }
    let report = RunReport {
        environment: env.id,
        epsilon: opts.epsilon,
        max_iters: opts.max_iters,
        algorithms: vec![AlgorithmReport {
            algorithm: match args.algo {
                Algo::Pbvi => "pbvi",
                Algo::Dpbvi => "dpbvi",
            }
            .into(),
            iterations,
            seconds,
            converged,
            final_residual: last,
        }],
        grid,
    };
    print_json(&report);
    Ok(strict_status(args.run.strict, &report))
}

fn compare(args: CompareArgs) -> Result<u8, Failure> {
    let env = load_env(&args.run.env)?;
    let opts = options(&args.run)?;
    let g = grid(&args.run, &env)?;
    let c = compare_run(&env.id, &env.model, &env.beliefs, g, &opts);
    if let Some(path) = &args.trace {
        export_trace(&c.trace, path)
            .map_err(|e| Failure::Model(format!("{}: {e}", path.display())))?;
    }
    print_json(&json!({
        "report": c.report,
        "trace_peak": c.trace.peak(),
        "trace_final": c.trace.last().map(|r| r.max_rel_error),
    }));
    Ok(strict_status(args.run.strict, &c.report))
}

fn eval(args: EvalArgs) -> Result<u8, Failure> {
    let env = load_env(&args.env)?;
    let text = std::fs::read_to_string(&args.policy)
        .map_err(|e| Failure::Model(format!("{}: {e}", args.policy.display())))?;
    let policy = import_policy(&text, None)
        .map_err(|e| Failure::Model(format!("{}: {e}", args.policy.display())))?;
    let n = env.model.num_states();
    if policy.num_states() != n || policy.action_names() != env.model.action_names() {
        return Err(Failure::Model(format!(
            "{}: policy does not match environment `{}`",
            args.policy.display(),
            env.id
        )));
    }
    if args.belief.len() != n {
        return Err(Failure::usage(
            "belief",
            format!("expected {n} probabilities, got {}", args.belief.len()),
        ));
    }
    let belief = Belief::new(args.belief).map_err(|e| Failure::usage("belief", e))?;
    let e = policy.evaluate(&belief);
    let mut out = json!({
        "kind": policy.kind().to_string(),
        "value": e.value,
        "action": e.action,
        "action_name": policy.action_names()[e.action],
    });
    if let Some((g, masses)) = e.masses {
        out["grid"] = json!({ "z_min": g.z_min(), "z_max": g.z_max(), "num_atoms": g.num_atoms() });
        out["masses"] = json!(masses);
    }
    print_json(&out);
    Ok(0)
}

fn validate(args: ValidateArgs) -> Result<u8, Failure> {
    let m = load_model(&args.env)?;
    println!(
        "{}: ok ({} states, {} actions, {} observations, discount {})",
        args.env.display(),
        m.num_states(),
        m.num_actions(),
        m.num_obs(),
        m.discount()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: invalid usage"));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Compare(a) => compare(a),
        Command::Eval(a) => eval(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Model(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_MODEL)
        }
    }
}
