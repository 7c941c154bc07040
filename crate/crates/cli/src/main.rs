//! `pushopt`: generate instances, certify stepsizes, run the algorithms and
//! reproduce the experiment families from the command line.
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for numeric
//! failures, including a reproduced scenario whose inline checks fail.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pushopt::algorithms::{gp_run, hybrid_run, pd_run, HybridSchedule, PushDigingState};
use pushopt::costs::{CostEnsemble, EnsembleFile};
use pushopt::harness::scenarios::{
    alpha_sweep, alpha_sweep_csv, contraction_csv, contraction_sweep, uniform_grid,
};
use pushopt::harness::{
    run_scenario, tune_pd_stepsize, ExperimentConfig, Instance, ResolvedConfig, Scenario,
    StepChoice, TuneRule, TuneSpec,
};
use pushopt::mixing::{MixingNetwork, NetworkFile};
use pushopt::pushfix::{fixed_point, thm26_bound};
use pushopt::{Error, Result};

const SCHEMA: &str = include_str!("../../../docs/config.md");

#[derive(Parser, Debug)]
#[command(name = "pushopt", version, about = "Gradient-push, Push-DIGing and their fixed-point theory")]
struct Cli {
    /// Experiment config (JSON); see `docs/config.md`.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Scenario whose defaults apply (e.g. `fig5_case2` for case-2 costs).
    #[arg(long, global = true, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for emitted files. Without it single artifacts go to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct InstanceArgs {
    /// Load the network from a `gen-net` file instead of generating it.
    #[arg(long, value_name = "JSON")]
    network: Option<PathBuf>,
    /// Load the costs from a `gen-costs` file instead of generating them.
    #[arg(long, value_name = "JSON")]
    costs: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
struct StepArgs {
    /// Absolute stepsize.
    #[arg(long, conflicts_with = "alpha_mult")]
    alpha: Option<f64>,
    /// Stepsize as a multiple of the certified ceiling.
    #[arg(long)]
    alpha_mult: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a strongly connected digraph and write its mixing matrix.
    GenNet,
    /// Sample a cost ensemble.
    GenCosts,
    /// Compute the contraction certificate.
    Certify {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Solve for the fixed point of the deterministic operator.
    FixedPoint {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        step: StepArgs,
    },
    /// Measured Lipschitz constant against `1 - C alpha` on (0, 2 alpha0].
    SweepContraction {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Fixed-point error against the neighbourhood bound on (0, alpha0].
    SweepAlpha {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Run one algorithm and write its trace.
    Run {
        algorithm: Algorithm,
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        step: StepArgs,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Run a whole scenario and check its assertions.
    Reproduce { figure: Figure },
    /// Grid search for the Push-DIGing stepsize.
    TunePd {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum)]
        rule: Option<Rule>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algorithm {
    Gp,
    Pd,
    Hybrid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Rule {
    BestFinal,
    LargestStable,
}

enum Failure {
    Error(Error),
    Assertions(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            if e.use_stderr() {
                eprintln!("\nConfig schema:\n\n{SCHEMA}");
                return ExitCode::from(1);
            }
            return ExitCode::from(code as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
        Err(Failure::Assertions(failed)) => {
            for f in failed {
                eprintln!("assertion failed: {f}");
            }
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli, scenario: Option<Scenario>) -> Result<(ExperimentConfig, ResolvedConfig)> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::from(e).context(path.display().to_string()))?;
            ExperimentConfig::from_json(&text).map_err(|e| e.context(path.display().to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = scenario.or(cli.scenario) {
        cfg.scenario = Some(s);
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let resolved = cfg.resolve()?;
    Ok((cfg, resolved))
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    Scenario::ALL
        .into_iter()
        .find(|sc| sc.name() == s)
        .or_else(|| Scenario::from_short(s))
        .ok_or_else(|| {
            let names: Vec<&str> = Scenario::ALL.iter().map(|sc| sc.name()).collect();
            format!("unknown scenario `{s}`; expected one of {}", names.join(", "))
        })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let ctx = || path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(ctx()))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).context(ctx()))
}

fn instance(cfg: &ResolvedConfig, args: &InstanceArgs, eps: Option<f64>) -> Result<Instance> {
    let eps = eps.unwrap_or(cfg.eps);
    if args.network.is_none() && args.costs.is_none() {
        let mut cfg = cfg.clone();
        cfg.eps = eps;
        return Instance::from_config(&cfg);
    }
    let net = match &args.network {
        Some(p) => MixingNetwork::from_json(&read_json::<NetworkFile>(p)?)?,
        None => Instance::from_config(cfg)?.net,
    };
    let ensemble = match &args.costs {
        Some(p) => CostEnsemble::from_json(&read_json::<EnsembleFile>(p)?)?,
        None => Instance::from_config(cfg)?.ensemble,
    };
    if ensemble.n() != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            found: ensemble.n(),
        });
    }
    Instance::from_parts(net, ensemble, eps, cfg.consensus_horizon)
}

fn step(args: &StepArgs, alpha0: f64, default_mult: f64) -> Result<f64> {
    let a = match (args.alpha, args.alpha_mult) {
        (Some(a), _) => a,
        (None, Some(m)) => m * alpha0,
        (None, None) => default_mult * alpha0,
    };
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("stepsize {a} must be positive")));
    }
    Ok(a)
}

/// Writes `body` to `out_dir/name` when an output directory is set,
/// otherwise to stdout.
fn emit(out_dir: Option<&Path>, name: &str, body: &str) -> Result<()> {
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            println!("{}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Serialize)]
struct FixedPointSummary<'a> {
    alpha: f64,
    iterations: usize,
    residual: f64,
    lipschitz: f64,
    distance_bound: f64,
    consensus_error: f64,
    fp_to_opt_err: f64,
    thm26_bound: f64,
    w_bar: &'a [f64],
    w_alpha: Vec<&'a [f64]>,
}

fn execute(cli: &Cli) -> std::result::Result<(), Failure> {
    let figure = match &cli.command {
        Command::Reproduce { figure } => {
            let short = format!("{figure:?}").to_lowercase();
            Some(Scenario::from_short(&short).expect("figure names match scenarios"))
        }
        _ => None,
    };
    let (raw, cfg) = load_config(cli, figure)?;
    let out_dir = cli.out_dir.clone().or(raw.out_dir.clone());
    let out = out_dir.as_deref();
    match &cli.command {
        Command::GenNet => {
            let inst = Instance::from_config(&cfg)?;
            emit(out, "network.json", &json(&inst.net.to_json())?)?;
        }
        Command::GenCosts => {
            let ens = Instance::from_config(&cfg)?.ensemble;
            emit(out, "costs.json", &json(&ens.to_json())?)?;
        }
        Command::Certify { instance: ia, eps } => {
            let inst = instance(&cfg, ia, *eps)?;
            emit(out, "certificate.json", &json(&inst.cert)?)?;
        }
        Command::FixedPoint { instance: ia, step: sa } => {
            let inst = instance(&cfg, ia, None)?;
            let alpha = step(sa, inst.alpha0(), 1.0)?;
            let fp = fixed_point(&inst.ctx(alpha)?, cfg.fp_tol)?;
            let summary = FixedPointSummary {
                alpha,
                iterations: fp.iterations,
                residual: fp.residual,
                lipschitz: fp.lipschitz,
                distance_bound: fp.distance_bound,
                consensus_error: fp.consensus_error,
                fp_to_opt_err: fp.distance_to(&inst.net, &inst.x_star)?,
                thm26_bound: thm26_bound(alpha, &inst.cert.scalars),
                w_bar: &fp.w_bar,
                w_alpha: fp.w_alpha.iter_blocks().collect(),
            };
            emit(out, "fixed_point.json", &json(&summary)?)?;
        }
        Command::SweepContraction { instance: ia, points } => {
            let inst = instance(&cfg, ia, None)?;
            let grid = uniform_grid(2.0 * inst.alpha0(), points.unwrap_or(200));
            emit(out, "contraction.csv", &contraction_csv(&contraction_sweep(&inst, &grid)?))?;
        }
        Command::SweepAlpha { instance: ia, points } => {
            let inst = instance(&cfg, ia, None)?;
            let grid = uniform_grid(inst.alpha0(), points.unwrap_or(cfg.sweep_points));
            emit(out, "alpha_sweep.csv", &alpha_sweep_csv(&alpha_sweep(&inst, &grid, cfg.fp_tol)?))?;
        }
        Command::Run {
            algorithm,
            instance: ia,
            step: sa,
            iters,
        } => {
            let inst = instance(&cfg, ia, None)?;
            let iters = iters.unwrap_or(cfg.iterations);
            let x0 = inst.initial_point(cfg.init, cfg.seed);
            let (name, trace) = match algorithm {
                Algorithm::Gp => {
                    let alpha = step(sa, inst.alpha0(), 1.0)?;
                    let fp = inst.fixed_point_if_contractive(alpha, cfg.fp_tol)?;
                    let refs = inst.refs(fp.as_ref());
                    ("trace_gp.csv", gp_run(&inst.net, &inst.ensemble, alpha, x0, iters, &refs)?)
                }
                Algorithm::Pd => {
                    let alpha = match (sa.alpha, sa.alpha_mult) {
                        (None, None) => hybrid_step(&cfg, &inst, cfg.hybrid.alpha_pd)?,
                        _ => step(sa, inst.alpha0(), 1.0)?,
                    };
                    let init = PushDigingState::new(&inst.ensemble, x0);
                    let refs = inst.refs(None);
                    ("trace_pd.csv", pd_run(&inst.net, &inst.ensemble, alpha, init, iters, &refs)?)
                }
                Algorithm::Hybrid => {
                    if sa.alpha.is_some() || sa.alpha_mult.is_some() {
                        return Err(Error::invalid(
                            "hybrid stepsizes come from the `hybrid` config block",
                        )
                        .into());
                    }
                    let h = &cfg.hybrid;
                    let schedule = HybridSchedule {
                        alpha_gp: hybrid_step(&cfg, &inst, h.alpha_gp)?,
                        alpha_pd: hybrid_step(&cfg, &inst, h.alpha_pd)?,
                        gp_iters: h.gp_iters.min(iters),
                        total_iters: iters,
                        handoff: h.handoff,
                    };
                    let refs = inst.refs(None);
                    ("trace_hybrid.csv", hybrid_run(&inst.net, &inst.ensemble, &schedule, x0, &refs)?)
                }
            };
            emit(out, name, &trace.to_csv())?;
        }
        Command::Reproduce { .. } => {
            let dir = out_dir.unwrap_or_else(|| PathBuf::from("out").join(cfg.scenario.name()));
            let result = run_scenario(&cfg)?;
            result.write_to(&dir)?;
            for a in &result.report.assertions {
                let mark = if a.passed { "PASS" } else { "FAIL" };
                eprintln!("{mark} {}: {}", a.name, a.detail);
            }
            println!("{}", dir.display());
            let failed: Vec<String> = result
                .report
                .assertions
                .iter()
                .filter(|a| !a.passed)
                .map(|a| a.name.clone())
                .collect();
            if !failed.is_empty() {
                return Err(Failure::Assertions(failed));
            }
        }
        Command::TunePd {
            instance: ia,
            start,
            step: grid_step,
            budget,
            horizon,
            rule,
        } => {
            let inst = instance(&cfg, ia, None)?;
            let base = cfg.hybrid.tune;
            let spec = TuneSpec {
                start: start.unwrap_or(base.start),
                step: grid_step.unwrap_or(base.step),
                budget: budget.unwrap_or(base.budget),
                horizon: horizon.unwrap_or(base.horizon),
                rule: match rule {
                    Some(Rule::BestFinal) => TuneRule::BestFinal,
                    Some(Rule::LargestStable) => TuneRule::LargestStable,
                    None => base.rule,
                },
            };
            let x0 = inst.initial_point(cfg.init, cfg.seed);
            let r = tune_pd_stepsize(&inst.net, &inst.ensemble, &x0, &inst.refs(None), &spec)?;
            emit(out, "tune_pd.json", &json(&r)?)?;
        }
    }
    Ok(())
}

fn hybrid_step(cfg: &ResolvedConfig, inst: &Instance, choice: StepChoice) -> Result<f64> {
    Ok(match choice {
        StepChoice::Absolute(a) => a,
        StepChoice::Multiplier(m) => m * inst.alpha0(),
        StepChoice::Tuned => {
            let x0 = inst.initial_point(cfg.init, cfg.seed);
            tune_pd_stepsize(&inst.net, &inst.ensemble, &x0, &inst.refs(None), &cfg.hybrid.tune)?.alpha
        }
    })
}
