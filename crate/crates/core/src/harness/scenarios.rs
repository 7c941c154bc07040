//! Seeded end-to-end experiments and their inline checks.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    fmt_float, gp_run, hybrid_run, pd_run, HybridSchedule, PushDigingState, References, RunTrace,
};
use crate::costs::{ensemble_minimizer, make_case1_ensemble, make_case2_ensemble, CostEnsemble};
use crate::error::{Error, Result};
use crate::linalg::StackedVector;
use crate::mixing::{build_mixing_matrix, generate_digraph, MixingNetwork};
use crate::pushfix::{
    certify, fixed_point, lipschitz_constant, ContractionCertificate, FixedPoint, OperatorContext,
};
use crate::seeding::{derive_seed, stream, INIT_LABEL};

use super::config::{CostSpec, InitSpec, Output, ResolvedConfig, StepChoice, StepsizeSpec};
use super::parallel::par_map;
use super::tune::{tune_pd_stepsize, TuneResult};

/// Allowed excess of the measured Lipschitz constant over `1 − Cα`.
pub const CONTRACTION_SLACK: f64 = 1e-9;
/// Accepted range of the log-log slope of the fixed-point error.
pub const SLOPE_RANGE: (f64, f64) = (0.85, 1.15);

/// A seeded network, ensemble and certificate.
#[derive(Clone, Debug)]
pub struct Instance {
    pub net: MixingNetwork,
    pub ensemble: CostEnsemble,
    pub x_star: Vec<f64>,
    pub cert: ContractionCertificate,
}

impl Instance {
    pub fn generate(
        n: usize,
        p: f64,
        costs: &CostSpec,
        seed: u64,
        eps: f64,
        horizon: usize,
    ) -> Result<Self> {
        let net = build_mixing_matrix(&generate_digraph(n, p, seed)?)?;
        let ensemble = match *costs {
            CostSpec::Case1 { d, m, delta_reg } => make_case1_ensemble(n, d, m, delta_reg, seed)?,
            CostSpec::Case2 { d, m_rank } => make_case2_ensemble(n, d, m_rank, seed)?,
        };
        Self::from_parts(net, ensemble, eps, horizon)
    }

    pub fn from_parts(
        net: MixingNetwork,
        ensemble: CostEnsemble,
        eps: f64,
        horizon: usize,
    ) -> Result<Self> {
        let x_star = ensemble_minimizer(&ensemble)?;
        let cert = certify(&net, &ensemble, eps, horizon)?;
        Ok(Self {
            net,
            ensemble,
            x_star,
            cert,
        })
    }

    pub fn from_config(cfg: &ResolvedConfig) -> Result<Self> {
        Self::generate(
            cfg.network.n,
            cfg.network.p,
            &cfg.costs,
            cfg.seed,
            cfg.eps,
            cfg.consensus_horizon,
        )
    }

    pub fn alpha0(&self) -> f64 {
        self.cert.alpha0
    }

    pub fn ctx(&self, alpha: f64) -> Result<OperatorContext<'_>> {
        OperatorContext::new(&self.net, &self.ensemble, alpha)
    }

    pub fn refs(&self, fp: Option<&FixedPoint>) -> References {
        References {
            x_star: self.x_star.clone(),
            w_alpha: fp.map(|f| f.w_alpha.clone()),
        }
    }

    pub fn initial_point(&self, init: InitSpec, seed: u64) -> StackedVector {
        let (n, d) = (self.net.n(), self.ensemble.dim());
        match init {
            InitSpec::Zero => StackedVector::zeros(n, d),
            InitSpec::Uniform => {
                let mut rng = stream(derive_seed(seed, INIT_LABEL));
                let data = (0..n * d).map(|_| rng.gen::<f64>()).collect();
                StackedVector::from_vec(n, d, data).expect("length n*d")
            }
        }
    }

    /// Fixed point of `T_α`, or `None` when `T_α` is not contractive.
    pub fn fixed_point_if_contractive(&self, alpha: f64, tol: f64) -> Result<Option<FixedPoint>> {
        match fixed_point(&self.ctx(alpha)?, tol) {
            Ok(fp) => Ok(Some(fp)),
            Err(Error::NotContractive { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// `k·α_max/points` for `k = 1..=points`.
pub fn uniform_grid(alpha_max: f64, points: usize) -> Vec<f64> {
    (1..=points).map(|k| alpha_max * k as f64 / points as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub alpha: f64,
    pub lipschitz: f64,
    /// `1 − Cα`.
    pub contraction_envelope: f64,
}

pub fn contraction_sweep(inst: &Instance, alphas: &[f64]) -> Result<Vec<ContractionRow>> {
    par_map(alphas, |&alpha| {
        Ok(ContractionRow {
            alpha,
            lipschitz: lipschitz_constant(&inst.ctx(alpha)?)?,
            contraction_envelope: 1.0 - inst.cert.c * alpha,
        })
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    /// `‖w^α − nπ ⊗ x_*‖`.
    pub fp_to_opt_err: f64,
    pub thm26_bound: f64,
    pub consensus_error: f64,
    pub consensus_bound: f64,
    pub fp_norm: f64,
    pub fp_distance_bound: f64,
}

pub fn alpha_sweep(inst: &Instance, alphas: &[f64], tol: f64) -> Result<Vec<AlphaSweepRow>> {
    par_map(alphas, |&alpha| {
        let fp = fixed_point(&inst.ctx(alpha)?, tol)?;
        let s = &inst.cert.scalars;
        Ok(AlphaSweepRow {
            alpha,
            fp_to_opt_err: fp.distance_to(&inst.net, &inst.x_star)?,
            thm26_bound: crate::pushfix::thm26_bound(alpha, s),
            consensus_error: fp.consensus_error,
            consensus_bound: crate::pushfix::consensus_error_bound(alpha, s),
            fp_norm: crate::linalg::pi_norm(&fp.w_alpha, inst.net.pi())?,
            fp_distance_bound: fp.distance_bound,
        })
    })
    .into_iter()
    .collect()
}

pub fn contraction_csv(rows: &[ContractionRow]) -> String {
    let mut csv = String::from("alpha,lipschitz,contraction_envelope\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_float(r.alpha),
            fmt_float(r.lipschitz),
            fmt_float(r.contraction_envelope)
        );
    }
    csv
}

pub fn alpha_sweep_csv(rows: &[AlphaSweepRow]) -> String {
    let mut csv = String::from("alpha,fp_to_opt_err,thm26_bound\n");
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_float(r.alpha),
            fmt_float(r.fp_to_opt_err),
            fmt_float(r.thm26_bound)
        );
    }
    csv
}

/// `t,w_fp_err` columns of a gradient-push trace.
pub fn fixed_point_run_csv(trace: &RunTrace) -> String {
    let mut csv = String::from("t,w_fp_err\n");
    for r in &trace.records {
        let _ = writeln!(csv, "{},{}", r.t, fmt_float(r.w_fp_err.unwrap_or(f64::NAN)));
    }
    csv
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Result of comparing a gradient-push trace with the convergence envelope.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub holds: bool,
    /// Largest `measured / envelope` over the checked range.
    pub worst_ratio: f64,
    pub worst_t: usize,
}

/// Gradient-push satisfies the `w`-form recursion from `t = 1` on, with
/// push-sum weights one step ahead, so the envelope started at `w(1)`
/// bounds `w(t)` by `envelope(t − 2)` for `t ≥ 2`. Both measured distances
/// carry the fixed point's own error, added as slack.
pub fn envelope_check(trace: &RunTrace, cert: &ContractionCertificate, fp: &FixedPoint) -> EnvelopeCheck {
    let errs: Vec<f64> = trace.records.iter().filter_map(|r| r.w_fp_err).collect();
    let slack = fp.distance_bound + 1e-12;
    let mut out = EnvelopeCheck {
        holds: true,
        worst_ratio: 0.0,
        worst_t: 0,
    };
    if errs.len() < 3 {
        return out;
    }
    let e0 = errs[1] + fp.distance_bound;
    for (t, &e) in errs.iter().enumerate().skip(2) {
        let env = cert.envelope(e0, (t - 2) as u32) + slack;
        let ratio = e / env;
        if ratio > out.worst_ratio {
            out.worst_ratio = ratio;
            out.worst_t = t;
        }
        if !(e <= env) {
            out.holds = false;
        }
    }
    out
}

/// First `t` with `w_fp_err ≤ max(1e-9, 1e-10 · w_fp_err(0))`.
pub fn fixed_point_hit(trace: &RunTrace) -> Option<usize> {
    let first = trace.records.first()?.w_fp_err?;
    let target = (1e-10 * first).max(1e-9);
    trace
        .records
        .iter()
        .find(|r| r.w_fp_err.is_some_and(|e| e <= target))
        .map(|r| r.t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub alpha: f64,
    pub thm26_bound: f64,
    pub consensus_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ResolvedConfig,
    pub certificate: ContractionCertificate,
    pub bounds: Vec<BoundRow>,
    pub stepsizes: Vec<f64>,
    pub tuned_pd: Option<TuneResult>,
    pub files: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

/// A finished scenario: report plus named file contents, not yet written.
#[derive(Clone, Debug)]
pub struct ScenarioOutput {
    pub report: ExperimentReport,
    pub files: Vec<(String, String)>,
}

impl ScenarioOutput {
    /// Writes every artifact and `report.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("report.json"), report_json(&self.report)?)?;
        Ok(())
    }
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

struct Builder {
    files: Vec<(String, String)>,
    assertions: Vec<Assertion>,
}

impl Builder {
    fn file(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

fn resolve_step(choice: StepChoice, alpha0: f64, tuned: Option<&TuneResult>) -> f64 {
    match choice {
        StepChoice::Absolute(a) => a,
        StepChoice::Multiplier(m) => m * alpha0,
        StepChoice::Tuned => tuned.expect("tuned stepsize computed").alpha,
    }
}

fn label(x: f64) -> String {
    format!("{x}")
}

pub fn run_scenario(cfg: &ResolvedConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let scenario = cfg.scenario.name();
    let inst = Instance::from_config(cfg).map_err(|e| e.context(scenario))?;
    let a0 = inst.alpha0();
    let stepsizes: Vec<f64> = match &cfg.stepsizes {
        StepsizeSpec::Multipliers(m) => m.iter().map(|k| k * a0).collect(),
        StepsizeSpec::Absolute(a) => a.clone(),
    };
    let mut b = Builder {
        files: vec![
            ("network.json".into(), pretty(&inst.net.to_json())?),
            ("costs.json".into(), pretty(&inst.ensemble.to_json())?),
            ("certificate.json".into(), pretty(&inst.cert)?),
        ],
        assertions: Vec::new(),
    };
    let mut tuned = None;
    for out in &cfg.outputs {
        let r = match out {
            Output::ContractionSweep => emit_contraction(cfg, &inst, &mut b),
            Output::FixedPointRun => emit_fixed_point_run(cfg, &inst, &mut b),
            Output::AlphaSweep => emit_alpha_sweep(cfg, &inst, &mut b),
            Output::StepsizeTraces => emit_traces(cfg, &inst, &stepsizes, &mut b),
            Output::Hybrid => emit_hybrid(cfg, &inst, &mut b).map(|t| tuned = t),
        };
        r.map_err(|e| e.context(scenario))?;
    }
    let bounds = stepsizes
        .iter()
        .map(|&alpha| BoundRow {
            alpha,
            thm26_bound: crate::pushfix::thm26_bound(alpha, &inst.cert.scalars),
            consensus_bound: crate::pushfix::consensus_error_bound(alpha, &inst.cert.scalars),
        })
        .collect();
    let passed = b.assertions.iter().all(|a| a.passed);
    let mut files: Vec<String> = b.files.iter().map(|f| f.0.clone()).collect();
    files.push("report.json".into());
    Ok(ScenarioOutput {
        report: ExperimentReport {
            config: cfg.clone(),
            certificate: inst.cert.clone(),
            bounds,
            stepsizes,
            tuned_pd: tuned,
            files,
            assertions: b.assertions,
            passed,
        },
        files: b.files,
    })
}

fn pretty<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn emit_contraction(cfg: &ResolvedConfig, inst: &Instance, b: &mut Builder) -> Result<()> {
    let a0 = inst.alpha0();
    let rows = contraction_sweep(inst, &uniform_grid(2.0 * a0, cfg.sweep_points))?;
    let worst = rows
        .iter()
        .filter(|r| r.alpha <= a0 * (1.0 + 1e-12))
        .map(|r| r.lipschitz - r.contraction_envelope)
        .fold(f64::NEG_INFINITY, f64::max);
    b.file("contraction.csv", contraction_csv(&rows));
    b.check(
        "lipschitz_below_contraction_envelope",
        worst <= CONTRACTION_SLACK,
        format!("max over alpha <= alpha0 of L_alpha - (1 - C alpha) = {worst:e}"),
    );
    Ok(())
}

fn emit_fixed_point_run(cfg: &ResolvedConfig, inst: &Instance, b: &mut Builder) -> Result<()> {
    let a0 = inst.alpha0();
    let fp = fixed_point(&inst.ctx(a0)?, cfg.fp_tol)?;
    let x0 = inst.initial_point(cfg.init, cfg.seed);
    let trace = gp_run(&inst.net, &inst.ensemble, a0, x0, cfg.iterations, &inst.refs(Some(&fp)))?;
    b.file("fixed_point_run.csv", fixed_point_run_csv(&trace));
    let hit = fixed_point_hit(&trace);
    b.check(
        "fixed_point_reached",
        hit.is_some(),
        match hit {
            Some(t) => format!("w_fp_err reached max(1e-9, 1e-10 * initial) at t = {t}"),
            None => format!(
                "w_fp_err = {:e} after {} iterations",
                trace.last().and_then(|r| r.w_fp_err).unwrap_or(f64::NAN),
                cfg.iterations
            ),
        },
    );
    let env = envelope_check(&trace, &inst.cert, &fp);
    b.check(
        "envelope_dominates_trace",
        env.holds,
        format!(
            "worst measured/envelope ratio {:.6} at t = {}",
            env.worst_ratio, env.worst_t
        ),
    );
    Ok(())
}

fn emit_alpha_sweep(cfg: &ResolvedConfig, inst: &Instance, b: &mut Builder) -> Result<()> {
    let rows = alpha_sweep(inst, &uniform_grid(inst.alpha0(), cfg.sweep_points), cfg.fp_tol)?;
    let violations = rows.iter().filter(|r| !(r.fp_to_opt_err <= r.thm26_bound)).count();
    b.file("alpha_sweep.csv", alpha_sweep_csv(&rows));
    b.check(
        "fixed_point_within_neighbourhood_bound",
        violations == 0,
        format!("{violations} of {} rows exceed the bound", rows.len()),
    );
    let xs: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.fp_to_opt_err).collect();
    let slope = loglog_slope(&xs, &ys);
    b.check(
        "error_linear_in_stepsize",
        (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&slope),
        format!("log-log slope {slope:.6}"),
    );
    Ok(())
}

fn emit_traces(
    cfg: &ResolvedConfig,
    inst: &Instance,
    stepsizes: &[f64],
    b: &mut Builder,
) -> Result<()> {
    let a0 = inst.alpha0();
    let x0 = inst.initial_point(cfg.init, cfg.seed);
    let runs = par_map(stepsizes, |&alpha| -> Result<(RunTrace, Option<FixedPoint>)> {
        let fp = inst.fixed_point_if_contractive(alpha, cfg.fp_tol)?;
        let tr = gp_run(
            &inst.net,
            &inst.ensemble,
            alpha,
            x0.clone(),
            cfg.iterations,
            &inst.refs(fp.as_ref()),
        )?;
        Ok((tr, fp))
    });
    let mut plateaus = Vec::new();
    for (alpha, run) in stepsizes.iter().zip(runs) {
        let (trace, _) = run?;
        let name = match &cfg.stepsizes {
            StepsizeSpec::Multipliers(_) => format!("trace_m{}.csv", label(alpha / a0)),
            StepsizeSpec::Absolute(_) => format!("trace_a{}.csv", label(*alpha)),
        };
        b.file(name, trace.to_csv());
        if *alpha <= a0 * (1.0 + 1e-12) && !trace.diverged() {
            plateaus.push((*alpha, trace.plateau(cfg.plateau_window)));
        }
    }
    plateaus.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ordered = plateaus.windows(2).all(|p| p[0].1 <= p[1].1);
    b.check(
        "plateaus_ordered_by_stepsize",
        ordered,
        plateaus
            .iter()
            .map(|(a, p)| format!("alpha/alpha0 = {:.4}: {p:e}", a / a0))
            .collect::<Vec<_>>()
            .join("; "),
    );
    let mut above = Vec::new();
    for &(alpha, p) in &plateaus {
        let bound = crate::pushfix::thm26_bound(alpha, &inst.cert.scalars) + cfg.fp_tol;
        if !(p <= bound) {
            above.push(format!("{:.4}", alpha / a0));
        }
    }
    b.check(
        "plateaus_within_neighbourhood_bound",
        above.is_empty(),
        if above.is_empty() {
            "all plateaus within bound".into()
        } else {
            format!("multipliers above bound: {}", above.join(", "))
        },
    );
    Ok(())
}

fn emit_hybrid(cfg: &ResolvedConfig, inst: &Instance, b: &mut Builder) -> Result<Option<TuneResult>> {
    let h = &cfg.hybrid;
    let x0 = inst.initial_point(cfg.init, cfg.seed);
    let refs = inst.refs(None);
    let needs_tuning = matches!(h.alpha_gp, StepChoice::Tuned) || matches!(h.alpha_pd, StepChoice::Tuned);
    let tuned = if needs_tuning {
        Some(tune_pd_stepsize(&inst.net, &inst.ensemble, &x0, &refs, &h.tune)?)
    } else {
        None
    };
    let a0 = inst.alpha0();
    let alpha_gp = resolve_step(h.alpha_gp, a0, tuned.as_ref());
    let alpha_pd = resolve_step(h.alpha_pd, a0, tuned.as_ref());
    let schedule = HybridSchedule {
        alpha_gp,
        alpha_pd,
        gp_iters: h.gp_iters,
        total_iters: h.total_iters,
        handoff: h.handoff,
    };
    let gp = gp_run(&inst.net, &inst.ensemble, alpha_gp, x0.clone(), h.total_iters, &refs)?;
    let pd = pd_run(
        &inst.net,
        &inst.ensemble,
        alpha_pd,
        PushDigingState::new(&inst.ensemble, x0.clone()),
        h.total_iters,
        &refs,
    )?;
    let hy = hybrid_run(&inst.net, &inst.ensemble, &schedule, x0, &refs)?;
    b.file("trace_gp.csv", gp.to_csv());
    b.file("trace_pd.csv", pd.to_csv());
    b.file("trace_hybrid.csv", hy.to_csv());
    let (fh, fp) = (hy.final_sum_z_err(), pd.final_sum_z_err());
    b.check(
        "hybrid_not_worse_than_push_diging",
        fh <= fp,
        format!("final sum_z_err: hybrid {fh:e}, push-diging {fp:e} (alpha_gp {alpha_gp}, alpha_pd {alpha_pd})"),
    );
    Ok(tuned)
}
