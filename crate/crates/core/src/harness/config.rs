//! Experiment configuration.
//!
//! A config names a scenario and may override any of its defaults. Unknown
//! keys are rejected. [`ExperimentConfig::resolve`] fills in every default
//! so the resolved form fully determines a run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::algorithms::HandoffWeights;
use crate::error::{Error, Result};
use crate::pushfix::{DEFAULT_EPS, DEFAULT_FP_TOL, DEFAULT_HORIZON};

use super::tune::{TuneRule, TuneSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Fig1Hybrid,
    Fig2Contraction,
    Fig3Case1,
    Fig4Case1Sweep,
    Fig5Case2,
    Fig6Case2Sweep,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Fig1Hybrid,
        Scenario::Fig2Contraction,
        Scenario::Fig3Case1,
        Scenario::Fig4Case1Sweep,
        Scenario::Fig5Case2,
        Scenario::Fig6Case2Sweep,
        Scenario::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig1Hybrid => "fig1_hybrid",
            Scenario::Fig2Contraction => "fig2_contraction",
            Scenario::Fig3Case1 => "fig3_case1",
            Scenario::Fig4Case1Sweep => "fig4_case1_sweep",
            Scenario::Fig5Case2 => "fig5_case2",
            Scenario::Fig6Case2Sweep => "fig6_case2_sweep",
            Scenario::Custom => "custom",
        }
    }

    /// `fig1` .. `fig6`.
    pub fn from_short(s: &str) -> Option<Self> {
        Some(match s {
            "fig1" => Scenario::Fig1Hybrid,
            "fig2" => Scenario::Fig2Contraction,
            "fig3" => Scenario::Fig3Case1,
            "fig4" => Scenario::Fig4Case1Sweep,
            "fig5" => Scenario::Fig5Case2,
            "fig6" => Scenario::Fig6Case2Sweep,
            _ => return None,
        })
    }
}

/// Artifacts a scenario can emit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    /// `alpha,lipschitz,contraction_envelope` over `(0, 2α₀]`.
    ContractionSweep,
    /// Gradient-push at `α₀` against the fixed point: `t,w_fp_err`.
    FixedPointRun,
    /// `alpha,fp_to_opt_err,thm26_bound` over `(0, α₀]`.
    AlphaSweep,
    /// One gradient-push trace per stepsize.
    StepsizeTraces,
    /// Gradient-push, Push-DIGing and hybrid traces.
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub n: usize,
    pub p: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self { n: 20, p: 0.7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostSpec {
    Case1 { d: usize, m: usize, delta_reg: f64 },
    Case2 { d: usize, m_rank: usize },
}

impl CostSpec {
    pub fn case1_default() -> Self {
        CostSpec::Case1 {
            d: 3,
            m: 4,
            delta_reg: 2.0,
        }
    }

    pub fn case2_default() -> Self {
        CostSpec::Case2 { d: 10, m_rank: 4 }
    }

    /// The regression problem of the hybrid comparison.
    pub fn hybrid_default() -> Self {
        CostSpec::Case1 {
            d: 10,
            m: 10,
            delta_reg: 0.1,
        }
    }
}

/// A stepsize given directly or relative to the instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepChoice {
    Absolute(f64),
    Multiplier(f64),
    /// Result of the Push-DIGing grid search.
    Tuned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeSpec {
    /// Multiples of `α₀`.
    Multipliers(Vec<f64>),
    Absolute(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Zero,
    /// Entries uniform on `[0, 1)` from a stream derived from the seed.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridSpec {
    pub alpha_gp: StepChoice,
    pub alpha_pd: StepChoice,
    pub gp_iters: usize,
    pub total_iters: usize,
    #[serde(default)]
    pub handoff: HandoffWeights,
    pub tune: TuneSpec,
}

impl Default for HybridSpec {
    fn default() -> Self {
        Self {
            alpha_gp: StepChoice::Absolute(0.0297),
            alpha_pd: StepChoice::Absolute(0.001175),
            gp_iters: 100,
            total_iters: 500,
            handoff: HandoffWeights::Inherit,
            tune: TuneSpec {
                start: 1e-3,
                step: 5e-5,
                budget: 400,
                horizon: 500,
                rule: TuneRule::BestFinal,
            },
        }
    }
}

/// User-facing config; every field except `scenario` is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub network: Option<NetworkSpec>,
    pub costs: Option<CostSpec>,
    /// Case-2 `ε` in the stepsize ceiling.
    pub eps: Option<f64>,
    pub stepsizes: Option<StepsizeSpec>,
    pub iterations: Option<usize>,
    pub sweep_points: Option<usize>,
    pub fp_tol: Option<f64>,
    pub consensus_horizon: Option<usize>,
    pub plateau_window: Option<usize>,
    pub init: Option<InitSpec>,
    pub hybrid: Option<HybridSpec>,
    pub outputs: Option<Vec<Output>>,
    pub out_dir: Option<PathBuf>,
}

/// A config with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub network: NetworkSpec,
    pub costs: CostSpec,
    pub eps: f64,
    pub stepsizes: StepsizeSpec,
    pub iterations: usize,
    pub sweep_points: usize,
    pub fp_tol: f64,
    pub consensus_horizon: usize,
    pub plateau_window: usize,
    pub init: InitSpec,
    pub hybrid: HybridSpec,
    pub outputs: Vec<Output>,
}

pub const DEFAULT_SEED: u64 = 1;

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            scenario: Some(scenario),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let scenario = self.scenario.unwrap_or(Scenario::Custom);
        use Scenario::*;
        let default_costs = match scenario {
            Fig1Hybrid => CostSpec::hybrid_default(),
            Fig5Case2 | Fig6Case2Sweep => CostSpec::case2_default(),
            _ => CostSpec::case1_default(),
        };
        let costs = self.costs.unwrap_or(default_costs);
        let is_case2 = matches!(costs, CostSpec::Case2 { .. });
        let super_critical = if is_case2 { 1.45 } else { 1.3 };
        let default_outputs = match scenario {
            Fig1Hybrid => vec![Output::Hybrid],
            Fig2Contraction => vec![Output::ContractionSweep],
            Fig3Case1 | Fig5Case2 => vec![Output::FixedPointRun, Output::AlphaSweep],
            Fig4Case1Sweep | Fig6Case2Sweep => vec![Output::StepsizeTraces],
            Custom => vec![
                Output::ContractionSweep,
                Output::FixedPointRun,
                Output::AlphaSweep,
                Output::StepsizeTraces,
            ],
        };
        let default_iters = match scenario {
            Fig6Case2Sweep => 4000,
            _ => 1000,
        };
        let default_points = match scenario {
            Fig2Contraction => 200,
            _ => 40,
        };
        let r = ResolvedConfig {
            scenario,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            network: self.network.unwrap_or_default(),
            costs,
            eps: self.eps.unwrap_or(DEFAULT_EPS),
            stepsizes: self
                .stepsizes
                .clone()
                .unwrap_or(StepsizeSpec::Multipliers(vec![0.2, 0.5, 1.0, super_critical])),
            iterations: self.iterations.unwrap_or(default_iters),
            sweep_points: self.sweep_points.unwrap_or(default_points),
            fp_tol: self.fp_tol.unwrap_or(DEFAULT_FP_TOL),
            consensus_horizon: self.consensus_horizon.unwrap_or(DEFAULT_HORIZON),
            plateau_window: self.plateau_window.unwrap_or(50),
            init: self.init.unwrap_or(InitSpec::Zero),
            hybrid: self.hybrid.unwrap_or_default(),
            outputs: self.outputs.clone().unwrap_or(default_outputs),
        };
        r.validate()?;
        Ok(r)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.network.n == 0 || !(self.network.p > 0.0 && self.network.p <= 1.0) {
            return bad(format!(
                "network needs n >= 1 and 0 < p <= 1 (got n={}, p={})",
                self.network.n, self.network.p
            ));
        }
        match self.costs {
            CostSpec::Case1 { d, m, delta_reg } => {
                if d == 0 || m == 0 || !(delta_reg > 0.0) {
                    return bad("case1 needs d, m >= 1 and delta_reg > 0".into());
                }
            }
            CostSpec::Case2 { d, m_rank } => {
                if m_rank == 0 || m_rank >= d {
                    return bad("case2 needs 1 <= m_rank < d".into());
                }
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        let (StepsizeSpec::Multipliers(v) | StepsizeSpec::Absolute(v)) = &self.stepsizes;
        if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return bad("stepsizes must be a non-empty list of positive numbers".into());
        }
        if self.iterations == 0 || self.sweep_points == 0 || self.plateau_window == 0 {
            return bad("iterations, sweep_points and plateau_window must be positive".into());
        }
        if self.consensus_horizon == 0 || !(self.fp_tol > 0.0) {
            return bad("consensus_horizon and fp_tol must be positive".into());
        }
        for choice in [self.hybrid.alpha_gp, self.hybrid.alpha_pd] {
            if let StepChoice::Absolute(a) | StepChoice::Multiplier(a) = choice {
                if !(a > 0.0 && a.is_finite()) {
                    return bad(format!("hybrid stepsize {a} must be positive"));
                }
            }
        }
        if self.hybrid.gp_iters > self.hybrid.total_iters {
            return bad("hybrid.gp_iters exceeds hybrid.total_iters".into());
        }
        self.hybrid.tune.validate()?;
        if self.outputs.is_empty() {
            return bad("outputs must not be empty".into());
        }
        Ok(())
    }
}
