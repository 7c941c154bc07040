//! Grid search for the Push-DIGing stepsize.
//!
//! The grid `start + k·step`, `k = 0..budget`, is scanned upward and the
//! scan stops at the first stepsize whose run diverges.

use serde::{Deserialize, Serialize};

use crate::algorithms::{pd_run, PushDigingState, References};
use crate::costs::CostEnsemble;
use crate::error::{Error, Result};
use crate::linalg::StackedVector;
use crate::mixing::MixingNetwork;

use super::parallel::par_map;

/// Which non-divergent grid point to return.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneRule {
    /// Smallest final `sum_z_err` (ties go to the larger stepsize).
    #[default]
    BestFinal,
    /// Largest stepsize before the first divergent one.
    LargestStable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSpec {
    pub start: f64,
    pub step: f64,
    pub budget: usize,
    pub horizon: usize,
    #[serde(default)]
    pub rule: TuneRule,
}

impl TuneSpec {
    /// The grid `10⁻³ + 5·10⁻⁶ k`.
    pub fn fine(budget: usize, horizon: usize) -> Self {
        Self {
            start: 1e-3,
            step: 5e-6,
            budget,
            horizon,
            rule: TuneRule::BestFinal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.step > 0.0) || self.budget == 0 || self.horizon == 0 {
            return Err(Error::invalid(
                "tuning grid needs positive start, step, budget and horizon",
            ));
        }
        Ok(())
    }

    pub fn grid_point(&self, k: usize) -> f64 {
        self.start + self.step * k as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub alpha: f64,
    pub final_err: f64,
    /// Grid points evaluated before the scan stopped.
    pub evaluated: usize,
}

/// A run counts as divergent when flagged, non-finite, or when it ends
/// farther from the optimum than it started.
fn final_error(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    x0: &StackedVector,
    refs: &References,
    horizon: usize,
) -> Result<Option<f64>> {
    let tr = pd_run(net, ens, alpha, PushDigingState::new(ens, x0.clone()), horizon, refs)?;
    let first = tr.records.first().map_or(f64::INFINITY, |r| r.sum_z_err);
    let last = tr.final_sum_z_err();
    Ok(if last.is_finite() && last <= first { Some(last) } else { None })
}

pub fn tune_pd_stepsize(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    x0: &StackedVector,
    refs: &References,
    spec: &TuneSpec,
) -> Result<TuneResult> {
    spec.validate()?;
    const CHUNK: usize = 32;
    let mut best: Option<TuneResult> = None;
    let mut evaluated = 0;
    let mut k0 = 0;
    'scan: while k0 < spec.budget {
        let ks: Vec<usize> = (k0..(k0 + CHUNK).min(spec.budget)).collect();
        let errs = par_map(&ks, |&k| {
            final_error(net, ens, spec.grid_point(k), x0, refs, spec.horizon)
        });
        for (&k, err) in ks.iter().zip(errs) {
            evaluated += 1;
            let Some(e) = err? else {
                break 'scan;
            };
            let alpha = spec.grid_point(k);
            let take = match (spec.rule, &best) {
                (_, None) | (TuneRule::LargestStable, _) => true,
                (TuneRule::BestFinal, Some(b)) => e <= b.final_err,
            };
            if take {
                best = Some(TuneResult {
                    alpha,
                    final_err: e,
                    evaluated: 0,
                });
            }
        }
        k0 += CHUNK;
    }
    let mut out = best.ok_or(Error::AllDiverged)?;
    out.evaluated = evaluated;
    Ok(out)
}
