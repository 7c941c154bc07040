//! Gradient-push, Push-DIGing and the hybrid schedule that warm-starts
//! Push-DIGing with gradient-push.
//!
//! All agents update synchronously from the previous round's values. A run
//! stops early, with the divergence flag set, as soon as any block norm
//! exceeds [`DIVERGENCE_THRESHOLD`] or becomes non-finite.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::costs::CostEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{norm, pi_norm, StackedVector};
use crate::mixing::MixingNetwork;
use crate::pushfix::{mix, scaled_consensus};

pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

fn check_dims(net: &MixingNetwork, ens: &CostEnsemble, v: &StackedVector) -> Result<()> {
    if net.n() != ens.n() || v.blocks() != net.n() || v.block_dim() != ens.dim() {
        return Err(Error::DimensionMismatch {
            expected: net.n() * ens.dim(),
            found: v.blocks() * v.block_dim(),
        });
    }
    Ok(())
}

fn blows_up(v: &StackedVector) -> bool {
    v.iter_blocks().any(|b| {
        let s = norm(b);
        !(s <= DIVERGENCE_THRESHOLD)
    })
}

fn local_gradients(ens: &CostEnsemble, z: &StackedVector) -> StackedVector {
    let mut g = StackedVector::zeros(z.blocks(), z.block_dim());
    for k in 0..z.blocks() {
        ens.cost(k).gradient_into(z.block(k), g.block_mut(k));
    }
    g
}

fn divide_blocks(w: &StackedVector, y: &[f64]) -> StackedVector {
    let mut z = w.clone();
    for (k, &yk) in y.iter().enumerate() {
        z.block_mut(k).iter_mut().for_each(|x| *x /= yk);
    }
    z
}

fn mix_scalars(net: &MixingNetwork, y: &[f64]) -> Vec<f64> {
    let w = net.weights();
    (0..y.len())
        .map(|i| (0..y.len()).map(|j| w[(i, j)] * y[j]).sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientPushState {
    pub t: usize,
    pub x: StackedVector,
    pub w: StackedVector,
    pub z: StackedVector,
    pub y: Vec<f64>,
    pub diverged: bool,
}

impl GradientPushState {
    /// `x(0) = x0`, `y(0) = 1`; `w(0)` and `z(0)` are set to `x0`.
    pub fn new(x0: StackedVector) -> Self {
        let n = x0.blocks();
        Self {
            t: 0,
            w: x0.clone(),
            z: x0.clone(),
            x: x0,
            y: vec![1.0; n],
            diverged: false,
        }
    }
}

/// `w(t+1) = W x(t)`, `y(t+1) = W y(t)`, `z = w/y`, `x = w − α∇f(z)`.
pub fn gp_step(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    s: &GradientPushState,
) -> Result<GradientPushState> {
    check_dims(net, ens, &s.x)?;
    let w = mix(net.weights(), &s.x);
    let y = mix_scalars(net, &s.y);
    let z = divide_blocks(&w, &y);
    let g = local_gradients(ens, &z);
    let x = w.sub(&g.scaled(alpha))?;
    let diverged = s.diverged || [&x, &w, &z].into_iter().any(blows_up);
    Ok(GradientPushState {
        t: s.t + 1,
        x,
        w,
        z,
        y,
        diverged,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PushDigingState {
    pub t: usize,
    pub x: StackedVector,
    pub z: StackedVector,
    pub v: StackedVector,
    pub y: Vec<f64>,
    pub diverged: bool,
}

impl PushDigingState {
    /// `x(0) = z(0) = x0`, `y(0) = 1`, `v_i(0) = ∇f_i(z_i(0))`.
    pub fn new(ens: &CostEnsemble, x0: StackedVector) -> Self {
        let n = x0.blocks();
        Self::from_parts(ens, x0.clone(), vec![1.0; n], x0)
    }

    /// Arbitrary `(x, y, z)` with gradient tracker `v_i = ∇f_i(z_i)`.
    pub fn from_parts(ens: &CostEnsemble, x: StackedVector, y: Vec<f64>, z: StackedVector) -> Self {
        Self {
            t: 0,
            v: local_gradients(ens, &z),
            x,
            z,
            y,
            diverged: false,
        }
    }
}

/// `x = Wx − αv`, `y = Wy`, `z = x/y`, `v = Wv + ∇f(z_new) − ∇f(z_old)`.
pub fn pd_step(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    s: &PushDigingState,
) -> Result<PushDigingState> {
    check_dims(net, ens, &s.x)?;
    let x = mix(net.weights(), &s.x).sub(&s.v.scaled(alpha))?;
    let y = mix_scalars(net, &s.y);
    let z = divide_blocks(&x, &y);
    let v = mix(net.weights(), &s.v)
        .add(&local_gradients(ens, &z))?
        .sub(&local_gradients(ens, &s.z))?;
    let diverged = s.diverged || [&x, &z, &v].into_iter().any(blows_up);
    Ok(PushDigingState {
        t: s.t + 1,
        x,
        z,
        v,
        y,
        diverged,
    })
}

/// Reference points for trace metrics.
#[derive(Clone, Debug)]
pub struct References {
    pub x_star: Vec<f64>,
    pub w_alpha: Option<StackedVector>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Gp,
    Pd,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Gp => "gp",
            Phase::Pd => "pd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub phase: Phase,
    /// `Σ_k ‖z_k(t) − x_*‖`.
    pub sum_z_err: f64,
    /// `‖w(t) − w^α‖`, when a fixed point was supplied.
    pub w_fp_err: Option<f64>,
    /// `‖w(t) − nπ ⊗ x_*‖`.
    pub w_opt_err: f64,
    pub diverged: bool,
}

/// Per-iteration metrics of one run. For Push-DIGing the `w` columns are
/// measured on `x`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_HEADER: &str = "t,phase,sum_z_err,w_fp_err,w_opt_err,diverged";

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn diverged(&self) -> bool {
        self.records.iter().any(|r| r.diverged)
    }

    /// Final `sum_z_err`, or `+∞` for a diverged or empty run.
    pub fn final_sum_z_err(&self) -> f64 {
        match self.last() {
            Some(r) if !r.diverged && r.sum_z_err.is_finite() => r.sum_z_err,
            _ => f64::INFINITY,
        }
    }

    /// Mean `w_opt_err` over the last `k` records.
    pub fn plateau(&self, k: usize) -> f64 {
        let tail = &self.records[self.records.len().saturating_sub(k)..];
        tail.iter().map(|r| r.w_opt_err).sum::<f64>() / tail.len().max(1) as f64
    }

    /// First `t` with `sum_z_err ≤ tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.sum_z_err <= tol).map(|r| r.t)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for r in &self.records {
            let fp = r.w_fp_err.map(fmt_float).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                r.phase.as_str(),
                fmt_float(r.sum_z_err),
                fp,
                fmt_float(r.w_opt_err),
                u8::from(r.diverged)
            );
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn record(
    net: &MixingNetwork,
    refs: &References,
    t: usize,
    phase: Phase,
    w: &StackedVector,
    z: &StackedVector,
    diverged: bool,
) -> Result<TraceRecord> {
    let pi = net.pi();
    let sum_z_err = z
        .iter_blocks()
        .map(|b| norm(&b.iter().zip(&refs.x_star).map(|(a, c)| a - c).collect::<Vec<_>>()))
        .sum();
    let w_fp_err = match &refs.w_alpha {
        Some(wa) => Some(pi_norm(&w.sub(wa)?, pi)?),
        None => None,
    };
    let w_opt_err = pi_norm(&w.sub(&scaled_consensus(net, &refs.x_star))?, pi)?;
    Ok(TraceRecord {
        t,
        phase,
        sum_z_err,
        w_fp_err,
        w_opt_err,
        diverged,
    })
}

fn check_refs(ens: &CostEnsemble, refs: &References) -> Result<()> {
    if refs.x_star.len() != ens.dim() {
        return Err(Error::DimensionMismatch {
            expected: ens.dim(),
            found: refs.x_star.len(),
        });
    }
    Ok(())
}

/// `iters` gradient-push steps from `(x0, y = 1)`; returns the trace
/// (starting with the `t = 0` record) and the final state.
pub fn gp_run_with_state(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    x0: StackedVector,
    iters: usize,
    refs: &References,
) -> Result<(RunTrace, GradientPushState)> {
    check_dims(net, ens, &x0)?;
    check_refs(ens, refs)?;
    let mut s = GradientPushState::new(x0);
    let mut trace = RunTrace::default();
    trace.records.push(record(net, refs, 0, Phase::Gp, &s.w, &s.z, false)?);
    for _ in 0..iters {
        s = gp_step(net, ens, alpha, &s)?;
        trace.records.push(record(net, refs, s.t, Phase::Gp, &s.w, &s.z, s.diverged)?);
        if s.diverged {
            break;
        }
    }
    Ok((trace, s))
}

pub fn gp_run(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    x0: StackedVector,
    iters: usize,
    refs: &References,
) -> Result<RunTrace> {
    Ok(gp_run_with_state(net, ens, alpha, x0, iters, refs)?.0)
}

/// `iters` Push-DIGing steps from `init`. Record times are offset by `t0`.
fn pd_run_offset(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    init: PushDigingState,
    iters: usize,
    refs: &References,
    t0: usize,
) -> Result<(RunTrace, PushDigingState)> {
    check_dims(net, ens, &init.x)?;
    check_refs(ens, refs)?;
    let mut s = init;
    let mut trace = RunTrace::default();
    trace
        .records
        .push(record(net, refs, t0 + s.t, Phase::Pd, &s.x, &s.z, s.diverged)?);
    for _ in 0..iters {
        if s.diverged {
            break;
        }
        s = pd_step(net, ens, alpha, &s)?;
        trace
            .records
            .push(record(net, refs, t0 + s.t, Phase::Pd, &s.x, &s.z, s.diverged)?);
    }
    Ok((trace, s))
}

pub fn pd_run(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    alpha: f64,
    init: PushDigingState,
    iters: usize,
    refs: &References,
) -> Result<RunTrace> {
    Ok(pd_run_offset(net, ens, alpha, init, iters, refs, 0)?.0)
}

/// How Push-DIGing's push-sum weights start after the hand-off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffWeights {
    /// Keep `y` from the last gradient-push iterate.
    #[default]
    Inherit,
    /// Restart from `y = 1` (then `z = x`).
    Fresh,
}

#[derive(Clone, Copy, Debug)]
pub struct HybridSchedule {
    pub alpha_gp: f64,
    pub alpha_pd: f64,
    pub gp_iters: usize,
    pub total_iters: usize,
    pub handoff: HandoffWeights,
}

/// Gradient-push for `gp_iters` steps, then Push-DIGing from
/// `x = w(gp)`, `y = y(gp)`, `z = z(gp)`, `v_i = ∇f_i(z_i)` for the rest.
pub fn hybrid_run(
    net: &MixingNetwork,
    ens: &CostEnsemble,
    schedule: &HybridSchedule,
    x0: StackedVector,
    refs: &References,
) -> Result<RunTrace> {
    let HybridSchedule {
        alpha_gp,
        alpha_pd,
        gp_iters,
        total_iters,
        handoff,
    } = *schedule;
    if gp_iters > total_iters {
        return Err(Error::invalid(format!(
            "gp_iters = {gp_iters} exceeds total_iters = {total_iters}"
        )));
    }
    if gp_iters == 0 {
        return pd_run(net, ens, alpha_pd, PushDigingState::new(ens, x0), total_iters, refs);
    }
    let (mut trace, gp) = gp_run_with_state(net, ens, alpha_gp, x0, gp_iters, refs)?;
    if gp.diverged || gp_iters == total_iters {
        return Ok(trace);
    }
    let init = match handoff {
        HandoffWeights::Inherit => PushDigingState::from_parts(ens, gp.w, gp.y, gp.z),
        HandoffWeights::Fresh => {
            let n = gp.y.len();
            PushDigingState::from_parts(ens, gp.w.clone(), vec![1.0; n], gp.w)
        }
    };
    let (pd, _) = pd_run_offset(net, ens, alpha_pd, init, total_iters - gp_iters, refs, gp_iters)?;
    // The hand-off point is already recorded by the gradient-push phase.
    trace.records.extend(pd.records.into_iter().skip(1));
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{ensemble_minimizer, make_case1_ensemble, CaseTag, LocalCost};
    use crate::mixing::{build_mixing_matrix, generate_digraph, DirectedGraph};
    use nalgebra::{DMatrix, DVector};

    fn scalar_half_square() -> (MixingNetwork, CostEnsemble) {
        let net = build_mixing_matrix(&generate_digraph(1, 0.5, 0).unwrap()).unwrap();
        let c = LocalCost::quadratic(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        (net, CostEnsemble::new(CaseTag::Case1, vec![c]).unwrap())
    }

    fn instance(seed: u64) -> (MixingNetwork, CostEnsemble, References) {
        let net = build_mixing_matrix(&generate_digraph(6, 0.5, seed).unwrap()).unwrap();
        let e = make_case1_ensemble(6, 2, 3, 1.0, seed).unwrap();
        let refs = References {
            x_star: ensemble_minimizer(&e).unwrap(),
            w_alpha: None,
        };
        (net, e, refs)
    }

    #[test]
    fn gp_hand_trace() {
        let (net, e) = scalar_half_square();
        let s0 = GradientPushState::new(StackedVector::from_vec(1, 1, vec![1.0]).unwrap());
        let s1 = gp_step(&net, &e, 1.0, &s0).unwrap();
        assert_eq!(s1.w.as_slice(), &[1.0]);
        assert_eq!(s1.y, vec![1.0]);
        assert_eq!(s1.z.as_slice(), &[1.0]);
        assert_eq!(s1.x.as_slice(), &[0.0]);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn pd_single_agent_is_gradient_descent() {
        let (net, e) = scalar_half_square();
        let mut s = PushDigingState::new(&e, StackedVector::from_vec(1, 1, vec![2.0]).unwrap());
        let mut x = 2.0;
        for _ in 0..5 {
            s = pd_step(&net, &e, 0.3, &s).unwrap();
            x -= 0.3 * x;
            assert!((s.x.as_slice()[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn doubly_stochastic_keeps_unit_weights() {
        let n = 4;
        let net =
            build_mixing_matrix(&DirectedGraph::new(n, (0..n).map(|j| ((j + 1) % n, j))).unwrap())
                .unwrap();
        let e = make_case1_ensemble(n, 2, 2, 1.0, 0).unwrap();
        let mut s = GradientPushState::new(StackedVector::zeros(n, 2));
        for _ in 0..10 {
            s = gp_step(&net, &e, 0.1, &s).unwrap();
            assert!(s.y.iter().all(|&y| y == 1.0));
            assert_eq!(s.z, s.w);
        }
    }

    #[test]
    fn zero_stepsize_reaches_push_sum_average() {
        let (net, e, refs) = instance(3);
        let x0 = StackedVector::from_vec(6, 2, (0..12).map(|i| i as f64).collect()).unwrap();
        let avg = x0.block_mean();
        let (_, s) = gp_run_with_state(&net, &e, 0.0, x0, 300, &refs).unwrap();
        for b in s.z.iter_blocks() {
            assert!((b[0] - avg[0]).abs() < 1e-10 && (b[1] - avg[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn pd_tracks_gradient_sum() {
        let (net, e, _) = instance(5);
        let x0 = StackedVector::from_vec(6, 2, (0..12).map(|i| (i as f64).sin()).collect()).unwrap();
        let mut s = PushDigingState::new(&e, x0);
        for _ in 0..50 {
            s = pd_step(&net, &e, 0.05, &s).unwrap();
            let g = local_gradients(&e, &s.z);
            let diff: f64 = (0..2)
                .map(|c| {
                    let a: f64 = s.v.iter_blocks().map(|b| b[c]).sum();
                    let b: f64 = g.iter_blocks().map(|b| b[c]).sum();
                    (a - b).abs()
                })
                .sum();
            assert!(diff < 1e-10);
        }
    }

    #[test]
    fn zero_iterations_gives_initial_record_only() {
        let (net, e, refs) = instance(1);
        let x0 = StackedVector::zeros(6, 2);
        let tr = pd_run(&net, &e, 0.1, PushDigingState::new(&e, x0), 0, &refs).unwrap();
        assert_eq!(tr.records.len(), 1);
        assert_eq!(tr.records[0].t, 0);
    }

    #[test]
    fn hybrid_degenerate_schedules() {
        let (net, e, refs) = instance(2);
        let x0 = StackedVector::zeros(6, 2);
        let sched = HybridSchedule {
            alpha_gp: 0.2,
            alpha_pd: 0.05,
            gp_iters: 0,
            total_iters: 40,
            handoff: HandoffWeights::Inherit,
        };
        let h = hybrid_run(&net, &e, &sched, x0.clone(), &refs).unwrap();
        let pd = pd_run(&net, &e, 0.05, PushDigingState::new(&e, x0.clone()), 40, &refs).unwrap();
        assert_eq!(h, pd);

        let all_gp = HybridSchedule {
            gp_iters: 40,
            ..sched
        };
        let h = hybrid_run(&net, &e, &all_gp, x0.clone(), &refs).unwrap();
        assert_eq!(h, gp_run(&net, &e, 0.2, x0.clone(), 40, &refs).unwrap());

        let mixed = HybridSchedule {
            gp_iters: 10,
            ..sched
        };
        let h = hybrid_run(&net, &e, &mixed, x0, &refs).unwrap();
        assert_eq!(h.records.len(), 41);
        assert!(h.records.windows(2).all(|p| p[1].t == p[0].t + 1));
        assert_eq!(h.records[10].phase, Phase::Gp);
        assert_eq!(h.records[11].phase, Phase::Pd);
    }

    #[test]
    fn divergence_stops_run() {
        let (net, e, refs) = instance(4);
        let x0 = StackedVector::from_vec(6, 2, vec![1.0; 12]).unwrap();
        let tr = gp_run(&net, &e, 50.0, x0, 10_000, &refs).unwrap();
        assert!(tr.diverged());
        assert!(tr.records.len() < 10_001);
        assert_eq!(tr.records.iter().filter(|r| r.diverged).count(), 1);
        assert_eq!(tr.final_sum_z_err(), f64::INFINITY);
    }

    #[test]
    fn csv_format() {
        let tr = RunTrace {
            records: vec![TraceRecord {
                t: 3,
                phase: Phase::Pd,
                sum_z_err: 0.1,
                w_fp_err: None,
                w_opt_err: 1.0,
                diverged: false,
            }],
        };
        assert_eq!(
            tr.to_csv(),
            "t,phase,sum_z_err,w_fp_err,w_opt_err,diverged\n\
             3,pd,1.0000000000000001e-1,,1.0000000000000000e0,0\n"
        );
    }
}
