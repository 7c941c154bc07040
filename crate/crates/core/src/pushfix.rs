//! The deterministic operator `T_α` behind gradient-push and everything
//! derived from it: fixed points, stepsize ceiling `α₀`, contraction rate
//! `C`, and the error bounds used to certify runs.
//!
//! Gradient-push written in terms of `w(t)` alone reads
//! `w(t+1) = T_α(w(t)) + α P_t(w(t))`, where `T_α` freezes the push-sum
//! weights at their limit `y_j = nπ_j` and `P_t` is the perturbation caused
//! by `y(t)` not having converged yet.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::costs::{CaseTag, CostEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{
    induced_pi_norm_blocks, pi_norm, pi_norm_scalar, BlockOperator, StackedVector,
};
use crate::mixing::MixingNetwork;

/// Default `ε` in the case-2 stepsize ceiling.
pub const DEFAULT_EPS: f64 = 0.01;
/// Default push-sum horizon for [`estimate_consensus_constants`].
pub const DEFAULT_HORIZON: usize = 500;
/// Default a-posteriori tolerance of [`fixed_point`].
pub const DEFAULT_FP_TOL: f64 = 1e-13;
pub const FP_MAX_ITERS: usize = 1_000_000;
/// Relative rounding floor of `|1/y_j(t) − 1/(nπ_j)|`. Deviations below
/// this times `max(1, max_j 1/(nπ_j))` are noise and do not enter `a`.
pub const CONSENSUS_FLOOR: f64 = 1e-13;
/// `|1 − Cα − ρ|` below which the resonant remainder branch is used.
pub const RESONANCE_TOL: f64 = 1e-12;

/// A network, an ensemble and a stepsize.
#[derive(Clone, Copy, Debug)]
pub struct OperatorContext<'a> {
    pub net: &'a MixingNetwork,
    pub ensemble: &'a CostEnsemble,
    pub alpha: f64,
}

impl<'a> OperatorContext<'a> {
    pub fn new(net: &'a MixingNetwork, ensemble: &'a CostEnsemble, alpha: f64) -> Result<Self> {
        if net.n() != ensemble.n() {
            return Err(Error::DimensionMismatch {
                expected: net.n(),
                found: ensemble.n(),
            });
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("stepsize {alpha} must be nonnegative")));
        }
        Ok(Self {
            net,
            ensemble,
            alpha,
        })
    }

    pub fn n(&self) -> usize {
        self.net.n()
    }

    pub fn d(&self) -> usize {
        self.ensemble.dim()
    }

    fn check(&self, w: &StackedVector) -> Result<()> {
        if w.blocks() != self.n() || w.block_dim() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.n() * self.d(),
                found: w.blocks() * w.block_dim(),
            });
        }
        Ok(())
    }
}

/// Block `k` is `Σ_j W_kj w_j`.
pub fn apply_j(net: &MixingNetwork, w: &StackedVector) -> Result<StackedVector> {
    if w.blocks() != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            found: w.blocks(),
        });
    }
    Ok(mix(net.weights(), w))
}

pub(crate) fn mix(wm: &DMatrix<f64>, w: &StackedVector) -> StackedVector {
    let (n, d) = (w.blocks(), w.block_dim());
    let mut out = StackedVector::zeros(n, d);
    for k in 0..n {
        let dst = out.block_mut(k);
        for j in 0..n {
            let c = wm[(k, j)];
            if c != 0.0 {
                for (o, x) in dst.iter_mut().zip(w.block(j)) {
                    *o += c * x;
                }
            }
        }
    }
    out
}

/// Applies `u_j = g(j, w_j)` blockwise, then mixes.
fn mix_after(
    ctx: &OperatorContext,
    w: &StackedVector,
    mut g: impl FnMut(usize, &[f64], &mut [f64]),
) -> StackedVector {
    let (n, d) = (ctx.n(), ctx.d());
    let mut u = StackedVector::zeros(n, d);
    for j in 0..n {
        g(j, w.block(j), u.block_mut(j));
    }
    mix(ctx.net.weights(), &u)
}

/// `w_j − α ∇f_j(w_j / s_j)` into `out`.
fn gradient_step(ctx: &OperatorContext, j: usize, s: f64, wj: &[f64], out: &mut [f64]) {
    let arg: Vec<f64> = wj.iter().map(|x| x / s).collect();
    ctx.ensemble.cost(j).gradient_into(&arg, out);
    for (o, x) in out.iter_mut().zip(wj) {
        *o = x - ctx.alpha * *o;
    }
}

/// Block `k` is `Σ_j W_kj (w_j − α ∇f_j(w_j / (nπ_j)))`.
pub fn apply_t_alpha(ctx: &OperatorContext, w: &StackedVector) -> Result<StackedVector> {
    ctx.check(w)?;
    let n = ctx.n() as f64;
    let pi = ctx.net.pi();
    Ok(mix_after(ctx, w, |j, wj, out| gradient_step(ctx, j, n * pi[j], wj, out)))
}

fn check_y(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if let Some((index, &value)) = y.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonpositiveY { index, value });
    }
    Ok(())
}

/// Block `k` is `Σ_j W_kj (∇f_j(w_j/(nπ_j)) − ∇f_j(w_j/y_j))`.
pub fn apply_p_t(ctx: &OperatorContext, y: &[f64], w: &StackedVector) -> Result<StackedVector> {
    ctx.check(w)?;
    check_y(y, ctx.n())?;
    let n = ctx.n() as f64;
    let pi = ctx.net.pi();
    let d = ctx.d();
    let mut tmp = vec![0.0; d];
    Ok(mix_after(ctx, w, |j, wj, out| {
        let cost = ctx.ensemble.cost(j);
        let a: Vec<f64> = wj.iter().map(|x| x / (n * pi[j])).collect();
        let b: Vec<f64> = wj.iter().map(|x| x / y[j]).collect();
        cost.gradient_into(&a, out);
        cost.gradient_into(&b, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o -= t;
        }
    }))
}

/// One step of gradient-push in `w` form:
/// `w_k(t+1) = Σ_j W_kj (w_j(t) − α ∇f_j(w_j(t)/y_j(t)))`.
pub fn w_recursion_step(ctx: &OperatorContext, y: &[f64], w: &StackedVector) -> Result<StackedVector> {
    ctx.check(w)?;
    check_y(y, ctx.n())?;
    Ok(mix_after(ctx, w, |j, wj, out| gradient_step(ctx, j, y[j], wj, out)))
}

/// `w − (W^∞ ⊗ I_d) w`; block `k` is `w_k − π_k Σ_j w_j`.
pub fn consensus_deviation(net: &MixingNetwork, w: &StackedVector) -> Result<StackedVector> {
    if w.blocks() != net.n() {
        return Err(Error::DimensionMismatch {
            expected: net.n(),
            found: w.blocks(),
        });
    }
    let total: Vec<f64> = w.block_mean().iter().map(|m| m * net.n() as f64).collect();
    let avg = StackedVector::outer(net.pi(), &total);
    w.sub(&avg)
}

/// `nπ ⊗ x`: block `k` is `nπ_k x`.
pub fn scaled_consensus(net: &MixingNetwork, x: &[f64]) -> StackedVector {
    let n = net.n() as f64;
    let coeffs: Vec<f64> = net.pi().iter().map(|p| n * p).collect();
    StackedVector::outer(&coeffs, x)
}

/// Stepsize ceiling: `min_k 2nπ_k/(L_k+μ_k)` for case 1, `min_k
/// 2nπ_k/(L_k+ε)` for case 2.
pub fn alpha0(net: &MixingNetwork, ensemble: &CostEnsemble, eps: f64) -> f64 {
    let n = net.n() as f64;
    net.pi()
        .iter()
        .zip(ensemble.costs())
        .map(|(p, c)| {
            let denom = match ensemble.case_tag() {
                CaseTag::Case1 => c.smoothness() + c.strong_convexity(),
                CaseTag::Case2 => c.smoothness() + eps,
            };
            2.0 * n * p / denom
        })
        .fold(f64::INFINITY, f64::min)
}

/// The matrix whose `π ⊗ 1_d` operator norm is the Lipschitz constant of
/// `T_α`: block `(k, j)` is `W_kj (I − (α/(nπ_j)) H_j)`.
pub fn m_alpha(ctx: &OperatorContext) -> BlockOperator {
    let (n, d) = (ctx.n(), ctx.d());
    let nf = n as f64;
    let pi = ctx.net.pi();
    let inner: Vec<DMatrix<f64>> = (0..n)
        .map(|j| {
            DMatrix::identity(d, d) - ctx.ensemble.cost(j).hessian() * (ctx.alpha / (nf * pi[j]))
        })
        .collect();
    let w = ctx.net.weights();
    let blocks = (0..n * n)
        .map(|idx| &inner[idx % n] * w[(idx / n, idx % n)])
        .collect();
    BlockOperator::new(n, d, blocks).expect("block shapes are consistent")
}

/// Measured Lipschitz constant of `T_α` in the `π ⊗ 1_d` norm.
pub fn lipschitz_constant(ctx: &OperatorContext) -> Result<f64> {
    induced_pi_norm_blocks(&m_alpha(ctx), ctx.net.pi())
}

/// `(α₀, C, η_ε)`. For case 2, `η_ε` is the measured Lipschitz constant at
/// `α₀` and `C = (1 − η_ε)/α₀`.
pub fn contraction_constant(
    net: &MixingNetwork,
    ensemble: &CostEnsemble,
    eps: f64,
) -> Result<(f64, f64, Option<f64>)> {
    let a0 = alpha0(net, ensemble, eps);
    let n = net.n() as f64;
    match ensemble.case_tag() {
        CaseTag::Case1 => {
            let c = net
                .pi()
                .iter()
                .zip(ensemble.costs())
                .map(|(p, k)| {
                    let (l, mu) = (k.smoothness(), k.strong_convexity());
                    mu * l / (n * p * (mu + l))
                })
                .fold(f64::INFINITY, f64::min);
            Ok((a0, c, None))
        }
        CaseTag::Case2 => {
            let eta = lipschitz_constant(&OperatorContext::new(net, ensemble, a0)?)?;
            if !(eta < 1.0) {
                return Err(Error::NotContractive { eta });
            }
            Ok((a0, (1.0 - eta) / a0, Some(eta)))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub alpha: f64,
    pub w_alpha: StackedVector,
    /// Block average `(1/n) Σ_k w_k^α`.
    pub w_bar: Vec<f64>,
    /// `‖T_α(w^α) − w^α‖`.
    pub residual: f64,
    /// `‖w^α − (W^∞ ⊗ I_d) w^α‖`.
    pub consensus_error: f64,
    /// Lipschitz constant used in the stopping rule.
    pub lipschitz: f64,
    /// Guaranteed upper bound on the distance to the exact fixed point.
    pub distance_bound: f64,
    pub iterations: usize,
}

impl FixedPoint {
    /// `‖w^α − nπ ⊗ x‖`.
    pub fn distance_to(&self, net: &MixingNetwork, x: &[f64]) -> Result<f64> {
        pi_norm(&self.w_alpha.sub(&scaled_consensus(net, x))?, net.pi())
    }
}

/// Picard iteration `w ← T_α(w)` from zero.
///
/// Stops once `‖Δ‖ L/(1−L) ≤ tol`, which bounds the distance to the exact
/// fixed point. If the increments reach the rounding floor first, the
/// iteration stops there and `distance_bound` records the weaker guarantee.
pub fn fixed_point(ctx: &OperatorContext, tol: f64) -> Result<FixedPoint> {
    let lip = lipschitz_constant(ctx)?;
    fixed_point_with_lipschitz(ctx, tol, lip)
}

pub fn fixed_point_with_lipschitz(ctx: &OperatorContext, tol: f64, lip: f64) -> Result<FixedPoint> {
    if !(lip < 1.0) {
        return Err(Error::NotContractive { eta: lip });
    }
    let pi = ctx.net.pi();
    let factor = lip / (1.0 - lip);
    let mut w = StackedVector::zeros(ctx.n(), ctx.d());
    let mut stalled = 0;
    for it in 1..=FP_MAX_ITERS {
        let next = apply_t_alpha(ctx, &w)?;
        if !next.is_finite() {
            return Err(Error::NonFinite);
        }
        let step = pi_norm(&next.sub(&w)?, pi)?;
        let bound = step * factor;
        let floor = 16.0 * f64::EPSILON * pi_norm(&next, pi)?;
        w = next;
        if bound <= tol {
            return finish_fixed_point(ctx, w, lip, bound, it);
        }
        if step <= floor {
            stalled += 1;
            if stalled >= 20 {
                return finish_fixed_point(ctx, w, lip, bound.max(tol), it);
            }
        } else {
            stalled = 0;
        }
    }
    Err(Error::NoConvergence {
        what: "Picard iteration",
        iterations: FP_MAX_ITERS,
    })
}

fn finish_fixed_point(
    ctx: &OperatorContext,
    w: StackedVector,
    lip: f64,
    distance_bound: f64,
    iterations: usize,
) -> Result<FixedPoint> {
    let pi = ctx.net.pi();
    let residual = pi_norm(&apply_t_alpha(ctx, &w)?.sub(&w)?, pi)?;
    let consensus_error = pi_norm(&consensus_deviation(ctx.net, &w)?, pi)?;
    Ok(FixedPoint {
        alpha: ctx.alpha,
        w_bar: w.block_mean(),
        w_alpha: w,
        residual,
        consensus_error,
        lipschitz: lip,
        distance_bound,
        iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsensusConstants {
    /// Smallest `a` with `|1/y_j(t) − 1/(nπ_j)| ≤ a ρᵗ` up to the
    /// effective horizon.
    pub a_hat: f64,
    /// `max_t max_i 1/y_i(t)` over the full horizon.
    pub delta_push: f64,
    pub horizon: usize,
    /// First `t` at which the deviation fell to `floor`; later steps are
    /// rounding noise and do not enter `a_hat`.
    pub effective_horizon: usize,
    /// Absolute rounding floor of the deviation for this network.
    pub floor: f64,
    /// `a_hat ρᵗ` at the start of the last 10 steps of the horizon.
    pub tail_bound: f64,
}

impl ConsensusConstants {
    /// The bound's contribution over the last 10 steps is below `1e-14`.
    pub fn tail_negligible(&self) -> bool {
        self.tail_bound < 1e-14
    }
}

/// Runs `y(t+1) = W y(t)` from `y(0) = 1` and records the empirical
/// constants of the push-sum convergence `1/y_j(t) → 1/(nπ_j)`.
///
/// Once the deviation reaches the rounding floor, dividing by `ρᵗ` only
/// amplifies noise, so `a_hat` uses the steps before that point.
pub fn estimate_consensus_constants(net: &MixingNetwork, horizon: usize) -> Result<ConsensusConstants> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let n = net.n();
    let nf = n as f64;
    let w = net.weights();
    let pi = net.pi();
    let rho = net.rho();
    let mut y = vec![1.0; n];
    let mut a_hat: f64 = 0.0;
    let mut delta_push: f64 = 0.0;
    let mut effective_horizon = None;
    let scale = pi.iter().map(|p| 1.0 / (nf * p)).fold(1.0, f64::max);
    let floor = CONSENSUS_FLOOR * scale;
    for t in 0..=horizon {
        if t > 0 {
            y = (0..n).map(|i| (0..n).map(|j| w[(i, j)] * y[j]).sum()).collect();
        }
        check_y(&y, n)?;
        let mut dev: f64 = 0.0;
        for (yj, pj) in y.iter().zip(pi.iter()) {
            dev = dev.max((1.0 / yj - 1.0 / (nf * pj)).abs());
            delta_push = delta_push.max(1.0 / yj);
        }
        if effective_horizon.is_none() {
            if dev <= floor {
                effective_horizon = Some(t);
            } else {
                let rt = rho.powi(t as i32);
                if !(rt > 0.0) {
                    return Err(Error::NotApplicable(
                        "push-sum deviation persists although ρ = 0",
                    ));
                }
                a_hat = a_hat.max(dev / rt);
            }
        }
    }
    let tail_t = horizon.saturating_sub(9) as i32;
    Ok(ConsensusConstants {
        a_hat,
        delta_push,
        horizon,
        effective_horizon: effective_horizon.unwrap_or(horizon),
        floor,
        tail_bound: a_hat * rho.powi(tail_t),
    })
}

/// `Π_{j≥0} (1 + α b ρʲ/(1 − Cα))`, truncated once a factor's excess over
/// one drops below `1e-16`.
pub fn v_alpha(alpha: f64, b_hat: f64, c: f64, rho: f64) -> Result<f64> {
    let rate = c * alpha;
    if !(rate < 1.0) {
        return Err(Error::InvalidRate { c_alpha: rate });
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::invalid(format!("ρ = {rho} outside [0, 1)")));
    }
    let lead = alpha * b_hat / (1.0 - rate);
    let mut log_sum = 0.0;
    let mut excess = lead;
    while excess >= 1e-16 {
        log_sum += excess.ln_1p();
        excess *= rho;
    }
    Ok(log_sum.exp())
}

/// Closed-form cap `exp(α₀ b/((1 − Cα₀)(1 − ρ)))` on `V_α` for `α ≤ α₀`.
pub fn v_alpha_cap(alpha0: f64, b_hat: f64, c: f64, rho: f64) -> f64 {
    (alpha0 * b_hat / ((1.0 - c * alpha0) * (1.0 - rho))).exp()
}

/// Scalars entering the convergence envelope of gradient-push.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub alpha: f64,
    pub c: f64,
    pub b_hat: f64,
    pub rho: f64,
    pub v_alpha: f64,
    pub r: f64,
}

/// `V_α (1−Cα)^{t+1} e₀ + R(t)`: bound on `‖w(t+1) − w^α‖` given
/// `e₀ = ‖w(0) − w^α‖`.
pub fn thm25_envelope(p: &EnvelopeParams, w0_err: f64, t: u32) -> f64 {
    let q = 1.0 - p.c * p.alpha;
    let ti = t as i32;
    let abr = p.alpha * p.b_hat * p.r;
    let rho_t = p.rho.powi(ti);
    let remainder = if (q - p.rho).abs() <= RESONANCE_TOL {
        t as f64 * p.v_alpha * abr * rho_t + abr * rho_t
    } else {
        abr * p.v_alpha * q / (q - p.rho) * (q.powi(ti) - rho_t) + abr * rho_t
    };
    p.v_alpha * q.powi(ti + 1) * w0_err + remainder
}

/// `(αρ/(1−ρ)) (L R/(nπ_min) + Q)`: bound on the consensus error of `w^α`.
pub fn consensus_error_bound(alpha: f64, s: &BoundScalars) -> f64 {
    alpha * s.rho / (1.0 - s.rho) * (s.l_max * s.r / (s.n as f64 * s.pi_min) + s.q)
}

/// `(αρ/(1−ρ)) (1 + (L/γ)√(Σ1/π_k)) (L R/(nπ_min) + Q)` with
/// `γ = L̄μ/(L̄+μ)`: bound on `‖w^α − nπ ⊗ x_*‖`.
pub fn thm26_bound(alpha: f64, s: &BoundScalars) -> f64 {
    let gamma = s.gamma_thm26();
    (1.0 + s.l_max / gamma * s.pi_inv_sum.sqrt()) * consensus_error_bound(alpha, s)
}

/// Network and ensemble scalars shared by the neighbourhood bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundScalars {
    pub n: usize,
    pub rho: f64,
    pub pi_min: f64,
    /// `Σ_k 1/π_k`.
    pub pi_inv_sum: f64,
    /// `‖1_n − nπ‖_π`.
    pub one_minus_npi: f64,
    pub l_max: f64,
    pub l_bar: f64,
    pub mu_agg: f64,
    /// `‖∇F(0)‖`.
    pub q: f64,
    /// `‖J(∇F(0))‖ / C`.
    pub r: f64,
}

impl BoundScalars {
    pub fn new(net: &MixingNetwork, ensemble: &CostEnsemble, c: f64) -> Result<Self> {
        let pi = net.pi();
        let n = net.n();
        let g0 = ensemble.grad_at_zero();
        let ones_dev: Vec<f64> = pi.iter().map(|p| 1.0 - n as f64 * p).collect();
        Ok(Self {
            n,
            rho: net.rho(),
            pi_min: net.pi_min(),
            pi_inv_sum: pi.inverse_sum(),
            one_minus_npi: pi_norm_scalar(&ones_dev, pi)?,
            l_max: ensemble.l_max(),
            l_bar: ensemble.l_bar(),
            mu_agg: ensemble.mu_agg(),
            q: pi_norm(&g0, pi)?,
            r: pi_norm(&apply_j(net, &g0)?, pi)? / c,
        })
    }

    pub fn gamma_thm26(&self) -> f64 {
        self.l_bar * self.mu_agg / (self.l_bar + self.mu_agg)
    }

    /// `βL/(β+L)` with `β = μ_agg`, `L = L_max`.
    pub fn gamma_legacy(&self) -> f64 {
        self.mu_agg * self.l_max / (self.mu_agg + self.l_max)
    }
}

/// The older stepsize threshold `Q`, and the cap
/// `nβ(1−ρ)/(4L²ρδ√(Σ1/π))` that shows it is `O(1/L²)`.
pub fn legacy_q(s: &BoundScalars, delta_push: f64) -> Result<(f64, f64)> {
    if s.rho == 0.0 {
        return Err(Error::NotApplicable("legacy threshold is undefined for ρ = 0"));
    }
    let (l, rho, n) = (s.l_max, s.rho, s.n as f64);
    let q = n * s.gamma_legacy() / (4.0 * l * delta_push);
    let root = s.pi_inv_sum.sqrt();
    let threshold =
        q * (1.0 - rho) / (l * rho * (delta_push * q + delta_push * s.one_minus_npi + root));
    let cap = n * s.mu_agg * (1.0 - rho) / (4.0 * l * l * rho * delta_push * root);
    Ok((threshold, cap))
}

/// Every certified constant for one instance, evaluated at one stepsize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub case_tag: CaseTag,
    pub eps: f64,
    pub alpha0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    /// Measured Lipschitz constant of `T_{α₀}` (case 2 only).
    pub eta_eps: Option<f64>,
    pub alpha: f64,
    /// Measured Lipschitz constant of `T_α`.
    pub lipschitz_alpha: f64,
    pub a_hat: f64,
    pub b_hat: f64,
    pub delta_push: f64,
    pub consensus: ConsensusConstants,
    #[serde(rename = "V_alpha")]
    pub v_alpha: f64,
    #[serde(rename = "V_alpha_cap")]
    pub v_alpha_cap: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub gamma_thm26: f64,
    pub gamma_legacy: f64,
    pub thm26_bound: f64,
    pub consensus_bound: f64,
    /// `None` when `ρ = 0`.
    #[serde(rename = "Q_legacy")]
    pub q_legacy: Option<f64>,
    #[serde(rename = "Q_legacy_cap")]
    pub q_legacy_cap: Option<f64>,
    pub scalars: BoundScalars,
}

/// Certificate at `α = α₀`.
pub fn certify(
    net: &MixingNetwork,
    ensemble: &CostEnsemble,
    eps: f64,
    horizon: usize,
) -> Result<ContractionCertificate> {
    let (a0, c, eta) = contraction_constant(net, ensemble, eps)?;
    let consensus = estimate_consensus_constants(net, horizon)?;
    let scalars = BoundScalars::new(net, ensemble, c)?;
    let b_hat = consensus.a_hat * ensemble.l_max();
    let (q_legacy, q_legacy_cap) = match legacy_q(&scalars, consensus.delta_push) {
        Ok((q, cap)) => (Some(q), Some(cap)),
        Err(Error::NotApplicable(_)) => (None, None),
        Err(e) => return Err(e),
    };
    let lipschitz_alpha = match eta {
        Some(e) => e,
        None => lipschitz_constant(&OperatorContext::new(net, ensemble, a0)?)?,
    };
    Ok(ContractionCertificate {
        case_tag: ensemble.case_tag(),
        eps,
        alpha0: a0,
        c,
        eta_eps: eta,
        alpha: a0,
        lipschitz_alpha,
        a_hat: consensus.a_hat,
        b_hat,
        delta_push: consensus.delta_push,
        consensus,
        v_alpha: v_alpha(a0, b_hat, c, scalars.rho)?,
        v_alpha_cap: v_alpha_cap(a0, b_hat, c, scalars.rho),
        r: scalars.r,
        q: scalars.q,
        gamma_thm26: scalars.gamma_thm26(),
        gamma_legacy: scalars.gamma_legacy(),
        thm26_bound: thm26_bound(a0, &scalars),
        consensus_bound: consensus_error_bound(a0, &scalars),
        q_legacy,
        q_legacy_cap,
        scalars,
    })
}

impl ContractionCertificate {
    /// The same certificate re-evaluated at another stepsize.
    pub fn at_alpha(&self, net: &MixingNetwork, ensemble: &CostEnsemble, alpha: f64) -> Result<Self> {
        let lipschitz_alpha = lipschitz_constant(&OperatorContext::new(net, ensemble, alpha)?)?;
        Ok(Self {
            alpha,
            lipschitz_alpha,
            v_alpha: v_alpha(alpha, self.b_hat, self.c, self.scalars.rho)?,
            thm26_bound: thm26_bound(alpha, &self.scalars),
            consensus_bound: consensus_error_bound(alpha, &self.scalars),
            ..self.clone()
        })
    }

    pub fn envelope_params(&self) -> EnvelopeParams {
        EnvelopeParams {
            alpha: self.alpha,
            c: self.c,
            b_hat: self.b_hat,
            rho: self.scalars.rho,
            v_alpha: self.v_alpha,
            r: self.r,
        }
    }

    pub fn envelope(&self, w0_err: f64, t: u32) -> f64 {
        thm25_envelope(&self.envelope_params(), w0_err, t)
    }

    /// `1 − Cα` at the certificate's stepsize.
    pub fn rate(&self) -> f64 {
        1.0 - self.c * self.alpha
    }
}
