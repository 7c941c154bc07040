//! Random instances and the analytical properties checked on them.
//!
//! Every check takes a [`Draw`] and returns `Err` with a description of the
//! first violated inequality. The proptest suite and the acceptance target
//! run the same functions.

#![allow(dead_code)]

pub mod oracles;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;

use pushopt::costs::{ensemble_minimizer, make_case1_ensemble, make_case2_ensemble, CostEnsemble, LocalCost};
use pushopt::linalg::{pi_norm, StackedVector};
use pushopt::mixing::{build_mixing_matrix, generate_digraph, MixingNetwork};
use pushopt::pushfix::{
    apply_j, apply_p_t, apply_t_alpha, certify, consensus_deviation, consensus_error_bound,
    fixed_point, v_alpha, v_alpha_cap, ContractionCertificate, OperatorContext,
};
use pushopt::seeding::{stream, Stream};

pub const CASES: u32 = 100;
const SLACK: f64 = 1e-9;

/// Parameters of one random instance.
#[derive(Clone, Debug)]
pub struct Draw {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub delta: f64,
    pub p: f64,
    pub case2: bool,
    pub seed: u64,
    /// Stepsize as a fraction of `α₀`.
    pub frac: f64,
}

pub fn draw() -> impl Strategy<Value = Draw> {
    (2usize..=8, 1usize..=4, 1usize..=5, 0.1f64..3.0, 0.4f64..=1.0, any::<u64>(), 0.02f64..=1.0).prop_map(
        |(n, d, m, delta, p, seed, frac)| Draw {
            n,
            d,
            m,
            delta,
            p,
            case2: false,
            seed,
            frac,
        },
    )
}

/// Case-2 instances: rank-deficient local Hessians, `d ≥ 2`.
pub fn draw_case2() -> impl Strategy<Value = Draw> {
    (4usize..=8, 2usize..=4, any::<u64>(), 0.4f64..=1.0, 0.02f64..=1.0, any::<u64>()).prop_map(
        |(n, d, r, p, frac, seed)| Draw {
            n,
            d,
            m: 1 + (r as usize) % (d - 1),
            delta: 0.0,
            p,
            case2: true,
            seed,
            frac,
        },
    )
}

pub fn either_case() -> impl Strategy<Value = Draw> {
    prop_oneof![draw(), draw_case2()]
}

pub struct Fixture {
    pub net: MixingNetwork,
    pub ens: CostEnsemble,
    pub cert: ContractionCertificate,
    pub x_star: Vec<f64>,
    pub alpha: f64,
    pub rng: Stream,
}

impl Draw {
    pub fn fixture(&self) -> Fixture {
        let net = build_mixing_matrix(&generate_digraph(self.n, self.p, self.seed).unwrap()).unwrap();
        let ens = if self.case2 {
            make_case2_ensemble(self.n, self.d, self.m, self.seed).unwrap()
        } else {
            make_case1_ensemble(self.n, self.d, self.m, self.delta, self.seed).unwrap()
        };
        let cert = certify(&net, &ens, 0.01, 500).unwrap();
        let x_star = ensemble_minimizer(&ens).unwrap();
        let alpha = self.frac * cert.alpha0;
        Fixture {
            net,
            ens,
            cert,
            x_star,
            alpha,
            rng: stream(self.seed ^ 0x5eed),
        }
    }
}

impl Fixture {
    pub fn ctx(&self) -> OperatorContext<'_> {
        OperatorContext::new(&self.net, &self.ens, self.alpha).unwrap()
    }

    pub fn vector(&mut self) -> StackedVector {
        let (n, d) = (self.net.n(), self.ens.dim());
        let scale = 10f64.powf(self.rng.gen_range(-2.0..2.0));
        let data = (0..n * d).map(|_| scale * self.rng.gen_range(-1.0..1.0)).collect();
        StackedVector::from_vec(n, d, data).unwrap()
    }

    pub fn point(&mut self) -> Vec<f64> {
        let scale = 10f64.powf(self.rng.gen_range(-2.0..2.0));
        (0..self.ens.dim()).map(|_| scale * self.rng.gen_range(-1.0..1.0)).collect()
    }

    /// `π_j ζ` blocks.
    pub fn perron_direction(&mut self) -> StackedVector {
        let zeta = self.point();
        StackedVector::outer(self.net.pi(), &zeta)
    }

    pub fn pi_norm(&self, w: &StackedVector) -> f64 {
        pi_norm(w, self.net.pi()).unwrap()
    }

    /// Push-sum weights `y(t)` from `y(0) = 1`.
    pub fn push_sum(&self, t: usize) -> Vec<f64> {
        let w = self.net.weights();
        let mut y = DVector::from_element(self.net.n(), 1.0);
        for _ in 0..t {
            y = w * y;
        }
        y.as_slice().to_vec()
    }
}

pub type Check = fn(&Draw) -> Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn grad(c: &LocalCost, x: &[f64]) -> Vec<f64> {
    c.gradient(x).unwrap()
}

/// `⟨x−y, ∇g(x)−∇g(y)⟩ ≥ μL/(μ+L)‖x−y‖² + 1/(μ+L)‖∇g(x)−∇g(y)‖²`.
pub fn cocoercivity(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    for k in 0..f.ens.n() {
        let c = f.ens.cost(k).clone();
        let (l, mu) = (c.smoothness(), c.strong_convexity());
        let (x, y) = (f.point(), f.point());
        let dx = diff(&x, &y);
        let dg = diff(&grad(&c, &x), &grad(&c, &y));
        let lhs = dot(&dx, &dg);
        let rhs = mu * l / (mu + l) * dot(&dx, &dx) + dot(&dg, &dg) / (mu + l);
        let tol = SLACK * (1.0 + rhs.abs());
        ensure(lhs >= rhs - tol, || format!("cost {k}: {lhs:e} < {rhs:e}"))?;
        // Gradient Lipschitz continuity.
        ensure(norm(&dg) <= (l + SLACK) * norm(&dx) + SLACK, || {
            format!("cost {k}: gradient not {l}-Lipschitz")
        })?;
    }
    Ok(())
}

/// `‖x−y−α(∇g(x)−∇g(y))‖ ≤ (1−γα)‖x−y‖` for `α ∈ (0, 2/(μ+L)]`.
pub fn gradient_step_contracts(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    for k in 0..f.ens.n() {
        let c = f.ens.cost(k).clone();
        let (l, mu) = (c.smoothness(), c.strong_convexity());
        let alpha = d.frac * 2.0 / (mu + l);
        let gamma = mu * l / (mu + l);
        let (x, y) = (f.point(), f.point());
        let dg = diff(&grad(&c, &x), &grad(&c, &y));
        let dx = diff(&x, &y);
        let step: Vec<f64> = dx.iter().zip(&dg).map(|(a, b)| a - alpha * b).collect();
        let (lhs, rhs) = (norm(&step), (1.0 - gamma * alpha) * norm(&dx));
        ensure(lhs <= rhs + SLACK * (1.0 + rhs), || format!("cost {k}: {lhs:e} > {rhs:e}"))?;
    }
    Ok(())
}

/// `‖J(w)‖ ≤ ‖w‖`, and the deficit is controlled by the component of `w`
/// off the Perron direction: `‖J w‖² ≤ ‖w_∥‖² + σ₂²‖w_⊥‖²` with `σ₂ < 1`
/// the second singular value of `D⁻¹WD`. Equality therefore forces
/// `w_⊥ = 0`, i.e. `w_j = π_j ζ`.
pub fn mixing_nonexpansive(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    let w = f.vector();
    let jw = apply_j(&f.net, &w).unwrap();
    let (a, b) = (f.pi_norm(&jw), f.pi_norm(&w));
    ensure(a <= b * (1.0 + 1e-12), || format!("‖Jw‖ = {a:e} > ‖w‖ = {b:e}"))?;

    let n = f.net.n();
    let pi = f.net.pi();
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| f.net.weights()[(i, j)] * sq[j] / sq[i]);
    let mut sv = s.svd(false, false).singular_values.as_slice().to_vec();
    sv.sort_by(|x, y| y.total_cmp(x));
    ensure((sv[0] - 1.0).abs() <= 1e-10, || format!("top singular value {}", sv[0]))?;
    let sigma2 = sv.get(1).copied().unwrap_or(0.0);
    ensure(sigma2 < 1.0 - 1e-12, || format!("second singular value {sigma2}"))?;
    // Split D⁻¹w coordinate-wise along √π.
    let dim = f.ens.dim();
    let (mut par, mut perp) = (0.0, 0.0);
    for c in 0..dim {
        let u: Vec<f64> = (0..n).map(|j| w.block(j)[c] / sq[j]).collect();
        let coef = dot(&u, &sq);
        par += coef * coef;
        perp += dot(&u, &u) - coef * coef;
    }
    let bound = par + sigma2 * sigma2 * perp.max(0.0);
    ensure(a * a <= bound + 1e-12 * b * b, || format!("‖Jw‖² = {:e} > {bound:e}", a * a))
}

/// `J(π ⊗ ζ) = π ⊗ ζ`, so the norm is preserved.
pub fn mixing_fixes_perron_direction(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    let w = f.perron_direction();
    let jw = apply_j(&f.net, &w).unwrap();
    let (a, b) = (f.pi_norm(&jw), f.pi_norm(&w));
    ensure((a - b).abs() <= 1e-12 * b.max(1e-300), || format!("{a:e} vs {b:e}"))
}

fn psd_parts(p: &DMatrix<f64>) -> (f64, Vec<DVector<f64>>) {
    let eig = SymmetricEigen::new(p.clone());
    let lmax = eig.eigenvalues.max();
    let kernel = (0..p.nrows())
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * lmax.max(1.0))
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    (lmax, kernel)
}

/// `‖(I−αP)x‖ ≤ ‖x‖` for `α ∈ (0, 2/λ_max)`.
pub fn psd_step_nonexpansive(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    for k in 0..f.ens.n() {
        let p = f.ens.cost(k).hessian().clone();
        let (lmax, _) = psd_parts(&p);
        let alpha = d.frac * 1.999 / lmax;
        let x = DVector::from_vec(f.point());
        let y = &x - &p * &x * alpha;
        ensure(y.norm() <= x.norm() * (1.0 + 1e-12), || {
            format!("cost {k}: {:e} > {:e}", y.norm(), x.norm())
        })?;
    }
    Ok(())
}

/// Equality `‖(I−αP)x‖ = ‖x‖` holds on the kernel of `P` and only there.
pub fn psd_step_equality_on_kernel(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    for k in 0..f.ens.n() {
        let p = f.ens.cost(k).hessian().clone();
        let (lmax, kernel) = psd_parts(&p);
        let alpha = (0.05 + 0.9 * d.frac) * 2.0 / lmax;
        let mut x = DVector::zeros(p.nrows());
        for v in &kernel {
            x += v * f.rng.gen_range(-1.0..1.0);
        }
        let candidates = [x.clone(), x + DVector::from_vec(f.point())];
        for x in candidates {
            if x.norm() == 0.0 {
                continue;
            }
            let y = &x - &p * &x * alpha;
            let equal = (y.norm() - x.norm()).abs() <= 1e-12 * x.norm();
            let in_kernel = (&p * &x).norm() <= 1e-8 * x.norm();
            ensure(equal == in_kernel, || {
                format!(
                    "cost {k}: equality {equal} but ‖Px‖/‖x‖ = {:e}",
                    (&p * &x).norm() / x.norm()
                )
            })?;
        }
    }
    Ok(())
}

fn gradient_map(f: &Fixture, w: &StackedVector) -> StackedVector {
    let n = f.net.n() as f64;
    let blocks: Vec<Vec<f64>> = (0..f.net.n())
        .map(|j| {
            let s = n * f.net.pi()[j];
            let arg: Vec<f64> = w.block(j).iter().map(|x| x / s).collect();
            grad(f.ens.cost(j), &arg)
        })
        .collect();
    StackedVector::from_blocks(&blocks).unwrap()
}

/// `‖w−v−α(∇F(w/nπ)−∇F(v/nπ))‖ ≤ (1−Cα)‖w−v‖` for case-1 ensembles.
pub fn weighted_gradient_step_contracts(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    let (w, v) = (f.vector(), f.vector());
    let g = gradient_map(&f, &w).sub(&gradient_map(&f, &v)).unwrap();
    let dw = w.sub(&v).unwrap();
    let lhs = f.pi_norm(&dw.sub(&g.scaled(f.alpha)).unwrap());
    let rhs = (1.0 - f.cert.c * f.alpha) * f.pi_norm(&dw);
    ensure(lhs <= rhs + SLACK * (1.0 + rhs), || format!("{lhs:e} > {rhs:e}"))
}

/// `‖T_α(w)−T_α(v)‖ ≤ (1−Cα)‖w−v‖` for `α ∈ (0, α₀]`, both cases.
pub fn operator_contracts(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    let (w, v) = (f.vector(), f.vector());
    let ctx = f.ctx();
    let tw = apply_t_alpha(&ctx, &w).unwrap();
    let tv = apply_t_alpha(&ctx, &v).unwrap();
    let lhs = f.pi_norm(&tw.sub(&tv).unwrap());
    let rhs = (1.0 - f.cert.c * f.alpha) * f.pi_norm(&w.sub(&v).unwrap());
    ensure(lhs <= rhs + SLACK * (1.0 + rhs), || format!("{lhs:e} > {rhs:e}"))
}

/// `‖P_t(w)‖ ≤ b ρᵗ ‖w‖` over the range where the push-sum deviation is
/// above rounding; beyond it the deviation floor enters additively.
pub fn perturbation_decays(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    let w = f.vector();
    let horizon = f.cert.consensus.effective_horizon;
    let t = f.rng.gen_range(0..=horizon + 20);
    let y = f.push_sum(t);
    let pt = apply_p_t(&f.ctx(), &y, &w).unwrap();
    let lhs = f.pi_norm(&pt);
    let wn = f.pi_norm(&w);
    let floor = f.ens.l_max() * f.cert.consensus.floor * wn;
    let rhs = f.cert.b_hat * f.net.rho().powi(t as i32) * wn + floor;
    ensure(lhs <= rhs * (1.0 + 1e-9) + 1e-14 * wn, || format!("t = {t}: {lhs:e} > {rhs:e}"))
}

/// The truncated product stays below its closed-form cap for `α ≤ α₀`.
pub fn product_below_cap(d: &Draw) -> Result<(), String> {
    let mut f = d.fixture();
    let c = &f.cert;
    let rho = f.net.rho();
    let v = v_alpha(f.alpha, c.b_hat, c.c, rho).unwrap();
    let cap = v_alpha_cap(c.alpha0, c.b_hat, c.c, rho);
    ensure(v >= 1.0 && v <= cap * (1.0 + 1e-12), || format!("V = {v} vs cap {cap}"))?;
    // Synthetic scalars over a wider range.
    let rho: f64 = f.rng.gen_range(0.0..0.95);
    let b: f64 = f.rng.gen_range(0.0..50.0);
    let a0: f64 = f.rng.gen_range(1e-3..1.0);
    let cc = f.rng.gen_range(0.0..0.99) / a0;
    let v = v_alpha(d.frac * a0, b, cc, rho).unwrap();
    let cap = v_alpha_cap(a0, b, cc, rho);
    ensure(v >= 1.0 && v <= cap * (1.0 + 1e-12), || format!("V = {v} vs cap {cap}"))
}

/// A solved fixed point and the quantities of the neighbourhood chain.
struct Solved {
    f: Fixture,
    dist: f64,
    consensus_error: f64,
    mean_err: f64,
    dispersion: f64,
    distance_bound: f64,
}

fn solve(d: &Draw) -> Solved {
    let f = d.fixture();
    let fp = fixed_point(&f.ctx(), 1e-13).unwrap();
    let n = f.net.n();
    let nf = n as f64;
    let dist = fp.distance_to(&f.net, &f.x_star).unwrap();
    let consensus_error = f.pi_norm(&consensus_deviation(&f.net, &fp.w_alpha).unwrap());
    let mean_err = norm(&diff(&fp.w_bar, &f.x_star));
    let dispersion = (0..n)
        .map(|i| {
            let s = nf * f.net.pi()[i];
            let zi: Vec<f64> = fp.w_alpha.block(i).iter().map(|x| x / s).collect();
            norm(&diff(&fp.w_bar, &zi))
        })
        .sum();
    // The solver's distance bound covers every quantity computed from w^α.
    let distance_bound = fp.distance_bound;
    let r_ok = f.pi_norm(&fp.w_alpha);
    assert!(r_ok.is_finite());
    Solved {
        f,
        dist,
        consensus_error,
        mean_err,
        dispersion,
        distance_bound,
    }
}

fn rel_ok(lhs: f64, rhs: f64, abs: f64) -> bool {
    lhs <= rhs * (1.0 + 1e-8) + abs
}

/// `‖w^α − nπ ⊗ x_*‖ ≤ consensus error + n‖w̄^α − x_*‖`.
pub fn distance_splits(d: &Draw) -> Result<(), String> {
    let s = solve(d);
    let n = s.f.net.n() as f64;
    let rhs = s.consensus_error + n * s.mean_err;
    ensure(rel_ok(s.dist, rhs, 1e-12), || format!("{:e} > {rhs:e}", s.dist))
}

/// `‖w̄^α − x_*‖ ≤ (L/γ) Σ_i ‖w̄^α − w_i^α/(nπ_i)‖`.
pub fn mean_error_bounded_by_dispersion(d: &Draw) -> Result<(), String> {
    let s = solve(d);
    let sc = &s.f.cert.scalars;
    let rhs = sc.l_max / sc.gamma_thm26() * s.dispersion;
    // The fixed point is known to `distance_bound`; the mean inherits it.
    let slack = 1e-12 + 2.0 * s.distance_bound * (1.0 + sc.l_max / sc.gamma_thm26());
    ensure(rel_ok(s.mean_err, rhs, slack), || format!("{:e} > {rhs:e}", s.mean_err))
}

/// `Σ_i ‖w̄^α − w_i^α/(nπ_i)‖ ≤ (√(Σ1/π_k)/n) · consensus error`.
pub fn dispersion_bounded_by_consensus(d: &Draw) -> Result<(), String> {
    let s = solve(d);
    let sc = &s.f.cert.scalars;
    let rhs = sc.pi_inv_sum.sqrt() / sc.n as f64 * s.consensus_error;
    ensure(rel_ok(s.dispersion, rhs, 1e-12), || format!("{:e} > {rhs:e}", s.dispersion))
}

/// Consensus error of `w^α` below `(αρ/(1−ρ))(LR/(nπ_min)+Q)`, and
/// `‖w^α‖ ≤ R`.
pub fn consensus_error_bounded(d: &Draw) -> Result<(), String> {
    let s = solve(d);
    let bound = consensus_error_bound(s.f.alpha, &s.f.cert.scalars);
    ensure(s.consensus_error <= bound + 1e-8, || {
        format!("{:e} > {bound:e}", s.consensus_error)
    })?;
    let fp = fixed_point(&s.f.ctx(), 1e-13).unwrap();
    let norm = s.f.pi_norm(&fp.w_alpha);
    let r = s.f.cert.r;
    ensure(norm <= r + 1e-9, || format!("‖w^α‖ = {norm:e} > R = {r:e}"))
}

/// `|1/y_j(t) − 1/(nπ_j)| ≤ â ρᵗ` up to the rounding floor, and `Σ y = n`.
pub fn push_sum_converges(d: &Draw) -> Result<(), String> {
    let f = d.fixture();
    let n = f.net.n();
    let rho = f.net.rho();
    let a = f.cert.consensus.a_hat;
    let w = f.net.weights();
    let mut y = DVector::from_element(n, 1.0);
    for t in 0..=200 {
        if t > 0 {
            y = w * y;
        }
        let mass: f64 = y.sum();
        ensure((mass - n as f64).abs() <= 1e-10, || format!("t = {t}: Σy = {mass}"))?;
        for j in 0..n {
            let dev = (1.0 / y[j] - 1.0 / (n as f64 * f.net.pi()[j])).abs();
            let bound = a * rho.powi(t) + f.cert.consensus.floor;
            ensure(dev <= bound * (1.0 + 1e-12), || format!("t = {t}, j = {j}: {dev:e} > {bound:e}"))?;
            ensure(1.0 / y[j] <= f.cert.delta_push * (1.0 + 1e-15), || format!("1/y above δ at t = {t}"))?;
        }
    }
    Ok(())
}

pub struct NamedCheck {
    pub name: &'static str,
    pub check: Check,
    pub case2: bool,
}

/// Every property with the instance family it is drawn from. `case2`
/// checks draw from both cases.
pub fn suite() -> Vec<NamedCheck> {
    let c = |name, check, case2| NamedCheck { name, check, case2 };
    vec![
        c("cocoercivity", cocoercivity as Check, false),
        c("gradient_step_contracts", gradient_step_contracts, false),
        c("mixing_nonexpansive", mixing_nonexpansive, false),
        c("mixing_fixes_perron_direction", mixing_fixes_perron_direction, false),
        c("psd_step_nonexpansive", psd_step_nonexpansive, true),
        c("psd_step_equality_on_kernel", psd_step_equality_on_kernel, true),
        c("weighted_gradient_step_contracts", weighted_gradient_step_contracts, false),
        c("operator_contracts", operator_contracts, true),
        c("perturbation_decays", perturbation_decays, true),
        c("product_below_cap", product_below_cap, true),
        c("distance_splits", distance_splits, true),
        c("mean_error_bounded_by_dispersion", mean_error_bounded_by_dispersion, true),
        c("dispersion_bounded_by_consensus", dispersion_bounded_by_consensus, true),
        c("consensus_error_bounded", consensus_error_bounded, true),
        c("push_sum_converges", push_sum_converges, false),
    ]
}

/// Runs `check` on [`CASES`] draws with a fixed runner seed.
pub fn run_check(nc: &NamedCheck) -> Result<(), String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        rng_algorithm: proptest::test_runner::RngAlgorithm::ChaCha,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::from_seed(proptest::test_runner::RngAlgorithm::ChaCha, &[7; 32]),
    );
    let check = nc.check;
    let test = |d: Draw| check(&d).map_err(TestCaseError::fail);
    let r = if nc.case2 {
        runner.run(&either_case(), test)
    } else {
        runner.run(&draw(), test)
    };
    r.map_err(|e| e.to_string())
}
