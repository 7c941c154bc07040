//! Independent recomputations of the library's numerical kernels.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use pushopt::algorithms::{gp_step, GradientPushState};
use pushopt::costs::{ensemble_minimizer, make_case1_ensemble, make_case2_ensemble, minimizer_residual, CostEnsemble};
use pushopt::linalg::{
    apply_block_operator, induced_pi_norm, induced_pi_norm_blocks, pi_norm, spectral_norm,
    BlockOperator, StackedVector,
};
use pushopt::mixing::{build_mixing_matrix, generate_digraph, MixingNetwork};
use pushopt::pushfix::{alpha0, lipschitz_constant, m_alpha, w_recursion_step, OperatorContext};
use pushopt::seeding::{stream, Stream};

pub const SEEDS: std::ops::Range<u64> = 0..20;

fn net(seed: u64, n: usize) -> MixingNetwork {
    build_mixing_matrix(&generate_digraph(n, 0.5, seed).unwrap()).unwrap()
}

fn ensembles(seed: u64, n: usize) -> [CostEnsemble; 2] {
    [
        make_case1_ensemble(n, 4, 3, 0.5, seed).unwrap(),
        make_case2_ensemble(n, 5, 2, seed).unwrap(),
    ]
}

fn random_matrix(rng: &mut Stream, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_stacked(rng: &mut Stream, n: usize, d: usize) -> StackedVector {
    StackedVector::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn largest_singular(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn fail(what: &str, seed: u64, detail: String) -> Result<(), String> {
    Err(format!("{what} (seed {seed}): {detail}"))
}

/// Central differences of the cost values against the analytic gradients.
pub fn finite_difference_gradients() -> Result<(), String> {
    for seed in SEEDS {
        let mut rng = stream(seed);
        for ens in ensembles(seed, 6) {
            for c in ens.costs() {
                let d = c.dim();
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let g = c.gradient(&x).unwrap();
                let h = 1e-5;
                let fd: Vec<f64> = (0..d)
                    .map(|i| {
                        let (mut a, mut b) = (x.clone(), x.clone());
                        a[i] += h;
                        b[i] -= h;
                        (c.value(&a).unwrap() - c.value(&b).unwrap()) / (2.0 * h)
                    })
                    .collect();
                let err = DVector::from_vec(fd.clone()) - DVector::from_vec(g.clone());
                let scale = DVector::from_vec(g).norm().max(1.0);
                if err.norm() > 1e-6 * scale {
                    return fail("finite differences", seed, format!("error {:e}", err.norm()));
                }
            }
        }
    }
    Ok(())
}

/// `π` as the null vector of `W − I` from a dense SVD, `ρ` and the
/// induced norms from dense singular values.
pub fn dense_eigensolver() -> Result<(), String> {
    for seed in SEEDS {
        let nw = net(seed, 3 + (seed as usize) % 10);
        let n = nw.n();
        let w = nw.weights();
        let svd = (w - DMatrix::identity(n, n)).svd(false, true);
        let vt = svd.v_t.unwrap();
        let k = svd.singular_values.imin();
        let v = vt.row(k).transpose();
        let oracle_pi = &v / v.sum();
        let pi = DVector::from_column_slice(nw.pi());
        let err = (&oracle_pi - &pi).amax() / pi.amax();
        if err > 1e-8 {
            return fail("Perron vector", seed, format!("relative error {err:e}"));
        }
        let sq = pi.map(f64::sqrt);
        let winf = &pi * DVector::from_element(n, 1.0).transpose();
        let sim = DMatrix::from_fn(n, n, |i, j| (w[(i, j)] - winf[(i, j)]) * sq[j] / sq[i]);
        let rho = largest_singular(&sim);
        if rel(nw.rho(), rho) > 1e-8 {
            return fail("rho", seed, format!("{} vs {rho}", nw.rho()));
        }
        let mut rng = stream(seed);
        let m = random_matrix(&mut rng, 10, 10);
        let s = spectral_norm(&m, 1e-10).unwrap();
        if rel(s, largest_singular(&m)) > 1e-8 {
            return fail("spectral norm", seed, format!("{s} vs {}", largest_singular(&m)));
        }
        // Measured Lipschitz constant of the fixed-point map.
        for ens in ensembles(seed, n) {
            let a = alpha0(&nw, &ens, 0.01) * rng.gen_range(0.1..2.0);
            let ctx = OperatorContext::new(&nw, &ens, a).unwrap();
            let dense = m_alpha(&ctx).to_dense();
            let d = ens.dim();
            let scaled = DMatrix::from_fn(n * d, n * d, |i, j| dense[(i, j)] * sq[j / d] / sq[i / d]);
            let oracle = largest_singular(&scaled);
            let l = lipschitz_constant(&ctx).unwrap();
            if rel(l, oracle) > 1e-8 {
                return fail("Lipschitz constant", seed, format!("{l} vs {oracle}"));
            }
        }
    }
    Ok(())
}

/// Block operators against flat dense products; weighted norms against
/// `‖D⁻¹w‖₂`; Kronecker and sub-multiplicativity identities.
pub fn dense_linear_algebra() -> Result<(), String> {
    for seed in SEEDS {
        let mut rng = stream(seed);
        let (n, d) = (3, 1 + (seed as usize) % 4);
        let blocks = (0..n * n).map(|_| random_matrix(&mut rng, d, d)).collect();
        let op = BlockOperator::new(n, d, blocks).unwrap();
        let w = random_stacked(&mut rng, n, d);
        let got = apply_block_operator(&op, &w).unwrap();
        let want = op.to_dense() * DVector::from_column_slice(w.as_slice());
        let err = (DVector::from_column_slice(got.as_slice()) - want).amax();
        if err > 1e-13 {
            return fail("block operator", seed, format!("error {err:e}"));
        }

        let nw = net(seed, 6);
        let pi = nw.pi();
        let w = random_stacked(&mut rng, 6, d);
        let scaled: Vec<f64> = w
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, x)| x / pi[i / d].sqrt())
            .collect();
        let (a, b) = (pi_norm(&w, pi).unwrap(), DVector::from_vec(scaled).norm());
        if (a - b).abs() > 1e-13 * a {
            return fail("weighted norm", seed, format!("{a} vs {b}"));
        }

        let a_mat = random_matrix(&mut rng, 6, 6);
        let b_mat = random_matrix(&mut rng, 6, 6);
        let na = induced_pi_norm(&a_mat, pi).unwrap();
        let kron = induced_pi_norm_blocks(&BlockOperator::kron_identity(&a_mat, d), pi).unwrap();
        if (na - kron).abs() > 1e-10 * na.max(1.0) {
            return fail("Kronecker identity", seed, format!("{na} vs {kron}"));
        }
        let nb = induced_pi_norm(&b_mat, pi).unwrap();
        let nab = induced_pi_norm(&(&a_mat * &b_mat), pi).unwrap();
        if nab > na * nb + 1e-10 {
            return fail("sub-multiplicativity", seed, format!("{nab} > {na}·{nb}"));
        }
    }
    Ok(())
}

/// The four-variable gradient-push step against the `w`-only recursion.
pub fn w_form_agreement() -> Result<(), String> {
    for seed in SEEDS {
        let nw = net(seed, 8);
        for ens in ensembles(seed, 8) {
            let mut rng = stream(seed ^ 0xabc);
            let x0 = random_stacked(&mut rng, 8, ens.dim());
            let alpha = alpha0(&nw, &ens, 0.01) * 0.7;
            let ctx = OperatorContext::new(&nw, &ens, alpha).unwrap();
            let mut s = gp_step(&nw, &ens, alpha, &GradientPushState::new(x0)).unwrap();
            let mut w = s.w.clone();
            for t in 1..=100 {
                let next = w_recursion_step(&ctx, &s.y, &w).unwrap();
                s = gp_step(&nw, &ens, alpha, &s).unwrap();
                w = next;
                let err = s
                    .w
                    .as_slice()
                    .iter()
                    .zip(w.as_slice())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if err > 1e-12 {
                    return fail("w-form recursion", seed, format!("t = {t}: error {err:e}"));
                }
            }
        }
    }
    Ok(())
}

/// The linear-solve minimizer against its gradient residual and against
/// centralized gradient descent run to convergence.
pub fn minimizer() -> Result<(), String> {
    for seed in SEEDS {
        for ens in ensembles(seed, 6) {
            let x = ensemble_minimizer(&ens).unwrap();
            let xn = DVector::from_column_slice(&x).norm();
            let res = minimizer_residual(&ens, &x).unwrap();
            if res > 1e-9 * (1.0 + xn) {
                return fail("minimizer residual", seed, format!("{res:e}"));
            }
            let l: f64 = ens.costs().iter().map(|c| c.smoothness()).sum();
            let step = 1.0 / l;
            let mut y = vec![0.0; ens.dim()];
            for _ in 0..200_000 {
                let g = ens.gradient_sum(&y).unwrap();
                let gn = DVector::from_column_slice(&g).norm();
                y.iter_mut().zip(&g).for_each(|(yi, gi)| *yi -= step * gi);
                if gn < 1e-13 {
                    break;
                }
            }
            let err = (DVector::from_vec(y) - DVector::from_column_slice(&x)).norm();
            if err > 1e-8 * (1.0 + xn) {
                return fail("gradient-descent oracle", seed, format!("distance {err:e}"));
            }
        }
    }
    Ok(())
}

pub type Oracle = fn() -> Result<(), String>;

pub fn all() -> Vec<(&'static str, Oracle)> {
    vec![
        ("finite_difference_gradients", finite_difference_gradients as Oracle),
        ("dense_eigensolver", dense_eigensolver),
        ("dense_linear_algebra", dense_linear_algebra),
        ("w_form_agreement", w_form_agreement),
        ("minimizer", minimizer),
    ]
}
