//! Browser bindings. Each export takes plain numbers and returns a JSON
//! string for the page to plot; the `demo` functions hold the logic so
//! they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod demo {
    use pushopt::algorithms::{gp_run, hybrid_run, pd_run, HandoffWeights, HybridSchedule, PushDigingState};
    use pushopt::harness::scenarios::{alpha_sweep, contraction_sweep, uniform_grid};
    use pushopt::harness::{CostSpec, Instance};
    use pushopt::linalg::StackedVector;
    use pushopt::pushfix::{DEFAULT_EPS, DEFAULT_FP_TOL, DEFAULT_HORIZON};
    use serde::Serialize;

    /// Largest network the page offers; keeps a sweep under a second.
    pub const MAX_NODES: usize = 40;

    fn instance(n: usize, p: f64, case2: bool, seed: u64) -> Result<Instance, String> {
        if !(2..=MAX_NODES).contains(&n) {
            return Err(format!("n must lie in 2..={MAX_NODES}, got {n}"));
        }
        let spec = if case2 {
            CostSpec::case2_default()
        } else {
            CostSpec::case1_default()
        };
        Instance::generate(n, p, &spec, seed, DEFAULT_EPS, DEFAULT_HORIZON).map_err(|e| e.to_string())
    }

    fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
        serde_json::to_string(v).map_err(|e| e.to_string())
    }

    #[derive(Serialize)]
    struct Sweep {
        alpha0: f64,
        c: f64,
        alpha: Vec<f64>,
        lipschitz: Vec<f64>,
        envelope: Vec<f64>,
    }

    /// Lipschitz constant of `T_α` against `1 − Cα` on `(0, 2α₀]`.
    pub fn contraction(n: usize, p: f64, case2: bool, seed: u64, points: usize) -> Result<String, String> {
        let inst = instance(n, p, case2, seed)?;
        let rows = contraction_sweep(&inst, &uniform_grid(2.0 * inst.alpha0(), points.max(2)))
            .map_err(|e| e.to_string())?;
        to_json(&Sweep {
            alpha0: inst.alpha0(),
            c: inst.cert.c,
            alpha: rows.iter().map(|r| r.alpha).collect(),
            lipschitz: rows.iter().map(|r| r.lipschitz).collect(),
            envelope: rows.iter().map(|r| r.contraction_envelope).collect(),
        })
    }

    #[derive(Serialize)]
    struct Neighbourhood {
        alpha0: f64,
        alpha: Vec<f64>,
        error: Vec<f64>,
        bound: Vec<f64>,
    }

    /// Distance of the fixed point to the optimum, and its bound, on `(0, α₀]`.
    pub fn neighbourhood(n: usize, p: f64, case2: bool, seed: u64, points: usize) -> Result<String, String> {
        let inst = instance(n, p, case2, seed)?;
        let rows = alpha_sweep(&inst, &uniform_grid(inst.alpha0(), points.max(2)), DEFAULT_FP_TOL)
            .map_err(|e| e.to_string())?;
        to_json(&Neighbourhood {
            alpha0: inst.alpha0(),
            alpha: rows.iter().map(|r| r.alpha).collect(),
            error: rows.iter().map(|r| r.fp_to_opt_err).collect(),
            bound: rows.iter().map(|r| r.thm26_bound).collect(),
        })
    }

    #[derive(Serialize)]
    struct Traces {
        alpha0: f64,
        gp: Vec<f64>,
        pd: Vec<f64>,
        hybrid: Vec<f64>,
    }

    /// `Σ‖z_k − x_*‖` per iteration for gradient-push at `gp_mult·α₀`,
    /// Push-DIGing at `alpha_pd` and the hybrid switching after `gp_iters`.
    #[allow(clippy::too_many_arguments)]
    pub fn traces(
        n: usize,
        p: f64,
        case2: bool,
        seed: u64,
        gp_mult: f64,
        alpha_pd: f64,
        gp_iters: usize,
        total_iters: usize,
    ) -> Result<String, String> {
        if total_iters > 5000 {
            return Err(format!("at most 5000 iterations, got {total_iters}"));
        }
        if !(gp_mult >= 0.0 && gp_mult.is_finite() && alpha_pd >= 0.0 && alpha_pd.is_finite()) {
            return Err("stepsizes must be finite and non-negative".into());
        }
        let inst = instance(n, p, case2, seed)?;
        let x0 = StackedVector::zeros(inst.net.n(), inst.ensemble.dim());
        let refs = inst.refs(None);
        let alpha_gp = gp_mult * inst.alpha0();
        let err = |e: pushopt::Error| e.to_string();
        let gp = gp_run(&inst.net, &inst.ensemble, alpha_gp, x0.clone(), total_iters, &refs).map_err(err)?;
        let pd = pd_run(
            &inst.net,
            &inst.ensemble,
            alpha_pd,
            PushDigingState::new(&inst.ensemble, x0.clone()),
            total_iters,
            &refs,
        )
        .map_err(err)?;
        let schedule = HybridSchedule {
            alpha_gp,
            alpha_pd,
            gp_iters: gp_iters.min(total_iters),
            total_iters,
            handoff: HandoffWeights::Inherit,
        };
        let hy = hybrid_run(&inst.net, &inst.ensemble, &schedule, x0, &refs).map_err(err)?;
        let col = |t: &pushopt::algorithms::RunTrace| t.records.iter().map(|r| r.sum_z_err).collect();
        to_json(&Traces {
            alpha0: inst.alpha0(),
            gp: col(&gp),
            pd: col(&pd),
            hybrid: col(&hy),
        })
    }
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn contraction_sweep(n: usize, p: f64, case2: bool, seed: u64, points: usize) -> Result<String, JsValue> {
    js(demo::contraction(n, p, case2, seed, points))
}

#[wasm_bindgen]
pub fn neighbourhood_sweep(n: usize, p: f64, case2: bool, seed: u64, points: usize) -> Result<String, JsValue> {
    js(demo::neighbourhood(n, p, case2, seed, points))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn run_traces(
    n: usize,
    p: f64,
    case2: bool,
    seed: u64,
    gp_mult: f64,
    alpha_pd: f64,
    gp_iters: usize,
    total_iters: usize,
) -> Result<String, JsValue> {
    js(demo::traces(n, p, case2, seed, gp_mult, alpha_pd, gp_iters, total_iters))
}
