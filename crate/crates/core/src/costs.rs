//! Quadratic local costs, the two random ensembles used in the experiments,
//! and the aggregate minimizer.
//!
//! Both supported kinds have a constant Hessian `H` and gradient `Hx + g`,
//! which is all the operator analysis needs. Aggregate quantities
//! (`mu_agg`, the minimizer) refer to the average `(1/n) Σ f_k`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dvec, norm, pi_norm, symmetric_extremes, StackedVector};
use crate::seeding::{derive_seed, stream, Stream, COSTS_LABEL};

pub const MAX_COST_ATTEMPTS: u32 = 100;

/// Relative accuracy of the eigenvalue bisection used for `L` and `mu`.
const EIG_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    /// Every local cost strongly convex.
    Case1,
    /// Convex quadratics whose average is strongly convex.
    Case2,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostKind {
    /// `½ xᵀPx + qᵀx`.
    Quadratic { p: DMatrix<f64>, q: DVector<f64> },
    /// `½ (‖Ax − b‖² + δ‖x‖²)`.
    RegularizedLeastSquares {
        a: DMatrix<f64>,
        b: DVector<f64>,
        delta: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalCost {
    kind: CostKind,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    l: f64,
    mu: f64,
}

impl LocalCost {
    pub fn quadratic(p: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let d = p.nrows();
        if p.ncols() != d || q.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if p.ncols() != d { p.ncols() } else { q.len() },
            });
        }
        for i in 0..d {
            for j in 0..i {
                if (p[(i, j)] - p[(j, i)]).abs() > 1e-12 {
                    return Err(Error::invalid(format!("P not symmetric at ({i},{j})")));
                }
            }
        }
        let (mu, l) = symmetric_extremes(&p, EIG_TOL)?;
        if mu < -1e-10 {
            return Err(Error::invalid(format!("P has negative eigenvalue {mu}")));
        }
        Ok(Self {
            hessian: p.clone(),
            linear: q.clone(),
            kind: CostKind::Quadratic { p, q },
            l,
            mu,
        })
    }

    pub fn regularized_least_squares(a: DMatrix<f64>, b: DVector<f64>, delta: f64) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if !(delta >= 0.0) {
            return Err(Error::invalid(format!("regularization {delta} is negative")));
        }
        let d = a.ncols();
        let mut hessian = a.transpose() * &a + DMatrix::identity(d, d) * delta;
        symmetrize(&mut hessian);
        let linear = -(a.transpose() * &b);
        let (mu, l) = symmetric_extremes(&hessian, EIG_TOL)?;
        Ok(Self {
            kind: CostKind::RegularizedLeastSquares { a, b, delta },
            hessian,
            linear,
            l,
            mu,
        })
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// The constant Hessian (`P`, or `AᵀA + δI`).
    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    /// Gradient at zero (`q`, or `−Aᵀb`).
    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn smoothness(&self) -> f64 {
        self.l
    }

    pub fn strong_convexity(&self) -> f64 {
        self.mu
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let x = dvec(x);
        Ok(match &self.kind {
            CostKind::Quadratic { p, q } => 0.5 * x.dot(&(p * &x)) + q.dot(&x),
            CostKind::RegularizedLeastSquares { a, b, delta } => {
                0.5 * ((a * &x - b).norm_squared() + delta * x.norm_squared())
            }
        })
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    /// `out = Hx + g`, without dimension checks.
    #[inline]
    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let d = out.len();
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = self.linear[r];
            for c in 0..d {
                acc += self.hessian[(r, c)] * x[c];
            }
            *o = acc;
        }
    }

    /// Returns the cost for `c·f`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match &self.kind {
            CostKind::Quadratic { p, q } => Self::quadratic(p * c, q * c),
            CostKind::RegularizedLeastSquares { a, b, delta } => {
                let s = c.sqrt();
                Self::regularized_least_squares(a * s, b * s, delta * c)
            }
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// `(L, mu)`: extreme Hessian eigenvalues.
pub fn convexity_constants(c: &LocalCost) -> (f64, f64) {
    (c.l, c.mu)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

#[derive(Clone, Debug)]
pub struct CostEnsemble {
    costs: Vec<LocalCost>,
    d: usize,
    case_tag: CaseTag,
    l_max: f64,
    l_bar: f64,
    mu_agg: f64,
}

impl CostEnsemble {
    /// Validates the case invariants: every `mu_k > 0` for case 1, and a
    /// positive definite average Hessian in both cases.
    pub fn new(case_tag: CaseTag, costs: Vec<LocalCost>) -> Result<Self> {
        let n = costs.len();
        if n == 0 {
            return Err(Error::invalid("ensemble needs at least one cost"));
        }
        let d = costs[0].dim();
        if let Some(c) = costs.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: c.dim(),
            });
        }
        if case_tag == CaseTag::Case1 {
            if let Some(k) = costs.iter().position(|c| !(c.mu > 0.0)) {
                return Err(Error::invalid(format!("cost {k} is not strongly convex")));
            }
        } else if costs.iter().any(|c| !matches!(c.kind, CostKind::Quadratic { .. })) {
            return Err(Error::invalid("case2 ensembles hold quadratic costs"));
        }
        let mu_agg = average_hessian_min(&costs)?;
        if !(mu_agg > 0.0) {
            return Err(Error::invalid(format!(
                "average Hessian is not positive definite (λ_min = {mu_agg})"
            )));
        }
        let l_max = costs.iter().map(|c| c.l).fold(f64::NEG_INFINITY, f64::max);
        let l_bar = costs.iter().map(|c| c.l).sum::<f64>() / n as f64;
        Ok(Self {
            costs,
            d,
            case_tag,
            l_max,
            l_bar,
            mu_agg,
        })
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn costs(&self) -> &[LocalCost] {
        &self.costs
    }

    pub fn cost(&self, k: usize) -> &LocalCost {
        &self.costs[k]
    }

    pub fn case_tag(&self) -> CaseTag {
        self.case_tag
    }

    pub fn l_max(&self) -> f64 {
        self.l_max
    }

    pub fn l_bar(&self) -> f64 {
        self.l_bar
    }

    /// Strong convexity of `(1/n) Σ f_k`.
    pub fn mu_agg(&self) -> f64 {
        self.mu_agg
    }

    /// `Q = ‖∇F(0)‖` in the `π ⊗ 1_d` norm.
    pub fn grad0_pi_norm(&self, pi: &[f64]) -> Result<f64> {
        pi_norm(&self.grad_at_zero(), pi)
    }

    /// Stacked local gradients at zero.
    pub fn grad_at_zero(&self) -> StackedVector {
        let mut out = StackedVector::zeros(self.n(), self.d);
        for (k, c) in self.costs.iter().enumerate() {
            out.block_mut(k).copy_from_slice(c.linear.as_slice());
        }
        out
    }

    /// `(1/n) Σ f_k(x)`.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for c in &self.costs {
            s += c.value(x)?;
        }
        Ok(s / self.n() as f64)
    }

    /// `Σ_k ∇f_k(x)`.
    pub fn gradient_sum(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut s = vec![0.0; self.d];
        for c in &self.costs {
            for (a, g) in s.iter_mut().zip(c.gradient(x)?) {
                *a += g;
            }
        }
        Ok(s)
    }

    /// Every cost multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("scale factor {c} must be positive")));
        }
        let costs = self.costs.iter().map(|k| k.scaled(c)).collect::<Result<_>>()?;
        Self::new(self.case_tag, costs)
    }

    pub fn to_json(&self) -> EnsembleFile {
        EnsembleFile {
            case_tag: self.case_tag,
            n: self.n(),
            d: self.d,
            costs: self.costs.iter().map(cost_to_file).collect(),
        }
    }

    /// Rebuilds the ensemble and checks the stored `L`, `mu` against
    /// recomputed values.
    pub fn from_json(file: &EnsembleFile) -> Result<Self> {
        if file.costs.len() != file.n {
            return Err(Error::DimensionMismatch {
                expected: file.n,
                found: file.costs.len(),
            });
        }
        let mut costs = Vec::with_capacity(file.n);
        for (k, entry) in file.costs.iter().enumerate() {
            let cost = cost_from_file(entry, file.d).map_err(|e| e.context(format!("cost {k}")))?;
            let (l, mu) = entry.constants();
            if !close_rel(l, cost.l, 1e-9) || !close_rel(mu, cost.mu, 1e-9) {
                return Err(Error::invalid(format!(
                    "cost {k}: stored (L, mu) = ({l}, {mu}) but recomputed ({}, {})",
                    cost.l, cost.mu
                )));
            }
            costs.push(cost);
        }
        let ens = Self::new(file.case_tag, costs)?;
        if ens.d != file.d {
            return Err(Error::DimensionMismatch {
                expected: file.d,
                found: ens.d,
            });
        }
        Ok(ens)
    }
}

fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn average_hessian(costs: &[LocalCost]) -> DMatrix<f64> {
    let d = costs[0].dim();
    let mut h = DMatrix::zeros(d, d);
    for c in costs {
        h += &c.hessian;
    }
    h / costs.len() as f64
}

fn average_hessian_min(costs: &[LocalCost]) -> Result<f64> {
    Ok(symmetric_extremes(&average_hessian(costs), EIG_TOL)?.0)
}

fn uniform_matrix(rng: &mut Stream, rows: usize, cols: usize) -> DMatrix<f64> {
    // Row-major fill so the draw order does not depend on storage layout.
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen::<f64>()).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

fn uniform_vector(rng: &mut Stream, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.gen::<f64>()))
}

/// Regularized least squares with `A_k ∈ R^{m×d}`, `b_k ∈ R^m` uniform on
/// `[0, 1)`.
pub fn make_case1_ensemble(n: usize, d: usize, m: usize, delta: f64, seed: u64) -> Result<CostEnsemble> {
    if n == 0 || d == 0 || m == 0 {
        return Err(Error::invalid("n, d and m must be positive"));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("delta_reg = {delta} must be positive")));
    }
    let mut rng = stream(derive_seed(seed, COSTS_LABEL));
    let costs = (0..n)
        .map(|_| {
            let a = uniform_matrix(&mut rng, m, d);
            let b = uniform_vector(&mut rng, m);
            LocalCost::regularized_least_squares(a, b, delta)
        })
        .collect::<Result<_>>()?;
    CostEnsemble::new(CaseTag::Case1, costs)
}

/// Rank-deficient quadratics `P_k = R_k R_kᵀ` with `R_k ∈ R^{d×m_rank}` and
/// `q_k` uniform on `(0, 1)`, regenerated until the average is positive
/// definite.
pub fn make_case2_ensemble(n: usize, d: usize, m_rank: usize, seed: u64) -> Result<CostEnsemble> {
    if n == 0 || m_rank == 0 || m_rank >= d {
        return Err(Error::invalid(format!(
            "need n >= 1 and 1 <= m_rank < d (got n={n}, m_rank={m_rank}, d={d})"
        )));
    }
    let base = derive_seed(seed, COSTS_LABEL);
    for attempt in 0..MAX_COST_ATTEMPTS {
        let mut rng = stream(base.wrapping_add(attempt as u64));
        let costs = (0..n)
            .map(|_| {
                let r = uniform_matrix(&mut rng, d, m_rank);
                let q = uniform_vector(&mut rng, d);
                let mut p = &r * r.transpose();
                symmetrize(&mut p);
                LocalCost::quadratic(p, q)
            })
            .collect::<Result<Vec<_>>>()?;
        let lam = average_hessian_min(&costs)?;
        let scale = costs.iter().map(|c| c.l).fold(0.0, f64::max);
        if lam > 1e-10 * scale.max(1.0) {
            return CostEnsemble::new(CaseTag::Case2, costs);
        }
    }
    Err(Error::FailedAggregatePd {
        attempts: MAX_COST_ATTEMPTS,
    })
}

/// Minimizer of `Σ f_k` by LU on `(Σ H_k) x = −Σ g_k`, with one step of
/// iterative refinement.
pub fn ensemble_minimizer(e: &CostEnsemble) -> Result<Vec<f64>> {
    let d = e.d;
    let mut h = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for c in &e.costs {
        h += &c.hessian;
        rhs -= &c.linear;
    }
    let lu = h.clone().lu();
    let mut x = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    let r = &rhs - &h * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x.as_slice().to_vec())
}

/// Gradient residual `‖Σ_k ∇f_k(x)‖`.
pub fn minimizer_residual(e: &CostEnsemble, x: &[f64]) -> Result<f64> {
    Ok(norm(&e.gradient_sum(x)?))
}

/// Serialized ensemble; matrices are row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub case_tag: CaseTag,
    pub n: usize,
    pub d: usize,
    pub costs: Vec<CostFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostFile {
    Quadratic {
        #[serde(rename = "P")]
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(rename = "L")]
        l: f64,
        mu: f64,
    },
    RegularizedLeastSquares {
        m: usize,
        #[serde(rename = "A")]
        a: Vec<f64>,
        b: Vec<f64>,
        delta_reg: f64,
        #[serde(rename = "L")]
        l: f64,
        mu: f64,
    },
}

impl CostFile {
    fn constants(&self) -> (f64, f64) {
        match *self {
            CostFile::Quadratic { l, mu, .. } | CostFile::RegularizedLeastSquares { l, mu, .. } => {
                (l, mu)
            }
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
        .collect()
}

fn cost_to_file(c: &LocalCost) -> CostFile {
    match &c.kind {
        CostKind::Quadratic { p, q } => CostFile::Quadratic {
            p: row_major(p),
            q: q.as_slice().to_vec(),
            l: c.l,
            mu: c.mu,
        },
        CostKind::RegularizedLeastSquares { a, b, delta } => CostFile::RegularizedLeastSquares {
            m: a.nrows(),
            a: row_major(a),
            b: b.as_slice().to_vec(),
            delta_reg: *delta,
            l: c.l,
            mu: c.mu,
        },
    }
}

fn cost_from_file(f: &CostFile, d: usize) -> Result<LocalCost> {
    match f {
        CostFile::Quadratic { p, q, .. } => {
            if p.len() != d * d || q.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d * d,
                    found: p.len(),
                });
            }
            LocalCost::quadratic(DMatrix::from_row_slice(d, d, p), dvec(q))
        }
        CostFile::RegularizedLeastSquares {
            m, a, b, delta_reg, ..
        } => {
            if a.len() != m * d || b.len() != *m {
                return Err(Error::DimensionMismatch {
                    expected: m * d,
                    found: a.len(),
                });
            }
            LocalCost::regularized_least_squares(DMatrix::from_row_slice(*m, d, a), dvec(b), *delta_reg)
        }
    }
}
