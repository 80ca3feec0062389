//! Column-decoupled synthesis of localized closed-loop pairs.
//!
//! Each disturbance column `j` is an equality-constrained least-squares
//! problem over the on-mask entries of `R(k)e_j` and `M(k)e_j`. It is solved
//! in three nested stages on successive null spaces:
//!
//! 1. the start condition and the recursion `R(k+1) = A R(k) + B M(k)`,
//!    `k < T`, exactly (the column is infeasible when they are inconsistent);
//! 2. the FIR closure `A R(T) + B M(T) = 0`, in the least-squares sense, so
//!    plants with uncontrollable modes still get the best finite closure;
//! 3. the quadratic cost over whatever freedom remains.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::SupportSpec;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{self, least_squares, solve_psd};
use crate::plant::LinearSystem;
use crate::spectral::{h2_cost_sq, state_cost_sq, Causality, CostSpec, FirPair};

/// Dynamics residual above which a column is reported infeasible.
pub const INFEASIBLE_TOL: f64 = 1e-7;
/// Closure residual at or below which a column counts as a true FIR.
pub const CLOSURE_TOL: f64 = 1e-7;
/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMode {
    /// Disturbance feedback with `R(1) = I + B M(0)`.
    #[serde(rename = "mdesign")]
    MDesign,
    /// Strictly causal pair with `R(1) = I`.
    Sls,
}

impl SynthesisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MDesign => "mdesign",
            Self::Sls => "sls",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub sys: LinearSystem,
    pub cost: CostSpec,
    pub support: SupportSpec,
    pub mode: SynthesisMode,
}

impl SynthesisProblem {
    pub fn new(sys: LinearSystem, cost: CostSpec, support: SupportSpec, mode: SynthesisMode) -> Result<Self> {
        let (n, m) = (sys.state_dim(), sys.input_dim());
        if cost.q().nrows() != n {
            return Err(dim_err("Q", n, cost.q().nrows()));
        }
        if support.state_dim() != n || support.input_dim() != m {
            return Err(dim_err(
                "support",
                format!("n={n}, m={m}"),
                format!("n={}, m={}", support.state_dim(), support.input_dim()),
            ));
        }
        if mode == SynthesisMode::Sls && support.causality() != Causality::StrictlyCausal {
            return Err(Error::InvalidArgument("SLS needs a strictly causal support".into()));
        }
        Ok(Self { sys, cost, support, mode })
    }

    pub fn horizon(&self) -> usize {
        self.support.horizon()
    }

    fn pair_causality(&self) -> Causality {
        match self.mode {
            SynthesisMode::MDesign => Causality::CausalM,
            SynthesisMode::Sls => Causality::StrictlyCausal,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnStatus {
    /// 0-based disturbance column.
    pub column: usize,
    pub feasible: bool,
    /// Norm of the violated start/recursion equations.
    pub dynamics_residual: f64,
    /// `‖A R(T)e_j + B M(T)e_j‖`.
    pub closure_residual: f64,
    pub fir_closed: bool,
    pub variables: usize,
    pub dynamics_rank: usize,
    pub free_dimension: usize,
    /// Projected gradient norm at the returned point.
    pub stationarity: f64,
    pub pseudo_inverse_fallback: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverStats {
    pub max_dynamics_residual: f64,
    pub max_closure_residual: f64,
    pub max_stationarity: f64,
    pub pseudo_inverse_fallbacks: usize,
    pub infeasible_columns: Vec<usize>,
    pub open_columns: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub mode: SynthesisMode,
    pub pair: FirPair,
    /// Full objective, including the `eps` input term.
    pub objective: f64,
    /// Objective without the input term.
    pub state_cost: f64,
    pub columns: Vec<ColumnStatus>,
    pub stats: SolverStats,
}

impl SynthesisResult {
    pub fn feasible(&self) -> bool {
        self.columns.iter().all(|c| c.feasible)
    }

    pub fn fir_closed(&self) -> bool {
        self.columns.iter().all(|c| c.fir_closed)
    }
}

/// Variable layout of one column: on-mask R rows then on-mask M rows.
struct ColumnLayout {
    /// `(k, row)` for every R variable.
    r_vars: Vec<(usize, usize)>,
    /// `(k, actuator)` for every M variable.
    m_vars: Vec<(usize, usize)>,
    /// Variable index of R(k)[row, j] (k from 1).
    r_index: Vec<Vec<Option<usize>>>,
    /// Variable index of M(k)[a, j], offset by the first M index.
    m_index: Vec<Vec<Option<usize>>>,
}

impl ColumnLayout {
    fn new(problem: &SynthesisProblem, j: usize) -> Self {
        let horizon = problem.horizon();
        let (n, m) = (problem.sys.state_dim(), problem.sys.input_dim());
        let spec = &problem.support;
        let mut r_vars = Vec::new();
        let mut r_index = vec![vec![None; n]; horizon + 1];
        for k in 1..=horizon {
            let mask = spec.r_mask(k).expect("k within horizon");
            for i in 0..n {
                if mask.get(i, j) {
                    r_index[k][i] = Some(r_vars.len());
                    r_vars.push((k, i));
                }
            }
        }
        let k0 = problem.pair_causality().first_m_index();
        let mut m_vars = Vec::new();
        let mut m_index = vec![vec![None; m]; horizon + 1 - k0];
        let offset = r_vars.len();
        for k in k0..=horizon {
            let Some(mask) = spec.m_mask(k) else { continue };
            for a in 0..m {
                if mask.get(a, j) {
                    m_index[k - k0][a] = Some(offset + m_vars.len());
                    m_vars.push((k, a));
                }
            }
        }
        Self {
            r_vars,
            m_vars,
            r_index,
            m_index,
        }
    }

    fn len(&self) -> usize {
        self.r_vars.len() + self.m_vars.len()
    }
}

struct ColumnSolution {
    values: DVector<f64>,
    status: ColumnStatus,
}

fn solve_column(problem: &SynthesisProblem, j: usize) -> ColumnSolution {
    let sys = &problem.sys;
    let (a, b) = (sys.a(), sys.b());
    let (n, m) = (sys.state_dim(), sys.input_dim());
    let horizon = problem.horizon();
    let layout = ColumnLayout::new(problem, j);
    let nv = layout.len();
    let k0 = problem.pair_causality().first_m_index();
    let m_var = |k: usize, act: usize| k.checked_sub(k0).and_then(|idx| layout.m_index[idx][act]);

    // Start: R(1)e_j - B M(0)e_j = e_j, then R(k+1) - A R(k) - B M(k) = 0.
    let mut dyn_mat = DMatrix::zeros(n * horizon, nv);
    let mut dyn_rhs = DVector::zeros(n * horizon);
    dyn_rhs[j] = 1.0;
    for i in 0..n {
        if let Some(v) = layout.r_index[1][i] {
            dyn_mat[(i, v)] += 1.0;
        }
        if problem.mode == SynthesisMode::MDesign {
            for act in 0..m {
                if let Some(v) = m_var(0, act) {
                    dyn_mat[(i, v)] -= b[(i, act)];
                }
            }
        }
    }
    let add_transition = |mat: &mut DMatrix<f64>, row0: usize, k: usize| {
        for i in 0..n {
            for l in 0..n {
                if let Some(v) = layout.r_index[k][l] {
                    mat[(row0 + i, v)] -= a[(i, l)];
                }
            }
            for act in 0..m {
                if let Some(v) = m_var(k, act) {
                    mat[(row0 + i, v)] -= b[(i, act)];
                }
            }
        }
    };
    for k in 1..horizon {
        let row0 = n * k;
        for i in 0..n {
            if let Some(v) = layout.r_index[k + 1][i] {
                dyn_mat[(row0 + i, v)] += 1.0;
            }
        }
        add_transition(&mut dyn_mat, row0, k);
    }
    let mut closure = DMatrix::zeros(n, nv);
    add_transition(&mut closure, 0, horizon);
    closure.neg_mut();

    // Diagonal blocks of the objective: Q on R(k) rows, eps on M entries.
    let q = problem.cost.q();
    let mut hess = DMatrix::zeros(nv, nv);
    for (p1, &(k1, i1)) in layout.r_vars.iter().enumerate() {
        for (p2, &(k2, i2)) in layout.r_vars.iter().enumerate() {
            if k1 == k2 {
                hess[(p1, p2)] = q[(i1, i2)];
            }
        }
    }
    let offset = layout.r_vars.len();
    for p in 0..layout.m_vars.len() {
        hess[(offset + p, offset + p)] = problem.cost.eps();
    }

    let stage1 = least_squares(&dyn_mat, &dyn_rhs, RANK_TOL);
    let dynamics_residual = (&dyn_mat * &stage1.solution - &dyn_rhs).norm();
    let feasible = dynamics_residual <= INFEASIBLE_TOL;

    let closure_at_p = &closure * &stage1.solution;
    let reduced = &closure * &stage1.null_basis;
    let stage2 = least_squares(&reduced, &(-closure_at_p), RANK_TOL);
    let x2 = &stage1.solution + &stage1.null_basis * &stage2.solution;
    let basis = &stage1.null_basis * &stage2.null_basis;

    let (values, fallback) = if basis.ncols() == 0 {
        (x2, false)
    } else {
        let bt_h = basis.transpose() * &hess;
        let reduced_h = &bt_h * &basis;
        let (z, fallback) = solve_psd(&reduced_h, &(-(&bt_h * &x2)));
        (&x2 + &basis * z, fallback)
    };
    let stationarity = if basis.ncols() == 0 {
        0.0
    } else {
        (basis.transpose() * (&hess * &values)).norm()
    };
    let closure_residual = (&closure * &values).norm();
    let dynamics_residual = (&dyn_mat * &values - &dyn_rhs).norm();
    let objective = values.dot(&(&hess * &values));
    ColumnSolution {
        status: ColumnStatus {
            column: j,
            feasible,
            dynamics_residual,
            closure_residual,
            fir_closed: closure_residual <= CLOSURE_TOL,
            variables: nv,
            dynamics_rank: stage1.rank,
            free_dimension: basis.ncols(),
            stationarity,
            pseudo_inverse_fallback: fallback,
            objective,
        },
        values,
    }
}

/// Solves every disturbance column independently (in parallel) and
/// assembles the pair. Off-mask entries are never written.
pub fn synthesize(problem: &SynthesisProblem) -> Result<SynthesisResult> {
    let (n, m) = (problem.sys.state_dim(), problem.sys.input_dim());
    let horizon = problem.horizon();
    let solutions: Vec<ColumnSolution> = (0..n).into_par_iter().map(|j| solve_column(problem, j)).collect();

    let causality = problem.pair_causality();
    let mut pair = FirPair::zeros(n, m, horizon, causality);
    for (j, sol) in solutions.iter().enumerate() {
        let layout = ColumnLayout::new(problem, j);
        for (idx, &(k, i)) in layout.r_vars.iter().enumerate() {
            pair.r_mut(k).expect("k within horizon")[(i, j)] = sol.values[idx];
        }
        let offset = layout.r_vars.len();
        for (idx, &(k, act)) in layout.m_vars.iter().enumerate() {
            pair.m_mut(k).expect("k within causal range")[(act, j)] = sol.values[offset + idx];
        }
    }

    let columns: Vec<ColumnStatus> = solutions.into_iter().map(|s| s.status).collect();
    let stats = SolverStats {
        max_dynamics_residual: columns.iter().map(|c| c.dynamics_residual).fold(0.0, f64::max),
        max_closure_residual: columns.iter().map(|c| c.closure_residual).fold(0.0, f64::max),
        max_stationarity: columns.iter().map(|c| c.stationarity).fold(0.0, f64::max),
        pseudo_inverse_fallbacks: columns.iter().filter(|c| c.pseudo_inverse_fallback).count(),
        infeasible_columns: columns.iter().filter(|c| !c.feasible).map(|c| c.column).collect(),
        open_columns: columns.iter().filter(|c| !c.fir_closed).map(|c| c.column).collect(),
    };
    Ok(SynthesisResult {
        mode: problem.mode,
        objective: h2_cost_sq(&pair, &problem.cost)?,
        state_cost: state_cost_sq(&pair, &problem.cost)?,
        pair,
        columns,
        stats,
    })
}

/// Per-condition residual norms of the closed-loop equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityBreakdown {
    /// `‖R(1) - I - B M(0)‖_F` (without the `M(0)` term for strictly causal pairs).
    pub start: f64,
    /// `max_k ‖R(k+1) - A R(k) - B M(k)‖_F` for `1 <= k < T`.
    pub recursion: f64,
    /// `‖A R(T) + B M(T)‖_F`.
    pub closure: f64,
}

impl FeasibilityBreakdown {
    pub fn max(&self) -> f64 {
        self.start.max(self.recursion).max(self.closure)
    }
}

pub fn feasibility_breakdown(pair: &FirPair, sys: &LinearSystem) -> Result<FeasibilityBreakdown> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if pair.state_dim() != n || pair.input_dim() != m {
        return Err(dim_err(
            "pair vs system",
            format!("n={n}, m={m}"),
            format!("n={}, m={}", pair.state_dim(), pair.input_dim()),
        ));
    }
    let (a, b) = (sys.a(), sys.b());
    let horizon = pair.horizon();
    let mut start = pair.r(1).unwrap() - DMatrix::<f64>::identity(n, n);
    if let Some(m0) = pair.m(0) {
        start -= b * m0;
    }
    let step = |k: usize| a * pair.r(k).unwrap() + b * pair.m(k).unwrap();
    let recursion = (1..horizon)
        .map(|k| (pair.r(k + 1).unwrap() - step(k)).norm())
        .fold(0.0, f64::max);
    Ok(FeasibilityBreakdown {
        start: start.norm(),
        recursion,
        closure: step(horizon).norm(),
    })
}

/// Largest violation over start, recursion and closure conditions.
pub fn feasibility_residual(pair: &FirPair, sys: &LinearSystem) -> Result<f64> {
    Ok(feasibility_breakdown(pair, sys)?.max())
}

pub fn normalized_cost(objective: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument(format!("baseline cost must be positive, got {baseline}")));
    }
    Ok(objective / baseline)
}

#[derive(Debug, Clone)]
pub struct StaticGainFit {
    pub k: DMatrix<f64>,
    /// `sqrt(Σ_k ‖M(k) - K R(k)‖_F²)`, with `R(0) = 0`.
    pub residual: f64,
    /// `residual` divided by `sqrt(Σ_k ‖M(k)‖_F²)` (0 for a zero `M`).
    pub relative_residual: f64,
}

/// Least-squares static gain `K` with `M(k) ≈ K R(k)` for all `k`.
pub fn to_static_gain_check(pair: &FirPair) -> StaticGainFit {
    let (n, m) = (pair.state_dim(), pair.input_dim());
    let mut mr = DMatrix::zeros(m, n);
    let mut rr = DMatrix::zeros(n, n);
    for k in 1..=pair.horizon() {
        let r = pair.r(k).unwrap();
        mr += pair.m(k).unwrap() * r.transpose();
        rr += r * r.transpose();
    }
    let tol = 1e-12 * linalg::max_abs(&rr).max(1.0);
    let pinv = rr.pseudo_inverse(tol).expect("nonnegative tolerance");
    let k = mr * pinv;
    let mut sq = 0.0;
    let mut m_sq = 0.0;
    for kk in pair.m_indices() {
        let mk = pair.m(kk).unwrap();
        m_sq += mk.norm_squared();
        sq += match pair.r(kk) {
            Some(r) => (mk - &k * r).norm_squared(),
            None => mk.norm_squared(),
        };
    }
    let residual = sq.sqrt();
    StaticGainFit {
        k,
        residual,
        relative_residual: if m_sq > 0.0 { residual / m_sq.sqrt() } else { 0.0 },
    }
}
