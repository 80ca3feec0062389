//! Time-domain closed-loop simulation.
//!
//! Convention: `x(t+1) = A x(t) + B u(t) + w(t)`, so an impulse `w(0) = e_i`
//! first shows up in `x(1)`. A nonzero `x(0)` is handled as `w(-1) = x(0)`.

use std::collections::{BTreeSet, VecDeque};
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::linalg::fmt_f64;
use crate::plant::LinearSystem;
use crate::spectral::{Causality, FirPair};

/// Tolerance of the post-hoc dynamics check, scaled by the signal size.
pub const DYNAMICS_TOL: f64 = 1e-10;
/// Tolerance on `R(1) = I` for the internal-feedback realization.
pub const R1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: usize,
    /// `x(0..=steps)`.
    pub x: Vec<DVector<f64>>,
    /// `u(0..steps)`.
    pub u: Vec<DVector<f64>>,
    /// `w(0..steps)`.
    pub w: Vec<DVector<f64>>,
    /// `δ̂(0..steps)`, internal-feedback realizations only.
    pub delta_hat: Option<Vec<DVector<f64>>>,
    /// `x̂(0..steps)`, internal-feedback realizations only.
    pub x_hat: Option<Vec<DVector<f64>>>,
    /// Node of each actuator, for exports.
    pub actuated: Vec<usize>,
}

impl Trajectory {
    /// `max_t ‖x(t+1) - A x(t) - B u(t) - w(t)‖_∞`.
    pub fn dynamics_residual(&self, sys: &LinearSystem) -> f64 {
        (0..self.steps)
            .map(|t| (&self.x[t + 1] - sys.a() * &self.x[t] - sys.b() * &self.u[t] - &self.w[t]).amax())
            .fold(0.0, f64::max)
    }

    fn verify(self, sys: &LinearSystem) -> Result<Self> {
        let scale = self.x.iter().chain(&self.u).chain(&self.w).map(|v| v.amax()).fold(1.0, f64::max);
        let residual = self.dynamics_residual(sys);
        if residual > DYNAMICS_TOL * scale {
            return Err(Error::Realization(format!("trajectory violates the plant dynamics by {residual:e}")));
        }
        Ok(self)
    }

    /// Largest entrywise gap in `x` and `u` between two trajectories.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        let gap = |a: &[DVector<f64>], b: &[DVector<f64>]| {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter().zip(b).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max)
        };
        gap(&self.x, &other.x).max(gap(&self.u, &other.u))
    }

    /// Tidy CSV `t,signal,node,value`, 1-based nodes; `u` rows carry the
    /// node of the actuator.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "signal", "node", "value"])?;
        let mut emit = |signal: &str, series: &[DVector<f64>], nodes: Option<&[usize]>| -> Result<()> {
            for (t, v) in series.iter().enumerate() {
                for (idx, val) in v.iter().enumerate() {
                    let node = nodes.map_or(idx, |map| map[idx]) + 1;
                    w.write_record([t.to_string(), signal.to_string(), node.to_string(), fmt_f64(*val)])?;
                }
            }
            Ok(())
        };
        emit("x", &self.x, None)?;
        emit("u", &self.u, Some(&self.actuated))?;
        emit("w", &self.w, None)?;
        if let Some(d) = &self.delta_hat {
            emit("delta_hat", d, None)?;
        }
        if let Some(xh) = &self.x_hat {
            emit("x_hat", xh, None)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// FIR input buffer: the last `depth` vectors, newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    buf: VecDeque<DVector<f64>>,
}

impl MemoryState {
    /// Zero-filled buffer (system at rest).
    pub fn new(depth: usize, dim: usize) -> Self {
        Self {
            buf: (0..depth).map(|_| DVector::zeros(dim)).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.buf.len()
    }

    /// Prepends `v` and discards the oldest entry.
    pub fn push(&mut self, v: DVector<f64>) {
        if self.buf.is_empty() {
            return;
        }
        self.buf.pop_back();
        self.buf.push_front(v);
    }

    /// Entry `lag` steps old (0 is the newest).
    pub fn get(&self, lag: usize) -> Option<&DVector<f64>> {
        self.buf.get(lag)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.buf.iter()
    }
}

/// Unit impulse at `node` and `time`, zero elsewhere, over `steps` steps.
pub fn impulse(n: usize, node: usize, time: usize, steps: usize) -> Vec<DVector<f64>> {
    (0..steps)
        .map(|t| {
            let mut v = DVector::zeros(n);
            if t == time && node < n {
                v[node] = 1.0;
            }
            v
        })
        .collect()
}

fn padded_disturbance(sys: &LinearSystem, w: &[DVector<f64>], steps: usize) -> Result<Vec<DVector<f64>>> {
    let n = sys.state_dim();
    if let Some(bad) = w.iter().find(|v| v.len() != n) {
        return Err(dim_err("disturbance vector", n, bad.len()));
    }
    Ok((0..steps).map(|t| w.get(t).cloned().unwrap_or_else(|| DVector::zeros(n))).collect())
}

fn initial_state(sys: &LinearSystem, x0: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    let n = sys.state_dim();
    match x0 {
        Some(v) if v.len() != n => Err(dim_err("x(0)", n, v.len())),
        Some(v) => Ok(v.clone()),
        None => Ok(DVector::zeros(n)),
    }
}

/// Static feedback `u(t) = K x(t)`.
pub fn simulate_static(
    sys: &LinearSystem,
    k: &DMatrix<f64>,
    w: &[DVector<f64>],
    steps: usize,
    x0: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if k.shape() != (m, n) {
        return Err(dim_err("K", format!("{m}x{n}"), format!("{:?}", k.shape())));
    }
    let w = padded_disturbance(sys, w, steps)?;
    let mut x = vec![initial_state(sys, x0)?];
    let mut u = Vec::with_capacity(steps);
    for t in 0..steps {
        let ut = k * &x[t];
        x.push(sys.a() * &x[t] + sys.b() * &ut + &w[t]);
        u.push(ut);
    }
    Trajectory {
        steps,
        x,
        u,
        w,
        delta_hat: None,
        x_hat: None,
        actuated: sys.actuated().to_vec(),
    }
    .verify(sys)
}

fn check_pair(sys: &LinearSystem, pair: &FirPair) -> Result<()> {
    if pair.state_dim() != sys.state_dim() || pair.input_dim() != sys.input_dim() {
        return Err(dim_err(
            "pair vs system",
            format!("n={}, m={}", sys.state_dim(), sys.input_dim()),
            format!("n={}, m={}", pair.state_dim(), pair.input_dim()),
        ));
    }
    Ok(())
}

/// Disturbance feedback `u(t) = Σ_k M(k) w(t-k)` with the true `w` fed to
/// the controller.
pub fn simulate_mdesign(
    sys: &LinearSystem,
    pair: &FirPair,
    w: &[DVector<f64>],
    steps: usize,
    x0: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    check_pair(sys, pair)?;
    let pair = pair.to_causal();
    let horizon = pair.horizon();
    let w = padded_disturbance(sys, w, steps)?;
    let x_init = initial_state(sys, x0)?;
    let mut memory = MemoryState::new(horizon, sys.state_dim());
    memory.push(x_init.clone());
    let mut x = vec![x_init];
    let mut u = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut ut = pair.m(0).unwrap() * &w[t];
        for k in 1..=horizon {
            ut.gemv(1.0, pair.m(k).unwrap(), memory.get(k - 1).unwrap(), 1.0);
        }
        memory.push(w[t].clone());
        x.push(sys.a() * &x[t] + sys.b() * &ut + &w[t]);
        u.push(ut);
    }
    Trajectory {
        steps,
        x,
        u,
        w,
        delta_hat: None,
        x_hat: None,
        actuated: sys.actuated().to_vec(),
    }
    .verify(sys)
}

/// Internal-feedback realization of a strictly causal pair:
/// `x̂(t) = Σ_{k≥2} R(k) δ̂(t-k+1)`, `δ̂(t) = x(t) - x̂(t)`,
/// `u(t) = Σ_{k≥1} M(k) δ̂(t-k+1)`.
pub fn simulate_sls(
    sys: &LinearSystem,
    pair: &FirPair,
    w: &[DVector<f64>],
    steps: usize,
    x0: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    check_pair(sys, pair)?;
    check_sls_pair(pair)?;
    let horizon = pair.horizon();
    let n = sys.state_dim();
    let w = padded_disturbance(sys, w, steps)?;
    let mut memory = MemoryState::new(horizon, n);
    let mut x = vec![initial_state(sys, x0)?];
    let (mut u, mut delta_hat, mut x_hat) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..steps {
        // R(1..=T) and, for a strictly causal pair, M(1..=T): element `lag`
        // multiplies δ̂(t - lag).
        let xh = DVector::from_fn(n, |i, _| lagged_sum(pair.r_elements(), 1..horizon, &memory, 1, i));
        let dh = &x[t] - &xh;
        memory.push(dh.clone());
        let ut = DVector::from_fn(sys.input_dim(), |a, _| lagged_sum(pair.m_elements(), 0..horizon, &memory, 0, a));
        x.push(sys.a() * &x[t] + sys.b() * &ut + &w[t]);
        u.push(ut);
        delta_hat.push(dh);
        x_hat.push(xh);
    }
    Trajectory {
        steps,
        x,
        u,
        w,
        delta_hat: Some(delta_hat),
        x_hat: Some(x_hat),
        actuated: sys.actuated().to_vec(),
    }
    .verify(sys)
}

/// `Σ_lag Σ_j elems[lag][row, j] · memory[lag - offset][j]`, lag-major with
/// sources in index order so the per-node circuits round identically.
fn lagged_sum(elems: &[DMatrix<f64>], lags: std::ops::Range<usize>, memory: &MemoryState, offset: usize, row: usize) -> f64 {
    let mut acc = 0.0;
    for lag in lags {
        let (coef, past) = (&elems[lag], memory.get(lag - offset).expect("memory holds T entries"));
        for j in 0..coef.ncols() {
            acc += coef[(row, j)] * past[j];
        }
    }
    acc
}

pub(crate) fn check_sls_pair(pair: &FirPair) -> Result<()> {
    if pair.causality() != Causality::StrictlyCausal {
        return Err(Error::Realization("internal-feedback realization needs a strictly causal pair".into()));
    }
    let n = pair.state_dim();
    let gap = (pair.r(1).unwrap() - DMatrix::<f64>::identity(n, n)).amax();
    if gap > R1_TOL {
        return Err(Error::Realization(format!("R(1) differs from I by {gap:e}")));
    }
    Ok(())
}

/// Where an impulse response is active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Localization {
    /// Largest hop distance from the source of any active node.
    pub radius: usize,
    /// Nodes with `|x_i(t)| > tol` at some `t`.
    pub active_states: BTreeSet<usize>,
    /// Nodes whose actuator has `|u(t)| > tol` at some `t`.
    pub active_actuators: BTreeSet<usize>,
    /// Union of both sets.
    pub active_nodes: BTreeSet<usize>,
}

/// Activity footprint of a single-impulse trajectory.
pub fn localization_radius(traj: &Trajectory, sys: &LinearSystem, source: usize, tol: f64) -> Localization {
    let n = sys.state_dim();
    let active_states: BTreeSet<usize> =
        (0..n).filter(|&i| traj.x.iter().any(|v| v[i].abs() > tol)).collect();
    let active_actuators: BTreeSet<usize> = sys
        .actuated()
        .iter()
        .enumerate()
        .filter(|&(a, _)| traj.u.iter().any(|v| v[a].abs() > tol))
        .map(|(_, &node)| node)
        .collect();
    let active_nodes: BTreeSet<usize> = active_states.union(&active_actuators).copied().collect();
    let dist = sys.topology().distances_from(source);
    let radius = active_nodes
        .iter()
        .map(|&i| dist[i].unwrap_or(n))
        .max()
        .unwrap_or(0);
    Localization {
        radius,
        active_states,
        active_actuators,
        active_nodes,
    }
}

/// First time each state exceeds `tol` in magnitude.
pub fn first_activation(traj: &Trajectory, tol: f64) -> Vec<Option<usize>> {
    let n = traj.x.first().map_or(0, |v| v.len());
    (0..n)
        .map(|i| traj.x.iter().position(|v| v[i].abs() > tol))
        .collect()
}
