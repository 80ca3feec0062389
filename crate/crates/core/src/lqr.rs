//! Infinite-horizon LQR baseline: DARE by value iteration, the closed-loop
//! spectral elements of a static gain, and the exact H2 cost.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg;
use crate::plant::LinearSystem;
use crate::spectral::{Causality, CostSpec, FirPair};

pub const DARE_TOL: f64 = 1e-9;
pub const DARE_MAX_ITER: usize = 100_000;
pub const DARE_DIVERGENCE_BOUND: f64 = 1e12;
pub const LYAPUNOV_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Serialize)]
pub struct LqrSolution {
    #[serde(serialize_with = "serialize_rows")]
    pub k: DMatrix<f64>,
    #[serde(serialize_with = "serialize_rows")]
    pub p: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of `P - Ric(P)`.
    pub residual: f64,
    pub closed_loop_radius: f64,
}

fn serialize_rows<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::to_rows(m).serialize(s)
}

struct RiccatiStep {
    next: DMatrix<f64>,
    gain: DMatrix<f64>,
}

/// One value-iteration step and the gain it implies.
fn riccati_step(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, eps: f64, p: &DMatrix<f64>) -> Result<RiccatiStep> {
    let m = b.ncols();
    let bt_p = b.transpose() * p;
    let gram = DMatrix::identity(m, m) * eps + &bt_p * b;
    let bt_p_a = &bt_p * a;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("eps*I + BᵀPB is not positive definite".into()))?;
    let gain = -chol.solve(&bt_p_a);
    // Q + AᵀPA + AᵀPB·K with K = -(εI + BᵀPB)⁻¹BᵀPA
    let mut next = q + a.transpose() * p * a + bt_p_a.transpose() * &gain;
    next = (&next + next.transpose()) * 0.5;
    Ok(RiccatiStep { next, gain })
}

fn check_dims(sys: &LinearSystem, cost: &CostSpec) -> Result<()> {
    if cost.q().nrows() != sys.state_dim() {
        return Err(dim_err("Q", sys.state_dim(), cost.q().nrows()));
    }
    Ok(())
}

/// Solves the DARE by fixed-point iteration from `P = Q`.
pub fn solve_dare(sys: &LinearSystem, cost: &CostSpec) -> Result<LqrSolution> {
    check_dims(sys, cost)?;
    if !(cost.eps() > 0.0) {
        return Err(Error::InvalidArgument("DARE needs a strictly positive input penalty eps".into()));
    }
    let (a, b, q) = (sys.a(), sys.b(), cost.q());
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for iter in 1..=DARE_MAX_ITER {
        let step = riccati_step(a, b, q, cost.eps(), &p)?;
        residual = (&step.next - &p).norm();
        p = step.next;
        if !p.norm().is_finite() || p.norm() > DARE_DIVERGENCE_BOUND {
            return Err(Error::Diverged { what: "DARE value iteration" });
        }
        if residual <= DARE_TOL {
            let fin = riccati_step(a, b, q, cost.eps(), &p)?;
            let residual = (&fin.next - &p).norm();
            let k = fin.gain;
            let radius = linalg::spectral_radius(&(a + b * &k));
            if radius >= 1.0 {
                return Err(Error::Unstable { spectral_radius: radius });
            }
            return Ok(LqrSolution {
                k,
                p,
                iterations: iter,
                residual,
                closed_loop_radius: radius,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "DARE value iteration",
        iterations: DARE_MAX_ITER,
        residual,
    })
}

#[derive(Debug, Clone)]
pub struct ClosedLoopFir {
    pub pair: FirPair,
    /// `‖R(T)‖_F`.
    pub tail_mass: f64,
    /// Set when `ρ(A + BK) >= 1`.
    pub unstable: bool,
}

/// Truncated closed-loop response of `u = Kx`: `R(1) = I`,
/// `R(k+1) = (A + BK) R(k)`, `M(k) = K R(k)`.
pub fn closed_loop_fir(sys: &LinearSystem, k: &DMatrix<f64>, horizon: usize) -> Result<ClosedLoopFir> {
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if k.shape() != (m, n) {
        return Err(dim_err("K", format!("{m}x{n}"), format!("{:?}", k.shape())));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon T must be at least 1".into()));
    }
    let acl = sys.a() + sys.b() * k;
    let mut r = Vec::with_capacity(horizon);
    r.push(DMatrix::identity(n, n));
    for idx in 1..horizon {
        r.push(&acl * &r[idx - 1]);
    }
    let mm = r.iter().map(|rk| k * rk).collect();
    let tail_mass = r[horizon - 1].norm();
    Ok(ClosedLoopFir {
        pair: FirPair::new(Causality::StrictlyCausal, r, mm)?,
        tail_mass,
        unstable: linalg::spectral_radius(&acl) >= 1.0,
    })
}

/// Solves `X = FᵀXF + W` by Smith doubling; `ρ(F) < 1` required.
pub fn solve_lyapunov(f: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let radius = linalg::spectral_radius(f);
    if radius >= 1.0 {
        return Err(Error::Unstable { spectral_radius: radius });
    }
    let tol = LYAPUNOV_TOL * w.norm().max(1.0);
    let mut x = w.clone();
    let mut fk = f.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..64 {
        x = &x + fk.transpose() * &x * &fk;
        fk = &fk * &fk;
        residual = (&x - f.transpose() * &x * f - w).norm();
        if residual <= tol || linalg::max_abs(&fk) == 0.0 {
            return Ok((&x + x.transpose()) * 0.5);
        }
        if !x.norm().is_finite() {
            return Err(Error::Diverged { what: "Lyapunov doubling" });
        }
    }
    Err(Error::NoConvergence {
        what: "Lyapunov doubling",
        iterations: 64,
        residual,
    })
}

/// Exact infinite-horizon cost `trace(X)`, `X = A_clᵀ X A_cl + Q + eps KᵀK`.
pub fn lqr_cost(sys: &LinearSystem, k: &DMatrix<f64>, cost: &CostSpec) -> Result<f64> {
    check_dims(sys, cost)?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if k.shape() != (m, n) {
        return Err(dim_err("K", format!("{m}x{n}"), format!("{:?}", k.shape())));
    }
    let acl = sys.a() + sys.b() * k;
    let w = cost.q() + k.transpose() * k * cost.eps();
    Ok(solve_lyapunov(&acl, &w)?.trace())
}
