//! Localized state-feedback synthesis on networked linear plants.
//!
//! The crate covers the whole pipeline: ring and general graph plants,
//! finite-horizon closed-loop pairs `(R, M)` stored as spectral elements,
//! locality/delay sparsity sets, the dense LQR baseline, column-wise
//! synthesis of localized pairs, centralized simulation, and the distributed
//! per-node realization with its pathway census.
//!
//! Node indices are 0-based in this API; file formats are 1-based.

pub mod constraints;
pub mod error;
pub mod linalg;
pub mod lqr;
pub mod meso;
pub mod plant;
pub mod simulate;
pub mod spectral;
pub mod synthesis;

pub use constraints::{locality_support, LocalityRule, Mask, SupportSpec};
pub use error::{Error, Result};
pub use lqr::{closed_loop_fir, lqr_cost, solve_dare, LqrSolution};
pub use meso::{
    build_mesocircuit, census, memory_report, simulate_distributed, MesoReport, MessageLog, NodeCircuit,
};
pub use plant::{build_ring, hop_distance, LinearSystem, PlantConfig, RingSpec, Topology};
pub use simulate::{
    localization_radius, simulate_mdesign, simulate_sls, simulate_static, Localization, MemoryState, Trajectory,
};
pub use spectral::{h2_cost_sq, impulse_columns, support_of, Causality, CostSpec, FirPair};
pub use synthesis::{
    feasibility_residual, normalized_cost, synthesize, SynthesisMode, SynthesisProblem, SynthesisResult,
};
