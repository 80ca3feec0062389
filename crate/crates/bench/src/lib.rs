//! Shared fixtures for the criterion benches in `benches/`.

use mesoloc_core::{build_ring, locality_support, Causality, CostSpec, LinearSystem, LocalityRule, RingSpec, SupportSpec};

pub fn ring8() -> LinearSystem {
    build_ring(&RingSpec::benchmark()).expect("benchmark ring")
}

pub fn two_hop(sys: &LinearSystem, horizon: usize) -> SupportSpec {
    locality_support(sys, LocalityRule::hops(2), horizon, Causality::StrictlyCausal).expect("2-hop masks")
}

pub fn unit_cost(sys: &LinearSystem) -> CostSpec {
    CostSpec::identity(sys.state_dim(), 1e-6).expect("identity cost")
}
