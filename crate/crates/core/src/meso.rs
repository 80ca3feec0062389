//! Distributed realization of a strictly causal pair: one local controller
//! and memory patch per node, exchanging scalar `δ̂` values over delayed
//! links in lock-step rounds.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::constraints::{check_mask, SupportSpec};
use crate::error::{Error, Result};
use crate::linalg::fmt_f64;
use crate::plant::LinearSystem;
use crate::simulate::{check_sls_pair, Trajectory};
use crate::spectral::{FirPair, DEFAULT_TAU};

/// Incoming `δ̂` link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InLink {
    pub source: usize,
    /// Steps between sending and delivery.
    pub delay: usize,
}

/// One row of a memory patch: the values of `δ̂_source` at lags
/// `delay..=T-1`, with per-lag coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchRow {
    pub source: usize,
    pub delay: usize,
    /// `R(lag+1)[node, source]` for `lag` in `0..T` (the `R(1)` slot is
    /// unused).
    pub r_coef: Vec<f64>,
    /// `M(lag+1)[actuator, source]`, actuated nodes only.
    pub m_coef: Option<Vec<f64>>,
}

impl PatchRow {
    pub fn depth(&self, horizon: usize) -> usize {
        horizon.saturating_sub(self.delay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeCircuit {
    pub node: usize,
    /// Index of the actuator at this node, if any.
    pub actuator: Option<usize>,
    pub in_neighbors: Vec<InLink>,
    /// Own row first, then one row per in-neighbor in source order.
    pub patch: Vec<PatchRow>,
    pub horizon: usize,
}

impl NodeCircuit {
    pub fn is_actuated(&self) -> bool {
        self.actuator.is_some()
    }

    /// `(source, depth)` for every patch row.
    pub fn patch_shape(&self) -> Vec<(usize, usize)> {
        self.patch.iter().map(|r| (r.source, r.depth(self.horizon))).collect()
    }
}

/// Builds the per-node circuits.
///
/// Node `i` listens to every `j != i` with an entry above `tau` in row `i` of
/// some `R(k)`, `k >= 2`, or in its actuator's row of some `M(k)`. Link
/// delays are `comm_delay * dist(i, j)` from the support's locality rule.
pub fn build_mesocircuit(sys: &LinearSystem, pair: &FirPair, support: &SupportSpec, tau: f64) -> Result<Vec<NodeCircuit>> {
    check_sls_pair(pair)?;
    let check = check_mask(pair, support, 0.0)?;
    if !check.ok {
        let largest = check.violations.iter().map(|v| v.value.abs()).fold(0.0, f64::max);
        return Err(Error::SupportViolation {
            count: check.violations.len(),
            largest,
        });
    }
    let n = sys.state_dim();
    let horizon = pair.horizon();
    let comm_delay = support.comm_delay();
    let dist = sys.topology().distance_matrix();
    let mut circuits = Vec::with_capacity(n);
    for i in 0..n {
        let actuator = sys.actuator_at(i);
        let row_for = |j: usize, delay: usize| PatchRow {
            source: j,
            delay,
            r_coef: (0..horizon)
                .map(|lag| if lag == 0 { 0.0 } else { pair.r(lag + 1).unwrap()[(i, j)] })
                .collect(),
            m_coef: actuator.map(|a| (0..horizon).map(|lag| pair.m(lag + 1).unwrap()[(a, j)]).collect()),
        };
        let mut patch = vec![row_for(i, 0)];
        let mut in_neighbors = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            let row = row_for(j, 0);
            let used = row
                .r_coef
                .iter()
                .chain(row.m_coef.iter().flatten())
                .any(|v| v.abs() > tau);
            if !used {
                continue;
            }
            let hops = dist[i][j]
                .ok_or_else(|| Error::Realization(format!("node {i} depends on unreachable node {j}")))?;
            let delay = comm_delay * hops;
            in_neighbors.push(InLink { source: j, delay });
            patch.push(PatchRow { delay, ..row });
        }
        circuits.push(NodeCircuit {
            node: i,
            actuator,
            in_neighbors,
            patch,
            horizon,
        });
    }
    Ok(circuits)
}

/// Patch geometry implied by a sparsity set alone: node `i` listens to every
/// `j != i` that some mask allows in its `R(k)` rows (`k >= 2`) or its
/// actuator's `M(k)` rows. Coefficients are left at zero; use this for memory
/// planning when no pair is at hand.
pub fn plan_from_support(sys: &LinearSystem, support: &SupportSpec) -> Result<Vec<NodeCircuit>> {
    let n = sys.state_dim();
    let horizon = support.horizon();
    let comm_delay = support.comm_delay();
    let dist = sys.topology().distance_matrix();
    let mut circuits = Vec::with_capacity(n);
    for i in 0..n {
        let actuator = sys.actuator_at(i);
        let row = |j: usize, delay: usize| PatchRow {
            source: j,
            delay,
            r_coef: vec![0.0; horizon],
            m_coef: actuator.map(|_| vec![0.0; horizon]),
        };
        let mut patch = vec![row(i, 0)];
        let mut in_neighbors = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            let in_r = (2..=horizon).any(|k| support.r_mask(k).is_some_and(|m| m.get(i, j)));
            let in_m = actuator.is_some_and(|a| (1..=horizon).any(|k| support.m_mask(k).is_some_and(|m| m.get(a, j))));
            if !(in_r || in_m) {
                continue;
            }
            let hops = dist[i][j]
                .ok_or_else(|| Error::Realization(format!("node {i} may use unreachable node {j}")))?;
            let delay = comm_delay * hops;
            in_neighbors.push(InLink { source: j, delay });
            patch.push(row(j, delay));
        }
        circuits.push(NodeCircuit {
            node: i,
            actuator,
            in_neighbors,
            patch,
            horizon,
        });
    }
    Ok(circuits)
}

/// Convenience wrapper with the default zero threshold.
pub fn build_mesocircuit_default(sys: &LinearSystem, pair: &FirPair, support: &SupportSpec) -> Result<Vec<NodeCircuit>> {
    build_mesocircuit(sys, pair, support, DEFAULT_TAU)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Message {
    pub t_send: usize,
    pub t_deliver: usize,
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageLog {
    pub messages: Vec<Message>,
}

impl MessageLog {
    /// Number of messages sent at each step `0..steps`.
    pub fn per_step_counts(&self, steps: usize) -> Vec<usize> {
        let mut counts = vec![0; steps];
        for msg in &self.messages {
            if let Some(c) = counts.get_mut(msg.t_send) {
                *c += 1;
            }
        }
        counts
    }

    /// CSV `t_send,t_deliver,from,to,value` with 1-based nodes.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_send", "t_deliver", "from", "to", "value"])?;
        for m in &self.messages {
            w.write_record([
                m.t_send.to_string(),
                m.t_deliver.to_string(),
                (m.from + 1).to_string(),
                (m.to + 1).to_string(),
                fmt_f64(m.value),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DistributedRun {
    pub trajectory: Trajectory,
    pub log: MessageLog,
}

fn check_patches(circuits: &[NodeCircuit]) -> Result<()> {
    for c in circuits {
        for row in &c.patch {
            let max_lag = c.horizon.saturating_sub(1);
            let coefs = row.r_coef.iter().chain(row.m_coef.iter().flatten());
            // r_coef and m_coef share the lag axis.
            let needed = coefs.enumerate().map(|(idx, v)| (idx % c.horizon, *v));
            for (lag, v) in needed {
                if v != 0.0 && lag < row.delay {
                    return Err(Error::MemoryUnderrun {
                        node: c.node,
                        source_node: row.source,
                        lag,
                        min_lag: row.delay,
                        max_lag,
                    });
                }
            }
        }
    }
    Ok(())
}

/// `Σ_lag Σ_source coef · value`, lag-major with sources in index order, the
/// same order as the centralized realization.
fn lagged_sum(
    c: &NodeCircuit,
    patch: &[VecDeque<f64>],
    order: &[usize],
    first_lag: usize,
    coef: impl Fn(&PatchRow, usize) -> f64,
) -> f64 {
    let mut acc = 0.0;
    for lag in first_lag..c.horizon {
        for &r in order {
            let row = &c.patch[r];
            if let Some(val) = lag.checked_sub(row.delay).and_then(|q| patch[r].get(q)) {
                acc += coef(row, lag) * val;
            }
        }
    }
    acc
}

/// Runs the circuits in lock-step rounds against the plant.
///
/// Round `t`: every patch row shifts and links with delay `>= 1` deliver
/// the value sent at `t - delay`; each node forms `x̂_i(t)` from lags
/// `>= 1` and `δ̂_i(t) = x_i(t) - x̂_i(t)`; every node sends `δ̂_i(t)` to its
/// out-neighbors, delay-0 links delivering at once; actuated nodes emit
/// `u_i(t)`; the plant advances.
pub fn simulate_distributed(
    circuits: &[NodeCircuit],
    sys: &LinearSystem,
    w: &[DVector<f64>],
    steps: usize,
) -> Result<DistributedRun> {
    let n = sys.state_dim();
    if circuits.len() != n || circuits.iter().enumerate().any(|(i, c)| c.node != i) {
        return Err(Error::Realization("need exactly one circuit per node, in node order".into()));
    }
    if let Some(bad) = w.iter().find(|v| v.len() != n) {
        return Err(crate::error::dim_err("disturbance vector", n, bad.len()));
    }
    check_patches(circuits)?;

    // patches[i][r]: deque index q holds lag (delay + q) after the round shift.
    let mut patches: Vec<Vec<VecDeque<f64>>> = circuits
        .iter()
        .map(|c| c.patch.iter().map(|r| VecDeque::from(vec![0.0; r.depth(c.horizon)])).collect())
        .collect();
    // (receiver, patch row) for every link leaving each node.
    let mut out_links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for c in circuits {
        for (r, row) in c.patch.iter().enumerate().skip(1) {
            out_links[row.source].push((c.node, r));
        }
    }
    // Patch rows of each node ordered by source, for the lag-major sums.
    let by_source: Vec<Vec<usize>> = circuits
        .iter()
        .map(|c| {
            let mut order: Vec<usize> = (0..c.patch.len()).collect();
            order.sort_by_key(|&r| c.patch[r].source);
            order
        })
        .collect();
    // Values in flight keyed by delivery round.
    let mut in_flight: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();

    let zero = DVector::zeros(n);
    let mut x = vec![DVector::zeros(n)];
    let (mut u, mut w_used, mut delta_hat, mut x_hat) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut log = MessageLog::default();

    for t in 0..steps {
        for patch in &mut patches {
            for row in patch.iter_mut() {
                if row.pop_back().is_some() {
                    row.push_front(0.0);
                }
            }
        }
        for (to, r, value) in in_flight.remove(&t).unwrap_or_default() {
            if let Some(slot) = patches[to][r].front_mut() {
                *slot = value;
            }
        }

        let mut xh = DVector::zeros(n);
        let mut dh = DVector::zeros(n);
        for c in circuits {
            let i = c.node;
            let acc = lagged_sum(c, &patches[i], &by_source[i], 1, |row, lag| row.r_coef[lag]);
            xh[i] = acc;
            dh[i] = x[t][i] - acc;
        }

        for i in 0..n {
            if let Some(slot) = patches[i][0].front_mut() {
                *slot = dh[i];
            }
            for &(to, r) in &out_links[i] {
                let delay = circuits[to].patch[r].delay;
                log.messages.push(Message {
                    t_send: t,
                    t_deliver: t + delay,
                    from: i,
                    to,
                    value: dh[i],
                });
                if delay == 0 {
                    if let Some(slot) = patches[to][r].front_mut() {
                        *slot = dh[i];
                    }
                } else if delay < circuits[to].horizon {
                    in_flight.entry(t + delay).or_default().push((to, r, dh[i]));
                }
            }
        }

        let mut ut = DVector::zeros(sys.input_dim());
        for c in circuits {
            let (Some(a), i) = (c.actuator, c.node) else { continue };
            ut[a] = lagged_sum(c, &patches[i], &by_source[i], 0, |row, lag| {
                row.m_coef.as_ref().expect("actuated node stores M rows")[lag]
            });
        }

        let wt = w.get(t).unwrap_or(&zero).clone();
        x.push(sys.a() * &x[t] + sys.b() * &ut + &wt);
        u.push(ut);
        w_used.push(wt);
        delta_hat.push(dh);
        x_hat.push(xh);
    }

    let trajectory = Trajectory {
        steps,
        x,
        u,
        w: w_used,
        delta_hat: Some(delta_hat),
        x_hat: Some(x_hat),
        actuated: sys.actuated().to_vec(),
    };
    let residual = trajectory.dynamics_residual(sys);
    let scale = trajectory.x.iter().map(|v| v.amax()).fold(1.0, f64::max);
    if residual > crate::simulate::DYNAMICS_TOL * scale {
        return Err(Error::Realization(format!("distributed run violates the plant dynamics by {residual:e}")));
    }
    Ok(DistributedRun { trajectory, log })
}

/// Total-pathway to forward-path ratio, or a flag when nothing is actuated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IfpRatio {
    Value(f64),
    NoForwardPaths,
}

impl Serialize for IfpRatio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Value(v) => s.serialize_f64(*v),
            Self::NoForwardPaths => s.serialize_str("no forward paths"),
        }
    }
}

/// Pathway census at node/edge granularity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MesoReport {
    pub forward_paths: usize,
    pub predictive_ifps: usize,
    pub communicative_ifps: usize,
    pub ratio_total_ifp_to_forward: IfpRatio,
    /// Scalars held across all memory patches.
    pub memory_total: usize,
    /// Copies of each node's `δ̂`, indexed by node.
    pub redundancy: Vec<usize>,
}

pub fn census(circuits: &[NodeCircuit]) -> MesoReport {
    let forward_paths = circuits.iter().filter(|c| c.is_actuated()).count();
    let predictive_ifps = circuits.len();
    let communicative_ifps = circuits.iter().map(|c| c.in_neighbors.len()).sum();
    let ratio_total_ifp_to_forward = if forward_paths == 0 {
        IfpRatio::NoForwardPaths
    } else {
        IfpRatio::Value((predictive_ifps + communicative_ifps) as f64 / forward_paths as f64)
    };
    let memory = memory_report(circuits);
    MesoReport {
        forward_paths,
        predictive_ifps,
        communicative_ifps,
        ratio_total_ifp_to_forward,
        memory_total: memory.total,
        redundancy: memory.copies,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodePatch {
    pub node: usize,
    /// `(source, depth)`, own row first.
    pub rows: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub nodes: Vec<NodePatch>,
    /// `1 + |{i : j ∈ in_neighbors(i)}|` for each node `j`.
    pub copies: Vec<usize>,
    /// Sum of all patch depths.
    pub total: usize,
}

impl MemoryReport {
    /// JSON view with 1-based node numbers.
    pub fn to_json_value(&self) -> serde_json::Value {
        let nodes: Vec<_> = self
            .nodes
            .iter()
            .map(|p| {
                serde_json::json!({
                    "node": p.node + 1,
                    "patch": p.rows.iter().map(|&(s, d)| serde_json::json!({"source": s + 1, "depth": d})).collect::<Vec<_>>(),
                    "total": p.rows.iter().map(|r| r.1).sum::<usize>(),
                })
            })
            .collect();
        let copies: Vec<_> = self
            .copies
            .iter()
            .enumerate()
            .map(|(j, &c)| serde_json::json!({"node": j + 1, "copies": c}))
            .collect();
        serde_json::json!({"nodes": nodes, "copies": copies, "total": self.total})
    }
}

pub fn memory_report(circuits: &[NodeCircuit]) -> MemoryReport {
    let n = circuits.len();
    let mut copies = vec![1; n];
    for c in circuits {
        for link in &c.in_neighbors {
            if let Some(slot) = copies.get_mut(link.source) {
                *slot += 1;
            }
        }
    }
    let nodes: Vec<NodePatch> = circuits
        .iter()
        .map(|c| NodePatch {
            node: c.node,
            rows: c.patch_shape(),
        })
        .collect();
    let total = nodes.iter().flat_map(|p| p.rows.iter().map(|r| r.1)).sum();
    MemoryReport { nodes, copies, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{locality_support, LocalityRule};
    use crate::plant::{build_ring, RingSpec, Topology};
    use crate::simulate::{impulse, simulate_sls};
    use crate::spectral::{Causality, CostSpec};
    use crate::synthesis::{synthesize, SynthesisMode, SynthesisProblem};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(sys: &LinearSystem, rule: LocalityRule, horizon: usize) -> (FirPair, SupportSpec) {
        let support = locality_support(sys, rule, horizon, Causality::StrictlyCausal).unwrap();
        let cost = CostSpec::identity(sys.state_dim(), 1e-6).unwrap();
        let res = synthesize(&SynthesisProblem::new(sys.clone(), cost, support.clone(), SynthesisMode::Sls).unwrap()).unwrap();
        assert!(res.feasible());
        (res.pair, support)
    }

    fn random_w(seed: u64, n: usize, steps: usize) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..steps).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn distributed_matches_centralized() {
        let sys = build_ring(&RingSpec::benchmark()).unwrap();
        let (pair, support) = solve(&sys, LocalityRule::hops(2), 12);
        let circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let w = random_w(9, 8, 60);
        let run = simulate_distributed(&circuits, &sys, &w, 60).unwrap();
        let central = simulate_sls(&sys, &pair, &w, 60, None).unwrap();
        assert!(run.trajectory.max_deviation(&central) <= 1e-9);
        let report = census(&circuits);
        assert!(run.log.per_step_counts(60).iter().all(|&c| c == report.communicative_ifps));
        assert_eq!(report.forward_paths, 4);
        assert_eq!(report.predictive_ifps, 8);
    }

    #[test]
    fn delayed_links_match_centralized() {
        let sys = build_ring(&RingSpec::fully_actuated(8, 1.8)).unwrap();
        let rule = LocalityRule { d: 4, comm_delay: 1, self_delay: 0 };
        let (pair, support) = solve(&sys, rule, 8);
        let circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let w = random_w(10, 8, 40);
        let run = simulate_distributed(&circuits, &sys, &w, 40).unwrap();
        let central = simulate_sls(&sys, &pair, &w, 40, None).unwrap();
        assert!(run.trajectory.max_deviation(&central) <= 1e-9);
        assert!(run.log.messages.iter().all(|m| m.t_deliver > m.t_send));
    }

    #[test]
    fn zero_disturbance_sends_zero_payloads() {
        let sys = build_ring(&RingSpec::benchmark()).unwrap();
        let (pair, support) = solve(&sys, LocalityRule::hops(2), 6);
        let circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let run = simulate_distributed(&circuits, &sys, &[], 10).unwrap();
        assert!(run.trajectory.x.iter().all(|v| v.amax() == 0.0));
        assert!(!run.log.messages.is_empty());
        assert!(run.log.messages.iter().all(|m| m.value == 0.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = build_ring(&RingSpec::benchmark()).unwrap();
        let (pair, support) = solve(&sys, LocalityRule::hops(2), 8);
        let circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let w = random_w(11, 8, 30);
        let a = simulate_distributed(&circuits, &sys, &w, 30).unwrap();
        let b = simulate_distributed(&circuits, &sys, &w, 30).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn unactuated_nodes_predict_and_talk_but_never_actuate() {
        let sys = build_ring(&RingSpec::benchmark()).unwrap();
        let (pair, support) = solve(&sys, LocalityRule::hops(2), 8);
        let circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let node4 = &circuits[3];
        assert!(!node4.is_actuated());
        assert!(node4.patch.iter().all(|r| r.m_coef.is_none()));
        let run = simulate_distributed(&circuits, &sys, &impulse(8, 3, 0, 10), 10).unwrap();
        let from4 = run.log.messages.iter().filter(|m| m.from == 3).count();
        let out_degree = circuits.iter().filter(|c| c.in_neighbors.iter().any(|l| l.source == 3)).count();
        assert_eq!(from4, 10 * out_degree);
    }

    #[test]
    fn fully_disconnected_rule() {
        let topo = Topology::from_edges(3, &[]).unwrap();
        let sys = LinearSystem::new(topo, DMatrix::from_diagonal_element(3, 3, 0.7), vec![0, 1, 2]).unwrap();
        let (pair, support) = solve(&sys, LocalityRule::hops(0), 4);
        let circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let report = census(&circuits);
        assert_eq!(report.communicative_ifps, 0);
        assert_eq!(report.redundancy, vec![1, 1, 1]);
        assert_eq!(report.ratio_total_ifp_to_forward, IfpRatio::Value(1.0));
    }

    #[test]
    fn census_counts_and_ratio_flag() {
        let patch = |node, sources: &[usize]| NodeCircuit {
            node,
            actuator: None,
            in_neighbors: sources.iter().map(|&s| InLink { source: s, delay: 1 }).collect(),
            patch: Vec::new(),
            horizon: 3,
        };
        let circuits: Vec<_> = (0..8).map(|i| patch(i, &[(i + 7) % 8, (i + 1) % 8])).collect();
        let report = census(&circuits);
        assert_eq!(report.communicative_ifps, 16);
        assert_eq!(report.ratio_total_ifp_to_forward, IfpRatio::NoForwardPaths);
        assert_eq!(serde_json::to_value(&report).unwrap()["ratio_total_ifp_to_forward"], "no forward paths");

        let mut actuated = circuits.clone();
        for (a, c) in actuated.iter_mut().enumerate() {
            c.actuator = Some(a);
        }
        let report = census(&actuated);
        assert_eq!(report.ratio_total_ifp_to_forward, IfpRatio::Value(3.0));
        assert_eq!(report.redundancy, vec![3; 8]);

        let single = vec![NodeCircuit {
            node: 0,
            actuator: Some(0),
            in_neighbors: Vec::new(),
            patch: Vec::new(),
            horizon: 2,
        }];
        let report = census(&single);
        assert_eq!((report.forward_paths, report.predictive_ifps, report.communicative_ifps), (1, 1, 0));
        assert_eq!(report.ratio_total_ifp_to_forward, IfpRatio::Value(1.0));
    }

    #[test]
    fn underrun_is_reported() {
        let sys = build_ring(&RingSpec::benchmark()).unwrap();
        let (pair, support) = solve(&sys, LocalityRule::hops(2), 6);
        let mut circuits = build_mesocircuit_default(&sys, &pair, &support).unwrap();
        let row = &mut circuits[2].patch[1];
        row.delay = 3;
        let err = simulate_distributed(&circuits, &sys, &[], 5).unwrap_err();
        assert!(matches!(err, Error::MemoryUnderrun { node: 2, min_lag: 3, .. }));
    }

    #[test]
    fn pair_outside_support_rejected() {
        let sys = build_ring(&RingSpec::benchmark()).unwrap();
        let (pair, _) = solve(&sys, LocalityRule::hops(2), 6);
        let tight = locality_support(&sys, LocalityRule::hops(1), 6, Causality::StrictlyCausal).unwrap();
        assert!(matches!(
            build_mesocircuit_default(&sys, &pair, &tight),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn support_plan_follows_delay_geometry() {
        let sys = build_ring(&RingSpec::fully_actuated(8, 1.8)).unwrap();
        let rule = LocalityRule { d: 2, comm_delay: 1, self_delay: 0 };
        let support = locality_support(&sys, rule, 5, Causality::StrictlyCausal).unwrap();
        let plan = plan_from_support(&sys, &support).unwrap();
        let mut depths: Vec<usize> = plan[3].patch_shape().iter().map(|r| r.1).collect();
        depths.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(depths, vec![5, 4, 4, 3, 3]);
        assert_eq!(memory_report(&plan).copies, vec![5; 8]);
    }

    #[test]
    fn message_csv_is_one_based() {
        let log = MessageLog {
            messages: vec![Message { t_send: 0, t_deliver: 1, from: 2, to: 3, value: 0.5 }],
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,3,4,5.0000000000000000e-1");
    }
}
