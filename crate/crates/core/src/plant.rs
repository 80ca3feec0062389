//! Linear plants over undirected graph topologies.
//!
//! Node indices are 0-based throughout the library API. Configuration files,
//! CSV exports and the CLI use 1-based node numbers; conversion happens at
//! those boundaries ([`PlantConfig`], [`RingSpec`]).

use std::collections::VecDeque;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::linalg;

/// Undirected graph on `node_count` nodes. Self-edges are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Builds a topology from an edge list (0-based). Duplicate edges are
    /// merged; self-loops are rejected.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidPlant("topology needs at least one node".into()));
        }
        let mut neighbors = vec![Vec::new(); node_count];
        for &(i, j) in edges {
            if i >= node_count || j >= node_count {
                return Err(Error::InvalidPlant(format!(
                    "edge ({i}, {j}) out of range for {node_count} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidPlant(format!("self-edge at node {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { neighbors })
    }

    /// Builds a topology from a square boolean adjacency matrix. The diagonal
    /// is ignored; the matrix must be symmetric.
    pub fn from_adjacency(adjacency: &[Vec<bool>]) -> Result<Self> {
        let n = adjacency.len();
        let mut edges = Vec::new();
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(dim_err("adjacency row", n, row.len()));
            }
            for (j, &on) in row.iter().enumerate() {
                if on != adjacency[j][i] {
                    return Err(Error::InvalidPlant(format!(
                        "adjacency is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
                if on && i < j {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    /// Cycle graph 0 - 1 - ... - (n-1) - 0.
    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidPlant(format!("ring needs n >= 3, got {n}")));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// BFS hop counts from `source`; `None` marks unreachable nodes.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let next = dist[v].map(|d| d + 1);
            for &w in &self.neighbors[v] {
                if dist[w].is_none() {
                    dist[w] = next;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// All-pairs hop distances.
    pub fn distance_matrix(&self) -> Vec<Vec<Option<usize>>> {
        (0..self.node_count()).map(|i| self.distances_from(i)).collect()
    }

    /// Largest finite hop distance.
    pub fn diameter(&self) -> usize {
        self.distance_matrix()
            .iter()
            .flatten()
            .filter_map(|d| *d)
            .max()
            .unwrap_or(0)
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let n = self.node_count();
        (0..n)
            .map(|i| (0..n).map(|j| self.is_adjacent(i, j)).collect())
            .collect()
    }
}

/// Shortest hop count between `i` and `j`, or `None` when no path exists.
pub fn hop_distance(topology: &Topology, i: usize, j: usize) -> Option<usize> {
    topology.distances_from(i)[j]
}

/// `x(t+1) = A x(t) + B u(t) + w(t)` on a topology, with `B` a 0/1 selector.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    topology: Topology,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    actuated: Vec<usize>,
}

impl LinearSystem {
    /// Builds a validated system; `actuated` lists the (0-based) nodes that
    /// receive an actuator, in actuator order.
    pub fn new(topology: Topology, a: DMatrix<f64>, actuated: Vec<usize>) -> Result<Self> {
        let n = topology.node_count();
        if a.shape() != (n, n) {
            return Err(dim_err("state matrix A", format!("{n}x{n}"), format!("{}x{}", a.nrows(), a.ncols())));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && a[(i, j)] != 0.0 && !topology.is_adjacent(i, j) {
                    return Err(Error::InvalidPlant(format!(
                        "A[{}][{}] is nonzero but nodes {} and {} are not adjacent",
                        i + 1,
                        j + 1,
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        let b = selector_matrix(n, &actuated)?;
        Ok(Self {
            topology,
            a,
            b,
            actuated,
        })
    }

    /// Assembles a system without checking any invariant. Use
    /// [`validate_system`] to inspect the result.
    pub fn from_parts_unchecked(
        topology: Topology,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        actuated: Vec<usize>,
    ) -> Self {
        Self {
            topology,
            a,
            b,
            actuated,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Actuated node of each actuator column.
    pub fn actuated(&self) -> &[usize] {
        &self.actuated
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Actuator column driving node `i`, if any.
    pub fn actuator_at(&self, i: usize) -> Option<usize> {
        self.actuated.iter().position(|&node| node == i)
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }
}

fn selector_matrix(n: usize, actuated: &[usize]) -> Result<DMatrix<f64>> {
    let mut b = DMatrix::zeros(n, actuated.len());
    for (col, &node) in actuated.iter().enumerate() {
        if node >= n {
            return Err(Error::InvalidPlant(format!(
                "actuated node {} out of range 1..={n}",
                node + 1
            )));
        }
        if actuated[..col].contains(&node) {
            return Err(Error::InvalidPlant(format!(
                "actuated node {} listed twice",
                node + 1
            )));
        }
        b[(node, col)] = 1.0;
    }
    Ok(b)
}

/// Symmetric ring benchmark: `A = (a/3)` times the wrap-around tridiagonal
/// of ones. Node numbers in `actuated` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingSpec {
    pub n: usize,
    pub a: f64,
    pub actuated: Vec<usize>,
}

impl RingSpec {
    /// The 8-node ring with spectral radius 1.8 and actuators at 1, 3, 5, 7.
    pub fn benchmark() -> Self {
        Self {
            n: 8,
            a: 1.8,
            actuated: vec![1, 3, 5, 7],
        }
    }

    /// Ring of `n` nodes with every node actuated.
    pub fn fully_actuated(n: usize, a: f64) -> Self {
        Self {
            n,
            a,
            actuated: (1..=n).collect(),
        }
    }
}

pub fn build_ring(spec: &RingSpec) -> Result<LinearSystem> {
    if spec.n < 3 {
        return Err(Error::InvalidPlant(format!("ring needs n >= 3, got {}", spec.n)));
    }
    if !(spec.a > 0.0) || !spec.a.is_finite() {
        return Err(Error::InvalidPlant(format!("ring radius a must be positive, got {}", spec.a)));
    }
    let n = spec.n;
    let topology = Topology::ring(n)?;
    let w = spec.a / 3.0;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in [(i + n - 1) % n, i, (i + 1) % n] {
            a[(i, j)] = w;
        }
    }
    let actuated = one_based_to_index(&spec.actuated, n)?;
    LinearSystem::new(topology, a, actuated)
}

fn one_based_to_index(nodes: &[usize], n: usize) -> Result<Vec<usize>> {
    nodes
        .iter()
        .map(|&node| {
            if node == 0 || node > n {
                Err(Error::InvalidPlant(format!(
                    "actuated node {node} out of range 1..={n}"
                )))
            } else {
                Ok(node - 1)
            }
        })
        .collect()
}

/// Findings of [`validate_system`]. Never an error: everything is reported.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// 1-based `(row, col)` entries of A that are nonzero off the topology.
    pub sparsity_violations: Vec<(usize, usize)>,
    pub actuation_issues: Vec<String>,
    pub spectral_radius: f64,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.sparsity_violations.is_empty() && self.actuation_issues.is_empty()
    }
}

pub fn validate_system(sys: &LinearSystem) -> ValidationReport {
    let n = sys.topology.node_count();
    let mut sparsity_violations = Vec::new();
    let mut actuation_issues = Vec::new();
    let mut warnings = Vec::new();

    let square = sys.a.shape() == (n, n);
    if !square {
        actuation_issues.push(format!(
            "A is {}x{} but the topology has {n} nodes",
            sys.a.nrows(),
            sys.a.ncols()
        ));
    } else {
        for i in 0..n {
            for j in 0..n {
                if i != j && sys.a[(i, j)] != 0.0 && !sys.topology.is_adjacent(i, j) {
                    sparsity_violations.push((i + 1, j + 1));
                }
            }
        }
    }

    if sys.b.nrows() != n {
        actuation_issues.push(format!("B has {} rows, expected {n}", sys.b.nrows()));
    } else {
        let mut seen = Vec::new();
        for col in 0..sys.b.ncols() {
            let column = sys.b.column(col);
            let ones: Vec<usize> = (0..n).filter(|&i| column[i] == 1.0).collect();
            let others = (0..n).filter(|&i| column[i] != 0.0 && column[i] != 1.0).count();
            if ones.len() != 1 || others != 0 {
                actuation_issues.push(format!(
                    "B column {} is not a standard basis vector",
                    col + 1
                ));
                continue;
            }
            if seen.contains(&ones[0]) {
                actuation_issues.push(format!("node {} actuated twice", ones[0] + 1));
            }
            if sys.actuated.get(col) != Some(&ones[0]) {
                actuation_issues.push(format!(
                    "B column {} selects node {} but the actuated list disagrees",
                    col + 1,
                    ones[0] + 1
                ));
            }
            seen.push(ones[0]);
        }
    }

    let spectral_radius = if square { linalg::spectral_radius(&sys.a) } else { f64::NAN };
    if square && sys.b.nrows() == n {
        warnings.extend(stabilizability_warnings(&sys.a, &sys.b));
    }
    if sys.topology.distances_from(0).iter().any(Option::is_none) {
        warnings.push("topology is disconnected".into());
    }

    ValidationReport {
        sparsity_violations,
        actuation_issues,
        spectral_radius,
        warnings,
    }
}

/// PBH test on every eigenvalue with modulus >= 1: warns when
/// `rank [A - λI, B] < n`. A numerical heuristic, not a proof.
fn stabilizability_warnings(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<String> {
    let n = a.nrows();
    let mut out = Vec::new();
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.norm() < 1.0 {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                pbh[(i, j)] = Complex::new(a[(i, j)], 0.0) - if i == j { *lambda } else { Complex::new(0.0, 0.0) };
            }
            for j in 0..b.ncols() {
                pbh[(i, n + j)] = Complex::new(b[(i, j)], 0.0);
            }
        }
        let sv = pbh.singular_values();
        let smax = sv.iter().fold(0.0_f64, |m, &s| m.max(s));
        let rank = sv.iter().filter(|&&s| s > 1e-9 * smax.max(1.0)).count();
        if rank < n {
            out.push(format!(
                "mode {:.6}{:+.6}i (|λ| = {:.6}) appears uncontrollable; plant may not be stabilizable",
                lambda.re,
                lambda.im,
                lambda.norm()
            ));
        }
    }
    out
}

/// JSON plant description: `{"ring": {...}}` or `{"general": {...}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantConfig {
    Ring(RingSpec),
    General(GeneralPlant),
}

/// Arbitrary plant; `actuated` is 1-based, `adjacency` entries may be
/// booleans or 0/1 numbers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneralPlant {
    pub adjacency: Vec<Vec<AdjacencyEntry>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub actuated: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdjacencyEntry {
    Flag(bool),
    Number(f64),
}

impl AdjacencyEntry {
    fn is_edge(self) -> bool {
        match self {
            Self::Flag(b) => b,
            Self::Number(x) => x != 0.0,
        }
    }
}

impl PlantConfig {
    pub fn build(&self) -> Result<LinearSystem> {
        match self {
            Self::Ring(spec) => build_ring(spec),
            Self::General(g) => {
                let adjacency: Vec<Vec<bool>> = g
                    .adjacency
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, e)| i != j && e.is_edge())
                            .collect()
                    })
                    .collect();
                let topology = Topology::from_adjacency(&adjacency)?;
                let a = linalg::from_rows(&g.a)
                    .ok_or_else(|| Error::InvalidPlant("A rows have unequal length".into()))?;
                let actuated = one_based_to_index(&g.actuated, topology.node_count())?;
                LinearSystem::new(topology, a, actuated)
            }
        }
    }

    /// Describes an existing system as a general plant.
    pub fn from_system(sys: &LinearSystem) -> Self {
        Self::General(GeneralPlant {
            adjacency: sys
                .topology
                .adjacency()
                .into_iter()
                .map(|row| row.into_iter().map(AdjacencyEntry::Flag).collect())
                .collect(),
            a: linalg::to_rows(&sys.a),
            actuated: sys.actuated.iter().map(|i| i + 1).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring8() -> LinearSystem {
        build_ring(&RingSpec::benchmark()).unwrap()
    }

    /// Power iteration; for symmetric A the growth ratio converges to the
    /// dominant eigenvalue modulus.
    fn power_iteration(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w = a * &v;
            lambda = w.norm() / v.norm();
            v = w.normalize();
        }
        lambda
    }

    #[test]
    fn benchmark_ring_matrices() {
        let sys = ring8();
        let a = sys.a();
        for i in 0..8 {
            for j in 0..8 {
                let near = j == i || j == (i + 1) % 8 || j == (i + 7) % 8;
                let expected = if near { 0.6 } else { 0.0 };
                assert!((a[(i, j)] - expected).abs() < 1e-15);
            }
        }
        assert_eq!(sys.b().shape(), (8, 4));
        for (col, node) in [0, 2, 4, 6].into_iter().enumerate() {
            assert_eq!(sys.b()[(node, col)], 1.0);
            assert_eq!(sys.b().column(col).sum(), 1.0);
        }
        assert_eq!(sys.actuator_at(2), Some(1));
        assert_eq!(sys.actuator_at(3), None);
    }

    #[test]
    fn benchmark_ring_radius_matches_power_iteration() {
        let sys = ring8();
        let rho = power_iteration(sys.a());
        assert!((rho - 1.8).abs() <= 1e-9, "power iteration gave {rho}");
        assert!((sys.spectral_radius() - 1.8).abs() <= 1e-9);
    }

    #[test]
    fn three_ring_is_all_ones() {
        let sys = build_ring(&RingSpec {
            n: 3,
            a: 3.0,
            actuated: vec![1, 2, 3],
        })
        .unwrap();
        assert!(sys.a().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!((sys.spectral_radius() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn ring_rejects_bad_specs() {
        let bad = |n, actuated: Vec<usize>| build_ring(&RingSpec { n, a: 1.0, actuated }).is_err();
        assert!(bad(2, vec![1]));
        assert!(bad(8, vec![0]));
        assert!(bad(8, vec![9]));
        assert!(bad(8, vec![1, 1]));
        assert!(build_ring(&RingSpec { n: 8, a: -1.0, actuated: vec![] }).is_err());
    }

    #[test]
    fn ring_hop_distances() {
        let t = Topology::ring(8).unwrap();
        assert_eq!(hop_distance(&t, 3, 3), Some(0));
        assert_eq!(hop_distance(&t, 3, 5), Some(2));
        assert_eq!(hop_distance(&t, 0, 4), Some(4));
        assert_eq!(t.diameter(), 4);
    }

    #[test]
    fn exhaustive_ring_distances_match_cycle_formula() {
        for n in 3..12 {
            let t = Topology::ring(n).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let d = i.abs_diff(j);
                    assert_eq!(hop_distance(&t, i, j), Some(d.min(n - d)));
                }
            }
        }
    }

    #[test]
    fn disconnected_pair_is_unreachable() {
        let t = Topology::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(hop_distance(&t, 0, 3), None);
        assert_eq!(hop_distance(&t, 0, 1), Some(1));
    }

    #[test]
    fn validation_flags_problems() {
        let sys = ring8();
        let report = validate_system(&sys);
        assert!(report.ok());
        assert!((report.spectral_radius - 1.8).abs() < 1e-9);

        let mut a = sys.a().clone();
        a[(0, 3)] = 0.5;
        let broken = LinearSystem::from_parts_unchecked(
            sys.topology().clone(),
            a,
            sys.b().clone(),
            sys.actuated().to_vec(),
        );
        let report = validate_system(&broken);
        assert_eq!(report.sparsity_violations, vec![(1, 4)]);

        let mut b = sys.b().clone();
        b[(1, 0)] = 1.0;
        let broken = LinearSystem::from_parts_unchecked(
            sys.topology().clone(),
            sys.a().clone(),
            b,
            sys.actuated().to_vec(),
        );
        let report = validate_system(&broken);
        assert!(!report.ok());
        assert!(report.actuation_issues[0].contains("column 1"));
    }

    #[test]
    fn validation_warns_on_uncontrollable_unstable_mode() {
        let sys = build_ring(&RingSpec { n: 8, a: 1.8, actuated: vec![] }).unwrap();
        let report = validate_system(&sys);
        assert!(report.ok());
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn general_config_round_trips() {
        let json = r#"{"general": {"adjacency": [[0,1,1],[1,0,1],[1,1,0]],
                       "A": [[0.5,0.1,0.0],[0.1,0.5,0.1],[0.0,0.1,0.5]], "actuated": [2]}}"#;
        let cfg: PlantConfig = serde_json::from_str(json).unwrap();
        let sys = cfg.build().unwrap();
        assert_eq!(sys.actuated(), &[1]);
        let again = PlantConfig::from_system(&sys).build().unwrap();
        assert_eq!(again.a(), sys.a());

        let ring: PlantConfig =
            serde_json::from_str(r#"{"ring": {"n":8, "a":1.8, "actuated":[1,3,5,7]}}"#).unwrap();
        assert_eq!(ring.build().unwrap().input_dim(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn connected_graph() -> impl Strategy<Value = Topology> {
            (3usize..14).prop_flat_map(|n| {
                let tree = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
                let extra = proptest::collection::vec((0..n, 0..n), 0..n);
                (Just(n), tree, extra).prop_map(|(n, parents, extra)| {
                    let mut edges: Vec<_> = parents
                        .iter()
                        .enumerate()
                        .map(|(k, p)| (k + 1, p.index(k + 1)))
                        .collect();
                    edges.extend(extra.into_iter().filter(|(i, j)| i != j));
                    Topology::from_edges(n, &edges).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn hop_distance_is_a_metric(t in connected_graph()) {
                let d = t.distance_matrix();
                let n = t.node_count();
                for i in 0..n {
                    prop_assert_eq!(d[i][i], Some(0));
                    for j in 0..n {
                        prop_assert_eq!(d[i][j], d[j][i]);
                        for k in 0..n {
                            prop_assert!(d[i][k].unwrap() <= d[i][j].unwrap() + d[j][k].unwrap());
                        }
                    }
                }
            }

            #[test]
            fn ring_is_symmetric_circulant_with_radius_a(n in 3usize..20, a in 0.05f64..5.0) {
                let sys = build_ring(&RingSpec { n, a, actuated: vec![1] }).unwrap();
                let m = sys.a();
                prop_assert!(linalg::is_symmetric(m, 0.0));
                for i in 0..n {
                    for j in 0..n {
                        prop_assert_eq!(m[(i, j)], m[((i + 1) % n, (j + 1) % n)]);
                    }
                }
                prop_assert!((sys.spectral_radius() - a).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
