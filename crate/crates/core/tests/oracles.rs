use mesoloc_core::constraints::check_mask;
use mesoloc_core::simulate::impulse;
use mesoloc_core::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-6;

fn solve(sys: &LinearSystem, support: SupportSpec, mode: SynthesisMode, eps: f64) -> SynthesisResult {
    let cost = CostSpec::identity(sys.state_dim(), eps).unwrap();
    synthesize(&SynthesisProblem::new(sys.clone(), cost, support, mode).unwrap()).unwrap()
}

fn random_ring(seed: u64, n: usize) -> LinearSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topo = Topology::ring(n).unwrap();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = rng.random_range(-1.5..1.5);
        for &j in topo.neighbors(i) {
            a[(i, j)] = rng.random_range(-1.5..1.5);
        }
    }
    LinearSystem::new(topo, a, (0..n).collect()).unwrap()
}

/// Solves every column at once through one dense KKT system,
/// `[2H Eᵀ; E 0] [z; λ] = [0; f]`, with variables for the on-mask entries of
/// all spectral elements and the full closed-loop equations as constraints.
fn joint_kkt(sys: &LinearSystem, support: &SupportSpec, eps: f64) -> (FirPair, f64) {
    let (n, m, t) = (sys.state_dim(), sys.input_dim(), support.horizon());
    let mut vars = Vec::new();
    for k in 1..=t {
        let mask = support.r_mask(k).unwrap();
        for i in 0..n {
            for j in 0..n {
                if mask.get(i, j) {
                    vars.push((true, k, i, j));
                }
            }
        }
    }
    for k in 1..=t {
        let mask = support.m_mask(k).unwrap();
        for a in 0..m {
            for j in 0..n {
                if mask.get(a, j) {
                    vars.push((false, k, a, j));
                }
            }
        }
    }
    let nv = vars.len();
    let index = |is_r: bool, k: usize, i: usize, j: usize| vars.iter().position(|&v| v == (is_r, k, i, j));

    // Block 0: R(1) = I. Block k < T: R(k+1) - A R(k) - B M(k) = 0.
    // Block T: A R(T) + B M(T) = 0.
    let rows = n * n * (t + 1);
    let mut e = DMatrix::zeros(rows, nv);
    let mut f = DVector::zeros(rows);
    let row = |blk: usize, i: usize, j: usize| blk * n * n + i * n + j;
    for i in 0..n {
        for j in 0..n {
            if let Some(v) = index(true, 1, i, j) {
                e[(row(0, i, j), v)] = 1.0;
            }
            f[row(0, i, j)] = if i == j { 1.0 } else { 0.0 };
        }
    }
    for k in 1..=t {
        for i in 0..n {
            for j in 0..n {
                let r = row(k, i, j);
                if k < t {
                    if let Some(v) = index(true, k + 1, i, j) {
                        e[(r, v)] += 1.0;
                    }
                }
                let sign = if k < t { -1.0 } else { 1.0 };
                for l in 0..n {
                    if let Some(v) = index(true, k, l, j) {
                        e[(r, v)] += sign * sys.a()[(i, l)];
                    }
                }
                for a in 0..m {
                    if let Some(v) = index(false, k, a, j) {
                        e[(r, v)] += sign * sys.b()[(i, a)];
                    }
                }
            }
        }
    }

    let mut h = DMatrix::zeros(nv, nv);
    for (p, &(is_r, ..)) in vars.iter().enumerate() {
        h[(p, p)] = if is_r { 1.0 } else { eps };
    }
    let size = nv + rows;
    let mut kkt = DMatrix::zeros(size, size);
    kkt.view_mut((0, 0), (nv, nv)).copy_from(&(2.0 * &h));
    kkt.view_mut((0, nv), (nv, rows)).copy_from(&e.transpose());
    kkt.view_mut((nv, 0), (rows, nv)).copy_from(&e);
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(nv, rows).copy_from(&f);
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).unwrap();
    let z = sol.rows(0, nv);
    assert!((&e * z - &f).amax() < 1e-9, "oracle instance must be feasible");

    let mut pair = FirPair::zeros(n, m, t, Causality::StrictlyCausal);
    for (p, &(is_r, k, i, j)) in vars.iter().enumerate() {
        if is_r {
            pair.r_mut(k).unwrap()[(i, j)] = z[p];
        } else {
            pair.m_mut(k).unwrap()[(i, j)] = z[p];
        }
    }
    let objective = z.dot(&(&h * z));
    (pair, objective)
}

#[test]
fn column_solver_matches_joint_kkt() {
    for (seed, n, d, t) in [(1, 5, 1, 3), (2, 6, 1, 4), (3, 6, 2, 3)] {
        let sys = random_ring(seed, n);
        let support = locality_support(&sys, LocalityRule::hops(d), t, Causality::StrictlyCausal).unwrap();
        let eps = 0.3;
        let ours = solve(&sys, support.clone(), SynthesisMode::Sls, eps);
        assert!(ours.feasible() && ours.fir_closed());
        let (pair, objective) = joint_kkt(&sys, &support, eps);
        assert!(((ours.objective - objective) / objective).abs() < 1e-9, "{} vs {objective}", ours.objective);
        let gap = ours
            .pair
            .r_elements()
            .iter()
            .zip(pair.r_elements())
            .chain(ours.pair.m_elements().iter().zip(pair.m_elements()))
            .map(|(x, y)| (x - y).amax())
            .fold(0.0, f64::max);
        assert!(gap < 1e-8, "seed {seed}: max entry gap {gap:e}");
    }
}

#[test]
fn cost_is_monotone_in_radius_and_horizon() {
    let sys = random_ring(11, 8);
    let cost_at = |d: usize, t: usize| {
        let support = locality_support(&sys, LocalityRule::hops(d), t, Causality::StrictlyCausal).unwrap();
        let res = solve(&sys, support, SynthesisMode::Sls, EPS);
        assert!(res.feasible() && res.fir_closed());
        res.objective
    };
    let by_radius: Vec<f64> = (1..=4).map(|d| cost_at(d, 6)).collect();
    for w in by_radius.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{by_radius:?}");
    }
    let by_horizon: Vec<f64> = [3, 5, 8].iter().map(|&t| cost_at(1, t)).collect();
    for w in by_horizon.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9), "{by_horizon:?}");
    }
    let cost = CostSpec::identity(8, EPS).unwrap();
    let lqr = lqr_cost(&sys, &solve_dare(&sys, &cost).unwrap().k, &cost).unwrap();
    assert!(by_radius.iter().all(|&c| c >= lqr * (1.0 - 1e-9)));
}

#[test]
fn mdesign_never_costs_more_than_sls() {
    let sys = build_ring(&RingSpec::benchmark()).unwrap();
    for causality in [Causality::StrictlyCausal, Causality::CausalM] {
        let md = solve(
            &sys,
            locality_support(&sys, LocalityRule::hops(2), 12, causality).unwrap(),
            SynthesisMode::MDesign,
            EPS,
        );
        let sls = solve(
            &sys,
            locality_support(&sys, LocalityRule::hops(2), 12, Causality::StrictlyCausal).unwrap(),
            SynthesisMode::Sls,
            EPS,
        );
        assert!(md.objective <= sls.objective * (1.0 + 1e-9));
    }
}

#[test]
fn sls_trajectory_is_superposition_of_columns() {
    let sys = random_ring(5, 8);
    let support = locality_support(&sys, LocalityRule::hops(1), 10, Causality::StrictlyCausal).unwrap();
    let pair = solve(&sys, support, SynthesisMode::Sls, EPS).pair;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let steps = 100;
    let w: Vec<DVector<f64>> = (0..steps).map(|_| DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0))).collect();
    let traj = simulate_sls(&sys, &pair, &w, steps, None).unwrap();
    for t in 0..=steps {
        assert!((&traj.x[t] - pair.convolve_r(&w, t).unwrap()).amax() < 1e-9, "x({t})");
    }
    for t in 0..steps {
        assert!((&traj.u[t] - pair.convolve_m(&w, t).unwrap()).amax() < 1e-9, "u({t})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn localized_pairs_are_feasible_and_realize_their_columns(
        seed in 0u64..1000,
        n in 4usize..8,
        d in 1usize..3,
        t in 2usize..7,
    ) {
        let sys = random_ring(seed, n);
        let support = locality_support(&sys, LocalityRule::hops(d), t, Causality::StrictlyCausal).unwrap();
        let res = solve(&sys, support.clone(), SynthesisMode::Sls, EPS);
        prop_assert!(res.feasible());
        prop_assert!(feasibility_residual(&res.pair, &sys).unwrap() <= 1e-8);
        prop_assert!(check_mask(&res.pair, &support, 0.0).unwrap().ok);
        for i in 0..n {
            let w = impulse(n, i, 0, t + 1);
            let traj = simulate_sls(&sys, &res.pair, &w, t + 1, None).unwrap();
            let cols = impulse_columns(&res.pair, i).unwrap();
            for k in 0..=t {
                prop_assert!((&traj.x[k] - &cols.x[k]).amax() <= 1e-10);
                prop_assert!((&traj.u[k] - &cols.u[k]).amax() <= 1e-10);
            }
        }
    }
}
