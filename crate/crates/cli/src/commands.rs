use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use mesoloc_core::linalg::fmt_f64;
use mesoloc_core::meso::memory_report;
use mesoloc_core::simulate::impulse;
use mesoloc_core::{
    build_mesocircuit, census, closed_loop_fir, localization_radius, lqr_cost, normalized_cost, simulate_distributed,
    simulate_mdesign, simulate_sls, simulate_static, solve_dare, synthesize, FirPair, LinearSystem, SynthesisProblem,
    Trajectory,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{Mode, RunConfig, Scenario};
use crate::output::{read_matrix_csv, write_atomic, write_json, write_matrix_csv, write_text};
use crate::render;

pub const EXIT_INFEASIBLE: u8 = 2;

fn one_based(nodes: impl IntoIterator<Item = usize>) -> Vec<usize> {
    nodes.into_iter().map(|i| i + 1).collect()
}

/// `k,row,col,value` for every element of `elems`, starting at `first`.
fn write_elements(path: &Path, first: usize, elems: &[DMatrix<f64>], rows: Option<&[usize]>) -> Result<()> {
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["k", "row", "col", "value"])?;
        for (offset, mat) in elems.iter().enumerate() {
            let k = (first + offset).to_string();
            for i in 0..mat.nrows() {
                let row = rows.map_or(i + 1, |r| r[i]);
                for j in 0..mat.ncols() {
                    csv.write_record([k.clone(), row.to_string(), (j + 1).to_string(), fmt_f64(mat[(i, j)])])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    })
}

fn write_pair(dir: &Path, sys: &LinearSystem, pair: &FirPair) -> Result<()> {
    let actuators = one_based(sys.actuated().iter().copied());
    write_elements(&dir.join("R.csv"), 1, pair.r_elements(), None)?;
    write_elements(&dir.join("M.csv"), *pair.m_indices().start(), pair.m_elements(), Some(&actuators))?;
    write_json(&dir.join("spectral.json"), &pair.to_json_value())
}

fn read_pair(dir: &Path) -> Result<FirPair> {
    let path = dir.join("spectral.json");
    let file = std::fs::File::open(&path)
        .with_context(|| format!("missing {}; run `synthesize` for this mode first", path.display()))?;
    FirPair::read_json(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// LQR baseline `trace(P)`, or `None` when the Riccati iteration fails.
fn baseline(config: &RunConfig, sys: &LinearSystem) -> Result<Option<f64>> {
    let cost = config.cost(sys.state_dim())?;
    Ok(solve_dare(sys, &cost).ok().and_then(|sol| lqr_cost(sys, &sol.k, &cost).ok()))
}

pub fn cmd_synthesize(config: &RunConfig, mode: Mode) -> Result<ExitCode> {
    let sys = config.system()?;
    let cost = config.cost(sys.state_dim())?;
    let dir = config.mode_dir(mode);
    write_json(&dir.join("config.json"), &serde_json::to_value(config)?)?;

    let Some(synthesis_mode) = mode.synthesis() else {
        let sol = match solve_dare(&sys, &cost) {
            Ok(sol) => sol,
            Err(e) => {
                eprintln!("lqr: no stabilizing solution: {e}");
                write_json(&dir.join("status.json"), &json!({"mode": "lqr", "feasible": false, "error": e.to_string()}))?;
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        };
        let objective = lqr_cost(&sys, &sol.k, &cost)?;
        let actuators = one_based(sys.actuated().iter().copied());
        write_matrix_csv(&dir.join("K.csv"), &sol.k, ["actuator_node", "state_node"], Some(&actuators))?;
        write_matrix_csv(&dir.join("P.csv"), &sol.p, ["row", "col"], None)?;
        let fir = closed_loop_fir(&sys, &sol.k, config.horizon)?;
        write_pair(&dir, &sys, &fir.pair)?;
        write_json(
            &dir.join("status.json"),
            &json!({
                "mode": "lqr",
                "feasible": true,
                "horizon": config.horizon,
                "objective": objective,
                "lqr_baseline": objective,
                "normalized_cost": 1.0,
                "dare_iterations": sol.iterations,
                "dare_residual": sol.residual,
                "closed_loop_spectral_radius": sol.closed_loop_radius,
                "truncation_tail": fir.tail_mass,
            }),
        )?;
        println!("lqr: cost {objective:.9} (spectral radius {:.4})", sol.closed_loop_radius);
        return Ok(ExitCode::SUCCESS);
    };

    let support = config.support(&sys, mode)?;
    let problem = SynthesisProblem::new(sys.clone(), cost, support.clone(), synthesis_mode)?;
    let result = synthesize(&problem)?;
    let base = baseline(config, &sys)?;
    let normalized = base.map(|b| normalized_cost(result.objective, b)).transpose()?;

    write_pair(&dir, &sys, &result.pair)?;
    write_atomic(&dir.join("support.csv"), |w| Ok(support.write_csv(w)?))?;
    let mut columns = serde_json::to_value(&result.columns)?;
    for col in columns.as_array_mut().into_iter().flatten() {
        if let Some(c) = col.get_mut("column") {
            *c = json!(c.as_u64().unwrap_or(0) + 1);
        }
    }
    let infeasible = one_based(result.stats.infeasible_columns.iter().copied());
    let open = one_based(result.stats.open_columns.iter().copied());
    write_json(
        &dir.join("status.json"),
        &json!({
            "mode": mode.as_str(),
            "feasible": result.feasible(),
            "fir_closed": result.fir_closed(),
            "horizon": config.horizon,
            "causality": result.pair.causality().as_str(),
            "objective": result.objective,
            "state_cost": result.state_cost,
            "lqr_baseline": base,
            "normalized_cost": normalized,
            "infeasible_columns": infeasible,
            "open_columns": open,
            "max_dynamics_residual": result.stats.max_dynamics_residual,
            "max_closure_residual": result.stats.max_closure_residual,
            "max_stationarity": result.stats.max_stationarity,
            "pseudo_inverse_fallbacks": result.stats.pseudo_inverse_fallbacks,
            "columns": columns,
        }),
    )?;

    if !result.feasible() {
        eprintln!("{}: infeasible under the configured sparsity set", mode.as_str());
        for c in result.columns.iter().filter(|c| !c.feasible) {
            eprintln!("  column {}: dynamics residual {:.3e}", c.column + 1, c.dynamics_residual);
        }
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    if !open.is_empty() {
        eprintln!(
            "{}: columns {open:?} not closed within T = {} (max closure residual {:.3e})",
            mode.as_str(),
            config.horizon,
            result.stats.max_closure_residual
        );
    }
    match normalized {
        Some(v) => println!("{}: objective {:.9}, normalized {v:.6}", mode.as_str(), result.objective),
        None => println!("{}: objective {:.9} (no LQR baseline)", mode.as_str(), result.objective),
    }
    Ok(ExitCode::SUCCESS)
}

fn read_disturbance(path: &Path, n: usize, steps: Option<usize>) -> Result<(Vec<DVector<f64>>, usize)> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record?;
        let (t, node, value): (usize, usize, f64) =
            record.deserialize(None).with_context(|| format!("malformed row in {}", path.display()))?;
        if node == 0 || node > n {
            bail!("{}: node {node} out of range 1..={n}", path.display());
        }
        entries.push((t, node - 1, value));
    }
    let steps = steps.unwrap_or_else(|| entries.iter().map(|e| e.0 + 1).max().unwrap_or(0));
    let mut w = vec![DVector::zeros(n); steps];
    for (t, i, v) in entries {
        if let Some(wt) = w.get_mut(t) {
            wt[i] += v;
        }
    }
    Ok((w, steps))
}

struct Disturbance {
    w: Vec<DVector<f64>>,
    steps: usize,
    /// 0-based source node for single impulses.
    source: Option<usize>,
}

/// Impulse runs default to `2T` steps; M-Design runs open loop, so its
/// default stops at the end of the FIR window.
fn disturbance(config: &RunConfig, mode: Mode, scenario: &Scenario, n: usize) -> Result<Disturbance> {
    let default_steps = if mode == Mode::MDesign { config.horizon + 1 } else { 2 * config.horizon };
    Ok(match scenario {
        &Scenario::Impulse { node, time, steps } => {
            if node == 0 || node > n {
                bail!("impulse node {node} out of range 1..={n}");
            }
            let steps = steps.unwrap_or(default_steps.max(time + 1));
            Disturbance {
                w: impulse(n, node - 1, time, steps),
                steps,
                source: Some(node - 1),
            }
        }
        &Scenario::Random { steps, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let w = (0..steps)
                .map(|_| DVector::from_fn(n, |_, _| amplitude * rng.random_range(-1.0..1.0)))
                .collect();
            Disturbance { w, steps, source: None }
        }
        Scenario::File { path, steps } => {
            let (w, steps) = read_disturbance(path, n, *steps)?;
            Disturbance { w, steps, source: None }
        }
        &Scenario::Zero { steps } => Disturbance {
            w: vec![DVector::zeros(n); steps],
            steps,
            source: None,
        },
    })
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, |w| Ok(traj.write_csv(w)?))
}

pub fn cmd_simulate(config: &RunConfig, mode: Mode, distributed: bool) -> Result<ExitCode> {
    let sys = config.system()?;
    let n = sys.state_dim();
    let scenario = config
        .scenario
        .as_ref()
        .context("no scenario: set `scenario` in the config or pass --impulse NODE[,T]")?;
    let Disturbance { w, steps, source } = disturbance(config, mode, scenario, n)?;
    let dir = config.mode_dir(mode);
    if distributed && mode != Mode::Sls {
        bail!("--distributed needs --mode sls (the internal-feedback realization)");
    }

    let traj = match mode {
        Mode::Lqr => {
            let actuators = one_based(sys.actuated().iter().copied());
            let path = dir.join("K.csv");
            if !path.exists() {
                bail!("missing {}; run `synthesize --mode lqr` first", path.display());
            }
            let k = read_matrix_csv(&path, (sys.input_dim(), n), Some(&actuators))?;
            simulate_static(&sys, &k, &w, steps, None)?
        }
        Mode::MDesign => simulate_mdesign(&sys, &read_pair(&dir)?, &w, steps, None)?,
        Mode::Sls if distributed => {
            let pair = read_pair(&dir)?;
            let support = config.support(&sys, mode)?;
            let circuits = build_mesocircuit(&sys, &pair, &support, 0.0)?;
            let run = simulate_distributed(&circuits, &sys, &w, steps)?;
            write_atomic(&dir.join("messages.csv"), |out| Ok(run.log.write_csv(out)?))?;
            run.trajectory
        }
        Mode::Sls => simulate_sls(&sys, &read_pair(&dir)?, &w, steps, None)?,
    };
    write_trajectory(&dir.join("trajectory.csv"), &traj)?;

    if let Some(src) = source {
        let loc = localization_radius(&traj, &sys, src, config.activity_tol);
        write_json(
            &dir.join("localization.json"),
            &json!({
                "source": src + 1,
                "tolerance": config.activity_tol,
                "radius": loc.radius,
                "active_nodes": one_based(loc.active_nodes.iter().copied()),
                "active_states": one_based(loc.active_states.iter().copied()),
                "active_actuators": one_based(loc.active_actuators.iter().copied()),
            }),
        )?;
        println!(
            "{}: {steps} steps, active nodes {:?}",
            mode.as_str(),
            one_based(loc.active_nodes.iter().copied())
        );
    } else {
        println!("{}: {steps} steps", mode.as_str());
    }
    Ok(ExitCode::SUCCESS)
}

fn read_status(dir: &Path) -> Result<Option<serde_json::Value>> {
    let path = dir.join("status.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

fn render_pair(out: &Path, mode: Mode, pair: &FirPair, tau: f64) -> Result<Vec<PathBuf>> {
    let dir = out.join("sparsity");
    let mut written = Vec::new();
    let mut targets = Vec::new();
    if let Some(m1) = pair.m(1) {
        targets.push(("M1", "M(1)", m1));
    }
    if let Some(r2) = pair.r(2) {
        targets.push(("R2", "R(2)", r2));
    }
    for (tag, label, mat) in targets {
        let title = format!("{} {label}", mode.as_str());
        let txt = dir.join(format!("{}_{tag}.txt", mode.as_str()));
        let svg = dir.join(format!("{}_{tag}.svg", mode.as_str()));
        write_text(&txt, &render::text_grid(&title, mat, tau))?;
        write_text(&svg, &render::svg_heatmap(&title, mat, tau))?;
        written.extend([txt, svg]);
    }
    Ok(written)
}

pub fn cmd_analyze(config: &RunConfig, mode: Mode) -> Result<ExitCode> {
    let sys = config.system()?;
    let dir = config.mode_dir(mode);
    let pair = read_pair(&dir)?;
    let support = config.support(&sys, mode)?;
    let circuits = build_mesocircuit(&sys, &pair, &support, config.tau)
        .with_context(|| format!("{} pair cannot be realized as a mesocircuit", mode.as_str()))?;
    let report = census(&circuits);
    write_json(
        &dir.join("census.json"),
        &json!({
            "forward": report.forward_paths,
            "predictive": report.predictive_ifps,
            "communicative": report.communicative_ifps,
            "ratio_total_ifp_to_forward": report.ratio_total_ifp_to_forward,
            "memory_total": report.memory_total,
            "tau": config.tau,
        }),
    )?;
    write_json(&dir.join("memory.json"), &memory_report(&circuits).to_json_value())?;

    let mut rows = Vec::new();
    for m in Mode::ALL {
        let mdir = config.mode_dir(m);
        if let Ok(p) = read_pair(&mdir) {
            render_pair(&config.out, m, &p, config.tau)?;
        }
        if let Some(status) = read_status(&mdir)? {
            if let Some(objective) = status.get("objective").and_then(|v| v.as_f64()) {
                let normalized = status.get("normalized_cost").and_then(|v| v.as_f64());
                rows.push((m, objective, normalized));
            }
        }
    }
    write_atomic(&config.out.join("cost_table.csv"), |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["mode", "objective", "normalized_cost"])?;
        for (m, objective, normalized) in &rows {
            csv.write_record([m.as_str().to_string(), fmt_f64(*objective), normalized.map(fmt_f64).unwrap_or_default()])?;
        }
        csv.flush()?;
        Ok(())
    })?;

    println!(
        "{}: forward {} predictive {} communicative {} ratio {}",
        mode.as_str(),
        report.forward_paths,
        report.predictive_ifps,
        report.communicative_ifps,
        serde_json::to_string(&report.ratio_total_ifp_to_forward)?
    );
    Ok(ExitCode::SUCCESS)
}
