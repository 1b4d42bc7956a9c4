//! Command implementations behind the binary: single runs, sweeps,
//! convergence studies, and warp validation.
//!
//! Exit code contract: 0 all monitors pass, 1 monitor or validation failure,
//! 2 singularity during the flow, 3 configuration error. Library errors are
//! mapped to 3 by the binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::diagnostics::{decay_fit, write_csv, BoundsReport, DecayFit};
use crate::error::{Error, Result};
use crate::flow::{evolve, Termination, Trajectory};
use crate::mesh::MeshMode;
use crate::oracle::{compare, RadialSolution};
use crate::warp::DEFAULT_SAMPLES;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_MONITOR: i32 = 1;
pub const EXIT_SINGULARITY: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, Serialize)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub status: String,
    pub monitors_passed: bool,
    pub out_dir: PathBuf,
}

fn status_string(t: &Termination) -> String {
    match t {
        Termination::Completed => "completed".into(),
        Termination::Singularity { t, node, denom } => {
            format!("singularity at t={t:.6} (node {node}, denominator {denom:.3e})")
        }
        Termination::DomainExit { t, detail } => format!("domain exit at t={t:.6}: {detail}"),
        Termination::StepFailure { t } => format!("step failure at t={t:.6}"),
    }
}

fn fit_series(
    traj_rows: &[(f64, f64)],
    window: (f64, f64),
) -> Result<Option<DecayFit>> {
    let ts: Vec<f64> = traj_rows.iter().map(|r| r.0).collect();
    let ys: Vec<f64> = traj_rows.iter().map(|r| r.1).collect();
    match decay_fit(&ts, &ys, window) {
        Ok(f) => Ok(f),
        Err(Error::InsufficientData(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Run one experiment end to end and write series.csv plus summary.json.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out_dir)?;

    // Warp admissibility first; a warp outside the hypotheses is a
    // configuration problem, not a flow failure.
    let warp = cfg.warp_spec()?;
    let report = warp.validate(DEFAULT_SAMPLES, None)?;
    if !report.passed() {
        let msg = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        return Err(Error::Config(format!("warp fails admissibility checks: {msg}")));
    }

    let setup = cfg.build()?;
    let traj = evolve(&setup.initial, &setup.flow)?;
    let bounds = BoundsReport::compute(&traj, cfg.alpha, cfg.c_bound)?;

    let mut csv = Vec::new();
    write_csv(&bounds.rows, &mut csv)?;
    fs::write(out_dir.join("series.csv"), csv)?;

    // Decay fits over the trailing three quarters of the run.
    let window = (cfg.t_end / 4.0, cfg.t_end);
    let du_fit = fit_series(
        &bounds.rows.iter().map(|r| (r.t, r.sup_du)).collect::<Vec<_>>(),
        window,
    )?;
    let dev_fit = fit_series(
        &bounds.rows.iter().map(|r| (r.t, r.roundness_dev)).collect::<Vec<_>>(),
        window,
    )?;

    let status = status_string(&traj.status);
    let summary = json!({
        "status": status,
        "steps": traj.steps,
        "dt_min": traj.dt_min,
        "dt_max": traj.dt_max,
        "monitors": bounds.monitors,
        "monitors_passed": bounds.passed(),
        "decay_fits": { "sup_du": du_fit, "roundness_dev": dev_fit },
        "snapshots": bounds.rows.len(),
    });
    fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;

    if cfg.emit_fields {
        emit_fields(&traj, out_dir)?;
    }
    if cfg.emit_plots {
        fs::write(out_dir.join("plot.py"), PLOT_SCRIPT)?;
    }

    let exit_code = match traj.status {
        Termination::Singularity { .. } => EXIT_SINGULARITY,
        Termination::Completed if bounds.passed() => EXIT_PASS,
        _ => EXIT_MONITOR,
    };
    Ok(RunOutcome {
        exit_code,
        status,
        monitors_passed: bounds.passed(),
        out_dir: out_dir.to_path_buf(),
    })
}

fn emit_fields(traj: &Trajectory, out_dir: &Path) -> Result<()> {
    for s in &traj.snapshots {
        let mesh = &s.state.mesh;
        let mut text = String::from("theta,psi,u,phi,v,H\n");
        for i in 0..mesh.n_theta {
            for j in 0..mesh.n_psi {
                let k = mesh.idx(i, j);
                text.push_str(&format!(
                    "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    mesh.theta[i],
                    mesh.psi[j],
                    s.state.u.0[k],
                    s.state.phi.0[k],
                    s.curvature.v[k],
                    s.curvature.mean[k]
                ));
            }
        }
        fs::write(out_dir.join(format!("fields-{:.4}.csv", s.state.t)), text)?;
    }
    Ok(())
}

pub fn cmd_run(config_path: &Path, out: Option<&Path>) -> Result<i32> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out_dir = resolve_out(&cfg, out, "out");
    let outcome = run_experiment(&cfg, &out_dir)?;
    println!("run {}: {} (exit {})", out_dir.display(), outcome.status, outcome.exit_code);
    Ok(outcome.exit_code)
}

fn resolve_out(cfg: &ExperimentConfig, cli_out: Option<&Path>, default: &str) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(default))
}

/// Run several configs, each in its own run-XXX directory, with a shared
/// work queue across `jobs` threads. The aggregate exit code is the first
/// nonzero per-run code in config order.
pub fn cmd_sweep(config_paths: &[PathBuf], out: Option<&Path>, jobs: usize) -> Result<i32> {
    if config_paths.is_empty() {
        return Err(Error::Config("sweep requires at least one config".into()));
    }
    let out_root = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("sweep-out"));
    fs::create_dir_all(&out_root)?;

    let configs: Vec<ExperimentConfig> = config_paths
        .iter()
        .map(|p| ExperimentConfig::load(p))
        .collect::<Result<_>>()?;

    let jobs = jobs.max(1).min(configs.len());
    let next = AtomicUsize::new(0);
    let configs = Arc::new(configs);
    let mut results: Vec<Option<std::result::Result<RunOutcome, String>>> =
        (0..configs.len()).map(|_| None).collect();

    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for _ in 0..jobs {
            let configs = configs.clone();
            let next = &next;
            let out_root = out_root.clone();
            handles.push(scope.spawn(move || {
                let mut local = Vec::new();
                loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= configs.len() {
                        break;
                    }
                    let dir = out_root.join(format!("run-{i:03}"));
                    let r = run_experiment(&configs[i], &dir).map_err(|e| e.to_string());
                    local.push((i, r));
                }
                local
            }));
        }
        for h in handles {
            for (i, r) in h.join().expect("sweep worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let mut agg = Vec::new();
    let mut exit = EXIT_PASS;
    for (i, r) in results.into_iter().enumerate() {
        let r = r.expect("every run produces a result");
        let (code, status) = match &r {
            Ok(o) => (o.exit_code, o.status.clone()),
            Err(msg) => (EXIT_CONFIG, msg.clone()),
        };
        if exit == EXIT_PASS && code != EXIT_PASS {
            exit = code;
        }
        agg.push(json!({
            "index": i,
            "config": config_paths[i].display().to_string(),
            "dir": format!("run-{i:03}"),
            "exit_code": code,
            "status": status,
        }));
        println!("run-{i:03}: exit {code} ({status})");
    }
    fs::write(
        out_root.join("aggregate.json"),
        serde_json::to_string_pretty(&json!({ "runs": agg, "exit_code": exit }))?,
    )?;
    Ok(exit)
}

#[derive(Debug, Serialize)]
struct ConvergenceLevel {
    n_theta: usize,
    radial_rel_error: f64,
    self_diff: Option<f64>,
    observed_order: Option<f64>,
}

/// Mesh refinement study: radial runs are compared against the exact radial
/// solution per level; a perturbed variant is compared level-to-level
/// (coarse nodes interpolated from the finer run) for the observed order.
pub fn cmd_convergence(config_path: &Path, levels: usize, out: Option<&Path>) -> Result<i32> {
    if levels < 3 {
        return Err(Error::Config(format!("convergence study needs >= 3 levels, got {levels}")));
    }
    let base = ExperimentConfig::load(config_path)?;
    if base.mesh_mode() == MeshMode::Full2d {
        return Err(Error::Config("convergence study runs in axisym mode".into()));
    }

    let radial_errors: Vec<f64> = (0..levels)
        .map(|lvl| -> Result<f64> {
            let mut cfg = base.clone();
            cfg.n_theta = base.n_theta << lvl;
            cfg.amplitude = 0.0;
            let setup = cfg.build()?;
            let traj = evolve(&setup.initial, &setup.flow)?;
            let sol = RadialSolution::new(setup.warp.clone(), cfg.n, cfg.r0)?;
            Ok(compare(&traj, &sol)?.max_rel_error)
        })
        .collect::<Result<_>>()?;

    // Perturbed self-convergence on the final profile u(t_end, theta).
    let amp = if base.amplitude != 0.0 { base.amplitude } else { 0.05 * base.r0 };
    let finals: Vec<_> = (0..levels)
        .map(|lvl| -> Result<_> {
            let mut cfg = base.clone();
            cfg.n_theta = base.n_theta << lvl;
            cfg.amplitude = amp;
            let setup = cfg.build()?;
            let traj = evolve(&setup.initial, &setup.flow)?;
            let last = traj.snapshots.last().unwrap();
            Ok((setup.mesh.clone(), last.state.u.clone()))
        })
        .collect::<Result<_>>()?;

    let mut diffs = Vec::new();
    for w in finals.windows(2) {
        let (coarse_mesh, coarse_u) = &w[0];
        let (fine_mesh, fine_u) = &w[1];
        let mut worst = 0.0f64;
        for (i, &t) in coarse_mesh.theta.iter().enumerate() {
            let f = fine_mesh.interp_theta(fine_u, t);
            worst = worst.max((coarse_u.0[i] - f).abs());
        }
        diffs.push(worst);
    }

    let mut rows = Vec::new();
    let mut orders = Vec::new();
    for lvl in 0..levels {
        let self_diff = if lvl < diffs.len() { Some(diffs[lvl]) } else { None };
        let observed_order = if lvl + 1 < diffs.len() {
            let o = (diffs[lvl] / diffs[lvl + 1]).log2();
            orders.push(o);
            Some(o)
        } else {
            None
        };
        rows.push(ConvergenceLevel {
            n_theta: base.n_theta << lvl,
            radial_rel_error: radial_errors[lvl],
            self_diff,
            observed_order,
        });
    }

    println!("n_theta    radial_rel_err   self_diff        order");
    for r in &rows {
        println!(
            "{:<10} {:<16.3e} {:<16} {}",
            r.n_theta,
            r.radial_rel_error,
            r.self_diff.map_or("-".into(), |d| format!("{d:.3e}")),
            r.observed_order.map_or("-".into(), |o| format!("{o:.3}")),
        );
    }

    let radial_ok = radial_errors.iter().all(|&e| e < 1e-6);
    let order_ok = !orders.is_empty() && orders.iter().all(|&o| o >= 1.9);
    let exit = if radial_ok && order_ok { EXIT_PASS } else { EXIT_MONITOR };

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("convergence.json"),
            serde_json::to_string_pretty(&json!({
                "levels": rows,
                "radial_pass": radial_ok,
                "order_pass": order_ok,
                "exit_code": exit,
            }))?,
        )?;
    }
    Ok(exit)
}

pub fn cmd_validate_warp(config_path: &Path, out: Option<&Path>) -> Result<i32> {
    let cfg = ExperimentConfig::load(config_path)?;
    let warp = cfg.warp_spec()?;
    let report = warp.validate(DEFAULT_SAMPLES, None)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("warp-report.json"), text)?;
    }
    Ok(if report.passed() { EXIT_PASS } else { EXIT_MONITOR })
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot series.csv produced by an imcf run (requires matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

path = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "series.csv"
with open(path) as f:
    rows = list(csv.DictReader(f))
t = [float(r["t"]) for r in rows]

fig, axes = plt.subplots(2, 2, figsize=(10, 8))
axes[0, 0].plot(t, [float(r["sup_u"]) for r in rows], label="sup u")
axes[0, 0].plot(t, [float(r["inf_u"]) for r in rows], label="inf u")
axes[0, 0].set_yscale("log"); axes[0, 0].legend(); axes[0, 0].set_title("radius")
axes[0, 1].plot(t, [float(r["sup_Du"]) for r in rows], label="sup |Du|")
axes[0, 1].plot(t, [float(r["roundness_dev"]) for r in rows], label="roundness dev")
axes[0, 1].set_yscale("log"); axes[0, 1].legend(); axes[0, 1].set_title("decay")
axes[1, 0].plot(t, [float(r["sup_phidot"]) for r in rows], label="sup speed")
axes[1, 0].plot(t, [float(r["inf_phidot"]) for r in rows], label="inf speed")
axes[1, 0].plot(t, [float(r["envelope_f"]) for r in rows], "--", label="envelope f")
axes[1, 0].legend(); axes[1, 0].set_title("flow speed")
axes[1, 1].plot(t, [float(r["area_ratio"]) for r in rows])
axes[1, 1].set_title("area ratio e^{-t}|M_t|/|M_0|")
fig.tight_layout()
fig.savefig(path.parent / "series.png", dpi=150)
print(f"wrote {path.parent / 'series.png'}")
"#;
