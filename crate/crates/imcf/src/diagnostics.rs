//! Post-processing of a flow trajectory: rescaled series, the a priori bound
//! monitors, decay fits, and CSV/JSON reporting.
//!
//! Each monitor turns one of the a priori estimates into an executable
//! assertion with O(h^2) slack:
//!   - pinching of lambda(u) e^{-t/n} between its initial extremes,
//!   - speed bounds: sup(phidot) non-increasing, inf(phidot) above the
//!     comparison envelope f(t) = f(0) exp((n C / alpha)(e^{-alpha t / n} - 1))
//!     with C = c_bound * lambda(inf u_0)^{-alpha},
//!   - gradient bound: sup |grad phi| non-increasing,
//!   - exact exponential area growth: |M_t| e^{-t} = |M_0|.

use std::io::Write as IoWrite;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{Snapshot, Termination, Trajectory};
use crate::mesh::{MeshMode, Parity};
use crate::util::linear_fit;

pub const AREA_LAW_TOL: f64 = 1e-3;

/// One CSV row per snapshot; the column order is fixed.
#[derive(Clone, Debug, Serialize)]
pub struct SnapshotRow {
    pub t: f64,
    pub sup_u: f64,
    pub inf_u: f64,
    pub sup_phidot: f64,
    pub inf_phidot: f64,
    pub sup_gradphi: f64,
    pub sup_du: f64,
    pub area: f64,
    pub area_ratio: f64,
    pub osc_uhat: f64,
    pub roundness_dev: f64,
    pub neumann_res: f64,
    pub envelope_f: f64,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "sup_u",
    "inf_u",
    "sup_phidot",
    "inf_phidot",
    "sup_gradphi",
    "sup_Du",
    "area",
    "area_ratio",
    "osc_uhat",
    "roundness_dev",
    "neumann_res",
    "envelope_f",
];

/// Outcome of one monitor. `worst_margin` is the smallest remaining slack
/// over all snapshots (tolerance included); the monitor passes iff it is
/// non-negative.
#[derive(Clone, Debug, Serialize)]
pub struct MonitorOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub worst_t: f64,
    pub worst_margin: f64,
    pub tol: f64,
}

fn outcome(name: &'static str, tol: f64, margins: impl Iterator<Item = (f64, f64)>) -> MonitorOutcome {
    let mut worst_t = 0.0;
    let mut worst = f64::INFINITY;
    for (t, m) in margins {
        if m < worst {
            worst = m;
            worst_t = t;
        }
    }
    MonitorOutcome { name, pass: worst >= 0.0 && worst.is_finite(), worst_t, worst_margin: worst, tol }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    /// Fitted decay rate (positive means the series decays).
    pub rate: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub rows: Vec<SnapshotRow>,
    pub monitors: Vec<MonitorOutcome>,
    pub completed: bool,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.monitors.iter().all(|m| m.pass)
    }

    pub fn compute(traj: &Trajectory, alpha: f64, c_bound: f64) -> Result<Self> {
        let rows = snapshot_rows(traj, alpha, c_bound)?;
        let h = traj.snapshots[0].state.mesh.h_theta;
        let tol = 10.0 * h * h;

        let first = &traj.snapshots[0];
        let warp = &first.state.warp;
        let lam_lo = warp.lambda(first.state.u.min());
        let lam_hi = warp.lambda(first.state.u.max());

        let mut monitors = Vec::new();

        // Pinching of lambda(u) e^{-t/n}.
        let n = first.state.mesh.dim_n as f64;
        monitors.push(outcome(
            "radius_pinching",
            tol,
            traj.snapshots.iter().map(|s| {
                let eta = (-s.state.t / n).exp();
                let lo = warp.lambda(s.state.u.min()) * eta;
                let hi = warp.lambda(s.state.u.max()) * eta;
                (s.state.t, (lo - lam_lo + tol).min(lam_hi - hi + tol))
            }),
        ));

        // Speed bounds.
        let sup0 = rows[0].sup_phidot;
        monitors.push(outcome(
            "speed_upper",
            tol,
            rows.iter().map(|r| (r.t, sup0 - r.sup_phidot + tol)),
        ));
        monitors.push(outcome(
            "speed_lower",
            tol,
            rows.iter().map(|r| (r.t, r.inf_phidot - r.envelope_f + tol)),
        ));

        // Gradient bound.
        let g0 = rows[0].sup_gradphi;
        monitors.push(outcome(
            "gradient_bound",
            tol,
            rows.iter().map(|r| (r.t, g0 - r.sup_gradphi + tol)),
        ));

        // Exact area law.
        monitors.push(outcome(
            "area_law",
            AREA_LAW_TOL,
            rows.iter().map(|r| (r.t, AREA_LAW_TOL - (r.area_ratio - 1.0).abs())),
        ));

        Ok(Self { rows, monitors, completed: matches!(traj.status, Termination::Completed) })
    }
}

fn require_nonempty(traj: &Trajectory) -> Result<()> {
    if traj.snapshots.is_empty() {
        return Err(Error::InsufficientData("trajectory has no snapshots".into()));
    }
    Ok(())
}

fn snapshot_rows(traj: &Trajectory, alpha: f64, c_bound: f64) -> Result<Vec<SnapshotRow>> {
    require_nonempty(traj)?;
    let first = &traj.snapshots[0];
    let n = first.state.mesh.dim_n as f64;
    let area0 = first.state.area();
    let lam0 = first.state.warp.lambda(first.state.u.min());
    let c_eff = c_bound * lam0.powf(-alpha);
    let f0 = first.phidot.iter().copied().fold(f64::INFINITY, f64::min);

    let mut rows = Vec::with_capacity(traj.snapshots.len());
    for s in &traj.snapshots {
        let t = s.state.t;
        let (g, v) = s.state.tilt();
        let sup_grad = g.norm_sq.iter().map(|x| x.sqrt()).fold(0.0f64, f64::max);
        let sup_du = (0..v.len())
            .map(|k| s.curvature.lambda[k] * g.norm_sq[k].sqrt())
            .fold(0.0f64, f64::max);
        let area = s.state.area();
        let eta_n = (-t / n).exp();
        let uhat_max = s.state.u.max() * eta_n;
        let uhat_min = s.state.u.min() * eta_n;
        let dev = roundness_dev(s);
        let neumann = s
            .state
            .mesh
            .boundary_normal_derivative(&s.state.phi)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        let envelope = f0 * ((n * c_eff / alpha) * ((-alpha * t / n).exp() - 1.0)).exp();
        rows.push(SnapshotRow {
            t,
            sup_u: s.state.u.max(),
            inf_u: s.state.u.min(),
            sup_phidot: s.phidot.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            inf_phidot: s.phidot.iter().copied().fold(f64::INFINITY, f64::min),
            sup_gradphi: sup_grad,
            sup_du,
            area,
            area_ratio: area * (-t).exp() / area0,
            osc_uhat: uhat_max - uhat_min,
            roundness_dev: dev,
            neumann_res: neumann,
            envelope_f: envelope,
        });
    }
    Ok(rows)
}

/// sup over nodes and frame entries of |(lambda/lambda') S - I|; zero exactly
/// on geodesic sphere pieces.
pub fn roundness_dev(s: &Snapshot) -> f64 {
    let mut dev = 0.0f64;
    for k in 0..s.curvature.v.len() {
        let m = s.curvature.lambda[k] / s.curvature.dlambda[k];
        let [s11, s12, s22] = s.curvature.shape[k];
        dev = dev
            .max((m * s11 - 1.0).abs())
            .max((m * s12).abs())
            .max((m * s22 - 1.0).abs());
    }
    dev
}

/// Per-snapshot roundness series (dev, osc of u e^{-t/n}).
pub fn roundness(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    require_nonempty(traj)?;
    let n = traj.snapshots[0].state.mesh.dim_n as f64;
    Ok(traj
        .snapshots
        .iter()
        .map(|s| {
            let eta = (-s.state.t / n).exp();
            (roundness_dev(s), (s.state.u.max() - s.state.u.min()) * eta)
        })
        .collect())
}

/// Pinching monitor on lambda(u) e^{-t/n}; returns the (inf, sup) series.
pub fn lemma31_check(traj: &Trajectory) -> Result<(Vec<(f64, f64)>, MonitorOutcome)> {
    let report = BoundsReport::compute(traj, 1.0, 1.0)?;
    let n = traj.snapshots[0].state.mesh.dim_n as f64;
    let warp = &traj.snapshots[0].state.warp;
    let series = traj
        .snapshots
        .iter()
        .map(|s| {
            let eta = (-s.state.t / n).exp();
            (warp.lambda(s.state.u.min()) * eta, warp.lambda(s.state.u.max()) * eta)
        })
        .collect();
    let m = report.monitors.into_iter().find(|m| m.name == "radius_pinching").unwrap();
    Ok((series, m))
}

/// Speed monitor; returns the (inf phidot, sup phidot, envelope) series and
/// the upper/lower outcomes.
pub fn lemma32_check(
    traj: &Trajectory,
    alpha: f64,
    c_bound: f64,
) -> Result<(Vec<(f64, f64, f64)>, [MonitorOutcome; 2])> {
    let report = BoundsReport::compute(traj, alpha, c_bound)?;
    let series = report
        .rows
        .iter()
        .map(|r| (r.inf_phidot, r.sup_phidot, r.envelope_f))
        .collect();
    let up = report.monitors.iter().find(|m| m.name == "speed_upper").unwrap().clone();
    let lo = report.monitors.iter().find(|m| m.name == "speed_lower").unwrap().clone();
    Ok((series, [up, lo]))
}

/// Gradient monitor; returns the sup |grad phi| series.
pub fn lemma41_check(traj: &Trajectory) -> Result<(Vec<f64>, MonitorOutcome)> {
    let report = BoundsReport::compute(traj, 1.0, 1.0)?;
    let series = report.rows.iter().map(|r| r.sup_gradphi).collect();
    let m = report.monitors.into_iter().find(|m| m.name == "gradient_bound").unwrap();
    Ok((series, m))
}

/// Area-law monitor; returns the |M_t| e^{-t} / |M_0| series.
pub fn area_law_check(traj: &Trajectory) -> Result<(Vec<f64>, MonitorOutcome)> {
    let report = BoundsReport::compute(traj, 1.0, 1.0)?;
    let series = report.rows.iter().map(|r| r.area_ratio).collect();
    let m = report.monitors.into_iter().find(|m| m.name == "area_law").unwrap();
    Ok((series, m))
}

/// Least-squares exponential fit log(y) = log_prefactor - rate * t on the
/// window. Returns None when the series touches zero or below inside the
/// window (no exponential fit is meaningful there).
pub fn decay_fit(ts: &[f64], ys: &[f64], window: (f64, f64)) -> Result<Option<DecayFit>> {
    assert_eq!(ts.len(), ys.len());
    let mut xs = Vec::new();
    let mut ls = Vec::new();
    let mut skip = false;
    for (&t, &y) in ts.iter().zip(ys) {
        if t >= window.0 - 1e-12 && t <= window.1 + 1e-12 {
            if y <= 0.0 {
                skip = true;
                break;
            }
            xs.push(t);
            ls.push(y.ln());
        }
    }
    if skip {
        return Ok(None);
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs >= 3 points in [{}, {}], found {}",
            window.0,
            window.1,
            xs.len()
        )));
    }
    let (slope, intercept, r2) = linear_fit(&xs, &ls);
    Ok(Some(DecayFit {
        rate: -slope,
        log_prefactor: intercept,
        r_squared: r2,
        window,
        points: xs.len(),
    }))
}

/// Sup-norm of the discrete steady-form residual
/// div_sigma(grad phi / v) - n lambda' / v + v / phidot.
pub fn elliptic_residual(s: &Snapshot) -> f64 {
    let mesh = &s.state.mesh;
    let n = mesh.dim_n as f64;
    let (g, v) = s.state.tilt();
    let nn = mesh.n_nodes();

    let xt: Vec<f64> = (0..nn).map(|k| g.d_theta[k] / v[k]).collect();
    let dxt = mesh.d_theta(&xt, Parity::Odd);
    let div_psi = match mesh.mode {
        MeshMode::Full2d => {
            let xp: Vec<f64> = (0..mesh.n_theta)
                .flat_map(|i| {
                    let s2 = mesh.sin(i) * mesh.sin(i);
                    (0..mesh.n_psi).map(move |j| (i, j, s2))
                })
                .map(|(i, j, s2)| g.d_psi[mesh.idx(i, j)] / (s2 * v[mesh.idx(i, j)]))
                .collect();
            mesh.d_psi(&xp)
        }
        MeshMode::Axisym => vec![0.0; nn],
    };

    let mut worst = 0.0f64;
    for i in 0..mesh.n_theta {
        let cot = mesh.cot(i);
        for j in 0..mesh.n_psi {
            let k = mesh.idx(i, j);
            let div = dxt[k] + (n - 1.0) * cot * xt[k] + div_psi[k];
            let r = div - n * s.curvature.dlambda[k] / v[k] + v[k] / s.phidot[k];
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// Write the per-snapshot series as CSV with the documented column order.
pub fn write_csv<W: IoWrite>(rows: &[SnapshotRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for r in rows {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            r.t,
            r.sup_u,
            r.inf_u,
            r.sup_phidot,
            r.inf_phidot,
            r.sup_gradphi,
            r.sup_du,
            r.area,
            r.area_ratio,
            r.osc_uhat,
            r.roundness_dev,
            r.neumann_res,
            r.envelope_f
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, FlowConfig};
    use crate::mesh::{CapMesh, MeshMode, ScalarField};
    use crate::surface::GraphState;
    use crate::warp::WarpSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn run(
        warp: WarpSpec,
        n_theta: usize,
        t_end: f64,
        f: impl Fn(f64) -> f64,
    ) -> crate::flow::Trajectory {
        let mesh = Arc::new(CapMesh::build(2, PI / 3.0, MeshMode::Axisym, n_theta, 1).unwrap());
        let u = ScalarField::from_fn(&mesh, |t, _| f(t));
        let st = GraphState::from_u(mesh, Arc::new(warp), u, 0.0).unwrap();
        let cfg = FlowConfig { t_end, snapshot_stride: 0.25, ..Default::default() };
        evolve(&st, &cfg).unwrap()
    }

    #[test]
    fn radial_euclidean_series_are_flat() {
        let traj = run(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap(), 48, 1.0, |_| 1.0);
        let (series, m) = lemma31_check(&traj).unwrap();
        assert!(m.pass);
        for &(lo, hi) in &series {
            assert_relative_eq!(lo, 1.0, epsilon = 1e-10);
            assert_relative_eq!(hi, 1.0, epsilon = 1e-10);
        }
        let (sp, [up, lo]) = lemma32_check(&traj, 1.0, 1.0).unwrap();
        assert!(up.pass && lo.pass);
        for &(a, b, _) in &sp {
            // Flat cone: phidot = 1/n for all time.
            assert_relative_eq!(a, 0.5, epsilon = 1e-10);
            assert_relative_eq!(b, 0.5, epsilon = 1e-10);
        }
        let (grad, m) = lemma41_check(&traj).unwrap();
        assert!(m.pass);
        assert!(grad.iter().all(|&x| x.abs() < 1e-11));
        for (dev, osc) in roundness(&traj).unwrap() {
            assert!(dev < 1e-10 && osc < 1e-10);
        }
        for s in &traj.snapshots {
            assert!(elliptic_residual(s) < 1e-9);
        }
    }

    #[test]
    fn radial_hyperboloidal_pinching_is_constant_sqrt5() {
        let traj = run(WarpSpec::hyperboloidal(1.0, 1.0, 1.0, 0.0).unwrap(), 48, 1.0, |_| 2.0);
        let (series, m) = lemma31_check(&traj).unwrap();
        assert!(m.pass);
        for &(lo, hi) in &series {
            assert_relative_eq!(lo, 5f64.sqrt(), epsilon = 1e-9);
            assert_relative_eq!(hi, 5f64.sqrt(), epsilon = 1e-9);
        }
    }

    #[test]
    fn area_ratio_is_one_for_radial_euclidean() {
        let traj = run(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap(), 64, 1.0, |_| 1.0);
        let (ratios, m) = area_law_check(&traj).unwrap();
        assert!(m.pass);
        for &r in &ratios {
            assert_relative_eq!(r, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn perturbed_run_passes_all_monitors() {
        let t0 = PI / 3.0;
        let traj = run(
            WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap(),
            96,
            1.5,
            |t| 1.0 + 0.05 * (PI * t / t0).cos(),
        );
        let report = BoundsReport::compute(&traj, 1.0, 1.0).unwrap();
        for m in &report.monitors {
            assert!(m.pass, "{} failed with margin {}", m.name, m.worst_margin);
        }
        assert!(report.completed);
        // Oscillation decays.
        let first = report.rows.first().unwrap().osc_uhat;
        let last = report.rows.last().unwrap().osc_uhat;
        assert!(last < first);
    }

    #[test]
    fn decay_fit_examples() {
        let ts: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| 3.0 * (-0.5 * t).exp()).collect();
        let fit = decay_fit(&ts, &ys, (0.0, 10.0)).unwrap().unwrap();
        assert_relative_eq!(fit.rate, 0.5, epsilon = 1e-10);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-10);
        assert_relative_eq!(fit.log_prefactor, 3.0f64.ln(), epsilon = 1e-10);

        let flat = vec![2.0; 50];
        let fit = decay_fit(&ts, &flat, (0.0, 10.0)).unwrap().unwrap();
        assert_relative_eq!(fit.rate, 0.0, epsilon = 1e-12);

        let mut with_zero = ys.clone();
        with_zero[10] = 0.0;
        assert!(decay_fit(&ts, &with_zero, (0.0, 10.0)).unwrap().is_none());

        assert!(matches!(
            decay_fit(&ts, &ys, (100.0, 101.0)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn elliptic_residual_refines_at_second_order() {
        // Manufactured smooth state with phidot defined by the flow speed
        // v / (lambda H); both forms discretize the same equation, so the
        // mismatch must shrink at the stencil order.
        let t0 = PI / 3.0;
        let res_at = |nt: usize| -> f64 {
            let mesh =
                Arc::new(CapMesh::build(2, t0, MeshMode::Axisym, nt, 1).unwrap());
            let u = ScalarField::from_fn(&mesh, |t, _| 1.0 + 0.05 * (PI * t / t0).cos());
            let state = GraphState::from_u(
                mesh,
                Arc::new(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap()),
                u,
                0.0,
            )
            .unwrap();
            let curvature = state.curvature().unwrap();
            let phidot = (0..curvature.v.len())
                .map(|k| curvature.v[k] / (curvature.lambda[k] * curvature.mean[k]))
                .collect();
            elliptic_residual(&crate::flow::Snapshot { state, curvature, phidot })
        };
        let e1 = res_at(64);
        let e2 = res_at(128);
        let ratio = e1 / e2;
        assert!(ratio > 3.0 && ratio < 5.5, "refinement ratio {ratio}");
    }

    #[test]
    fn csv_has_documented_columns() {
        let traj = run(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap(), 48, 0.5, |_| 1.0);
        let report = BoundsReport::compute(&traj, 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        write_csv(&report.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), report.rows.len());
        for r in rows {
            assert_eq!(r.split(',').count(), 13);
            assert!(!r.contains(' '));
        }
    }
}
