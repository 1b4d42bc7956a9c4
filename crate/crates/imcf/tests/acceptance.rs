//! End-to-end verification suite. Each criterion prints a single
//! "AC-n ...: PASS/FAIL" line with its measured numbers.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use imcf::diagnostics::{decay_fit, BoundsReport};
use imcf::flow::{evolve, FlowConfig, Trajectory};
use imcf::mesh::{CapMesh, MeshMode, ScalarField};
use imcf::oracle::{compare, RadialSolution};
use imcf::surface::GraphState;
use imcf::warp::WarpSpec;

fn pf(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn axisym_state(
    warp: &Arc<WarpSpec>,
    n: usize,
    theta0: f64,
    n_theta: usize,
    f: impl Fn(f64) -> f64,
) -> GraphState {
    let mesh = Arc::new(CapMesh::build(n, theta0, MeshMode::Axisym, n_theta, 1).unwrap());
    let u = ScalarField::from_fn(&mesh, |t, _| f(t));
    GraphState::from_u(mesh, warp.clone(), u, 0.0).unwrap()
}

fn radial_oracle_case(warp: WarpSpec, r0: f64) -> (f64, f64) {
    let warp = Arc::new(warp);
    let st = axisym_state(&warp, 2, PI / 3.0, 256, |_| r0);
    let cfg = FlowConfig { t_end: 2.0, snapshot_stride: 0.1, ..Default::default() };
    let start = Instant::now();
    let traj = evolve(&st, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let sol = RadialSolution::new(warp, 2, r0).unwrap();
    (compare(&traj, &sol).unwrap().max_rel_error, secs)
}

#[test]
fn ac1_radial_euclidean_against_oracle() {
    let (err, secs) = radial_oracle_case(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap(), 1.0);
    let pass = err < 1e-6 && secs < 10.0;
    println!("AC-1 radial euclidean vs exact solution: {} (max rel err {err:.3e}, {secs:.1}s)", pf(pass));
    assert!(pass, "err {err:.3e}, {secs:.1}s");
}

#[test]
fn ac2_radial_hyperboloidal_against_oracle() {
    let (err, secs) = radial_oracle_case(WarpSpec::hyperboloidal(1.0, 1.0, 1.0, 0.0).unwrap(), 2.0);
    let pass = err < 1e-6 && secs < 10.0;
    println!("AC-2 radial hyperboloidal vs exact solution: {} (max rel err {err:.3e}, {secs:.1}s)", pf(pass));
    assert!(pass, "err {err:.3e}, {secs:.1}s");
}

struct LongRun {
    label: String,
    traj: Trajectory,
    report: BoundsReport,
    secs: f64,
}

/// The six perturbed long runs shared by AC-3, AC-4 and AC-5:
/// {euclidean, hyperboloidal} x theta0 in {pi/6, pi/4, pi/3},
/// u0 = 1 + 0.05 cos(pi theta / theta0), t_end = 8.
fn long_runs() -> &'static Vec<LongRun> {
    static RUNS: OnceLock<Vec<LongRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut out = Vec::new();
        for (wname, warp) in [
            ("euclidean", WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap()),
            ("hyperboloidal", WarpSpec::hyperboloidal(1.0, 1.0, 1.0, 0.0).unwrap()),
        ] {
            let warp = Arc::new(warp);
            for (tname, theta0) in [("pi/6", PI / 6.0), ("pi/4", PI / 4.0), ("pi/3", PI / 3.0)] {
                let st = axisym_state(&warp, 2, theta0, 256, |t| {
                    1.0 + 0.05 * (PI * t / theta0).cos()
                });

                let cfg = FlowConfig { t_end: 8.0, snapshot_stride: 0.1, ..Default::default() };
                let start = Instant::now();
                let traj = evolve(&st, &cfg).unwrap();
                let secs = start.elapsed().as_secs_f64();
                let report = BoundsReport::compute(&traj, 1.0, 1.0).unwrap();
                out.push(LongRun { label: format!("{wname} {tname}"), traj, report, secs });
            }
        }
        out
    })
}

#[test]
fn ac3_lemma_suite_on_perturbed_runs() {
    let mut pass = true;
    let mut details = Vec::new();
    for run in long_runs() {
        let monitors_ok = run
            .report
            .monitors
            .iter()
            .filter(|m| m.name != "area_law")
            .all(|m| m.pass);
        let h_positive = run
            .traj
            .snapshots
            .iter()
            .all(|s| s.curvature.mean.iter().all(|&x| x > 0.0));
        let ok = monitors_ok && h_positive && run.report.completed && run.secs < 120.0;
        pass &= ok;
        details.push(format!("{}: {} ({:.0}s)", run.label, pf(ok), run.secs));
    }
    println!("AC-3 pinching/speed/gradient monitors on 6 perturbed runs: {} [{}]", pf(pass), details.join(", "));
    assert!(pass, "{details:?}");
}

#[test]
fn ac4_exact_area_law() {
    let mut pass = true;
    let mut worst = 0.0f64;
    for run in long_runs() {
        let m = run.report.monitors.iter().find(|m| m.name == "area_law").unwrap();
        pass &= m.pass;
        for r in &run.report.rows {
            worst = worst.max((r.area_ratio - 1.0).abs());
        }
    }
    println!("AC-4 area law |M_t| e^-t = |M_0| within 1e-3: {} (worst deviation {worst:.3e})", pf(pass));
    assert!(pass, "worst {worst:.3e}");
}

#[test]
fn ac5_exponential_decay_fits() {
    let mut pass = true;
    let mut details = Vec::new();
    for run in long_runs() {
        let ts: Vec<f64> = run.report.rows.iter().map(|r| r.t).collect();
        let du: Vec<f64> = run.report.rows.iter().map(|r| r.sup_du).collect();
        let dev: Vec<f64> = run.report.rows.iter().map(|r| r.roundness_dev).collect();
        let du_fit = decay_fit(&ts, &du, (2.0, 8.0)).unwrap();
        let dev_fit = decay_fit(&ts, &dev, (2.0, 8.0)).unwrap();
        let dev8 = run.report.rows.last().unwrap().roundness_dev;
        let (du_ok, du_txt) = match &du_fit {
            Some(f) => (f.rate > 0.0 && f.r_squared > 0.99, format!("rate {:.2} r2 {:.4}", f.rate, f.r_squared)),
            None => (false, "no fit".into()),
        };
        let (dev_ok, dev_txt) = match &dev_fit {
            Some(f) => (f.rate > 0.0, format!("rate {:.2}", f.rate)),
            None => (false, "no fit".into()),
        };
        let ok = du_ok && dev_ok && dev8 < 1e-3;
        pass &= ok;
        details.push(format!(
            "{}: {} (|Du| {du_txt}; dev {dev_txt}; dev(8) {dev8:.2e})",
            run.label,
            pf(ok)
        ));
    }
    println!("AC-5 decay of sup|Du| and roundness on [2,8]: {} [{}]", pf(pass), details.join("; "));
    assert!(pass, "{details:#?}");
}

#[test]
fn ac6_self_convergence_and_neumann_residual() {
    let warp = Arc::new(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap());
    let theta0 = PI / 3.0;
    let cfg = FlowConfig { t_end: 1.0, snapshot_stride: 0.25, ..Default::default() };

    let mut finals = Vec::new();
    let mut neumann_ok = true;
    for n_theta in [128usize, 256, 512] {
        let st = axisym_state(&warp, 2, theta0, n_theta, |t| {
            1.0 + 0.05 * (PI * t / theta0).cos()
        });
        let h = st.mesh.h_theta;
        let traj = evolve(&st, &cfg).unwrap();
        for s in &traj.snapshots {
            let res = s
                .state
                .mesh
                .boundary_normal_derivative(&s.state.phi)
                .iter()
                .fold(0.0f64, |m, r| m.max(r.abs()));
            neumann_ok &= res <= 5.0 * h * h;
        }
        let last = traj.snapshots.last().unwrap();
        finals.push((last.state.mesh.clone(), last.state.u.clone()));
    }

    let diff = |coarse: &(Arc<CapMesh>, ScalarField), fine: &(Arc<CapMesh>, ScalarField)| {
        coarse
            .0
            .theta
            .iter()
            .enumerate()
            .map(|(i, &t)| (coarse.1 .0[i] - fine.0.interp_theta(&fine.1, t)).abs())
            .fold(0.0f64, f64::max)
    };
    let d1 = diff(&finals[0], &finals[1]);
    let d2 = diff(&finals[1], &finals[2]);
    let order = (d1 / d2).log2();
    let pass = (1.9..=2.3).contains(&order) && neumann_ok;
    println!(
        "AC-6 self-convergence order over (128,256,512) and Neumann residual <= 5h^2: {} (order {order:.3}, diffs {d1:.3e}/{d2:.3e})",
        pf(pass)
    );
    assert!(pass, "order {order:.3}, neumann_ok {neumann_ok}");
}

#[test]
fn ac7_pointwise_identity_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x13c7);
    let mut worst_speed = 0.0f64;
    let mut worst_trace = 0.0f64;
    let mut worst_det = 0.0f64;

    for case in 0..100 {
        let full2d = case % 4 == 3;
        let n = if full2d { 2 } else { [2usize, 3, 4][case % 3] };
        let theta0 = rng.gen_range(0.5..PI / 2.0);
        let n_theta = rng.gen_range(24..48) * if full2d { 1 } else { 2 };
        let r0 = rng.gen_range(0.8..2.0);
        let warp = if case % 2 == 0 {
            Arc::new(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap())
        } else {
            Arc::new(WarpSpec::hyperboloidal(rng.gen_range(0.5..2.0), 1.0, 1.0, 0.0).unwrap())
        };
        let amps: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let lobe = if full2d { rng.gen_range(-0.02..0.02) } else { 0.0 };
        let mesh = Arc::new(
            CapMesh::build(
                n,
                theta0,
                if full2d { MeshMode::Full2d } else { MeshMode::Axisym },
                n_theta,
                if full2d { 16 } else { 1 },
            )
            .unwrap(),
        );
        let u = ScalarField::from_fn(&mesh, |t, p| {
            let radial: f64 = amps
                .iter()
                .enumerate()
                .map(|(m, a)| a * ((m + 1) as f64 * PI * t / theta0).cos())
                .sum();
            r0 * (1.0 + radial) + lobe * t.sin() * p.cos()
        });
        let st = GraphState::from_u(mesh.clone(), warp.clone(), u, 0.0).unwrap();
        let c = st.curvature().unwrap();
        let direct = st.mean_curvature().unwrap();

        // Flow speed two ways: v / (lambda H) with the frame-trace H, and the
        // graph equation's v^2 / (n lambda' - contraction).
        let (g, v) = st.tilt();
        let contr = mesh.sigma_tilde_contraction(&st.phi);
        for k in 0..mesh.n_nodes() {
            let denom = n as f64 * c.dlambda[k] - contr.0[k];
            let s1 = v[k] * v[k] / denom;
            let s2 = v[k] / (c.lambda[k] * c.mean[k]);
            worst_speed = worst_speed.max((s1 - s2).abs() / s2.abs());
            worst_trace = worst_trace.max((direct[k] - c.mean[k]).abs() / direct[k].abs().max(1.0));

            // det of the induced metric from the frame block times the
            // transverse factors, against lambda^{2n} v^2.
            let (w1, w2) = (
                g.d_theta[k],
                if full2d { g.d_psi[k] / mesh.sin(k / mesh.n_psi) } else { 0.0 },
            );
            let l2 = c.lambda[k] * c.lambda[k];
            let block = l2 * l2 * ((1.0 + w1 * w1) * (1.0 + w2 * w2) - (w1 * w2) * (w1 * w2));
            let det = block * l2.powi(n as i32 - 2);
            worst_det = worst_det.max((det - c.g_det[k]).abs() / c.g_det[k]);
        }
    }

    // Radial profiles stay spatially constant along the flow.
    let mut worst_osc = 0.0f64;
    for warp in [
        Arc::new(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap()),
        Arc::new(WarpSpec::hyperboloidal(1.0, 1.0, 1.0, 0.0).unwrap()),
    ] {
        let st = axisym_state(&warp, 2, PI / 3.0, 64, |_| 1.5);
        let cfg = FlowConfig { t_end: 1.0, snapshot_stride: 0.25, ..Default::default() };
        let traj = evolve(&st, &cfg).unwrap();
        for s in &traj.snapshots {
            let osc = (s.state.u.max() - s.state.u.min()) / s.state.u.max();
            worst_osc = worst_osc.max(osc / (1.0 + s.state.t));
        }
    }

    let pass =
        worst_speed <= 1e-12 && worst_trace <= 1e-12 && worst_det <= 1e-10 && worst_osc <= 1e-12;
    println!(
        "AC-7 identities on 100 random states: {} (speed {worst_speed:.2e}, trace {worst_trace:.2e}, det {worst_det:.2e}, radial osc {worst_osc:.2e})",
        pf(pass)
    );
    assert!(pass, "speed {worst_speed:.2e} trace {worst_trace:.2e} det {worst_det:.2e} osc {worst_osc:.2e}");
}

#[test]
fn ac8_full2d_cross_check() {
    let warp = Arc::new(WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap());
    let theta0 = PI / 3.0;
    let profile = |t: f64| 1.0 + 0.05 * (PI * t / theta0).cos();
    let cfg = FlowConfig { t_end: 1.0, snapshot_stride: 0.5, ..Default::default() };

    // Axisymmetric data in full2d mode, measured against a fine axisym
    // reference: the sup-difference must shrink at the stencil order.
    let reference = {
        let st = axisym_state(&warp, 2, theta0, 256, profile);
        let traj = evolve(&st, &cfg).unwrap();
        let last = traj.snapshots.last().unwrap();
        (last.state.mesh.clone(), last.state.u.clone())
    };
    let full2d_diff = |n_theta: usize| -> f64 {
        let mesh = Arc::new(CapMesh::build(2, theta0, MeshMode::Full2d, n_theta, 16).unwrap());
        let u = ScalarField::from_fn(&mesh, |t, _| profile(t));
        let st = GraphState::from_u(mesh.clone(), warp.clone(), u, 0.0).unwrap();
        let traj = evolve(&st, &cfg).unwrap();
        let last = traj.snapshots.last().unwrap();
        let mut worst = 0.0f64;
        for i in 0..mesh.n_theta {
            let exact = reference.0.interp_theta(&reference.1, mesh.theta[i]);
            for j in 0..mesh.n_psi {
                worst = worst.max((last.state.u.0[mesh.idx(i, j)] - exact).abs());
            }
        }
        worst
    };
    let d1 = full2d_diff(32);
    let d2 = full2d_diff(64);
    let ratio = d1 / d2;
    let order_ok = ratio > 3.0 && ratio < 5.5;

    // Non-axisymmetric initial data passes the monitor suite.
    let mesh = Arc::new(CapMesh::build(2, theta0, MeshMode::Full2d, 32, 16).unwrap());
    let u = ScalarField::from_fn(&mesh, |t, p| {
        let cut = (PI * t / (2.0 * theta0)).cos();
        1.0 + 0.03 * t.sin().powi(2) * p.cos() * cut * cut
    });
    let st = GraphState::from_u(mesh, warp.clone(), u, 0.0).unwrap();
    let cfg2 = FlowConfig { t_end: 2.0, snapshot_stride: 0.25, ..Default::default() };
    let traj = evolve(&st, &cfg2).unwrap();
    let report = BoundsReport::compute(&traj, 1.0, 1.0).unwrap();
    let monitors_ok = report.passed() && report.completed;

    let pass = order_ok && monitors_ok;
    println!(
        "AC-8 full2d cross-check: {} (refinement ratio {ratio:.2}, non-axisym monitors {})",
        pf(pass),
        pf(monitors_ok)
    );
    assert!(pass, "ratio {ratio:.2}, monitors_ok {monitors_ok}");
}
