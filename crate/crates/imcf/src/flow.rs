//! Time integration of the scalar graph evolution
//!     d(phi)/dt = v^2 / (n lambda' - sigma~^{ij} phi_{i,j})
//! with the homogeneous Neumann condition at theta = theta0, by the method of
//! lines with explicit Runge-Kutta stepping.
//!
//! The Neumann condition is enforced by slaving the boundary node: after every
//! stage the boundary value is replaced by the zero-slope quadratic
//! extrapolation f_B = (4 f_{B-1} - f_{B-2}) / 3, which zeroes the one-sided
//! second-order derivative exactly and leaves interior nodes untouched.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{CapMesh, MeshMode, ScalarField};
use crate::surface::{CurvatureFields, GraphState};
use crate::warp::{DlambdaEvaluator, WarpSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Rk4,
    Heun,
}

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub cfl_safety: f64,
    pub t_end: f64,
    /// Spacing of recorded snapshots; t = 0 and t = t_end are always recorded.
    pub snapshot_stride: f64,
    pub max_step_halvings: usize,
    pub max_steps: usize,
    /// Optional upper bound on the adaptive step size.
    pub dt_cap: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            cfl_safety: 0.8,
            t_end: 1.0,
            snapshot_stride: 0.1,
            max_step_halvings: 20,
            max_steps: 200_000_000,
            dt_cap: None,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Termination {
    Completed,
    /// The quasilinear denominator n lambda' - sigma~^{ij} phi_{i,j} hit zero.
    Singularity { t: f64, node: usize, denom: f64 },
    /// The radial profile left the interval on which the warp is defined.
    DomainExit { t: f64, detail: String },
    /// Step-halving could not recover a finite update.
    StepFailure { t: f64 },
}

impl Termination {
    pub fn completed(&self) -> bool {
        matches!(self, Termination::Completed)
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub state: GraphState,
    pub curvature: CurvatureFields,
    /// Flow speed v / (lambda H) per node.
    pub phidot: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub status: Termination,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
}

/// Slave the boundary row to the zero-slope extrapolation. Idempotent.
pub fn apply_neumann(mesh: &CapMesh, phi: &mut [f64]) {
    let b = mesh.boundary_row();
    for j in 0..mesh.n_psi {
        phi[mesh.idx(b, j)] =
            (4.0 * phi[mesh.idx(b - 1, j)] - phi[mesh.idx(b - 2, j)]) / 3.0;
    }
}

struct RhsEval {
    dphi: Vec<f64>,
    /// Largest linearized stencil rate, for the stable step size.
    rate_max: f64,
    denom_min: f64,
    denom_min_node: usize,
}

/// Per-node cache of (s, tanh s) for the hyperboloidal lambda' fast path.
/// Between refreshes the value is advanced with the exact tanh addition
/// formula, whose series for the small increment is correct to f64 well
/// below the 1e-4 refresh threshold. This trades a libm call per node per
/// stage for a division.
struct DlCache {
    s: Vec<f64>,
    t: Vec<f64>,
}

impl DlCache {
    fn new(n: usize) -> Self {
        Self { s: vec![f64::NEG_INFINITY; n], t: vec![0.0; n] }
    }
}

const DL_REFRESH: f64 = 1e-4;

fn eval_rhs(
    mesh: &CapMesh,
    warp: &WarpSpec,
    phi: &ScalarField,
    cache: &mut DlCache,
) -> Result<RhsEval> {
    let n = mesh.dim_n as f64;
    let dlambda = warp.dlambda_evaluator();
    let g = mesh.grad(phi);
    let contr = mesh.sigma_tilde_contraction_with(phi, &g);
    let h = mesh.h_theta;
    let hp = mesh.h_psi;

    let mut dphi = vec![0.0; phi.len()];
    let mut rate_max: f64 = 0.0;
    let mut denom_min = f64::INFINITY;
    let mut denom_min_node = 0;

    for i in 0..mesh.n_theta {
        let s = mesh.sin(i);
        let cot = mesh.cot(i);
        for j in 0..mesh.n_psi {
            let k = mesh.idx(i, j);
            let dl = match &dlambda {
                DlambdaEvaluator::Constant => 1.0,
                DlambdaEvaluator::TanhShifted { shift, name } => {
                    let p = phi.0[k];
                    if !p.is_finite() {
                        return Err(Error::Domain(format!("phi = {p} is not finite")));
                    }
                    let s = p + shift;
                    if s < 0.0 {
                        return Err(Error::Domain(format!(
                            "phi = {p} maps below the interval start of {name}"
                        )));
                    }
                    let d = s - cache.s[k];
                    if d.abs() <= DL_REFRESH {
                        let d2 = d * d;
                        let td = d * (1.0 - d2 / 3.0 + 2.0 * d2 * d2 / 15.0);
                        let t0 = cache.t[k];
                        (t0 + td) / (1.0 + t0 * td)
                    } else {
                        let t = s.tanh();
                        cache.s[k] = s;
                        cache.t[k] = t;
                        t
                    }
                }
                _ => dlambda.eval(phi.0[k])?,
            };
            let v2 = 1.0 + g.norm_sq[k];
            let denom = n * dl - contr.0[k];
            if denom < denom_min {
                denom_min = denom;
                denom_min_node = k;
            }
            dphi[k] = v2 / denom;

            // Frozen-coefficient rates of the quasilinear operator.
            let d2 = denom * denom;
            let rate = match mesh.mode {
                MeshMode::Axisym => {
                    let a = v2 * (1.0 / v2) / d2;
                    let b = v2 * (n - 1.0) * cot / d2;
                    4.0 * a / (h * h) + 2.0 * b.abs() / h
                }
                MeshMode::Full2d => {
                    let gu_t = g.d_theta[k];
                    let gu_p = g.d_psi[k] / (s * s);
                    let st_tt = 1.0 - gu_t * gu_t / v2;
                    let st_tp = -gu_t * gu_p / v2;
                    let st_pp = 1.0 / (s * s) - gu_p * gu_p / v2;
                    let a_t = v2 * st_tt / d2;
                    let a_p = v2 * st_pp / d2;
                    let a_tp = v2 * st_tp / d2;
                    let b_t = v2 * (st_pp * s * mesh.cos(i)).abs() / d2;
                    let b_p = v2 * (2.0 * st_tp * cot).abs() / d2;
                    4.0 * a_t / (h * h)
                        + 4.0 * a_p / (hp * hp)
                        + 8.0 * a_tp.abs() / (h * hp)
                        + 2.0 * b_t / h
                        + 2.0 * b_p / hp
                }
            };
            rate_max = rate_max.max(rate);
        }
    }
    Ok(RhsEval { dphi, rate_max, denom_min, denom_min_node })
}

/// Take one explicit step of size dt from phi (Neumann already applied).
/// Returns the increment per node.
fn rk_increment(
    mesh: &CapMesh,
    warp: &WarpSpec,
    phi: &ScalarField,
    k1: &RhsEval,
    dt: f64,
    scheme: Scheme,
    cache: &mut DlCache,
) -> Result<Vec<f64>> {
    let stage = |base: &ScalarField, k: &[f64], c: f64| -> ScalarField {
        let mut v: Vec<f64> =
            base.0.iter().zip(k).map(|(&p, &kk)| p + c * dt * kk).collect();
        apply_neumann(mesh, &mut v);
        ScalarField(v)
    };
    match scheme {
        Scheme::Heun => {
            let p2 = stage(phi, &k1.dphi, 1.0);
            let k2 = eval_rhs(mesh, warp, &p2, cache)?;
            Ok(k1
                .dphi
                .iter()
                .zip(&k2.dphi)
                .map(|(&a, &b)| 0.5 * dt * (a + b))
                .collect())
        }
        Scheme::Rk4 => {
            let p2 = stage(phi, &k1.dphi, 0.5);
            let k2 = eval_rhs(mesh, warp, &p2, cache)?;
            let p3 = stage(phi, &k2.dphi, 0.5);
            let k3 = eval_rhs(mesh, warp, &p3, cache)?;
            let p4 = stage(phi, &k3.dphi, 1.0);
            let k4 = eval_rhs(mesh, warp, &p4, cache)?;
            Ok((0..phi.len())
                .map(|k| {
                    dt / 6.0
                        * (k1.dphi[k] + 2.0 * k2.dphi[k] + 2.0 * k3.dphi[k] + k4.dphi[k])
                })
                .collect())
        }
    }
}

fn snapshot(mesh: &Arc<CapMesh>, warp: &Arc<WarpSpec>, phi: &ScalarField, t: f64) -> Result<Snapshot> {
    let state = GraphState::from_phi(mesh.clone(), warp.clone(), phi.clone(), t)?;
    let curvature = state.curvature()?;
    let phidot = (0..phi.len())
        .map(|k| curvature.v[k] / (curvature.lambda[k] * curvature.mean[k]))
        .collect();
    Ok(Snapshot { state, curvature, phidot })
}

/// Run the flow from the given initial graph.
///
/// The initial profile gets a one-shot Neumann fix; the initial mean curvature
/// must be positive everywhere, and non-convexity (kappa_min <= 0) is only
/// warned about since the flow tolerates it.
pub fn evolve(initial: &GraphState, cfg: &FlowConfig) -> Result<Trajectory> {
    if !(cfg.t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be > 0, got {}", cfg.t_end)));
    }
    if !(cfg.snapshot_stride > 0.0) {
        return Err(Error::Config(format!(
            "snapshot_stride must be > 0, got {}",
            cfg.snapshot_stride
        )));
    }
    if !(cfg.cfl_safety > 0.0 && cfg.cfl_safety <= 1.0) {
        return Err(Error::Config(format!(
            "cfl_safety must lie in (0, 1], got {}",
            cfg.cfl_safety
        )));
    }

    let mesh = initial.mesh.clone();
    let warp = initial.warp.clone();
    let mut dl_cache = DlCache::new(mesh.n_nodes());

    let mut phi = initial.phi.clone();
    apply_neumann(&mesh, &mut phi.0);
    {
        let res = mesh
            .boundary_normal_derivative(&phi)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        if res > 1e-8 {
            return Err(Error::Numeric(format!(
                "Neumann residual {res:.3e} after boundary fix; initial data is inconsistent"
            )));
        }
    }

    let first = snapshot(&mesh, &warp, &phi, 0.0)?;
    if let Some(k) = first.curvature.mean.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Numeric(format!(
            "initial mean curvature {} at node {k} is not positive",
            first.curvature.mean[k]
        )));
    }
    if first.curvature.kappa_min <= 0.0 {
        log::warn!(
            "initial surface is not convex (kappa_min = {:.3e}); continuing",
            first.curvature.kappa_min
        );
    }

    let mut snapshots = vec![first];
    let mut t = 0.0f64;
    let mut next_snap = cfg.snapshot_stride.min(cfg.t_end);
    let mut comp = vec![0.0f64; phi.len()];
    let mut steps = 0usize;
    let mut dt_min = f64::INFINITY;
    let mut dt_max = 0.0f64;

    let map_term = |e: Error, t: f64| -> std::result::Result<Termination, Error> {
        match e {
            Error::Domain(d) => Ok(Termination::DomainExit { t, detail: d }),
            other => Err(other),
        }
    };

    let status = 'outer: loop {
        if t >= cfg.t_end - 1e-13 * cfg.t_end.max(1.0) {
            break Termination::Completed;
        }
        if steps >= cfg.max_steps {
            break Termination::StepFailure { t };
        }

        let k1 = match eval_rhs(&mesh, &warp, &phi, &mut dl_cache) {
            Ok(k) => k,
            Err(e) => break map_term(e, t)?,
        };
        if k1.denom_min <= 0.0 {
            break Termination::Singularity { t, node: k1.denom_min_node, denom: k1.denom_min };
        }

        let mut dt = (cfg.cfl_safety * 2.0 / k1.rate_max)
            .min(cfg.dt_cap.unwrap_or(f64::INFINITY))
            .min(next_snap - t)
            .min(cfg.t_end - t);

        let mut accepted = None;
        for _ in 0..=cfg.max_step_halvings {
            match rk_increment(&mesh, &warp, &phi, &k1, dt, cfg.scheme, &mut dl_cache) {
                Ok(inc) if inc.iter().all(|x| x.is_finite()) => {
                    accepted = Some(inc);
                    break;
                }
                Ok(_) => dt *= 0.5,
                Err(Error::Domain(_)) => dt *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let inc = match accepted {
            Some(inc) => inc,
            None => break Termination::StepFailure { t },
        };

        // Compensated accumulation keeps the per-step rounding of phi from
        // drifting over the ~10^6 steps of long runs.
        for k in 0..phi.len() {
            let y = inc[k] - comp[k];
            let sum = phi.0[k] + y;
            comp[k] = (sum - phi.0[k]) - y;
            phi.0[k] = sum;
        }
        apply_neumann(&mesh, &mut phi.0);
        let b = mesh.boundary_row();
        for j in 0..mesh.n_psi {
            comp[mesh.idx(b, j)] = 0.0;
        }

        t += dt;
        steps += 1;
        dt_min = dt_min.min(dt);
        dt_max = dt_max.max(dt);

        if t >= next_snap - 1e-13 * next_snap.max(1.0) {
            match snapshot(&mesh, &warp, &phi, t) {
                Ok(s) => snapshots.push(s),
                Err(e) => break 'outer map_term(e, t)?,
            }
            while next_snap <= t + 1e-13 * next_snap.max(1.0) {
                next_snap += cfg.snapshot_stride;
            }
            next_snap = next_snap.min(cfg.t_end);
        }
    };

    // Record the terminal state if the loop ended between snapshot times.
    if let Some(last) = snapshots.last() {
        if (last.state.t - t).abs() > 1e-12 * t.max(1.0) {
            if let Ok(s) = snapshot(&mesh, &warp, &phi, t) {
                snapshots.push(s);
            }
        }
    }

    Ok(Trajectory {
        snapshots,
        status,
        steps,
        dt_min: if dt_min.is_finite() { dt_min } else { 0.0 },
        dt_max,
    })
}
