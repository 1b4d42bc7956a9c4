//! Independent reference solutions for radial initial data.
//!
//! A radial graph u(t, x) = u(t) stays radial, and the PDE collapses to the
//! scalar ODE du/dt = lambda(u) / (n lambda'(u)). The catalog warps admit
//! closed forms; everything else goes through an adaptive embedded
//! Runge-Kutta integrator. None of the spatial discretization is reused here,
//! so agreement with the flow is a genuine cross-check.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::warp::{WarpKind, WarpSpec};

pub const ODE_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct RadialSolution {
    warp: Arc<WarpSpec>,
    dim_n: usize,
    r0: f64,
}

#[derive(Clone, Debug)]
pub struct RadialComparison {
    /// (t, max relative error of u over the mesh) per snapshot.
    pub per_snapshot: Vec<(f64, f64)>,
    pub max_rel_error: f64,
}

impl RadialSolution {
    pub fn new(warp: Arc<WarpSpec>, dim_n: usize, r0: f64) -> Result<Self> {
        if dim_n < 2 {
            return Err(Error::Config(format!("fiber dimension n must be >= 2, got {dim_n}")));
        }
        if !warp.in_interval(r0) {
            return Err(Error::Domain(format!("r0 = {r0} outside warp interval")));
        }
        if !(warp.dlambda(r0) > 0.0) {
            return Err(Error::Domain(format!("lambda'({r0}) must be positive")));
        }
        Ok(Self { warp, dim_n, r0 })
    }

    /// Exact (or tightly integrated) radius at flow time t >= 0.
    pub fn u_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("oracle time t = {t} must be >= 0")));
        }
        let n = self.dim_n as f64;
        match &self.warp.kind {
            WarpKind::Euclidean => Ok(self.r0 * (t / n).exp()),
            WarpKind::Hyperboloidal { a } => {
                let s = (self.r0 * self.r0 + a * a) * (2.0 * t / n).exp() - a * a;
                Ok(s.sqrt())
            }
            WarpKind::Tabulated(_) => self.integrate_to(t),
        }
    }

    /// Flow speed d(phi)/dt = 1 / (n lambda'(u)) at time t.
    pub fn phidot_at(&self, t: f64) -> Result<f64> {
        let u = self.u_at(t)?;
        Ok(1.0 / (self.dim_n as f64 * self.warp.dlambda(u)))
    }

    /// Dormand-Prince 5(4) with PI-free step control, relative tolerance
    /// ODE_REL_TOL, stepping exactly onto t.
    fn integrate_to(&self, t_target: f64) -> Result<f64> {
        let n = self.dim_n as f64;
        let f = |u: f64| -> Result<f64> {
            let (l, dl, _) = self.warp.eval(u)?;
            if !(dl > 0.0) {
                return Err(Error::Numeric(format!("lambda'({u}) = {dl} not positive")));
            }
            Ok(l / (n * dl))
        };

        // Dormand-Prince coefficients.
        const A: [[f64; 6]; 6] = [
            [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const B5: [f64; 7] =
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];

        let mut t = 0.0f64;
        let mut u = self.r0;
        let mut dt = (t_target / 16.0).max(1e-6).min(t_target.max(1e-12));
        let mut guard = 0usize;
        while t < t_target {
            guard += 1;
            if guard > 10_000_000 {
                return Err(Error::Numeric("oracle integration did not converge".into()));
            }
            dt = dt.min(t_target - t);
            let mut k = [0.0f64; 7];
            k[0] = f(u)?;
            let mut failed = false;
            for s in 0..6 {
                let mut us = u;
                for (q, &kq) in k.iter().enumerate().take(s + 1) {
                    us += dt * A[s][q] * kq;
                }
                match f(us) {
                    Ok(v) => k[s + 1] = v,
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed {
                dt *= 0.5;
                continue;
            }
            let u5 = u + dt * B5.iter().zip(&k).map(|(b, kk)| b * kk).sum::<f64>();
            let u4 = u + dt * B4.iter().zip(&k).map(|(b, kk)| b * kk).sum::<f64>();
            let err = (u5 - u4).abs() / (u.abs().max(u5.abs()) * ODE_REL_TOL + 1e-300);
            if err <= 1.0 {
                t += dt;
                u = u5;
                dt *= (0.9 * err.powf(-0.2)).min(5.0);
            } else {
                dt *= (0.9 * err.powf(-0.2)).max(0.1);
            }
        }
        Ok(u)
    }
}

/// Compare a flow trajectory from radial initial data against the oracle.
/// Errors if the trajectory's initial profile is not radial.
pub fn compare(traj: &Trajectory, sol: &RadialSolution) -> Result<RadialComparison> {
    let first = traj
        .snapshots
        .first()
        .ok_or_else(|| Error::InsufficientData("trajectory has no snapshots".into()))?;
    if first.state.mesh.dim_n != sol.dim_n {
        return Err(Error::Config(format!(
            "oracle dimension n = {} does not match trajectory dimension n = {}",
            sol.dim_n, first.state.mesh.dim_n
        )));
    }
    if first.state.warp.name != sol.warp.name {
        return Err(Error::Config(format!(
            "oracle warp '{}' does not match trajectory warp '{}'",
            sol.warp.name, first.state.warp.name
        )));
    }
    let (u_min, u_max) = (first.state.u.min(), first.state.u.max());
    if (u_max - u_min).abs() > 1e-10 * u_max.abs().max(1.0) {
        return Err(Error::Config(format!(
            "initial profile is not radial (spread {:.3e}); the radial oracle does not apply",
            u_max - u_min
        )));
    }
    if (u_min - sol.r0).abs() > 1e-12 * sol.r0.abs().max(1.0) {
        return Err(Error::Config(format!(
            "oracle r0 = {} does not match the trajectory's initial radius {}",
            sol.r0, u_min
        )));
    }

    let mut per_snapshot = Vec::with_capacity(traj.snapshots.len());
    let mut max_rel = 0.0f64;
    for s in &traj.snapshots {
        let exact = sol.u_at(s.state.t)?;
        let worst = s
            .state
            .u
            .0
            .iter()
            .map(|&u| (u - exact).abs() / exact.abs())
            .fold(0.0f64, f64::max);
        max_rel = max_rel.max(worst);
        per_snapshot.push((s.state.t, worst));
    }
    Ok(RadialComparison { per_snapshot, max_rel_error: max_rel })
}
