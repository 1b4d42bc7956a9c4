//! Geometry of a star-shaped graph over the spherical cap: the hypersurface
//! {(u(x), x)} in the warped product, described either by the radial profile
//! u or by its flow coordinate phi with d(phi)/du = 1/lambda(u).
//!
//! Curvature is assembled in a sigma-orthonormal frame aligned with the
//! gradient structure: with w the frame gradient of phi and v^2 = 1 + |w|^2,
//! the induced metric is lambda^2 (I + w w^T) and the symmetrized shape
//! operator is
//!     S = (lambda'/(lambda v)) I - (1/(lambda v)) P A P,
//! where A is the frame covariant Hessian of phi and
//! P = I - w w^T / (v (v+1)) is the exact square root of I - w w^T / v^2.

use std::sync::Arc;

use crate::error::Result;
use crate::mesh::{CapMesh, Gradient, MeshMode, Parity, ScalarField};
use crate::warp::WarpSpec;

#[derive(Clone, Debug)]
pub struct GraphState {
    pub t: f64,
    pub mesh: Arc<CapMesh>,
    pub warp: Arc<WarpSpec>,
    pub phi: ScalarField,
    pub u: ScalarField,
}

/// Pointwise curvature data in the sigma-orthonormal frame. The frame is
/// two-dimensional: the theta direction and one transverse direction. In
/// axisymmetric mode the transverse eigenvalue carries multiplicity n - 1
/// (all transverse directions are equivalent); in full2d mode the block is
/// the whole tangent space.
#[derive(Clone, Debug)]
pub struct CurvatureFields {
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub dlambda: Vec<f64>,
    /// Mean curvature H = tr S (with transverse multiplicity).
    pub mean: Vec<f64>,
    /// Frame shape operator block per node: [s_tt, s_tq, s_qq].
    pub shape: Vec<[f64; 3]>,
    /// Principal curvature pair per node (block eigenvalues, min first).
    pub kappa: Vec<[f64; 2]>,
    /// Determinant of the induced metric: lambda^{2n} v^2.
    pub g_det: Vec<f64>,
    pub kappa_min: f64,
}

impl GraphState {
    pub fn from_phi(
        mesh: Arc<CapMesh>,
        warp: Arc<WarpSpec>,
        phi: ScalarField,
        t: f64,
    ) -> Result<Self> {
        assert_eq!(phi.len(), mesh.n_nodes());
        let mut u = Vec::with_capacity(phi.len());
        for &p in &phi.0 {
            u.push(warp.u_from_phi(p)?);
        }
        Ok(Self { t, mesh, warp, phi, u: ScalarField(u) })
    }

    pub fn from_u(
        mesh: Arc<CapMesh>,
        warp: Arc<WarpSpec>,
        u: ScalarField,
        t: f64,
    ) -> Result<Self> {
        assert_eq!(u.len(), mesh.n_nodes());
        let mut phi = Vec::with_capacity(u.len());
        for &r in &u.0 {
            phi.push(warp.phi_from_u(r)?);
        }
        Ok(Self { t, mesh, warp, phi: ScalarField(phi), u })
    }

    /// Gradient of phi and the tilt factor v = sqrt(1 + |grad phi|^2).
    pub fn tilt(&self) -> (Gradient, Vec<f64>) {
        let g = self.mesh.grad(&self.phi);
        let v = g.norm_sq.iter().map(|&s| (1.0 + s).sqrt()).collect();
        (g, v)
    }

    /// H = (n lambda' - sigma~^{ij} phi_{i,j}) / (lambda v), the scalar form
    /// used by the evolution equation.
    pub fn mean_curvature(&self) -> Result<Vec<f64>> {
        let (g, v) = self.tilt();
        let contr = self.mesh.sigma_tilde_contraction_with(&self.phi, &g);
        let n = self.mesh.dim_n as f64;
        let mut out = Vec::with_capacity(v.len());
        for k in 0..v.len() {
            let (l, dl, _) = self.warp.eval(self.u.0[k])?;
            out.push((n * dl - contr.0[k]) / (l * v[k]));
        }
        Ok(out)
    }

    /// Full frame curvature assembly.
    pub fn curvature(&self) -> Result<CurvatureFields> {
        let mesh = &self.mesh;
        let n = mesh.dim_n as f64;
        let nn = mesh.n_nodes();
        let (g, v) = self.tilt();
        let d2t = mesh.d2_theta(&self.phi.0, Parity::Even);

        let mut lambda = Vec::with_capacity(nn);
        let mut dlambda = Vec::with_capacity(nn);
        for &r in &self.u.0 {
            let (l, dl, _) = self.warp.eval(r)?;
            lambda.push(l);
            dlambda.push(dl);
        }

        let mut mean = vec![0.0; nn];
        let mut shape = vec![[0.0; 3]; nn];
        let mut kappa = vec![[0.0; 2]; nn];
        let mut g_det = vec![0.0; nn];
        let mut kappa_min = f64::INFINITY;

        // Frame Hessian of phi: in full2d the cross and transverse entries
        // include the Christoffel corrections of the round metric; in axisym
        // the transverse diagonal entry is cot(theta) phi_theta.
        let (dtp, d2p) = match mesh.mode {
            MeshMode::Full2d => {
                (mesh.d_theta(&g.d_psi, Parity::Even), mesh.d2_psi(&self.phi.0))
            }
            MeshMode::Axisym => (vec![], vec![]),
        };

        for i in 0..mesh.n_theta {
            let s = mesh.sin(i);
            let co = mesh.cos(i);
            for j in 0..mesh.n_psi {
                let k = mesh.idx(i, j);
                let (l, dl) = (lambda[k], dlambda[k]);
                let vk = v[k];

                let (w1, w2, a11, a12, a22) = match mesh.mode {
                    MeshMode::Axisym => {
                        (g.d_theta[k], 0.0, d2t[k], 0.0, (co / s) * g.d_theta[k])
                    }
                    MeshMode::Full2d => {
                        let w2 = g.d_psi[k] / s;
                        let a12 = (dtp[k] - (co / s) * g.d_psi[k]) / s;
                        let a22 = (d2p[k] + s * co * g.d_theta[k]) / (s * s);
                        (g.d_theta[k], w2, d2t[k], a12, a22)
                    }
                };

                // P = I - w w^T / (v (v+1)), then B = P A P.
                let q = 1.0 / (vk * (vk + 1.0));
                let p11 = 1.0 - q * w1 * w1;
                let p12 = -q * w1 * w2;
                let p22 = 1.0 - q * w2 * w2;
                let c11 = p11 * a11 + p12 * a12;
                let c12 = p11 * a12 + p12 * a22;
                let c21 = p12 * a11 + p22 * a12;
                let c22 = p12 * a12 + p22 * a22;
                let b11 = c11 * p11 + c12 * p12;
                let b12 = c11 * p12 + c12 * p22;
                let b22 = c21 * p12 + c22 * p22;

                let scale = 1.0 / (l * vk);
                let s11 = scale * (dl - b11);
                let s12 = scale * (-b12);
                let s22 = scale * (dl - b22);
                shape[k] = [s11, s12, s22];

                // 2x2 symmetric eigenvalues, written to avoid cancellation.
                let half_tr = 0.5 * (s11 + s22);
                let disc = (0.5 * (s11 - s22)).hypot(s12);
                kappa[k] = [half_tr - disc, half_tr + disc];

                mean[k] = match mesh.mode {
                    MeshMode::Axisym => s11 + (n - 1.0) * s22,
                    MeshMode::Full2d => s11 + s22,
                };
                g_det[k] = l.powi(2 * mesh.dim_n as i32) * vk * vk;
                kappa_min = kappa_min.min(kappa[k][0]);
            }
        }

        Ok(CurvatureFields { v, lambda, dlambda, mean, shape, kappa, g_det, kappa_min })
    }

    /// Hypersurface area |M| = int lambda(u)^n v d(sigma).
    pub fn area(&self) -> f64 {
        let (_, v) = self.tilt();
        let n = self.mesh.dim_n as i32;
        let f = ScalarField(
            self.u
                .0
                .iter()
                .zip(&v)
                .map(|(&r, &vk)| self.warp.lambda(r).powi(n) * vk)
                .collect(),
        );
        self.mesh.integrate(&f)
    }
}
