//! Discretization of the cone cross-section: a geodesic cap {theta <= theta0}
//! in the round sphere S^n, with finite-difference covariant calculus.
//!
//! The theta grid is staggered off the pole: nodes sit at (i + 1/2) h for
//! h = theta0 / (n_theta - 1/2), so the first node is at h/2 and the last node
//! lands exactly on the boundary theta0. No node touches the coordinate
//! singularity at theta = 0; stencils reaching past the pole use the value at
//! the antipodal azimuth (same column in axisymmetric mode).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::util::{interp_cubic, unit_sphere_area};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshMode {
    /// Fields depend on theta only; valid for any fiber dimension n >= 2.
    Axisym,
    /// Full (theta, psi) grid on S^2; requires n = 2.
    Full2d,
}

/// Reflection behavior across the pole for theta stencils: scalar fields are
/// `Even` (the value continues across the pole), theta-components of vectors
/// flip sign and are `Odd`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Debug)]
pub struct CapMesh {
    pub dim_n: usize,
    pub theta0: f64,
    pub mode: MeshMode,
    pub n_theta: usize,
    pub n_psi: usize,
    pub h_theta: f64,
    pub h_psi: f64,
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    sin_t: Vec<f64>,
    cos_t: Vec<f64>,
    cot_t: Vec<f64>,
    /// Quadrature weights per node for integration against the round measure.
    pub weights: Vec<f64>,
}

/// One real value per mesh node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn constant(mesh: &CapMesh, c: f64) -> Self {
        ScalarField(vec![c; mesh.n_nodes()])
    }

    /// Build from a function of (theta, psi).
    pub fn from_fn<F: Fn(f64, f64) -> f64>(mesh: &CapMesh, f: F) -> Self {
        let mut v = Vec::with_capacity(mesh.n_nodes());
        for i in 0..mesh.n_theta {
            for j in 0..mesh.n_psi {
                v.push(f(mesh.theta[i], mesh.psi[j]));
            }
        }
        ScalarField(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Covariant gradient components and the sigma-norm squared |grad f|^2.
#[derive(Clone, Debug)]
pub struct Gradient {
    pub d_theta: Vec<f64>,
    /// Coordinate partial with respect to psi (all zero in axisymmetric mode).
    pub d_psi: Vec<f64>,
    pub norm_sq: Vec<f64>,
}

impl CapMesh {
    pub fn build(
        dim_n: usize,
        theta0: f64,
        mode: MeshMode,
        n_theta: usize,
        n_psi: usize,
    ) -> Result<Self> {
        if dim_n < 2 {
            return Err(Error::Config(format!("fiber dimension n must be >= 2, got {dim_n}")));
        }
        if !(theta0 > 0.0 && theta0 <= PI / 2.0 + 1e-14) {
            return Err(Error::Config(format!(
                "cap aperture theta0 must lie in (0, pi/2], got {theta0}"
            )));
        }
        if n_theta < 8 {
            return Err(Error::Config(format!("n_theta must be >= 8, got {n_theta}")));
        }
        match mode {
            MeshMode::Axisym => {
                if n_psi != 1 {
                    return Err(Error::Config(format!("axisym mode requires n_psi = 1, got {n_psi}")));
                }
            }
            MeshMode::Full2d => {
                if dim_n != 2 {
                    return Err(Error::Config(format!("full2d mode requires n = 2, got {dim_n}")));
                }
                if n_psi < 8 || n_psi % 2 != 0 {
                    return Err(Error::Config(format!(
                        "full2d mode requires even n_psi >= 8, got {n_psi}"
                    )));
                }
            }
        }

        let h_theta = theta0 / (n_theta as f64 - 0.5);
        let theta: Vec<f64> = (0..n_theta).map(|i| (i as f64 + 0.5) * h_theta).collect();
        let h_psi = 2.0 * PI / n_psi as f64;
        let psi: Vec<f64> = (0..n_psi).map(|j| j as f64 * h_psi).collect();
        let sin_t: Vec<f64> = theta.iter().map(|t| t.sin()).collect();
        let cos_t: Vec<f64> = theta.iter().map(|t| t.cos()).collect();
        let cot_t: Vec<f64> = theta.iter().map(|t| t.cos() / t.sin()).collect();

        // Node i owns the theta-cell [i h, (i+1) h]; the boundary node owns the
        // half cell ending at theta0. Cell integrals of sin^{n-1} are done with
        // 5-point Gauss-Legendre, so integrating a constant reproduces the cap
        // area to quadrature precision.
        let slice_area = if mode == MeshMode::Full2d { h_psi } else { unit_sphere_area(dim_n - 1) };
        let mut weights = Vec::with_capacity(n_theta * n_psi);
        for i in 0..n_theta {
            let a = i as f64 * h_theta;
            let b = ((i + 1) as f64 * h_theta).min(theta0);
            let cell = gauss5(a, b, |t| t.sin().powi(dim_n as i32 - 1));
            for _ in 0..n_psi {
                weights.push(cell * slice_area);
            }
        }

        Ok(Self {
            dim_n,
            theta0,
            mode,
            n_theta,
            n_psi,
            h_theta,
            h_psi,
            theta,
            psi,
            sin_t,
            cos_t,
            cot_t,
            weights,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_theta * self.n_psi
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_psi + j
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        node / self.n_psi == self.n_theta - 1
    }

    pub fn boundary_row(&self) -> usize {
        self.n_theta - 1
    }

    fn check_len(&self, f: &[f64]) {
        assert_eq!(f.len(), self.n_nodes(), "field length must equal node count");
    }

    /// Value at (i-1, j) where i = 0: across the pole to the antipodal azimuth.
    #[inline]
    fn pole_ghost(&self, f: &[f64], j: usize, parity: Parity) -> f64 {
        let jj = if self.n_psi > 1 { (j + self.n_psi / 2) % self.n_psi } else { j };
        let v = f[jj]; // row 0
        match parity {
            Parity::Even => v,
            Parity::Odd => -v,
        }
    }

    /// First theta-derivative: centered in the interior, one-sided second order
    /// at the boundary row.
    pub fn d_theta(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        self.check_len(f);
        let (nt, np, h) = (self.n_theta, self.n_psi, self.h_theta);
        let mut out = vec![0.0; f.len()];
        for j in 0..np {
            out[self.idx(0, j)] = (f[self.idx(1, j)] - self.pole_ghost(f, j, parity)) / (2.0 * h);
            for i in 1..nt - 1 {
                out[self.idx(i, j)] = (f[self.idx(i + 1, j)] - f[self.idx(i - 1, j)]) / (2.0 * h);
            }
            let b = nt - 1;
            // Difference form of (3 f_B - 4 f_{B-1} + f_{B-2}) / (2h): exact
            // zero on constant fields.
            out[self.idx(b, j)] = (3.0 * (f[self.idx(b, j)] - f[self.idx(b - 1, j)])
                - (f[self.idx(b - 1, j)] - f[self.idx(b - 2, j)]))
                / (2.0 * h);
        }
        out
    }

    /// Second theta-derivative with the same boundary/pole treatment.
    pub fn d2_theta(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        self.check_len(f);
        let (nt, np, h) = (self.n_theta, self.n_psi, self.h_theta);
        let h2 = h * h;
        let mut out = vec![0.0; f.len()];
        for j in 0..np {
            out[self.idx(0, j)] = ((f[self.idx(1, j)] - f[self.idx(0, j)])
                - (f[self.idx(0, j)] - self.pole_ghost(f, j, parity)))
                / h2;
            for i in 1..nt - 1 {
                out[self.idx(i, j)] = ((f[self.idx(i + 1, j)] - f[self.idx(i, j)])
                    - (f[self.idx(i, j)] - f[self.idx(i - 1, j)]))
                    / h2;
            }
            let b = nt - 1;
            // Difference form of (2 f_B - 5 f_{B-1} + 4 f_{B-2} - f_{B-3}) / h^2.
            out[self.idx(b, j)] = (2.0 * (f[self.idx(b, j)] - f[self.idx(b - 1, j)])
                - 3.0 * (f[self.idx(b - 1, j)] - f[self.idx(b - 2, j)])
                + (f[self.idx(b - 2, j)] - f[self.idx(b - 3, j)]))
                / h2;
        }
        out
    }

    /// Periodic centered psi-derivative (zero in axisymmetric mode).
    pub fn d_psi(&self, f: &[f64]) -> Vec<f64> {
        self.check_len(f);
        let mut out = vec![0.0; f.len()];
        if self.mode == MeshMode::Axisym {
            return out;
        }
        let np = self.n_psi;
        for i in 0..self.n_theta {
            for j in 0..np {
                let jp = (j + 1) % np;
                let jm = (j + np - 1) % np;
                out[self.idx(i, j)] =
                    (f[self.idx(i, jp)] - f[self.idx(i, jm)]) / (2.0 * self.h_psi);
            }
        }
        out
    }

    pub fn d2_psi(&self, f: &[f64]) -> Vec<f64> {
        self.check_len(f);
        let mut out = vec![0.0; f.len()];
        if self.mode == MeshMode::Axisym {
            return out;
        }
        let np = self.n_psi;
        let h2 = self.h_psi * self.h_psi;
        for i in 0..self.n_theta {
            for j in 0..np {
                let jp = (j + 1) % np;
                let jm = (j + np - 1) % np;
                out[self.idx(i, j)] =
                    (f[self.idx(i, jp)] - 2.0 * f[self.idx(i, j)] + f[self.idx(i, jm)]) / h2;
            }
        }
        out
    }

    /// Covariant gradient and its sigma-norm squared.
    pub fn grad(&self, f: &ScalarField) -> Gradient {
        let dt = self.d_theta(&f.0, Parity::Even);
        let dp = self.d_psi(&f.0);
        let mut norm_sq = vec![0.0; f.len()];
        for i in 0..self.n_theta {
            let s2 = self.sin_t[i] * self.sin_t[i];
            for j in 0..self.n_psi {
                let k = self.idx(i, j);
                norm_sq[k] = dt[k] * dt[k]
                    + if self.mode == MeshMode::Full2d { dp[k] * dp[k] / s2 } else { 0.0 };
            }
        }
        Gradient { d_theta: dt, d_psi: dp, norm_sq }
    }

    /// sigma~^{ij} f_{i,j} with sigma~^{ij} = sigma^{ij} - f^i f^j / v^2 and
    /// v^2 = 1 + |grad f|^2.
    pub fn sigma_tilde_contraction(&self, f: &ScalarField) -> ScalarField {
        let g = self.grad(f);
        self.sigma_tilde_contraction_with(f, &g)
    }

    /// Same as `sigma_tilde_contraction` with a precomputed gradient.
    pub fn sigma_tilde_contraction_with(&self, f: &ScalarField, g: &Gradient) -> ScalarField {
        let d2t = self.d2_theta(&f.0, Parity::Even);
        let mut out = vec![0.0; f.len()];
        match self.mode {
            MeshMode::Axisym => {
                // Reduced closed form on S^n: f_tt / v^2 + (n-1) cot(theta) f_t.
                let m = (self.dim_n - 1) as f64;
                for i in 0..self.n_theta {
                    let k = self.idx(i, 0);
                    let v2 = 1.0 + g.norm_sq[k];
                    out[k] = d2t[k] / v2 + m * self.cot_t[i] * g.d_theta[k];
                }
            }
            MeshMode::Full2d => {
                // Covariant Hessian in (theta, psi) coordinates contracted with
                // the tabulated Christoffel symbols of the round metric.
                let d2p = self.d2_psi(&f.0);
                let dtp = self.d_theta(&g.d_psi, Parity::Even);
                for i in 0..self.n_theta {
                    let (s, c) = (self.sin_t[i], self.cos_t[i]);
                    let s2 = s * s;
                    for j in 0..self.n_psi {
                        let k = self.idx(i, j);
                        let v2 = 1.0 + g.norm_sq[k];
                        let h_tt = d2t[k];
                        let h_tp = dtp[k] - (c / s) * g.d_psi[k];
                        let h_pp = d2p[k] + s * c * g.d_theta[k];
                        let gu_t = g.d_theta[k];
                        let gu_p = g.d_psi[k] / s2;
                        let st_tt = 1.0 - gu_t * gu_t / v2;
                        let st_tp = -gu_t * gu_p / v2;
                        let st_pp = 1.0 / s2 - gu_p * gu_p / v2;
                        out[k] = st_tt * h_tt + 2.0 * st_tp * h_tp + st_pp * h_pp;
                    }
                }
            }
        }
        ScalarField(out)
    }

    /// One-sided second-order normal derivative df/dtheta at the boundary
    /// theta = theta0, one value per boundary node.
    pub fn boundary_normal_derivative(&self, f: &ScalarField) -> Vec<f64> {
        self.check_len(&f.0);
        let b = self.boundary_row();
        let h = self.h_theta;
        (0..self.n_psi)
            .map(|j| {
                (3.0 * (f.0[self.idx(b, j)] - f.0[self.idx(b - 1, j)])
                    - (f.0[self.idx(b - 1, j)] - f.0[self.idx(b - 2, j)]))
                    / (2.0 * h)
            })
            .collect()
    }

    /// Quadrature against the round measure of the cap.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.check_len(&f.0);
        f.0.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn cot(&self, i: usize) -> f64 {
        self.cot_t[i]
    }

    pub fn sin(&self, i: usize) -> f64 {
        self.sin_t[i]
    }

    pub fn cos(&self, i: usize) -> f64 {
        self.cos_t[i]
    }

    /// Cubic interpolation of an axisymmetric field at arbitrary theta.
    pub fn interp_theta(&self, f: &ScalarField, theta: f64) -> f64 {
        assert_eq!(self.mode, MeshMode::Axisym);
        interp_cubic(&self.theta, &f.0, theta)
    }

    /// Azimuthal average of a full2d field onto the theta rows.
    pub fn psi_average(&self, f: &ScalarField) -> Vec<f64> {
        (0..self.n_theta)
            .map(|i| {
                (0..self.n_psi).map(|j| f.0[self.idx(i, j)]).sum::<f64>() / self.n_psi as f64
            })
            .collect()
    }
}

fn gauss5<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    const X: [f64; 5] = [
        -0.906179845938664,
        -0.538469310105683,
        0.0,
        0.538469310105683,
        0.906179845938664,
    ];
    const W: [f64; 5] = [
        0.236926885056189,
        0.478628670499366,
        0.568888888888889,
        0.478628670499366,
        0.236926885056189,
    ];
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    hw * X.iter().zip(&W).map(|(&x, &w)| w * f(c + hw * x)).sum::<f64>()
}
