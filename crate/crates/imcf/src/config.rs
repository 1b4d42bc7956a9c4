//! Experiment configuration: a single flat JSON object with strict schema,
//! defaults filled in, and range validation with key-path error messages.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Scheme};
use crate::mesh::{CapMesh, MeshMode, ScalarField};
use crate::surface::GraphState;
use crate::warp::WarpSpec;

fn d_one() -> f64 {
    1.0
}
fn d_mode() -> String {
    "axisym".into()
}
fn d_ntheta() -> usize {
    256
}
fn d_shape() -> String {
    "cosine-even".into()
}
fn d_cfl() -> f64 {
    0.8
}
fn d_stride() -> f64 {
    0.1
}
fn d_scheme() -> String {
    "rk4".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// "euclidean" | "hyperboloidal" | "tabulated".
    pub warp: String,
    /// Hyperboloidal parameter in lambda = sqrt(r^2 + a^2).
    #[serde(default = "d_one")]
    pub a: f64,
    #[serde(default = "d_one")]
    pub alpha: f64,
    #[serde(default = "d_one")]
    pub c_bound: f64,
    /// Lower limit of the phi-integral; defaults to 1.
    #[serde(default = "d_one")]
    pub base_point: f64,
    /// Sample grid for the tabulated warp.
    #[serde(default)]
    pub r_samples: Vec<f64>,
    #[serde(default)]
    pub lambda_samples: Vec<f64>,

    pub n: usize,
    pub theta0: f64,
    /// "axisym" | "full2d".
    #[serde(default = "d_mode")]
    pub mode: String,
    #[serde(default = "d_ntheta")]
    pub n_theta: usize,
    /// Defaults to 1 in axisym mode, 64 in full2d mode.
    #[serde(default)]
    pub n_psi: Option<usize>,

    pub r0: f64,
    /// "cosine-even" | "bump" | "azimuthal-lobe" (full2d only).
    #[serde(default = "d_shape")]
    pub shape: String,
    #[serde(default)]
    pub amplitude: f64,

    pub t_end: f64,
    #[serde(default)]
    pub dt_initial: Option<f64>,
    #[serde(default = "d_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "d_stride")]
    pub snapshot_stride: f64,
    #[serde(default = "d_scheme")]
    pub scheme: String,

    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub emit_fields: bool,
    #[serde(default)]
    pub emit_plots: bool,
}

/// Everything needed to run one experiment.
pub struct RunSetup {
    pub mesh: Arc<CapMesh>,
    pub warp: Arc<WarpSpec>,
    pub initial: GraphState,
    pub flow: FlowConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<Self> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        match self.warp.as_str() {
            "euclidean" | "hyperboloidal" | "tabulated" => {}
            other => {
                return bad(
                    "warp",
                    format!("unknown warp '{other}' (expected euclidean, hyperboloidal or tabulated)"),
                )
            }
        }
        match self.mode.as_str() {
            "axisym" | "full2d" => {}
            other => return bad("mode", format!("unknown mode '{other}' (expected axisym or full2d)")),
        }
        match self.scheme.as_str() {
            "rk4" | "heun" => {}
            other => return bad("scheme", format!("unknown scheme '{other}' (expected rk4 or heun)")),
        }
        match self.shape.as_str() {
            "cosine-even" | "bump" => {}
            "azimuthal-lobe" => {
                if self.mode != "full2d" {
                    return bad("initial.shape", "azimuthal-lobe requires full2d mode".into());
                }
            }
            other => {
                return bad(
                    "initial.shape",
                    format!("unknown shape '{other}' (expected cosine-even, bump or azimuthal-lobe)"),
                )
            }
        }
        if !(self.r0 > 0.0) {
            return bad("initial.r0", format!("must be > 0, got {}", self.r0));
        }
        if !(self.amplitude.abs() < 0.5 * self.r0) {
            return bad(
                "initial.amplitude",
                format!("must satisfy |amplitude| < 0.5 * r0 = {}, got {}", 0.5 * self.r0, self.amplitude),
            );
        }
        if !(self.t_end > 0.0) {
            return bad("flow.t_end", format!("must be > 0, got {}", self.t_end));
        }
        if let Some(dt) = self.dt_initial {
            if !(dt > 0.0) {
                return bad("flow.dt_initial", format!("must be > 0, got {dt}"));
            }
        }
        if self.warp == "tabulated" && self.r_samples.len() != self.lambda_samples.len() {
            return bad(
                "warp",
                format!(
                    "r_samples ({}) and lambda_samples ({}) must have equal length",
                    self.r_samples.len(),
                    self.lambda_samples.len()
                ),
            );
        }
        Ok(self.clone())
    }

    pub fn warp_spec(&self) -> Result<WarpSpec> {
        match self.warp.as_str() {
            "euclidean" => WarpSpec::euclidean(self.alpha, self.c_bound, self.base_point),
            "hyperboloidal" => {
                WarpSpec::hyperboloidal(self.a, self.alpha, self.c_bound, self.base_point)
            }
            "tabulated" => WarpSpec::tabulated(
                "tabulated".into(),
                self.r_samples.clone(),
                self.lambda_samples.clone(),
                self.alpha,
                self.c_bound,
                self.base_point,
            ),
            other => Err(Error::Config(format!("unknown warp '{other}'"))),
        }
    }

    pub fn mesh_mode(&self) -> MeshMode {
        if self.mode == "full2d" {
            MeshMode::Full2d
        } else {
            MeshMode::Axisym
        }
    }

    /// Initial radial profile r0 + amplitude * shape(theta, psi). All shapes
    /// have zero normal derivative at theta0 by construction.
    pub fn initial_profile(&self, theta: f64, psi: f64) -> f64 {
        use std::f64::consts::PI;
        let t0 = self.theta0;
        let s = match self.shape.as_str() {
            "bump" => {
                let x = theta / t0;
                (1.0 - x * x) * (1.0 - x * x)
            }
            "azimuthal-lobe" => {
                let cut = (PI * theta / (2.0 * t0)).cos();
                theta.sin().powi(2) * psi.cos() * cut * cut
            }
            _ => (PI * theta / t0).cos(),
        };
        self.r0 + self.amplitude * s
    }

    pub fn build(&self) -> Result<RunSetup> {
        let mode = self.mesh_mode();
        let n_psi = self.n_psi.unwrap_or(if mode == MeshMode::Full2d { 64 } else { 1 });
        let mesh = Arc::new(CapMesh::build(self.n, self.theta0, mode, self.n_theta, n_psi)?);
        let warp = Arc::new(self.warp_spec()?);
        let u = ScalarField::from_fn(&mesh, |t, p| self.initial_profile(t, p));
        let initial = GraphState::from_u(mesh.clone(), warp.clone(), u, 0.0)?;
        let flow = FlowConfig {
            scheme: if self.scheme == "heun" { Scheme::Heun } else { Scheme::Rk4 },
            cfl_safety: self.cfl_safety,
            t_end: self.t_end,
            snapshot_stride: self.snapshot_stride,
            dt_cap: self.dt_initial,
            ..FlowConfig::default()
        };
        Ok(RunSetup { mesh, warp, initial, flow })
    }
}
