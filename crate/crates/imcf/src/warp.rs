//! Warping functions lambda(r) on I = [r_min, inf) and the radial substitution
//! phi(u) = int_c^u ds / lambda(s).
//!
//! The catalog covers the euclidean warp lambda = r (the flat cone case) and the
//! hyperboloidal family lambda = sqrt(r^2 + a^2); arbitrary warps enter as
//! tabulated samples with cubic-spline interpolation and must pass `validate`
//! before being used by the flow.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::util::{adaptive_simpson, bisect_increasing, CubicSpline};

pub const QUADRATURE_TOL: f64 = 1e-12;
pub const DEFAULT_HORIZON: f64 = 1e4;
pub const DEFAULT_SAMPLES: usize = 4096;

#[derive(Clone, Debug)]
pub enum WarpKind {
    /// lambda(r) = r.
    Euclidean,
    /// lambda(r) = sqrt(r^2 + a^2).
    Hyperboloidal { a: f64 },
    /// User-supplied samples, spline interpolated on a bounded range.
    Tabulated(CubicSpline),
}

/// A warping function together with the hypothesis constants of the admissibility
/// conditions 0 < lambda' <= C and 0 <= lambda^{1+alpha} lambda'' <= C.
#[derive(Clone, Debug)]
pub struct WarpSpec {
    pub name: String,
    pub kind: WarpKind,
    /// Lower end of I; the interval is [r_min, inf) (or [r_min, r_max] when tabulated).
    pub r_min: f64,
    pub r_max: Option<f64>,
    pub alpha: f64,
    pub c_bound: f64,
    /// Lower limit c of the phi-integral; lambda(c) must be positive.
    pub base_point: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionCheck {
    pub name: String,
    pub pass: bool,
    pub worst_r: f64,
    pub worst_value: f64,
    pub bound: f64,
}

/// Outcome of sampling the admissibility hypotheses over a finite horizon.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub warp: String,
    pub horizon: f64,
    pub sample_count: usize,
    pub checks: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl WarpSpec {
    pub fn euclidean(alpha: f64, c_bound: f64, base_point: f64) -> Result<Self> {
        Self::build("euclidean".into(), WarpKind::Euclidean, 0.0, None, alpha, c_bound, base_point)
    }

    pub fn hyperboloidal(a: f64, alpha: f64, c_bound: f64, base_point: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::Config(format!("hyperboloidal parameter a must be > 0, got {a}")));
        }
        Self::build(
            format!("hyperboloidal(a={a})"),
            WarpKind::Hyperboloidal { a },
            0.0,
            None,
            alpha,
            c_bound,
            base_point,
        )
    }

    /// Tabulated warp on [rs[0], rs[last]] with natural cubic-spline interpolation.
    pub fn tabulated(
        name: String,
        rs: Vec<f64>,
        lambdas: Vec<f64>,
        alpha: f64,
        c_bound: f64,
        base_point: f64,
    ) -> Result<Self> {
        let r_min = *rs.first().ok_or_else(|| Error::Config("empty warp table".into()))?;
        let r_max = *rs.last().unwrap();
        let spline = CubicSpline::new(rs, lambdas)?;
        Self::build(name, WarpKind::Tabulated(spline), r_min, Some(r_max), alpha, c_bound, base_point)
    }

    fn build(
        name: String,
        kind: WarpKind,
        r_min: f64,
        r_max: Option<f64>,
        alpha: f64,
        c_bound: f64,
        base_point: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {alpha}")));
        }
        if !(c_bound > 0.0) {
            return Err(Error::Config(format!("c_bound must be > 0, got {c_bound}")));
        }
        let spec = Self { name, kind, r_min, r_max, alpha, c_bound, base_point };
        if !spec.in_interval(base_point) {
            return Err(Error::Config(format!(
                "base point c = {base_point} lies outside the warp interval"
            )));
        }
        let (l, _, _) = spec.eval_unchecked(base_point);
        if !(l > 0.0) {
            return Err(Error::Config(format!(
                "lambda(c) = {l} at the base point; the phi-integral requires lambda(c) > 0"
            )));
        }
        Ok(spec)
    }

    pub fn in_interval(&self, r: f64) -> bool {
        r.is_finite() && r >= self.r_min && self.r_max.map_or(true, |m| r <= m)
    }

    fn eval_unchecked(&self, r: f64) -> (f64, f64, f64) {
        match &self.kind {
            WarpKind::Euclidean => (r, 1.0, 0.0),
            WarpKind::Hyperboloidal { a } => {
                let l = (r * r + a * a).sqrt();
                (l, r / l, a * a / (l * l * l))
            }
            WarpKind::Tabulated(sp) => sp.eval3(r),
        }
    }

    /// lambda, lambda', lambda'' at r.
    pub fn eval(&self, r: f64) -> Result<(f64, f64, f64)> {
        if !self.in_interval(r) {
            return Err(Error::Domain(format!("r = {r} outside warp interval of {}", self.name)));
        }
        Ok(self.eval_unchecked(r))
    }

    pub fn lambda(&self, r: f64) -> f64 {
        self.eval_unchecked(r).0
    }

    pub fn dlambda(&self, r: f64) -> f64 {
        self.eval_unchecked(r).1
    }

    /// phi(u) = int_c^u ds / lambda(s).
    pub fn phi_from_u(&self, u: f64) -> Result<f64> {
        if !self.in_interval(u) {
            return Err(Error::Domain(format!("u = {u} outside warp interval of {}", self.name)));
        }
        match &self.kind {
            WarpKind::Euclidean => Ok((u / self.base_point).ln()),
            WarpKind::Hyperboloidal { a } => Ok((u / a).asinh() - (self.base_point / a).asinh()),
            WarpKind::Tabulated(_) => {
                Ok(adaptive_simpson(&|s| 1.0 / self.eval_unchecked(s).0, self.base_point, u, QUADRATURE_TOL))
            }
        }
    }

    /// lambda'(u(phi)) for u = u_from_phi(phi), without materializing u.
    /// Closed forms for the catalog warps keep this cheap inside stencil loops.
    pub fn dlambda_from_phi(&self, phi: f64) -> Result<f64> {
        self.dlambda_evaluator().eval(phi)
    }

    /// Hoists per-warp constants (e.g. the phi offset of the interval start)
    /// out of hot loops; call once, then `eval` per node.
    pub fn dlambda_evaluator(&self) -> DlambdaEvaluator<'_> {
        match &self.kind {
            WarpKind::Euclidean => DlambdaEvaluator::Constant,
            WarpKind::Hyperboloidal { a } => DlambdaEvaluator::TanhShifted {
                shift: (self.base_point / a).asinh(),
                name: &self.name,
            },
            WarpKind::Tabulated(_) => DlambdaEvaluator::Inverted(self),
        }
    }

    /// Inverse of `phi_from_u` on the strictly increasing branch.
    pub fn u_from_phi(&self, phi: f64) -> Result<f64> {
        if !phi.is_finite() {
            return Err(Error::Domain(format!("phi = {phi} is not finite")));
        }
        match &self.kind {
            WarpKind::Euclidean => Ok(self.base_point * phi.exp()),
            WarpKind::Hyperboloidal { a } => Ok(a * (phi + (self.base_point / a).asinh()).sinh()),
            WarpKind::Tabulated(_) => {
                let lo = self.r_min;
                let hi = self.r_max.expect("tabulated warp has bounded range");
                let g = |r: f64| self.phi_from_u(r).unwrap_or(f64::INFINITY) - phi;
                let u = bisect_increasing(&g, lo, hi)
                    .map_err(|_| Error::Domain(format!("phi = {phi} outside the image of phi_from_u")))?;
                Ok(u)
            }
        }
    }

    /// Sample the admissibility hypotheses on a geometric grid over (r_min, horizon].
    ///
    /// The hypotheses are stated on all of the open interval; dense sampling over a
    /// finite horizon is the runtime approximation, and the horizon is recorded so
    /// the report says what was actually checked.
    pub fn validate(&self, sample_count: usize, horizon: Option<f64>) -> Result<ConditionReport> {
        if sample_count < 2 {
            return Err(Error::Config(format!("sample_count must be >= 2, got {sample_count}")));
        }
        let hi = horizon
            .unwrap_or(DEFAULT_HORIZON)
            .min(self.r_max.unwrap_or(f64::INFINITY));
        let lo_off = 1e-6;
        let hi_off = hi - self.r_min;
        if !(hi_off > lo_off) {
            return Err(Error::Config("validation horizon below the interval start".into()));
        }
        let ratio = (hi_off / lo_off).powf(1.0 / (sample_count as f64 - 1.0));

        let mut lambda_min = (f64::INFINITY, 0.0);
        let mut dl_min = (f64::INFINITY, 0.0);
        let mut dl_max = (f64::NEG_INFINITY, 0.0);
        let mut hyp_min = (f64::INFINITY, 0.0);
        let mut hyp_max = (f64::NEG_INFINITY, 0.0);
        let mut fd_worst = (0.0f64, 0.0);

        let mut off = lo_off;
        for k in 0..sample_count {
            let r = self.r_min + off;
            let (l, dl, ddl) = self.eval_unchecked(r);
            let hyp = l.powf(1.0 + self.alpha) * ddl;
            if l < lambda_min.0 {
                lambda_min = (l, r);
            }
            if dl < dl_min.0 {
                dl_min = (dl, r);
            }
            if dl > dl_max.0 {
                dl_max = (dl, r);
            }
            if hyp < hyp_min.0 {
                hyp_min = (hyp, r);
            }
            if hyp > hyp_max.0 {
                hyp_max = (hyp, r);
            }
            // Spot-check derivative consistency by centered differences.
            if k % 16 == 0 {
                let h = (1e-5 * r.abs().max(1.0)).min(0.25 * off.max(1e-7));
                if self.in_interval(r - h) && self.in_interval(r + h) {
                    let lp = self.eval_unchecked(r + h).0;
                    let lm = self.eval_unchecked(r - h).0;
                    let fd1 = (lp - lm) / (2.0 * h);
                    let fd2 = ((lp - l) - (l - lm)) / (h * h);
                    // Rounding floor of the finite differences themselves;
                    // anything below it carries no information.
                    let noise1 = 1e-14 * l.abs() / h;
                    let noise2 = 1e-14 * l.abs() / (h * h);
                    let e1 = ((fd1 - dl).abs() - noise1).max(0.0) / dl.abs().max(1.0);
                    let e2 = ((fd2 - ddl).abs() - noise2).max(0.0) / ddl.abs().max(1.0);
                    let e = e1.max(e2);
                    if e > fd_worst.0 {
                        fd_worst = (e, r);
                    }
                }
            }
            off *= ratio;
        }

        let slack = 1e-9 * self.c_bound.max(1.0);
        let checks = vec![
            ConditionCheck {
                name: "lambda_positive".into(),
                pass: lambda_min.0 > 0.0,
                worst_r: lambda_min.1,
                worst_value: lambda_min.0,
                bound: 0.0,
            },
            ConditionCheck {
                name: "dlambda_positive".into(),
                pass: dl_min.0 > 0.0,
                worst_r: dl_min.1,
                worst_value: dl_min.0,
                bound: 0.0,
            },
            ConditionCheck {
                name: "dlambda_bounded".into(),
                pass: dl_max.0 <= self.c_bound + slack,
                worst_r: dl_max.1,
                worst_value: dl_max.0,
                bound: self.c_bound,
            },
            ConditionCheck {
                name: "convexity_nonnegative".into(),
                pass: hyp_min.0 >= -slack,
                worst_r: hyp_min.1,
                worst_value: hyp_min.0,
                bound: 0.0,
            },
            ConditionCheck {
                name: "convexity_bounded".into(),
                pass: hyp_max.0 <= self.c_bound + slack,
                worst_r: hyp_max.1,
                worst_value: hyp_max.0,
                bound: self.c_bound,
            },
            ConditionCheck {
                name: "derivative_consistency".into(),
                pass: fd_worst.0 <= 1e-4,
                worst_r: fd_worst.1,
                worst_value: fd_worst.0,
                bound: 1e-4,
            },
        ];

        Ok(ConditionReport {
            warp: self.name.clone(),
            horizon: hi,
            sample_count,
            checks,
        })
    }
}

/// Fast per-node evaluator for lambda'(u(phi)); see
/// [`WarpSpec::dlambda_evaluator`].
pub enum DlambdaEvaluator<'w> {
    Constant,
    TanhShifted { shift: f64, name: &'w str },
    Inverted(&'w WarpSpec),
}

impl DlambdaEvaluator<'_> {
    #[inline]
    pub fn eval(&self, phi: f64) -> Result<f64> {
        if !phi.is_finite() {
            return Err(Error::Domain(format!("phi = {phi} is not finite")));
        }
        match self {
            DlambdaEvaluator::Constant => Ok(1.0),
            DlambdaEvaluator::TanhShifted { shift, name } => {
                let s = phi + shift;
                if s < 0.0 {
                    return Err(Error::Domain(format!(
                        "phi = {phi} maps below the interval start of {name}"
                    )));
                }
                Ok(s.tanh())
            }
            DlambdaEvaluator::Inverted(warp) => {
                let u = warp.u_from_phi(phi)?;
                Ok(warp.eval(u)?.1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn eucl() -> WarpSpec {
        WarpSpec::euclidean(1.0, 1.0, 1.0).unwrap()
    }

    fn hyper() -> WarpSpec {
        WarpSpec::hyperboloidal(1.0, 1.0, 1.0, 0.0).unwrap()
    }

    #[test]
    fn eval_catalog_values() {
        assert_eq!(eucl().eval(2.0).unwrap(), (2.0, 1.0, 0.0));
        let (l, dl, ddl) = hyper().eval(0.0).unwrap();
        assert_relative_eq!(l, 1.0);
        assert_relative_eq!(dl, 0.0);
        assert_relative_eq!(ddl, 1.0);
        let (l, dl, ddl) = hyper().eval(2.0).unwrap();
        assert_relative_eq!(l, 2.236068, epsilon = 1e-6);
        assert_relative_eq!(dl, 0.894427, epsilon = 1e-6);
        assert_relative_eq!(ddl, 0.089443, epsilon = 1e-6);
        // Closed-form derivatives vs centered finite differences, h = 1e-5.
        let h = 1e-5;
        let f = |r: f64| hyper().eval(r).unwrap().0;
        assert_relative_eq!(dl, (f(2.0 + h) - f(2.0 - h)) / (2.0 * h), epsilon = 1e-9);
        assert_relative_eq!(ddl, (f(2.0 + h) - 2.0 * f(2.0) + f(2.0 - h)) / (h * h), epsilon = 1e-5);
    }

    #[test]
    fn eval_rejects_out_of_domain() {
        assert!(matches!(eucl().eval(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn validate_euclidean_passes() {
        let rep = eucl().validate(DEFAULT_SAMPLES, None).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let dl = rep.checks.iter().find(|c| c.name == "dlambda_bounded").unwrap();
        assert_relative_eq!(dl.worst_value, 1.0);
        let hyp = rep.checks.iter().find(|c| c.name == "convexity_bounded").unwrap();
        assert_relative_eq!(hyp.worst_value, 0.0);
        // passes for every alpha > 0
        for alpha in [0.25, 1.0, 3.0] {
            let w = WarpSpec::euclidean(alpha, 1.0, 1.0).unwrap();
            assert!(w.validate(512, None).unwrap().passed());
        }
    }

    #[test]
    fn validate_hyperboloidal_sup_at_origin() {
        let rep = hyper().validate(DEFAULT_SAMPLES, None).unwrap();
        assert!(rep.passed(), "{rep:?}");
        // sup lambda^2 lambda'' = a^2 / sqrt(r^2+a^2) attains 1 at r = 0.
        let hyp = rep.checks.iter().find(|c| c.name == "convexity_bounded").unwrap();
        assert_relative_eq!(hyp.worst_value, 1.0, epsilon = 1e-6);
        assert!(hyp.worst_r < 1e-5);
    }

    #[test]
    fn validate_rejects_sinh() {
        // lambda = sinh(r): lambda' = cosh grows past any fixed bound.
        let rs: Vec<f64> = (0..=3000).map(|i| i as f64 * 0.01).collect();
        let ls: Vec<f64> = rs.iter().map(|&r| r.sinh()).collect();
        let w = WarpSpec::tabulated("sinh".into(), rs, ls, 1.0, 2.0, 1.0).unwrap();
        let rep = w.validate(2048, Some(25.0)).unwrap();
        assert!(!rep.passed());
        let dl = rep.checks.iter().find(|c| c.name == "dlambda_bounded").unwrap();
        assert!(!dl.pass);
        assert!(dl.worst_value > 2.0);
        assert!(dl.worst_r > 10.0, "violation should be at large r, got {}", dl.worst_r);
    }

    #[test]
    fn phi_closed_forms() {
        assert_relative_eq!(eucl().phi_from_u(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(hyper().phi_from_u(1.0).unwrap(), 1.0f64.asinh(), epsilon = 1e-12);
        assert_relative_eq!(hyper().phi_from_u(1.0).unwrap(), 0.881374, epsilon = 1e-6);
    }

    #[test]
    fn phi_quadrature_matches_closed_form() {
        // Tabulate the hyperboloidal warp and compare quadrature against arcsinh.
        let rs: Vec<f64> = (0..=4000).map(|i| i as f64 * 0.005).collect();
        let ls: Vec<f64> = rs.iter().map(|&r| (r * r + 1.0).sqrt()).collect();
        let w = WarpSpec::tabulated("hyper-tab".into(), rs, ls, 1.0, 1.0, 0.0).unwrap();
        for u in [0.5, 1.0, 3.0, 10.0] {
            assert_relative_eq!(
                w.phi_from_u(u).unwrap(),
                (u as f64).asinh(),
                epsilon = 1e-7 // spline interpolation error dominates
            );
        }
    }

    #[test]
    fn round_trip_identity() {
        for u in [1.1, 2.0, 10.0] {
            let w = eucl();
            assert_relative_eq!(w.u_from_phi(w.phi_from_u(u).unwrap()).unwrap(), u, max_relative = 1e-12);
            let w = hyper();
            assert_relative_eq!(w.u_from_phi(w.phi_from_u(u).unwrap()).unwrap(), u, max_relative = 1e-12);
        }
        // Tabulated path exercises quadrature + bisection.
        let rs: Vec<f64> = (0..=2000).map(|i| 0.5 + i as f64 * 0.01).collect();
        let ls: Vec<f64> = rs.iter().map(|&r| (r * r + 1.0).sqrt()).collect();
        let w = WarpSpec::tabulated("hyper-tab".into(), rs, ls, 1.0, 1.0, 1.0).unwrap();
        for u in [1.1, 2.0, 10.0] {
            assert_relative_eq!(w.u_from_phi(w.phi_from_u(u).unwrap()).unwrap(), u, max_relative = 1e-10);
        }
    }

    #[test]
    fn dlambda_from_phi_matches_composition() {
        for w in [eucl(), hyper()] {
            for u in [1.0, 2.5, 7.0] {
                let phi = w.phi_from_u(u).unwrap();
                assert_relative_eq!(
                    w.dlambda_from_phi(phi).unwrap(),
                    w.dlambda(u),
                    max_relative = 1e-13
                );
            }
        }
        // Hyperboloidal phi below the image of [0, inf) is a domain error.
        assert!(hyper().dlambda_from_phi(-10.0).is_err());
    }

    #[test]
    fn derivative_of_phi_is_reciprocal_lambda() {
        let h = 1e-6;
        for w in [eucl(), hyper()] {
            for u in [1.0, 2.5, 7.0] {
                let fd = (w.phi_from_u(u + h).unwrap() - w.phi_from_u(u - h).unwrap()) / (2.0 * h);
                assert_relative_eq!(fd, 1.0 / w.lambda(u), epsilon = 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn phi_strictly_increasing(a in 0.5f64..4.0, b in 0.5f64..4.0, c in 0.5f64..4.0) {
            let mut us = [a, b, c];
            us.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assume!(us[0] < us[1] && us[1] < us[2]);
            for w in [eucl(), hyper()] {
                let p: Vec<f64> = us.iter().map(|&u| w.phi_from_u(u).unwrap()).collect();
                prop_assert!(p[0] < p[1] && p[1] < p[2]);
            }
        }
    }
}
