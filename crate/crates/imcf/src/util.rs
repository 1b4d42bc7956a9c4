//! Small numeric helpers shared across modules.

use crate::error::{Error, Result};

/// Natural cubic spline with value and first/second derivative evaluation.
#[derive(Clone, Debug)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 || ys.len() != n {
            return Err(Error::Config(format!(
                "spline needs >= 3 matching samples, got {} / {}",
                n,
                ys.len()
            )));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config("spline abscissae must be strictly increasing".into()));
            }
        }
        // Thomas algorithm for the natural-spline tridiagonal system.
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        b[0] = 1.0;
        b[n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        }
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = c[0] / b[0];
        dp[0] = d[0] / b[0];
        for i in 1..n {
            let den = b[i] - a[i] * cp[i - 1];
            cp[i] = c[i] / den;
            dp[i] = (d[i] - a[i] * dp[i - 1]) / den;
        }
        let mut m = vec![0.0; n];
        m[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = dp[i] - cp[i] * m[i + 1];
        }
        Ok(Self { xs, ys, m })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.clamp(1, self.xs.len() - 1) - 1,
        }
    }

    /// Value, first and second derivative at `x` (clamped to the knot range).
    pub fn eval3(&self, x: f64) -> (f64, f64, f64) {
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (self.xs[i + 1] - x) / h;
        let s = (x - self.xs[i]) / h;
        let y = t * self.ys[i]
            + s * self.ys[i + 1]
            + ((t * t * t - t) * self.m[i] + (s * s * s - s) * self.m[i + 1]) * h * h / 6.0;
        let dy = (self.ys[i + 1] - self.ys[i]) / h
            + h / 6.0 * ((3.0 * s * s - 1.0) * self.m[i + 1] - (3.0 * t * t - 1.0) * self.m[i]);
        let ddy = t * self.m[i] + s * self.m[i + 1];
        (y, dy, ddy)
    }
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Bisection on a monotonically increasing function; returns x with g(x) = 0.
pub fn bisect_increasing<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut glo = g(lo);
    let ghi = g(hi);
    if glo > 0.0 || ghi < 0.0 {
        return Err(Error::Numeric(format!(
            "bracket failure: g({lo:.6e}) = {glo:.6e}, g({hi:.6e}) = {ghi:.6e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm <= 0.0 {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
        if glo == 0.0 {
            return Ok(lo);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least-squares line y = slope*x + intercept; returns (slope, intercept, r^2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Four-point Lagrange interpolation on a sorted grid.
pub fn interp_cubic(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 4);
    let j = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => return ys[i],
        Err(i) => i,
    };
    let start = j.saturating_sub(2).min(n - 4);
    let xs4 = &xs[start..start + 4];
    let ys4 = &ys[start..start + 4];
    let mut acc = 0.0;
    for k in 0..4 {
        let mut w = ys4[k];
        for l in 0..4 {
            if l != k {
                w *= (x - xs4[l]) / (xs4[k] - xs4[l]);
            }
        }
        acc += w;
    }
    acc
}

/// Surface area of the unit sphere S^k.
pub fn unit_sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI * unit_sphere_area(k - 2) / (k as f64 - 1.0),
    }
}
