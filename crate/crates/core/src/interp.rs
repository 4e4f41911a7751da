//! Periodic interpolation of grid data at arbitrary parameters.
//!
//! Trigonometric interpolation is used with the spectral scheme, a periodic
//! cubic spline with the finite-difference schemes. Both expose evaluation,
//! first derivative and the cumulative integral from theta = 0, which is what
//! arc-length reparametrization needs.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::scheme::{fft_forward, DerivScheme};

const TWO_PI: f64 = 2.0 * PI;

fn wrap(x: f64) -> f64 {
    let mut y = x % TWO_PI;
    if y < 0.0 {
        y += TWO_PI;
    }
    y
}

/// Trigonometric interpolant of M real periodic samples (M even).
pub struct TrigInterp {
    m: usize,
    /// Normalized DFT coefficients, c_k = (1/M) sum f_j exp(-i k theta_j).
    coef: Vec<Complex<f64>>,
}

impl TrigInterp {
    pub fn new(values: &[f64]) -> Self {
        let m = values.len();
        let mut coef: Vec<Complex<f64>> = values.iter().map(|&x| Complex::new(x, 0.0)).collect();
        fft_forward(&mut coef);
        let s = 1.0 / m as f64;
        for z in coef.iter_mut() {
            *z *= s;
        }
        TrigInterp { m, coef }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let half = self.m / 2;
        let mut acc = self.coef[0].re;
        for k in 1..half {
            let (s, c) = (k as f64 * x).sin_cos();
            acc += 2.0 * (self.coef[k].re * c - self.coef[k].im * s);
        }
        acc += self.coef[half].re * (half as f64 * x).cos();
        acc
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let half = self.m / 2;
        let mut acc = 0.0;
        for k in 1..half {
            let kf = k as f64;
            let (s, c) = (kf * x).sin_cos();
            acc += 2.0 * kf * (-self.coef[k].re * s - self.coef[k].im * c);
        }
        let hf = half as f64;
        acc -= self.coef[half].re * hf * (hf * x).sin();
        acc
    }

    /// Integral of the interpolant from 0 to x.
    pub fn integral(&self, x: f64) -> f64 {
        let half = self.m / 2;
        let mut acc = self.coef[0].re * x;
        for k in 1..half {
            let kf = k as f64;
            let (s, c) = (kf * x).sin_cos();
            acc += 2.0 * (self.coef[k].re * s + self.coef[k].im * (c - 1.0)) / kf;
        }
        let hf = half as f64;
        acc += self.coef[half].re * (hf * x).sin() / hf;
        acc
    }
}

/// Periodic cubic spline on the uniform grid, in second-derivative (moment) form.
pub struct PeriodicSpline {
    values: Vec<f64>,
    moments: Vec<f64>,
    h: f64,
}

impl PeriodicSpline {
    pub fn new(values: &[f64]) -> Self {
        let m = values.len();
        let h = TWO_PI / m as f64;
        // M_{i-1} + 4 M_i + M_{i+1} = 6 (f_{i-1} - 2 f_i + f_{i+1}) / h^2, cyclic.
        let rhs: Vec<f64> = (0..m)
            .map(|i| {
                let im = (i + m - 1) % m;
                let ip = (i + 1) % m;
                6.0 * (values[im] - 2.0 * values[i] + values[ip]) / (h * h)
            })
            .collect();
        let moments = cyclic_tridiag_const(1.0, 4.0, 1.0, &rhs);
        PeriodicSpline {
            values: values.to_vec(),
            moments,
            h,
        }
    }

    fn segment(&self, x: f64) -> (usize, usize, f64) {
        let y = wrap(x);
        let m = self.values.len();
        let mut i = (y / self.h) as usize;
        if i >= m {
            i = m - 1;
        }
        let u = y - i as f64 * self.h;
        (i, (i + 1) % m, u)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, ip, u) = self.segment(x);
        let h = self.h;
        let (mi, mip) = (self.moments[i], self.moments[ip]);
        let (fi, fip) = (self.values[i], self.values[ip]);
        let a = h - u;
        mi * a * a * a / (6.0 * h)
            + mip * u * u * u / (6.0 * h)
            + (fi - mi * h * h / 6.0) * a / h
            + (fip - mip * h * h / 6.0) * u / h
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        let (i, ip, u) = self.segment(x);
        let h = self.h;
        let (mi, mip) = (self.moments[i], self.moments[ip]);
        let (fi, fip) = (self.values[i], self.values[ip]);
        let a = h - u;
        -mi * a * a / (2.0 * h) + mip * u * u / (2.0 * h) + (fip - fi) / h - (mip - mi) * h / 6.0
    }

    /// Integral of one full segment i.
    fn segment_integral(&self, i: usize) -> f64 {
        let m = self.values.len();
        let ip = (i + 1) % m;
        let h = self.h;
        let (mi, mip) = (self.moments[i], self.moments[ip]);
        let (fi, fip) = (self.values[i], self.values[ip]);
        (mi + mip) * h * h * h / 24.0 + (fi - mi * h * h / 6.0) * h / 2.0
            + (fip - mip * h * h / 6.0) * h / 2.0
    }

    /// Integral over [theta_i, theta_i + u] within segment i.
    fn partial_integral(&self, i: usize, u: f64) -> f64 {
        let m = self.values.len();
        let ip = (i + 1) % m;
        let h = self.h;
        let (mi, mip) = (self.moments[i], self.moments[ip]);
        let (fi, fip) = (self.values[i], self.values[ip]);
        let a = h - u;
        mi * (h * h * h * h - a * a * a * a) / (24.0 * h)
            + mip * u * u * u * u / (24.0 * h)
            + (fi - mi * h * h / 6.0) * (h * h - a * a) / (2.0 * h)
            + (fip - mip * h * h / 6.0) * u * u / (2.0 * h)
    }

    /// Integral of the spline from 0 to x (x in [0, 2 pi]).
    pub fn integral(&self, x: f64) -> f64 {
        let m = self.values.len();
        let y = x.clamp(0.0, TWO_PI);
        let mut i = (y / self.h) as usize;
        if i >= m {
            i = m - 1;
        }
        let mut acc = 0.0;
        for j in 0..i {
            acc += self.segment_integral(j);
        }
        acc + self.partial_integral(i, y - i as f64 * self.h)
    }
}

/// Solves the cyclic tridiagonal system with constant bands (a, b, a) via
/// the Sherman-Morrison correction on top of the Thomas algorithm.
fn cyclic_tridiag_const(a: f64, b: f64, c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    assert!(n >= 3);
    let gamma = -b;
    // Modified diagonal.
    let mut diag = vec![b; n];
    diag[0] = b - gamma;
    diag[n - 1] = b - a * c / gamma;
    let x = tridiag_const(a, &diag, c, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = c;
    let z = tridiag_const(a, &diag, c, &u);
    let fact = (x[0] + a * x[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    x.iter().zip(z.iter()).map(|(&xi, &zi)| xi - fact * zi).collect()
}

fn tridiag_const(a: f64, diag: &[f64], c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c / diag[0];
    dp[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - a * cp[i - 1];
        cp[i] = c / denom;
        dp[i] = (rhs[i] - a * dp[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Scheme-selected periodic interpolant of a scalar grid function.
pub enum PeriodicInterp {
    Trig(TrigInterp),
    Spline(PeriodicSpline),
}

impl PeriodicInterp {
    pub fn new(values: &[f64], scheme: DerivScheme) -> Self {
        match scheme {
            DerivScheme::Spectral => PeriodicInterp::Trig(TrigInterp::new(values)),
            _ => PeriodicInterp::Spline(PeriodicSpline::new(values)),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PeriodicInterp::Trig(t) => t.eval(x),
            PeriodicInterp::Spline(s) => s.eval(x),
        }
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self {
            PeriodicInterp::Trig(t) => t.eval_deriv(x),
            PeriodicInterp::Spline(s) => s.eval_deriv(x),
        }
    }

    pub fn integral(&self, x: f64) -> f64 {
        match self {
            PeriodicInterp::Trig(t) => t.integral(x),
            PeriodicInterp::Spline(s) => s.integral(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn samples(m: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..m).map(|i| f(TWO_PI * i as f64 / m as f64)).collect()
    }

    #[test]
    fn trig_reproduces_band_limited_exactly() {
        let m = 32;
        let f = |t: f64| 0.7 + (2.0 * t).sin() - 0.3 * (5.0 * t).cos();
        let interp = TrigInterp::new(&samples(m, f));
        for &x in &[0.0, 0.17, 1.9, 4.4, 6.2] {
            assert_abs_diff_eq!(interp.eval(x), f(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn trig_derivative_and_integral() {
        let m = 64;
        let f = |t: f64| (3.0 * t).sin() + 0.5;
        let interp = TrigInterp::new(&samples(m, f));
        for &x in &[0.3, 2.2, 5.1] {
            assert_abs_diff_eq!(interp.eval_deriv(x), 3.0 * (3.0 * x).cos(), epsilon = 1e-10);
            let exact = (1.0 - (3.0 * x).cos()) / 3.0 + 0.5 * x;
            assert_abs_diff_eq!(interp.integral(x), exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn spline_interpolates_nodes_and_converges() {
        let f = |t: f64| (2.0 * t).sin();
        let err = |m: usize| {
            let s = PeriodicSpline::new(&samples(m, f));
            (0..200)
                .map(|i| {
                    let x = TWO_PI * (i as f64 + 0.31) / 200.0;
                    (s.eval(x) - f(x)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < e1 / 12.0, "e1={e1} e2={e2}"); // ~O(h^4)
        let s = PeriodicSpline::new(&samples(32, f));
        for i in 0..32 {
            let x = TWO_PI * i as f64 / 32.0;
            assert_abs_diff_eq!(s.eval(x), f(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn spline_integral_matches_quadrature() {
        let m = 64;
        let f = |t: f64| 1.3 + 0.4 * (t.sin());
        let s = PeriodicSpline::new(&samples(m, f));
        let exact = |x: f64| 1.3 * x + 0.4 * (1.0 - x.cos());
        for &x in &[0.9, 3.3, 6.0] {
            assert_abs_diff_eq!(s.integral(x), exact(x), epsilon = 1e-6);
        }
        // Full-period integral.
        assert_abs_diff_eq!(s.integral(TWO_PI), 1.3 * TWO_PI, epsilon = 1e-8);
    }
}
