//! Closed immersed curves on a uniform periodic grid and the arc-length
//! calculus on them: theta derivatives, D_s = |c'|^{-1} d/dtheta, arc-length
//! integration, the four norms, constant-speed reparametrization and the
//! winding number.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::PeriodicInterp;
use crate::scheme::{d_theta_mat, d_theta_vec, DerivScheme};
use crate::shape::Diffeo;

pub const TWO_PI: f64 = 2.0 * PI;

/// Default immersion threshold: curves with min |c'| below this are rejected.
pub const DEFAULT_IMMERSION_THRESHOLD: f64 = 1e-8;

/// Largest iterated arc-length derivative order the calculus supports.
pub const MAX_ARC_ORDER: usize = 16;

/// Periodic real-valued samples on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Array1<f64>,
}

impl ScalarField {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "scalar field" });
        }
        Ok(ScalarField { values })
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = Array1::from_iter((0..m).map(|i| f(TWO_PI * i as f64 / m as f64)));
        ScalarField { values }
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Discrete d/dtheta under the given scheme.
    pub fn theta_derivative(&self, scheme: DerivScheme) -> Result<Self> {
        check_even_for_spectral(self.len(), scheme)?;
        Ok(ScalarField { values: d_theta_vec(&self.values, scheme) })
    }
}

/// Vector field along a curve; an M x dim matrix of values.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField {
    values: Array2<f64>,
}

impl TangentField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "tangent field" });
        }
        Ok(TangentField { values })
    }

    pub fn zeros(m: usize, dim: usize) -> Self {
        TangentField { values: Array2::zeros((m, dim)) }
    }

    /// Constant field with the same vector at every grid point.
    pub fn constant(m: usize, w: &[f64]) -> Self {
        let mut values = Array2::zeros((m, w.len()));
        for i in 0..m {
            for (j, &wj) in w.iter().enumerate() {
                values[[i, j]] = wj;
            }
        }
        TangentField { values }
    }

    pub fn from_fn(m: usize, dim: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let mut values = Array2::zeros((m, dim));
        for i in 0..m {
            let th = TWO_PI * i as f64 / m as f64;
            for j in 0..dim {
                values[[i, j]] = f(th, j);
            }
        }
        TangentField { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn theta_derivative(&self, scheme: DerivScheme) -> Result<Self> {
        check_even_for_spectral(self.len(), scheme)?;
        Ok(TangentField { values: d_theta_mat(&self.values, scheme) })
    }

    pub fn scale(&self, a: f64) -> Self {
        TangentField { values: &self.values * a }
    }

    pub fn add(&self, other: &Self) -> Self {
        TangentField { values: &self.values + &other.values }
    }

    pub fn sub(&self, other: &Self) -> Self {
        TangentField { values: &self.values - &other.values }
    }
}

fn check_even_for_spectral(m: usize, scheme: DerivScheme) -> Result<()> {
    if scheme == DerivScheme::Spectral && m % 2 != 0 {
        return Err(Error::InvalidGrid { m });
    }
    Ok(())
}

/// Which norm to evaluate for a field along a curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    /// L^2 with respect to dtheta.
    L2Theta,
    /// L^2 with respect to ds = |c'| dtheta.
    L2Arc,
    /// H^n(dtheta): |f|^2 + |d^n f / dtheta^n|^2 integrated dtheta.
    SobolevTheta,
    /// H^n(ds): |f|^2 + |D_s^n f|^2 integrated ds.
    SobolevArc,
}

/// A closed curve in R^d sampled at theta_i = 2 pi i / M.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCurve {
    samples: Array2<f64>,
    scheme: DerivScheme,
    eps_imm: f64,
}

/// Speed and unit tangent of a curve, computed once and shared.
pub(crate) struct CurveGeom {
    pub speed: Array1<f64>,
    pub tangent: Array2<f64>,
}

impl DiscreteCurve {
    pub fn new(samples: Array2<f64>, scheme: DerivScheme) -> Result<Self> {
        Self::with_threshold(samples, scheme, DEFAULT_IMMERSION_THRESHOLD)
    }

    pub fn with_threshold(samples: Array2<f64>, scheme: DerivScheme, eps_imm: f64) -> Result<Self> {
        let (m, dim) = samples.dim();
        if m < 16 || m % 2 != 0 {
            return Err(Error::InvalidGrid { m });
        }
        if dim < 2 {
            return Err(Error::InvalidDimension { dim });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "curve samples" });
        }
        let c = DiscreteCurve { samples, scheme, eps_imm };
        let min_speed = c.geom().speed.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_speed < eps_imm {
            return Err(Error::ImmersionViolation { min_speed, threshold: eps_imm });
        }
        Ok(c)
    }

    pub fn m(&self) -> usize {
        self.samples.nrows()
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn scheme(&self) -> DerivScheme {
        self.scheme
    }

    pub fn immersion_threshold(&self) -> f64 {
        self.eps_imm
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn dtheta(&self) -> f64 {
        TWO_PI / self.m() as f64
    }

    pub(crate) fn geom(&self) -> CurveGeom {
        let deriv = d_theta_mat(&self.samples, self.scheme);
        let speed = row_norms(&deriv);
        let mut tangent = deriv;
        for (mut row, &s) in tangent.rows_mut().into_iter().zip(speed.iter()) {
            if s > 0.0 {
                row.mapv_inplace(|x| x / s);
            }
        }
        CurveGeom { speed, tangent }
    }

    /// Pointwise |c'|.
    pub fn speed(&self) -> ScalarField {
        ScalarField { values: self.geom().speed }
    }

    /// Unit tangent v = c' / |c'|.
    pub fn unit_tangent(&self) -> TangentField {
        TangentField { values: self.geom().tangent }
    }

    /// The curve's own samples viewed as a tangent field (h = c).
    pub fn as_tangent(&self) -> TangentField {
        TangentField { values: self.samples.clone() }
    }

    /// Curve length by the trapezoid rule, exact for smooth periodic data.
    pub fn length(&self) -> f64 {
        self.dtheta() * self.geom().speed.sum()
    }

    fn check_field_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if rows != self.m() || cols != self.dim() {
            return Err(Error::ShapeMismatch {
                want_rows: self.m(),
                want_cols: self.dim(),
                got_rows: rows,
                got_cols: cols,
            });
        }
        Ok(())
    }

    fn check_scalar_shape(&self, len: usize) -> Result<()> {
        if len != self.m() {
            return Err(Error::ShapeMismatch {
                want_rows: self.m(),
                want_cols: 1,
                got_rows: len,
                got_cols: 1,
            });
        }
        Ok(())
    }

    /// Iterated arc-length derivative D_s^k f, D_s = |c'|^{-1} d/dtheta.
    pub fn arc_derivative(&self, f: &TangentField, k: usize) -> Result<TangentField> {
        self.check_field_shape(f.len(), f.dim())?;
        check_order(k)?;
        let geom = self.geom();
        let mut cur = f.values.clone();
        for _ in 0..k {
            cur = arc_deriv_mat(&geom.speed, &cur, self.scheme);
        }
        Ok(TangentField { values: cur })
    }

    pub fn arc_derivative_scalar(&self, f: &ScalarField, k: usize) -> Result<ScalarField> {
        self.check_scalar_shape(f.len())?;
        check_order(k)?;
        let geom = self.geom();
        let mut cur = f.values.clone();
        for _ in 0..k {
            cur = arc_deriv_vec(&geom.speed, &cur, self.scheme);
        }
        Ok(ScalarField { values: cur })
    }

    /// One of the four norms of a tangent field along this curve.
    pub fn norm(&self, f: &TangentField, kind: NormKind, n: usize) -> Result<f64> {
        self.check_field_shape(f.len(), f.dim())?;
        let geom = self.geom();
        self.norm_impl(&f.values, kind, n, &geom)
    }

    pub fn norm_scalar(&self, f: &ScalarField, kind: NormKind, n: usize) -> Result<f64> {
        self.check_scalar_shape(f.len())?;
        let m = f.len();
        let mat = f.values.clone().into_shape_with_order((m, 1)).expect("reshape");
        let geom = self.geom();
        self.norm_impl(&mat, kind, n, &geom)
    }

    fn norm_impl(&self, f: &Array2<f64>, kind: NormKind, n: usize, geom: &CurveGeom) -> Result<f64> {
        let dth = self.dtheta();
        let l2_theta_sq = |g: &Array2<f64>| dth * g.iter().map(|x| x * x).sum::<f64>();
        let l2_ds_sq = |g: &Array2<f64>| {
            dth * g
                .rows()
                .into_iter()
                .zip(geom.speed.iter())
                .map(|(row, &s)| s * row.iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
        };
        let out_sq = match kind {
            NormKind::L2Theta => l2_theta_sq(f),
            NormKind::L2Arc => l2_ds_sq(f),
            NormKind::SobolevTheta => {
                check_sobolev_order(n)?;
                let mut d = f.clone();
                for _ in 0..n {
                    d = d_theta_mat(&d, self.scheme);
                }
                l2_theta_sq(f) + l2_theta_sq(&d)
            }
            NormKind::SobolevArc => {
                check_sobolev_order(n)?;
                check_order(n)?;
                let mut d = f.clone();
                for _ in 0..n {
                    d = arc_deriv_mat(&geom.speed, &d, self.scheme);
                }
                l2_ds_sq(f) + l2_ds_sq(&d)
            }
        };
        Ok(out_sq.sqrt())
    }

    /// H^n(dtheta) distance between two curves of equal shape.
    pub fn flat_sobolev_distance(&self, other: &DiscreteCurve, n: usize) -> Result<f64> {
        self.check_field_shape(other.m(), other.dim())?;
        let diff = TangentField { values: &other.samples - &self.samples };
        self.norm(&diff, NormKind::SobolevTheta, n)
    }

    /// Evaluates the curve at arbitrary parameters by periodic interpolation
    /// (trigonometric under the spectral scheme, cubic spline otherwise).
    pub fn evaluate_at(&self, params: &[f64]) -> Array2<f64> {
        let (m, d) = self.samples.dim();
        let mut out = Array2::zeros((params.len(), d));
        let mut col = vec![0.0; m];
        for j in 0..d {
            for i in 0..m {
                col[i] = self.samples[[i, j]];
            }
            let interp = PeriodicInterp::new(&col, self.scheme);
            for (r, &x) in params.iter().enumerate() {
                out[[r, j]] = interp.eval(x);
            }
        }
        out
    }

    /// Derivative c'(x) at arbitrary parameters, from the interpolant.
    pub fn evaluate_deriv_at(&self, params: &[f64]) -> Array2<f64> {
        let (m, d) = self.samples.dim();
        let mut out = Array2::zeros((params.len(), d));
        let mut col = vec![0.0; m];
        for j in 0..d {
            for i in 0..m {
                col[i] = self.samples[[i, j]];
            }
            let interp = PeriodicInterp::new(&col, self.scheme);
            for (r, &x) in params.iter().enumerate() {
                out[[r, j]] = interp.eval_deriv(x);
            }
        }
        out
    }

    /// Resamples the curve on a grid of `new_m` points.
    pub fn resampled(&self, new_m: usize) -> Result<DiscreteCurve> {
        let params: Vec<f64> = (0..new_m).map(|i| TWO_PI * i as f64 / new_m as f64).collect();
        let samples = self.evaluate_at(&params);
        DiscreteCurve::with_threshold(samples, self.scheme, self.eps_imm)
    }

    /// Reparametrizes to constant speed. Returns the new curve together with
    /// the reparametrization phi, so that new(theta) = old(phi(theta)).
    pub fn constant_speed_reparam(&self) -> Result<(DiscreteCurve, Diffeo)> {
        let m = self.m();
        let speed = self.geom().speed;
        let speed_slice = speed.as_slice().expect("contiguous");
        let interp = PeriodicInterp::new(speed_slice, self.scheme);
        let total = interp.integral(TWO_PI);
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::SolverFailure("arc length integral not positive".into()));
        }

        // Invert s(psi) = i * total / M segment by segment. s is strictly
        // increasing because speed stays above the immersion threshold.
        let mut params = vec![0.0; m];
        for i in 1..m {
            let target = total * i as f64 / m as f64;
            let mut lo = params[i - 1];
            let mut hi = TWO_PI;
            let mut x = lo + (hi - lo).min((target - interp.integral(lo)).max(0.0) / interp.eval(lo).max(1e-12));
            for _ in 0..60 {
                let sx = interp.integral(x) - target;
                if sx.abs() < 1e-14 * total {
                    break;
                }
                if sx > 0.0 {
                    hi = x;
                } else {
                    lo = x;
                }
                let dx = interp.eval(x);
                let newton = x - sx / dx;
                x = if dx > 1e-12 && newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
            }
            params[i] = x;
        }
        let samples = self.evaluate_at(&params);
        let curve = DiscreteCurve::with_threshold(samples, self.scheme, self.eps_imm)?;
        let diffeo = Diffeo::new(params, 0.0)?;
        Ok((curve, diffeo))
    }

    /// Winding number of a plane curve: accumulated turning of the unit
    /// tangent divided by 2 pi. Errors when the turning between adjacent
    /// samples exceeds pi/2 (under-resolved) or the total is far from an
    /// integer multiple of 2 pi.
    pub fn winding_number(&self) -> Result<i64> {
        if self.dim() != 2 {
            return Err(Error::NotPlanar { dim: self.dim() });
        }
        let t = self.geom().tangent;
        let m = self.m();
        let mut total = 0.0;
        for i in 0..m {
            let j = (i + 1) % m;
            let (ax, ay) = (t[[i, 0]], t[[i, 1]]);
            let (bx, by) = (t[[j, 0]], t[[j, 1]]);
            let cross = ax * by - ay * bx;
            let dot = ax * bx + ay * by;
            let step = cross.atan2(dot);
            if step.abs() > PI / 2.0 {
                return Err(Error::WindingUnresolved {
                    reason: format!("turning step {:.3} rad at sample {} exceeds pi/2", step, i),
                });
            }
            total += step;
        }
        let w = total / TWO_PI;
        let rounded = w.round();
        if (w - rounded).abs() > 0.1 {
            return Err(Error::WindingUnresolved {
                reason: format!("total turning {:.6} not close to an integer multiple of 2 pi", w),
            });
        }
        Ok(rounded as i64)
    }
}

fn check_order(k: usize) -> Result<()> {
    if k > MAX_ARC_ORDER {
        return Err(Error::DerivativeOrder { k, max: MAX_ARC_ORDER });
    }
    Ok(())
}

fn check_sobolev_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidNormOrder { n });
    }
    Ok(())
}

pub(crate) fn row_norms(mat: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(
        mat.rows()
            .into_iter()
            .map(|row| row.iter().map(|x| x * x).sum::<f64>().sqrt()),
    )
}

pub(crate) fn arc_deriv_mat(speed: &Array1<f64>, f: &Array2<f64>, scheme: DerivScheme) -> Array2<f64> {
    let mut d = d_theta_mat(f, scheme);
    for (mut row, &s) in d.rows_mut().into_iter().zip(speed.iter()) {
        row.mapv_inplace(|x| x / s);
    }
    d
}

pub(crate) fn arc_deriv_vec(speed: &Array1<f64>, f: &Array1<f64>, scheme: DerivScheme) -> Array1<f64> {
    let mut d = d_theta_vec(f, scheme);
    for (x, &s) in d.iter_mut().zip(speed.iter()) {
        *x /= s;
    }
    d
}

/// dtheta-weighted inner product of two sample matrices.
pub(crate) fn inner_theta(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let m = a.nrows();
    TWO_PI / m as f64 * a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>()
}

/// ds-weighted inner product with the given speed field.
pub(crate) fn inner_ds(a: &Array2<f64>, b: &Array2<f64>, speed: &Array1<f64>) -> f64 {
    let m = a.nrows();
    TWO_PI / m as f64
        * a.rows()
            .into_iter()
            .zip(b.rows())
            .zip(speed.iter())
            .map(|((ra, rb), &s)| s * ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
}

/// Pointwise inner product of rows, as a scalar grid function.
pub(crate) fn pointwise_inner(a: &Array2<f64>, b: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(
        a.rows()
            .into_iter()
            .zip(b.rows())
            .map(|(ra, rb)| ra.iter().zip(rb.iter()).map(|(x, y)| x * y).sum::<f64>()),
    )
}

/// Scales each row of `mat` by the matching entry of `w`.
pub(crate) fn scale_rows(mat: &Array2<f64>, w: &Array1<f64>) -> Array2<f64> {
    let mut out = mat.clone();
    for (mut row, &s) in out.rows_mut().into_iter().zip(w.iter()) {
        row.mapv_inplace(|x| x * s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{circle, double_circle, ellipse, figure_eight};
    use approx::assert_abs_diff_eq;

    #[test]
    fn rejects_bad_grids_and_dims() {
        let c = Array2::zeros((10, 2));
        assert!(matches!(DiscreteCurve::new(c, DerivScheme::Spectral), Err(Error::InvalidGrid { .. })));
        let c = Array2::zeros((16, 1));
        assert!(matches!(
            DiscreteCurve::new(c, DerivScheme::Spectral),
            Err(Error::InvalidDimension { .. })
        ));
        // A constant "curve" has zero speed everywhere.
        let c = Array2::ones((16, 2));
        assert!(matches!(
            DiscreteCurve::new(c, DerivScheme::Spectral),
            Err(Error::ImmersionViolation { .. })
        ));
    }

    #[test]
    fn speed_of_circles() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        for &s in c.speed().values() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        let c = circle(64, 2.5, DerivScheme::Spectral);
        for &s in c.speed().values() {
            assert_abs_diff_eq!(s, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn speed_of_ellipse_matches_closed_form() {
        let c = ellipse(256, 2.0, 1.0, DerivScheme::Spectral);
        let speeds = c.speed();
        for (i, &s) in speeds.values().iter().enumerate() {
            let th = TWO_PI * i as f64 / 256.0;
            let exact = (4.0 * th.sin().powi(2) + th.cos().powi(2)).sqrt();
            assert_abs_diff_eq!(s, exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn unit_tangent_circle_and_norm() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        let v = c.unit_tangent();
        for i in 0..64 {
            let th = TWO_PI * i as f64 / 64.0;
            assert_abs_diff_eq!(v.values()[[i, 0]], -th.sin(), epsilon = 1e-12);
            assert_abs_diff_eq!(v.values()[[i, 1]], th.cos(), epsilon = 1e-12);
        }
        // |v| = 1 pointwise for any valid curve.
        let e = ellipse(128, 2.0, 1.0, DerivScheme::Spectral);
        for row in e.unit_tangent().values().rows() {
            let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn unit_tangent_double_circle() {
        let c = double_circle(128, DerivScheme::Spectral);
        let v = c.unit_tangent();
        for i in 0..128 {
            let th = TWO_PI * i as f64 / 128.0;
            assert_abs_diff_eq!(v.values()[[i, 0]], -(2.0 * th).sin(), epsilon = 1e-10);
            assert_abs_diff_eq!(v.values()[[i, 1]], (2.0 * th).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn arc_derivative_identity_and_circle() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        let f = c.as_tangent();
        let same = c.arc_derivative(&f, 0).unwrap();
        assert_eq!(same.values(), f.values());
        // D_s^2 c = -c on the unit circle.
        let dd = c.arc_derivative(&f, 2).unwrap();
        for (a, b) in dd.values().iter().zip(f.values().iter()) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-10);
        }
    }

    #[test]
    fn arc_derivative_radius_r_gives_unit_tangent() {
        let c = circle(64, 3.0, DerivScheme::Spectral);
        let d = c.arc_derivative(&c.as_tangent(), 1).unwrap();
        for row in d.values().rows() {
            let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn arc_derivative_is_linear() {
        let c = ellipse(64, 2.0, 1.0, DerivScheme::Spectral);
        let f = TangentField::from_fn(64, 2, |t, j| if j == 0 { (2.0 * t).sin() } else { t.cos() });
        let g = TangentField::from_fn(64, 2, |t, j| if j == 0 { 0.3 * t.cos() } else { (3.0 * t).sin() });
        let (alpha, beta) = (0.7, -1.3);
        for k in [1usize, 2, 3] {
            let lhs = c
                .arc_derivative(&f.scale(alpha).add(&g.scale(beta)), k)
                .unwrap();
            let rhs = c
                .arc_derivative(&f, k)
                .unwrap()
                .scale(alpha)
                .add(&c.arc_derivative(&g, k).unwrap().scale(beta));
            let scale = rhs.values().iter().map(|x| x.abs()).fold(0.0, f64::max);
            for (a, b) in lhs.values().iter().zip(rhs.values().iter()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn length_of_circles_and_scaling() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        assert_abs_diff_eq!(c.length(), TWO_PI, epsilon = 1e-10);
        let c = circle(64, 2.0, DerivScheme::Spectral);
        assert_abs_diff_eq!(c.length(), 2.0 * TWO_PI, epsilon = 1e-10);
        // length(lambda c) = lambda length(c)
        let e = ellipse(128, 2.0, 1.0, DerivScheme::Spectral);
        let lam = 3.7;
        let scaled = DiscreteCurve::new(e.samples() * lam, DerivScheme::Spectral).unwrap();
        assert_abs_diff_eq!(scaled.length(), lam * e.length(), epsilon = 1e-12 * e.length() * lam);
    }

    #[test]
    fn ellipse_circumference_against_quadrature_oracle() {
        // Oracle: trapezoid quadrature of the exact speed at high resolution.
        let oracle = {
            let n = 1 << 16;
            let mut acc = 0.0;
            for i in 0..n {
                let th = TWO_PI * i as f64 / n as f64;
                acc += (4.0 * th.sin().powi(2) + th.cos().powi(2)).sqrt();
            }
            acc * TWO_PI / n as f64
        };
        // Frozen value from the oracle (complete elliptic integral, 8 E(3/4)).
        assert_abs_diff_eq!(oracle, 9.688448220547675, epsilon = 1e-9);
        let c = ellipse(256, 2.0, 1.0, DerivScheme::Spectral);
        assert_abs_diff_eq!(c.length(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn quadrature_exact_on_band_limited() {
        // Trapezoid rule on the periodic grid integrates trig polynomials of
        // degree < M exactly: int sin^2(3 t) dt = pi.
        let f = ScalarField::from_fn(32, |t| (3.0 * t).sin().powi(2));
        let integral = TWO_PI / 32.0 * f.values().sum();
        assert_abs_diff_eq!(integral, PI, epsilon = 1e-12);
    }

    #[test]
    fn norm_constant_field_l2_ds() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        let w = TangentField::constant(64, &[3.0, 4.0]);
        let n = c.norm(&w, NormKind::L2Arc, 1).unwrap();
        assert_abs_diff_eq!(n, TWO_PI.sqrt() * 5.0, epsilon = 1e-12);
    }

    #[test]
    fn norm_weighted_identity() {
        // || u sqrt(|c'|) ||_{L2(dtheta)} = || u ||_{L2(ds)}
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let c = crate::verify::random_curve(&mut rng, 64, 2, DerivScheme::Spectral);
            let m = c.m();
            let phase: f64 = rng.random_range(0.0..1.0);
            let u = ScalarField::from_fn(m, move |t| (2.0 * t).sin() + 0.3 * (5.0 * t + phase).cos());
            let speed = c.speed();
            let weighted = ScalarField::new(Array1::from_iter(
                u.values().iter().zip(speed.values().iter()).map(|(x, s)| x * s.sqrt()),
            ))
            .unwrap();
            let lhs = c.norm_scalar(&weighted, NormKind::L2Theta, 1).unwrap();
            let rhs = c.norm_scalar(&u, NormKind::L2Arc, 1).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12 * rhs.max(1.0));
        }
    }

    #[test]
    fn norm_h2_theta_of_sine() {
        // f = sin(theta) on the unit circle: H^2(dtheta)^2 = pi + pi.
        let c = circle(64, 1.0, DerivScheme::Spectral);
        let f = ScalarField::from_fn(64, |t| t.sin());
        let n = c.norm_scalar(&f, NormKind::SobolevTheta, 2).unwrap();
        assert_abs_diff_eq!(n * n, TWO_PI, epsilon = 1e-10);
    }

    #[test]
    fn norm_rejects_zero_order() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        let f = ScalarField::from_fn(64, |t| t.sin());
        assert!(c.norm_scalar(&f, NormKind::SobolevTheta, 0).is_err());
    }

    #[test]
    fn constant_speed_reparam_fixes_ellipse() {
        let e = ellipse(256, 2.0, 1.0, DerivScheme::Spectral);
        let (c, phi) = e.constant_speed_reparam().unwrap();
        let sp = c.speed();
        let max = sp.values().iter().cloned().fold(f64::MIN, f64::max);
        let min = sp.values().iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min <= 1.0 + 1e-6, "speed ratio {}", max / min);
        assert_abs_diff_eq!(c.length(), e.length(), epsilon = 1e-8 * e.length());
        assert_abs_diff_eq!(phi.shift(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_speed_reparam_is_identity_on_circle() {
        let c = circle(64, 1.0, DerivScheme::Spectral);
        let (r, _) = c.constant_speed_reparam().unwrap();
        for (a, b) in r.samples().iter().zip(c.samples().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_speed_reparam_preserves_length_randomly() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100 {
            let c = crate::verify::random_curve(&mut rng, 128, 2 + (trial % 2), DerivScheme::Spectral);
            let (r, _) = c.constant_speed_reparam().unwrap();
            let rel = (r.length() - c.length()).abs() / c.length();
            assert!(rel <= 1e-8, "trial {trial}: relative length change {rel}");
        }
    }

    #[test]
    fn winding_numbers() {
        assert_eq!(circle(64, 1.0, DerivScheme::Spectral).winding_number().unwrap(), 1);
        assert_eq!(double_circle(128, DerivScheme::Spectral).winding_number().unwrap(), 2);
        assert_eq!(figure_eight(128, DerivScheme::Spectral).winding_number().unwrap(), 0);
        let c3 = crate::shapes::circle3d(64, DerivScheme::Spectral);
        assert!(matches!(c3.winding_number(), Err(Error::NotPlanar { .. })));
    }

    #[test]
    fn grid_shift_equivariance_is_exact() {
        // Rotating samples by whole grid cells commutes with speed and D_s.
        let e = ellipse(64, 2.0, 1.0, DerivScheme::Spectral);
        let k = 5;
        let m = e.m();
        let mut shifted = Array2::zeros((m, 2));
        for i in 0..m {
            for j in 0..2 {
                shifted[[i, j]] = e.samples()[[(i + k) % m, j]];
            }
        }
        let es = DiscreteCurve::new(shifted, DerivScheme::Spectral).unwrap();
        let sp = e.speed();
        let sps = es.speed();
        for i in 0..m {
            // Spectral FFT differentiation of a rotated sequence agrees to
            // roundoff, not bit-exactly; the tolerance reflects that.
            assert_abs_diff_eq!(sps.values()[i], sp.values()[(i + k) % m], epsilon = 1e-13);
        }
        let h = e.as_tangent();
        let hs = es.as_tangent();
        let d = e.arc_derivative(&h, 2).unwrap();
        let ds = es.arc_derivative(&hs, 2).unwrap();
        for i in 0..m {
            for j in 0..2 {
                assert_abs_diff_eq!(ds.values()[[i, j]], d.values()[[(i + k) % m, j]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn theta_derivative_examples() {
        let f = ScalarField::from_fn(64, |t| t.sin());
        let df = f.theta_derivative(DerivScheme::Spectral).unwrap();
        for (i, &x) in df.values().iter().enumerate() {
            let th = TWO_PI * i as f64 / 64.0;
            assert_abs_diff_eq!(x, th.cos(), epsilon = 1e-12);
        }
        let g = ScalarField::from_fn(40, |_| 2.0);
        let dg = g.theta_derivative(DerivScheme::Central4).unwrap();
        for &x in dg.values() {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-14);
        }
    }
}
