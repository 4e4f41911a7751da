//! Executable numerical checks of the inequalities the library's analysis
//! rests on: Poincare inequalities, the Gronwall corollary, uniform norm
//! equivalence on metric balls, the bi-Lipschitz path bound, speed drift
//! along paths, and long-horizon stability of the geodesic flow.
//!
//! Every check is deterministic given its seed and reports the worst margin
//! (right-hand side minus left-hand side) over its trials.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{DiscreteCurve, NormKind, ScalarField, TangentField, TWO_PI};
use crate::error::{Error, Result};
use crate::geodesic::{
    exp_map_detailed, path_length, CurvePath, ExpOptions, GeodesicResult,
};
use crate::metric::{metric_inner, MetricOp, MetricSpec, MetricVariant};
use crate::scheme::{circulant_symbol, DerivScheme};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    /// Minimum of RHS - LHS (or of the applicable slack) over all trials.
    pub worst_margin: f64,
    pub pass: bool,
    pub seed: u64,
}

impl CheckReport {
    fn new(name: &str, trials: usize, worst_margin: f64, tol: f64, seed: u64) -> Self {
        CheckReport {
            name: name.to_string(),
            trials,
            worst_margin,
            pass: worst_margin >= -tol,
            seed,
        }
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Random immersed curve: a circle plus band-limited perturbations with
/// cubically decaying mode amplitudes.
pub fn random_curve<R: Rng>(rng: &mut R, m: usize, dim: usize, scheme: DerivScheme) -> DiscreteCurve {
    let mut scale = 0.3;
    loop {
        let mut samples = Array2::zeros((m, dim));
        let mut modes = Vec::new();
        for _ in 0..dim {
            let per_dim: Vec<(f64, f64, f64)> = (1..=6)
                .map(|k| {
                    let kf = k as f64;
                    (
                        kf,
                        rng.random_range(-1.0..1.0) * scale / (kf * kf * kf),
                        rng.random_range(-1.0..1.0) * scale / (kf * kf * kf),
                    )
                })
                .collect();
            modes.push(per_dim);
        }
        for i in 0..m {
            let t = TWO_PI * i as f64 / m as f64;
            samples[[i, 0]] = t.cos();
            samples[[i, 1]] = t.sin();
            for (j, per_dim) in modes.iter().enumerate() {
                samples[[i, j]] += per_dim
                    .iter()
                    .map(|(k, a, b)| a * (k * t).cos() + b * (k * t).sin())
                    .sum::<f64>();
            }
        }
        if let Ok(c) = DiscreteCurve::new(samples, scheme) {
            let min_speed = c.speed().values().iter().cloned().fold(f64::INFINITY, f64::min);
            if min_speed >= 0.2 {
                return c;
            }
        }
        scale *= 0.7;
    }
}

/// Band-limited tangent field with spectral decay exponent 3.
pub fn random_band_limited_field<R: Rng>(
    rng: &mut R,
    m: usize,
    dim: usize,
    max_mode: usize,
) -> TangentField {
    let mut values = Array2::zeros((m, dim));
    for j in 0..dim {
        let c0: f64 = rng.random_range(-1.0..1.0);
        let modes: Vec<(f64, f64, f64)> = (1..=max_mode)
            .map(|k| {
                let kf = k as f64;
                let decay = (1.0 + kf).powi(3);
                (
                    kf,
                    rng.random_range(-1.0..1.0) / decay,
                    rng.random_range(-1.0..1.0) / decay,
                )
            })
            .collect();
        for i in 0..m {
            let t = TWO_PI * i as f64 / m as f64;
            values[[i, j]] = c0
                + modes
                    .iter()
                    .map(|(k, a, b)| a * (k * t).cos() + b * (k * t).sin())
                    .sum::<f64>();
        }
    }
    TangentField::new(values).expect("finite by construction")
}

/// Random tangent field normalized to unit metric norm.
pub fn random_unit_field<R: Rng>(
    rng: &mut R,
    spec: &MetricSpec,
    curve: &DiscreteCurve,
    max_mode: usize,
) -> Result<TangentField> {
    let h = random_band_limited_field(rng, curve.m(), curve.dim(), max_mode);
    let g = metric_inner(spec, curve, &h, &h)?;
    Ok(h.scale(1.0 / g.sqrt()))
}

// ---------------------------------------------------------------------------
// Poincare inequalities
// ---------------------------------------------------------------------------

/// Margins of the three Poincare inequalities for one scalar field on one
/// curve: (i) sup bound on h, (ii) sup bound on D_s h, (iii) the
/// constant-free L^2 interpolation bound for 0 <= k <= n.
fn poincare_margins(c: &DiscreteCurve, u: &ScalarField, n: usize) -> Result<Vec<f64>> {
    let len = c.length();
    let sup_sq = |f: &ScalarField| -> f64 {
        f.values().iter().map(|x| x * x).fold(0.0, f64::max)
    };
    let l2ds_sq = |f: &ScalarField| -> Result<f64> {
        Ok(c.norm_scalar(f, NormKind::L2Arc, 1)?.powi(2))
    };
    let d1 = c.arc_derivative_scalar(u, 1)?;
    let d2 = c.arc_derivative_scalar(u, 2)?;
    let mut margins = Vec::with_capacity(3 + n + 1);
    // (i)  ||h||_inf^2 <= (2/len) ||h||^2 + (len/2) ||D_s h||^2
    margins.push(2.0 / len * l2ds_sq(u)? + len / 2.0 * l2ds_sq(&d1)? - sup_sq(u));
    // (ii) ||D_s h||_inf^2 <= (len/4) ||D_s^2 h||^2
    margins.push(len / 4.0 * l2ds_sq(&d2)? - sup_sq(&d1));
    // (iii) ||D_s^k h||^2 <= ||h||^2 + ||D_s^n h||^2 for 0 <= k <= n
    let dn = c.arc_derivative_scalar(u, n)?;
    let rhs = l2ds_sq(u)? + l2ds_sq(&dn)?;
    for k in 0..=n {
        let dk = c.arc_derivative_scalar(u, k)?;
        margins.push(rhs - l2ds_sq(&dk)?);
    }
    Ok(margins)
}

/// Seeded sweep of the Poincare inequalities on random curves and random
/// band-limited fields; tolerance 1e-8 absorbs discretization error.
pub fn poincare_suite(trials: usize, seed: u64, m: usize, n: usize) -> CheckReport {
    let worst = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let c = random_curve(&mut rng, m, 2, DerivScheme::Spectral);
            let field = random_band_limited_field(&mut rng, m, 2, (m / 8).max(4));
            let mut local = f64::INFINITY;
            for j in 0..2 {
                let u = ScalarField::new(Array1::from_iter(
                    field.values().column(j).iter().cloned(),
                ))
                .expect("finite");
                let margins = poincare_margins(&c, &u, n).expect("valid inputs");
                for v in margins {
                    local = local.min(v);
                }
            }
            local
        })
        .reduce(|| f64::INFINITY, f64::min);
    CheckReport::new("poincare", trials, worst, 1e-8, seed)
}

// ---------------------------------------------------------------------------
// Gronwall corollary
// ---------------------------------------------------------------------------

/// Sampled data for the Gronwall corollary: A(t) <= A(0) + int (alpha + beta A) G.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GronwallCase {
    pub grid: Vec<f64>,
    pub a: Vec<f64>,
    pub g: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl GronwallCase {
    pub fn new(grid: Vec<f64>, a: Vec<f64>, g: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let case = GronwallCase { grid, a, g, alpha, beta };
        case.validate()?;
        Ok(case)
    }

    fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        if n < 2 || self.a.len() != n || self.g.len() != n {
            return Err(Error::InvalidInput("grid, A and G must share a length >= 2".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid must be strictly increasing".into()));
        }
        if self.g.iter().any(|&g| g < 0.0) {
            return Err(Error::InvalidInput("G must be nonnegative".into()));
        }
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::InvalidInput("alpha and beta must be nonnegative".into()));
        }
        // Hypothesis check by trapezoid quadrature. The tolerance covers the
        // O(h^2) quadrature error for cases generated from the exact ODE.
        let scale = self.a.iter().fold(1.0f64, |acc, &x| acc.max(x.abs()));
        let tol = 1e-4 * scale;
        let mut integral = 0.0;
        for i in 1..n {
            let h = self.grid[i] - self.grid[i - 1];
            let f0 = (self.alpha + self.beta * self.a[i - 1]) * self.g[i - 1];
            let f1 = (self.alpha + self.beta * self.a[i]) * self.g[i];
            integral += 0.5 * h * (f0 + f1);
            if self.a[i] > self.a[0] + integral + tol {
                return Err(Error::InvalidInput(format!(
                    "Gronwall hypothesis violated at t = {}: A = {} > {}",
                    self.grid[i],
                    self.a[i],
                    self.a[0] + integral
                )));
            }
        }
        Ok(())
    }
}

/// Checks the explicit bound A(t) <= A(0) + (alpha + (A(0) + alpha N) beta
/// e^{beta N}) int_0^t G with N = int_0^T G.
pub fn gronwall_check(case: &GronwallCase) -> Result<CheckReport> {
    case.validate()?;
    let n = case.grid.len();
    let mut cum_g = vec![0.0; n];
    for i in 1..n {
        let h = case.grid[i] - case.grid[i - 1];
        cum_g[i] = cum_g[i - 1] + 0.5 * h * (case.g[i - 1] + case.g[i]);
    }
    let big_n = cum_g[n - 1];
    let factor = case.alpha + (case.a[0] + case.alpha * big_n) * case.beta * (case.beta * big_n).exp();
    let mut worst = f64::INFINITY;
    for i in 0..n {
        let bound = case.a[0] + factor * cum_g[i];
        worst = worst.min(bound - case.a[i]);
    }
    Ok(CheckReport::new("gronwall", 1, worst, 1e-8, 0))
}

/// Generates a case by integrating A' = (alpha + beta A) G exactly on a
/// piecewise-linear G, so the hypothesis holds with equality.
pub fn random_gronwall_case<R: Rng>(rng: &mut R) -> GronwallCase {
    let n = 160;
    let t_final: f64 = rng.random_range(0.5..2.0);
    let grid: Vec<f64> = (0..n).map(|i| t_final * i as f64 / (n - 1) as f64).collect();
    // Piecewise-linear G >= 0 from a handful of random breakpoints.
    let breaks = 6;
    let bvals: Vec<f64> = (0..breaks).map(|_| rng.random_range(0.0..1.5)).collect();
    let g: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let x = t / t_final * (breaks - 1) as f64;
            let i = (x as usize).min(breaks - 2);
            let frac = x - i as f64;
            bvals[i] * (1.0 - frac) + bvals[i + 1] * frac
        })
        .collect();
    let alpha: f64 = rng.random_range(0.0..1.2);
    let beta: f64 = rng.random_range(0.0..1.2);
    let a0: f64 = rng.random_range(0.0..2.0);
    let mut a = vec![a0; n];
    for i in 1..n {
        let h = grid[i] - grid[i - 1];
        let dq = 0.5 * h * (g[i - 1] + g[i]); // exact for linear G
        a[i] = if beta > 0.0 {
            ((alpha + beta * a[i - 1]) * (beta * dq).exp() - alpha) / beta
        } else {
            a[i - 1] + alpha * dq
        };
    }
    GronwallCase { grid, a, g, alpha, beta }
}

/// Seeded sweep of ODE-generated Gronwall cases.
pub fn gronwall_suite(trials: usize, seed: u64) -> CheckReport {
    let worst = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let case = random_gronwall_case(&mut rng);
            case.validate().expect("generated cases satisfy the hypothesis");
            gronwall_check(&case).expect("valid case").worst_margin
        })
        .reduce(|| f64::INFINITY, f64::min);
    CheckReport::new("gronwall", trials, worst, 1e-8, seed)
}

// ---------------------------------------------------------------------------
// Uniform equivalence on metric balls
// ---------------------------------------------------------------------------

/// Curves at a bounded geodesic distance from a center, each carrying the
/// path that certifies its distance, plus probe fields.
#[derive(Debug, Clone)]
pub struct BallSample {
    pub center: DiscreteCurve,
    pub radius: f64,
    pub members: Vec<CurvePath>,
    pub probes: Vec<TangentField>,
}

impl BallSample {
    /// Straight-segment members in random unit-metric directions, scaled so
    /// every certifying path stays inside the radius.
    pub fn generate(
        center: &DiscreteCurve,
        radius: f64,
        count: usize,
        spec: &MetricSpec,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members = Vec::with_capacity(count);
        let knots = 8;
        for _ in 0..count {
            let h = random_unit_field(&mut rng, spec, center, 6)?;
            let mut scale = radius * rng.random_range(0.3..0.9);
            let mut path = None;
            for _ in 0..40 {
                let curves: std::result::Result<Vec<DiscreteCurve>, Error> = (0..=knots)
                    .map(|i| {
                        let t = i as f64 / knots as f64;
                        DiscreteCurve::with_threshold(
                            center.samples() + &h.values().mapv(|x| x * t * scale),
                            center.scheme(),
                            center.immersion_threshold(),
                        )
                    })
                    .collect();
                if let Ok(curves) = curves {
                    let cand = CurvePath::uniform(curves)?;
                    if path_length(&cand, spec)? <= radius {
                        path = Some(cand);
                        break;
                    }
                }
                scale *= 0.8;
            }
            members.push(path.ok_or_else(|| {
                Error::SolverFailure("could not fit a certifying path inside the ball".into())
            })?);
        }
        let probes = (0..count)
            .map(|_| random_band_limited_field(&mut rng, center.m(), center.dim(), 8))
            .collect();
        let sample = BallSample { center: center.clone(), radius, members, probes };
        sample.validate(spec)?;
        Ok(sample)
    }

    /// Recomputes every certifying path length and checks it fits the radius.
    pub fn validate(&self, spec: &MetricSpec) -> Result<()> {
        for path in &self.members {
            if path.first().samples() != self.center.samples() {
                return Err(Error::InvalidInput("certifying path does not start at the center".into()));
            }
            let len = path_length(path, spec)?;
            if len > self.radius * (1.0 + 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "certifying path length {len} exceeds radius {}",
                    self.radius
                )));
            }
        }
        Ok(())
    }

    pub fn curves(&self) -> Vec<&DiscreteCurve> {
        let mut out = vec![&self.center];
        out.extend(self.members.iter().map(|p| p.last()));
        out
    }
}

/// Fourier symbol of the H^n(dtheta) Gram operator K = I + (D^n)^T D^n,
/// built from the scheme's own derivative so the operator is exactly the
/// norm's.
fn hn_gram_symbol(m: usize, n: usize, scheme: DerivScheme) -> Vec<num_complex::Complex<f64>> {
    circulant_symbol(m, |impulse| {
        let col = Array1::from_vec(impulse.to_vec());
        let mut d = col.clone();
        for _ in 0..n {
            d = crate::scheme::d_theta_vec(&d, scheme);
        }
        // (D^T)^n = (-D)^n applied to D^n impulse.
        let mut w = d;
        for _ in 0..n {
            w = crate::scheme::d_theta_vec(&w, scheme).mapv(|x| -x);
        }
        (0..m).map(|i| col[i] + w[i]).collect()
    })
}

fn apply_symbol(symbol: &[num_complex::Complex<f64>], v: &Array1<f64>) -> Array1<f64> {
    let m = v.len();
    let mut buf: Vec<num_complex::Complex<f64>> =
        v.iter().map(|&x| num_complex::Complex::new(x, 0.0)).collect();
    crate::scheme::fft_forward(&mut buf);
    for (z, s) in buf.iter_mut().zip(symbol.iter()) {
        *z *= s / m as f64;
    }
    crate::scheme::fft_inverse(&mut buf);
    Array1::from_iter(buf.iter().map(|z| z.re))
}

/// Extremal generalized Rayleigh quotients of G against the H^n(dtheta)
/// inner product on scalar fields (the metric acts componentwise, so the
/// vector-field extremes coincide). The problem L x = lambda K x is
/// symmetrized to K^{-1/2} L K^{-1/2} through the Gram symbol and handed to
/// an iterative symmetric eigensolver; power iteration is unreliable here
/// because the spectrum clusters near 1 on curves close to the unit circle.
/// Returns (lambda_min, lambda_max).
fn rayleigh_extremes(spec: &MetricSpec, curve: &DiscreteCurve) -> Result<(f64, f64)> {
    let m = curve.m();
    let op = MetricOp::new(spec, curve);
    let gram = hn_gram_symbol(m, spec.order(), curve.scheme());
    if gram.iter().any(|z| z.re <= 0.0 || z.im.abs() > 1e-8 * z.re.abs().max(1.0)) {
        return Err(Error::SolverFailure("Gram symbol not positive".into()));
    }
    let inv_sqrt: Vec<num_complex::Complex<f64>> = gram
        .iter()
        .map(|z| num_complex::Complex::new(1.0 / z.re.sqrt(), 0.0))
        .collect();
    let mut dense = nalgebra::DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let mut e = Array1::zeros(m);
        e[i] = 1.0;
        let w = apply_symbol(&inv_sqrt, &e);
        let col = w.into_shape_with_order((m, 1)).expect("reshape");
        let lw = op.apply(&col);
        let lw = Array1::from_iter(lw.column(0).iter().cloned());
        let out = apply_symbol(&inv_sqrt, &lw);
        for r in 0..m {
            dense[(r, i)] = out[r];
        }
    }
    // Symmetrize away FFT roundoff before the eigensolve.
    let sym = (&dense + dense.transpose()) * 0.5;
    let eigen = nalgebra::SymmetricEigen::new(sym);
    let mut lmin = f64::INFINITY;
    let mut lmax = f64::NEG_INFINITY;
    for &l in eigen.eigenvalues.iter() {
        lmin = lmin.min(l);
        lmax = lmax.max(l);
    }
    if !(lmin.is_finite() && lmax.is_finite()) {
        return Err(Error::SolverFailure("eigen-iteration produced non-finite values".into()));
    }
    Ok((lmin, lmax))
}

/// Equivalence constant of one curve: the smallest C with
/// C^{-1} ||h||_{H^n(dtheta)} <= sqrt(G(h,h)) <= C ||h||_{H^n(dtheta)}.
pub fn equivalence_constant(spec: &MetricSpec, curve: &DiscreteCurve) -> Result<f64> {
    let (lmin, lmax) = rayleigh_extremes(spec, curve)?;
    if lmin <= 0.0 {
        return Err(Error::SolverFailure("metric lost positivity in eigen-iteration".into()));
    }
    Ok(lmax.sqrt().max(1.0 / lmin.sqrt()))
}

/// Uniform equivalence over a ball sample: per-curve extremal Rayleigh
/// quotients, the reported constants, and a refinement-stability report
/// (M -> 2M must change the constant by at most a factor of 2).
pub fn equivalence_constants(
    sample: &BallSample,
    spec: &MetricSpec,
) -> Result<(f64, f64, CheckReport)> {
    let curves = sample.curves();
    let mut c_lower: f64 = 0.0;
    let mut c_upper: f64 = 0.0;
    let mut worst_margin = f64::INFINITY;
    for curve in &curves {
        let (lmin, lmax) = rayleigh_extremes(spec, curve)?;
        if lmin <= 0.0 || !lmin.is_finite() || !lmax.is_finite() {
            return Err(Error::SolverFailure("non-finite Rayleigh extremes".into()));
        }
        c_lower = c_lower.max(1.0 / lmin.sqrt());
        c_upper = c_upper.max(lmax.sqrt());
        // Stability under grid refinement.
        let fine = curve.resampled(2 * curve.m())?;
        let (fmin, fmax) = rayleigh_extremes(spec, &fine)?;
        let coarse = lmax.sqrt().max(1.0 / lmin.sqrt());
        let refined = fmax.sqrt().max(1.0 / fmin.sqrt());
        let ratio = (refined / coarse).max(coarse / refined);
        worst_margin = worst_margin.min(2.0 - ratio);
    }
    let report = CheckReport::new("uniform_equivalence", curves.len(), worst_margin, 0.0, 0);
    Ok((c_lower, c_upper, report))
}

// ---------------------------------------------------------------------------
// Bi-Lipschitz path bound
// ---------------------------------------------------------------------------

/// Checks || c(0) - c(1) ||_{H^n(dtheta)} <= C L(path) on a converged
/// boundary-value result, with C the lower-equivalence constant taken over
/// the midpoint curves of the path (the discrete chain of the inequality).
pub fn dist_lower_bound_check(result: &GeodesicResult, spec: &MetricSpec) -> Result<CheckReport> {
    let path = &result.path;
    let mut c_bound: f64 = 0.0;
    for i in 0..path.intervals() {
        let mid = DiscreteCurve::with_threshold(
            (path.curves()[i].samples() + path.curves()[i + 1].samples()).mapv(|x| 0.5 * x),
            path.first().scheme(),
            path.first().immersion_threshold(),
        )?;
        let (lmin, _) = rayleigh_extremes(spec, &mid)?;
        if lmin <= 0.0 {
            return Err(Error::SolverFailure("metric lost positivity".into()));
        }
        c_bound = c_bound.max(1.0 / lmin.sqrt());
    }
    let lhs = path.first().flat_sobolev_distance(path.last(), spec.order())?;
    let length = path_length(path, spec)?;
    let margin = c_bound * length - lhs;
    Ok(CheckReport::new("dist_lower_bound", 1, margin, 1e-6, 0))
}

// ---------------------------------------------------------------------------
// Speed drift along paths
// ---------------------------------------------------------------------------

/// Bound on |log |c'|| drift along a path: pointwise changes of log-speed
/// between adjacent knots accumulate at most
/// sqrt(len / (4 a')) sqrt(G(w, w)) dt per interval, where a' = a_2 for
/// order 2 and the harmonic combination of a_0, a_n otherwise (chained
/// through the constant-free Poincare bound).
pub fn speed_drift_check(path: &CurvePath, spec: &MetricSpec) -> Result<CheckReport> {
    if spec.variant() != MetricVariant::Constant {
        return Err(Error::InvalidMetric(
            "speed drift bound requires a constant-coefficient metric".into(),
        ));
    }
    let n = spec.order();
    let a = spec.coeffs();
    let a_eff = if n == 2 {
        a[2]
    } else {
        1.0 / (1.0 / a[0] + 1.0 / a[n])
    };
    let log_speed = |c: &DiscreteCurve| -> Vec<f64> {
        c.speed().values().iter().map(|s| s.ln()).collect()
    };
    let base = log_speed(path.first());
    let mut bound_acc = 0.0;
    let mut worst = f64::INFINITY;
    for i in 0..path.intervals() {
        let dt = path.times()[i + 1] - path.times()[i];
        let a_curve = &path.curves()[i];
        let b_curve = &path.curves()[i + 1];
        let mid = DiscreteCurve::with_threshold(
            (a_curve.samples() + b_curve.samples()).mapv(|x| 0.5 * x),
            a_curve.scheme(),
            a_curve.immersion_threshold(),
        )?;
        let w = TangentField::new((b_curve.samples() - a_curve.samples()).mapv(|x| x / dt))?;
        let g = metric_inner(spec, &mid, &w, &w)?;
        let len = a_curve.length().max(b_curve.length()).max(mid.length());
        bound_acc += dt * (len / (4.0 * a_eff) * g.max(0.0)).sqrt();
        let cur = log_speed(b_curve);
        let drift = cur
            .iter()
            .zip(base.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.min(bound_acc - drift);
    }
    Ok(CheckReport::new("speed_drift", path.intervals(), worst, 1e-6, 0))
}

// ---------------------------------------------------------------------------
// Long-horizon initial value runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IvpLongrunReport {
    pub check: CheckReport,
    pub min_speed: f64,
    pub energy_drift: f64,
    pub max_sobolev_norm: f64,
    pub blowup_time: Option<f64>,
}

/// Integrates the geodesic flow to T_long and reports immersion margin,
/// relative energy drift, and the largest H^n(dtheta) norm seen.
pub fn ivp_longrun_check(
    c0: &DiscreteCurve,
    u0: &TangentField,
    spec: &MetricSpec,
    t_long: f64,
    steps: usize,
) -> IvpLongrunReport {
    let opts = ExpOptions {
        steps,
        save_every: (steps / 200).max(1),
        ..ExpOptions::default()
    };
    match exp_map_detailed(c0, u0, spec, t_long, &opts) {
        Ok((path, samples)) => {
            let e0 = samples[0].energy;
            let drift = samples
                .iter()
                .map(|s| (s.energy - e0).abs() / e0.abs().max(1e-300))
                .fold(0.0, f64::max);
            let min_speed = samples.iter().map(|s| s.min_speed).fold(f64::INFINITY, f64::min);
            let max_norm = path
                .curves()
                .iter()
                .map(|c| {
                    c.norm(&c.as_tangent(), NormKind::SobolevTheta, spec.order())
                        .unwrap_or(f64::INFINITY)
                })
                .fold(0.0, f64::max);
            let margin = (min_speed - c0.immersion_threshold()).min(1e-2 - drift);
            let pass = margin >= 0.0 && max_norm.is_finite();
            IvpLongrunReport {
                check: CheckReport { name: "ivp_longrun".into(), trials: 1, worst_margin: margin, pass, seed: 0 },
                min_speed,
                energy_drift: drift,
                max_sobolev_norm: max_norm,
                blowup_time: None,
            }
        }
        Err(e) => {
            let t = match &e {
                Error::SolverFailure(msg) => msg
                    .split("t = ")
                    .nth(1)
                    .and_then(|s| s.split(':').next())
                    .and_then(|s| s.trim().parse().ok()),
                _ => None,
            };
            IvpLongrunReport {
                check: CheckReport {
                    name: "ivp_longrun".into(),
                    trials: 1,
                    worst_margin: f64::NEG_INFINITY,
                    pass: false,
                    seed: 0,
                },
                min_speed: f64::NAN,
                energy_drift: f64::NAN,
                max_sobolev_norm: f64::NAN,
                blowup_time: t,
            }
        }
    }
}

/// Seeded suite of unit-energy long-horizon runs.
pub fn ivp_longrun_suite(
    count: usize,
    seed: u64,
    m: usize,
    spec: &MetricSpec,
    t_long: f64,
    steps: usize,
) -> Result<CheckReport> {
    let mut worst = f64::INFINITY;
    for trial in 0..count as u64 {
        let mut rng = trial_rng(seed, trial);
        let c0 = random_curve(&mut rng, m, 2, DerivScheme::Spectral);
        let u0 = random_unit_field(&mut rng, spec, &c0, 5)?;
        let report = ivp_longrun_check(&c0, &u0, spec, t_long, steps);
        worst = worst.min(report.check.worst_margin);
    }
    Ok(CheckReport::new("ivp_longrun", count, worst, 0.0, seed))
}
