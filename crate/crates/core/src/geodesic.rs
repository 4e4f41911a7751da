//! Path energy and length, the geodesic boundary-value solver, and the
//! geodesic initial-value flow (exponential map) with its inverse.
//!
//! The boundary-value problem is solved by direct energy minimization over
//! the interior knots of a time-discretized path ("path straightening"),
//! with an L-BFGS update preconditioned by the circulant approximation of
//! the metric operator. The initial-value problem integrates the canonical
//! system
//!
//! ```text
//! dc/dt = u,            L_c u = m,
//! dm/dt = 1/2 grad_c G_c(u, u),
//! ```
//!
//! which is the geodesic equation in momentum form, m = sum_j (-1)^j a_j
//! |c'| D_s^{2j} c_t. Writing the right-hand side as half the curve gradient
//! of the energy density keeps the discrete energy G_c(c_t, c_t) exactly
//! conserved by the continuous-time flow, so the only drift left is the time
//! stepper's.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::curve::{inner_theta, DiscreteCurve, TangentField};
use crate::error::{Error, Result};
use crate::metric::{metric_gradient_impl, MetricOp, MetricSpec};

/// A time-discretized path of curves on [0, 1].
#[derive(Debug, Clone)]
pub struct CurvePath {
    times: Vec<f64>,
    curves: Vec<DiscreteCurve>,
}

impl CurvePath {
    pub fn new(times: Vec<f64>, curves: Vec<DiscreteCurve>) -> Result<Self> {
        if curves.len() < 2 || times.len() != curves.len() {
            return Err(Error::InvalidPath(format!(
                "need N >= 1 intervals with matching times, got {} times and {} curves",
                times.len(),
                curves.len()
            )));
        }
        if (times[0]).abs() > 1e-12 || (times[times.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPath("times must run from 0 to 1".into()));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidPath("times must be strictly increasing".into()));
            }
        }
        let (m, dim, scheme) = (curves[0].m(), curves[0].dim(), curves[0].scheme());
        for c in &curves {
            if c.m() != m || c.dim() != dim || c.scheme() != scheme {
                return Err(Error::InvalidPath(
                    "all knot curves must share M, dim and scheme".into(),
                ));
            }
        }
        Ok(CurvePath { times, curves })
    }

    pub fn uniform(curves: Vec<DiscreteCurve>) -> Result<Self> {
        let n = curves.len();
        if n < 2 {
            return Err(Error::InvalidPath("need at least two knots".into()));
        }
        let times = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self::new(times, curves)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn curves(&self) -> &[DiscreteCurve] {
        &self.curves
    }

    pub fn intervals(&self) -> usize {
        self.curves.len() - 1
    }

    pub fn first(&self) -> &DiscreteCurve {
        &self.curves[0]
    }

    pub fn last(&self) -> &DiscreteCurve {
        &self.curves[self.curves.len() - 1]
    }

    /// Knot nearest to path parameter t.
    pub fn at(&self, t: f64) -> &DiscreteCurve {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &ti) in self.times.iter().enumerate() {
            let d = (ti - t).abs();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        &self.curves[best]
    }

    /// Re-knots the times so the discrete speed sqrt(G(w_i, w_i)) is the same
    /// on every interval; afterwards L^2 = E exactly. Curves are unchanged.
    pub fn reparametrized_time(&self, spec: &MetricSpec) -> Result<CurvePath> {
        let n = self.intervals();
        let mut seg = Vec::with_capacity(n);
        for i in 0..n {
            let data = interval_data(spec, &self.curves[i], &self.curves[i + 1], self.times[i + 1] - self.times[i], false)?;
            // sqrt(G(dc, dc)) is time-parametrization invariant per interval.
            let dt = self.times[i + 1] - self.times[i];
            seg.push((data.energy_density * dt * dt).sqrt());
        }
        let total: f64 = seg.iter().sum();
        if total <= 0.0 {
            return Ok(self.clone());
        }
        let floor = 1e-12 * total / n as f64;
        let adjusted: Vec<f64> = seg.iter().map(|&s| s.max(floor)).collect();
        let sum: f64 = adjusted.iter().sum();
        let mut times = Vec::with_capacity(n + 1);
        times.push(0.0);
        let mut acc = 0.0;
        for s in &adjusted {
            acc += s / sum;
            times.push(acc.min(1.0));
        }
        times[n] = 1.0;
        CurvePath::new(times, self.curves.clone())
    }
}

/// The momentum m = L_c u conjugate to a velocity u along a curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    values: Array2<f64>,
}

impl Momentum {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "momentum" });
        }
        Ok(Momentum { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Lowers a velocity to its momentum, m = sum_j (-1)^j a_j |c'| D_s^{2j} u.
pub fn momentum(spec: &MetricSpec, curve: &DiscreteCurve, u: &TangentField) -> Result<Momentum> {
    let lu = crate::metric::apply_metric_operator(spec, curve, u)?;
    Momentum::new(lu.into_values())
}

/// Recovers the velocity from a momentum via the s.p.d. operator solve.
pub fn velocity_from_momentum(
    spec: &MetricSpec,
    curve: &DiscreteCurve,
    m: &Momentum,
    tol_rel: f64,
    max_iter: usize,
) -> Result<TangentField> {
    let rhs = TangentField::new(m.values.clone())?;
    crate::metric::solve_metric_operator(spec, curve, &rhs, None, tol_rel, max_iter)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
}

/// Output of the boundary-value solver.
#[derive(Debug, Clone)]
pub struct GeodesicResult {
    pub path: CurvePath,
    pub energy: f64,
    pub distance_estimate: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct BvpOptions {
    /// Number of time intervals N; the path has N+1 knots.
    pub knots: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Relative residual for conjugate-gradient solves inside the method.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            knots: 16,
            max_iter: 600,
            grad_tol: 1e-6,
            cg_tol: 1e-10,
            cg_max_iter: 4000,
            memory: 10,
        }
    }
}

struct IntervalData {
    /// G_{cbar}(w, w) with w the difference quotient of the interval.
    energy_density: f64,
    /// L_{cbar} w, kept only when gradients are requested.
    lw: Option<Array2<f64>>,
    /// grad_c G_{cbar}(w, w), kept only when gradients are requested.
    gamma: Option<Array2<f64>>,
}

fn midpoint_curve(a: &DiscreteCurve, b: &DiscreteCurve) -> Result<DiscreteCurve> {
    let mid = (a.samples() + b.samples()).mapv(|x| 0.5 * x);
    DiscreteCurve::with_threshold(mid, a.scheme(), a.immersion_threshold())
}

fn interval_data(
    spec: &MetricSpec,
    a: &DiscreteCurve,
    b: &DiscreteCurve,
    dt: f64,
    with_grad: bool,
) -> Result<IntervalData> {
    let mid = midpoint_curve(a, b)?;
    let w = (b.samples() - a.samples()).mapv(|x| x / dt);
    let op = MetricOp::new(spec, &mid);
    let energy_density = op.inner(&w, &w);
    if !with_grad {
        return Ok(IntervalData { energy_density, lw: None, gamma: None });
    }
    let lw = op.apply(&w);
    let gamma = metric_gradient_impl(&op, &mid, &w);
    Ok(IntervalData { energy_density, lw: Some(lw), gamma: Some(gamma) })
}

/// Discrete path energy, midpoint rule in time:
/// E = sum_i dt_i G_{cbar_i}(dc_i/dt_i, dc_i/dt_i).
pub fn path_energy(path: &CurvePath, spec: &MetricSpec) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..path.intervals() {
        let dt = path.times[i + 1] - path.times[i];
        let data = interval_data(spec, &path.curves[i], &path.curves[i + 1], dt, false)?;
        acc += dt * data.energy_density;
    }
    Ok(acc)
}

/// Discrete path length, L = sum_i dt_i sqrt(G_{cbar_i}(w_i, w_i)).
pub fn path_length(path: &CurvePath, spec: &MetricSpec) -> Result<f64> {
    let mut acc = 0.0;
    for i in 0..path.intervals() {
        let dt = path.times[i + 1] - path.times[i];
        let data = interval_data(spec, &path.curves[i], &path.curves[i + 1], dt, false)?;
        acc += dt * data.energy_density.max(0.0).sqrt();
    }
    Ok(acc)
}

fn compatible(c0: &DiscreteCurve, c1: &DiscreteCurve) -> Result<()> {
    if c0.m() != c1.m() || c0.dim() != c1.dim() {
        return Err(Error::ShapeMismatch {
            want_rows: c0.m(),
            want_cols: c0.dim(),
            got_rows: c1.m(),
            got_cols: c1.dim(),
        });
    }
    if c0.scheme() != c1.scheme() {
        return Err(Error::InvalidInput("endpoint curves use different schemes".into()));
    }
    if c0.dim() == 2 {
        let w0 = c0.winding_number()?;
        let w1 = c1.winding_number()?;
        if w0 != w1 {
            return Err(Error::WindingMismatch { left: w0, right: w1 });
        }
    }
    Ok(())
}

fn linear_knots(c0: &DiscreteCurve, c1: &DiscreteCurve, n: usize) -> Vec<Array2<f64>> {
    // c0 + t (c1 - c0): exact when the endpoints coincide, so that
    // distance(c, c) comes out as an exact zero.
    let diff = c1.samples() - c0.samples();
    (1..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            c0.samples() + &diff.mapv(|x| x * t)
        })
        .collect()
}

/// Builds a valid initial path. Linear interpolation first; when an
/// interpolated knot fails the immersion check, interpolate between the
/// constant-speed reparametrizations (with the best integer base shift)
/// instead.
fn initial_interior(
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    n: usize,
) -> Result<Vec<Array2<f64>>> {
    let check = |knots: &[Array2<f64>]| -> std::result::Result<(), usize> {
        for (i, k) in knots.iter().enumerate() {
            if DiscreteCurve::with_threshold(k.clone(), c0.scheme(), c0.immersion_threshold())
                .is_err()
            {
                return Err(i + 1);
            }
        }
        Ok(())
    };
    let lin = linear_knots(c0, c1, n);
    if check(&lin).is_ok() {
        return Ok(lin);
    }
    let (r0, _) = c0.constant_speed_reparam()?;
    let (r1, _) = c1.constant_speed_reparam()?;
    // Best cyclic sample rotation of r1 against r0 in the flat L^2 sense.
    let m = r0.m();
    let mut best_shift = 0usize;
    let mut best_cost = f64::INFINITY;
    for k in 0..m {
        let mut cost = 0.0;
        for i in 0..m {
            for j in 0..r0.dim() {
                let d = r0.samples()[[i, j]] - r1.samples()[[(i + k) % m, j]];
                cost += d * d;
            }
        }
        if cost < best_cost {
            best_cost = cost;
            best_shift = k;
        }
    }
    let mut rot = Array2::zeros((m, r0.dim()));
    for i in 0..m {
        for j in 0..r0.dim() {
            rot[[i, j]] = r1.samples()[[(i + best_shift) % m, j]];
        }
    }
    let mut knots = Vec::with_capacity(n - 1);
    for i in 1..n {
        let t = i as f64 / n as f64;
        knots.push(r0.samples().mapv(|x| x * (1.0 - t)) + rot.mapv(|x| x * t));
    }
    match check(&knots) {
        Ok(()) => Ok(knots),
        Err(knot) => Err(Error::ImmersionLostAtKnot { knot, iteration: 0 }),
    }
}

struct BvpProblem<'a> {
    spec: &'a MetricSpec,
    c0: &'a DiscreteCurve,
    c1: &'a DiscreteCurve,
    scheme: crate::scheme::DerivScheme,
    eps: f64,
    dt: f64,
    n: usize,
}

impl<'a> BvpProblem<'a> {
    /// Energy and, optionally, the per-knot L^2(dtheta) gradients.
    fn eval(
        &self,
        interior: &[Array2<f64>],
        with_grad: bool,
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        let n = self.n;
        let mut data = Vec::with_capacity(n);
        let knot_curve = |s: &Array2<f64>| {
            DiscreteCurve::with_threshold(s.clone(), self.scheme, self.eps)
        };
        let mut curves: Vec<DiscreteCurve> = Vec::with_capacity(n + 1);
        curves.push(self.c0.clone());
        for s in interior {
            curves.push(knot_curve(s)?);
        }
        curves.push(self.c1.clone());
        for i in 0..n {
            data.push(interval_data(self.spec, &curves[i], &curves[i + 1], self.dt, with_grad)?);
        }
        let energy: f64 = data.iter().map(|d| self.dt * d.energy_density).sum();
        if !with_grad {
            return Ok((energy, Vec::new()));
        }
        let mut grads = Vec::with_capacity(n - 1);
        for j in 1..n {
            let mut g = data[j - 1].gamma.as_ref().unwrap() + data[j].gamma.as_ref().unwrap();
            g.mapv_inplace(|x| x * self.dt / 2.0);
            let lw_prev = data[j - 1].lw.as_ref().unwrap();
            let lw_next = data[j].lw.as_ref().unwrap();
            g = g + (lw_prev - lw_next).mapv(|x| 2.0 * x);
            grads.push(g);
        }
        Ok((energy, grads))
    }
}

fn stack_dot(a: &[Array2<f64>], b: &[Array2<f64>]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| inner_theta(x, y)).sum()
}

pub fn solve_bvp(
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &BvpOptions,
) -> Result<GeodesicResult> {
    compatible(c0, c1)?;
    let interior = initial_interior(c0, c1, opts.knots)?;
    solve_bvp_from(c0, c1, spec, opts, interior)
}

/// Path straightening from a given set of interior knots.
pub(crate) fn solve_bvp_from(
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &BvpOptions,
    interior: Vec<Array2<f64>>,
) -> Result<GeodesicResult> {
    let n = opts.knots;
    if interior.len() + 1 != n {
        return Err(Error::InvalidInput(format!(
            "expected {} interior knots, got {}",
            n - 1,
            interior.len()
        )));
    }
    let problem = BvpProblem {
        spec,
        c0,
        c1,
        scheme: c0.scheme(),
        eps: c0.immersion_threshold(),
        dt: 1.0 / n as f64,
        n,
    };

    let assemble = |interior: &[Array2<f64>]| -> Result<CurvePath> {
        let mut curves = Vec::with_capacity(n + 1);
        curves.push(c0.clone());
        for s in interior {
            curves.push(DiscreteCurve::with_threshold(s.clone(), c0.scheme(), c0.immersion_threshold())?);
        }
        curves.push(c1.clone());
        CurvePath::uniform(curves)
    };

    let mut x = interior;
    let (mut energy, mut grad) = problem.eval(&x, true)?;
    let mut grad_norm = stack_dot(&grad, &grad).sqrt();
    let mut trace = vec![TraceEntry { iteration: 0, energy, gradient_norm: grad_norm }];

    if n == 1 || grad_norm <= opts.grad_tol {
        let path = assemble(&x)?;
        return Ok(GeodesicResult {
            energy,
            distance_estimate: energy.max(0.0).sqrt(),
            iterations: 0,
            gradient_norm: grad_norm,
            converged: true,
            trace,
            path,
        });
    }

    // The dominant Hessian block at knot j is about (4/dt) L_{c_j}; the
    // circulant approximation of its inverse is the L-BFGS seed matrix.
    let precondition = |x: &[Array2<f64>], g: &[Array2<f64>]| -> Vec<Array2<f64>> {
        let dt = problem.dt;
        x.iter()
            .zip(g.iter())
            .map(|(knot, gj)| {
                match DiscreteCurve::with_threshold(knot.clone(), c0.scheme(), c0.immersion_threshold()) {
                    Ok(curve) => {
                        let op = MetricOp::new(spec, &curve);
                        let symbol = op.preconditioner_symbol();
                        let (m, d) = gj.dim();
                        let mut out = Array2::zeros((m, d));
                        let mut col = vec![0.0; m];
                        let mut sol = vec![0.0; m];
                        for cix in 0..d {
                            for i in 0..m {
                                col[i] = gj[[i, cix]];
                            }
                            crate::scheme::solve_circulant(&symbol, &col, &mut sol);
                            for i in 0..m {
                                out[[i, cix]] = sol[i];
                            }
                        }
                        out.mapv(|v| v * dt / 4.0)
                    }
                    Err(_) => gj.clone(),
                }
            })
            .collect()
    };

    let mut history: Vec<(Vec<Array2<f64>>, Vec<Array2<f64>>, f64)> = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        // L-BFGS two-loop recursion.
        let mut q: Vec<Array2<f64>> = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * stack_dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y.iter()) {
                *qi = &*qi - &yi.mapv(|v| v * a);
            }
            alphas.push(a);
        }
        let mut r = precondition(&x, &q);
        for ((s, y, rho), &a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * stack_dot(y, &r);
            for (ri, si) in r.iter_mut().zip(s.iter()) {
                *ri = &*ri + &si.mapv(|v| v * (a - b));
            }
        }
        let mut dir: Vec<Array2<f64>> = r.into_iter().map(|g| g.mapv(|v| -v)).collect();
        let mut slope = stack_dot(&grad, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = precondition(&x, &grad).into_iter().map(|g| g.mapv(|v| -v)).collect();
            slope = stack_dot(&grad, &dir);
            if slope >= 0.0 {
                break; // no descent direction left
            }
        }

        // Backtracking Armijo line search; immersion failures reject the step.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<Array2<f64>> = x
                .iter()
                .zip(dir.iter())
                .map(|(xi, di)| xi + &di.mapv(|v| v * step))
                .collect();
            match problem.eval(&trial, false) {
                Ok((e_trial, _)) if e_trial <= energy + 1e-4 * step * slope => {
                    accepted = Some((trial, e_trial));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let (x_new, _) = match accepted {
            Some(v) => v,
            None => break, // line search stalled near the floor of f64 resolution
        };
        let (e_new, g_new) = problem.eval(&x_new, true)?;
        let s: Vec<Array2<f64>> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<Array2<f64>> = g_new.iter().zip(grad.iter()).map(|(a, b)| a - b).collect();
        let ys = stack_dot(&y, &s);
        if ys > 1e-14 * stack_dot(&y, &y).sqrt() * stack_dot(&s, &s).sqrt() {
            history.push((s, y, 1.0 / ys));
            if history.len() > opts.memory {
                history.remove(0);
            }
        }
        x = x_new;
        energy = e_new;
        grad = g_new;
        grad_norm = stack_dot(&grad, &grad).sqrt();
        trace.push(TraceEntry { iteration: iter, energy, gradient_norm: grad_norm });
        if grad_norm <= opts.grad_tol {
            converged = true;
            break;
        }
    }

    let path = assemble(&x)?;
    Ok(GeodesicResult {
        energy,
        distance_estimate: energy.max(0.0).sqrt(),
        iterations,
        gradient_norm: grad_norm,
        converged,
        trace,
        path,
    })
}

/// Geodesic distance as the square root of the converged path energy.
pub fn distance(
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &BvpOptions,
) -> Result<f64> {
    Ok(solve_bvp(c0, c1, spec, opts)?.distance_estimate)
}

#[derive(Debug, Clone)]
pub struct ExpOptions {
    pub steps: usize,
    /// Keep every k-th step in the returned path.
    pub save_every: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for ExpOptions {
    fn default() -> Self {
        ExpOptions { steps: 1000, save_every: 1, cg_tol: 1e-10, cg_max_iter: 4000 }
    }
}

/// One diagnostic sample along an initial-value integration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpSample {
    pub t: f64,
    pub energy: f64,
    pub min_speed: f64,
}

/// Geodesic initial-value flow over [0, T]; the returned path is indexed by
/// the normalized parameter t/T.
pub fn exp_map(
    c0: &DiscreteCurve,
    u0: &TangentField,
    spec: &MetricSpec,
    t_final: f64,
    steps: usize,
) -> Result<CurvePath> {
    let opts = ExpOptions { steps, ..ExpOptions::default() };
    Ok(exp_map_detailed(c0, u0, spec, t_final, &opts)?.0)
}

pub fn exp_map_detailed(
    c0: &DiscreteCurve,
    u0: &TangentField,
    spec: &MetricSpec,
    t_final: f64,
    opts: &ExpOptions,
) -> Result<(CurvePath, Vec<ExpSample>)> {
    if opts.steps == 0 {
        return Err(Error::InvalidInput("need at least one time step".into()));
    }
    let scheme = c0.scheme();
    let eps = c0.immersion_threshold();
    let dt = t_final / opts.steps as f64;

    let make_curve = |samples: &Array2<f64>, t: f64| -> Result<DiscreteCurve> {
        DiscreteCurve::with_threshold(samples.clone(), scheme, eps).map_err(|e| {
            Error::SolverFailure(format!("initial-value integration failed at t = {t:.4}: {e}"))
        })
    };

    // Right-hand side of the canonical system at (c, m); warm starts the
    // velocity solve with the supplied guess.
    let rhs = |samples: &Array2<f64>, m: &Array2<f64>, guess: &Array2<f64>, t: f64|
     -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        let curve = make_curve(samples, t)?;
        let op = MetricOp::new(spec, &curve);
        let (u, _) = op.solve(m, Some(guess), opts.cg_tol, opts.cg_max_iter)?;
        let gamma = metric_gradient_impl(&op, &curve, &u);
        Ok((u.clone(), gamma.mapv(|x| 0.5 * x), u))
    };

    let curve0 = c0.clone();
    let op0 = MetricOp::new(spec, &curve0);
    let mut c = c0.samples().clone();
    let mut m = op0.apply(u0.values());
    let mut guess = u0.values().clone();
    let energy0 = inner_theta(&m, u0.values());

    let mut saved_curves = vec![curve0];
    let mut saved_times = vec![0.0];
    let mut samples = vec![ExpSample {
        t: 0.0,
        energy: energy0,
        min_speed: c0.speed().values().iter().cloned().fold(f64::INFINITY, f64::min),
    }];

    for step in 0..opts.steps {
        let t = step as f64 * dt;
        let (k1c, k1m, g1) = rhs(&c, &m, &guess, t)?;
        let (k2c, k2m, g2) = rhs(
            &(&c + &k1c.mapv(|x| x * dt / 2.0)),
            &(&m + &k1m.mapv(|x| x * dt / 2.0)),
            &g1,
            t + dt / 2.0,
        )?;
        let (k3c, k3m, g3) = rhs(
            &(&c + &k2c.mapv(|x| x * dt / 2.0)),
            &(&m + &k2m.mapv(|x| x * dt / 2.0)),
            &g2,
            t + dt / 2.0,
        )?;
        let (k4c, k4m, g4) = rhs(
            &(&c + &k3c.mapv(|x| x * dt)),
            &(&m + &k3m.mapv(|x| x * dt)),
            &g3,
            t + dt,
        )?;
        c = &c + &(&(&k1c + &k4c) + &(&k2c + &k3c).mapv(|x| x * 2.0)).mapv(|x| x * dt / 6.0);
        m = &m + &(&(&k1m + &k4m) + &(&k2m + &k3m).mapv(|x| x * 2.0)).mapv(|x| x * dt / 6.0);
        guess = g4;

        let t_next = (step + 1) as f64 * dt;
        if (step + 1) % opts.save_every == 0 || step + 1 == opts.steps {
            let curve = make_curve(&c, t_next)?;
            let op = MetricOp::new(spec, &curve);
            let (u, _) = op.solve(&m, Some(&guess), opts.cg_tol, opts.cg_max_iter)?;
            guess = u.clone();
            let energy = inner_theta(&m, &u);
            let min_speed = curve.speed().values().iter().cloned().fold(f64::INFINITY, f64::min);
            samples.push(ExpSample { t: t_next, energy, min_speed });
            saved_curves.push(curve);
            saved_times.push(t_next / t_final);
        }
    }
    let n = saved_times.len();
    saved_times[0] = 0.0;
    saved_times[n - 1] = 1.0;
    let path = CurvePath::new(saved_times, saved_curves)?;
    Ok((path, samples))
}

#[derive(Debug, Clone)]
pub struct LogOptions {
    pub bvp: BvpOptions,
    pub shoot_steps: usize,
    pub shoot_iters: usize,
    /// Target endpoint miss relative to the distance.
    pub tol_rel: f64,
}

impl Default for LogOptions {
    fn default() -> Self {
        LogOptions {
            bvp: BvpOptions::default(),
            shoot_steps: 250,
            shoot_iters: 25,
            tol_rel: 1e-4,
        }
    }
}

/// Initial velocity of the minimizing path from c0 to c1, refined by shooting
/// so that exp_map(c0, log_map(c0, c1)) lands on c1.
pub fn log_map(
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &LogOptions,
) -> Result<TangentField> {
    let result = solve_bvp(c0, c1, spec, &opts.bvp)?;
    let dist = result.distance_estimate;
    if dist == 0.0 {
        return Ok(TangentField::zeros(c0.m(), c0.dim()));
    }
    let knots = result.path.curves();
    let dt = 1.0 / result.path.intervals() as f64;
    // Second-order one-sided difference for the initial velocity.
    let raw = if knots.len() >= 3 {
        (knots[1].samples().mapv(|x| 4.0 * x)
            - knots[2].samples()
            - knots[0].samples().mapv(|x| 3.0 * x))
        .mapv(|x| x / (2.0 * dt))
    } else {
        (knots[1].samples() - knots[0].samples()).mapv(|x| x / dt)
    };
    let mut u = TangentField::new(raw)?;
    // Scale so that ||u||_G = distance.
    let g = crate::metric::metric_inner(spec, c0, &u, &u)?;
    if g > 0.0 {
        u = u.scale(dist / g.sqrt());
    }

    let miss_norm = |endpoint: &DiscreteCurve| -> Result<f64> {
        c1.flat_sobolev_distance(endpoint, spec.order())
    };
    let exp_opts = ExpOptions {
        steps: opts.shoot_steps,
        save_every: opts.shoot_steps,
        ..ExpOptions::default()
    };
    let mut best = u.clone();
    let mut best_err = f64::INFINITY;
    for _ in 0..opts.shoot_iters {
        let (path, _) = exp_map_detailed(c0, &u, spec, 1.0, &exp_opts)?;
        let endpoint = path.last();
        let err = miss_norm(endpoint)?;
        if err < best_err {
            best_err = err;
            best = u.clone();
        }
        if err <= opts.tol_rel * dist {
            break;
        }
        // Endpoint correction pulled back along the (nearly isometric) flow.
        let miss = TangentField::new(c1.samples() - endpoint.samples())?;
        u = u.add(&miss);
    }
    Ok(best)
}
