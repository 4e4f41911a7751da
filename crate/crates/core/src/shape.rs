//! Reparametrization group action and the quotient (shape) distance.
//!
//! The shape distance dist(pi(c1), pi(c2)) = inf_phi dist(c1, c2 o phi) is
//! estimated in two stages: a dynamic-programming search over monotone
//! lattice paths and base-point shifts with a flat H^n(dtheta) proxy cost on
//! constant-speed normalized curves, followed by a polish stage that
//! alternates geodesic boundary-value solves with local diffeomorphism
//! updates driven by the endpoint gradient of the path energy. The result is
//! a certified upper bound on the infimum.

use ndarray::Array2;
use rayon::prelude::*;

use crate::curve::{DiscreteCurve, TWO_PI};
use crate::error::{Error, Result};
use crate::geodesic::{solve_bvp, solve_bvp_from, BvpOptions, GeodesicResult};
use crate::interp::PeriodicInterp;
use crate::metric::{metric_gradient_impl, MetricOp, MetricSpec};
use crate::scheme::{d_theta_mat, fft_forward, fft_inverse, wavenumber, DerivScheme};

/// Default monotonicity margin for discrete reparametrizations.
pub const DEFAULT_MONOTONE_MARGIN: f64 = 1e-6;

/// Largest allowed ratio between discrete derivative values of a diffeo; a
/// crude stand-in for H^n regularity of the reparametrization.
pub const MAX_DERIVATIVE_RATIO: f64 = 1e3;

/// Orientation-preserving reparametrization of the circle: a strictly
/// monotone lift sampled on the grid plus a base-point shift.
#[derive(Debug, Clone, PartialEq)]
pub struct Diffeo {
    knots: Vec<f64>,
    shift: f64,
}

impl Diffeo {
    pub fn new(knots: Vec<f64>, shift: f64) -> Result<Self> {
        Self::with_margin(knots, shift, DEFAULT_MONOTONE_MARGIN)
    }

    pub fn with_margin(knots: Vec<f64>, shift: f64, margin: f64) -> Result<Self> {
        let m = knots.len();
        if m < 3 {
            return Err(Error::InvalidInput("diffeo needs at least 3 knots".into()));
        }
        if knots.iter().any(|x| !x.is_finite()) || !shift.is_finite() {
            return Err(Error::NonFinite { context: "diffeo" });
        }
        let mut worst = f64::INFINITY;
        for i in 0..m {
            let next = if i + 1 < m { knots[i + 1] } else { knots[0] + TWO_PI };
            worst = worst.min(next - knots[i]);
        }
        if worst < margin {
            return Err(Error::MonotonicityViolation { margin: worst, required: margin });
        }
        Ok(Diffeo { knots, shift })
    }

    pub fn identity(m: usize) -> Self {
        let knots = (0..m).map(|i| TWO_PI * i as f64 / m as f64).collect();
        Diffeo { knots, shift: 0.0 }
    }

    /// Rotation of the base point by k whole grid cells.
    pub fn shift_by_samples(m: usize, k: usize) -> Self {
        let mut d = Self::identity(m);
        d.shift = TWO_PI * (k % m) as f64 / m as f64;
        d
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// phi(theta_i) = knots[i] + shift for every grid point.
    pub fn values_on_grid(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k + self.shift).collect()
    }

    /// Ratio between the largest and smallest discrete derivative.
    pub fn derivative_ratio(&self) -> f64 {
        let m = self.knots.len();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..m {
            let next = if i + 1 < m { self.knots[i + 1] } else { self.knots[0] + TWO_PI };
            let d = next - self.knots[i];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo
    }

    /// True when this map rotates the grid by a whole number of cells, in
    /// which case the action is an exact cyclic permutation of samples.
    fn as_integer_shift(&self, m: usize) -> Option<usize> {
        if self.knots.len() != m {
            return None;
        }
        for (i, &k) in self.knots.iter().enumerate() {
            if (k - TWO_PI * i as f64 / m as f64).abs() > 1e-13 {
                return None;
            }
        }
        let cells = self.shift * m as f64 / TWO_PI;
        let rounded = cells.round();
        if (cells - rounded).abs() <= 1e-10 && rounded >= 0.0 {
            Some(rounded as usize % m)
        } else {
            None
        }
    }

    /// Monotone lift evaluated at an arbitrary parameter. The periodic part
    /// knots[i] - theta_i is interpolated with the given scheme.
    pub fn eval_lift(&self, x: f64, scheme: DerivScheme) -> f64 {
        let m = self.knots.len();
        let periodic: Vec<f64> = (0..m)
            .map(|i| self.knots[i] - TWO_PI * i as f64 / m as f64)
            .collect();
        let interp = PeriodicInterp::new(&periodic, scheme);
        x + interp.eval(x) + self.shift
    }

    fn lift_interp(&self, scheme: DerivScheme) -> (PeriodicInterp, f64) {
        let m = self.knots.len();
        let periodic: Vec<f64> = (0..m)
            .map(|i| self.knots[i] - TWO_PI * i as f64 / m as f64)
            .collect();
        (PeriodicInterp::new(&periodic, scheme), self.shift)
    }

    /// Composition self o other: theta -> self(other(theta)).
    pub fn compose(&self, other: &Diffeo, scheme: DerivScheme) -> Result<Diffeo> {
        let (interp, shift) = self.lift_interp(scheme);
        let eval = |x: f64| -> f64 {
            let base = x.rem_euclid(TWO_PI);
            let branch = x - base;
            base + interp.eval(base) + shift + branch
        };
        let vals: Vec<f64> = other.values_on_grid().iter().map(|&x| eval(x)).collect();
        normalize_lift(vals)
    }

    /// Inverse map, solved pointwise on the grid by bisection and Newton.
    pub fn inverse(&self, scheme: DerivScheme) -> Result<Diffeo> {
        let m = self.knots.len();
        let (interp, shift) = self.lift_interp(scheme);
        let lift0 = |x: f64| x + interp.eval(x) + shift; // on [0, 2 pi)
        let start = lift0(0.0);
        let mut vals = Vec::with_capacity(m);
        for i in 0..m {
            let theta = TWO_PI * i as f64 / m as f64;
            // Branch so the target lies in [lift0(0), lift0(0) + 2 pi).
            let branch = TWO_PI * ((theta - start) / TWO_PI).floor();
            let target = theta - branch;
            let mut lo = 0.0;
            let mut hi = TWO_PI;
            let mut x = 0.5 * (lo + hi);
            for _ in 0..80 {
                let f = lift0(x) - target;
                if f.abs() < 1e-14 {
                    break;
                }
                if f > 0.0 {
                    hi = x;
                } else {
                    lo = x;
                }
                let df = {
                    let eps = 1e-7;
                    (lift0((x + eps).min(TWO_PI)) - lift0((x - eps).max(0.0))) / (2.0 * eps)
                };
                let newton = x - f / df;
                x = if df > 1e-9 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            }
            vals.push(x + branch);
        }
        normalize_lift(vals)
    }
}

/// Turns raw monotone lift values into a canonical Diffeo: knots start in
/// [0, 2 pi), shift zero. Monotonicity is validated by the constructor.
fn normalize_lift(mut vals: Vec<f64>) -> Result<Diffeo> {
    let shift_cells = (vals[0] / TWO_PI).floor();
    for v in vals.iter_mut() {
        *v -= TWO_PI * shift_cells;
    }
    Diffeo::new(vals, 0.0)
}

/// Applies the reparametrization action c o phi by periodic interpolation;
/// whole-cell rotations are exact sample permutations.
pub fn act(c: &DiscreteCurve, phi: &Diffeo) -> Result<DiscreteCurve> {
    let m = c.m();
    if phi.len() != m {
        return Err(Error::ShapeMismatch {
            want_rows: m,
            want_cols: 1,
            got_rows: phi.len(),
            got_cols: 1,
        });
    }
    if let Some(k) = phi.as_integer_shift(m) {
        let mut out = Array2::zeros((m, c.dim()));
        for i in 0..m {
            for j in 0..c.dim() {
                out[[i, j]] = c.samples()[[(i + k) % m, j]];
            }
        }
        return DiscreteCurve::with_threshold(out, c.scheme(), c.immersion_threshold());
    }
    let params = phi.values_on_grid();
    let samples = c.evaluate_at(&params);
    DiscreteCurve::with_threshold(samples, c.scheme(), c.immersion_threshold())
}

/// Orientation reversal theta -> -theta as a sample permutation.
pub fn reverse_orientation(c: &DiscreteCurve) -> DiscreteCurve {
    let m = c.m();
    let mut out = Array2::zeros((m, c.dim()));
    for i in 0..m {
        for j in 0..c.dim() {
            out[[i, j]] = c.samples()[[(m - i) % m, j]];
        }
    }
    DiscreteCurve::with_threshold(out, c.scheme(), c.immersion_threshold())
        .expect("reversal permutes samples of a valid immersion")
}

#[derive(Debug, Clone)]
pub struct ShapeOptions {
    /// Lattice size (and number of base shifts) of the DP seeding stage.
    pub dp_grid: usize,
    /// Maximum number of true-metric polish rounds.
    pub polish_iters: usize,
    /// Gradient-descent iterations of the flat-proxy refinement.
    pub proxy_iters: usize,
    /// Inner boundary-value solver configuration.
    pub bvp: BvpOptions,
    /// Also search orientation-reversing reparametrizations.
    pub orientation_reversal: bool,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        ShapeOptions {
            dp_grid: 64,
            polish_iters: 8,
            proxy_iters: 80,
            bvp: BvpOptions { knots: 8, max_iter: 300, ..Default::default() },
            orientation_reversal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeDistanceResult {
    pub distance: f64,
    /// Best reparametrization found; applies to the reversed curve when
    /// `orientation_reversed` is set.
    pub optimal_diffeo: Diffeo,
    pub inner_result: GeodesicResult,
    /// True-metric distance at the DP seed, before polishing.
    pub dp_stage_distance: f64,
    pub orientation_reversed: bool,
}

/// Quotient shape distance dist(pi(c1), pi(c2)) as a certified upper bound.
pub fn shape_distance(
    c1: &DiscreteCurve,
    c2: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &ShapeOptions,
) -> Result<ShapeDistanceResult> {
    if c1.m() != c2.m() || c1.dim() != c2.dim() {
        return Err(Error::ShapeMismatch {
            want_rows: c1.m(),
            want_cols: c1.dim(),
            got_rows: c2.m(),
            got_cols: c2.dim(),
        });
    }
    let mut candidates: Vec<(DiscreteCurve, bool)> = Vec::new();
    if c1.dim() == 2 {
        let w1 = c1.winding_number()?;
        let w2 = c2.winding_number()?;
        if w1 == w2 {
            candidates.push((c2.clone(), false));
        }
        if opts.orientation_reversal && w1 == -w2 {
            candidates.push((reverse_orientation(c2), true));
        }
        if candidates.is_empty() {
            return Err(Error::WindingMismatch { left: w1, right: w2 });
        }
    } else {
        candidates.push((c2.clone(), false));
        if opts.orientation_reversal {
            candidates.push((reverse_orientation(c2), true));
        }
    }

    let mut best: Option<ShapeDistanceResult> = None;
    for (target, reversed) in candidates {
        let outcome = register(c1, &target, spec, opts)?;
        if best.as_ref().map_or(true, |b| outcome.distance < b.distance) {
            best = Some(ShapeDistanceResult { orientation_reversed: reversed, ..outcome });
        }
    }
    Ok(best.expect("at least one candidate"))
}

fn register(
    c1: &DiscreteCurve,
    c2: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &ShapeOptions,
) -> Result<ShapeDistanceResult> {
    let m = c1.m();
    let scheme = c1.scheme();

    // Stage 0: constant-speed normalization of both curves.
    let (ct1, a1) = c1.constant_speed_reparam()?;
    let (ct2, a2) = c2.constant_speed_reparam()?;

    // Stage 1: dynamic programming over monotone lattice paths and shifts.
    let phi_tilde_vals = dp_seed(&ct1, &ct2, spec.order(), opts.dp_grid, m)?;

    // Stage 2: flat-proxy gradient refinement on the full grid.
    let refined = proxy_refine(&ct1, &ct2, phi_tilde_vals, opts.proxy_iters);
    let phi_tilde = normalize_lift(refined)?;

    // Total reparametrization for the original pair: psi = a2 o phi~ o a1^{-1}.
    let a1_inv = a1.inverse(scheme)?;
    let psi_seed = a2.compose(&phi_tilde, scheme)?.compose(&a1_inv, scheme)?;

    let seed_candidates = [psi_seed, Diffeo::identity(m)];
    let mut best: Option<(f64, Diffeo, GeodesicResult)> = None;
    let mut dp_stage_distance = f64::INFINITY;
    for (idx, psi) in seed_candidates.iter().enumerate() {
        let Ok(moved) = act(c2, psi) else {
            if idx == 0 {
                // Seed lost immersion; fall back to the identity candidate.
                continue;
            }
            continue;
        };
        let r = solve_bvp(c1, &moved, spec, &opts.bvp)?;
        if idx == 0 {
            dp_stage_distance = r.distance_estimate;
        }
        if best.as_ref().map_or(true, |(d, _, _)| r.distance_estimate < *d) {
            best = Some((r.distance_estimate, psi.clone(), r));
        }
    }
    let (mut dist, mut psi, mut inner) = best.ok_or_else(|| {
        Error::SolverFailure(
            "no monotone immersion-preserving reparametrization found; DP grid too coarse".into(),
        )
    })?;
    if !dp_stage_distance.is_finite() {
        dp_stage_distance = dist;
    }

    // Stage 3: polish psi against the true metric via the endpoint gradient.
    let dth = TWO_PI / m as f64;
    for _ in 0..opts.polish_iters {
        let path = &inner.path;
        let n = path.intervals();
        let dt = 1.0 / n as f64;
        let a = &path.curves()[n - 1];
        let b = path.last();
        let mid = DiscreteCurve::with_threshold(
            (a.samples() + b.samples()).mapv(|x| 0.5 * x),
            scheme,
            c1.immersion_threshold(),
        )?;
        let w = (b.samples() - a.samples()).mapv(|x| x / dt);
        let op = MetricOp::new(spec, &mid);
        let grad_end =
            op.apply(&w).mapv(|x| 2.0 * x) + metric_gradient_impl(&op, &mid, &w).mapv(|x| x * dt / 2.0);
        // Chain rule through c2(psi): d/dpsi_i picks up <grad_end_i, c2'(psi_i)>.
        let params = psi.values_on_grid();
        let c2_deriv = c2.evaluate_deriv_at(&params);
        let mut grad_psi = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..c2.dim() {
                acc += grad_end[[i, j]] * c2_deriv[[i, j]];
            }
            grad_psi[i] = acc * dth;
        }
        let dir = smooth_descent_direction(&grad_psi);
        let dir_max = dir.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if dir_max == 0.0 {
            break;
        }
        // Backtracking on the true distance, warm-starting the solver.
        let mut step = 0.2 * dth / dir_max;
        let mut improved = false;
        for _ in 0..8 {
            let vals: Vec<f64> =
                psi.values_on_grid().iter().zip(dir.iter()).map(|(v, d)| v + step * d).collect();
            let Ok(cand) = normalize_lift(vals) else {
                step *= 0.5;
                continue;
            };
            if cand.derivative_ratio() > MAX_DERIVATIVE_RATIO {
                step *= 0.5;
                continue;
            }
            let Ok(moved) = act(c2, &cand) else {
                step *= 0.5;
                continue;
            };
            let interior: Vec<Array2<f64>> = inner.path.curves()[1..n]
                .iter()
                .map(|c| c.samples().clone())
                .collect();
            let r = match solve_bvp_from(c1, &moved, spec, &opts.bvp, interior) {
                Ok(r) => r,
                Err(_) => solve_bvp(c1, &moved, spec, &opts.bvp)?,
            };
            if r.distance_estimate < dist {
                dist = r.distance_estimate;
                psi = cand;
                inner = r;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || dist <= 1e-12 {
            break;
        }
        if (dp_stage_distance - dist).abs() <= 1e-4 * dp_stage_distance.max(1e-12) {
            // Diminishing returns.
            break;
        }
    }

    Ok(ShapeDistanceResult {
        distance: dist,
        optimal_diffeo: psi,
        inner_result: inner,
        dp_stage_distance,
        orientation_reversed: false,
    })
}

/// H^1-smoothed negative gradient for scalar fields on the grid.
fn smooth_descent_direction(grad: &[f64]) -> Vec<f64> {
    let m = grad.len();
    let mut buf: Vec<num_complex::Complex<f64>> =
        grad.iter().map(|&x| num_complex::Complex::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    for (j, z) in buf.iter_mut().enumerate() {
        let k = wavenumber(j, m);
        *z /= (1.0 + k * k) * m as f64;
    }
    fft_inverse(&mut buf);
    buf.iter().map(|z| -z.re).collect()
}

/// Fine-grid samples of a curve and its n-th theta derivative, for cheap
/// proxy-cost lookups inside the DP loop.
struct FineCurve {
    vals: Array2<f64>,
    derivs: Array2<f64>,
    f: usize,
}

impl FineCurve {
    fn build(c: &DiscreteCurve, n: usize, f: usize) -> Result<Self> {
        let fine = c.resampled(f)?;
        let mut derivs = fine.samples().clone();
        for _ in 0..n {
            derivs = d_theta_mat(&derivs, c.scheme());
        }
        Ok(FineCurve { vals: fine.samples().clone(), derivs, f })
    }

    #[inline]
    fn lookup(&self, out_v: &mut [f64], out_d: &mut [f64], x: f64) {
        let t = x.rem_euclid(TWO_PI) / TWO_PI * self.f as f64;
        let i0 = (t as usize) % self.f;
        let i1 = (i0 + 1) % self.f;
        let frac = t - t.floor();
        for j in 0..out_v.len() {
            out_v[j] = self.vals[[i0, j]] * (1.0 - frac) + self.vals[[i1, j]] * frac;
            out_d[j] = self.derivs[[i0, j]] * (1.0 - frac) + self.derivs[[i1, j]] * frac;
        }
    }
}

const DP_MOVES: [(usize, usize); 7] = [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)];

/// DP over monotone lattice paths for each base shift; returns the best
/// piecewise-linear lift evaluated on the M-point grid.
fn dp_seed(
    ct1: &DiscreteCurve,
    ct2: &DiscreteCurve,
    order: usize,
    g: usize,
    m_out: usize,
) -> Result<Vec<f64>> {
    let dim = ct1.dim();
    let f = (4 * g).max(2 * ct1.m());
    let fine1 = FineCurve::build(ct1, order, f)?;
    let fine2 = FineCurve::build(ct2, order, f)?;
    let cell = TWO_PI / g as f64;

    let run_shift = |shift_idx: usize| -> (f64, Vec<usize>) {
        let shift = TWO_PI * shift_idx as f64 / g as f64;
        let nodes = g + 1;
        let mut cost = vec![f64::INFINITY; nodes * nodes];
        let mut prev = vec![usize::MAX; nodes * nodes];
        cost[0] = 0.0;
        let mut v1 = vec![0.0; dim];
        let mut d1 = vec![0.0; dim];
        let mut v2 = vec![0.0; dim];
        let mut d2 = vec![0.0; dim];
        for i in 1..nodes {
            for j in 1..nodes {
                let mut best = f64::INFINITY;
                let mut from = usize::MAX;
                for (mi, &(a, b)) in DP_MOVES.iter().enumerate() {
                    if i < a || j < b {
                        continue;
                    }
                    let base = cost[(i - a) * nodes + (j - b)];
                    if !base.is_finite() {
                        continue;
                    }
                    let slope = b as f64 / a as f64;
                    let slope_n = slope.powi(order as i32);
                    let steps = a.max(b);
                    let mut edge = 0.0;
                    for s in 0..steps {
                        let tau = (s as f64 + 0.5) / steps as f64;
                        let th = cell * ((i - a) as f64 + tau * a as f64);
                        let ph = shift + cell * ((j - b) as f64 + tau * b as f64);
                        fine1.lookup(&mut v1, &mut d1, th);
                        fine2.lookup(&mut v2, &mut d2, ph);
                        let mut val_term = 0.0;
                        let mut der_term = 0.0;
                        for k in 0..dim {
                            let dv = v1[k] - v2[k];
                            val_term += dv * dv;
                            let dd = d1[k] - slope_n * d2[k];
                            der_term += dd * dd;
                        }
                        edge += (val_term + der_term) * cell * a as f64 / steps as f64;
                    }
                    let cand = base + edge;
                    if cand < best {
                        best = cand;
                        from = mi;
                    }
                }
                cost[i * nodes + j] = best;
                prev[i * nodes + j] = from;
            }
        }
        (cost[nodes * nodes - 1], prev)
    };

    let results: Vec<(usize, f64, Vec<usize>)> = (0..g)
        .into_par_iter()
        .map(|k| {
            let (c, p) = run_shift(k);
            (k, c, p)
        })
        .collect();
    let (best_shift, _, prev) = results
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite costs"))
        .ok_or_else(|| Error::SolverFailure("empty DP result".into()))?;

    // Backtrack the lattice path.
    let nodes = g + 1;
    let mut path = vec![(g, g)];
    let (mut i, mut j) = (g, g);
    while i > 0 || j > 0 {
        let mi = prev[i * nodes + j];
        if mi == usize::MAX {
            return Err(Error::SolverFailure("DP backtrack failed".into()));
        }
        let (a, b) = DP_MOVES[mi];
        i -= a;
        j -= b;
        path.push((i, j));
    }
    path.reverse();

    // Piecewise-linear lift through the lattice nodes, sampled on the grid.
    let shift = TWO_PI * best_shift as f64 / g as f64;
    let cell = TWO_PI / g as f64;
    let mut vals = Vec::with_capacity(m_out);
    let mut seg = 0usize;
    for i in 0..m_out {
        let theta = TWO_PI * i as f64 / m_out as f64;
        while seg + 1 < path.len() - 1 && cell * path[seg + 1].0 as f64 <= theta {
            seg += 1;
        }
        let (ia, ja) = path[seg];
        let (ib, jb) = path[seg + 1];
        let (ta, pa) = (cell * ia as f64, cell * ja as f64);
        let (tb, pb) = (cell * ib as f64, cell * jb as f64);
        let frac = ((theta - ta) / (tb - ta)).clamp(0.0, 1.0);
        vals.push(shift + pa + frac * (pb - pa));
    }
    Ok(vals)
}

/// Gradient refinement of the lift against the flat L^2(dtheta) mismatch of
/// the normalized curves, with an H^1-preconditioned direction and
/// monotonicity-preserving backtracking.
fn proxy_refine(ct1: &DiscreteCurve, ct2: &DiscreteCurve, mut vals: Vec<f64>, iters: usize) -> Vec<f64> {
    let m = ct1.m();
    let dim = ct1.dim();
    let margin = DEFAULT_MONOTONE_MARGIN;
    let monotone = |v: &[f64]| -> bool {
        (0..m).all(|i| {
            let next = if i + 1 < m { v[i + 1] } else { v[0] + TWO_PI };
            next - v[i] >= margin
        })
    };
    if !monotone(&vals) {
        return vals;
    }
    let cols: Vec<Vec<f64>> = (0..dim)
        .map(|j| (0..m).map(|i| ct2.samples()[[i, j]]).collect())
        .collect();
    let interps: Vec<PeriodicInterp> =
        cols.iter().map(|c| PeriodicInterp::new(c, ct2.scheme())).collect();
    let objective = |v: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..m {
            for (j, interp) in interps.iter().enumerate() {
                let d = ct1.samples()[[i, j]] - interp.eval(v[i]);
                acc += d * d;
            }
        }
        acc
    };
    let mut fval = objective(&vals);
    let mut step = 1.0;
    for _ in 0..iters {
        let mut grad = vec![0.0; m];
        for i in 0..m {
            let mut acc = 0.0;
            for (j, interp) in interps.iter().enumerate() {
                let e = ct1.samples()[[i, j]] - interp.eval(vals[i]);
                acc += -2.0 * e * interp.eval_deriv(vals[i]);
            }
            grad[i] = acc;
        }
        let dir = smooth_descent_direction(&grad);
        let dir_max = dir.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if dir_max < 1e-16 {
            break;
        }
        let mut accepted = false;
        let mut t = step;
        for _ in 0..25 {
            let cand: Vec<f64> = vals.iter().zip(dir.iter()).map(|(v, d)| v + t * d).collect();
            if monotone(&cand) {
                let fc = objective(&cand);
                if fc < fval {
                    vals = cand;
                    fval = fc;
                    step = (t * 1.5).min(1e3);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if fval <= 1e-24 {
            break;
        }
    }
    vals
}

/// Midpoint diagnostics for the length-space property of the quotient.
#[derive(Debug, Clone)]
pub struct MidpointReport {
    pub dist_total: f64,
    pub dist_first_half: f64,
    pub dist_second_half: f64,
    /// | d(C0, Cm) - d(Cm, C1) | relative to the total distance.
    pub balance_residual: f64,
    /// | d(C0, Cm) + d(Cm, C1) - d(C0, C1) | relative to the total distance.
    pub sum_residual: f64,
    pub pass: bool,
}

/// Computes the lifted geodesic's midpoint curve and checks that it is a
/// metric midpoint of the two shapes, within 1e-2 relative.
pub fn midpoint_check(
    c0: &DiscreteCurve,
    c1: &DiscreteCurve,
    spec: &MetricSpec,
    opts: &ShapeOptions,
) -> Result<MidpointReport> {
    let total = shape_distance(c0, c1, spec, opts)?;
    if total.distance <= 1e-9 {
        return Ok(MidpointReport {
            dist_total: total.distance,
            dist_first_half: 0.0,
            dist_second_half: 0.0,
            balance_residual: 0.0,
            sum_residual: 0.0,
            pass: true,
        });
    }
    let cmid = total.inner_result.path.at(0.5).clone();
    let first = shape_distance(c0, &cmid, spec, opts)?;
    let target = if total.orientation_reversed {
        reverse_orientation(c1)
    } else {
        c1.clone()
    };
    let second = shape_distance(&cmid, &target, spec, opts)?;
    let d = total.distance;
    let balance_residual = (first.distance - second.distance).abs() / d;
    let sum_residual = (first.distance + second.distance - d).abs() / d;
    let tol = 1e-2;
    Ok(MidpointReport {
        dist_total: d,
        dist_first_half: first.distance,
        dist_second_half: second.distance,
        balance_residual,
        sum_residual,
        pass: balance_residual <= tol && sum_residual <= tol,
    })
}

/// A smooth random diffeomorphism built from a few low Fourier modes; always
/// satisfies the monotonicity margin.
pub fn random_diffeo<R: rand::Rng>(rng: &mut R, m: usize, strength: f64) -> Diffeo {
    loop {
        let modes: Vec<(f64, f64, f64)> = (1..=3)
            .map(|k| {
                (
                    k as f64,
                    rng.random_range(-1.0..1.0) * strength / k as f64,
                    rng.random_range(-1.0..1.0) * strength / k as f64,
                )
            })
            .collect();
        let shift: f64 = rng.random_range(0.0..TWO_PI);
        let vals: Vec<f64> = (0..m)
            .map(|i| {
                let t = TWO_PI * i as f64 / m as f64;
                t + modes
                    .iter()
                    .map(|(k, a, b)| a * (k * t).sin() + b * ((k * t).cos() - 1.0))
                    .sum::<f64>()
            })
            .collect();
        if let Ok(mut d) = Diffeo::new(vals, 0.0) {
            d.shift = shift;
            return d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::distance;
    use crate::shapes::{circle, ellipse};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn spec_n2() -> MetricSpec {
        MetricSpec::constant(vec![1.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn diffeo_validation() {
        assert!(Diffeo::new(vec![0.0, 1.0, 0.5, 2.0], 0.0).is_err());
        let d = Diffeo::identity(16);
        assert_eq!(d.len(), 16);
        assert_abs_diff_eq!(d.derivative_ratio(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn act_identity_is_near_exact() {
        let c = ellipse(64, 2.0, 1.0, DerivScheme::Spectral);
        let moved = act(&c, &Diffeo::identity(64)).unwrap();
        for (a, b) in moved.samples().iter().zip(c.samples().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn act_integer_shift_is_exact_rotation() {
        let c = ellipse(64, 2.0, 1.0, DerivScheme::Spectral);
        let moved = act(&c, &Diffeo::shift_by_samples(64, 5)).unwrap();
        for i in 0..64 {
            for j in 0..2 {
                assert_eq!(moved.samples()[[i, j]], c.samples()[[(i + 5) % 64, j]]);
            }
        }
    }

    #[test]
    fn act_composition_is_associative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let c = ellipse(64, 2.0, 1.0, DerivScheme::Spectral);
        let phi = random_diffeo(&mut rng, 64, 0.12);
        let psi = random_diffeo(&mut rng, 64, 0.12);
        let lhs = act(&act(&c, &phi).unwrap(), &psi).unwrap();
        let composed = phi.compose(&psi, DerivScheme::Spectral).unwrap();
        let rhs = act(&c, &composed).unwrap();
        for (a, b) in lhs.samples().iter().zip(rhs.samples().iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-6);
        }
    }

    #[test]
    fn diffeo_inverse_roundtrip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let phi = random_diffeo(&mut rng, 64, 0.15);
        let inv = phi.inverse(DerivScheme::Spectral).unwrap();
        let id = phi.compose(&inv, DerivScheme::Spectral).unwrap();
        for (i, v) in id.values_on_grid().iter().enumerate() {
            let theta = TWO_PI * i as f64 / 64.0;
            // Compare as circle maps; the canonical lift may wrap by 2 pi.
            let diff = (v - theta + std::f64::consts::PI).rem_euclid(TWO_PI) - std::f64::consts::PI;
            assert_abs_diff_eq!(diff, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn integer_shift_action_is_isometry() {
        let c1 = circle(32, 1.0, DerivScheme::Spectral);
        let c2 = ellipse(32, 1.2, 0.9, DerivScheme::Spectral);
        let spec = spec_n2();
        let opts = BvpOptions { knots: 6, max_iter: 200, ..Default::default() };
        let d = distance(&c1, &c2, &spec, &opts).unwrap();
        let phi = Diffeo::shift_by_samples(32, 7);
        let ds = distance(&act(&c1, &phi).unwrap(), &act(&c2, &phi).unwrap(), &spec, &opts).unwrap();
        assert_abs_diff_eq!(ds, d, epsilon = 1e-6 * d);
    }

    #[test]
    fn shape_distance_vanishes_on_orbit() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let c = ellipse(48, 1.6, 1.0, DerivScheme::Spectral);
        let phi = random_diffeo(&mut rng, 48, 0.1);
        let moved = act(&c, &phi).unwrap();
        let spec = spec_n2();
        let opts = ShapeOptions {
            dp_grid: 48,
            bvp: BvpOptions { knots: 6, max_iter: 200, ..Default::default() },
            ..Default::default()
        };
        let r = shape_distance(&c, &moved, &spec, &opts).unwrap();
        assert!(r.distance <= 1e-3, "orbit distance {}", r.distance);
        assert!(r.distance <= r.dp_stage_distance + 1e-9);
    }

    #[test]
    fn shape_distance_of_rotated_circle_vanishes() {
        // A rotation of a circle is a shift reparametrization of it.
        let c = circle(48, 1.0, DerivScheme::Spectral);
        let ang = std::f64::consts::FRAC_PI_4;
        let mut s = c.samples().clone();
        for mut row in s.rows_mut() {
            let (x, y) = (row[0], row[1]);
            row[0] = ang.cos() * x - ang.sin() * y;
            row[1] = ang.sin() * x + ang.cos() * y;
        }
        let rotated = DiscreteCurve::new(s, DerivScheme::Spectral).unwrap();
        let spec = spec_n2();
        let opts = ShapeOptions {
            dp_grid: 48,
            bvp: BvpOptions { knots: 6, max_iter: 200, ..Default::default() },
            ..Default::default()
        };
        let r = shape_distance(&c, &rotated, &spec, &opts).unwrap();
        assert!(r.distance <= 1e-3, "rotated circle distance {}", r.distance);
    }

    #[test]
    fn quotient_distance_never_exceeds_parametrized() {
        let c1 = circle(32, 1.0, DerivScheme::Spectral);
        let c2 = ellipse(32, 1.3, 0.8, DerivScheme::Spectral);
        let spec = spec_n2();
        let bvp = BvpOptions { knots: 6, max_iter: 200, ..Default::default() };
        let d_param = distance(&c1, &c2, &spec, &bvp).unwrap();
        let opts = ShapeOptions { dp_grid: 32, bvp, ..Default::default() };
        let r = shape_distance(&c1, &c2, &spec, &opts).unwrap();
        assert!(r.distance <= d_param + 1e-9, "{} > {}", r.distance, d_param);
    }

    #[test]
    fn shape_distance_checks_winding() {
        let c1 = circle(64, 1.0, DerivScheme::Spectral);
        let c2 = crate::shapes::double_circle(64, DerivScheme::Spectral);
        let spec = spec_n2();
        match shape_distance(&c1, &c2, &spec, &ShapeOptions::default()) {
            Err(Error::WindingMismatch { .. }) => {}
            other => panic!("expected winding mismatch, got {other:?}"),
        }
    }

    #[test]
    fn midpoint_of_identical_shapes_is_trivial() {
        let c = circle(32, 1.0, DerivScheme::Spectral);
        let spec = spec_n2();
        let r = midpoint_check(&c, &c, &spec, &ShapeOptions::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.dist_total, 0.0);
    }
}
