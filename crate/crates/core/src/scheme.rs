//! Periodic differentiation on the uniform grid theta_i = 2*pi*i/M.
//!
//! Three schemes are supported: spectral (exact on trigonometric polynomials
//! of degree < M/2), and centered finite differences of order 2 and 4. All
//! three are antisymmetric circulants, so the adjoint of `d_theta` with
//! respect to the L^2(dtheta) inner product is `-d_theta` exactly. Several
//! operator identities in this crate rely on that.

use std::cell::RefCell;
use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivScheme {
    Spectral,
    Central2,
    Central4,
}

impl DerivScheme {
    pub fn name(&self) -> &'static str {
        match self {
            DerivScheme::Spectral => "spectral",
            DerivScheme::Central2 => "central-2",
            DerivScheme::Central4 => "central-4",
        }
    }
}

impl std::str::FromStr for DerivScheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "spectral" => Ok(DerivScheme::Spectral),
            "central-2" => Ok(DerivScheme::Central2),
            "central-4" => Ok(DerivScheme::Central4),
            other => Err(format!(
                "unknown derivative scheme '{other}' (expected spectral | central-2 | central-4)"
            )),
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_forward(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

pub fn fft_inverse(buf: &mut [Complex<f64>]) {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()).process(buf));
}

/// Integer wavenumber for DFT bin `j` of an M-point transform. The Nyquist
/// bin maps to zero so that odd-order spectral derivatives of real data stay
/// real and the derivative matrix stays antisymmetric.
pub fn wavenumber(j: usize, m: usize) -> f64 {
    if 2 * j < m {
        j as f64
    } else if 2 * j == m {
        0.0
    } else {
        j as f64 - m as f64
    }
}

fn d_theta_spectral(values: &[f64], out: &mut [f64]) {
    let m = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    let scale = 1.0 / m as f64;
    for (j, z) in buf.iter_mut().enumerate() {
        let k = wavenumber(j, m);
        *z *= Complex::new(0.0, k * scale);
    }
    fft_inverse(&mut buf);
    for (o, z) in out.iter_mut().zip(buf.iter()) {
        *o = z.re;
    }
}

fn d_theta_central2(values: &[f64], out: &mut [f64]) {
    let m = values.len();
    let h = 2.0 * PI / m as f64;
    for i in 0..m {
        let ip = (i + 1) % m;
        let im = (i + m - 1) % m;
        out[i] = (values[ip] - values[im]) / (2.0 * h);
    }
}

fn d_theta_central4(values: &[f64], out: &mut [f64]) {
    let m = values.len();
    let h = 2.0 * PI / m as f64;
    for i in 0..m {
        let ip1 = (i + 1) % m;
        let ip2 = (i + 2) % m;
        let im1 = (i + m - 1) % m;
        let im2 = (i + m - 2) % m;
        out[i] = (-values[ip2] + 8.0 * values[ip1] - 8.0 * values[im1] + values[im2]) / (12.0 * h);
    }
}

pub fn d_theta_slice(values: &[f64], out: &mut [f64], scheme: DerivScheme) {
    match scheme {
        DerivScheme::Spectral => d_theta_spectral(values, out),
        DerivScheme::Central2 => d_theta_central2(values, out),
        DerivScheme::Central4 => d_theta_central4(values, out),
    }
}

pub fn d_theta_vec(values: &Array1<f64>, scheme: DerivScheme) -> Array1<f64> {
    let v = values.as_slice().expect("contiguous");
    let mut out = vec![0.0; v.len()];
    d_theta_slice(v, &mut out, scheme);
    Array1::from_vec(out)
}

/// Column-wise theta derivative of an M x d sample matrix.
pub fn d_theta_mat(values: &Array2<f64>, scheme: DerivScheme) -> Array2<f64> {
    let (m, d) = values.dim();
    let mut out = Array2::zeros((m, d));
    let mut col = vec![0.0; m];
    let mut dcol = vec![0.0; m];
    for c in 0..d {
        for i in 0..m {
            col[i] = values[[i, c]];
        }
        d_theta_slice(&col, &mut dcol, scheme);
        for i in 0..m {
            out[[i, c]] = dcol[i];
        }
    }
    out
}

/// Fourier symbol of a real circulant operator, extracted from its impulse
/// response. Entry `j` is the (complex) eigenvalue on the DFT bin `j`.
pub fn circulant_symbol<F>(m: usize, apply: F) -> Vec<Complex<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut impulse = vec![0.0; m];
    impulse[0] = 1.0;
    let response = apply(&impulse);
    let mut buf: Vec<Complex<f64>> = response.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    buf
}

/// Solves `A x = b` for a circulant `A` given by its Fourier symbol.
pub fn solve_circulant(symbol: &[Complex<f64>], rhs: &[f64], out: &mut [f64]) {
    let m = rhs.len();
    let mut buf: Vec<Complex<f64>> = rhs.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft_forward(&mut buf);
    let scale = 1.0 / m as f64;
    for (z, s) in buf.iter_mut().zip(symbol.iter()) {
        *z = *z / s * scale;
    }
    fft_inverse(&mut buf);
    for (o, z) in out.iter_mut().zip(buf.iter()) {
        *o = z.re;
    }
}
