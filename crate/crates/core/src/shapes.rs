//! Stock closed curves used in tests, examples and the CLI.

use ndarray::Array2;

use crate::curve::{DiscreteCurve, TWO_PI};
use crate::scheme::DerivScheme;

fn from_fn(m: usize, dim: usize, f: impl Fn(f64, usize) -> f64, scheme: DerivScheme) -> DiscreteCurve {
    let mut samples = Array2::zeros((m, dim));
    for i in 0..m {
        let th = TWO_PI * i as f64 / m as f64;
        for j in 0..dim {
            samples[[i, j]] = f(th, j);
        }
    }
    DiscreteCurve::new(samples, scheme).expect("stock curve is a valid immersion")
}

pub fn circle(m: usize, r: f64, scheme: DerivScheme) -> DiscreteCurve {
    from_fn(m, 2, |t, j| if j == 0 { r * t.cos() } else { r * t.sin() }, scheme)
}

pub fn ellipse(m: usize, a: f64, b: f64, scheme: DerivScheme) -> DiscreteCurve {
    from_fn(m, 2, |t, j| if j == 0 { a * t.cos() } else { b * t.sin() }, scheme)
}

/// Circle traversed twice; winding number 2.
pub fn double_circle(m: usize, scheme: DerivScheme) -> DiscreteCurve {
    from_fn(
        m,
        2,
        |t, j| if j == 0 { (2.0 * t).cos() } else { (2.0 * t).sin() },
        scheme,
    )
}

/// Lissajous figure-eight (sin 2t, sin t); winding number 0.
pub fn figure_eight(m: usize, scheme: DerivScheme) -> DiscreteCurve {
    from_fn(
        m,
        2,
        |t, j| if j == 0 { (2.0 * t).sin() } else { t.sin() },
        scheme,
    )
}

/// Planar circle embedded in R^3 with a mild vertical wobble.
pub fn circle3d(m: usize, scheme: DerivScheme) -> DiscreteCurve {
    from_fn(
        m,
        3,
        |t, j| match j {
            0 => t.cos(),
            1 => t.sin(),
            _ => 0.2 * (2.0 * t).sin(),
        },
        scheme,
    )
}
