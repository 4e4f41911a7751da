//! Geodesics, geodesic distances and quotient shape distances for closed
//! immersed curves in R^d under Sobolev metrics of order n >= 2, together
//! with numerical verification suites for the inequalities the theory
//! rests on.
//!
//! The crate is organized around:
//!
//! - [`curve`]: discrete closed curves, arc-length calculus and norms;
//! - [`metric`]: Sobolev metric inner products and exact first variations;
//! - [`geodesic`]: path energy, boundary-value and initial-value solvers;
//! - [`shape`]: reparametrization action and the quotient shape distance;
//! - [`verify`]: seeded numerical checks with explicit margins;
//! - [`io`]: canonical JSON/CSV serialization.

pub mod curve;
pub mod error;
pub mod geodesic;
pub mod interp;
pub mod io;
pub mod metric;
pub mod scheme;
pub mod shape;
pub mod shapes;
pub mod verify;

pub use curve::{DiscreteCurve, NormKind, ScalarField, TangentField};
pub use error::{Error, Result};
pub use geodesic::{
    distance, exp_map, log_map, path_energy, path_length, solve_bvp, BvpOptions, CurvePath,
    ExpOptions, GeodesicResult, LogOptions, Momentum,
};
pub use metric::{
    apply_metric_operator, metric_inner, metric_inner_variation, solve_metric_operator,
    variation_arc_derivative, variation_speed, MetricSpec, MetricVariant, VariationMode,
};
pub use scheme::DerivScheme;
pub use shape::{
    act, midpoint_check, shape_distance, Diffeo, MidpointReport, ShapeDistanceResult, ShapeOptions,
};
pub use verify::{BallSample, CheckReport, GronwallCase};
