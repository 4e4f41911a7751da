//! Canonical serialization of curves, paths, diffeos and results.
//!
//! Writers emit a fixed key order and 17-significant-digit floats, so equal
//! data produces byte-identical files and regression diffs stay meaningful.
//! Readers accept any valid JSON layout for the same fields.

use ndarray::Array2;
use serde_json::Value;

use crate::curve::{DiscreteCurve, TangentField};
use crate::error::{Error, Result};
use crate::geodesic::{CurvePath, GeodesicResult};
use crate::metric::{MetricSpec, MetricVariant};
use crate::scheme::DerivScheme;
use crate::shape::{Diffeo, ShapeDistanceResult};
use crate::verify::CheckReport;

/// 17 significant digits: enough to reproduce any f64 exactly on reload.
pub fn format_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

fn push_f64_array(out: &mut String, values: impl Iterator<Item = f64>) {
    out.push('[');
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        out.push_str(&format_f64(v));
        first = false;
    }
    out.push(']');
}

fn push_matrix(out: &mut String, mat: &Array2<f64>) {
    out.push('[');
    for (i, row) in mat.rows().into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_f64_array(out, row.iter().cloned());
    }
    out.push(']');
}

pub fn curve_to_json(c: &DiscreteCurve) -> String {
    let mut out = String::new();
    out.push_str("{\"dim\":");
    out.push_str(&c.dim().to_string());
    out.push_str(",\"samples\":");
    push_matrix(&mut out, c.samples());
    out.push('}');
    out.push('\n');
    out
}

fn as_f64(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::InvalidInput(format!("expected a number for {what}")))
}

fn matrix_from_value(v: &Value, what: &str) -> Result<Array2<f64>> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::InvalidInput(format!("expected an array for {what}")))?;
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!("{what} is empty")));
    }
    let cols = rows[0]
        .as_array()
        .ok_or_else(|| Error::InvalidInput(format!("{what} rows must be arrays")))?
        .len();
    let mut mat = Array2::zeros((rows.len(), cols));
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| Error::InvalidInput(format!("{what} rows must be arrays")))?;
        if row.len() != cols {
            return Err(Error::InvalidInput(format!("{what} rows have inconsistent lengths")));
        }
        for (j, x) in row.iter().enumerate() {
            mat[[i, j]] = as_f64(x, what)?;
        }
    }
    Ok(mat)
}

pub fn curve_from_json(text: &str, scheme: DerivScheme) -> Result<DiscreteCurve> {
    let v: Value = serde_json::from_str(text)?;
    curve_from_value(&v, scheme)
}

fn curve_from_value(v: &Value, scheme: DerivScheme) -> Result<DiscreteCurve> {
    let samples = matrix_from_value(
        v.get("samples")
            .ok_or_else(|| Error::InvalidInput("curve JSON missing 'samples'".into()))?,
        "samples",
    )?;
    if let Some(dim) = v.get("dim") {
        let dim = dim
            .as_u64()
            .ok_or_else(|| Error::InvalidInput("'dim' must be an integer".into()))?
            as usize;
        if dim != samples.ncols() {
            return Err(Error::InvalidInput(format!(
                "'dim' = {dim} does not match samples with {} columns",
                samples.ncols()
            )));
        }
    }
    DiscreteCurve::new(samples, scheme)
}

pub fn curve_to_csv(c: &DiscreteCurve) -> String {
    let mut out = String::new();
    for row in c.samples().rows() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            out.push_str(&format_f64(*v));
            first = false;
        }
        out.push('\n');
    }
    out
}

pub fn curve_from_csv(text: &str, scheme: DerivScheme) -> Result<DiscreteCurve> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(vals) => rows.push(vals),
            Err(_) if lineno == 0 => continue, // header line
            Err(e) => {
                return Err(Error::InvalidInput(format!(
                    "CSV parse error on line {}: {e}",
                    lineno + 1
                )))
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("CSV contains no data rows".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("CSV rows have inconsistent lengths".into()));
    }
    let mut mat = Array2::zeros((rows.len(), cols));
    for (i, r) in rows.iter().enumerate() {
        for (j, &x) in r.iter().enumerate() {
            mat[[i, j]] = x;
        }
    }
    DiscreteCurve::new(mat, scheme)
}

pub fn field_to_json(f: &TangentField) -> String {
    let mut out = String::new();
    out.push_str("{\"dim\":");
    out.push_str(&f.dim().to_string());
    out.push_str(",\"values\":");
    push_matrix(&mut out, f.values());
    out.push('}');
    out.push('\n');
    out
}

pub fn field_from_json(text: &str) -> Result<TangentField> {
    let v: Value = serde_json::from_str(text)?;
    let values = matrix_from_value(
        v.get("values")
            .ok_or_else(|| Error::InvalidInput("field JSON missing 'values'".into()))?,
        "values",
    )?;
    TangentField::new(values)
}

pub fn path_to_json(p: &CurvePath) -> String {
    let mut out = String::new();
    out.push_str("{\"times\":");
    push_f64_array(&mut out, p.times().iter().cloned());
    out.push_str(",\"curves\":[");
    for (i, c) in p.curves().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"dim\":");
        out.push_str(&c.dim().to_string());
        out.push_str(",\"samples\":");
        push_matrix(&mut out, c.samples());
        out.push('}');
    }
    out.push_str("]}");
    out.push('\n');
    out
}

pub fn path_from_json(text: &str, scheme: DerivScheme) -> Result<CurvePath> {
    let v: Value = serde_json::from_str(text)?;
    let times: Vec<f64> = v
        .get("times")
        .and_then(|t| t.as_array())
        .ok_or_else(|| Error::InvalidInput("path JSON missing 'times'".into()))?
        .iter()
        .map(|x| as_f64(x, "times"))
        .collect::<Result<_>>()?;
    let curves: Vec<DiscreteCurve> = v
        .get("curves")
        .and_then(|c| c.as_array())
        .ok_or_else(|| Error::InvalidInput("path JSON missing 'curves'".into()))?
        .iter()
        .map(|c| curve_from_value(c, scheme))
        .collect::<Result<_>>()?;
    CurvePath::new(times, curves)
}

pub fn diffeo_to_json(d: &Diffeo) -> String {
    let mut out = String::new();
    out.push_str("{\"knots\":");
    push_f64_array(&mut out, d.knots().iter().cloned());
    out.push_str(",\"shift\":");
    out.push_str(&format_f64(d.shift()));
    out.push('}');
    out.push('\n');
    out
}

pub fn diffeo_from_json(text: &str) -> Result<Diffeo> {
    let v: Value = serde_json::from_str(text)?;
    let knots: Vec<f64> = v
        .get("knots")
        .and_then(|k| k.as_array())
        .ok_or_else(|| Error::InvalidInput("diffeo JSON missing 'knots'".into()))?
        .iter()
        .map(|x| as_f64(x, "knots"))
        .collect::<Result<_>>()?;
    let shift = as_f64(
        v.get("shift")
            .ok_or_else(|| Error::InvalidInput("diffeo JSON missing 'shift'".into()))?,
        "shift",
    )?;
    let mut d = Diffeo::new(knots, 0.0)?;
    d = Diffeo::new(d.knots().to_vec(), shift)?;
    Ok(d)
}

pub fn metric_to_json(spec: &MetricSpec) -> String {
    let mut out = String::new();
    out.push_str("{\"order\":");
    out.push_str(&spec.order().to_string());
    out.push_str(",\"coeffs\":");
    push_f64_array(&mut out, spec.coeffs().iter().cloned());
    out.push_str(",\"variant\":\"");
    out.push_str(match spec.variant() {
        MetricVariant::Constant => "constant",
        MetricVariant::CurvatureWeighted => "curvature_weighted",
        MetricVariant::LengthWeighted => "length_weighted",
    });
    out.push_str("\"}");
    out.push('\n');
    out
}

pub fn metric_from_json(text: &str) -> Result<MetricSpec> {
    let v: Value = serde_json::from_str(text)?;
    let variant = v
        .get("variant")
        .and_then(|s| s.as_str())
        .unwrap_or("constant");
    match variant {
        "curvature_weighted" => Ok(MetricSpec::curvature_weighted()),
        "length_weighted" => Ok(MetricSpec::length_weighted()),
        "constant" => {
            let coeffs: Vec<f64> = v
                .get("coeffs")
                .and_then(|c| c.as_array())
                .ok_or_else(|| Error::InvalidInput("metric JSON missing 'coeffs'".into()))?
                .iter()
                .map(|x| as_f64(x, "coeffs"))
                .collect::<Result<_>>()?;
            MetricSpec::constant(coeffs)
        }
        other => Err(Error::InvalidMetric(format!("unknown variant '{other}'"))),
    }
}

pub fn geodesic_result_to_json(r: &GeodesicResult) -> String {
    let mut out = String::new();
    out.push_str("{\"energy\":");
    out.push_str(&format_f64(r.energy));
    out.push_str(",\"distance_estimate\":");
    out.push_str(&format_f64(r.distance_estimate));
    out.push_str(",\"iterations\":");
    out.push_str(&r.iterations.to_string());
    out.push_str(",\"gradient_norm\":");
    out.push_str(&format_f64(r.gradient_norm));
    out.push_str(",\"converged\":");
    out.push_str(if r.converged { "true" } else { "false" });
    out.push_str(",\"trace\":[");
    for (i, t) in r.trace.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"iteration\":");
        out.push_str(&t.iteration.to_string());
        out.push_str(",\"energy\":");
        out.push_str(&format_f64(t.energy));
        out.push_str(",\"gradient_norm\":");
        out.push_str(&format_f64(t.gradient_norm));
        out.push('}');
    }
    out.push_str("],\"path\":");
    let path_json = path_to_json(&r.path);
    out.push_str(path_json.trim_end());
    out.push('}');
    out.push('\n');
    out
}

pub fn shape_result_to_json(r: &ShapeDistanceResult) -> String {
    let mut out = String::new();
    out.push_str("{\"distance\":");
    out.push_str(&format_f64(r.distance));
    out.push_str(",\"dp_stage_distance\":");
    out.push_str(&format_f64(r.dp_stage_distance));
    out.push_str(",\"orientation_reversed\":");
    out.push_str(if r.orientation_reversed { "true" } else { "false" });
    out.push_str(",\"optimal_diffeo\":");
    let dj = diffeo_to_json(&r.optimal_diffeo);
    out.push_str(dj.trim_end());
    out.push_str(",\"inner_result\":");
    let gj = geodesic_result_to_json(&r.inner_result);
    out.push_str(gj.trim_end());
    out.push('}');
    out.push('\n');
    out
}

pub fn check_report_to_json(r: &CheckReport) -> String {
    let mut out = String::new();
    out.push_str("{\"name\":\"");
    out.push_str(&r.name);
    out.push_str("\",\"trials\":");
    out.push_str(&r.trials.to_string());
    out.push_str(",\"worst_margin\":");
    out.push_str(&format_f64(r.worst_margin));
    out.push_str(",\"pass\":");
    out.push_str(if r.pass { "true" } else { "false" });
    out.push_str(",\"seed\":");
    out.push_str(&r.seed.to_string());
    out.push('}');
    out.push('\n');
    out
}
