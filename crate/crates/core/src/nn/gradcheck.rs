//! Central finite-difference verification of tape gradients.

use serde::Serialize;

use super::layers::Parameterized;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Compare analytic gradients of `f` against `(f(θ+ε) − f(θ−ε)) / 2ε` for
/// every element of every parameter of `model`.
///
/// The error per element is `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn gradient_check<M, F>(model: &mut M, eps: f64, tol: f64, f: F) -> Result<GradCheckReport>
where
    M: Parameterized,
    F: Fn(&M, &mut Tape) -> Result<Var>,
{
    let analytic: Vec<(String, Vec<f64>)> = {
        let mut tape = Tape::new();
        let loss = f(model, &mut tape)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::numerical("gradient_check", format!("loss is {value}")));
        }
        tape.backward(loss);
        model
            .params()
            .into_iter()
            .map(|(name, t)| {
                let g = tape
                    .grad_for(t)
                    .map(|g| g.iter().copied().collect())
                    .unwrap_or_else(|| vec![0.0; t.value().len()]);
                (name, g)
            })
            .collect()
    };

    let eval = |model: &M| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(model, &mut tape)?;
        let v = tape.scalar(loss);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numerical("gradient_check", format!("loss is {v}")))
        }
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        tol,
        passed: true,
    };
    for (p, (name, grads)) in analytic.iter().enumerate() {
        for (idx, &a) in grads.iter().enumerate() {
            let original = nth_value(model, p, idx);
            set_nth_value(model, p, idx, original + eps);
            let plus = eval(model)?;
            set_nth_value(model, p, idx, original - eps);
            let minus = eval(model)?;
            set_nth_value(model, p, idx, original);
            let n = (plus - minus) / (2.0 * eps);
            let err = (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    Ok(report)
}

fn nth_value<M: Parameterized>(model: &M, p: usize, idx: usize) -> f64 {
    let params = model.params();
    params[p].1.value().as_slice().expect("standard layout")[idx]
}

fn set_nth_value<M: Parameterized>(model: &mut M, p: usize, idx: usize, v: f64) {
    let mut params = model.params_mut();
    params[p].1.value_mut().as_slice_mut().expect("standard layout")[idx] = v;
}
