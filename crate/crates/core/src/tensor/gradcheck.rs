//! Central finite-difference comparison against reverse-mode gradients.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so entries whose true gradient is
/// exactly zero are judged by absolute error instead.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// One differentiable input: `rows x cols` values.
#[derive(Debug, Clone)]
pub struct Input {
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
}

impl Input {
    pub fn new(rows: usize, cols: usize, value: Vec<f64>) -> Self {
        assert_eq!(rows * cols, value.len());
        Self { rows, cols, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Builds `f` on a fresh tape for the analytic pass and once per perturbed
/// coordinate for the numeric pass. `f` must return a 1x1 value.
pub fn check_gradients<F>(inputs: &[Input], h: f64, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |vals: &[Vec<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<_> = inputs
            .iter()
            .zip(vals)
            .map(|(i, v)| tape.constant(i.rows, i.cols, v.clone()))
            .collect();
        let out = f(&tape, &vars)?;
        Ok(out.item())
    };

    let tape = Tape::new();
    let vars: Vec<_> = inputs
        .iter()
        .map(|i| tape.leaf(i.rows, i.cols, i.value.clone()))
        .collect();
    let out = f(&tape, &vars)?;
    if out.shape() != (1, 1) {
        return Err(Error::Domain("gradient check needs a scalar output".into()));
    }
    let grads = tape.backward(out)?;

    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|i| i.value.clone()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    for (k, var) in vars.iter().enumerate() {
        let zeros;
        let analytic = match grads.wrt(*var) {
            Some(g) => g,
            None => {
                zeros = vec![0.0; inputs[k].value.len()];
                &zeros
            }
        };
        for j in 0..inputs[k].value.len() {
            let x0 = vals[k][j];
            vals[k][j] = x0 + h;
            let fp = eval(&vals)?;
            vals[k][j] = x0 - h;
            let fm = eval(&vals)?;
            vals[k][j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            report.max_abs_error = report.max_abs_error.max((analytic[j] - numeric).abs());
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic[j], numeric));
            report.checked += 1;
        }
    }
    Ok(report)
}
