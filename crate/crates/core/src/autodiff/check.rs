//! Central finite-difference gradient checking.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative errors are measured against `max(|analytic|, |numeric|, REL_FLOOR)`.
pub const REL_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares backward-mode gradients of the scalar `f(inputs)` with central
/// differences. `f` must be deterministic (reseed any dropout inside it).
pub fn check_gradients<F>(inputs: &[Tensor], step: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().enumerate().map(|(i, v)| tape.leaf(i, v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item().ok_or_else(|| Error::Shape("gradient check needs a scalar output".into()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, v)| tape.leaf(i, v.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheck { max_rel_err: 0.0, worst: (0, 0), analytic: 0.0, numeric: 0.0, checked: 0 };
    let mut values = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[i].len()];
        let analytic = grads.wrt(*var).unwrap_or(&zeros).to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = values[i].data()[j];
            values[i].data_mut()[j] = orig + step;
            let up = eval(&values)?;
            values[i].data_mut()[j] = orig - step;
            let down = eval(&values)?;
            values[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = rel_err(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.checked == 1 {
                report = GradCheck { max_rel_err: err, worst: (i, j), analytic: a, numeric, checked: report.checked };
            }
        }
    }
    Ok(report)
}
