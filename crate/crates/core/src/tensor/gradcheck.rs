//! Central-difference gradient verification in double precision.

use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max relative error between the tape gradient of scalar-valued `f` at `x`
/// and its central difference with step `eps`, over every element of `x`.
pub fn finite_diff_check<F>(mut f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, Var) -> Result<Var>,
{
    let probes: Vec<(usize, usize)> = (0..x.len()).map(|i| (0, i)).collect();
    finite_diff_check_probes(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        &probes,
        eps,
    )
}

/// Like [`finite_diff_check`] for several inputs, probing only the listed
/// `(input index, element index)` coordinates.
pub fn finite_diff_check_probes<F>(
    mut f: F,
    inputs: &[Tensor<f64>],
    probes: &[(usize, usize)],
    eps: f64,
) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 {
        return Err(Error::Param(format!("eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();
    drop(tape);

    let mut eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::no_grad();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut work = inputs.to_vec();
    let mut worst = 0.0f64;
    for &(i, j) in probes {
        if i >= work.len() || j >= work[i].len() {
            return Err(Error::Param(format!("probe ({i}, {j}) out of range")));
        }
        let orig = work[i].data()[j];
        work[i].data_mut()[j] = orig + eps;
        let plus = eval(&work)?;
        work[i].data_mut()[j] = orig - eps;
        let minus = eval(&work)?;
        work[i].data_mut()[j] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(grads[i][j], numeric));
    }
    Ok(worst)
}
