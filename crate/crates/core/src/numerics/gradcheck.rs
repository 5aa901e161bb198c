use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of a central-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// Maximum over all entries of `|g_t - g_fd| / max(1e-8, |g_t| + |g_fd|)`.
    pub max_rel_error: f64,
    /// Same statistic per parameter tensor.
    pub per_param: Vec<f64>,
    /// (tensor, entry) where the maximum occurred.
    pub worst: (usize, usize),
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out);
    if value.len() != 1 {
        return Err(Error::InvalidArgument(format!(
            "grad_check needs a scalar function, got shape {:?}",
            value.shape()
        )));
    }
    if !value.values()[0].is_finite() {
        return Err(Error::NonFinite(format!(
            "objective evaluated to {}",
            value.values()[0]
        )));
    }
    Ok((tape, vars, out))
}

/// Compares tape gradients of the scalar `f` against central differences
/// `(f(θ+h) - f(θ-h)) / 2h` for every entry of every parameter.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let (mut tape, vars, out) = evaluate(&f, params)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| {
            tape.grad(v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; tape.value(v).len()])
        })
        .collect();

    let scalar = |ps: &[Tensor]| -> Result<f64> {
        let (tape, _, out) = evaluate(&f, ps)?;
        Ok(tape.value(out).values()[0])
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        per_param: vec![0.0; params.len()],
        worst: (0, 0),
    };
    for pi in 0..params.len() {
        for ei in 0..params[pi].len() {
            let orig = params[pi].values()[ei];
            work[pi].values_mut()[ei] = orig + step;
            let plus = scalar(&work)?;
            work[pi].values_mut()[ei] = orig - step;
            let minus = scalar(&work)?;
            work[pi].values_mut()[ei] = orig;

            let fd = (plus - minus) / (2.0 * step);
            let g = analytic[pi][ei];
            let rel = (g - fd).abs() / (g.abs() + fd.abs()).max(1e-8);
            if rel > report.per_param[pi] {
                report.per_param[pi] = rel;
            }
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, ei);
            }
        }
    }
    Ok(report)
}
