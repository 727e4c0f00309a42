//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Var};
use crate::error::Result;
use crate::linalg::Matrix;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `‖analytic - numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-6)` per input,
    /// or 0 when the difference is below the rounding floor of the
    /// finite differences.
    pub relative_errors: Vec<f64>,
    /// The same ratio without the rounding floor.
    pub raw_relative_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_raw_relative_error(&self) -> f64 {
        self.raw_relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of `sum(f(inputs) ∘ R)` against central
/// differences with the given step, where `R` is a fixed random weighting
/// drawn from `seed`. Every input is treated as a parameter.
pub fn check_gradients<F>(inputs: &[Matrix], step: f64, seed: u64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let mut weights: Option<Matrix> = None;
    let mut eval = |xs: &[Matrix], want_grads: bool| -> Result<(f64, Vec<Matrix>)> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&tape, &vars)?;
        let (r, c) = out.shape();
        let w = weights.get_or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Matrix::from_fn(r, c, |_, _| rng.random_range(0.5..1.5))
        });
        let w = tape.constant(w.clone());
        let loss = out.hadamard(w)?.sum();
        let value = loss.value()[(0, 0)];
        let grads = if want_grads {
            tape_grads(&tape, loss, &vars)
        } else {
            Vec::new()
        };
        Ok((value, grads))
    };

    let (f0, analytic) = eval(inputs, true)?;
    // each numeric entry carries roughly eps * |f| / step of rounding error
    let noise_per_entry = 100.0 * f64::EPSILON * f0.abs().max(1.0) / step;
    let mut relative_errors = Vec::with_capacity(inputs.len());
    let mut raw_relative_errors = Vec::with_capacity(inputs.len());
    let mut xs = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = Matrix::zeros(a.rows(), a.cols());
        for e in 0..a.data().len() {
            let orig = xs[k].data()[e];
            xs[k].data_mut()[e] = orig + step;
            let (fp, _) = eval(&xs, false)?;
            xs[k].data_mut()[e] = orig - step;
            let (fm, _) = eval(&xs, false)?;
            xs[k].data_mut()[e] = orig;
            numeric.data_mut()[e] = (fp - fm) / (2.0 * step);
        }
        let diff = norm(a.data().iter().zip(numeric.data()).map(|(x, y)| x - y));
        let scale = norm(a.data().iter().copied())
            .max(norm(numeric.data().iter().copied()))
            .max(1e-6);
        let noise = noise_per_entry * (a.data().len() as f64).sqrt();
        relative_errors.push(if diff <= noise { 0.0 } else { diff / scale });
        raw_relative_errors.push(diff / scale);
    }
    Ok(GradCheck {
        relative_errors,
        raw_relative_errors,
    })
}

fn tape_grads<'t>(tape: &'t Tape, loss: Var<'t>, vars: &[Var<'t>]) -> Vec<Matrix> {
    let grads = tape.backward(loss);
    vars.iter()
        .map(|v| {
            grads.get(*v).cloned().unwrap_or_else(|| {
                let (r, c) = v.shape();
                Matrix::zeros(r, c)
            })
        })
        .collect()
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|x| x * x).sum::<f64>().sqrt()
}
