//! Central-difference gradient oracle.
//!
//! Rebuilds the whole forward pass twice per perturbed coordinate, so it is
//! slow and only meant to cross-check the tape's backward sweep in tests.

use super::tape::{Tape, TensorId};
use super::Tensor;
use crate::error::Result;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Numeric gradient of scalar-valued `f` at `inputs`, one tensor of partials
/// per input, via central differences with the given step.
///
/// Coordinates are independent of one another, so the parallel build fans
/// them out across threads and still returns bit-identical results.
pub fn finite_diff_grad<F>(inputs: &[Tensor], step: f64, f: F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId> + Sync,
{
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len()).map(move |ci| (ti, ci)))
        .collect();

    let one = |&(ti, ci): &(usize, usize)| -> Result<f64> {
        let lo = eval_shifted(inputs, ti, ci, -step, &f)?;
        let hi = eval_shifted(inputs, ti, ci, step, &f)?;
        Ok((hi - lo) / (2.0 * step))
    };

    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = coords.par_iter().map(one).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = coords.iter().map(one).collect::<Result<_>>()?;

    let mut out: Vec<Tensor> = inputs.iter().map(|t| Tensor::zeros(t.shape())).collect();
    for ((ti, ci), p) in coords.into_iter().zip(partials) {
        out[ti].data_mut()[ci] = p;
    }
    Ok(out)
}

fn eval_shifted<F>(inputs: &[Tensor], ti: usize, ci: usize, delta: f64, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId>,
{
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut t = t.clone();
            if i == ti {
                t.data_mut()[ci] += delta;
            }
            tape.input(t)
        })
        .collect();
    let out = f(&mut tape, &ids)?;
    tape.value(out).as_scalar()
}
