//! Clamped binary cross-entropy over the valid slots.

use crate::error::{Error, Result};
use crate::mask::FeatureMap;
use crate::scalar::Scalar;

use super::backward::backward;
use super::forward::{forward, TopoOutput};
use super::{TopoNetParams, TopoSample};

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the
/// logs, so the loss stays finite even for saturated sigmoids.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_labels<S: Scalar>(output: &TopoOutput<S>, sample: &TopoSample<S>) -> Result<()> {
    for &slot in &output.valid_idx {
        let y = sample.labels[slot];
        if !(y >= S::zero() && y <= S::one()) {
            return Err(Error::Contract(format!(
                "label {y} at slot {slot} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// Mean BCE over the valid slots; a sample with no valid slots has
/// loss 0 by convention.
pub fn bce_loss<S: Scalar>(output: &TopoOutput<S>, sample: &TopoSample<S>) -> Result<S> {
    Ok(bce_loss_grad(output, sample)?.0)
}

/// Loss together with `dL/dlogit` per valid slot. Where the clamp is
/// active the probability no longer depends on the logit, so the
/// gradient there is exactly zero; elsewhere it is the usual
/// `(p - y) / m` with `m` the number of valid slots.
pub fn bce_loss_grad<S: Scalar>(
    output: &TopoOutput<S>,
    sample: &TopoSample<S>,
) -> Result<(S, Vec<S>)> {
    check_labels(output, sample)?;
    let m = output.valid_idx.len();
    if m == 0 {
        return Ok((S::zero(), Vec::new()));
    }
    let lo = S::of(BCE_CLAMP);
    let hi = S::one() - lo;
    let inv_m = S::one() / S::of(m as f64);
    let mut total = S::zero();
    let mut dlogits = Vec::with_capacity(m);
    for &slot in &output.valid_idx {
        let p_raw = output.probs[slot];
        let p = p_raw.max(lo).min(hi);
        let y = sample.labels[slot];
        total -= y * p.ln() + (S::one() - y) * (S::one() - p).ln();
        dlogits.push(if p_raw < lo || p_raw > hi { S::zero() } else { (p - y) * inv_m });
    }
    Ok((total * inv_m, dlogits))
}

/// One-call training objective: forward, loss, and parameter gradients
/// for a single sample.
pub fn loss_and_grads<S: Scalar>(
    params: &TopoNetParams<S>,
    fmap: &FeatureMap<S>,
    sample: &TopoSample<S>,
) -> Result<(S, TopoNetParams<S>)> {
    let output = forward(params, fmap, sample)?;
    let (loss, dlogits) = bce_loss_grad(&output, sample)?;
    Ok((loss, backward(params, &output.cache, &dlogits)))
}
