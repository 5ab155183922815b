use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Mean absolute difference over all samples and channels.
pub fn l1_time_loss(tape: &mut Tape, estimate: Var, target: Var) -> Result<Var> {
    if tape.shape(estimate) != tape.shape(target) {
        return Err(Error::contract(alloc::format!(
            "loss operands differ in shape: {:?} vs {:?}",
            tape.shape(estimate),
            tape.shape(target)
        )));
    }
    let d = tape.sub(estimate, target)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// [`l1_time_loss`] on plain waveforms.
pub fn l1_distance(estimate: &Waveform, target: &Waveform) -> Result<f64> {
    estimate.check_aligned(target)?;
    let n = estimate.samples().len().max(1) as f64;
    let s: f64 = estimate
        .samples()
        .iter()
        .zip(target.samples())
        .map(|(a, b)| crate::math::abs(a - b))
        .sum();
    Ok(s / n)
}
