use super::network::Network;
use super::sampling::LabeledPatchSet;
use crate::error::{Error, Result};

pub const GRAD_CHECK_MAX_PARAMS: usize = 5000;

/// Largest per-parameter relative gap between the backpropagated gradient of
/// the mean batch loss and its central finite difference.
pub fn grad_check(network: &Network, batch: &LabeledPatchSet, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::arg(format!("epsilon must lie in [1e-7, 1e-4], got {epsilon}")));
    }
    let n = network.params().len();
    if n > GRAD_CHECK_MAX_PARAMS {
        return Err(Error::arg(format!("gradient check limited to {GRAD_CHECK_MAX_PARAMS} parameters, model has {n}")));
    }
    if batch.is_empty() {
        return Err(Error::arg("gradient check needs at least one patch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut analytic = vec![0.0; n];
    for p in batch.patches() {
        network.loss_and_grad(&p.patch, p.vessel, &mut analytic, scale)?;
    }
    let batch_loss = |net: &Network| -> Result<f64> {
        let mut total = 0.0;
        for p in batch.patches() {
            total += net.loss(&p.patch, p.vessel)?;
        }
        Ok(total * scale)
    };
    let mut probe = network.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + epsilon;
        let plus = batch_loss(&probe)?;
        probe.params_mut()[i] = orig - epsilon;
        let minus = batch_loss(&probe)?;
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
