use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::sampling::LabeledPatchSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, batch_size: 32, epochs: 8, seed: 0x0c7a }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::arg("batch size and epoch count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean cross-entropy over each epoch's samples, evaluated before the
    /// update of the batch that contained them.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD with momentum on mean cross-entropy.
///
/// Samples are visited in a per-epoch permutation drawn from `cfg.seed`;
/// gradients are accumulated sequentially so runs are bit-reproducible.
pub fn train(mut network: Network, data: &LabeledPatchSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::arg("training set is empty"));
    }
    if !data.is_balanced() {
        return Err(Error::arg("training set is not class balanced"));
    }
    if data.patch_side() != network.patch_side() {
        return Err(Error::Shape(format!(
            "patches are {}px, network expects {}px",
            data.patch_side(),
            network.patch_side()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_params = network.params().len();
    let mut velocity = vec![0.0; n_params];
    let mut grads = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let p = &data.patches()[i];
                epoch_loss += network.loss_and_grad(&p.patch, p.vessel, &mut grads, scale)?;
            }
            for ((w, v), g) in network.params_mut().iter_mut().zip(&mut velocity).zip(&grads) {
                *v = cfg.momentum * *v - cfg.learning_rate * g;
                *w += *v;
            }
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || network.params().iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch, loss: mean });
        }
        trace.push(mean);
    }
    Ok(TrainOutcome { network, loss_trace: trace })
}

/// Mean cross-entropy of `network` over `data`.
pub fn mean_loss(network: &Network, data: &LabeledPatchSet) -> Result<f64> {
    let mut total = 0.0;
    for p in data.patches() {
        total += network.loss(&p.patch, p.vessel)?;
    }
    Ok(total / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segnet::network::{Architecture, Layer};
    use crate::segnet::sampling::LabeledPatch;

    fn small_arch() -> Architecture {
        Architecture::new(
            7,
            vec![
                Layer::Conv { kernel_h: 3, kernel_w: 3, in_channels: 1, out_channels: 4 },
                Layer::Relu,
                Layer::MaxPool2,
                Layer::Dense { inputs: 16, outputs: 8 },
                Layer::Relu,
                Layer::Dense { inputs: 8, outputs: 2 },
            ],
        )
        .unwrap()
    }

    fn centre_patch(bright: bool, jitter: f64) -> Vec<f64> {
        (0..49)
            .map(|i| {
                let (x, y) = ((i % 7) as f64 - 3.0, (i / 7) as f64 - 3.0);
                let r2 = x * x + y * y;
                let base = if bright && r2 <= 2.0 { 0.9 } else { 0.2 };
                (base + jitter * ((i * 7919) % 13) as f64 / 13.0).min(1.0)
            })
            .collect()
    }

    fn separable_set() -> LabeledPatchSet {
        let mut patches = Vec::new();
        for k in 0..20 {
            let j = k as f64 * 0.005;
            patches.push(LabeledPatch { patch: centre_patch(true, j), vessel: true, image_id: 0, x: k, y: 0 });
            patches.push(LabeledPatch { patch: centre_patch(false, j), vessel: false, image_id: 0, x: k, y: 1 });
        }
        LabeledPatchSet::new(7, patches).unwrap()
    }

    #[test]
    fn memorizes_a_single_pair() {
        // One vessel and one background patch keep the set balanced.
        let set = LabeledPatchSet::new(
            7,
            vec![
                LabeledPatch { patch: centre_patch(true, 0.0), vessel: true, image_id: 0, x: 0, y: 0 },
                LabeledPatch { patch: centre_patch(false, 0.0), vessel: false, image_id: 0, x: 1, y: 0 },
            ],
        )
        .unwrap();
        let cfg = TrainConfig { learning_rate: 0.1, momentum: 0.9, batch_size: 2, epochs: 500, seed: 1 };
        let out = train(Network::init(small_arch(), 3), &set, &cfg).unwrap();
        assert_eq!(out.loss_trace.len(), 500);
        assert!(mean_loss(&out.network, &set).unwrap() < 1e-3);
    }

    #[test]
    fn separates_bright_and_dark_centres() {
        let set = separable_set();
        let cfg = TrainConfig { learning_rate: 0.05, momentum: 0.9, batch_size: 4, epochs: 20, seed: 2 };
        let out = train(Network::init(small_arch(), 4), &set, &cfg).unwrap();
        let correct = set
            .patches()
            .iter()
            .filter(|p| (out.network.forward(&p.patch).unwrap() > 0.5) == p.vessel)
            .count();
        assert_eq!(correct, set.len());
    }

    #[test]
    fn bit_identical_reruns() {
        let set = separable_set();
        let cfg = TrainConfig { epochs: 3, batch_size: 5, ..Default::default() };
        let a = train(Network::init(small_arch(), 7), &set, &cfg).unwrap();
        let b = train(Network::init(small_arch(), 7), &set, &cfg).unwrap();
        assert_eq!(a.network, b.network);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn reports_divergence_epoch() {
        let set = separable_set();
        let cfg = TrainConfig { learning_rate: 1e300, momentum: 0.0, batch_size: 40, epochs: 3, seed: 1 };
        match train(Network::init(small_arch(), 7), &set, &cfg) {
            Err(Error::Divergence { epoch, loss }) => {
                // Epoch 0 losses precede the blow-up; epoch 1 sees it.
                assert_eq!(epoch, 1);
                assert!(!loss.is_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn validates_config() {
        let set = separable_set();
        for cfg in [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { epochs: 0, ..Default::default() },
        ] {
            assert!(train(Network::init(small_arch(), 1), &set, &cfg).is_err());
        }
    }
}
