use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{argmax, Architecture, Network};
use super::ModelError;
use crate::data::Dataset;
use crate::frontend::{FrontEndConfig, FrontEndError};
use crate::transform::{Basis, BasisKind};

/// Serializable description of a front end; built against concrete image
/// dimensions with [`FrontEndSpec::build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEndSpec {
    pub basis: BasisKind,
    pub levels: usize,
    pub rho: f64,
}

impl FrontEndSpec {
    pub fn build(&self, height: usize, width: usize) -> Result<FrontEndConfig, FrontEndError> {
        let basis = Basis::new(self.basis, height, width, self.levels)?;
        FrontEndConfig::from_rho(basis, self.rho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Multiply the rate by `factor` after every `every` epochs.
    Step { every: usize, factor: f64 },
}

impl Schedule {
    pub fn rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            Schedule::Constant => base,
            Schedule::Step { every, factor } => base * factor.powi((epoch / every.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub dropout_rate: f64,
    /// Applied to every training input when present.
    pub front_end: Option<FrontEndSpec>,
}

impl TrainConfig {
    /// Network defaults: SGD with momentum, step decay.
    pub fn network_default() -> Self {
        Self {
            seed: 1,
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.01,
            schedule: Schedule::Step {
                every: 5,
                factor: 0.5,
            },
            momentum: 0.9,
            weight_decay: 1e-4,
            dropout_rate: 0.5,
            front_end: None,
        }
    }

    /// Linear SVM defaults: per-sample subgradient steps, `weight_decay` is
    /// the regularization strength `μ`.
    pub fn svm_default() -> Self {
        Self {
            seed: 1,
            epochs: 50,
            batch_size: 1,
            learning_rate: 0.01,
            schedule: Schedule::Constant,
            momentum: 0.0,
            weight_decay: 1e-4,
            dropout_rate: 0.0,
            front_end: None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if let Schedule::Step { every, factor } = self.schedule {
            if every == 0 || !(factor > 0.0) {
                return bad("step schedule needs every > 0 and factor > 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Inference-mode loss on the probe subset before any update.
    pub initial_loss: f64,
    /// Inference-mode probe loss after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean minibatch loss (dropout active) seen during each epoch.
    pub running_losses: Vec<f64>,
    /// Accuracy on the (possibly sparsified) training inputs after training.
    pub train_accuracy: f64,
}

const PROBE: usize = 2000;
const EVAL_CHUNK: usize = 256;

fn batch_of(data: &Dataset, idx: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut xs = Vec::with_capacity(idx.len() * data.dim());
    let mut ys = Vec::with_capacity(idx.len());
    for &i in idx {
        xs.extend_from_slice(data.image(i));
        ys.push(usize::from(data.label(i)));
    }
    (xs, ys)
}

fn probe_loss(net: &Network, data: &Dataset) -> f64 {
    let n = data.len().min(PROBE);
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (xs, ys) = batch_of(data, chunk);
        let (loss, _) = net.loss_and_grad(&xs, &ys, None);
        total += loss * chunk.len() as f64;
    }
    total / n as f64
}

/// Fraction of `data` classified correctly, evaluated in fixed-size chunks.
pub fn accuracy(net: &Network, data: &Dataset) -> f64 {
    let chunks: Vec<Vec<usize>> = (0..data.len())
        .collect::<Vec<_>>()
        .chunks(EVAL_CHUNK)
        .map(<[usize]>::to_vec)
        .collect();
    let correct: usize = crate::par::map_indexed(chunks.len(), |c| {
        let (xs, ys) = batch_of(data, &chunks[c]);
        let l = net.classes();
        let y = net.logits_batch(&xs, ys.len());
        ys.iter()
            .enumerate()
            .filter(|(r, &t)| argmax(&y[r * l..(r + 1) * l]) == t)
            .count()
    })
    .into_iter()
    .sum();
    correct as f64 / data.len() as f64
}

/// Minibatch SGD with momentum on softmax cross-entropy. Batches are drawn
/// from a seeded shuffle each epoch and gradients are reduced in a fixed
/// order, so identical configs give bit-identical weights.
pub fn train_network(
    data: &Dataset,
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<(Network, TrainLog), ModelError> {
    config.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    let sparsified;
    let data = match &config.front_end {
        Some(spec) => {
            let fe = spec.build(data.rows, data.cols)?;
            sparsified = data.map_images(|x| fe.apply(x))?;
            &sparsified
        }
        None => data,
    };
    let mut net = Network::new(arch.clone(), config.seed)?;
    if net.input_len() != data.dim() {
        return Err(ModelError::Shape {
            expected: net.input_len(),
            got: data.dim(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut velocity: Vec<(Vec<f64>, Vec<f64>)> = net
        .param_layers_mut()
        .map(|(_, (w, b))| (vec![0.0; w.len()], vec![0.0; b.len()]))
        .collect();

    let initial_loss = probe_loss(&net, data);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut running_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(config.learning_rate, epoch);
        order.shuffle(&mut rng);
        let mut running = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (xs, ys) = batch_of(data, chunk);
            let (loss, grads) = net.loss_and_grad(&xs, &ys, Some(&mut rng));
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch: epoch + 1 });
            }
            running += loss * chunk.len() as f64;
            for ((idx, (w, b)), (vw, vb)) in net.param_layers_mut().zip(velocity.iter_mut()) {
                let g = &grads[idx];
                for ((wi, gi), vi) in w.iter_mut().zip(&g.weight).zip(vw.iter_mut()) {
                    *vi = config.momentum * *vi + gi + config.weight_decay * *wi;
                    *wi -= lr * *vi;
                }
                for ((bi, gi), vi) in b.iter_mut().zip(&g.bias).zip(vb.iter_mut()) {
                    *vi = config.momentum * *vi + gi;
                    *bi -= lr * *vi;
                }
            }
        }
        let probe = probe_loss(&net, data);
        if !probe.is_finite() {
            return Err(ModelError::Diverged { epoch: epoch + 1 });
        }
        running_losses.push(running / data.len() as f64);
        epoch_losses.push(probe);
    }
    let train_accuracy = accuracy(&net, data);
    Ok((
        net,
        TrainLog {
            initial_loss,
            epoch_losses,
            running_losses,
            train_accuracy,
        },
    ))
}
