use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TrainConfig};
use crate::data::BinaryDataset;

/// `y(x) = wᵀx + b`, classifying by sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearModel {
    pub fn new(w: Vec<f64>, b: f64) -> Self {
        Self { w, b }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// `+1.0` or `-1.0`; a zero decision value counts as `+1`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn accuracy(&self, data: &BinaryDataset) -> f64 {
        let correct = (0..data.len())
            .filter(|&i| self.predict(data.image(i)) == data.label(i))
            .count();
        correct as f64 / data.len() as f64
    }

    /// `(1/n) Σ max(0, 1 − y(wᵀx + b)) + (μ/2)‖w‖²`.
    pub fn objective(&self, data: &BinaryDataset, mu: f64) -> f64 {
        let hinge: f64 = (0..data.len())
            .map(|i| (1.0 - data.label(i) * self.decision(data.image(i))).max(0.0))
            .sum();
        hinge / data.len() as f64 + 0.5 * mu * dot(&self.w, &self.w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmLog {
    /// Objective after each epoch.
    pub objectives: Vec<f64>,
    pub train_accuracy: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-sample subgradient descent on the L2-regularized hinge loss.
///
/// Samples are visited in a seeded shuffle each epoch. The step at update
/// `t` is `lr / (1 + lr·μ·t)`; `μ` is `config.weight_decay`.
pub fn train_linear_svm(
    data: &BinaryDataset,
    config: &TrainConfig,
) -> Result<(LinearModel, SvmLog), ModelError> {
    config.validate()?;
    let positives = (0..data.len()).filter(|&i| data.label(i) > 0.0).count();
    if positives < 2 || data.len() - positives < 2 {
        return Err(ModelError::SingleClass);
    }
    let sparsified;
    let data = match &config.front_end {
        Some(spec) => {
            let side = (data.dim() as f64).sqrt() as usize;
            if side * side != data.dim() {
                return Err(ModelError::Config(
                    "front end on SVM inputs needs square images".into(),
                ));
            }
            let fe = spec.build(side, side)?;
            sparsified = data.map_images(|x| fe.apply(x))?;
            &sparsified
        }
        None => data,
    };
    let mu = config.weight_decay;
    let mut model = LinearModel::new(vec![0.0; data.dim()], 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut objectives = Vec::with_capacity(config.epochs);
    let mut t = 0u64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let base = config.schedule.rate(config.learning_rate, epoch);
        for &i in &order {
            let eta = base / (1.0 + base * mu * t as f64);
            t += 1;
            let x = data.image(i);
            let y = data.label(i);
            let violated = y * model.decision(x) < 1.0;
            let shrink = 1.0 - eta * mu;
            if violated {
                for (w, xi) in model.w.iter_mut().zip(x) {
                    *w = *w * shrink + eta * y * xi;
                }
                model.b += eta * y;
            } else if mu > 0.0 {
                model.w.iter_mut().for_each(|w| *w *= shrink);
            }
        }
        let obj = model.objective(data, mu);
        if !obj.is_finite() {
            return Err(ModelError::Diverged { epoch: epoch + 1 });
        }
        objectives.push(obj);
    }
    let train_accuracy = model.accuracy(data);
    Ok((
        model,
        SvmLog {
            objectives,
            train_accuracy,
        },
    ))
}
