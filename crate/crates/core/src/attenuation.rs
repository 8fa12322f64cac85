//! Monte Carlo estimate of how much a sparsifying front end attenuates the
//! output distortion of linear attacks on random classifiers.
//!
//! Each trial draws `w ~ N(0, I)` and an independent uniformly random
//! support `S` of size K. With `ε = 1` the undefended distortion is `‖w‖₁`;
//! behind the front end the semi-white attack causes `|sign(w)ᵀp|` and the
//! white attack `‖p‖₁`, where `p = proj(w, S)`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{projection, sign, AttackError, AttackKind};
use crate::frontend::Convention;
use crate::par;
use crate::transform::{max_levels, Basis, BasisKind, TransformError};

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("K = {k} must lie in 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("trials must be positive")]
    NoTrials,
    #[error("{0} is not an attenuation mode (expected semiwhite or white)")]
    BadMode(AttackKind),
    #[error("haar ensembles need N to be a perfect square, got {0}")]
    NotSquare(usize),
    #[error("basis {0} is not supported here (expected identity or haar)")]
    BadBasis(BasisKind),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub basis: BasisKind,
    /// Haar decomposition depth; `None` means the deepest valid level.
    pub levels: Option<usize>,
    pub mode: AttackKind,
    pub seed: u64,
    /// Keep every trial's ratios in the report.
    pub keep_samples: bool,
}

impl EnsembleConfig {
    pub fn new(n: usize, k: usize, trials: usize, basis: BasisKind, mode: AttackKind, seed: u64) -> Self {
        Self {
            n,
            k,
            trials,
            basis,
            levels: None,
            mode,
            seed,
            keep_samples: false,
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.k == 0 || self.k > self.n {
            return Err(EnsembleError::BadK { k: self.k, n: self.n });
        }
        if self.trials == 0 {
            return Err(EnsembleError::NoTrials);
        }
        if self.mode == AttackKind::Fgsm {
            return Err(EnsembleError::BadMode(self.mode));
        }
        Ok(())
    }

    fn basis(&self) -> Result<Basis, EnsembleError> {
        match self.basis {
            BasisKind::Identity => Ok(Basis::identity(self.n)?),
            BasisKind::Haar => {
                let side = (self.n as f64).sqrt().round() as usize;
                if side * side != self.n {
                    return Err(EnsembleError::NotSquare(self.n));
                }
                let levels = self.levels.unwrap_or_else(|| max_levels(side, side));
                Ok(Basis::new(BasisKind::Haar, side, side, levels)?)
            }
            other => Err(EnsembleError::BadBasis(other)),
        }
    }
}

/// Defended-over-undefended distortion ratios of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRatios {
    pub semi_white: f64,
    pub white: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttenuationReport {
    pub config: EnsembleConfig,
    /// Mean ratio for `config.mode`.
    pub mean_ratio: f64,
    pub stderr: f64,
    pub mean_semi_white: f64,
    pub mean_white: f64,
    /// Trials where the white ratio fell below the semi-white ratio.
    pub white_below_semi_white: usize,
    pub samples: Option<Vec<TrialRatios>>,
}

impl AttenuationReport {
    pub fn k_over_n(&self) -> f64 {
        self.config.k as f64 / self.config.n as f64
    }
}

/// Trial `i` draws from its own ChaCha stream, so results do not depend on
/// how trials are scheduled.
fn trial(basis: &Basis, cfg: &EnsembleConfig, i: usize) -> Result<TrialRatios, EnsembleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64);
    let w: Vec<f64> = (0..cfg.n).map(|_| rng.sample(StandardNormal)).collect();
    let support = index::sample(&mut rng, cfg.n, cfg.k).into_vec();
    let p = projection(&w, &support, basis, Convention::Synthesis)?;
    let undefended: f64 = w.iter().map(|v| v.abs()).sum();
    let sw = w.iter().zip(&p).map(|(a, b)| sign(*a) * b).sum::<f64>().abs();
    let white: f64 = p.iter().map(|v| v.abs()).sum();
    Ok(TrialRatios {
        semi_white: sw / undefended,
        white: white / undefended,
    })
}

pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<AttenuationReport, EnsembleError> {
    cfg.validate()?;
    let basis = cfg.basis()?;
    let samples = par::try_map_indexed(cfg.trials, |i| trial(&basis, cfg, i))?;
    let pick = |s: &TrialRatios| match cfg.mode {
        AttackKind::White => s.white,
        _ => s.semi_white,
    };
    let n = samples.len() as f64;
    let mean = |f: &dyn Fn(&TrialRatios) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let mean_ratio = mean(&pick);
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (pick(s) - mean_ratio).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(AttenuationReport {
        config: cfg.clone(),
        mean_ratio,
        stderr: (var / n).sqrt(),
        mean_semi_white: mean(&|s| s.semi_white),
        mean_white: mean(&|s| s.white),
        white_below_semi_white: samples.iter().filter(|s| s.white < s.semi_white - 1e-12).count(),
        samples: cfg.keep_samples.then_some(samples),
    })
}
