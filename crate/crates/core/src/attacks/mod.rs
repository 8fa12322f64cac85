//! ℓ∞-bounded attacks: closed forms against linear classifiers, the
//! locally-linear pairwise attack on piecewise-linear networks, and FGSM.

mod eval;
mod linear;
mod network;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{Convention, FrontEndError};
use crate::models::ModelError;
use crate::transform::{Basis, TransformError};

pub use eval::{evaluate_linear, evaluate_network, AttackSpec, EvalReport, SampleRecord};
pub use linear::{distortion_linear, semi_white_linear, white_linear};
pub use network::{extract_locally_linear, fgsm, pairwise_attack, AttackResult, LocallyLinearModel, PairGap};
pub use crate::models::SwitchState;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("epsilon = {0} must be finite and non-negative")]
    BadEpsilon(f64),
    #[error("pairwise attack needs at least two classes, model has {0}")]
    TooFewClasses(usize),
    #[error("true label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("vector has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyData,
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    FrontEnd(#[from] FrontEndError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Fgsm,
    SemiWhite,
    White,
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::SemiWhite => "semiwhite",
            AttackKind::White => "white",
        })
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fgsm" => Ok(AttackKind::Fgsm),
            "semiwhite" | "semi_white" | "semi-white" => Ok(AttackKind::SemiWhite),
            "white" => Ok(AttackKind::White),
            other => Err(format!("unknown attack `{other}` (expected fgsm, semiwhite or white)")),
        }
    }
}

/// An additive perturbation with its budget; `‖e‖∞ ≤ epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub e: Vec<f64>,
    pub epsilon: f64,
}

impl Perturbation {
    pub fn zero(n: usize, epsilon: f64) -> Self {
        Self {
            e: vec![0.0; n],
            epsilon,
        }
    }

    /// `ε·sign(v)` elementwise, scaled by `direction` (±1).
    pub fn signed(v: &[f64], epsilon: f64, direction: f64) -> Self {
        Self {
            e: v.iter().map(|&x| direction * epsilon * sign(x)).collect(),
            epsilon,
        }
    }

    pub fn linf(&self) -> f64 {
        self.e.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `x + e`, optionally clipped to the pixel range [0, 1].
    pub fn apply(&self, x: &[f64], clip: bool) -> Vec<f64> {
        x.iter()
            .zip(&self.e)
            .map(|(a, b)| {
                let v = a + b;
                if clip {
                    v.clamp(0.0, 1.0)
                } else {
                    v
                }
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.e.iter().all(|&v| v == 0.0)
    }
}

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<(), AttackError> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(AttackError::BadEpsilon(epsilon))
    }
}

pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Projection of `w` onto the span of the frame vectors indexed by
/// `support`: `Σ_{k∈S} ψ_k ψ_kᵀ w` under [`Convention::Synthesis`], and
/// `Σ_{k∈S} ψ̃_k ψ_kᵀ w` under [`Convention::Analysis`]. The latter is the
/// transpose of the support-frozen front end applied to `w`.
pub fn projection(
    w: &[f64],
    support: &[usize],
    basis: &Basis,
    convention: Convention,
) -> Result<Vec<f64>, AttackError> {
    let n = basis.dim();
    if w.len() != n {
        return Err(AttackError::Dimension {
            expected: n,
            got: w.len(),
        });
    }
    let mut keep = vec![false; n];
    for &k in support {
        if k >= n {
            return Err(TransformError::IndexOutOfRange { index: k, n }.into());
        }
        keep[k] = true;
    }
    let mut c = basis.synthesize_adjoint(w)?;
    for (v, &on) in c.iter_mut().zip(&keep) {
        if !on {
            *v = 0.0;
        }
    }
    Ok(match convention {
        Convention::Synthesis => basis.synthesize(&c)?,
        Convention::Analysis => basis.analyze_adjoint(&c)?,
    })
}
