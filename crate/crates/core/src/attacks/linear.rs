use super::{check_epsilon, projection, AttackError, Perturbation};
use crate::frontend::{Convention, FrontEndConfig};
use crate::models::LinearModel;

/// `e = ε·sign(w)`: uses the weights alone.
pub fn semi_white_linear(model: &LinearModel, epsilon: f64) -> Result<Perturbation, AttackError> {
    check_epsilon(epsilon)?;
    Ok(Perturbation::signed(&model.w, epsilon, 1.0))
}

/// `e = ε·sign(proj(w, S(x)))` with the support taken at the clean input.
pub fn white_linear(
    model: &LinearModel,
    x: &[f64],
    epsilon: f64,
    fe: &FrontEndConfig,
    convention: Convention,
) -> Result<Perturbation, AttackError> {
    check_epsilon(epsilon)?;
    let support = fe.support_of(x)?;
    let p = projection(&model.w, &support, &fe.basis, convention)?;
    Ok(Perturbation::signed(&p, epsilon, 1.0))
}

/// Output distortion `|wᵀx̂(x+e) − wᵀx̂(x)|`, or `|wᵀe|` without a front end.
pub fn distortion_linear(
    model: &LinearModel,
    x: &[f64],
    e: &Perturbation,
    fe: Option<&FrontEndConfig>,
) -> Result<f64, AttackError> {
    if x.len() != model.dim() || e.e.len() != model.dim() {
        return Err(AttackError::Dimension {
            expected: model.dim(),
            got: if x.len() != model.dim() { x.len() } else { e.e.len() },
        });
    }
    let dot = |a: &[f64]| -> f64 { model.w.iter().zip(a).map(|(w, v)| w * v).sum() };
    match fe {
        None => Ok(dot(&e.e).abs()),
        Some(fe) => {
            let clean = fe.apply(x)?;
            let attacked = fe.apply(&e.apply(x, false))?;
            let diff: Vec<f64> = attacked.iter().zip(&clean).map(|(a, b)| a - b).collect();
            Ok(dot(&diff).abs())
        }
    }
}
