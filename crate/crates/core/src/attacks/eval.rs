use serde::{Deserialize, Serialize};

use super::{
    check_epsilon, fgsm, l1, pairwise_attack, projection, AttackError, AttackKind, Perturbation,
};
use crate::data::{BinaryDataset, Dataset};
use crate::frontend::{Convention, FrontEndConfig};
use crate::models::{argmax, LinearModel, Network};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub epsilon: f64,
    /// Clip `x + e` to [0, 1] before classification.
    pub clip: bool,
    pub convention: Convention,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            clip: false,
            convention: Convention::default(),
        }
    }
}

/// Outcome of attacking one test sample. Labels are class indices for
/// networks and digits for binary linear models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub label: usize,
    pub clean_prediction: usize,
    pub attacked_prediction: usize,
    /// `(i, t)`: the attacked class and the true class.
    pub pair: (usize, usize),
    /// Attacker's predicted `y_i − y_t` after the attack; absent for FGSM.
    pub predicted_gap: Option<f64>,
    /// `y_i − y_t` of the deployed pipeline before the attack.
    pub clean_gap: f64,
    /// `y_i − y_t` of the deployed pipeline after the attack.
    pub achieved_gap: f64,
    /// Whether the front end certifies the clean input at this budget.
    pub certified: Option<bool>,
    /// False when FGSM met a vanishing gradient.
    pub gradient_nonzero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub spec: AttackSpec,
    pub samples: usize,
    pub clean_correct: usize,
    pub attacked_correct: usize,
    pub clean_accuracy: f64,
    pub attacked_accuracy: f64,
    /// Mean of `|achieved_gap − clean_gap|`.
    pub mean_distortion: f64,
    pub certified: Option<usize>,
    pub zero_gradients: usize,
    pub records: Vec<SampleRecord>,
}

impl EvalReport {
    fn from_records(spec: AttackSpec, records: Vec<SampleRecord>) -> Self {
        let n = records.len();
        let clean_correct = records.iter().filter(|r| r.clean_prediction == r.label).count();
        let attacked_correct = records.iter().filter(|r| r.attacked_prediction == r.label).count();
        let distortion: f64 = records.iter().map(|r| (r.achieved_gap - r.clean_gap).abs()).sum();
        let certified = records
            .first()
            .and_then(|r| r.certified)
            .map(|_| records.iter().filter(|r| r.certified == Some(true)).count());
        Self {
            spec,
            samples: n,
            clean_correct,
            attacked_correct,
            clean_accuracy: clean_correct as f64 / n as f64,
            attacked_accuracy: attacked_correct as f64 / n as f64,
            mean_distortion: distortion / n as f64,
            certified,
            zero_gradients: records.iter().filter(|r| !r.gradient_nonzero).count(),
            records,
        }
    }
}

fn pipeline(fe: Option<&FrontEndConfig>, x: &[f64]) -> Result<Vec<f64>, AttackError> {
    Ok(match fe {
        Some(fe) => fe.apply(x)?,
        None => x.to_vec(),
    })
}

fn certified(fe: Option<&FrontEndConfig>, x: &[f64], eps: f64) -> Result<Option<bool>, AttackError> {
    Ok(match fe {
        Some(fe) => Some(fe.check_high_snr(x, eps)?.certified),
        None => None,
    })
}

/// Attacks every sample of `data` against `net`, optionally behind a front
/// end. Samples are processed in parallel; the report does not depend on
/// the worker count.
pub fn evaluate_network(
    net: &Network,
    fe: Option<&FrontEndConfig>,
    data: &Dataset,
    spec: AttackSpec,
) -> Result<EvalReport, AttackError> {
    check_epsilon(spec.epsilon)?;
    if data.is_empty() {
        return Err(AttackError::EmptyData);
    }
    let records = par::try_map_indexed(data.len(), |id| {
        let x = data.image(id);
        let t = usize::from(data.label(id));
        let clean = net.logits(&pipeline(fe, x)?)?;
        let (e, predicted, pair_class, nonzero) = match spec.kind {
            AttackKind::Fgsm => {
                let (e, nonzero) = fgsm(net, fe, x, t, spec.epsilon)?;
                (e, None, None, nonzero)
            }
            kind => {
                let r = pairwise_attack(net, fe, x, t, spec.epsilon, kind, spec.convention)?;
                let g = r.predicted_gap();
                (r.perturbation, Some(g), Some(r.chosen.0), true)
            }
        };
        let attacked = net.logits(&pipeline(fe, &e.apply(x, spec.clip))?)?;
        // FGSM has no target; report the pair it pushed furthest
        let i = pair_class.unwrap_or_else(|| {
            (0..attacked.len())
                .filter(|&i| i != t)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if attacked[b] >= attacked[i] => Some(b),
                    _ => Some(i),
                })
                .expect("at least two classes")
        });
        Ok::<_, AttackError>(SampleRecord {
            id,
            label: t,
            clean_prediction: argmax(&clean),
            attacked_prediction: argmax(&attacked),
            pair: (i, t),
            predicted_gap: predicted,
            clean_gap: clean[i] - clean[t],
            achieved_gap: attacked[i] - attacked[t],
            certified: certified(fe, x, spec.epsilon)?,
            gradient_nonzero: nonzero,
        })
    })?;
    Ok(EvalReport::from_records(spec, records))
}

/// Attacks a binary linear classifier. Sample `x` with label `y = ±1` is
/// pushed towards the other class: `e = −y·ε·sign(w)` (semi-white) or
/// `e = −y·ε·sign(proj(w, S(x)))` (white). Without a front end both
/// coincide. FGSM is not defined for the hinge-loss model.
pub fn evaluate_linear(
    model: &LinearModel,
    fe: Option<&FrontEndConfig>,
    data: &BinaryDataset,
    spec: AttackSpec,
) -> Result<EvalReport, AttackError> {
    check_epsilon(spec.epsilon)?;
    if data.is_empty() {
        return Err(AttackError::EmptyData);
    }
    if spec.kind == AttackKind::Fgsm {
        return Err(AttackError::Unsupported(
            "fgsm applies to networks; use semiwhite or white for the linear model".into(),
        ));
    }
    if model.dim() != data.dim() {
        return Err(AttackError::Dimension {
            expected: model.dim(),
            got: data.dim(),
        });
    }
    let digit = |y: f64| usize::from(if y > 0.0 { data.positive } else { data.negative });
    let records = par::try_map_indexed(data.len(), |id| {
        let x = data.image(id);
        let y = data.label(id);
        let xh = pipeline(fe, x)?;
        let (dir, seen) = match (spec.kind, fe) {
            (AttackKind::White, Some(fe)) => {
                let s = fe.support_of(x)?;
                (projection(&model.w, &s, &fe.basis, spec.convention)?, xh.as_slice())
            }
            _ => (model.w.clone(), x),
        };
        let e = Perturbation::signed(&dir, spec.epsilon, -y);
        let clean = model.decision(&xh);
        let attacked = model.decision(&pipeline(fe, &e.apply(x, spec.clip))?);
        Ok::<_, AttackError>(SampleRecord {
            id,
            label: digit(y),
            clean_prediction: digit(model.predict(&xh)),
            attacked_prediction: digit(if attacked >= 0.0 { 1.0 } else { -1.0 }),
            pair: (digit(-y), digit(y)),
            predicted_gap: Some(-y * model.decision(seen) + spec.epsilon * l1(&dir)),
            clean_gap: -y * clean,
            achieved_gap: -y * attacked,
            certified: certified(fe, x, spec.epsilon)?,
            gradient_nonzero: true,
        })
    })?;
    Ok(EvalReport::from_records(spec, records))
}
