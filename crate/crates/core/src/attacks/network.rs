use serde::{Deserialize, Serialize};

use super::{check_epsilon, l1, projection, AttackError, AttackKind, Perturbation};
use crate::frontend::{Convention, FrontEndConfig, FrozenFrontEnd};
use crate::models::{softmax, Network, SwitchState};

/// Affine model `y_i = w_eq^{i}ᵀx − b_eq^{i}`, exact wherever the recorded
/// switches (and front-end support, if any) are unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocallyLinearModel {
    /// L x N, row-major; row i is `w_eq^{i}`.
    pub w_eq: Vec<f64>,
    pub b_eq: Vec<f64>,
    pub anchor: Vec<f64>,
    pub switches: SwitchState,
    /// Front-end support frozen at the anchor.
    pub support: Option<Vec<usize>>,
    /// Logits at the anchor from the ordinary forward pass.
    pub logits: Vec<f64>,
}

impl LocallyLinearModel {
    pub fn classes(&self) -> usize {
        self.b_eq.len()
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.w_eq[i * n..(i + 1) * n]
    }

    /// `w_eq^{i} − w_eq^{t}`.
    pub fn pair_weights(&self, i: usize, t: usize) -> Vec<f64> {
        self.row(i).iter().zip(self.row(t)).map(|(a, b)| a - b).collect()
    }

    /// `w_eqᵀx − b_eq` for every class.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes())
            .map(|i| self.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() - self.b_eq[i])
            .collect()
    }
}

/// Freezes every switch of the network (and, with a front end, the retained
/// support) at `x` and returns the resulting affine map of `x`.
///
/// `w_eq` comes from one reverse sweep per class through the frozen network;
/// `b_eq` is minus the frozen map evaluated at the origin.
pub fn extract_locally_linear(
    net: &Network,
    x: &[f64],
    fe: Option<&FrontEndConfig>,
) -> Result<LocallyLinearModel, AttackError> {
    let n = net.input_len();
    if x.len() != n {
        return Err(AttackError::Dimension { expected: n, got: x.len() });
    }
    let (input, frozen) = match fe {
        Some(fe) => {
            let (xh, code) = fe.apply_with_code(x)?;
            (xh, Some(FrozenFrontEnd::new(fe.basis.clone(), code.support)))
        }
        None => (x.to_vec(), None),
    };
    let (y, switches) = net.forward_record(&input)?;
    let (_, jac) = net.jacobian(&input)?;
    let l = net.classes();
    let w_eq = match &frozen {
        None => jac,
        Some(f) => {
            let mut out = Vec::with_capacity(l * n);
            for i in 0..l {
                out.extend(f.adjoint(&jac[i * n..(i + 1) * n])?);
            }
            out
        }
    };
    let b_eq = net
        .forward_frozen(&vec![0.0; n], &switches)?
        .into_iter()
        .map(|v| -v)
        .collect();
    Ok(LocallyLinearModel {
        w_eq,
        b_eq,
        anchor: x.to_vec(),
        switches,
        support: frozen.map(|f| f.support().to_vec()),
        logits: y,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub class: usize,
    /// `y_i − y_t` before the attack.
    pub clean_gap: f64,
    /// Gap change predicted by the attacker's linear model.
    pub predicted_distortion: f64,
}

impl PairGap {
    pub fn predicted_gap(&self) -> f64 {
        self.clean_gap + self.predicted_distortion
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub perturbation: Perturbation,
    pub kind: AttackKind,
    /// One entry per class `i ≠ t`, in class order.
    pub pairs: Vec<PairGap>,
    /// `(i*, t)`.
    pub chosen: (usize, usize),
}

impl AttackResult {
    pub fn predicted_gap(&self) -> f64 {
        self.pairs
            .iter()
            .find(|p| p.class == self.chosen.0)
            .map_or(f64::NAN, PairGap::predicted_gap)
    }
}

fn check_label(net: &Network, t: usize) -> Result<usize, AttackError> {
    let l = net.classes();
    if l < 2 {
        return Err(AttackError::TooFewClasses(l));
    }
    if t >= l {
        return Err(AttackError::BadLabel { label: t, classes: l });
    }
    Ok(l)
}

/// Worst-case pairwise attack with the true label `t` known.
///
/// For every `i ≠ t` the attacker forms `w = w_eq^{i} − w_eq^{t}` and crafts
/// `ε·sign(w)` (semi-white, linearized at `x` on the bare network) or
/// `ε·sign(proj(w, S(x)))` (white, network linearized at the sparsified
/// input). The pair with the largest predicted attacked gap wins; ties go to
/// the lowest class. Without a front end both modes coincide.
pub fn pairwise_attack(
    net: &Network,
    fe: Option<&FrontEndConfig>,
    x: &[f64],
    t: usize,
    epsilon: f64,
    kind: AttackKind,
    convention: Convention,
) -> Result<AttackResult, AttackError> {
    check_epsilon(epsilon)?;
    let l = check_label(net, t)?;
    let (fe, input) = match (kind, fe) {
        (AttackKind::White, Some(fe)) => (Some(fe), fe.apply(x)?),
        (AttackKind::Fgsm, _) => {
            return Err(AttackError::Unsupported("use fgsm() for gradient attacks".into()))
        }
        _ => (None, x.to_vec()),
    };
    let support = fe.map(|f| f.support_of(x)).transpose()?;
    let llm = extract_locally_linear(net, &input, None)?;
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut pairs = Vec::with_capacity(l - 1);
    for i in (0..l).filter(|&i| i != t) {
        let w = llm.pair_weights(i, t);
        let dir = match (fe, &support) {
            (Some(f), Some(s)) => projection(&w, s, &f.basis, convention)?,
            _ => w,
        };
        let gap = PairGap {
            class: i,
            clean_gap: llm.logits[i] - llm.logits[t],
            predicted_distortion: epsilon * l1(&dir),
        };
        let g = gap.predicted_gap();
        if best.as_ref().map_or(true, |(b, _, _)| g > *b) {
            best = Some((g, dir, i));
        }
        pairs.push(gap);
    }
    let (_, dir, i_star) = best.expect("at least one pair");
    Ok(AttackResult {
        perturbation: Perturbation::signed(&dir, epsilon, 1.0),
        kind,
        pairs,
        chosen: (i_star, t),
    })
}

/// Fast gradient sign step `ε·sign(∇_x CE(softmax(y(x)), t))`.
///
/// With a front end the gradient is pulled back through the front end with
/// its support frozen at `x`. The logit gradient of the loss is assembled as
/// `Σ_{i≠t} p_i (∇y_i − ∇y_t)`. The flag is false, and the perturbation
/// zero, when the gradient vanishes.
pub fn fgsm(
    net: &Network,
    fe: Option<&FrontEndConfig>,
    x: &[f64],
    t: usize,
    epsilon: f64,
) -> Result<(Perturbation, bool), AttackError> {
    check_epsilon(epsilon)?;
    let l = check_label(net, t)?;
    let llm = extract_locally_linear(net, x, fe)?;
    let p = softmax(&llm.logits);
    let n = llm.dim();
    let mut g = vec![0.0; n];
    for i in (0..l).filter(|&i| i != t) {
        for (gj, (a, b)) in g.iter_mut().zip(llm.row(i).iter().zip(llm.row(t))) {
            *gj += p[i] * (a - b);
        }
    }
    let nonzero = g.iter().any(|&v| v != 0.0);
    Ok((Perturbation::signed(&g, epsilon, 1.0), nonzero))
}
