//! Sparsifying front end: keep the K largest-magnitude transform coefficients
//! of the input and synthesize the result.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::{Basis, CoeffVector, TransformError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrontEndError {
    #[error("K = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("rho = {0} must lie in (0, 1]")]
    RhoOutOfRange(f64),
    #[error("epsilon = {0} must be finite and non-negative")]
    BadEpsilon(f64),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// Which frame vectors stand in for the basis columns `ψ_j` in formulas
/// that assume an orthonormal basis. Both choices coincide for orthonormal
/// bases; for biorthogonal CDF 9/7 `Analysis` gives the exact coefficient
/// sensitivity `ψ̃_jᵀe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Synthesis,
    Analysis,
}

impl std::str::FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synthesis" => Ok(Convention::Synthesis),
            "analysis" => Ok(Convention::Analysis),
            other => Err(format!("unknown convention `{other}`")),
        }
    }
}

/// `max_j ‖v_j‖₁` over the frame vectors selected by `convention`.
pub fn max_l1(basis: &Basis, convention: Convention) -> f64 {
    match convention {
        Convention::Synthesis => basis.max_l1_norm(),
        Convention::Analysis => basis.max_l1_norm_analysis(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontEndConfig {
    pub basis: Basis,
    k: usize,
}

impl FrontEndConfig {
    pub fn with_k(basis: Basis, k: usize) -> Result<Self, FrontEndError> {
        let n = basis.dim();
        if k == 0 || k > n {
            return Err(FrontEndError::KOutOfRange { k, n });
        }
        Ok(Self { basis, k })
    }

    /// `K = round(rho * N)`, at least 1.
    pub fn from_rho(basis: Basis, rho: f64) -> Result<Self, FrontEndError> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(FrontEndError::RhoOutOfRange(rho));
        }
        let k = ((rho * basis.dim() as f64).round() as usize).max(1);
        Self::with_k(basis, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rho(&self) -> f64 {
        self.k as f64 / self.basis.dim() as f64
    }

    pub fn code(&self, x: &[f64]) -> Result<SparseCode, FrontEndError> {
        top_k(&self.basis.forward(x)?, self.k)
    }

    /// `x̂ = Ψ sparse(Ψᵀx)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FrontEndError> {
        Ok(self.apply_with_code(x)?.0)
    }

    pub fn apply_with_code(&self, x: &[f64]) -> Result<(Vec<f64>, SparseCode), FrontEndError> {
        let code = self.code(x)?;
        let xhat = self.basis.inverse(&code.coeffs)?;
        Ok((xhat, code))
    }

    pub fn support_of(&self, x: &[f64]) -> Result<Vec<usize>, FrontEndError> {
        Ok(self.code(x)?.support)
    }

    /// Linear map obtained by freezing the support selected at `x`.
    pub fn freeze(&self, x: &[f64]) -> Result<FrozenFrontEnd, FrontEndError> {
        Ok(FrozenFrontEnd::new(self.basis.clone(), self.support_of(x)?))
    }

    /// High-SNR certificate `λ/ε > 2M` with `M` over synthesis vectors.
    pub fn check_high_snr(&self, x: &[f64], epsilon: f64) -> Result<HighSnrReport, FrontEndError> {
        self.check_high_snr_with(x, epsilon, Convention::Synthesis)
    }

    pub fn check_high_snr_with(
        &self,
        x: &[f64],
        epsilon: f64,
        convention: Convention,
    ) -> Result<HighSnrReport, FrontEndError> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(FrontEndError::BadEpsilon(epsilon));
        }
        let code = self.code(x)?;
        let m = max_l1(&self.basis, convention);
        let threshold = 2.0 * m;
        // largest discarded magnitude; zero when x is at most K-sparse
        let tail = code.tail_magnitude(&self.basis.analyze(x)?);
        let certified = if epsilon == 0.0 {
            true
        } else if code.support.is_empty() {
            false
        } else {
            code.lambda / epsilon > threshold
        };
        Ok(HighSnrReport {
            certified,
            lambda: code.lambda,
            max_l1: m,
            threshold,
            epsilon,
            support_size: code.support.len(),
            tail_magnitude: tail,
        })
    }
}

/// Result of [`FrontEndConfig::check_high_snr`].
///
/// The bound `λ/ε > 2M` presumes the input is exactly K-sparse in the basis
/// (`tail_magnitude == 0` and `support_size == K`); outside that regime a
/// certified input can still have its support moved by a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighSnrReport {
    pub certified: bool,
    pub lambda: f64,
    pub max_l1: f64,
    pub threshold: f64,
    pub epsilon: f64,
    pub support_size: usize,
    pub tail_magnitude: f64,
}

impl HighSnrReport {
    pub fn ratio(&self) -> f64 {
        if self.epsilon == 0.0 {
            f64::INFINITY
        } else {
            self.lambda / self.epsilon
        }
    }
}

/// Coefficients zeroed outside the retained support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coeffs: CoeffVector,
    /// Retained indices, ascending.
    pub support: Vec<usize>,
    /// Smallest retained nonzero magnitude (0 when nothing is retained).
    pub lambda: f64,
}

impl SparseCode {
    fn tail_magnitude(&self, full: &[f64]) -> f64 {
        let mut kept = self.support.iter().peekable();
        let mut tail = 0.0_f64;
        for (j, v) in full.iter().enumerate() {
            if kept.peek() == Some(&&j) {
                kept.next();
            } else {
                tail = tail.max(v.abs());
            }
        }
        tail
    }
}

/// Larger magnitude first; ties go to the lower index.
fn rank(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b]
        .abs()
        .total_cmp(&values[a].abs())
        .then_with(|| a.cmp(&b))
}

/// Keeps the `k` largest-magnitude entries. Zero entries are never retained,
/// so the support may hold fewer than `k` indices.
pub fn top_k(c: &CoeffVector, k: usize) -> Result<SparseCode, FrontEndError> {
    let n = c.len();
    if k == 0 || k > n {
        return Err(FrontEndError::KOutOfRange { k, n });
    }
    let values = &c.values;
    let mut candidates: Vec<usize> = (0..n).filter(|&j| values[j] != 0.0).collect();
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, |&a, &b| rank(values, a, b));
        candidates.truncate(k);
    }
    candidates.sort_unstable();
    let mut kept = vec![0.0; n];
    let mut lambda = f64::INFINITY;
    for &j in &candidates {
        kept[j] = values[j];
        lambda = lambda.min(values[j].abs());
    }
    if candidates.is_empty() {
        lambda = 0.0;
    }
    let mut coeffs = c.clone();
    coeffs.values = kept;
    Ok(SparseCode {
        coeffs,
        support: candidates,
        lambda,
    })
}

/// The front end with its support fixed: the linear map
/// `x ↦ Σ_{k∈S} ψ_k ψ̃_kᵀ x`.
#[derive(Debug, Clone)]
pub struct FrozenFrontEnd {
    basis: Basis,
    support: Vec<usize>,
    mask: Vec<bool>,
}

impl FrozenFrontEnd {
    pub fn new(basis: Basis, support: Vec<usize>) -> Self {
        let mut mask = vec![false; basis.dim()];
        for &j in &support {
            mask[j] = true;
        }
        Self {
            basis,
            support,
            mask,
        }
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    fn masked(&self, mut c: Vec<f64>) -> Vec<f64> {
        for (v, keep) in c.iter_mut().zip(&self.mask) {
            if !keep {
                *v = 0.0;
            }
        }
        c
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, TransformError> {
        let c = self.masked(self.basis.analyze(x)?);
        self.basis.synthesize(&c)
    }

    /// Transpose of [`FrozenFrontEnd::apply`]; pulls an image-space gradient
    /// back through the frozen front end.
    pub fn adjoint(&self, g: &[f64]) -> Result<Vec<f64>, TransformError> {
        let c = self.masked(self.basis.synthesize_adjoint(g)?);
        self.basis.analyze_adjoint(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::BasisKind;

    fn haar28(levels: usize) -> Basis {
        Basis::new(BasisKind::Haar, 28, 28, levels).unwrap()
    }

    #[test]
    fn top2_by_magnitude() {
        let basis = Basis::identity(4).unwrap();
        let c = basis.coeffs(vec![3.0, -1.0, 0.5, 2.0]).unwrap();
        let code = top_k(&c, 2).unwrap();
        assert_eq!(code.support, vec![0, 3]);
        assert_eq!(code.coeffs.values, vec![3.0, 0.0, 0.0, 2.0]);
        assert_eq!(code.lambda, 2.0);
    }

    #[test]
    fn k_equal_n_keeps_all_nonzeros() {
        let basis = Basis::identity(5).unwrap();
        let c = basis.coeffs(vec![1.0, 0.0, -2.0, 0.25, 0.0]).unwrap();
        let code = top_k(&c, 5).unwrap();
        assert_eq!(code.support, vec![0, 2, 3]);
        assert_eq!(code.coeffs.values, c.values);
        assert_eq!(code.lambda, 0.25);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let basis = Basis::identity(2).unwrap();
        let c = basis.coeffs(vec![1.0, -1.0]).unwrap();
        assert_eq!(top_k(&c, 1).unwrap().support, vec![0]);
        let basis = Basis::identity(6).unwrap();
        let c = basis.coeffs(vec![0.5, 2.0, -0.5, 2.0, 0.5, -2.0]).unwrap();
        assert_eq!(top_k(&c, 4).unwrap().support, vec![0, 1, 3, 5]);
    }

    #[test]
    fn k_out_of_range() {
        let basis = Basis::identity(3).unwrap();
        let c = basis.coeffs(vec![1.0; 3]).unwrap();
        assert!(matches!(top_k(&c, 0), Err(FrontEndError::KOutOfRange { .. })));
        assert!(matches!(top_k(&c, 4), Err(FrontEndError::KOutOfRange { .. })));
        assert!(FrontEndConfig::from_rho(basis.clone(), 0.0).is_err());
        assert!(FrontEndConfig::from_rho(basis, 1.5).is_err());
    }

    #[test]
    fn k_from_rho() {
        assert_eq!(FrontEndConfig::from_rho(haar28(2), 0.02).unwrap().k(), 16);
        assert_eq!(FrontEndConfig::from_rho(haar28(2), 0.03).unwrap().k(), 24);
        assert_eq!(FrontEndConfig::from_rho(haar28(2), 1e-6).unwrap().k(), 1);
    }

    #[test]
    fn full_k_is_identity() {
        let fe = FrontEndConfig::with_k(haar28(2), 784).unwrap();
        let x: Vec<f64> = (0..784).map(|i| ((i * 31) % 17) as f64 / 17.0).collect();
        let xhat = fe.apply(&x).unwrap();
        for (a, b) in x.iter().zip(&xhat) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_inputs_are_fixed_points() {
        for kind in [BasisKind::Haar, BasisKind::Cdf97] {
            let basis = Basis::new(kind, 28, 28, 2).unwrap();
            let mut c = vec![0.0; 784];
            for (i, j) in [3usize, 50, 77, 200, 401, 650].iter().enumerate() {
                c[*j] = (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
            }
            let x = basis.synthesize(&c).unwrap();
            let fe = FrontEndConfig::with_k(basis, 6).unwrap();
            let xhat = fe.apply(&x).unwrap();
            for (a, b) in x.iter().zip(&xhat) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scaled_atom_support() {
        let basis = haar28(2);
        let atom: Vec<f64> = basis.basis_vector(5).unwrap().iter().map(|v| v * 10.0).collect();
        for k in [1, 3, 16] {
            let fe = FrontEndConfig::with_k(basis.clone(), k).unwrap();
            assert!(fe.support_of(&atom).unwrap().contains(&5));
        }
    }

    #[test]
    fn certificate_formula() {
        // λ = 2, M = 2 on the one-level 2x2 Haar basis
        let basis = Basis::new(BasisKind::Haar, 2, 2, 1).unwrap();
        let x = basis.synthesize(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        let fe = FrontEndConfig::with_k(basis, 1).unwrap();
        let r = fe.check_high_snr(&x, 0.12).unwrap();
        assert!((r.max_l1 - 2.0).abs() < 1e-12);
        assert!((r.lambda - 2.0).abs() < 1e-12);
        assert!(r.certified);
        assert!((r.ratio() - 16.666_666_666_666_67).abs() < 1e-9);
        // boundary: λ/ε = 2M exactly is not certified (identity basis, M = 1)
        let fe = FrontEndConfig::with_k(Basis::identity(3).unwrap(), 1).unwrap();
        let r = fe.check_high_snr(&[0.0, 2.0, 0.0], 1.0).unwrap();
        assert_eq!(r.ratio(), 2.0);
        assert_eq!(r.threshold, 2.0);
        assert!(!r.certified);
        assert!(fe.check_high_snr(&[0.0, 2.0, 0.0], 0.999).unwrap().certified);
    }

    #[test]
    fn certificate_degenerate_cases() {
        let fe = FrontEndConfig::with_k(haar28(2), 16).unwrap();
        let zero = vec![0.0; 784];
        assert!(fe.check_high_snr(&zero, 0.0).unwrap().certified);
        assert!(!fe.check_high_snr(&zero, 0.1).unwrap().certified);
        assert!(fe.check_high_snr(&zero, -1.0).is_err());
    }

    #[test]
    fn frozen_front_end_matches_apply_and_adjoint() {
        let basis = Basis::new(BasisKind::Cdf97, 28, 28, 2).unwrap();
        let fe = FrontEndConfig::with_k(basis, 24).unwrap();
        let x: Vec<f64> = (0..784).map(|i| ((i * 13) % 29) as f64 / 29.0).collect();
        let frozen = fe.freeze(&x).unwrap();
        let a = fe.apply(&x).unwrap();
        let b = frozen.apply(&x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let g: Vec<f64> = (0..784).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let lhs: f64 = frozen.apply(&g).unwrap().iter().zip(&x).map(|(p, q)| p * q).sum();
        let rhs: f64 = frozen.adjoint(&x).unwrap().iter().zip(&g).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
