//! Randomized soundness check for the high-SNR certificate.
//!
//! Inputs are exactly K-sparse (the certificate's premise). Each certified
//! input meets five perturbations: one shrinking its weakest retained
//! coefficient along that frame vector, one growing a discarded
//! coefficient, their combination, a uniform draw from the ball and a
//! random sign pattern.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsedef::frontend::{Convention, FrontEndConfig};
use sparsedef::transform::{Basis, BasisKind};

/// Exactly K-sparse input whose retained magnitudes are all at least `lambda`.
pub fn k_sparse(basis: &Basis, k: usize, lambda: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = basis.dim();
    let idx = rand::seq::index::sample(rng, n, k);
    let mut c = vec![0.0; n];
    for j in idx {
        let mag = lambda * rng.gen_range(1.0..3.0);
        c[j] = if rng.gen_bool(0.5) { mag } else { -mag };
    }
    basis.synthesize(&c).unwrap()
}

fn frame_vector(basis: &Basis, j: usize, convention: Convention) -> Vec<f64> {
    match convention {
        Convention::Synthesis => basis.basis_vector(j).unwrap(),
        Convention::Analysis => basis.analysis_vector(j).unwrap(),
    }
}

fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Bases, conventions and K values covered by the check.
pub fn cases() -> Vec<(Basis, Convention, usize)> {
    vec![
        (Basis::identity(64).unwrap(), Convention::Synthesis, 4),
        (Basis::new(BasisKind::Haar, 28, 28, 2).unwrap(), Convention::Synthesis, 16),
        (Basis::new(BasisKind::Haar, 8, 8, 3).unwrap(), Convention::Synthesis, 5),
        (Basis::new(BasisKind::Cdf97, 28, 28, 2).unwrap(), Convention::Analysis, 16),
    ]
}

#[derive(Debug, Default)]
pub struct Tally {
    pub instances: usize,
    pub perturbations: usize,
    /// Perturbations that moved the support of a certified input.
    pub support_changes: usize,
    pub over_budget: usize,
}

/// Runs `per_case` certified instances for every entry of [`cases`].
pub fn run(per_case: usize, seed: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for (basis, convention, k) in &cases() {
        let fe = FrontEndConfig::with_k(basis.clone(), *k).unwrap();
        for _ in 0..per_case {
            let x = k_sparse(basis, *k, 1.0, &mut rng);
            let report = fe.check_high_snr_with(&x, 1.0, *convention).unwrap();
            let eps = report.lambda / report.threshold * rng.gen_range(0.05..0.999);
            let report = fe.check_high_snr_with(&x, eps, *convention).unwrap();
            assert!(report.certified, "budget chosen below the threshold");
            let code = fe.code(&x).unwrap();
            let n = basis.dim();
            let weakest = *code
                .support
                .iter()
                .min_by(|&&a, &&b| code.coeffs.values[a].abs().total_cmp(&code.coeffs.values[b].abs()))
                .unwrap();
            let outside = (0..n).find(|j| !code.support.contains(j)).unwrap();
            let shrink: Vec<f64> = frame_vector(basis, weakest, *convention)
                .iter()
                .map(|v| -eps * sgn(code.coeffs.values[weakest]) * sgn(*v))
                .collect();
            let grow: Vec<f64> = frame_vector(basis, outside, *convention)
                .iter()
                .map(|v| eps * sgn(*v))
                .collect();
            let mixed: Vec<f64> = shrink.iter().zip(&grow).map(|(a, b)| if a != &0.0 { *a } else { *b }).collect();
            let uniform: Vec<f64> = (0..n).map(|_| rng.gen_range(-eps..=eps)).collect();
            let signs: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { eps } else { -eps }).collect();
            for e in [shrink, grow, mixed, uniform, signs] {
                t.perturbations += 1;
                if e.iter().any(|v| v.abs() > eps) {
                    t.over_budget += 1;
                }
                let xp: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + b).collect();
                if fe.support_of(&xp).unwrap() != code.support {
                    t.support_changes += 1;
                }
            }
            t.instances += 1;
        }
    }
    t
}
