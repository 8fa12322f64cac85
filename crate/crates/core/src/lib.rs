//! Sparsity-based defense against adversarial perturbations: wavelet
//! sparsifying front ends, classifiers, attacks and attenuation experiments.

pub mod attacks;
pub mod attenuation;
pub mod data;
pub mod frontend;
pub(crate) mod linalg;
pub mod models;
pub mod par;
pub mod transform;
