//! One-dimensional two-channel filter banks acting on a single line.
//!
//! Every routine works in place on `line`. On the analysis side the output
//! line holds `ceil(n/2)` low-pass samples followed by `floor(n/2)` high-pass
//! samples. The adjoint routines apply the exact matrix transpose of the
//! corresponding analysis or synthesis operator.

use std::f64::consts::SQRT_2;

/// Lifting factorization of the CDF 9/7 analysis filter bank.
///
/// Four lifting steps alternate between odd (predict) and even (update)
/// samples, followed by a per-band scaling. With the scaling below the
/// low-pass analysis filter has DC gain `sqrt(2)`.
pub mod cdf97 {
    pub const ALPHA: f64 = -1.586_134_342_059_924;
    pub const BETA: f64 = -0.052_980_118_572_961;
    pub const GAMMA: f64 = 0.882_911_075_530_934;
    pub const DELTA: f64 = 0.443_506_852_043_971;
    pub const ZETA: f64 = 1.230_174_104_914_001;

    /// (coefficient, parity of the samples being updated)
    pub const STEPS: [(f64, usize); 4] = [(ALPHA, 1), (BETA, 0), (GAMMA, 1), (DELTA, 0)];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Filter {
    Haar,
    Cdf97,
}

/// Whole-sample symmetric extension for the one-step neighbours used by lifting.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

#[inline]
fn lift(line: &mut [f64], coeff: f64, parity: usize) {
    let n = line.len();
    let mut i = parity;
    while i < n {
        let l = reflect(i as isize - 1, n);
        let r = reflect(i as isize + 1, n);
        line[i] += coeff * (line[l] + line[r]);
        i += 2;
    }
}

/// Transpose of [`lift`]: the updated samples scatter into their neighbours.
#[inline]
fn lift_adjoint(line: &mut [f64], coeff: f64, parity: usize) {
    let n = line.len();
    let mut i = parity;
    while i < n {
        let l = reflect(i as isize - 1, n);
        let r = reflect(i as isize + 1, n);
        let v = coeff * line[i];
        line[l] += v;
        line[r] += v;
        i += 2;
    }
}

fn deinterleave(line: &mut [f64], scratch: &mut Vec<f64>, low_scale: f64, high_scale: f64) {
    let n = line.len();
    let n_low = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(line);
    for k in 0..n_low {
        line[k] = scratch[2 * k] * low_scale;
    }
    for k in 0..n / 2 {
        line[n_low + k] = scratch[2 * k + 1] * high_scale;
    }
}

fn interleave(line: &mut [f64], scratch: &mut Vec<f64>, low_scale: f64, high_scale: f64) {
    let n = line.len();
    let n_low = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(line);
    for k in 0..n_low {
        line[2 * k] = scratch[k] * low_scale;
    }
    for k in 0..n / 2 {
        line[2 * k + 1] = scratch[n_low + k] * high_scale;
    }
}

fn haar_analyze(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len();
    let n_low = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(line);
    for k in 0..n / 2 {
        let (a, b) = (scratch[2 * k], scratch[2 * k + 1]);
        line[k] = (a + b) / SQRT_2;
        line[n_low + k] = (a - b) / SQRT_2;
    }
    if n % 2 == 1 {
        // unpaired trailing sample passes through to the low band
        line[n_low - 1] = scratch[n - 1];
    }
}

fn haar_synthesize(line: &mut [f64], scratch: &mut Vec<f64>) {
    let n = line.len();
    let n_low = n.div_ceil(2);
    scratch.clear();
    scratch.extend_from_slice(line);
    for k in 0..n / 2 {
        let (lo, hi) = (scratch[k], scratch[n_low + k]);
        line[2 * k] = (lo + hi) / SQRT_2;
        line[2 * k + 1] = (lo - hi) / SQRT_2;
    }
    if n % 2 == 1 {
        line[n - 1] = scratch[n_low - 1];
    }
}

const LOW_SCALE: f64 = SQRT_2 / cdf97::ZETA;
const HIGH_SCALE: f64 = cdf97::ZETA / SQRT_2;

impl Filter {
    pub(crate) fn analyze(self, line: &mut [f64], scratch: &mut Vec<f64>) {
        if line.len() < 2 {
            return;
        }
        match self {
            Filter::Haar => haar_analyze(line, scratch),
            Filter::Cdf97 => {
                for (c, p) in cdf97::STEPS {
                    lift(line, c, p);
                }
                deinterleave(line, scratch, LOW_SCALE, HIGH_SCALE);
            }
        }
    }

    pub(crate) fn synthesize(self, line: &mut [f64], scratch: &mut Vec<f64>) {
        if line.len() < 2 {
            return;
        }
        match self {
            Filter::Haar => haar_synthesize(line, scratch),
            Filter::Cdf97 => {
                interleave(line, scratch, 1.0 / LOW_SCALE, 1.0 / HIGH_SCALE);
                for (c, p) in cdf97::STEPS.iter().rev() {
                    lift(line, -c, *p);
                }
            }
        }
    }

    /// Transpose of [`Filter::analyze`].
    pub(crate) fn analyze_adjoint(self, line: &mut [f64], scratch: &mut Vec<f64>) {
        if line.len() < 2 {
            return;
        }
        match self {
            // orthogonal: transpose equals inverse
            Filter::Haar => haar_synthesize(line, scratch),
            Filter::Cdf97 => {
                interleave(line, scratch, LOW_SCALE, HIGH_SCALE);
                for (c, p) in cdf97::STEPS.iter().rev() {
                    lift_adjoint(line, *c, *p);
                }
            }
        }
    }

    /// Transpose of [`Filter::synthesize`].
    pub(crate) fn synthesize_adjoint(self, line: &mut [f64], scratch: &mut Vec<f64>) {
        if line.len() < 2 {
            return;
        }
        match self {
            Filter::Haar => haar_analyze(line, scratch),
            Filter::Cdf97 => {
                for (c, p) in cdf97::STEPS {
                    lift_adjoint(line, -c, p);
                }
                deinterleave(line, scratch, 1.0 / LOW_SCALE, 1.0 / HIGH_SCALE);
            }
        }
    }
}
