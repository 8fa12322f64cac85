//! Direct FIR filter bank for CDF 9/7, used as an oracle for the lifting
//! implementation.
//!
//! Each line is convolved with the published 9-tap low-pass and 7-tap
//! high-pass analysis filters (DC gain 1 / Nyquist gain 2, rescaled by
//! sqrt(2)); boundaries extend by whole-sample symmetry, even outputs form
//! the low band and odd outputs the high band. Shares no code with the
//! lifting implementation.

const LOW_TAPS: [f64; 5] = [
    0.602_949_018_236_358,
    0.266_864_118_442_872,
    -0.078_223_266_528_988,
    -0.016_864_118_442_875,
    0.026_748_757_410_810,
];
const HIGH_TAPS: [f64; 4] = [
    1.115_087_052_456_994,
    -0.591_271_763_114_247,
    -0.057_543_526_228_500,
    0.091_271_763_114_249,
];

fn sym(x: &[f64], i: isize) -> f64 {
    let n = x.len() as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return x[i as usize];
        }
    }
}

pub fn fir_analyze(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let n_low = n.div_ceil(2);
    let s = std::f64::consts::SQRT_2;
    let mut out = vec![0.0; n];
    for m in 0..n_low {
        let c = 2 * m as isize;
        let mut acc = LOW_TAPS[0] * sym(x, c);
        for k in 1..5 {
            acc += LOW_TAPS[k] * (sym(x, c - k as isize) + sym(x, c + k as isize));
        }
        out[m] = acc * s;
    }
    for m in 0..n / 2 {
        let c = 2 * m as isize + 1;
        let mut acc = HIGH_TAPS[0] * sym(x, c);
        for k in 1..4 {
            acc += HIGH_TAPS[k] * (sym(x, c - k as isize) + sym(x, c + k as isize));
        }
        out[n_low + m] = acc / s;
    }
    out
}

/// Full 2D multi-level oracle; returns coefficients in subband-major order.
pub fn oracle_2d(x: &[f64], h: usize, w: usize, levels: usize) -> Vec<f64> {
    let mut grid = x.to_vec();
    let mut extents = Vec::new();
    let (mut ch, mut cw) = (h, w);
    for _ in 0..levels {
        extents.push((ch, cw));
        for r in 0..ch {
            let row: Vec<f64> = (0..cw).map(|c| grid[r * w + c]).collect();
            for (c, v) in fir_analyze(&row).into_iter().enumerate() {
                grid[r * w + c] = v;
            }
        }
        for c in 0..cw {
            let col: Vec<f64> = (0..ch).map(|r| grid[r * w + c]).collect();
            for (r, v) in fir_analyze(&col).into_iter().enumerate() {
                grid[r * w + c] = v;
            }
        }
        ch = ch.div_ceil(2);
        cw = cw.div_ceil(2);
    }
    // subband-major read-out: LL, then (LH, HL, HH) coarsest to finest
    let mut out = Vec::with_capacity(h * w);
    let read = |out: &mut Vec<f64>, r0: usize, r1: usize, c0: usize, c1: usize| {
        for r in r0..r1 {
            for c in c0..c1 {
                out.push(grid[r * w + c]);
            }
        }
    };
    read(&mut out, 0, ch, 0, cw);
    for &(ph, pw) in extents.iter().rev() {
        let (lh, lw) = (ph.div_ceil(2), pw.div_ceil(2));
        read(&mut out, lh, ph, 0, lw);
        read(&mut out, 0, lh, lw, pw);
        read(&mut out, lh, ph, lw, pw);
    }
    out
}
