//! Multi-level separable 2D wavelet bases.
//!
//! A [`Basis`] pairs an analysis operator (`Ψᵀ` for orthonormal bases) with
//! its synthesis inverse `Ψ`. Three kinds are provided: the identity (useful
//! as a reference basis), orthonormal Haar, and biorthogonal CDF 9/7 realized
//! by lifting with whole-sample symmetric boundary extension.
//!
//! Coefficients are laid out subband-major (see [`SubbandLayout`]).

pub(crate) mod filters;
mod layout;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use filters::Filter;
pub use layout::{Orientation, Subband, SubbandLayout};

pub use filters::cdf97 as cdf97_constants;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("input has {got} samples, basis expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{levels} levels invalid for a {height}x{width} image (max {max})")]
    InvalidLevels {
        levels: usize,
        height: usize,
        width: usize,
        max: usize,
    },
    #[error("image dimensions must be positive")]
    EmptyImage,
    #[error("coefficient vector layout does not match basis")]
    LayoutMismatch,
    #[error("coefficient index {index} out of range for N = {n}")]
    IndexOutOfRange { index: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Identity,
    Haar,
    Cdf97,
}

impl BasisKind {
    pub fn is_orthonormal(self) -> bool {
        matches!(self, BasisKind::Identity | BasisKind::Haar)
    }

    fn filter(self) -> Option<Filter> {
        match self {
            BasisKind::Identity => None,
            BasisKind::Haar => Some(Filter::Haar),
            BasisKind::Cdf97 => Some(Filter::Cdf97),
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Identity => "identity",
            BasisKind::Haar => "haar",
            BasisKind::Cdf97 => "cdf97",
        })
    }
}

impl FromStr for BasisKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(BasisKind::Identity),
            "haar" => Ok(BasisKind::Haar),
            "cdf97" | "cdf9/7" | "9/7" | "bior4.4" => Ok(BasisKind::Cdf97),
            other => Err(format!("unknown basis `{other}` (expected identity, haar or cdf97)")),
        }
    }
}

/// Analysis coefficients `Ψᵀx` tied to the layout that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    pub values: Vec<f64>,
    layout: Arc<SubbandLayout>,
}

impl CoeffVector {
    pub fn layout(&self) -> &SubbandLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Coefficients of one subband, row-major.
    pub fn band(&self, band: &Subband) -> &[f64] {
        &self.values[band.offset..band.offset + band.len()]
    }
}

struct BasisInner {
    kind: BasisKind,
    height: usize,
    width: usize,
    levels: usize,
    layout: Arc<SubbandLayout>,
    /// flat coefficient index -> in-place grid position
    positions: Vec<usize>,
    max_l1_synthesis: OnceLock<f64>,
    max_l1_analysis: OnceLock<f64>,
}

/// An invertible analysis/synthesis pair on `height x width` images.
///
/// Cloning is cheap; clones share the cached column norms.
#[derive(Clone)]
pub struct Basis {
    inner: Arc<BasisInner>,
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Basis")
            .field("kind", &self.inner.kind)
            .field("height", &self.inner.height)
            .field("width", &self.inner.width)
            .field("levels", &self.inner.levels)
            .finish()
    }
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.kind() == other.kind()
            && self.height() == other.height()
            && self.width() == other.width()
            && self.levels() == other.levels()
    }
}

/// Deepest decomposition supported on an image.
pub fn max_levels(height: usize, width: usize) -> usize {
    let m = height.min(width);
    if m == 0 {
        0
    } else {
        m.ilog2() as usize
    }
}

impl Basis {
    /// `levels` is ignored for the identity basis.
    pub fn new(
        kind: BasisKind,
        height: usize,
        width: usize,
        levels: usize,
    ) -> Result<Self, TransformError> {
        if height == 0 || width == 0 {
            return Err(TransformError::EmptyImage);
        }
        let levels = if kind == BasisKind::Identity {
            0
        } else {
            let max = max_levels(height, width);
            if levels == 0 || levels > max {
                return Err(TransformError::InvalidLevels {
                    levels,
                    height,
                    width,
                    max,
                });
            }
            levels
        };
        let layout = SubbandLayout::new(height, width, levels);
        let positions = layout.positions();
        Ok(Self {
            inner: Arc::new(BasisInner {
                kind,
                height,
                width,
                levels,
                layout: Arc::new(layout),
                positions,
                max_l1_synthesis: OnceLock::new(),
                max_l1_analysis: OnceLock::new(),
            }),
        })
    }

    pub fn identity(n: usize) -> Result<Self, TransformError> {
        Self::new(BasisKind::Identity, 1, n, 0)
    }

    pub fn kind(&self) -> BasisKind {
        self.inner.kind
    }

    pub fn height(&self) -> usize {
        self.inner.height
    }

    pub fn width(&self) -> usize {
        self.inner.width
    }

    pub fn levels(&self) -> usize {
        self.inner.levels
    }

    /// Signal dimension N.
    pub fn dim(&self) -> usize {
        self.inner.height * self.inner.width
    }

    pub fn layout(&self) -> &SubbandLayout {
        &self.inner.layout
    }

    fn check_len(&self, len: usize) -> Result<(), TransformError> {
        if len != self.dim() {
            return Err(TransformError::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<CoeffVector, TransformError> {
        Ok(CoeffVector {
            values: self.analyze(x)?,
            layout: Arc::clone(&self.inner.layout),
        })
    }

    pub fn inverse(&self, c: &CoeffVector) -> Result<Vec<f64>, TransformError> {
        if !Arc::ptr_eq(&c.layout, &self.inner.layout) && *c.layout != *self.inner.layout {
            return Err(TransformError::LayoutMismatch);
        }
        self.synthesize(&c.values)
    }

    /// Wraps raw subband-major values as a coefficient vector of this basis.
    pub fn coeffs(&self, values: Vec<f64>) -> Result<CoeffVector, TransformError> {
        self.check_len(values.len())?;
        Ok(CoeffVector {
            values,
            layout: Arc::clone(&self.inner.layout),
        })
    }

    /// Analysis operator on a raw image: returns subband-major coefficients.
    pub fn analyze(&self, x: &[f64]) -> Result<Vec<f64>, TransformError> {
        self.check_len(x.len())?;
        let Some(filter) = self.kind().filter() else {
            return Ok(x.to_vec());
        };
        let mut grid = x.to_vec();
        let mut pass = Pass::new(self.height(), self.width());
        for (h, w) in self.level_extents() {
            pass.rows(&mut grid, h, w, |l, s| filter.analyze(l, s));
            pass.cols(&mut grid, h, w, |l, s| filter.analyze(l, s));
        }
        Ok(self.gather(&grid))
    }

    /// Synthesis operator: the exact inverse of [`Basis::analyze`].
    pub fn synthesize(&self, c: &[f64]) -> Result<Vec<f64>, TransformError> {
        self.check_len(c.len())?;
        let Some(filter) = self.kind().filter() else {
            return Ok(c.to_vec());
        };
        let mut grid = self.scatter(c);
        let mut pass = Pass::new(self.height(), self.width());
        for (h, w) in self.level_extents().into_iter().rev() {
            pass.cols(&mut grid, h, w, |l, s| filter.synthesize(l, s));
            pass.rows(&mut grid, h, w, |l, s| filter.synthesize(l, s));
        }
        Ok(grid)
    }

    /// Transpose of the analysis operator, mapping coefficients to images.
    pub fn analyze_adjoint(&self, c: &[f64]) -> Result<Vec<f64>, TransformError> {
        self.check_len(c.len())?;
        let Some(filter) = self.kind().filter() else {
            return Ok(c.to_vec());
        };
        let mut grid = self.scatter(c);
        let mut pass = Pass::new(self.height(), self.width());
        for (h, w) in self.level_extents().into_iter().rev() {
            pass.cols(&mut grid, h, w, |l, s| filter.analyze_adjoint(l, s));
            pass.rows(&mut grid, h, w, |l, s| filter.analyze_adjoint(l, s));
        }
        Ok(grid)
    }

    /// Transpose of the synthesis operator, mapping images to coefficients.
    pub fn synthesize_adjoint(&self, x: &[f64]) -> Result<Vec<f64>, TransformError> {
        self.check_len(x.len())?;
        let Some(filter) = self.kind().filter() else {
            return Ok(x.to_vec());
        };
        let mut grid = x.to_vec();
        let mut pass = Pass::new(self.height(), self.width());
        for (h, w) in self.level_extents() {
            pass.rows(&mut grid, h, w, |l, s| filter.synthesize_adjoint(l, s));
            pass.cols(&mut grid, h, w, |l, s| filter.synthesize_adjoint(l, s));
        }
        Ok(self.gather(&grid))
    }

    /// Synthesis vector `ψ_j`, the image of the j-th unit coefficient.
    pub fn basis_vector(&self, j: usize) -> Result<Vec<f64>, TransformError> {
        let mut e = vec![0.0; self.dim()];
        *e.get_mut(j).ok_or(TransformError::IndexOutOfRange {
            index: j,
            n: self.dim(),
        })? = 1.0;
        self.synthesize(&e)
    }

    /// Analysis vector `ψ̃_j`: row j of the analysis operator. Equals
    /// [`Basis::basis_vector`] for orthonormal bases.
    pub fn analysis_vector(&self, j: usize) -> Result<Vec<f64>, TransformError> {
        let mut e = vec![0.0; self.dim()];
        *e.get_mut(j).ok_or(TransformError::IndexOutOfRange {
            index: j,
            n: self.dim(),
        })? = 1.0;
        self.analyze_adjoint(&e)
    }

    /// `M = max_j ‖ψ_j‖₁` over synthesis vectors. Computed once per basis.
    pub fn max_l1_norm(&self) -> f64 {
        *self.inner.max_l1_synthesis.get_or_init(|| {
            self.max_column_l1(|j| self.basis_vector(j))
        })
    }

    /// `max_j ‖ψ̃_j‖₁` over analysis vectors. Computed once per basis.
    pub fn max_l1_norm_analysis(&self) -> f64 {
        *self.inner.max_l1_analysis.get_or_init(|| {
            self.max_column_l1(|j| self.analysis_vector(j))
        })
    }

    fn max_column_l1(&self, column: impl Fn(usize) -> Result<Vec<f64>, TransformError>) -> f64 {
        if self.kind() == BasisKind::Identity {
            return 1.0;
        }
        (0..self.dim())
            .map(|j| {
                column(j)
                    .expect("index in range")
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Region extents acted upon at each level, finest first.
    fn level_extents(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.levels());
        let (mut h, mut w) = (self.height(), self.width());
        for _ in 0..self.levels() {
            out.push((h, w));
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        out
    }

    fn gather(&self, grid: &[f64]) -> Vec<f64> {
        self.inner.positions.iter().map(|&p| grid[p]).collect()
    }

    fn scatter(&self, c: &[f64]) -> Vec<f64> {
        let mut grid = vec![0.0; c.len()];
        for (&p, &v) in self.inner.positions.iter().zip(c) {
            grid[p] = v;
        }
        grid
    }
}

/// Row and column sweeps over the top-left `h x w` region of a grid.
struct Pass {
    stride: usize,
    line: Vec<f64>,
    scratch: Vec<f64>,
}

impl Pass {
    fn new(_height: usize, width: usize) -> Self {
        Self {
            stride: width,
            line: Vec::new(),
            scratch: Vec::new(),
        }
    }

    fn rows(
        &mut self,
        grid: &mut [f64],
        h: usize,
        w: usize,
        mut op: impl FnMut(&mut [f64], &mut Vec<f64>),
    ) {
        for r in 0..h {
            let start = r * self.stride;
            op(&mut grid[start..start + w], &mut self.scratch);
        }
    }

    fn cols(
        &mut self,
        grid: &mut [f64],
        h: usize,
        w: usize,
        mut op: impl FnMut(&mut [f64], &mut Vec<f64>),
    ) {
        for c in 0..w {
            self.line.clear();
            self.line.extend((0..h).map(|r| grid[r * self.stride + c]));
            op(&mut self.line, &mut self.scratch);
            for (r, v) in self.line.iter().enumerate() {
                grid[r * self.stride + c] = *v;
            }
        }
    }
}
