use serde::{Deserialize, Serialize};

/// Orientation of a detail subband. `Lh` holds vertical detail (high-pass
/// down the columns), `Hl` horizontal detail (high-pass along the rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Ll,
    Lh,
    Hl,
    Hh,
}

/// One rectangular block of coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subband {
    /// Decomposition level that produced the band (0 for the identity basis).
    pub level: usize,
    pub orientation: Orientation,
    pub rows: usize,
    pub cols: usize,
    /// Offset of the band's first coefficient in the flat coefficient vector.
    pub offset: usize,
    /// Top-left corner of the band in the in-place (Mallat) arrangement.
    pub(crate) row0: usize,
    pub(crate) col0: usize,
}

impl Subband {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Subband-major coefficient layout.
///
/// The coarsest approximation band comes first, followed by the detail bands
/// of each level from coarsest to finest in `Lh, Hl, Hh` order. Within a band,
/// coefficients are stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubbandLayout {
    pub height: usize,
    pub width: usize,
    pub levels: usize,
    pub bands: Vec<Subband>,
}

impl SubbandLayout {
    pub(crate) fn new(height: usize, width: usize, levels: usize) -> Self {
        // sizes[l] = extent of the approximation region after l levels
        let mut sizes = vec![(height, width)];
        for l in 0..levels {
            let (h, w) = sizes[l];
            sizes.push((h.div_ceil(2), w.div_ceil(2)));
        }
        let (lh, lw) = sizes[levels];
        let mut bands = vec![Subband {
            level: levels,
            orientation: Orientation::Ll,
            rows: lh,
            cols: lw,
            offset: 0,
            row0: 0,
            col0: 0,
        }];
        let mut offset = lh * lw;
        for level in (1..=levels).rev() {
            let (ph, pw) = sizes[level - 1];
            let (h, w) = sizes[level];
            let specs = [
                (Orientation::Lh, ph - h, w, h, 0),
                (Orientation::Hl, h, pw - w, 0, w),
                (Orientation::Hh, ph - h, pw - w, h, w),
            ];
            for (orientation, rows, cols, row0, col0) in specs {
                bands.push(Subband {
                    level,
                    orientation,
                    rows,
                    cols,
                    offset,
                    row0,
                    col0,
                });
                offset += rows * cols;
            }
        }
        debug_assert_eq!(offset, height * width);
        Self {
            height,
            width,
            levels,
            bands,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Band containing flat coefficient index `j`.
    pub fn band_of(&self, j: usize) -> Option<&Subband> {
        self.bands
            .iter()
            .find(|b| j >= b.offset && j < b.offset + b.len())
    }

    /// For each flat coefficient index, its position in the in-place grid.
    pub(crate) fn positions(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        for b in &self.bands {
            for r in 0..b.rows {
                for c in 0..b.cols {
                    out.push((b.row0 + r) * self.width + b.col0 + c);
                }
            }
        }
        out
    }
}
