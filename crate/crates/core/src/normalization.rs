//! Embedding normalization applied before similarities are computed.
//!
//! `row_l2` turns dot products into cosine similarities. The two coordinate
//! modes normalize each embedding dimension across the rows of the batch,
//! so their statistics are always per batch.

use alloc::vec;
use core::fmt;
use core::str::FromStr;

use crate::dense::{ensure_same_shape, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NormalizationMode {
    None,
    /// Unit L2 norm per row.
    #[default]
    RowL2,
    /// Unit L2 norm per column (over the batch).
    CoordL2,
    /// Per-column min-max scaling to `[0, 1]` (over the batch).
    CoordMinmax,
}

impl NormalizationMode {
    pub const ALL: [NormalizationMode; 4] = [
        NormalizationMode::None,
        NormalizationMode::RowL2,
        NormalizationMode::CoordL2,
        NormalizationMode::CoordMinmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormalizationMode::None => "none",
            NormalizationMode::RowL2 => "row_l2",
            NormalizationMode::CoordL2 => "coord_l2",
            NormalizationMode::CoordMinmax => "coord_minmax",
        }
    }
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig {
                key: "normalization",
                reason: alloc::format!(
                    "unknown mode {s:?} (expected none, row_l2, coord_l2 or coord_minmax)"
                ),
            })
    }
}

/// Normalizes `m` according to `mode`.
///
/// A constant column under `coord_minmax` maps to 0.5 everywhere. An all-zero
/// row (`row_l2`) or column (`coord_l2`) has no direction and is rejected.
pub fn normalize(m: &Matrix, mode: NormalizationMode) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    let mut out = m.clone();
    match mode {
        NormalizationMode::None => {}
        NormalizationMode::RowL2 => {
            for i in 0..rows {
                let norm = crate::dense::l2_norm(m.row(i));
                if norm == 0.0 {
                    return Err(degenerate("row", i));
                }
                out.row_mut(i).iter_mut().for_each(|v| *v /= norm);
            }
        }
        NormalizationMode::CoordL2 => {
            for j in 0..cols {
                let norm = column_norm(m, j);
                if norm == 0.0 {
                    return Err(degenerate("column", j));
                }
                for i in 0..rows {
                    out.set(i, j, m.get(i, j) / norm);
                }
            }
        }
        NormalizationMode::CoordMinmax => {
            for j in 0..cols {
                let ext = column_extremes(m, j);
                for i in 0..rows {
                    let v = if ext.range == 0.0 {
                        0.5
                    } else {
                        (m.get(i, j) - ext.min) / ext.range
                    };
                    out.set(i, j, v);
                }
            }
        }
    }
    Ok(out)
}

/// Chain rule through [`normalize`]: maps `∂L/∂normalize(m)` to `∂L/∂m`.
///
/// For `coord_minmax` the arg-min and arg-max rows of each column are held
/// fixed (first occurrence wins), which is the exact derivative away from ties.
pub fn normalize_backward(
    m: &Matrix,
    mode: NormalizationMode,
    upstream: &Matrix,
) -> Result<Matrix> {
    ensure_same_shape(m, upstream)?;
    let (rows, cols) = m.shape();
    let mut grad = upstream.clone();
    match mode {
        NormalizationMode::None => {}
        NormalizationMode::RowL2 => {
            for i in 0..rows {
                let x = m.row(i);
                let g = upstream.row(i);
                let norm = crate::dense::l2_norm(x);
                if norm == 0.0 {
                    return Err(degenerate("row", i));
                }
                // (g - y (y·g)) / |x| with y = x / |x|
                let yg = crate::dense::dot(x, g) / norm;
                for (k, out) in grad.row_mut(i).iter_mut().enumerate() {
                    *out = (g[k] - x[k] / norm * yg) / norm;
                }
            }
        }
        NormalizationMode::CoordL2 => {
            for j in 0..cols {
                let norm = column_norm(m, j);
                if norm == 0.0 {
                    return Err(degenerate("column", j));
                }
                let yg: f64 = (0..rows)
                    .map(|i| m.get(i, j) * upstream.get(i, j))
                    .sum::<f64>()
                    / norm;
                for i in 0..rows {
                    let y = m.get(i, j) / norm;
                    grad.set(i, j, (upstream.get(i, j) - y * yg) / norm);
                }
            }
        }
        NormalizationMode::CoordMinmax => {
            let mut col = vec![0.0; rows];
            for j in 0..cols {
                let ext = column_extremes(m, j);
                if ext.range == 0.0 {
                    for i in 0..rows {
                        grad.set(i, j, 0.0);
                    }
                    continue;
                }
                let mut to_min = 0.0;
                let mut to_max = 0.0;
                for (i, c) in col.iter_mut().enumerate() {
                    let g = upstream.get(i, j);
                    let y = (m.get(i, j) - ext.min) / ext.range;
                    to_min += g * (y - 1.0);
                    to_max -= g * y;
                    *c = g / ext.range;
                }
                col[ext.argmin] += to_min / ext.range;
                col[ext.argmax] += to_max / ext.range;
                for (i, c) in col.iter().enumerate() {
                    grad.set(i, j, *c);
                }
            }
        }
    }
    Ok(grad)
}

fn degenerate(what: &str, idx: usize) -> Error {
    Error::Degenerate(alloc::format!(
        "all-zero {what} {idx} cannot be L2-normalized"
    ))
}

fn column_norm(m: &Matrix, j: usize) -> f64 {
    libm::sqrt((0..m.rows()).map(|i| m.get(i, j) * m.get(i, j)).sum())
}

struct Extremes {
    min: f64,
    range: f64,
    argmin: usize,
    argmax: usize,
}

fn column_extremes(m: &Matrix, j: usize) -> Extremes {
    let (mut argmin, mut argmax) = (0, 0);
    for i in 1..m.rows() {
        let v = m.get(i, j);
        if v < m.get(argmin, j) {
            argmin = i;
        }
        if v > m.get(argmax, j) {
            argmax = i;
        }
    }
    let min = m.get(argmin, j);
    Extremes {
        min,
        range: m.get(argmax, j) - min,
        argmin,
        argmax,
    }
}
