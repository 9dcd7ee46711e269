use serde::Serialize;

use super::measure::{AtomicMeasureSpace, DiscreteFunction};
use crate::error::{ensure_len, Error, Result};

/// A linear map from functions on `source` (Y_j) to functions on `target` (X),
/// stored as a dense row-major matrix with one row per atom of X.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorMatrix {
    target: AtomicMeasureSpace,
    source: AtomicMeasureSpace,
    entries: Vec<f64>,
    positive: bool,
}

/// Outcome of [`OperatorMatrix::saturation_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Saturation {
    pub saturating: bool,
    /// First atom of X at which every output vanishes.
    pub zero_row: Option<usize>,
}

impl OperatorMatrix {
    pub fn new(
        target: AtomicMeasureSpace,
        source: AtomicMeasureSpace,
        entries: Vec<f64>,
        positive: bool,
    ) -> Result<Self> {
        let (n, m) = (target.atom_count(), source.atom_count());
        ensure_len("operator entries (rows x cols)", n * m, entries.len())?;
        for (k, &v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidField {
                    field: format!("matrix[{}][{}]", k / m, k % m),
                    reason: format!("entry must be finite, got {v}"),
                });
            }
            if positive && v < 0.0 {
                return Err(Error::Positivity {
                    field: format!("matrix[{}][{}]", k / m, k % m),
                    value: v,
                });
            }
        }
        Ok(Self {
            target,
            source,
            entries,
            positive,
        })
    }

    pub fn from_rows(
        target: AtomicMeasureSpace,
        source: AtomicMeasureSpace,
        rows: &[Vec<f64>],
        positive: bool,
    ) -> Result<Self> {
        ensure_len("operator rows", target.atom_count(), rows.len())?;
        let m = source.atom_count();
        let mut entries = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            ensure_len(&format!("operator row {i}"), m, row.len())?;
            entries.extend_from_slice(row);
        }
        Self::new(target, source, entries, positive)
    }

    /// Identity on `space` (X = Y).
    pub fn identity(space: AtomicMeasureSpace) -> Self {
        let n = space.atom_count();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self {
            target: space.clone(),
            source: space,
            entries,
            positive: true,
        }
    }

    pub fn target(&self) -> &AtomicMeasureSpace {
        &self.target
    }

    pub fn source(&self) -> &AtomicMeasureSpace {
        &self.source
    }

    pub fn rows(&self) -> usize {
        self.target.atom_count()
    }

    pub fn cols(&self) -> usize {
        self.source.atom_count()
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.cols() + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let m = self.cols();
        &self.entries[x * m..(x + 1) * m]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|x| self.row(x).to_vec()).collect()
    }

    /// `(Tf)(x) = sum_y T[x, y] f(y)`.
    pub fn apply(&self, f: &DiscreteFunction) -> Result<DiscreteFunction> {
        f.check_on(&self.source, "apply_operator: input")?;
        Ok(DiscreteFunction::new(self.apply_raw(f.values())))
    }

    pub(crate) fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply_into(f, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let m = self.cols();
        let nonzero: Vec<usize> = (0..m).filter(|&y| f[y] != 0.0).collect();
        for (x, o) in out.iter_mut().enumerate() {
            let row = &self.entries[x * m..(x + 1) * m];
            *o = if nonzero.len() * 4 < m {
                nonzero.iter().map(|&y| row[y] * f[y]).sum()
            } else {
                row.iter().zip(f).map(|(a, b)| a * b).sum()
            };
        }
    }

    /// `(T^t v)(y) = sum_x T[x, y] v(x)` (plain transpose, no measures).
    pub(crate) fn apply_transpose_raw(&self, v: &[f64]) -> Vec<f64> {
        let m = self.cols();
        let mut out = vec![0.0; m];
        for (x, &vx) in v.iter().enumerate() {
            if vx == 0.0 {
                continue;
            }
            let row = &self.entries[x * m..(x + 1) * m];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vx;
            }
        }
        out
    }

    /// On an atomic X, T saturates iff no row of the matrix vanishes.
    pub fn saturation_check(&self) -> Saturation {
        let zero_row = (0..self.rows()).find(|&x| self.row(x).iter().all(|&v| v == 0.0));
        Saturation {
            saturating: zero_row.is_none(),
            zero_row,
        }
    }
}
