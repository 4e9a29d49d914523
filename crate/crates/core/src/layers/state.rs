use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SsbError};
use crate::num::Complex;

/// Activations of one layer: a batch of rows, each holding `N` capsules of
/// dimension `k`.
///
/// Coordinates are stored component-major: column `a * N + α` holds
/// component `a` of capsule `α`. For `k = 2` this is the planar complex
/// layout `[Re z | Im z]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleState {
    data: Array2<f64>,
    n_capsules: usize,
    capsule_dim: usize,
}

impl CapsuleState {
    pub fn new(data: Array2<f64>, n_capsules: usize, capsule_dim: usize) -> Result<Self> {
        if n_capsules == 0 || capsule_dim == 0 {
            return Err(SsbError::arg("capsule counts must be positive"));
        }
        if data.ncols() != n_capsules * capsule_dim {
            return Err(SsbError::shape(
                format!("{} columns", n_capsules * capsule_dim),
                format!("{} columns", data.ncols()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SsbError::Numeric("non-finite capsule coordinate".into()));
        }
        Ok(CapsuleState {
            data,
            n_capsules,
            capsule_dim,
        })
    }

    pub(crate) fn from_parts(data: Array2<f64>, n_capsules: usize, capsule_dim: usize) -> Self {
        debug_assert_eq!(data.ncols(), n_capsules * capsule_dim);
        CapsuleState {
            data,
            n_capsules,
            capsule_dim,
        }
    }

    pub fn zeros(batch: usize, n_capsules: usize, capsule_dim: usize) -> Self {
        Self::from_parts(
            Array2::zeros((batch, n_capsules * capsule_dim)),
            n_capsules,
            capsule_dim,
        )
    }

    /// A single-row complex state.
    pub fn from_complex(z: &[Complex]) -> Result<Self> {
        Self::from_complex_rows(&[z.to_vec()])
    }

    pub fn from_complex_rows(rows: &[Vec<Complex>]) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(SsbError::arg("complex rows have unequal lengths"));
        }
        let data = Array2::from_shape_fn((rows.len(), 2 * n), |(b, c)| {
            if c < n {
                rows[b][c].re
            } else {
                rows[b][c - n].im
            }
        });
        Self::new(data, n, 2)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn n_capsules(&self) -> usize {
        self.n_capsules
    }

    pub fn capsule_dim(&self) -> usize {
        self.capsule_dim
    }

    pub fn batch(&self) -> usize {
        self.data.nrows()
    }

    pub fn row(&self, b: usize) -> ArrayView1<'_, f64> {
        self.data.row(b)
    }

    /// Coordinates of capsule `alpha` in row `b`.
    pub fn capsule(&self, b: usize, alpha: usize) -> Vec<f64> {
        (0..self.capsule_dim)
            .map(|a| self.data[[b, a * self.n_capsules + alpha]])
            .collect()
    }

    /// Complex view of row `b`; requires `k = 2`.
    pub fn complex_row(&self, b: usize) -> Result<Vec<Complex>> {
        if self.capsule_dim != 2 {
            return Err(SsbError::arg(format!(
                "complex view needs capsule_dim 2, have {}",
                self.capsule_dim
            )));
        }
        let n = self.n_capsules;
        Ok((0..n)
            .map(|i| Complex::new(self.data[[b, i]], self.data[[b, n + i]]))
            .collect())
    }

    /// Capsule magnitudes, `batch × N`.
    pub fn magnitudes(&self) -> Array2<f64> {
        capsule_norms(self.data.view(), self.n_capsules, self.capsule_dim)
    }

    /// `(1/N) Σ_α |v_α|²` for each row.
    pub fn order_parameter(&self) -> Vec<f64> {
        let n = self.n_capsules as f64;
        self.data
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>() / n)
            .collect()
    }

    pub fn max_abs_diff(&self, other: &CapsuleState) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn same_shape(&self, other: &CapsuleState) -> bool {
        self.n_capsules == other.n_capsules
            && self.capsule_dim == other.capsule_dim
            && self.batch() == other.batch()
    }
}

pub(crate) fn capsule_norms(x: ArrayView2<f64>, n: usize, k: usize) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((x.nrows(), n));
    for a in 0..k {
        let block = x.slice(ndarray::s![.., a * n..(a + 1) * n]);
        out.zip_mut_with(&block, |o, v| *o += v * v);
    }
    out.mapv_inplace(f64::sqrt);
    out
}
