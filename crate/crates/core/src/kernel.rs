//! Stationary Gaussian kernel `k(x, y) = exp(-½ (x-y)ᵀ M (x-y))` with a
//! symmetric positive-definite precision `M`.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec", into = "RawKernelSpec")]
pub struct KernelSpec {
    precision: DMatrix<f64>,
    /// Cached diagonal when `precision` has no off-diagonal entries; the
    /// update loop then runs in O(d) per pair instead of O(d²).
    diagonal: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawKernelSpec {
    precision: DMatrix<f64>,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        KernelSpec::new(raw.precision)
    }
}

impl From<KernelSpec> for RawKernelSpec {
    fn from(spec: KernelSpec) -> Self {
        RawKernelSpec {
            precision: spec.precision,
        }
    }
}

impl KernelSpec {
    /// Validates and wraps a precision matrix.
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        let d = precision.nrows();
        if d == 0 || precision.ncols() != d {
            return Err(Error::invalid(format!(
                "kernel precision must be a non-empty square matrix, got {}x{}",
                precision.nrows(),
                precision.ncols()
            )));
        }
        if precision.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel precision has non-finite entries"));
        }
        if precision != precision.transpose() {
            return Err(Error::invalid("kernel precision is not symmetric"));
        }
        match Cholesky::new(precision.clone()) {
            Some(chol) if chol.l_dirty().diagonal().iter().all(|&v| v > 0.0) => {}
            _ => return Err(Error::invalid("kernel precision is not positive definite")),
        }
        let is_diagonal = (0..d).all(|i| (0..d).all(|j| i == j || precision[(i, j)] == 0.0));
        let diagonal = is_diagonal.then(|| precision.diagonal().iter().copied().collect());
        Ok(Self {
            precision,
            diagonal,
        })
    }

    pub fn from_diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(
            &nalgebra::DVector::from_column_slice(entries),
        ))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    fn check_dims(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.dim();
        if x.len() != d || y.len() != d {
            return Err(Error::invalid(format!(
                "kernel of dimension {d} evaluated at vectors of length {} and {}",
                x.len(),
                y.len()
            )));
        }
        Ok(())
    }

    /// `k(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dims(x, y)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let mut scaled = vec![0.0; diff.len()];
        Ok(self.weight(&diff, &mut scaled))
    }

    /// Gradient of `k` in its first argument, `-M (x - y) k(x, y)`.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x, y)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let mut scaled = vec![0.0; diff.len()];
        let k = self.weight(&diff, &mut scaled);
        Ok(scaled.iter().map(|s| -s * k).collect())
    }

    /// Writes `M·diff` into `scaled` and returns `exp(-½ diffᵀ M diff)`.
    /// Lengths are not checked.
    #[inline]
    pub(crate) fn weight(&self, diff: &[f64], scaled: &mut [f64]) -> f64 {
        let mut quad = 0.0;
        match &self.diagonal {
            Some(m) => {
                for ((s, &dv), &mv) in scaled.iter_mut().zip(diff).zip(m) {
                    *s = mv * dv;
                    quad += *s * dv;
                }
            }
            None => {
                for (r, s) in scaled.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (c, &dc) in diff.iter().enumerate() {
                        acc += self.precision[(r, c)] * dc;
                    }
                    *s = acc;
                    quad += acc * diff[r];
                }
            }
        }
        (-0.5 * quad).exp()
    }
}
