//! Gaussian-process emulation of a simulator over the joint control × parameter space.
//!
//! Inputs are rescaled to the unit cube of the declared [`InputSpace`](crate::space::InputSpace)
//! before any kernel evaluation, so length-scales are always relative to the box widths.
//! Hyperparameters `(beta, sigma2)` are profiled in closed form and the anisotropic
//! length-scales are found by a multi-start derivative-free search of the marginal
//! likelihood. The trained emulator is immutable and `Sync`.

mod design;
mod emulator;
mod fit;
mod kernel;
pub(crate) mod optim;

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

pub use design::{Design, DEDUP_RADIUS};
pub use emulator::{LooDiagnostics, Prediction, TrainedEmulator};
pub use fit::{fit_hyperparameters, log_marginal_likelihood, FitOptions, FitResult};
pub use kernel::{build_correlation_matrix, KernelFamily, KernelSpec};

/// First nugget tried when a correlation matrix is factorized.
pub const NUGGET_START: f64 = 1e-8;
/// Largest nugget before a design is declared degenerate.
pub const NUGGET_MAX: f64 = 1e-2;

/// Regression functions `h(.)` of the GP mean, evaluated on unit-cube coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrendBasis {
    #[default]
    Constant,
    Linear,
}

impl TrendBasis {
    /// Number of regression functions `p` for an input of dimension `dim`.
    pub fn len(self, dim: usize) -> usize {
        match self {
            TrendBasis::Constant => 1,
            TrendBasis::Linear => 1 + dim,
        }
    }

    #[inline]
    pub(crate) fn dot(self, unit: &[f64], beta: &[f64]) -> f64 {
        match self {
            TrendBasis::Constant => beta[0],
            TrendBasis::Linear => {
                beta[0] + unit.iter().zip(&beta[1..]).map(|(u, b)| u * b).sum::<f64>()
            }
        }
    }

    pub(crate) fn matrix(self, unit_pts: &[Vec<f64>]) -> DMatrix<f64> {
        let dim = unit_pts.first().map_or(0, Vec::len);
        let p = self.len(dim);
        DMatrix::from_fn(unit_pts.len(), p, |i, j| {
            if j == 0 {
                1.0
            } else {
                unit_pts[i][j - 1]
            }
        })
    }
}

/// Plug-in hyperparameters of the GP prior, in the simulator's output units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub kernel: KernelSpec,
    pub nugget: f64,
    #[serde(default)]
    pub trend: TrendBasis,
}

impl GpHyperparams {
    pub fn validate(&self) -> crate::Result<()> {
        self.kernel.validate()?;
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(crate::Error::InvalidArgument(format!(
                "sigma2 must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(crate::Error::InvalidArgument(format!(
                "nugget must be nonnegative, got {}",
                self.nugget
            )));
        }
        if self.beta.len() != self.trend.len(self.kernel.dim()) {
            return Err(crate::Error::DimensionMismatch {
                expected: self.trend.len(self.kernel.dim()),
                got: self.beta.len(),
            });
        }
        Ok(())
    }
}

/// Cholesky factor of a covariance, escalating a diagonal jitter relative to `scale`
/// when needed. A zero matrix yields a zero factor.
///
/// Returns the lower factor and the jitter added.
pub(crate) fn robust_cholesky(m: &DMatrix<f64>, scale: f64) -> Option<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    let max_diag = (0..n).map(|i| m[(i, i)]).fold(0.0f64, f64::max);
    if max_diag <= 0.0 {
        return Some((DMatrix::zeros(n, n), 0.0));
    }
    let scale = if scale > 0.0 { scale } else { max_diag };
    if let Some(c) = Cholesky::<f64, Dyn>::new(m.clone()) {
        return Some((c.unpack(), 0.0));
    }
    let mut jitter = 1e-12 * scale;
    while jitter <= 1e-2 * scale {
        let mut j = m.clone();
        for i in 0..n {
            j[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::<f64, Dyn>::new(j) {
            return Some((c.unpack(), jitter));
        }
        jitter *= 10.0;
    }
    None
}
