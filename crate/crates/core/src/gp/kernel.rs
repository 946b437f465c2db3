//! Stationary anisotropic correlation functions.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::InputPoint;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    Matern52,
    SquaredExponential,
}

impl KernelFamily {
    /// Correlation as a function of the scaled distance `r`.
    #[inline]
    pub fn of_distance(self, r: f64) -> f64 {
        match self {
            KernelFamily::Matern52 => {
                let s = SQRT5 * r;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
            KernelFamily::SquaredExponential => (-0.5 * r * r).exp(),
        }
    }
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern52" | "matern-52" => Ok(Self::Matern52),
            "squared-exponential" | "se" | "gaussian" => Ok(Self::SquaredExponential),
            other => Err(Error::InvalidArgument(format!(
                "unknown kernel family `{other}`"
            ))),
        }
    }
}

/// A correlation function with one length-scale per input dimension.
///
/// Length-scales are expressed in whatever coordinates the kernel is evaluated in;
/// the emulator always feeds it points rescaled to the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub length_scales: Vec<f64>,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, length_scales: Vec<f64>) -> Result<Self> {
        let k = Self {
            family,
            length_scales,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        for (index, &value) in self.length_scales.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveLengthScale { index, value });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// `C(a, b)` for two input points.
    pub fn correlation(&self, a: &InputPoint, b: &InputPoint) -> Result<f64> {
        self.eval(&a.joint(), &b.joint())
    }

    /// `C(a, b)` for two joint coordinate vectors.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.validate()?;
        if a.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: a.len(),
            });
        }
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: b.len(),
            });
        }
        Ok(self.evaluator().eval(a, b))
    }

    /// A validated evaluator with precomputed inverse length-scales.
    pub(crate) fn evaluator(&self) -> KernelEval {
        KernelEval {
            family: self.family,
            inv_ls: self.length_scales.iter().map(|l| 1.0 / l).collect(),
        }
    }
}

/// Hot-path kernel evaluation with no checks.
#[derive(Debug, Clone)]
pub(crate) struct KernelEval {
    family: KernelFamily,
    inv_ls: Vec<f64>,
}

impl KernelEval {
    #[inline]
    pub(crate) fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), w) in a.iter().zip(b).zip(&self.inv_ls) {
            let t = (x - y) * w;
            r2 += t * t;
        }
        self.family.of_distance(r2.sqrt())
    }

    /// Symmetric correlation matrix with `nugget` added on the diagonal.
    pub(crate) fn matrix(&self, pts: &[Vec<f64>], nugget: f64) -> DMatrix<f64> {
        let n = pts.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(j, j)] = 1.0 + nugget;
            for i in (j + 1)..n {
                let c = self.eval(&pts[i], &pts[j]);
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        m
    }

    /// Cross-correlation matrix with rows indexed by `rows` and columns by `cols`.
    pub(crate) fn cross(&self, rows: &[Vec<f64>], cols: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.eval(&rows[i], &cols[j]))
    }
}

/// Correlation matrix `C(pts_i, pts_j) + nugget·1{i=j}`.
///
/// If the matrix is not numerically positive definite the nugget is escalated along
/// the default ladder and the first factorizable matrix is returned. Fails with
/// [`Error::DegenerateDesign`] when the ladder is exhausted.
pub fn build_correlation_matrix(
    kernel: &KernelSpec,
    pts: &[InputPoint],
    nugget: f64,
) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if pts.is_empty() {
        return Err(Error::InvalidArgument(
            "correlation matrix of an empty point set".into(),
        ));
    }
    let joint: Vec<Vec<f64>> = pts.iter().map(InputPoint::joint).collect();
    for p in &joint {
        if p.len() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                got: p.len(),
            });
        }
    }
    let eval = kernel.evaluator();
    let m = eval.matrix(&joint, nugget);
    if nalgebra::Cholesky::new(m.clone()).is_some() {
        return Ok(m);
    }
    let mut g = nugget.max(super::NUGGET_START);
    while g <= super::NUGGET_MAX * (1.0 + 1e-12) {
        let m = eval.matrix(&joint, g);
        if nalgebra::Cholesky::new(m.clone()).is_some() {
            log::debug!("correlation matrix needed nugget {g:e}");
            return Ok(m);
        }
        g *= 10.0;
    }
    Err(Error::DegenerateDesign {
        max_nugget: super::NUGGET_MAX,
    })
}
