//! Field data, sums of squares and the target / approximated posterior densities.
//!
//! All densities are unnormalized log densities; nothing here exponentiates them.

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{robust_cholesky, TrainedEmulator, NUGGET_MAX};
use crate::space::Bounds;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A deterministic computer code `y_tau(x)`.
pub trait Simulator: Send + Sync {
    fn x_dim(&self) -> usize;
    fn tau_dim(&self) -> usize;
    fn run(&self, x: &[f64], tau: &[f64]) -> Result<f64>;

    /// Whether a run is costly; cheap codes may also be used for the target posterior.
    fn is_expensive(&self) -> bool {
        true
    }
}

impl<S: Simulator + ?Sized> Simulator for Arc<S> {
    fn x_dim(&self) -> usize {
        (**self).x_dim()
    }
    fn tau_dim(&self) -> usize {
        (**self).tau_dim()
    }
    fn run(&self, x: &[f64], tau: &[f64]) -> Result<f64> {
        (**self).run(x, tau)
    }
    fn is_expensive(&self) -> bool {
        (**self).is_expensive()
    }
}

/// Wraps a simulator and counts its runs, the budget currency of the sequential designs.
pub struct CountingSimulator<S> {
    inner: S,
    calls: AtomicUsize,
}

impl<S: Simulator> CountingSimulator<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Simulator> Simulator for CountingSimulator<S> {
    fn x_dim(&self) -> usize {
        self.inner.x_dim()
    }
    fn tau_dim(&self) -> usize {
        self.inner.tau_dim()
    }
    fn run(&self, x: &[f64], tau: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.run(x, tau)
    }
    fn is_expensive(&self) -> bool {
        self.inner.is_expensive()
    }
}

/// A known discrepancy covariance `V_b` evaluated at the field sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyCov {
    vb: DMatrix<f64>,
}

impl DiscrepancyCov {
    pub fn new(vb: DMatrix<f64>) -> Result<Self> {
        if !vb.is_square() {
            return Err(Error::NotPositiveSemiDefinite);
        }
        let scale = vb.amax().max(f64::MIN_POSITIVE);
        if (&vb - vb.transpose()).amax() > 1e-10 * scale {
            return Err(Error::NotPositiveSemiDefinite);
        }
        let eig = SymmetricEigen::new(vb.clone());
        if eig.eigenvalues.min() < -1e-10 * scale {
            return Err(Error::NotPositiveSemiDefinite);
        }
        Ok(Self { vb })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vb
    }
}

/// Field sites `X_f`, measurements `z_f` and the known noise variance `lambda2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldData {
    pub x: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub lambda2: f64,
    #[serde(default)]
    pub discrepancy: Option<DiscrepancyCov>,
}

impl FieldData {
    pub fn new(x: Vec<Vec<f64>>, z: Vec<f64>, lambda2: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument(
                "field data needs at least one site".into(),
            ));
        }
        if x.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: z.len(),
            });
        }
        let d = x[0].len();
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        if !(lambda2 > 0.0 && lambda2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda2 must be positive, got {lambda2}"
            )));
        }
        if x.iter().flatten().chain(&z).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "field data has non-finite entries".into(),
            ));
        }
        Ok(Self {
            x,
            z,
            lambda2,
            discrepancy: None,
        })
    }

    pub fn with_discrepancy(mut self, disc: DiscrepancyCov) -> Result<Self> {
        if disc.matrix().nrows() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: disc.matrix().nrows(),
            });
        }
        self.discrepancy = Some(disc);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn x_dim(&self) -> usize {
        self.x[0].len()
    }

    /// Read a CSV with columns `x1..xd, z`.
    pub fn from_csv<P: AsRef<Path>>(path: P, lambda2: f64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let zcol = headers
            .iter()
            .position(|h| h.trim() == "z")
            .ok_or_else(|| Error::InvalidArgument("field csv has no `z` column".into()))?;
        let mut x = Vec::new();
        let mut z = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut row = Vec::new();
            for (i, s) in rec.iter().enumerate() {
                let v: f64 = s.trim().parse().map_err(|e| {
                    Error::InvalidArgument(format!("bad number `{s}` in field csv: {e}"))
                })?;
                if i == zcol {
                    z.push(v);
                } else {
                    row.push(v);
                }
            }
            x.push(row);
        }
        Self::new(x, z, lambda2)
    }

    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.x_dim()).map(|i| format!("x{i}")).collect();
        header.push("z".into());
        w.write_record(&header)?;
        for (row, z) in self.x.iter().zip(&self.z) {
            let rec: Vec<String> = row
                .iter()
                .chain(std::iter::once(z))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Covariance of the measurement errors: `V_b + lambda2·I`.
    fn noise_cov(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut s = DMatrix::identity(n, n) * self.lambda2;
        if let Some(d) = &self.discrepancy {
            s += d.matrix();
        }
        s
    }
}

type LogDensityFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone, Default)]
pub enum PriorDensity {
    #[default]
    Uniform,
    /// A user-supplied log density on the box (up to a constant).
    Custom(Arc<LogDensityFn>),
}

impl fmt::Debug for PriorDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorDensity::Uniform => f.write_str("Uniform"),
            PriorDensity::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Prior on the calibration parameters, supported on a box.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    pub bounds: Bounds,
    pub density: PriorDensity,
}

impl PriorSpec {
    pub fn uniform(bounds: Bounds) -> Self {
        Self {
            bounds,
            density: PriorDensity::Uniform,
        }
    }

    pub fn custom(
        bounds: Bounds,
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            bounds,
            density: PriorDensity::Custom(Arc::new(log_density)),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// `ln Π(theta)`, `-inf` outside the box.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.bounds.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match &self.density {
            PriorDensity::Uniform => -(0..self.dim())
                .map(|i| self.bounds.width(i).ln())
                .sum::<f64>(),
            PriorDensity::Custom(f) => f(theta),
        }
    }

    /// Draws uniformly on the box with self-normalized importance weights for the prior.
    pub fn weighted_draws<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Vec<(Vec<f64>, f64)> {
        let draws: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                (0..self.dim())
                    .map(|i| self.bounds.lower[i] + self.bounds.width(i) * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let logw: Vec<f64> = match &self.density {
            PriorDensity::Uniform => vec![0.0; count],
            PriorDensity::Custom(f) => draws.iter().map(|t| f(t)).collect(),
        };
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw
            .iter()
            .map(|l| {
                if max.is_finite() {
                    (l - max).exp()
                } else {
                    1.0
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        draws
            .into_iter()
            .zip(w)
            .map(|(t, wi)| (t, wi / total))
            .collect()
    }
}

fn check_theta<S: Simulator + ?Sized>(sim: &S, theta: &[f64], field: &FieldData) -> Result<()> {
    if theta.len() != sim.tau_dim() {
        return Err(Error::DimensionMismatch {
            expected: sim.tau_dim(),
            got: theta.len(),
        });
    }
    if field.x_dim() != sim.x_dim() {
        return Err(Error::DimensionMismatch {
            expected: sim.x_dim(),
            got: field.x_dim(),
        });
    }
    Ok(())
}

/// Code outputs `y_theta(X_f)`.
pub fn simulate_field<S: Simulator + ?Sized>(
    sim: &S,
    theta: &[f64],
    field: &FieldData,
) -> Result<Vec<f64>> {
    check_theta(sim, theta, field)?;
    field.x.iter().map(|x| sim.run(x, theta)).collect()
}

/// `‖z_f − y_theta(X_f)‖²`, running the simulator once per field site.
pub fn sum_of_squares<S: Simulator + ?Sized>(
    sim: &S,
    theta: &[f64],
    field: &FieldData,
) -> Result<f64> {
    let y = simulate_field(sim, theta, field)?;
    Ok(field.z.iter().zip(&y).map(|(z, y)| (z - y) * (z - y)).sum())
}

/// `(z − y_theta)ᵀ (V_b + lambda2·I)⁻¹ (z − y_theta)`.
pub fn weighted_sum_of_squares<S: Simulator + ?Sized>(
    sim: &S,
    theta: &[f64],
    field: &FieldData,
    disc: &DiscrepancyCov,
) -> Result<f64> {
    if disc.matrix().nrows() != field.n() {
        return Err(Error::DimensionMismatch {
            expected: field.n(),
            got: disc.matrix().nrows(),
        });
    }
    let y = simulate_field(sim, theta, field)?;
    let r = DVector::from_iterator(field.n(), field.z.iter().zip(&y).map(|(z, y)| z - y));
    let mut s = disc.matrix().clone();
    for i in 0..field.n() {
        s[(i, i)] += field.lambda2;
    }
    let chol = s.cholesky().ok_or(Error::NotPositiveSemiDefinite)?;
    let w = chol
        .l_dirty()
        .solve_lower_triangular(&r)
        .ok_or(Error::NotPositiveSemiDefinite)?;
    Ok(w.norm_squared())
}

/// Gaussian log density of `resid` with covariance `cov`, escalating a jitter if needed.
fn gaussian_log_density(resid: &DVector<f64>, cov: &DMatrix<f64>, scale: f64) -> Result<f64> {
    let n = resid.len() as f64;
    let (l, jitter) = robust_cholesky(cov, scale).ok_or(Error::DegenerateDesign {
        max_nugget: NUGGET_MAX,
    })?;
    if jitter > 0.0 {
        log::debug!("conditional likelihood covariance needed jitter {jitter:e}");
    }
    let w = l
        .solve_lower_triangular(resid)
        .ok_or(Error::DegenerateDesign {
            max_nugget: NUGGET_MAX,
        })?;
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (w.norm_squared() + log_det + n * LN_2PI))
}

/// Unnormalized log target posterior using the true simulator:
/// `−n·ln(√(2π)λ) − SS(theta)/(2λ²) + ln Π(theta)`.
///
/// With a known discrepancy the Gaussian density with covariance `V_b + λ²I` is used.
pub fn target_log_posterior<S: Simulator + ?Sized>(
    sim: &S,
    theta: &[f64],
    field: &FieldData,
    prior: &PriorSpec,
) -> Result<f64> {
    let lp = prior.log_density(theta);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let n = field.n() as f64;
    if field.discrepancy.is_some() {
        let y = simulate_field(sim, theta, field)?;
        let r = DVector::from_iterator(field.n(), field.z.iter().zip(&y).map(|(z, y)| z - y));
        return Ok(gaussian_log_density(&r, &field.noise_cov(), field.lambda2)? + lp);
    }
    let ss = sum_of_squares(sim, theta, field)?;
    Ok(-0.5 * n * (LN_2PI + field.lambda2.ln()) - ss / (2.0 * field.lambda2) + lp)
}

/// Unnormalized log approximated posterior: the Gaussian density of `z_f` with mean
/// `μ^N(X_f, theta)` and covariance `V^N(theta) + λ²I`, plus `ln Π(theta)`.
///
/// No simulator runs are made.
pub fn approx_log_posterior(
    em: &TrainedEmulator,
    theta: &[f64],
    field: &FieldData,
    prior: &PriorSpec,
) -> Result<f64> {
    check_emulator(em, theta, field)?;
    let lp = prior.log_density(theta);
    if lp == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let pred = em.predict_column(&field.x, theta);
    let resid = DVector::from_iterator(
        field.n(),
        field.z.iter().zip(pred.mean.iter()).map(|(z, m)| z - m),
    );
    let cov = pred.cov + field.noise_cov();
    Ok(gaussian_log_density(&resid, &cov, field.lambda2)? + lp)
}

/// `E‖z_f − Y(X_f, theta)‖² = ‖z_f − μ(X_f, theta)‖² + trace V(theta)`.
pub fn expected_ss(em: &TrainedEmulator, theta: &[f64], field: &FieldData) -> Result<f64> {
    check_emulator(em, theta, field)?;
    let unit = em.unit_column(&field.x, theta);
    let (mean, var) = em.mean_var_unit(&unit);
    Ok(field
        .z
        .iter()
        .zip(&mean)
        .map(|(z, m)| (z - m) * (z - m))
        .sum::<f64>()
        + var.iter().sum::<f64>())
}

pub(crate) fn check_emulator(em: &TrainedEmulator, theta: &[f64], field: &FieldData) -> Result<()> {
    let space = em.design().space();
    if theta.len() != space.tau_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.tau_dim(),
            got: theta.len(),
        });
    }
    if field.x_dim() != space.x_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.x_dim(),
            got: field.x_dim(),
        });
    }
    Ok(())
}
