use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kernel::KernelEval;
use super::{
    fit_hyperparameters, robust_cholesky, Design, FitOptions, FitResult, GpHyperparams,
    KernelFamily, TrendBasis, NUGGET_MAX,
};
use crate::error::{Error, Result};
use crate::space::InputPoint;

/// Conditional mean and covariance of the emulator at a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Prediction {
    pub fn variance(&self) -> Vec<f64> {
        self.cov.diagonal().iter().copied().collect()
    }
}

/// Leave-one-out cross-validation diagnostics of a trained emulator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooDiagnostics {
    /// `y_i - mean_{-i}(v_i)`.
    pub residuals: Vec<f64>,
    pub variances: Vec<f64>,
    /// `1 - sum(residual²) / sum((y - ȳ)²)`.
    pub q2: f64,
}

/// A GP conditioned on a design, with the training covariance already factorized.
#[derive(Debug, Clone)]
pub struct TrainedEmulator {
    design: Design,
    hyper: GpHyperparams,
    unit_points: Vec<Vec<f64>>,
    chol_l: DMatrix<f64>,
    /// `R⁻¹ (y - Hβ)`.
    alpha: DVector<f64>,
    eval: KernelEval,
}

#[derive(Serialize, Deserialize)]
struct EmulatorFile {
    format: String,
    design: Design,
    hyper: GpHyperparams,
}

const FILE_FORMAT: &str = "seqcal-emulator/1";

impl TrainedEmulator {
    /// Condition the GP on `design` with fixed hyperparameters.
    ///
    /// If the training matrix cannot be factorized with `hyper.nugget`, the nugget is
    /// escalated tenfold up to [`NUGGET_MAX`].
    pub fn new(design: Design, mut hyper: GpHyperparams) -> Result<Self> {
        hyper.validate()?;
        let dim = design.space().dim();
        if hyper.kernel.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: hyper.kernel.dim(),
            });
        }
        if design.is_empty() {
            return Err(Error::DesignTooSmall { needed: 1, got: 0 });
        }
        let unit_points = design.unit_points();
        let eval = hyper.kernel.evaluator();
        let mut nugget = hyper.nugget;
        let chol = loop {
            if let Some(c) = Cholesky::<f64, Dyn>::new(eval.matrix(&unit_points, nugget)) {
                break c;
            }
            nugget = if nugget > 0.0 {
                nugget * 10.0
            } else {
                super::NUGGET_START
            };
            if nugget > NUGGET_MAX * (1.0 + 1e-12) {
                return Err(Error::DegenerateDesign {
                    max_nugget: NUGGET_MAX,
                });
            }
        };
        hyper.nugget = nugget;
        let resid = DVector::from_iterator(
            unit_points.len(),
            unit_points
                .iter()
                .zip(design.outputs())
                .map(|(u, y)| y - hyper.trend.dot(u, &hyper.beta)),
        );
        let alpha = chol.solve(&resid);
        Ok(Self {
            design,
            hyper,
            unit_points,
            chol_l: chol.unpack(),
            alpha,
            eval,
        })
    }

    /// Fit hyperparameters on `design` and condition on it.
    pub fn fit(
        design: Design,
        family: KernelFamily,
        trend: TrendBasis,
        opts: &FitOptions,
    ) -> Result<(Self, FitResult)> {
        let fit = fit_hyperparameters(&design, family, trend, opts)?;
        let em = Self::new(design, fit.hyper.clone())?;
        Ok((em, fit))
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    /// Log length-scales, handy as a warm start for refits.
    pub fn log_length_scales(&self) -> Vec<f64> {
        self.hyper
            .kernel
            .length_scales
            .iter()
            .map(|l| l.ln())
            .collect()
    }

    fn check_points(&self, pts: &[InputPoint]) -> Result<Vec<Vec<f64>>> {
        if pts.is_empty() {
            return Err(Error::InvalidArgument(
                "prediction at an empty point set".into(),
            ));
        }
        let space = self.design.space();
        pts.iter()
            .map(|p| {
                space.check(p)?;
                Ok(space.to_unit(p))
            })
            .collect()
    }

    /// Conditional mean and covariance at `pts`.
    pub fn predict(&self, pts: &[InputPoint]) -> Result<Prediction> {
        let unit = self.check_points(pts)?;
        Ok(self.predict_unit(&unit))
    }

    /// Conditional means and variances only.
    pub fn predict_mean_var(&self, pts: &[InputPoint]) -> Result<(Vec<f64>, Vec<f64>)> {
        let unit = self.check_points(pts)?;
        Ok(self.mean_var_unit(&unit))
    }

    /// Conditional means only; costs `O(N)` per point.
    pub fn predict_mean(&self, pts: &[InputPoint]) -> Result<Vec<f64>> {
        let unit = self.check_points(pts)?;
        Ok(unit.iter().map(|u| self.mean_unit(u)).collect())
    }

    /// Unit-cube coordinates of `(x_i, theta)` for every row `x_i` of `xs`.
    pub(crate) fn unit_column(&self, xs: &[Vec<f64>], theta: &[f64]) -> Vec<Vec<f64>> {
        let space = self.design.space();
        xs.iter()
            .map(|x| {
                let mut u = Vec::with_capacity(space.dim());
                space.to_unit_into(x, theta, &mut u);
                u
            })
            .collect()
    }

    /// Prediction at `(x_i, theta)` for all rows of `xs`, without dimension checks.
    pub(crate) fn predict_column(&self, xs: &[Vec<f64>], theta: &[f64]) -> Prediction {
        self.predict_unit(&self.unit_column(xs, theta))
    }

    #[inline]
    pub(crate) fn mean_unit(&self, u: &[f64]) -> f64 {
        let mut m = self.hyper.trend.dot(u, &self.hyper.beta);
        for (p, a) in self.unit_points.iter().zip(self.alpha.iter()) {
            m += self.eval.eval(u, p) * a;
        }
        m
    }

    pub(crate) fn predict_unit(&self, unit: &[Vec<f64>]) -> Prediction {
        let k = self.eval.cross(&self.unit_points, unit);
        let mean = DVector::from_iterator(
            unit.len(),
            unit.iter().enumerate().map(|(j, u)| {
                self.hyper.trend.dot(u, &self.hyper.beta) + k.column(j).dot(&self.alpha)
            }),
        );
        let w = self
            .chol_l
            .solve_lower_triangular(&k)
            .expect("training factor has a nonzero diagonal");
        let prior = self.eval.matrix(unit, 0.0);
        let mut cov = (prior - w.tr_mul(&w)) * self.hyper.sigma2;
        let q = unit.len();
        for j in 0..q {
            for i in (j + 1)..q {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
            if cov[(j, j)] < 0.0 {
                cov[(j, j)] = 0.0;
            }
        }
        Prediction { mean, cov }
    }

    pub(crate) fn mean_var_unit(&self, unit: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let k = self.eval.cross(&self.unit_points, unit);
        let w = self
            .chol_l
            .solve_lower_triangular(&k)
            .expect("training factor has a nonzero diagonal");
        let mut means = Vec::with_capacity(unit.len());
        let mut vars = Vec::with_capacity(unit.len());
        for (j, u) in unit.iter().enumerate() {
            means.push(self.hyper.trend.dot(u, &self.hyper.beta) + k.column(j).dot(&self.alpha));
            vars.push((self.hyper.sigma2 * (1.0 - w.column(j).norm_squared())).max(0.0));
        }
        (means, vars)
    }

    /// `count` joint draws of the emulator at `pts`, reproducible for a given seed.
    pub fn sample_paths(
        &self,
        pts: &[InputPoint],
        count: usize,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let pred = self.predict(pts)?;
        let (l, _) =
            robust_cholesky(&pred.cov, self.hyper.sigma2).ok_or(Error::DegenerateDesign {
                max_nugget: NUGGET_MAX,
            })?;
        let q = pts.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xi = DVector::zeros(q);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            for v in xi.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let draw = &pred.mean + &l * &xi;
            out.push(draw.iter().copied().collect());
        }
        Ok(out)
    }

    /// Leave-one-out residuals and predictive variances from the closed-form identities.
    pub fn leave_one_out(&self) -> LooDiagnostics {
        let n = self.unit_points.len();
        let rinv = {
            let l_inv = self
                .chol_l
                .solve_lower_triangular(&DMatrix::identity(n, n))
                .expect("training factor has a nonzero diagonal");
            l_inv.tr_mul(&l_inv)
        };
        let residuals: Vec<f64> = (0..n).map(|i| self.alpha[i] / rinv[(i, i)]).collect();
        let variances: Vec<f64> = (0..n).map(|i| self.hyper.sigma2 / rinv[(i, i)]).collect();
        let y = self.design.outputs();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let ss_tot: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
        let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
        let q2 = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            f64::NAN
        };
        LooDiagnostics {
            residuals,
            variances,
            q2,
        }
    }

    /// Write hyperparameters and design as JSON.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EmulatorFile {
            format: FILE_FORMAT.to_string(),
            design: self.design.clone(),
            hyper: self.hyper.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Rebuild an emulator saved with [`TrainedEmulator::save`].
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: EmulatorFile = serde_json::from_str(s)?;
        if file.format != FILE_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "unsupported emulator format `{}`",
                file.format
            )));
        }
        Self::new(file.design, file.hyper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelSpec;
    use crate::space::{Bounds, InputSpace};
    use rand::Rng;

    fn space() -> InputSpace {
        InputSpace::new(Bounds::unit(1), Bounds::new(vec![5.0], vec![15.0]).unwrap())
    }

    fn hyper(beta: f64, sigma2: f64, ls: [f64; 2]) -> GpHyperparams {
        GpHyperparams {
            beta: vec![beta],
            sigma2,
            kernel: KernelSpec::new(KernelFamily::Matern52, ls.to_vec()).unwrap(),
            nugget: 1e-8,
            trend: TrendBasis::Constant,
        }
    }

    fn pt(x: f64, t: f64) -> InputPoint {
        InputPoint::new(vec![x], vec![t]).unwrap()
    }

    #[test]
    fn one_point_design_closed_form() {
        let v1 = pt(0.4, 9.0);
        let y1 = 2.5;
        let (beta, sigma2) = (0.7, 1.9);
        let h = GpHyperparams {
            nugget: 0.0,
            ..hyper(beta, sigma2, [0.3, 0.5])
        };
        let d = Design::from_parts(space(), vec![v1.clone()], vec![y1]).unwrap();
        let em = TrainedEmulator::new(d, h.clone()).unwrap();
        let v = pt(0.55, 10.0);
        let c = h
            .kernel
            .eval(&space().to_unit(&v), &space().to_unit(&v1))
            .unwrap();
        let p = em.predict(&[v]).unwrap();
        assert!((p.mean[0] - (beta + c * (y1 - beta))).abs() < 1e-12);
        assert!((p.cov[(0, 0)] - sigma2 * (1.0 - c * c)).abs() < 1e-12);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let d =
            Design::from_parts(space(), vec![pt(0.0, 5.0), pt(0.1, 5.5)], vec![1.0, 2.0]).unwrap();
        let em = TrainedEmulator::new(d, hyper(0.3, 2.0, [0.01, 0.01])).unwrap();
        let p = em.predict(&[pt(1.0, 15.0)]).unwrap();
        assert!((p.mean[0] - 0.3).abs() < 1e-9);
        assert!((p.cov[(0, 0)] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn interpolates_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = Design::new(space());
        while d.len() < 12 {
            let (x, t) = (rng.random::<f64>(), 5.0 + 10.0 * rng.random::<f64>());
            let _ = d.push(pt(x, t), (6.0 * x - 2.0).powi(2) * (t * x - 4.0).sin());
        }
        let (em, _) = TrainedEmulator::fit(
            d.clone(),
            KernelFamily::Matern52,
            TrendBasis::Constant,
            &FitOptions::default(),
        )
        .unwrap();
        let p = em.predict(d.points()).unwrap();
        let h = em.hyper();
        for (i, y) in d.outputs().iter().enumerate() {
            assert!((p.mean[i] - y).abs() <= 1e-6 * (1.0 + y.abs()));
            assert!(p.cov[(i, i)] <= 10.0 * h.nugget * h.sigma2);
        }
    }

    #[test]
    fn sample_paths_behaviour() {
        let d = Design::from_parts(space(), vec![pt(0.2, 7.0), pt(0.8, 12.0)], vec![1.0, -1.0])
            .unwrap();
        let em = TrainedEmulator::new(d.clone(), hyper(0.0, 1.0, [0.3, 0.3])).unwrap();
        assert!(em.sample_paths(&[pt(0.5, 9.0)], 0, 1).unwrap().is_empty());
        let draws = em.sample_paths(d.points(), 50, 7).unwrap();
        for draw in &draws {
            assert!(
                (draw[0] - 1.0).abs() < 1e-2 && (draw[1] + 1.0).abs() < 1e-2,
                "{draw:?}"
            );
        }
        assert_eq!(draws, em.sample_paths(d.points(), 50, 7).unwrap());
    }

    #[test]
    fn json_roundtrip_reproduces_predictions() {
        let d = Design::from_parts(
            space(),
            vec![pt(0.2, 7.0), pt(0.8, 12.0), pt(0.5, 6.0)],
            vec![1.0, -1.0, 0.5],
        )
        .unwrap();
        let em = TrainedEmulator::new(d, hyper(0.1, 1.5, [0.4, 0.6])).unwrap();
        let back = TrainedEmulator::from_json(&em.to_json().unwrap()).unwrap();
        let probe = [pt(0.33, 8.0), pt(0.9, 14.0)];
        assert_eq!(em.predict(&probe).unwrap(), back.predict(&probe).unwrap());
        assert!(TrainedEmulator::from_json("{\"format\":\"other\"}").is_err());
    }

    #[test]
    fn loo_matches_refit_without_point() {
        let pts = vec![pt(0.1, 6.0), pt(0.4, 9.0), pt(0.7, 13.0), pt(0.9, 7.0)];
        let ys = vec![0.3, -0.2, 1.1, 0.4];
        let h = hyper(0.2, 1.3, [0.5, 0.5]);
        let em = TrainedEmulator::new(
            Design::from_parts(space(), pts.clone(), ys.clone()).unwrap(),
            h.clone(),
        )
        .unwrap();
        let loo = em.leave_one_out();
        for i in 0..pts.len() {
            let mut p2 = pts.clone();
            let mut y2 = ys.clone();
            let held = p2.remove(i);
            let yi = y2.remove(i);
            let sub = TrainedEmulator::new(Design::from_parts(space(), p2, y2).unwrap(), h.clone())
                .unwrap();
            let pr = sub.predict(&[held]).unwrap();
            assert!((loo.residuals[i] - (yi - pr.mean[0])).abs() < 1e-6);
            assert!((loo.variances[i] - pr.cov[(0, 0)]).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let d = Design::from_parts(space(), vec![pt(0.2, 7.0)], vec![1.0]).unwrap();
        let em = TrainedEmulator::new(d, hyper(0.0, 1.0, [0.3, 0.3])).unwrap();
        let bad = InputPoint::new(vec![0.1, 0.2], vec![7.0]).unwrap();
        assert!(matches!(
            em.predict(&[bad]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(em.predict(&[]).is_err());
    }
}
