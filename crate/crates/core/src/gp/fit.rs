//! Maximum marginal-likelihood fitting with `beta` and `sigma2` profiled out.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelEval;
use super::optim::nelder_mead;
use super::{
    Design, GpHyperparams, KernelFamily, KernelSpec, TrendBasis, NUGGET_MAX, NUGGET_START,
};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Settings of the length-scale search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub starts: usize,
    pub evals_per_start: usize,
    /// Range of log length-scales (unit-cube coordinates) the starts are drawn from.
    pub start_range: (f64, f64),
    /// Hard box on the log length-scales during the search.
    pub search_range: (f64, f64),
    pub seed: u64,
    /// Extra start, typically the previous fit's log length-scales.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            evals_per_start: 200,
            start_range: (0.05f64.ln(), 5.0f64.ln()),
            search_range: (0.01f64.ln(), 10.0f64.ln()),
            seed: 0,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub hyper: GpHyperparams,
    /// Profiled log marginal likelihood at the returned hyperparameters.
    pub log_likelihood: f64,
    /// `false` when the best local search ran out of evaluations.
    pub converged: bool,
    pub evaluations: usize,
}

/// Profiled likelihood at one set of length-scales, in standardized output units.
struct Profile {
    log_lik: f64,
    beta: Vec<f64>,
    sigma2: f64,
    nugget: f64,
}

struct Problem<'a> {
    family: KernelFamily,
    unit: &'a [Vec<f64>],
    y: DVector<f64>,
    h: DMatrix<f64>,
}

impl Problem<'_> {
    fn profile(&self, length_scales: &[f64]) -> Option<Profile> {
        let n = self.unit.len();
        let eval = KernelSpec {
            family: self.family,
            length_scales: length_scales.to_vec(),
        }
        .evaluator();
        let mut nugget = NUGGET_START;
        loop {
            if let Some(p) = self.profile_with(&eval, nugget) {
                return Some(p);
            }
            nugget *= 10.0;
            if nugget > NUGGET_MAX * (1.0 + 1e-12) {
                log::trace!("length-scales {length_scales:?} not factorizable for n = {n}");
                return None;
            }
        }
    }

    fn profile_with(&self, eval: &KernelEval, nugget: f64) -> Option<Profile> {
        let n = self.unit.len() as f64;
        let r = eval.matrix(self.unit, nugget);
        let chol = Cholesky::<f64, Dyn>::new(r)?;
        let l = chol.l_dirty();
        let f = l.solve_lower_triangular(&self.h)?;
        let yt = l.solve_lower_triangular(&self.y)?;
        let ftf = f.tr_mul(&f);
        let fty = f.tr_mul(&yt);
        let beta = ftf
            .clone()
            .cholesky()
            .map(|c| c.solve(&fty))
            .or_else(|| ftf.lu().solve(&fty))?;
        let e = &yt - &f * &beta;
        let q = e.norm_squared();
        let sigma2 = (q / n).max(nugget);
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_lik = -0.5 * (n * sigma2.ln() + log_det + q / sigma2 + n * LN_2PI);
        log_lik.is_finite().then(|| Profile {
            log_lik,
            beta: beta.iter().copied().collect(),
            sigma2,
            nugget,
        })
    }
}

/// Fit `(beta, sigma2, length-scales)` by maximizing the marginal likelihood of the
/// design outputs.
///
/// `beta` is the generalized-least-squares estimate and `sigma2` the mean residual
/// quadratic form for given length-scales; the length-scales are searched by a
/// multi-start Nelder-Mead in log space. Outputs are standardized internally.
pub fn fit_hyperparameters(
    design: &Design,
    family: KernelFamily,
    trend: TrendBasis,
    opts: &FitOptions,
) -> Result<FitResult> {
    let dim = design.space().dim();
    let p = trend.len(dim);
    if design.len() < p + 2 {
        return Err(Error::DesignTooSmall {
            needed: p + 2,
            got: design.len(),
        });
    }
    let outputs = design.outputs();
    let n = outputs.len() as f64;
    let mean = outputs.iter().sum::<f64>() / n;
    let var = outputs.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
    let scale = if var.sqrt() > 0.0 && var.is_finite() {
        var.sqrt()
    } else {
        1.0
    };

    let unit = design.unit_points();
    let problem = Problem {
        family,
        y: DVector::from_iterator(outputs.len(), outputs.iter().map(|y| (y - mean) / scale)),
        h: trend.matrix(&unit),
        unit: &unit,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = &opts.warm_start {
        if w.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: w.len(),
            });
        }
        starts.push(w.clone());
    }
    let k = opts.starts;
    if k > 0 {
        let (lo, hi) = opts.start_range;
        let cols: Vec<Vec<usize>> = (0..dim)
            .map(|_| {
                let mut c: Vec<usize> = (0..k).collect();
                c.shuffle(&mut rng);
                c
            })
            .collect();
        for i in 0..k {
            let s = (0..dim)
                .map(|j| {
                    let cell = cols[j][i] as f64 + rng.random::<f64>();
                    lo + (hi - lo) * cell / k as f64
                })
                .collect();
            starts.push(s);
        }
    }
    if starts.is_empty() {
        return Err(Error::InvalidArgument(
            "length-scale search needs at least one start".into(),
        ));
    }

    let lower = vec![opts.search_range.0; dim];
    let upper = vec![opts.search_range.1; dim];
    let objective = |log_ls: &[f64]| {
        let ls: Vec<f64> = log_ls.iter().map(|v| v.exp()).collect();
        problem.profile(&ls).map_or(f64::INFINITY, |p| -p.log_lik)
    };

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    let mut evaluations = 0;
    for s in &starts {
        let m = nelder_mead(
            objective,
            s,
            0.7,
            &lower,
            &upper,
            opts.evals_per_start,
            1e-9,
        );
        evaluations += m.evaluations;
        if m.value.is_finite() && best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((m.x, m.value, m.converged));
        }
    }
    let (log_ls, _, converged) = best.ok_or(Error::DegenerateDesign {
        max_nugget: NUGGET_MAX,
    })?;
    if !converged {
        log::warn!("length-scale search stopped at its evaluation budget without converging");
    }
    let ls: Vec<f64> = log_ls.iter().map(|v| v.exp()).collect();
    let prof = problem.profile(&ls).ok_or(Error::DegenerateDesign {
        max_nugget: NUGGET_MAX,
    })?;

    // Back to output units: m(v) = mean + scale·h(v)ᵀbeta_s.
    let mut beta: Vec<f64> = prof.beta.iter().map(|b| b * scale).collect();
    beta[0] += mean;
    let hyper = GpHyperparams {
        beta,
        sigma2: prof.sigma2 * scale * scale,
        kernel: KernelSpec::new(family, ls)?,
        nugget: prof.nugget,
        trend,
    };
    Ok(FitResult {
        hyper,
        log_likelihood: prof.log_lik - n * scale.ln(),
        converged,
        evaluations,
    })
}

/// Log marginal density of the design outputs under the GP prior with the given
/// hyperparameters (the nugget is included in the correlation matrix).
pub fn log_marginal_likelihood(design: &Design, hyper: &GpHyperparams) -> Result<f64> {
    hyper.validate()?;
    if hyper.kernel.dim() != design.space().dim() {
        return Err(Error::DimensionMismatch {
            expected: design.space().dim(),
            got: hyper.kernel.dim(),
        });
    }
    let unit = design.unit_points();
    let r = hyper.kernel.evaluator().matrix(&unit, hyper.nugget);
    let chol = Cholesky::<f64, Dyn>::new(r).ok_or(Error::DegenerateDesign {
        max_nugget: hyper.nugget,
    })?;
    let resid = DVector::from_iterator(
        unit.len(),
        unit.iter()
            .zip(design.outputs())
            .map(|(u, y)| y - hyper.trend.dot(u, &hyper.beta)),
    );
    let l = chol.l_dirty();
    let w = l
        .solve_lower_triangular(&resid)
        .ok_or(Error::DegenerateDesign {
            max_nugget: hyper.nugget,
        })?;
    let n = unit.len() as f64;
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (n * hyper.sigma2.ln() + log_det + w.norm_squared() / hyper.sigma2 + n * LN_2PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Bounds, InputPoint, InputSpace};

    fn space2() -> InputSpace {
        InputSpace::new(Bounds::unit(1), Bounds::unit(1))
    }

    fn design_from(f: impl Fn(f64, f64) -> f64, n: usize, seed: u64) -> Design {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = Design::new(space2());
        while d.len() < n {
            let (x, t) = (rng.random::<f64>(), rng.random::<f64>());
            let _ = d.push(InputPoint::new(vec![x], vec![t]).unwrap(), f(x, t));
        }
        d
    }

    #[test]
    fn constant_outputs_profile_to_constant() {
        let d = design_from(|_, _| 3.5, 10, 1);
        let fit = fit_hyperparameters(
            &d,
            KernelFamily::Matern52,
            TrendBasis::Constant,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(
            (fit.hyper.beta[0] - 3.5).abs() < 1e-9,
            "{:?}",
            fit.hyper.beta
        );
        assert!(fit.hyper.sigma2 <= 1e-6, "sigma2 = {}", fit.hyper.sigma2);
    }

    #[test]
    fn scale_equivariance() {
        let f = |x: f64, t: f64| (6.0 * x - 2.0).powi(2) * (10.0 * t * x - 4.0).sin();
        let d = design_from(f, 15, 2);
        let doubled = Design::from_parts(
            d.space().clone(),
            d.points().to_vec(),
            d.outputs().iter().map(|y| 2.0 * y).collect(),
        )
        .unwrap();
        let opts = FitOptions::default();
        let a =
            fit_hyperparameters(&d, KernelFamily::Matern52, TrendBasis::Constant, &opts).unwrap();
        let b = fit_hyperparameters(
            &doubled,
            KernelFamily::Matern52,
            TrendBasis::Constant,
            &opts,
        )
        .unwrap();
        assert!((b.hyper.sigma2 / a.hyper.sigma2 - 4.0).abs() < 1e-9);
        for (la, lb) in a
            .hyper
            .kernel
            .length_scales
            .iter()
            .zip(&b.hyper.kernel.length_scales)
        {
            assert!((la / lb - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn too_small_design() {
        let d = design_from(|x, _| x, 2, 3);
        assert!(matches!(
            fit_hyperparameters(
                &d,
                KernelFamily::Matern52,
                TrendBasis::Constant,
                &FitOptions::default()
            ),
            Err(Error::DesignTooSmall { needed: 3, got: 2 })
        ));
        let d = design_from(|x, _| x, 4, 3);
        assert!(fit_hyperparameters(
            &d,
            KernelFamily::Matern52,
            TrendBasis::Linear,
            &FitOptions::default()
        )
        .is_err());
    }

    #[test]
    fn reported_likelihood_matches_direct_evaluation() {
        let d = design_from(|x, t| (3.0 * x).sin() + t * t, 12, 4);
        for trend in [TrendBasis::Constant, TrendBasis::Linear] {
            let fit = fit_hyperparameters(
                &d,
                KernelFamily::SquaredExponential,
                trend,
                &FitOptions::default(),
            )
            .unwrap();
            let direct = log_marginal_likelihood(&d, &fit.hyper).unwrap();
            assert!(
                (direct - fit.log_likelihood).abs() < 1e-6 * (1.0 + direct.abs()),
                "{direct} vs {}",
                fit.log_likelihood
            );
        }
    }
}
