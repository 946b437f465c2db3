//! Choice of the single field site run by the one-at-a-time algorithm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PriorSpec;
use crate::gp::TrainedEmulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Largest predictive variance.
    Variance,
    /// Normalized predictive variance times normalized prior variance of the emulator mean.
    Tradeoff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionChoice {
    pub index: usize,
    pub scores: Vec<f64>,
    /// The trade-off criterion degenerated and the variance choice was used.
    pub fell_back: bool,
}

fn check(em: &TrainedEmulator, xs: &[Vec<f64>], theta: &[f64]) -> Result<()> {
    let space = em.design().space();
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no candidate field sites".into()));
    }
    if theta.len() != space.tau_dim() {
        return Err(Error::DimensionMismatch {
            expected: space.tau_dim(),
            got: theta.len(),
        });
    }
    if let Some(x) = xs.iter().find(|x| x.len() != space.x_dim()) {
        return Err(Error::DimensionMismatch {
            expected: space.x_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// First index of the maximum.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Site with the largest predictive variance at `(x_i, theta)`.
pub fn crit_variance(
    em: &TrainedEmulator,
    xs: &[Vec<f64>],
    theta: &[f64],
) -> Result<CriterionChoice> {
    check(em, xs, theta)?;
    let (_, var) = em.mean_var_unit(&em.unit_column(xs, theta));
    Ok(CriterionChoice {
        index: argmax(&var),
        scores: var,
        fell_back: false,
    })
}

/// Weighted variance over prior draws of the emulator mean at each site.
pub(crate) fn prior_mean_variance(
    em: &TrainedEmulator,
    xs: &[Vec<f64>],
    prior: &PriorSpec,
    prior_draws: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = prior.weighted_draws(prior_draws, &mut rng);
    let mut first = vec![0.0; xs.len()];
    let mut second = vec![0.0; xs.len()];
    for (theta, w) in &draws {
        for (i, u) in em.unit_column(xs, theta).iter().enumerate() {
            let m = em.mean_unit(u);
            first[i] += w * m;
            second[i] += w * m * m;
        }
    }
    first
        .iter()
        .zip(&second)
        .map(|(a, b)| (b - a * a).max(0.0))
        .collect()
}

/// Product of the normalized predictive variance at `(x_i, theta)` and the normalized
/// variance of the emulator mean at `x_i` over `prior_draws` prior draws of the parameter.
pub fn crit_tradeoff(
    em: &TrainedEmulator,
    xs: &[Vec<f64>],
    theta: &[f64],
    prior: &PriorSpec,
    prior_draws: usize,
    seed: u64,
) -> Result<CriterionChoice> {
    check(em, xs, theta)?;
    if prior.dim() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: prior.dim(),
        });
    }
    let spread = prior_mean_variance(em, xs, prior, prior_draws.max(2), seed);
    let max_spread = spread.iter().copied().fold(0.0, f64::max);
    if max_spread <= 0.0 {
        log::warn!(
            "emulator mean does not vary over the prior; choosing the site by variance alone"
        );
        let mut c = crit_variance(em, xs, theta)?;
        c.fell_back = true;
        return Ok(c);
    }
    let (_, var) = em.mean_var_unit(&em.unit_column(xs, theta));
    let max_var = var.iter().copied().fold(0.0, f64::max);
    let scores: Vec<f64> = var
        .iter()
        .zip(&spread)
        .map(|(v, s)| {
            if max_var > 0.0 {
                v / max_var * s / max_spread
            } else {
                s / max_spread
            }
        })
        .collect();
    Ok(CriterionChoice {
        index: argmax(&scores),
        scores,
        fell_back: false,
    })
}
