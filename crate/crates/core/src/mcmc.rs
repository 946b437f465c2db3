//! Adaptive random-walk Metropolis on a box.
//!
//! Proposals are Gaussian with per-component standard deviations `g·s_i`. During burn-in
//! `s_i` tracks the spread of the burn-in samples and the global factor `g` is nudged
//! toward an acceptance rate between 20% and 40%. Both are frozen afterwards, so the
//! retained samples come from a fixed kernel. Proposals leaving the box are reflected
//! back, which keeps the proposal symmetric. A fixed fraction of proposals is drawn
//! uniformly over the whole box so that separated modes are visited.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PriorSpec;

const ADAPT_BATCH: usize = 50;
const ACCEPT_LOW: f64 = 0.2;
const ACCEPT_HIGH: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Total number of steps including burn-in.
    pub steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Initial proposal standard deviations as fractions of the box widths.
    pub proposal_scale: f64,
    /// Prior draws screened for the starting point; the best one is used.
    pub init_draws: usize,
    /// Keep every `thin`-th retained sample.
    pub thin: usize,
    /// Probability that a proposal is drawn uniformly over the box instead of by the
    /// random walk.
    pub global_jump: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            burn_in: 5_000,
            seed: 0,
            proposal_scale: 0.1,
            init_draws: 64,
            thin: 1,
            global_jump: 0.1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::InvalidArgument(format!(
                "steps ({}) must exceed burn_in ({})",
                self.steps, self.burn_in
            )));
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return Err(Error::InvalidArgument(
                "proposal_scale must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.global_jump) {
            return Err(Error::InvalidArgument(
                "global_jump must lie in [0, 1)".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        Ok(())
    }
}

/// Post-burn-in samples with their log densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    /// Fraction of accepted proposals after burn-in.
    pub acceptance_rate: f64,
    pub burn_in: usize,
    pub seed: u64,
    /// Frozen proposal standard deviations.
    pub proposal_sd: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::EmptyChain);
        }
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim()];
        for s in &self.samples {
            for (a, v) in m.iter_mut().zip(s) {
                *a += v / n;
            }
        }
        Ok(m)
    }

    /// Marginal values of component `j`.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[j]).collect()
    }

    /// One row per sample: `theta1..thetad, log_density`.
    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (1..=self.dim()).map(|i| format!("theta{i}")).collect();
        header.push("log_density".into());
        w.write_record(&header)?;
        for (s, lp) in self.samples.iter().zip(&self.log_density) {
            let rec: Vec<String> = s
                .iter()
                .chain(std::iter::once(lp))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Metropolis acceptance probability for a symmetric proposal.
pub fn acceptance_probability(log_current: f64, log_proposed: f64) -> f64 {
    if log_proposed == f64::NEG_INFINITY {
        return 0.0;
    }
    if log_current == f64::NEG_INFINITY {
        return 1.0;
    }
    (log_proposed - log_current).exp().min(1.0)
}

fn checked<F>(logpost: &mut F, theta: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let v = logpost(theta)?;
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::NanLogDensity {
            theta: theta.to_vec(),
        });
    }
    Ok(v)
}

/// Run the sampler on `logpost`, which must already include the prior.
pub fn sample<F>(mut logpost: F, prior: &PriorSpec, cfg: &SamplerConfig) -> Result<Chain>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let bounds = &prior.bounds;
    let d = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut current = bounds.center();
    let mut lp = checked(&mut logpost, &current)?;
    for _ in 0..cfg.init_draws {
        let t: Vec<f64> = (0..d)
            .map(|i| bounds.lower[i] + bounds.width(i) * rng.random::<f64>())
            .collect();
        let v = checked(&mut logpost, &t)?;
        if v > lp {
            current = t;
            lp = v;
        }
    }

    let widths: Vec<f64> = (0..d).map(|i| bounds.width(i)).collect();
    let mut scale: Vec<f64> = widths.iter().map(|w| cfg.proposal_scale * w).collect();
    let mut global = 1.0;
    let mut batch_accepts = 0usize;
    let mut batch_walks = 0usize;
    let mut burn_samples: Vec<Vec<f64>> = Vec::new();

    let kept = (cfg.steps - cfg.burn_in).div_ceil(cfg.thin);
    let mut samples = Vec::with_capacity(kept);
    let mut log_density = Vec::with_capacity(kept);
    let mut accepts = 0usize;
    let mut proposal = vec![0.0; d];

    for step in 0..cfg.steps {
        let walk = cfg.global_jump == 0.0 || rng.random::<f64>() >= cfg.global_jump;
        if walk {
            for i in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                proposal[i] = current[i] + global * scale[i] * z;
            }
            bounds.reflect(&mut proposal);
        } else {
            for i in 0..d {
                proposal[i] = bounds.lower[i] + widths[i] * rng.random::<f64>();
            }
        }
        let lp_new = checked(&mut logpost, &proposal)?;
        let u: f64 = rng.random();
        let accepted = u < acceptance_probability(lp, lp_new);
        if accepted {
            current.copy_from_slice(&proposal);
            lp = lp_new;
        }

        if step < cfg.burn_in {
            if walk {
                batch_accepts += accepted as usize;
                batch_walks += 1;
            }
            burn_samples.push(current.clone());
            if (step + 1) % ADAPT_BATCH == 0 && batch_walks > 0 {
                // Only random-walk moves steer the step size.
                let rate = batch_accepts as f64 / batch_walks as f64;
                if rate < ACCEPT_LOW {
                    global *= 0.7;
                } else if rate > ACCEPT_HIGH {
                    global *= 1.3;
                }
                batch_accepts = 0;
                batch_walks = 0;
                // Component scales follow the second half of the burn-in seen so far.
                if burn_samples.len() >= 4 * ADAPT_BATCH {
                    let recent = &burn_samples[burn_samples.len() / 2..];
                    for i in 0..d {
                        let sd = std_dev(recent.iter().map(|s| s[i]));
                        if sd > 1e-8 * widths[i] {
                            scale[i] = 2.38 / (d as f64).sqrt() * sd;
                            global = global.clamp(0.05, 20.0);
                        }
                    }
                }
            }
        } else {
            accepts += accepted as usize;
            if (step - cfg.burn_in).is_multiple_of(cfg.thin) {
                samples.push(current.clone());
                log_density.push(lp);
            }
        }
    }

    Ok(Chain {
        samples,
        log_density,
        acceptance_rate: accepts as f64 / (cfg.steps - cfg.burn_in) as f64,
        burn_in: cfg.burn_in,
        seed: cfg.seed,
        proposal_sd: scale.iter().map(|s| s * global).collect(),
    })
}

fn std_dev(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = it.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    (it.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Sample quantile with linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed credible interval per dimension.
pub fn credible_interval(chain: &Chain, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let tail = (1.0 - level) / 2.0;
    Ok((0..chain.dim())
        .map(|j| {
            let mut v = chain.component(j);
            v.sort_by(f64::total_cmp);
            (quantile(&v, tail), quantile(&v, 1.0 - tail))
        })
        .collect())
}
