//! Divergence of the approximated posterior along nested space-filling designs.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::CHAIN_THIN;
use super::problems::{generate_field_data, Problem, ProblemSetup};
use crate::error::{Error, Result};
use crate::field::{approx_log_posterior, target_log_posterior};
use crate::gp::{Design, FitOptions, KernelFamily, TrainedEmulator, TrendBasis};
use crate::mcmc::{quantile, sample, SamplerConfig};
use crate::metrics::{coverage, kl_knn, spearman, KlOptions, RankCorrelation};
use crate::seed::derive_path;
use crate::seq_design::{covering_distance, nested_maximin, probe_grid};
use crate::space::InputPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedConfig {
    pub problem: Problem,
    pub seed: u64,
    pub replicates: usize,
    /// Increasing design sizes; each design contains the previous one.
    pub sizes: Vec<usize>,
    pub level: f64,
    pub kernel: KernelFamily,
    pub trend: TrendBasis,
    pub fit: FitOptions,
    pub lhd_restarts: usize,
    /// Probe levels per axis for the covering distance.
    pub probe_per_axis: usize,
    pub mcmc: SamplerConfig,
    pub kl: KlOptions,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Case1,
            seed: 1,
            replicates: 10,
            sizes: vec![15, 30, 60, 120],
            level: 0.95,
            kernel: KernelFamily::Matern52,
            trend: TrendBasis::Constant,
            fit: FitOptions::default(),
            lhd_restarts: 10,
            probe_per_axis: 101,
            mcmc: SamplerConfig {
                thin: CHAIN_THIN,
                ..SamplerConfig::default()
            },
            kl: KlOptions {
                k: 1,
                collapse_ties: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedRow {
    pub replicate: usize,
    pub size: usize,
    pub kl: f64,
    pub covered: bool,
    pub covering_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedResult {
    pub rows: Vec<NestedRow>,
    /// Median divergence per design size, in the order of `sizes`.
    pub median_kl: Vec<f64>,
    pub median_covering: Vec<f64>,
    /// Rank correlation between design size and divergence over all rows.
    pub trend: RankCorrelation,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

/// For every replicate: one data set, one nested design, and at each size a fitted
/// emulator, an approximated-posterior chain and its divergence from the target chain.
pub fn run_nested_study(cfg: &NestedConfig) -> Result<NestedResult> {
    if cfg.replicates == 0 || cfg.sizes.is_empty() {
        return Err(Error::Config(
            "need at least one replicate and one size".into(),
        ));
    }
    if cfg.sizes.windows(2).any(|w| w[0] >= w[1]) || cfg.sizes[0] < 2 {
        return Err(Error::Config(
            "sizes must increase and start at 2 or more".into(),
        ));
    }
    cfg.mcmc.validate()?;
    let setup = ProblemSetup::builtin(cfg.problem)?;
    let sim = setup.simulator.simulator();
    let space = setup.space();
    let prior = setup.prior();
    let joint = space.joint_bounds();
    let probe = probe_grid(joint.dim(), cfg.probe_per_axis);

    let per_rep: Vec<Vec<NestedRow>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let r = rep as u64;
            let field = generate_field_data(
                &*sim,
                &setup.sites,
                &setup.theta_true,
                setup.noise_sd,
                derive_path(cfg.seed, &[1, r]),
            )?;
            let target_mc = SamplerConfig {
                seed: derive_path(cfg.seed, &[2, r]),
                ..cfg.mcmc.clone()
            };
            let target = sample(
                |t| target_log_posterior(&*sim, t, &field, &prior),
                &prior,
                &target_mc,
            )?;
            let pts = nested_maximin(
                &cfg.sizes,
                &joint,
                derive_path(cfg.seed, &[3, r]),
                cfg.lhd_restarts,
            );
            let points: Vec<InputPoint> = pts
                .iter()
                .map(|p| InputPoint::from_joint(p, space.x_dim()))
                .collect();
            let outputs = points
                .iter()
                .map(|p| sim.run(&p.x, &p.tau))
                .collect::<Result<Vec<f64>>>()?;
            cfg.sizes
                .iter()
                .enumerate()
                .map(|(level, &size)| {
                    let design = Design::from_parts(
                        space.clone(),
                        points[..size].to_vec(),
                        outputs[..size].to_vec(),
                    )?;
                    let opts = FitOptions {
                        seed: derive_path(cfg.seed, &[4, r, level as u64]),
                        ..cfg.fit.clone()
                    };
                    let (em, _) = TrainedEmulator::fit(design, cfg.kernel, cfg.trend, &opts)?;
                    let mc = SamplerConfig {
                        seed: derive_path(cfg.seed, &[5, r, level as u64]),
                        ..cfg.mcmc.clone()
                    };
                    let chain = sample(
                        |t| approx_log_posterior(&em, t, &field, &prior),
                        &prior,
                        &mc,
                    )?;
                    Ok(NestedRow {
                        replicate: rep,
                        size,
                        kl: kl_knn(&target.samples, &chain.samples, cfg.kl)?.value,
                        covered: coverage(&chain, &setup.theta_true, cfg.level)?.covered,
                        covering_distance: covering_distance(&pts[..size], &joint, &probe),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<NestedRow> = per_rep.into_iter().flatten().collect();
    let at = |size: usize, f: fn(&NestedRow) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.size == size).map(f).collect()
    };
    let median_kl = cfg.sizes.iter().map(|&s| median(at(s, |r| r.kl))).collect();
    let median_covering = cfg
        .sizes
        .iter()
        .map(|&s| median(at(s, |r| r.covering_distance)))
        .collect();
    let sizes: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
    let kls: Vec<f64> = rows.iter().map(|r| r.kl).collect();
    let trend = spearman(&sizes, &kls)?;
    Ok(NestedResult {
        rows,
        median_kl,
        median_covering,
        trend,
    })
}

/// Write the rows as `nested.csv` and the aggregate as `nested_summary.json`.
pub fn write_nested(result: &NestedResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("nested.csv"))?;
    for r in &result.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    #[derive(Serialize)]
    struct Aggregate<'a> {
        median_kl: &'a [f64],
        median_covering: &'a [f64],
        trend: RankCorrelation,
    }
    let agg = Aggregate {
        median_kl: &result.median_kl,
        median_covering: &result.median_covering,
        trend: result.trend,
    };
    std::fs::write(
        dir.join("nested_summary.json"),
        serde_json::to_string_pretty(&agg)? + "\n",
    )?;
    Ok(())
}
