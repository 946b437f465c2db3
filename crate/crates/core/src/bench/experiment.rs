//! Replicated comparison of design strategies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problems::{generate_field_data, CustomProblem, Problem, ProblemSetup};
use crate::error::{Error, Result};
use crate::field::{approx_log_posterior, target_log_posterior, CountingSimulator, FieldData};
use crate::gp::{FitOptions, TrainedEmulator};
use crate::mcmc::{quantile, sample, Chain, SamplerConfig};
use crate::metrics::{coverage, kl_knn, KlOptions};
use crate::seed::derive_path;
use crate::seq_design::{
    initial_design, initial_design_seed, run_sequential, write_trace_csv, CalibrationProblem,
    Criterion, SequentialConfig, Strategy, TraceRow,
};

const STREAM_FIELD: u64 = 10;
const STREAM_TARGET: u64 = 11;
const STREAM_DESIGN: u64 = 12;
const STREAM_APPROX: u64 = 13;

/// Version of the summary layout written to `summary.json`.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Default thinning of benchmark chains. Long runs of repeated Metropolis states bias
/// the nearest-neighbour divergence; thinned chains keep it close to the exact value.
pub const CHAIN_THIN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// Space-filling design of the whole budget.
    Maximin,
    /// Batch sequential design.
    Algo1,
    /// One-at-a-time sequential design, site of largest predictive variance.
    Algo2Variance,
    /// One-at-a-time sequential design, trade-off criterion.
    Algo2Tradeoff,
}

impl DesignKind {
    pub const ALL: [DesignKind; 4] = [
        DesignKind::Maximin,
        DesignKind::Algo1,
        DesignKind::Algo2Variance,
        DesignKind::Algo2Tradeoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Maximin => "maximin",
            DesignKind::Algo1 => "algo1",
            DesignKind::Algo2Variance => "algo2-variance",
            DesignKind::Algo2Tradeoff => "algo2-tradeoff",
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            DesignKind::Maximin => None,
            DesignKind::Algo1 => Some(Strategy::Batch),
            DesignKind::Algo2Variance => Some(Strategy::OneAtATime(Criterion::Variance)),
            DesignKind::Algo2Tradeoff => Some(Strategy::OneAtATime(Criterion::Tradeoff)),
        }
    }
}

impl std::str::FromStr for DesignKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DesignKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown design kind '{s}'")))
    }
}

/// Full description of a benchmark run.
///
/// Seeds inside `sequential` and `mcmc` are ignored: every replicate draws its own
/// streams from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub seed: u64,
    /// Field data sets.
    pub datasets: usize,
    /// Designs per data set and design kind.
    pub designs_per_dataset: usize,
    pub design_kinds: Vec<DesignKind>,
    /// Credible level of the coverage check.
    pub level: f64,
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    /// Record wall times in traces; makes reruns differ.
    pub include_wall_time: bool,
    /// Write every approximated-posterior chain.
    pub write_chains: bool,
    /// Replicates not started within this many seconds are recorded as skipped.
    pub time_limit_s: Option<f64>,
    /// Candidate grids, each given by its levels along every parameter axis.
    pub grid_axes: Option<Vec<Vec<Vec<f64>>>>,
    pub custom: Option<CustomProblem>,
    pub sequential: SequentialConfig,
    pub mcmc: SamplerConfig,
    pub kl: KlOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_problem(Problem::Case1)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults: 20 data sets × 20 designs, or 10 × 10 with the Algorithm 2
    /// variants only for the six-dimensional problem.
    pub fn for_problem(problem: Problem) -> Self {
        let (n0, budget) = problem.default_budget();
        let (reps, kinds) = match problem {
            Problem::G6d => (
                10,
                vec![
                    DesignKind::Maximin,
                    DesignKind::Algo2Variance,
                    DesignKind::Algo2Tradeoff,
                ],
            ),
            _ => (20, DesignKind::ALL.to_vec()),
        };
        Self {
            problem,
            seed: 1,
            datasets: reps,
            designs_per_dataset: reps,
            design_kinds: kinds,
            level: 0.95,
            output_dir: None,
            include_wall_time: false,
            write_chains: false,
            time_limit_s: None,
            grid_axes: None,
            custom: None,
            sequential: SequentialConfig {
                n0,
                budget,
                ..SequentialConfig::default()
            },
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

    /// Parse a TOML document; missing settings take the defaults of its `problem`.
    pub fn from_toml(s: &str) -> Result<Self> {
        Self::from_table(&crate::config::load(s, &[])?)
    }

    /// Defaults of the table's `problem` (Case 1 when absent) overlaid with the table.
    pub fn from_table(t: &toml::Table) -> Result<Self> {
        let problem = match t.get("problem") {
            None => Problem::Case1,
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::Config("problem must be a string".into()))?
                .parse()?,
        };
        crate::config::layer(&Self::for_problem(problem), t)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn setup(&self) -> Result<ProblemSetup> {
        ProblemSetup::resolve(
            self.problem,
            self.custom.as_ref(),
            self.grid_axes.as_deref(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets == 0 || self.designs_per_dataset == 0 {
            return Err(Error::Config(
                "datasets and designs_per_dataset must be at least 1".into(),
            ));
        }
        if self.design_kinds.is_empty() {
            return Err(Error::Config("no design kinds selected".into()));
        }
        let mut kinds = self.design_kinds.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.design_kinds.len() {
            return Err(Error::Config("design kinds are repeated".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if let Some(t) = self.time_limit_s {
            if !(t > 0.0) {
                return Err(Error::Config("time_limit_s must be positive".into()));
            }
        }
        let setup = self.setup()?;
        let n = setup.sites.len();
        let seq = &self.sequential;
        if seq.n0 < 2 {
            return Err(Error::Config("n0 must be at least 2".into()));
        }
        for k in &self.design_kinds {
            let batch = match k.strategy() {
                None => continue,
                Some(Strategy::Batch) => n,
                Some(Strategy::OneAtATime(_)) => 1,
            };
            if seq.n0 + batch > seq.budget {
                return Err(Error::BudgetTooSmall {
                    n0: seq.n0,
                    budget: seq.budget,
                    batch,
                });
            }
        }
        if seq.ei_draws == 0 {
            return Err(Error::Config("ei_draws must be positive".into()));
        }
        self.mcmc.validate()?;
        if self.kl.k == 0 {
            return Err(Error::Config("kl.k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Failed,
    /// Not started before the time limit.
    Skipped,
}

/// One calibration: a design, its emulator, the approximated posterior and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub dataset: usize,
    pub design: usize,
    pub kind: DesignKind,
    pub status: Status,
    /// `KL(target ‖ approximated)`.
    pub kl: Option<f64>,
    pub covered: Option<bool>,
    /// Per-dimension coverage as a string of 0 and 1.
    pub covered_dims: Option<String>,
    pub design_size: Option<usize>,
    /// Simulator runs spent on the design.
    pub simulator_calls: Option<usize>,
    pub iterations: Option<usize>,
    pub acceptance_rate: Option<f64>,
    pub error: Option<String>,
}

impl ReplicateRecord {
    fn empty(dataset: usize, design: usize, kind: DesignKind, status: Status) -> Self {
        Self {
            dataset,
            design,
            kind,
            status,
            kl: None,
            covered: None,
            covered_dims: None,
            design_size: None,
            simulator_calls: None,
            iterations: None,
            acceptance_rate: None,
            error: None,
        }
    }
}

/// The target-posterior chain of one data set. Its simulator runs are part of the
/// benchmark only and are not charged to any design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub dataset: usize,
    pub acceptance_rate: f64,
    pub samples: usize,
    pub covered: bool,
    pub benchmark_simulator_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quartiles {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// `None` when `values` holds no finite value; non-finite values are dropped.
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindSummary {
    pub kind: DesignKind,
    pub completed: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Spread over data sets of the per-data-set mean divergence.
    pub kl_dataset_means: Option<Quartiles>,
    /// Spread over all completed calibrations.
    pub kl_all: Option<Quartiles>,
    /// Spread over data sets of the per-data-set coverage rate.
    pub coverage_dataset_rates: Option<Quartiles>,
    /// Coverage rate over all completed calibrations.
    pub coverage_rate: Option<f64>,
    pub mean_simulator_calls: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSummary {
    pub mean_acceptance_rate: f64,
    pub coverage_rate: f64,
    pub benchmark_simulator_calls: usize,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub schema_version: u32,
    pub problem: Problem,
    pub seed: u64,
    pub datasets: usize,
    pub designs_per_dataset: usize,
    pub n0: usize,
    pub budget: usize,
    pub level: f64,
    pub theta_true: Vec<f64>,
    pub target: TargetSummary,
    pub kinds: Vec<KindSummary>,
}

impl Summary {
    pub fn kind(&self, kind: DesignKind) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == kind)
    }

    /// Median over data sets of the per-data-set mean divergence.
    pub fn median_kl(&self, kind: DesignKind) -> Option<f64> {
        self.kind(kind)?.kl_dataset_means.as_ref().map(|q| q.median)
    }
}

/// Parse `summary.json` and check it against the layout and its invariants.
pub fn validate_summary(json: &str) -> Result<Summary> {
    let s: Summary = serde_json::from_str(json)?;
    let bad = |m: String| Err(Error::Config(format!("summary: {m}")));
    if s.schema_version != SUMMARY_SCHEMA_VERSION {
        return bad(format!(
            "schema version {} is not {SUMMARY_SCHEMA_VERSION}",
            s.schema_version
        ));
    }
    if !(s.level > 0.0 && s.level < 1.0) {
        return bad("level outside (0, 1)".into());
    }
    let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
    if !rate_ok(s.target.coverage_rate) || !rate_ok(s.target.mean_acceptance_rate) {
        return bad("target rates outside [0, 1]".into());
    }
    let mut seen = Vec::new();
    for k in &s.kinds {
        if seen.contains(&k.kind) {
            return bad(format!("kind {} repeated", k.kind.name()));
        }
        seen.push(k.kind);
        if k.completed + k.failed + k.skipped != s.datasets * s.designs_per_dataset {
            return bad(format!(
                "replicate counts of {} do not add up",
                k.kind.name()
            ));
        }
        for q in [&k.kl_dataset_means, &k.kl_all, &k.coverage_dataset_rates]
            .into_iter()
            .flatten()
        {
            if !(q.min <= q.q1 && q.q1 <= q.median && q.median <= q.q3 && q.q3 <= q.max)
                || q.count == 0
            {
                return bad(format!("quartiles of {} are not ordered", k.kind.name()));
            }
        }
        if let Some(q) = &k.kl_all {
            if q.count != k.completed {
                return bad(format!(
                    "divergence count of {} differs from completed",
                    k.kind.name()
                ));
            }
        }
        if k.coverage_rate.is_some_and(|r| !rate_ok(r)) {
            return bad(format!("coverage rate of {} outside [0, 1]", k.kind.name()));
        }
    }
    Ok(s)
}

/// A sequential run's trace, keyed by replicate.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub dataset: usize,
    pub design: usize,
    pub kind: DesignKind,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub fields: Vec<FieldData>,
    pub targets: Vec<TargetRecord>,
    pub records: Vec<ReplicateRecord>,
    pub traces: Vec<TraceRecord>,
    pub chains: Vec<(usize, usize, DesignKind, Chain)>,
    pub summary: Summary,
}

struct JobOutput {
    record: ReplicateRecord,
    trace: Option<TraceRecord>,
    chain: Option<Chain>,
}

/// Run every replicate of `cfg`. Failures are recorded and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let setup = cfg.setup()?;
    let sim = setup.simulator.simulator();
    let prior = setup.prior();

    let fields: Vec<FieldData> = (0..cfg.datasets)
        .map(|d| {
            generate_field_data(
                &*sim,
                &setup.sites,
                &setup.theta_true,
                setup.noise_sd,
                derive_path(cfg.seed, &[STREAM_FIELD, d as u64]),
            )
        })
        .collect::<Result<_>>()?;

    log::info!(
        "{}: sampling {} target posteriors",
        cfg.problem.name(),
        cfg.datasets
    );
    let targets: Vec<(Chain, TargetRecord)> = fields
        .par_iter()
        .enumerate()
        .map(|(d, field)| {
            let counting = CountingSimulator::new(sim.clone());
            let mc = SamplerConfig {
                seed: derive_path(cfg.seed, &[STREAM_TARGET, d as u64]),
                ..cfg.mcmc.clone()
            };
            let chain = sample(
                |t| target_log_posterior(&counting, t, field, &prior),
                &prior,
                &mc,
            )?;
            let cov = coverage(&chain, &setup.theta_true, cfg.level)?;
            let rec = TargetRecord {
                dataset: d,
                acceptance_rate: chain.acceptance_rate,
                samples: chain.len(),
                covered: cov.covered,
                benchmark_simulator_calls: counting.calls(),
            };
            Ok((chain, rec))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize, DesignKind)> = (0..cfg.datasets)
        .flat_map(|d| {
            (0..cfg.designs_per_dataset)
                .flat_map(move |r| cfg.design_kinds.iter().map(move |k| (d, r, *k)))
        })
        .collect();
    log::info!(
        "{}: running {} calibrations",
        cfg.problem.name(),
        jobs.len()
    );
    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|&(d, r, kind)| {
            if cfg
                .time_limit_s
                .is_some_and(|t| start.elapsed().as_secs_f64() > t)
            {
                return JobOutput {
                    record: ReplicateRecord::empty(d, r, kind, Status::Skipped),
                    trace: None,
                    chain: None,
                };
            }
            let out = run_job(cfg, &setup, &fields[d], &targets[d].0, d, r, kind);
            log::debug!(
                "{} dataset {d} design {r}: {:?}",
                kind.name(),
                out.record.kl
            );
            out
        })
        .collect();

    let mut records = Vec::with_capacity(outputs.len());
    let mut traces = Vec::new();
    let mut chains = Vec::new();
    for o in outputs {
        if let Some(t) = o.trace {
            traces.push(t);
        }
        if let Some(c) = o.chain {
            chains.push((o.record.dataset, o.record.design, o.record.kind, c));
        }
        records.push(o.record);
    }
    let target_records: Vec<TargetRecord> = targets.into_iter().map(|(_, r)| r).collect();
    let summary = summarize(cfg, &setup, &target_records, &records);
    Ok(ExperimentResult {
        config: cfg.clone(),
        fields,
        targets: target_records,
        records,
        traces,
        chains,
        summary,
    })
}

fn run_job(
    cfg: &ExperimentConfig,
    setup: &ProblemSetup,
    field: &FieldData,
    target: &Chain,
    d: usize,
    r: usize,
    kind: DesignKind,
) -> JobOutput {
    let mut record = ReplicateRecord::empty(d, r, kind, Status::Ok);
    let result = calibrate_once(cfg, setup, field, target, d, r, kind);
    match result {
        Ok((em, calls, trace, chain, kl)) => {
            let cov = coverage(&chain, &setup.theta_true, cfg.level);
            match cov {
                Ok(c) => {
                    record.covered = Some(c.covered);
                    record.covered_dims = Some(
                        c.per_dim
                            .iter()
                            .map(|b| if *b { '1' } else { '0' })
                            .collect(),
                    );
                }
                Err(e) => {
                    record.status = Status::Failed;
                    record.error = Some(e.to_string());
                }
            }
            record.kl = Some(kl);
            record.design_size = Some(em.design().len());
            record.simulator_calls = Some(calls);
            record.iterations = trace.as_ref().map(Vec::len);
            record.acceptance_rate = Some(chain.acceptance_rate);
            JobOutput {
                trace: trace.map(|rows| TraceRecord {
                    dataset: d,
                    design: r,
                    kind,
                    rows,
                }),
                chain: cfg.write_chains.then_some(chain),
                record,
            }
        }
        Err(e) => {
            log::warn!("{} dataset {d} design {r} failed: {e}", kind.name());
            record.status = Status::Failed;
            record.error = Some(e.to_string());
            JobOutput {
                record,
                trace: None,
                chain: None,
            }
        }
    }
}

type Calibration = (TrainedEmulator, usize, Option<Vec<TraceRow>>, Chain, f64);

fn calibrate_once(
    cfg: &ExperimentConfig,
    setup: &ProblemSetup,
    field: &FieldData,
    target: &Chain,
    d: usize,
    r: usize,
    kind: DesignKind,
) -> Result<Calibration> {
    let seed = derive_path(cfg.seed, &[STREAM_DESIGN, d as u64, r as u64]);
    let space = setup.space();
    let prior = setup.prior();
    let seq = SequentialConfig {
        seed,
        ..cfg.sequential.clone()
    };
    let (em, calls, trace) = match kind.strategy() {
        None => {
            let sim = CountingSimulator::new(setup.simulator.simulator());
            let design = initial_design(
                &sim,
                &space,
                seq.budget,
                initial_design_seed(seed),
                seq.lhd_restarts,
            )?;
            let opts = FitOptions {
                seed: derive_path(seed, &[2, 0]),
                ..seq.fit.clone()
            };
            let (em, _) = TrainedEmulator::fit(design, seq.kernel, seq.trend, &opts)?;
            (em, sim.calls(), None)
        }
        Some(strategy) => {
            let problem = CalibrationProblem::new(
                setup.simulator.simulator(),
                space,
                field.clone(),
                prior.clone(),
                setup.grid.clone(),
            )?;
            let run = run_sequential(&problem, &seq, strategy)?;
            let calls = run.simulator_calls;
            (run.state.emulator, calls, Some(run.trace))
        }
    };
    let kind_index = DesignKind::ALL
        .iter()
        .position(|k| *k == kind)
        .expect("listed kind") as u64;
    let mc = SamplerConfig {
        seed: derive_path(cfg.seed, &[STREAM_APPROX, d as u64, r as u64, kind_index]),
        ..cfg.mcmc.clone()
    };
    let chain = sample(|t| approx_log_posterior(&em, t, field, &prior), &prior, &mc)?;
    let kl = kl_knn(&target.samples, &chain.samples, cfg.kl)?.value;
    Ok((em, calls, trace, chain, kl))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(
    cfg: &ExperimentConfig,
    setup: &ProblemSetup,
    targets: &[TargetRecord],
    records: &[ReplicateRecord],
) -> Summary {
    let kinds = cfg
        .design_kinds
        .iter()
        .map(|&kind| {
            let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.kind == kind).collect();
            let ok: Vec<&ReplicateRecord> = mine
                .iter()
                .copied()
                .filter(|r| r.status == Status::Ok)
                .collect();
            let mut by_dataset: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for r in &ok {
                let e = by_dataset.entry(r.dataset).or_default();
                e.0.push(r.kl.expect("completed replicate"));
                e.1.push(if r.covered.expect("completed replicate") {
                    1.0
                } else {
                    0.0
                });
            }
            let kl_means: Vec<f64> = by_dataset.values().filter_map(|(k, _)| mean(k)).collect();
            let cov_rates: Vec<f64> = by_dataset.values().filter_map(|(_, c)| mean(c)).collect();
            let all_kl: Vec<f64> = ok.iter().filter_map(|r| r.kl).collect();
            let all_cov: Vec<f64> = ok
                .iter()
                .map(|r| if r.covered == Some(true) { 1.0 } else { 0.0 })
                .collect();
            let calls: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.simulator_calls.map(|c| c as f64))
                .collect();
            KindSummary {
                kind,
                completed: ok.len(),
                failed: mine.iter().filter(|r| r.status == Status::Failed).count(),
                skipped: mine.iter().filter(|r| r.status == Status::Skipped).count(),
                kl_dataset_means: Quartiles::of(&kl_means),
                kl_all: Quartiles::of(&all_kl),
                coverage_dataset_rates: Quartiles::of(&cov_rates),
                coverage_rate: mean(&all_cov),
                mean_simulator_calls: mean(&calls),
            }
        })
        .collect();
    let acc: Vec<f64> = targets.iter().map(|t| t.acceptance_rate).collect();
    let cov: Vec<f64> = targets
        .iter()
        .map(|t| if t.covered { 1.0 } else { 0.0 })
        .collect();
    Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        problem: cfg.problem,
        seed: cfg.seed,
        datasets: cfg.datasets,
        designs_per_dataset: cfg.designs_per_dataset,
        n0: cfg.sequential.n0,
        budget: cfg.sequential.budget,
        level: cfg.level,
        theta_true: setup.theta_true.clone(),
        target: TargetSummary {
            mean_acceptance_rate: mean(&acc).unwrap_or(0.0),
            coverage_rate: mean(&cov).unwrap_or(0.0),
            benchmark_simulator_calls: targets.iter().map(|t| t.benchmark_simulator_calls).sum(),
        },
        kinds,
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

/// Write `config.toml`, `summary.json`, `replicates.csv`, `targets.csv`, the field data
/// and the sequential traces under `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("field"))?;
    std::fs::create_dir_all(dir.join("traces"))?;
    std::fs::write(dir.join("config.toml"), result.config.to_toml()?)?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&result.summary)? + "\n",
    )?;
    for (d, f) in result.fields.iter().enumerate() {
        f.to_csv(dir.join("field").join(format!("dataset_{d:03}.csv")))?;
    }

    let mut w = csv::Writer::from_path(dir.join("replicates.csv"))?;
    w.write_record([
        "dataset",
        "design",
        "kind",
        "status",
        "kl",
        "covered",
        "covered_dims",
        "design_size",
        "simulator_calls",
        "iterations",
        "acceptance_rate",
        "error",
    ])?;
    for r in &result.records {
        w.write_record([
            r.dataset.to_string(),
            r.design.to_string(),
            r.kind.name().to_string(),
            format!("{:?}", r.status).to_lowercase(),
            opt(&r.kl),
            opt(&r.covered),
            opt(&r.covered_dims),
            opt(&r.design_size),
            opt(&r.simulator_calls),
            opt(&r.iterations),
            opt(&r.acceptance_rate),
            opt(&r.error),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("targets.csv"))?;
    w.write_record([
        "dataset",
        "acceptance_rate",
        "samples",
        "covered",
        "benchmark_simulator_calls",
    ])?;
    for t in &result.targets {
        w.write_record([
            t.dataset.to_string(),
            t.acceptance_rate.to_string(),
            t.samples.to_string(),
            t.covered.to_string(),
            t.benchmark_simulator_calls.to_string(),
        ])?;
    }
    w.flush()?;

    for t in &result.traces {
        let name = format!("{}_d{:03}_r{:03}.csv", t.kind.name(), t.dataset, t.design);
        write_trace_csv(
            dir.join("traces").join(name),
            &t.rows,
            result.config.include_wall_time,
        )?;
    }
    if !result.chains.is_empty() {
        std::fs::create_dir_all(dir.join("chains"))?;
        for (d, r, kind, c) in &result.chains {
            c.to_csv(
                dir.join("chains")
                    .join(format!("{}_d{d:03}_r{r:03}.csv", kind.name())),
            )?;
        }
    }
    Ok(())
}

/// Read `replicates.csv` from an output directory.
pub fn read_replicates(dir: &Path) -> Result<Vec<ReplicateRecord>> {
    let mut rd = csv::Reader::from_path(dir.join("replicates.csv"))?;
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
