//! Settings and entry points of the `seqcal` command-line subcommands.
//!
//! Each subcommand reads its own table of the configuration file (`[design]`, `[fit]`,
//! `[calibrate]`, `[ego]`, `[benchmark]`, `[plot_data]`) and writes into an output
//! directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::Table;

use crate::bench::{
    generate_field_data, run_experiment, run_nested_study, write_nested, write_outputs,
    write_plot_data, CustomProblem, DesignKind, ExperimentConfig, NestedConfig, Problem,
    ProblemSetup,
};
use crate::config::{layer, section};
use crate::error::{Error, Result};
use crate::field::{approx_log_posterior, FieldData, PriorSpec};
use crate::gp::{Design, FitOptions, KernelFamily, LooDiagnostics, TrainedEmulator, TrendBasis};
use crate::mcmc::{credible_interval, sample, SamplerConfig};
use crate::metrics::coverage;
use crate::seed::derive_seed;
use crate::seq_design::{
    initial_design, maximin_lhd, run_sequential, write_trace_csv, CalibrationProblem,
    SequentialConfig,
};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// `design`: a maximin Latin hypercube over the joint input box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignCommand {
    pub problem: Problem,
    pub custom: Option<CustomProblem>,
    pub size: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Run the benchmark code at every point and add a `y` column.
    pub evaluate: bool,
}

impl Default for DesignCommand {
    fn default() -> Self {
        Self {
            problem: Problem::Case1,
            custom: None,
            size: 12,
            seed: 1,
            restarts: 10,
            evaluate: true,
        }
    }
}

pub fn run_design(cfg: &DesignCommand, out: &Path) -> Result<Vec<PathBuf>> {
    if cfg.size < 2 {
        return Err(Error::Config("design size must be at least 2".into()));
    }
    let setup = ProblemSetup::resolve(cfg.problem, cfg.custom.as_ref(), None)?;
    let space = setup.space();
    std::fs::create_dir_all(out)?;
    let path = out.join("design.csv");
    if cfg.evaluate {
        let sim = setup.simulator.simulator();
        initial_design(&*sim, &space, cfg.size, cfg.seed, cfg.restarts)?.to_csv(&path)?;
    } else {
        let pts = maximin_lhd(cfg.size, &space.joint_bounds(), cfg.seed, cfg.restarts);
        let mut w = csv::Writer::from_path(&path)?;
        let mut header: Vec<String> = (1..=space.x_dim()).map(|i| format!("x{i}")).collect();
        header.extend((1..=space.tau_dim()).map(|i| format!("t{i}")));
        w.write_record(&header)?;
        for p in &pts {
            w.write_record(p.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    Ok(vec![path])
}

/// `fit`: train an emulator on a design CSV with columns `x.., t.., y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitCommand {
    pub design: PathBuf,
    /// Supplies the input box of the design.
    pub problem: Problem,
    pub custom: Option<CustomProblem>,
    pub kernel: KernelFamily,
    pub trend: TrendBasis,
    pub options: FitOptions,
}

impl Default for FitCommand {
    fn default() -> Self {
        Self {
            design: PathBuf::from("design.csv"),
            problem: Problem::Case1,
            custom: None,
            kernel: KernelFamily::Matern52,
            trend: TrendBasis::Constant,
            options: FitOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct FitReport<'a> {
    log_likelihood: f64,
    converged: bool,
    evaluations: usize,
    hyper: &'a crate::gp::GpHyperparams,
    loo: &'a LooDiagnostics,
}

pub fn run_fit(cfg: &FitCommand, out: &Path) -> Result<Vec<PathBuf>> {
    let setup = ProblemSetup::resolve(cfg.problem, cfg.custom.as_ref(), None)?;
    let design = Design::from_csv(&cfg.design, setup.space())?;
    let (em, fit) = TrainedEmulator::fit(design, cfg.kernel, cfg.trend, &cfg.options)?;
    std::fs::create_dir_all(out)?;
    let em_path = out.join("emulator.json");
    em.save(&em_path)?;
    let loo = em.leave_one_out();
    let report = FitReport {
        log_likelihood: fit.log_likelihood,
        converged: fit.converged,
        evaluations: fit.evaluations,
        hyper: em.hyper(),
        loo: &loo,
    };
    let report_path = out.join("fit.json");
    write_json(&report_path, &report)?;
    Ok(vec![em_path, report_path])
}

/// `calibrate`: sample the approximated posterior of a saved emulator and field data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateCommand {
    pub emulator: PathBuf,
    /// CSV with columns `x1..xd, z`.
    pub field: PathBuf,
    /// Measurement-error standard deviation.
    pub noise_sd: f64,
    pub level: f64,
    /// When given, the report states whether the credible intervals contain it.
    pub theta_true: Option<Vec<f64>>,
    pub mcmc: SamplerConfig,
}

impl Default for CalibrateCommand {
    fn default() -> Self {
        Self {
            emulator: PathBuf::from("emulator.json"),
            field: PathBuf::from("field.csv"),
            noise_sd: 0.3,
            level: 0.95,
            theta_true: None,
            mcmc: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationReport {
    mean: Vec<f64>,
    intervals: Vec<(f64, f64)>,
    level: f64,
    acceptance_rate: f64,
    samples: usize,
    covered: Option<bool>,
}

pub fn run_calibrate(cfg: &CalibrateCommand, out: &Path) -> Result<Vec<PathBuf>> {
    if !(cfg.noise_sd > 0.0 && cfg.noise_sd.is_finite()) {
        return Err(Error::Config("noise_sd must be positive".into()));
    }
    let em = TrainedEmulator::load(&cfg.emulator)?;
    let field = FieldData::from_csv(&cfg.field, cfg.noise_sd * cfg.noise_sd)?;
    let prior = PriorSpec::uniform(em.design().space().tau.clone());
    let chain = sample(
        |t| approx_log_posterior(&em, t, &field, &prior),
        &prior,
        &cfg.mcmc,
    )?;
    let covered = match &cfg.theta_true {
        Some(t) => Some(coverage(&chain, t, cfg.level)?.covered),
        None => None,
    };
    let report = CalibrationReport {
        mean: chain.mean()?,
        intervals: credible_interval(&chain, cfg.level)?,
        level: cfg.level,
        acceptance_rate: chain.acceptance_rate,
        samples: chain.len(),
        covered,
    };
    std::fs::create_dir_all(out)?;
    let chain_path = out.join("chain.csv");
    chain.to_csv(&chain_path)?;
    let report_path = out.join("calibration.json");
    write_json(&report_path, &report)?;
    Ok(vec![chain_path, report_path])
}

/// `ego`: one sequential design on a benchmark problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoCommand {
    pub problem: Problem,
    pub custom: Option<CustomProblem>,
    /// `algo1`, `algo2-variance` or `algo2-tradeoff`.
    pub kind: DesignKind,
    pub seed: u64,
    /// Field data CSV; simulated from the problem's true parameter when absent.
    pub field: Option<PathBuf>,
    pub grid_axes: Option<Vec<Vec<Vec<f64>>>>,
    pub include_wall_time: bool,
    pub sequential: SequentialConfig,
}

impl Default for EgoCommand {
    fn default() -> Self {
        Self::for_problem(Problem::Case1)
    }
}

impl EgoCommand {
    pub fn for_problem(problem: Problem) -> Self {
        let (n0, budget) = problem.default_budget();
        Self {
            problem,
            custom: None,
            kind: DesignKind::Algo1,
            seed: 1,
            field: None,
            grid_axes: None,
            include_wall_time: false,
            sequential: SequentialConfig {
                n0,
                budget,
                ..SequentialConfig::default()
            },
        }
    }

    /// Defaults of the table's `problem` overlaid with the table.
    pub fn from_table(t: &Table) -> Result<Self> {
        let problem = match t.get("problem") {
            None => Problem::Case1,
            Some(v) => v
                .as_str()
                .ok_or_else(|| Error::Config("problem must be a string".into()))?
                .parse()?,
        };
        layer(&Self::for_problem(problem), t)
    }
}

pub fn run_ego(cfg: &EgoCommand, out: &Path) -> Result<Vec<PathBuf>> {
    let strategy = cfg
        .kind
        .strategy()
        .ok_or_else(|| Error::Config("ego runs a sequential design kind, not maximin".into()))?;
    let setup = ProblemSetup::resolve(cfg.problem, cfg.custom.as_ref(), cfg.grid_axes.as_deref())?;
    let sim = setup.simulator.simulator();
    let lambda2 = setup.noise_sd * setup.noise_sd;
    let field = match &cfg.field {
        Some(p) => FieldData::from_csv(p, lambda2)?,
        None => generate_field_data(
            &*sim,
            &setup.sites,
            &setup.theta_true,
            setup.noise_sd,
            derive_seed(cfg.seed, 0),
        )?,
    };
    let problem =
        CalibrationProblem::new(sim, setup.space(), field, setup.prior(), setup.grid.clone())?;
    let seq = SequentialConfig {
        seed: cfg.seed,
        ..cfg.sequential.clone()
    };
    let run = run_sequential(&problem, &seq, strategy)?;

    std::fs::create_dir_all(out)?;
    let paths = [
        out.join("field.csv"),
        out.join("design.csv"),
        out.join("trace.csv"),
        out.join("emulator.json"),
    ];
    problem.field.to_csv(&paths[0])?;
    run.design().to_csv(&paths[1])?;
    write_trace_csv(&paths[2], &run.trace, cfg.include_wall_time)?;
    run.emulator().save(&paths[3])?;
    Ok(paths.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    /// Maximin and sequential designs over replicated data sets.
    #[default]
    Experiment,
    /// Divergence along nested maximin designs.
    Nested,
}

/// Which study `benchmark` runs; its settings live in `[benchmark.experiment]` or
/// `[benchmark.nested]`.
pub fn study_of(t: &Table) -> Result<Study> {
    match t.get("study") {
        None => Ok(Study::Experiment),
        Some(v) => match v.as_str() {
            Some("experiment") => Ok(Study::Experiment),
            Some("nested") => Ok(Study::Nested),
            _ => Err(Error::Config(format!("unknown study {v}"))),
        },
    }
}

/// Experiment settings of a `[benchmark]` table; `full_scale = true` switches to 50 × 50.
pub fn experiment_config(t: &Table) -> Result<ExperimentConfig> {
    check_benchmark_keys(t)?;
    let mut cfg = ExperimentConfig::from_table(&section(t, "experiment")?)?;
    if t.get("full_scale")
        .and_then(|v| v.as_bool())
        .unwrap_or(false)
    {
        cfg.datasets = 50;
        cfg.designs_per_dataset = 50;
    }
    Ok(cfg)
}

pub fn nested_config(t: &Table) -> Result<NestedConfig> {
    check_benchmark_keys(t)?;
    layer(&NestedConfig::default(), &section(t, "nested")?)
}

fn check_benchmark_keys(t: &Table) -> Result<()> {
    match t
        .keys()
        .find(|k| !matches!(k.as_str(), "study" | "full_scale" | "experiment" | "nested"))
    {
        Some(k) => Err(Error::Config(format!("unknown benchmark setting `{k}`"))),
        None => Ok(()),
    }
}

pub fn run_benchmark(t: &Table, out: &Path) -> Result<Vec<PathBuf>> {
    match study_of(t)? {
        Study::Experiment => {
            let cfg = experiment_config(t)?;
            let result = run_experiment(&cfg)?;
            write_outputs(&result, out)?;
            Ok(vec![out.join("summary.json"), out.join("replicates.csv")])
        }
        Study::Nested => {
            let result = run_nested_study(&nested_config(t)?)?;
            write_nested(&result, out)?;
            Ok(vec![
                out.join("nested.csv"),
                out.join("nested_summary.json"),
            ])
        }
    }
}

/// `plot-data`: long-format table of a finished benchmark directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotDataCommand {
    /// Benchmark output directory holding `replicates.csv`.
    pub input: PathBuf,
}

impl Default for PlotDataCommand {
    fn default() -> Self {
        Self {
            input: PathBuf::from("."),
        }
    }
}

pub fn run_plot_data(cfg: &PlotDataCommand, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let path = out.join("plot_data.csv");
    write_plot_data(&cfg.input, &path)?;
    Ok(vec![path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load;

    #[test]
    fn design_fit_calibrate_chain() {
        let dir = tempfile::tempdir().unwrap();
        let d = DesignCommand {
            size: 10,
            ..DesignCommand::default()
        };
        run_design(&d, dir.path()).unwrap();
        let f = FitCommand {
            design: dir.path().join("design.csv"),
            ..FitCommand::default()
        };
        run_fit(&f, dir.path()).unwrap();
        let setup = ProblemSetup::builtin(Problem::Case1).unwrap();
        let sim = setup.simulator.simulator();
        generate_field_data(&*sim, &setup.sites, &setup.theta_true, 0.3, 4)
            .unwrap()
            .to_csv(dir.path().join("field.csv"))
            .unwrap();
        let c = CalibrateCommand {
            emulator: dir.path().join("emulator.json"),
            field: dir.path().join("field.csv"),
            mcmc: SamplerConfig {
                steps: 2000,
                burn_in: 500,
                ..SamplerConfig::default()
            },
            theta_true: Some(vec![12.0]),
            ..CalibrateCommand::default()
        };
        let paths = run_calibrate(&c, dir.path()).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&paths[1]).unwrap()).unwrap();
        assert_eq!(report["samples"], 1500);
        assert!(report["covered"].is_boolean());
    }

    #[test]
    fn unevaluated_design_has_no_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let d = DesignCommand {
            size: 5,
            evaluate: false,
            ..DesignCommand::default()
        };
        let p = run_design(&d, dir.path()).unwrap();
        let text = std::fs::read_to_string(&p[0]).unwrap();
        assert_eq!(text.lines().next(), Some("x1,t1"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn ego_rejects_maximin_and_takes_problem_budgets() {
        let t = load("problem = \"g6d\"\n", &[]).unwrap();
        let e = EgoCommand::from_table(&t).unwrap();
        assert_eq!((e.sequential.n0, e.sequential.budget), (100, 200));
        let dir = tempfile::tempdir().unwrap();
        let m = EgoCommand {
            kind: DesignKind::Maximin,
            ..EgoCommand::default()
        };
        assert!(run_ego(&m, dir.path()).is_err());
    }

    #[test]
    fn benchmark_tables() {
        let t = load("study = \"nested\"\n[nested]\nreplicates = 3\n", &[]).unwrap();
        assert_eq!(study_of(&t).unwrap(), Study::Nested);
        assert_eq!(nested_config(&t).unwrap().replicates, 3);
        let t = load(
            "full_scale = true\n[experiment]\nproblem = \"case2\"\n",
            &[],
        )
        .unwrap();
        let e = experiment_config(&t).unwrap();
        assert_eq!(
            (e.problem, e.datasets, e.designs_per_dataset),
            (Problem::Case2, 50, 50)
        );
        let t = load("datasets = 3\n", &[]).unwrap();
        assert!(experiment_config(&t).is_err());
    }
}
