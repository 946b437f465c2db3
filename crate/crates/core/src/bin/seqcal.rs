use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use seqcal::config::{apply_override, layer, load, section};
use seqcal::tool::{
    experiment_config, nested_config, run_benchmark, run_calibrate, run_design, run_ego, run_fit,
    run_plot_data, study_of, CalibrateCommand, DesignCommand, EgoCommand, FitCommand,
    PlotDataCommand, Study,
};
use toml::Table;

/// Sequential designs for Bayesian calibration with Gaussian process emulators.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// TOML file with one table per subcommand.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; beats `output_dir` in the configuration file.
    #[arg(short, long, global = true, env = "SEQCAL_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Override a setting of the subcommand's table, e.g. `--set mcmc.steps=5000`.
    #[arg(short, long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Print the effective settings and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximin Latin hypercube over the input box of a problem.
    Design(DesignArgs),
    /// Fit an emulator to a design CSV.
    Fit(FitArgs),
    /// Sample the approximated posterior of a fitted emulator.
    Calibrate(CalibrateArgs),
    /// Run Algorithm 1 or 2 on a benchmark problem.
    Ego(EgoArgs),
    /// Replicated comparison of design strategies, or the nested-design study.
    Benchmark(BenchmarkArgs),
    /// Long-format CSV of a benchmark directory for plotting.
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Only write the points.
    #[arg(long)]
    no_evaluate: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Design CSV with columns x.., t.., y.
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    emulator: Option<PathBuf>,
    /// Field CSV with columns x.., z.
    #[arg(long)]
    field: Option<PathBuf>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EgoArgs {
    #[arg(long)]
    problem: Option<String>,
    /// algo1, algo2-variance or algo2-tradeoff.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    field: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// experiment or nested.
    #[arg(long)]
    study: Option<String>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Data sets (experiment) or replicates (nested).
    #[arg(long)]
    datasets: Option<usize>,
    #[arg(long)]
    designs: Option<usize>,
    /// Comma-separated design kinds.
    #[arg(long)]
    kinds: Option<String>,
    #[arg(long)]
    time_limit: Option<f64>,
    /// 50 data sets × 50 designs.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args)]
struct PlotDataArgs {
    /// Benchmark output directory.
    #[arg(long)]
    input: Option<PathBuf>,
}

/// Collects flag values as `key=value` overrides.
#[derive(Default)]
struct Flags(Vec<String>);

impl Flags {
    fn str(&mut self, key: &str, v: &Option<String>) {
        if let Some(v) = v {
            self.0
                .push(format!("{key}={}", toml::Value::String(v.clone())));
        }
    }

    fn path(&mut self, key: &str, v: &Option<PathBuf>) {
        self.str(key, &v.as_ref().map(|p| p.display().to_string()));
    }

    fn num<T: std::fmt::Display>(&mut self, key: &str, v: &Option<T>) {
        if let Some(v) = v {
            self.0.push(format!("{key}={v}"));
        }
    }

    fn bool(&mut self, key: &str, on: bool, value: bool) {
        if on {
            self.0.push(format!("{key}={value}"));
        }
    }
}

fn table_name(c: &Command) -> &'static str {
    match c {
        Command::Design(_) => "design",
        Command::Fit(_) => "fit",
        Command::Calibrate(_) => "calibrate",
        Command::Ego(_) => "ego",
        Command::Benchmark(_) => "benchmark",
        Command::PlotData(_) => "plot_data",
    }
}

fn flags(c: &Command, study: Study) -> Vec<String> {
    let mut f = Flags::default();
    match c {
        Command::Design(a) => {
            f.str("problem", &a.problem);
            f.num("size", &a.size);
            f.num("seed", &a.seed);
            f.bool("evaluate", a.no_evaluate, false);
        }
        Command::Fit(a) => {
            f.path("design", &a.design);
            f.str("problem", &a.problem);
            f.str("kernel", &a.kernel);
        }
        Command::Calibrate(a) => {
            f.path("emulator", &a.emulator);
            f.path("field", &a.field);
            f.num("noise_sd", &a.noise_sd);
            f.num("mcmc.seed", &a.seed);
        }
        Command::Ego(a) => {
            f.str("problem", &a.problem);
            f.str("kind", &a.kind);
            f.num("seed", &a.seed);
            f.num("sequential.n0", &a.n0);
            f.num("sequential.budget", &a.budget);
            f.path("field", &a.field);
        }
        Command::Benchmark(a) => {
            f.str("study", &a.study);
            f.bool("full_scale", a.full_scale, true);
            match study {
                Study::Experiment => {
                    f.str("experiment.problem", &a.problem);
                    f.num("experiment.seed", &a.seed);
                    f.num("experiment.datasets", &a.datasets);
                    f.num("experiment.designs_per_dataset", &a.designs);
                    f.num("experiment.time_limit_s", &a.time_limit);
                    if let Some(k) = &a.kinds {
                        let list: Vec<toml::Value> = k
                            .split(',')
                            .map(|s| toml::Value::String(s.trim().to_string()))
                            .collect();
                        f.0.push(format!(
                            "experiment.design_kinds={}",
                            toml::Value::Array(list)
                        ));
                    }
                }
                Study::Nested => {
                    f.str("nested.problem", &a.problem);
                    f.num("nested.seed", &a.seed);
                    f.num("nested.replicates", &a.datasets);
                }
            }
        }
        Command::PlotData(a) => f.path("input", &a.input),
    }
    f.0
}

/// File, then `--set`, then explicit flags.
fn settings(cli: &Cli) -> Result<(Table, Option<PathBuf>)> {
    let doc = match &cli.config {
        Some(p) => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => String::new(),
    };
    let file = load(&doc, &[])?;
    let mut t = section(&file, table_name(&cli.command))?;
    for s in &cli.set {
        apply_override(&mut t, s)?;
    }
    if let Command::Benchmark(a) = &cli.command {
        if let Some(s) = &a.study {
            apply_override(&mut t, &format!("study={}", toml::Value::String(s.clone())))?;
        }
    }
    let study = study_of(&t)?;
    for s in flags(&cli.command, study) {
        apply_override(&mut t, &s)?;
    }
    let file_out = file
        .get("output_dir")
        .and_then(|v| v.as_str())
        .map(PathBuf::from);
    Ok((t, file_out))
}

fn print<T: serde::Serialize>(v: &T) -> Result<()> {
    print!("{}", toml::to_string(v)?);
    Ok(())
}

fn run(cli: &Cli, t: &Table, out: &Path) -> Result<Vec<PathBuf>> {
    let paths = match &cli.command {
        Command::Design(_) => {
            let c: DesignCommand = layer(&DesignCommand::default(), t)?;
            if cli.print_config {
                return print(&c).map(|_| Vec::new());
            }
            run_design(&c, out)?
        }
        Command::Fit(_) => {
            let c: FitCommand = layer(&FitCommand::default(), t)?;
            if cli.print_config {
                return print(&c).map(|_| Vec::new());
            }
            run_fit(&c, out)?
        }
        Command::Calibrate(_) => {
            let c: CalibrateCommand = layer(&CalibrateCommand::default(), t)?;
            if cli.print_config {
                return print(&c).map(|_| Vec::new());
            }
            run_calibrate(&c, out)?
        }
        Command::Ego(_) => {
            let c = EgoCommand::from_table(t)?;
            if cli.print_config {
                return print(&c).map(|_| Vec::new());
            }
            run_ego(&c, out)?
        }
        Command::Benchmark(_) => {
            if cli.print_config {
                match study_of(t)? {
                    Study::Experiment => print(&experiment_config(t)?)?,
                    Study::Nested => print(&nested_config(t)?)?,
                }
                return Ok(Vec::new());
            }
            run_benchmark(t, out)?
        }
        Command::PlotData(_) => {
            let c: PlotDataCommand = layer(&PlotDataCommand::default(), t)?;
            if cli.print_config {
                return print(&c).map(|_| Vec::new());
            }
            run_plot_data(&c, out)?
        }
    };
    Ok(paths)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let (table, file_out) = settings(&cli)?;
    let out = cli
        .output_dir
        .clone()
        .or(file_out)
        .unwrap_or_else(|| PathBuf::from("seqcal-out").join(table_name(&cli.command)));
    for p in run(&cli, &table, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}
