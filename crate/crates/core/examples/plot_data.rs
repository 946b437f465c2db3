//! Long-format table for external plotting, built from a small benchmark run.

use seqcal::bench::{run_experiment, write_outputs, write_plot_data, ExperimentConfig, Problem};

fn main() -> seqcal::Result<()> {
    let mut cfg = ExperimentConfig::for_problem(Problem::Case2);
    cfg.datasets = 2;
    cfg.designs_per_dataset = 2;
    cfg.mcmc.steps = 8_000;
    cfg.mcmc.burn_in = 2_000;
    let dir = std::env::temp_dir().join("seqcal-plot-example");
    write_outputs(&run_experiment(&cfg)?, &dir)?;

    let out = dir.join("plot_data.csv");
    let rows = write_plot_data(&dir, &out)?;
    println!("{rows} rows -> {}", out.display());
    for line in std::fs::read_to_string(&out)?.lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
