//! A reduced replicated comparison of maximin and sequential designs on Case 1, written
//! to disk in the same layout as the `benchmark` subcommand.

use seqcal::bench::{run_experiment, write_outputs, DesignKind, ExperimentConfig, Problem};

fn main() -> seqcal::Result<()> {
    let mut cfg = ExperimentConfig::for_problem(Problem::Case1);
    cfg.datasets = 3;
    cfg.designs_per_dataset = 3;
    cfg.mcmc.steps = 10_000;
    cfg.mcmc.burn_in = 2_500;

    let result = run_experiment(&cfg)?;
    let out = std::env::temp_dir().join("seqcal-benchmark-example");
    write_outputs(&result, &out)?;

    let s = &result.summary;
    println!("{:16} {:>10} {:>10}", "design", "median KL", "coverage");
    for kind in DesignKind::ALL {
        let k = s.kind(kind).expect("all kinds ran");
        println!(
            "{:16} {:>10.4} {:>10.2}",
            kind.name(),
            s.median_kl(kind).unwrap_or(f64::NAN),
            k.coverage_rate.unwrap_or(f64::NAN)
        );
    }
    println!(
        "coverage of the true posterior {:.2}; outputs in {}",
        s.target.coverage_rate,
        out.display()
    );
    Ok(())
}
