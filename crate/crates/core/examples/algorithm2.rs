//! One-at-a-time sequential design with both site-selection criteria on Case 2.

use seqcal::bench::{generate_field_data, Problem, ProblemSetup};
use seqcal::seq_design::{
    run_algorithm2, write_trace_csv, CalibrationProblem, Criterion, SequentialConfig,
};

fn main() -> seqcal::Result<()> {
    let setup = ProblemSetup::builtin(Problem::Case2)?;
    let sim = setup.simulator.simulator();
    let field = generate_field_data(&*sim, &setup.sites, &setup.theta_true, setup.noise_sd, 5)?;
    let problem =
        CalibrationProblem::new(sim, setup.space(), field, setup.prior(), setup.grid.clone())?;
    let cfg = SequentialConfig {
        seed: 2,
        ..SequentialConfig::default()
    };
    let out = std::env::temp_dir().join("seqcal-algorithm2-example");
    std::fs::create_dir_all(&out)?;

    for criterion in [Criterion::Variance, Criterion::Tradeoff] {
        let run = run_algorithm2(&problem, &cfg, criterion)?;
        let sites: Vec<usize> = run.trace.iter().filter_map(|r| r.x_index).collect();
        let last = run.trace.last().expect("at least one iteration");
        println!(
            "{criterion:?}: {} iterations, final incumbent {:.5}",
            run.trace.len(),
            last.incumbent
        );
        println!("  site indices {sites:?}");
        println!(
            "  last thetas {:?}",
            &run.thetas[run.thetas.len().saturating_sub(5)..]
        );
        let path = out.join(format!("trace_{criterion:?}.csv").to_lowercase());
        write_trace_csv(&path, &run.trace, false)?;
        println!("  trace -> {}", path.display());
    }
    Ok(())
}
