//! Batch sequential design: every iteration runs the code at all field sites for the
//! selected parameter value.

use seqcal::bench::{generate_field_data, Problem, ProblemSetup};
use seqcal::seq_design::{run_algorithm1, CalibrationProblem, SequentialConfig};

fn main() -> seqcal::Result<()> {
    let setup = ProblemSetup::builtin(Problem::Case1)?;
    let sim = setup.simulator.simulator();
    let field = generate_field_data(&*sim, &setup.sites, &setup.theta_true, setup.noise_sd, 21)?;
    let problem =
        CalibrationProblem::new(sim, setup.space(), field, setup.prior(), setup.grid.clone())?;

    let cfg = SequentialConfig {
        n0: 12,
        budget: 30,
        seed: 4,
        ..SequentialConfig::default()
    };
    let run = run_algorithm1(&problem, &cfg)?;

    println!("iter  theta    incumbent      EI  calls");
    for r in &run.trace {
        println!(
            "{:>4} {:>6.2} {:>12.5} {:>7} {:>6}",
            r.iteration,
            r.theta[0],
            r.incumbent,
            r.ei.map_or("-".to_string(), |e| format!("{e:.4}")),
            r.simulator_calls
        );
    }
    println!(
        "design size {}, simulator calls {}",
        run.design().len(),
        run.simulator_calls
    );
    Ok(())
}
