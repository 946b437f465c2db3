//! Simulated field measurements for the three benchmark problems.

use seqcal::bench::{generate_field_data, Problem, ProblemSetup};

fn main() -> seqcal::Result<()> {
    let out = std::env::temp_dir().join("seqcal-field-example");
    std::fs::create_dir_all(&out)?;
    for problem in [Problem::Case1, Problem::Case2, Problem::G6d] {
        let setup = ProblemSetup::builtin(problem)?;
        let sim = setup.simulator.simulator();
        let field =
            generate_field_data(&*sim, &setup.sites, &setup.theta_true, setup.noise_sd, 42)?;
        let path = out.join(format!("{}.csv", problem.name()));
        field.to_csv(&path)?;
        println!(
            "{:6} n = {:2}, theta = {:?}, noise sd = {}, first z = {:.4} -> {}",
            problem.name(),
            field.n(),
            setup.theta_true,
            setup.noise_sd,
            field.z[0],
            path.display()
        );
    }
    Ok(())
}
