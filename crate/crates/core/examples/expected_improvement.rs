//! One step of the improvement search: estimate EI over the candidate grid and compare the
//! pruned search with the exhaustive one.

use seqcal::bench::{generate_field_data, Problem, ProblemSetup};
use seqcal::field::expected_ss;
use seqcal::gp::{FitOptions, KernelFamily, TrainedEmulator, TrendBasis};
use seqcal::seq_design::{
    ei_estimate, hyperrect_prob, initial_design, select_theta, select_theta_exhaustive, EiState,
};

fn main() -> seqcal::Result<()> {
    let setup = ProblemSetup::builtin(Problem::Case2)?;
    let sim = setup.simulator.simulator();
    let field = generate_field_data(&*sim, &setup.sites, &setup.theta_true, setup.noise_sd, 8)?;
    let design = initial_design(&*sim, &setup.space(), 12, 1, 10)?;
    let (em, _) = TrainedEmulator::fit(
        design,
        KernelFamily::Matern52,
        TrendBasis::Constant,
        &FitOptions::default(),
    )?;

    // Incumbent: smallest expected sum of squares on the grid.
    let incumbent = setup.grid.grids()[0]
        .iter()
        .map(|t| expected_ss(&em, t, &field))
        .collect::<seqcal::Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let state = EiState::new(em, field, setup.grid.clone(), incumbent, 1, 2000, 17)?;

    for t in [6.0, 9.0, 12.0, 14.0] {
        let e = ei_estimate(&state, &[t])?;
        let p = hyperrect_prob(&state, &[t])?;
        println!(
            "theta {t:>4}: EI {:.4}, P(improve) {:.3}, box bound m·P_box {:.4}",
            e.ei,
            e.prob_inside,
            incumbent * p
        );
    }

    let pruned = select_theta(&state)?;
    let full = select_theta_exhaustive(&state)?;
    println!("incumbent {incumbent:.4}");
    println!(
        "pruned:     theta {:?}, EI {:.4}, {} of {} candidates estimated",
        pruned.theta, pruned.ei, pruned.evaluated, pruned.grid_size
    );
    println!("exhaustive: theta {:?}, EI {:.4}", full.theta, full.ei);
    Ok(())
}
