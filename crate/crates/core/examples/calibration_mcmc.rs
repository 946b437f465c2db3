//! Target posterior (true code in the likelihood) against the approximated posterior
//! (emulator in the likelihood) on Case 1.

use seqcal::bench::{generate_field_data, Problem, ProblemSetup};
use seqcal::field::{approx_log_posterior, target_log_posterior};
use seqcal::gp::{FitOptions, KernelFamily, TrainedEmulator, TrendBasis};
use seqcal::mcmc::{credible_interval, sample, SamplerConfig};
use seqcal::seq_design::initial_design;

fn main() -> seqcal::Result<()> {
    let setup = ProblemSetup::builtin(Problem::Case1)?;
    let sim = setup.simulator.simulator();
    let prior = setup.prior();
    let field = generate_field_data(&*sim, &setup.sites, &setup.theta_true, setup.noise_sd, 3)?;

    let cfg = SamplerConfig {
        seed: 5,
        ..SamplerConfig::default()
    };
    let target = sample(
        |t| target_log_posterior(&*sim, t, &field, &prior),
        &prior,
        &cfg,
    )?;

    let design = initial_design(&*sim, &setup.space(), 30, 9, 10)?;
    let (em, _) = TrainedEmulator::fit(
        design,
        KernelFamily::Matern52,
        TrendBasis::Constant,
        &FitOptions::default(),
    )?;
    let approx = sample(
        |t| approx_log_posterior(&em, t, &field, &prior),
        &prior,
        &cfg,
    )?;

    for (name, chain) in [("target", &target), ("approximated", &approx)] {
        let ci = credible_interval(chain, 0.95)?;
        println!(
            "{name:>12}: mean {:.3}, 95% interval [{:.3}, {:.3}], acceptance {:.2}",
            chain.mean()?[0],
            ci[0].0,
            ci[0].1,
            chain.acceptance_rate
        );
    }
    Ok(())
}
