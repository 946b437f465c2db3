//! Calibrating a user-supplied code: implement `Simulator`, describe the input box, and run
//! the one-at-a-time loop.

use std::sync::Arc;

use seqcal::field::{FieldData, PriorSpec, Simulator};
use seqcal::seq_design::{
    run_algorithm2, CalibrationProblem, Criterion, GridSpec, SequentialConfig,
};
use seqcal::space::{Bounds, InputSpace};

/// Damped oscillator displacement at time `x` with damping `tau`.
struct Oscillator;

impl Simulator for Oscillator {
    fn x_dim(&self) -> usize {
        1
    }
    fn tau_dim(&self) -> usize {
        1
    }
    fn run(&self, x: &[f64], tau: &[f64]) -> seqcal::Result<f64> {
        Ok((-tau[0] * x[0]).exp() * (6.0 * x[0]).cos())
    }
}

fn main() -> seqcal::Result<()> {
    let space = InputSpace::new(
        Bounds::new(vec![0.0], vec![2.0])?,
        Bounds::new(vec![0.1], vec![3.0])?,
    );
    let true_damping = 1.3;
    let sites: Vec<Vec<f64>> = [0.2, 0.6, 1.0, 1.4].iter().map(|&x| vec![x]).collect();
    let z = sites
        .iter()
        .map(|x| Oscillator.run(x, &[true_damping]))
        .collect::<seqcal::Result<Vec<_>>>()?;
    let noisy: Vec<f64> = z
        .iter()
        .zip([0.01, -0.02, 0.015, -0.005])
        .map(|(a, e)| a + e)
        .collect();
    let field = FieldData::new(sites, noisy, 0.02f64.powi(2))?;

    let problem = CalibrationProblem::new(
        Arc::new(Oscillator),
        space.clone(),
        field,
        PriorSpec::uniform(space.tau.clone()),
        GridSpec::uniform_1d(0.1, 3.0, 59)?,
    )?;
    let cfg = SequentialConfig {
        n0: 8,
        budget: 20,
        seed: 1,
        ..SequentialConfig::default()
    };
    let run = run_algorithm2(&problem, &cfg, Criterion::Tradeoff)?;
    println!(
        "selected damping values: {:.3?}",
        run.thetas.iter().map(|t| t[0]).collect::<Vec<_>>()
    );
    println!("design size {} (budget {})", run.design().len(), cfg.budget);
    Ok(())
}
