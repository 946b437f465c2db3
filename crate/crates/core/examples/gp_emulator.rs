//! Fit a Matérn 5/2 emulator to the two-dimensional test code and inspect it.

use seqcal::bench::{forrester2d, SimulatorKind};
use seqcal::gp::{FitOptions, KernelFamily, TrainedEmulator, TrendBasis};
use seqcal::seq_design::initial_design;
use seqcal::space::InputPoint;

fn main() -> seqcal::Result<()> {
    let kind = SimulatorKind::Forrester;
    let space = kind.space();
    let design = initial_design(&*kind.simulator(), &space, 40, 7, 10)?;

    let (em, fit) = TrainedEmulator::fit(
        design,
        KernelFamily::Matern52,
        TrendBasis::Constant,
        &FitOptions::default(),
    )?;
    let h = em.hyper();
    println!(
        "log-likelihood {:.3}, converged {}",
        fit.log_likelihood, fit.converged
    );
    println!(
        "beta {:?}, sigma2 {:.4}, length-scales {:?}, nugget {:e}",
        h.beta, h.sigma2, h.kernel.length_scales, h.nugget
    );

    let probes: Vec<InputPoint> = [(0.2, 6.0), (0.5, 12.0), (0.9, 14.0)]
        .iter()
        .map(|&(x, t)| InputPoint::new(vec![x], vec![t]))
        .collect::<seqcal::Result<_>>()?;
    let (mean, var) = em.predict_mean_var(&probes)?;
    for (p, (m, v)) in probes.iter().zip(mean.iter().zip(&var)) {
        let truth = forrester2d(p.x[0], p.tau[0]);
        println!(
            "x={:.1} t={:>4.1}: mean {m:>8.4} ± {:.4}  (code {truth:.4})",
            p.x[0],
            p.tau[0],
            v.sqrt()
        );
    }

    let loo = em.leave_one_out();
    println!("leave-one-out Q² = {:.4}", loo.q2);

    let paths = em.sample_paths(&probes, 3, 11)?;
    println!("three joint draws at the probes: {paths:.3?}");
    Ok(())
}
