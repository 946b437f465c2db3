//! The sequential design loops.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    approx_log_posterior, expected_ss, CountingSimulator, FieldData, PriorSpec, Simulator,
};
use crate::gp::{Design, FitOptions, KernelFamily, TrainedEmulator, TrendBasis};
use crate::seed::{derive_path, derive_seed};
use crate::space::{InputPoint, InputSpace};

use super::criteria::{crit_tradeoff, crit_variance, Criterion};
use super::ei::{select_theta, select_theta_exhaustive, EiState};
use super::lhd::maximin_lhd;
use super::GridSpec;

/// Seed sub-streams of a sequential run.
const STREAM_LHD: u64 = 1;
const STREAM_FIT: u64 = 2;
const STREAM_EI: u64 = 3;
const STREAM_CRIT: u64 = 4;

/// Best improvement below this fraction of the incumbent counts as a stalled iteration.
const STALL_RATIO: f64 = 1e-12;
const STALL_RUN: usize = 3;

/// A calibration problem: the code, its input box, the field data and the prior.
#[derive(Clone)]
pub struct CalibrationProblem {
    pub simulator: Arc<dyn Simulator>,
    pub space: InputSpace,
    pub field: FieldData,
    pub prior: PriorSpec,
    pub grid: GridSpec,
}

impl CalibrationProblem {
    pub fn new(
        simulator: Arc<dyn Simulator>,
        space: InputSpace,
        field: FieldData,
        prior: PriorSpec,
        grid: GridSpec,
    ) -> Result<Self> {
        if simulator.x_dim() != space.x_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.x_dim(),
                got: simulator.x_dim(),
            });
        }
        if simulator.tau_dim() != space.tau_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.tau_dim(),
                got: simulator.tau_dim(),
            });
        }
        if field.x_dim() != space.x_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.x_dim(),
                got: field.x_dim(),
            });
        }
        if let Some(x) = field.x.iter().find(|x| !space.x.contains(x)) {
            return Err(Error::InvalidArgument(format!(
                "field site {x:?} lies outside the control box"
            )));
        }
        if prior.dim() != space.tau_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.tau_dim(),
                got: prior.dim(),
            });
        }
        grid.check_within(&space.tau)?;
        Ok(Self {
            simulator,
            space,
            field,
            prior,
            grid,
        })
    }
}

/// Settings shared by both sequential algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialConfig {
    /// Size of the initial maximin design.
    pub n0: usize,
    /// Total simulator runs for the design.
    pub budget: usize,
    pub seed: u64,
    pub kernel: KernelFamily,
    pub trend: TrendBasis,
    /// Options of the initial fit.
    pub fit: FitOptions,
    /// Random starts added to the warm start when refitting inside the loop.
    pub refit_starts: usize,
    pub refit_evals: usize,
    pub ei_draws: usize,
    pub lhd_restarts: usize,
    /// Prior draws for the trade-off criterion.
    pub prior_draws: usize,
    /// Skip improvement estimates that the box bound rules out.
    pub prune: bool,
}

impl Default for SequentialConfig {
    fn default() -> Self {
        Self {
            n0: 12,
            budget: 30,
            seed: 0,
            kernel: KernelFamily::Matern52,
            trend: TrendBasis::Constant,
            fit: FitOptions::default(),
            refit_starts: 2,
            refit_evals: 200,
            ei_draws: 2000,
            lhd_restarts: 10,
            prior_draws: 500,
            prune: true,
        }
    }
}

/// Which loop to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// All field sites at each selected parameter value.
    Batch,
    /// One field site per iteration, chosen by the criterion.
    OneAtATime(Criterion),
}

/// One iteration of a sequential run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub theta: Vec<f64>,
    /// Field site run by the one-at-a-time loop.
    pub x_index: Option<usize>,
    /// Incumbent after this iteration.
    pub incumbent: f64,
    /// Improvement estimate that selected `theta`; absent for the posterior-mode step.
    pub ei: Option<f64>,
    pub candidates_evaluated: usize,
    pub simulator_calls: usize,
    pub zero_improvement: bool,
    pub stalled: bool,
    pub wall_time_s: f64,
}

/// Result of a sequential run.
#[derive(Debug, Clone)]
pub struct SequentialRun {
    pub state: EiState,
    pub trace: Vec<TraceRow>,
    /// Selected parameter values in order.
    pub thetas: Vec<Vec<f64>>,
    pub simulator_calls: usize,
}

impl SequentialRun {
    pub fn design(&self) -> &Design {
        self.state.emulator.design()
    }

    pub fn emulator(&self) -> &TrainedEmulator {
        &self.state.emulator
    }
}

/// Maximin hypercube of size `n0` over the joint box, with simulator outputs.
pub fn initial_design<S: Simulator + ?Sized>(
    sim: &S,
    space: &InputSpace,
    n0: usize,
    seed: u64,
    restarts: usize,
) -> Result<Design> {
    let pts = maximin_lhd(n0, &space.joint_bounds(), seed, restarts);
    let points: Vec<InputPoint> = pts
        .iter()
        .map(|p| InputPoint::from_joint(p, space.x_dim()))
        .collect();
    let outputs = points
        .iter()
        .map(|p| sim.run(&p.x, &p.tau))
        .collect::<Result<Vec<f64>>>()?;
    Design::from_parts(space.clone(), points, outputs)
}

/// Seed of the initial hypercube; identical for every algorithm run with the same seed.
pub fn initial_design_seed(seed: u64) -> u64 {
    derive_seed(seed, STREAM_LHD)
}

/// Grid point maximizing the approximated posterior; ties go to the lower index.
pub fn posterior_mode_on_grid(
    em: &TrainedEmulator,
    field: &FieldData,
    prior: &PriorSpec,
    grid: &[Vec<f64>],
) -> Result<usize> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let lp: Vec<f64> = grid
        .par_iter()
        .map(|t| approx_log_posterior(em, t, field, prior))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, v) in lp.iter().enumerate() {
        if *v > lp[best] {
            best = i;
        }
    }
    Ok(best)
}

fn refit(
    design: Design,
    prev: &TrainedEmulator,
    cfg: &SequentialConfig,
    k: usize,
) -> Result<TrainedEmulator> {
    let opts = FitOptions {
        starts: cfg.refit_starts,
        evals_per_start: cfg.refit_evals,
        seed: derive_path(cfg.seed, &[STREAM_FIT, k as u64]),
        warm_start: Some(prev.log_length_scales()),
        ..cfg.fit.clone()
    };
    Ok(TrainedEmulator::fit(design, cfg.kernel, prev.hyper().trend, &opts)?.0)
}

/// Batch algorithm: each iteration runs the code at every field site for the parameter
/// value of largest expected improvement, and the incumbent is the smallest observed sum
/// of squares.
pub fn run_algorithm1(
    problem: &CalibrationProblem,
    cfg: &SequentialConfig,
) -> Result<SequentialRun> {
    run(problem, cfg, Strategy::Batch)
}

/// One-at-a-time algorithm: each iteration runs the code at a single field site chosen by
/// `criterion`, and the incumbent is the smallest expected sum of squares over all
/// selected parameter values under the newest emulator.
pub fn run_algorithm2(
    problem: &CalibrationProblem,
    cfg: &SequentialConfig,
    criterion: Criterion,
) -> Result<SequentialRun> {
    run(problem, cfg, Strategy::OneAtATime(criterion))
}

pub fn run_sequential(
    problem: &CalibrationProblem,
    cfg: &SequentialConfig,
    strategy: Strategy,
) -> Result<SequentialRun> {
    run(problem, cfg, strategy)
}

fn run(
    problem: &CalibrationProblem,
    cfg: &SequentialConfig,
    strategy: Strategy,
) -> Result<SequentialRun> {
    let start = Instant::now();
    let field = &problem.field;
    let n = field.n();
    let batch = match strategy {
        Strategy::Batch => n,
        Strategy::OneAtATime(_) => 1,
    };
    if cfg.n0 + batch > cfg.budget {
        return Err(Error::BudgetTooSmall {
            n0: cfg.n0,
            budget: cfg.budget,
            batch,
        });
    }
    let sim = CountingSimulator::new(problem.simulator.clone());

    let d0 = initial_design(
        &sim,
        &problem.space,
        cfg.n0,
        initial_design_seed(cfg.seed),
        cfg.lhd_restarts,
    )?;
    let fit0 = FitOptions {
        seed: derive_path(cfg.seed, &[STREAM_FIT, 0]),
        ..cfg.fit.clone()
    };
    let (em0, _) = TrainedEmulator::fit(d0, cfg.kernel, cfg.trend, &fit0)?;

    // Initialization: posterior mode on the first grid.
    let grid1 = problem.grid.for_iteration(1);
    let mode = posterior_mode_on_grid(&em0, field, &problem.prior, grid1)?;
    let theta1 = grid1[mode].clone();
    let mut design = em0.design().clone();
    let (x_index, batch_ss) = append(
        &sim,
        &mut design,
        field,
        &theta1,
        strategy,
        &em0,
        cfg,
        &problem.prior,
        1,
    )?;
    let mut em = refit(design, &em0, cfg, 1)?;
    let mut thetas = vec![theta1.clone()];
    let m1 = match strategy {
        Strategy::Batch => batch_ss.expect("batch appends every site"),
        Strategy::OneAtATime(_) => expected_ss(&em, &theta1, field)?,
    };
    let mut state = EiState::new(
        em.clone(),
        field.clone(),
        problem.grid.clone(),
        m1,
        1,
        cfg.ei_draws,
        derive_seed(cfg.seed, STREAM_EI),
    )?;
    let mut trace = vec![TraceRow {
        iteration: 1,
        theta: theta1,
        x_index,
        incumbent: m1,
        ei: None,
        candidates_evaluated: grid1.len(),
        simulator_calls: sim.calls(),
        zero_improvement: false,
        stalled: false,
        wall_time_s: start.elapsed().as_secs_f64(),
    }];

    let mut stall_run = 0;
    let mut k = 1;
    while sim.calls() + batch <= cfg.budget {
        let sel = if cfg.prune {
            select_theta(&state)?
        } else {
            select_theta_exhaustive(&state)?
        };
        if sel.ei < STALL_RATIO * state.incumbent {
            stall_run += 1;
        } else {
            stall_run = 0;
        }
        let mut design = em.design().clone();
        let (x_index, batch_ss) = append(
            &sim,
            &mut design,
            field,
            &sel.theta,
            strategy,
            &em,
            cfg,
            &problem.prior,
            k + 1,
        )?;
        em = refit(design, &em, cfg, k + 1)?;
        thetas.push(sel.theta.clone());
        let m = match strategy {
            Strategy::Batch => state
                .incumbent
                .min(batch_ss.expect("batch appends every site")),
            Strategy::OneAtATime(_) => {
                let mut best = f64::INFINITY;
                for t in &thetas {
                    best = best.min(expected_ss(&em, t, field)?);
                }
                best
            }
        };
        state.advance(em.clone(), m);
        k += 1;
        trace.push(TraceRow {
            iteration: k,
            theta: sel.theta,
            x_index,
            incumbent: m,
            ei: Some(sel.ei),
            candidates_evaluated: sel.evaluated,
            simulator_calls: sim.calls(),
            zero_improvement: sel.zero_improvement,
            stalled: stall_run >= STALL_RUN,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    debug_assert!(sim.calls() <= cfg.budget);
    Ok(SequentialRun {
        state,
        trace,
        thetas,
        simulator_calls: sim.calls(),
    })
}

/// Run the code at the new points and add them to `design`.
///
/// Returns the chosen site for the one-at-a-time loop and the sum of squares at `theta`
/// for the batch loop.
#[allow(clippy::too_many_arguments)]
fn append<S: Simulator>(
    sim: &S,
    design: &mut Design,
    field: &FieldData,
    theta: &[f64],
    strategy: Strategy,
    em: &TrainedEmulator,
    cfg: &SequentialConfig,
    prior: &PriorSpec,
    k: usize,
) -> Result<(Option<usize>, Option<f64>)> {
    match strategy {
        Strategy::Batch => {
            let mut ss = 0.0;
            for (x, z) in field.x.iter().zip(&field.z) {
                let y = sim.run(x, theta)?;
                ss += (z - y) * (z - y);
                design.push_allow_duplicate(InputPoint::new(x.clone(), theta.to_vec())?, y)?;
            }
            Ok((None, Some(ss)))
        }
        Strategy::OneAtATime(c) => {
            let choice = match c {
                Criterion::Variance => crit_variance(em, &field.x, theta)?,
                Criterion::Tradeoff => crit_tradeoff(
                    em,
                    &field.x,
                    theta,
                    prior,
                    cfg.prior_draws,
                    derive_path(cfg.seed, &[STREAM_CRIT, k as u64]),
                )?,
            };
            let x = &field.x[choice.index];
            let y = sim.run(x, theta)?;
            design.push_allow_duplicate(InputPoint::new(x.clone(), theta.to_vec())?, y)?;
            Ok((Some(choice.index), None))
        }
    }
}

/// Write a trace as CSV. Wall times are left out unless requested so that reruns
/// produce identical files.
pub fn write_trace_csv<P: AsRef<Path>>(
    path: P,
    trace: &[TraceRow],
    include_wall_time: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = trace.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=dim).map(|i| format!("theta{i}")));
    header.extend(
        [
            "x_index",
            "incumbent",
            "ei",
            "candidates_evaluated",
            "simulator_calls",
            "zero_improvement",
            "stalled",
        ]
        .map(String::from),
    );
    if include_wall_time {
        header.push("wall_time_s".into());
    }
    w.write_record(&header)?;
    for r in trace {
        let mut rec = vec![r.iteration.to_string()];
        rec.extend(r.theta.iter().map(|v| v.to_string()));
        rec.push(r.x_index.map_or(String::new(), |i| i.to_string()));
        rec.push(r.incumbent.to_string());
        rec.push(r.ei.map_or(String::new(), |v| v.to_string()));
        rec.push(r.candidates_evaluated.to_string());
        rec.push(r.simulator_calls.to_string());
        rec.push(r.zero_improvement.to_string());
        rec.push(r.stalled.to_string());
        if include_wall_time {
            rec.push(r.wall_time_s.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Bounds;

    struct Forrester;

    impl Simulator for Forrester {
        fn x_dim(&self) -> usize {
            1
        }
        fn tau_dim(&self) -> usize {
            1
        }
        fn run(&self, x: &[f64], t: &[f64]) -> Result<f64> {
            Ok((6.0 * x[0] - 2.0).powi(2) * (t[0] * x[0] - 4.0).sin())
        }
    }

    fn problem(xf: &[f64]) -> CalibrationProblem {
        let x: Vec<Vec<f64>> = xf.iter().map(|v| vec![*v]).collect();
        let z: Vec<f64> = x
            .iter()
            .map(|v| Forrester.run(v, &[12.0]).unwrap() + 0.05)
            .collect();
        let tau = Bounds::new(vec![5.0], vec![15.0]).unwrap();
        CalibrationProblem::new(
            Arc::new(Forrester),
            InputSpace::new(Bounds::unit(1), tau.clone()),
            FieldData::new(x, z, 0.09).unwrap(),
            PriorSpec::uniform(tau),
            GridSpec::uniform_1d(5.0, 15.0, 101).unwrap(),
        )
        .unwrap()
    }

    fn cfg(n0: usize, budget: usize, seed: u64) -> SequentialConfig {
        SequentialConfig {
            n0,
            budget,
            seed,
            ei_draws: 500,
            ..Default::default()
        }
    }

    #[test]
    fn batch_budget_arithmetic() {
        let p = problem(&[0.1, 0.3, 0.8]);
        let run = run_algorithm1(&p, &cfg(12, 30, 1)).unwrap();
        assert_eq!(run.trace.len(), 6);
        assert_eq!(run.simulator_calls, 30);
        assert_eq!(run.design().len(), 30);
        for w in run.trace.windows(2) {
            assert!(w[1].incumbent <= w[0].incumbent);
        }
        for pt in &run.design().points()[12..] {
            assert!(p.field.x.contains(&pt.x));
            assert!(p.grid.for_iteration(1).contains(&pt.tau));
        }
    }

    #[test]
    fn batch_smallest_budget_runs_only_the_mode_step() {
        let p = problem(&[0.1, 0.3, 0.8]);
        let run = run_algorithm1(&p, &cfg(12, 15, 2)).unwrap();
        assert_eq!(run.trace.len(), 1);
        let err = run_algorithm1(&p, &cfg(12, 14, 2));
        assert!(matches!(err, Err(Error::BudgetTooSmall { .. })));
    }

    #[test]
    fn one_at_a_time_budget() {
        let p = problem(&[0.1, 0.3, 0.8]);
        for c in [Criterion::Variance, Criterion::Tradeoff] {
            let run = run_algorithm2(&p, &cfg(12, 30, 3), c).unwrap();
            assert_eq!(run.trace.len(), 18);
            assert_eq!(run.simulator_calls, 30);
            assert!(run.trace.iter().all(|r| r.x_index.is_some()));
        }
    }

    #[test]
    fn incumbent_is_min_expected_ss_under_final_emulator() {
        let p = problem(&[0.1, 0.3, 0.8]);
        let run = run_algorithm2(&p, &cfg(12, 20, 4), Criterion::Variance).unwrap();
        let want = run
            .thetas
            .iter()
            .map(|t| expected_ss(run.emulator(), t, &p.field).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((run.state.incumbent - want).abs() <= 1e-12 * (1.0 + want));
    }

    #[test]
    fn pruning_does_not_change_the_run() {
        let p = problem(&[0.1, 0.3, 0.8]);
        let a = run_algorithm1(&p, &cfg(12, 24, 5)).unwrap();
        let b = run_algorithm1(
            &p,
            &SequentialConfig {
                prune: false,
                ..cfg(12, 24, 5)
            },
        )
        .unwrap();
        assert_eq!(a.thetas, b.thetas);
    }

    #[test]
    fn runs_are_reproducible() {
        let p = problem(&[0.1, 0.3, 0.8]);
        let a = run_algorithm2(&p, &cfg(10, 16, 6), Criterion::Tradeoff).unwrap();
        let b = run_algorithm2(&p, &cfg(10, 16, 6), Criterion::Tradeoff).unwrap();
        assert_eq!(a.thetas, b.thetas);
        assert_eq!(a.design(), b.design());
    }

    #[test]
    fn trace_csv_without_wall_time() {
        let p = problem(&[0.1, 0.3, 0.8]);
        let run = run_algorithm1(&p, &cfg(12, 18, 7)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &run.trace, false).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("iteration,theta1,x_index,incumbent,ei"));
        assert!(!text.contains("wall_time"));
        assert_eq!(text.lines().count(), 3);
    }
}
