//! Expected improvement of the residual sum of squares and the pruned grid search.
//!
//! For a parameter value `theta` the emulator gives a joint Gaussian `Y(X_f, theta)` with
//! mean `μ` and covariance `V = L Lᵀ`. With standard normal vectors `ξ_t`, shared by all
//! candidates of one state, each draw yields `SS_t = ‖z − μ − L ξ_t‖²`. The improvement
//! estimate is the average of `(m − SS_t)⁺`, the inside probability the fraction of
//! draws with `SS_t ≤ m`, and the box probability the fraction with every residual
//! coordinate in `[−√m, √m]`. Inside the ball implies inside the box draw by draw, so with
//! the shared draws `EI ≤ m·P_inside ≤ m·P_box` holds exactly and candidates whose bound
//! falls below the improvement of the best-box candidate can be skipped.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::field::{check_emulator, FieldData};
use crate::gp::{robust_cholesky, TrainedEmulator};
use crate::seed::derive_seed;

use super::GridSpec;

/// Everything the improvement criterion depends on at one iteration.
#[derive(Debug, Clone)]
pub struct EiState {
    pub emulator: TrainedEmulator,
    pub field: FieldData,
    pub grid: GridSpec,
    /// Current incumbent `m_k`.
    pub incumbent: f64,
    /// Incumbents of earlier iterations, oldest first, ending with `incumbent`.
    pub history: Vec<f64>,
    pub iteration: usize,
    pub ei_draws: usize,
    pub seed: u64,
    /// Draw-major standard normal vectors, `ei_draws × n`.
    normals: Vec<f64>,
}

impl EiState {
    pub fn new(
        emulator: TrainedEmulator,
        field: FieldData,
        grid: GridSpec,
        incumbent: f64,
        iteration: usize,
        ei_draws: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(incumbent >= 0.0 && incumbent.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "incumbent must be finite and nonnegative, got {incumbent}"
            )));
        }
        if ei_draws == 0 {
            return Err(Error::InvalidArgument("ei_draws must be positive".into()));
        }
        let space = emulator.design().space();
        if grid.dim() != space.tau_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.tau_dim(),
                got: grid.dim(),
            });
        }
        if field.x_dim() != space.x_dim() {
            return Err(Error::DimensionMismatch {
                expected: space.x_dim(),
                got: field.x_dim(),
            });
        }
        let mut s = Self {
            emulator,
            field,
            grid,
            incumbent,
            history: vec![incumbent],
            iteration,
            ei_draws,
            seed,
            normals: Vec::new(),
        };
        s.normals =
            stratified_normals(s.ei_draws, s.field.n(), derive_seed(seed, iteration as u64));
        Ok(s)
    }

    /// Move to the next iteration with a refitted emulator and a new incumbent.
    pub fn advance(&mut self, emulator: TrainedEmulator, incumbent: f64) {
        self.emulator = emulator;
        self.incumbent = incumbent;
        self.history.push(incumbent);
        self.iteration += 1;
        self.normals = stratified_normals(
            self.ei_draws,
            self.field.n(),
            derive_seed(self.seed, self.iteration as u64),
        );
    }

    /// Candidates for the next parameter value.
    pub fn active_grid(&self) -> &[Vec<f64>] {
        self.grid.for_iteration(self.iteration + 1)
    }

    fn column(&self, theta: &[f64]) -> Result<Column> {
        check_emulator(&self.emulator, theta, &self.field)?;
        let pred = self.emulator.predict_column(&self.field.x, theta);
        let n = self.field.n();
        let resid: Vec<f64> = self
            .field
            .z
            .iter()
            .zip(pred.mean.iter())
            .map(|(z, m)| z - m)
            .collect();
        let sigma2 = self.emulator.hyper().sigma2;
        let l = match robust_cholesky(&pred.cov, sigma2) {
            Some((l, _)) => l,
            None => DMatrix::from_diagonal(&pred.cov.diagonal().map(|v| v.max(0.0).sqrt())),
        };
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                packed.push(l[(i, j)]);
            }
        }
        let deterministic = packed.iter().all(|v| *v == 0.0);
        Ok(Column {
            resid,
            packed,
            cov: pred.cov,
            deterministic,
        })
    }

    fn mc(&self, col: &Column, want_box: bool, want_ball: bool) -> McStats {
        let m = self.incumbent;
        let n = col.resid.len();
        if col.deterministic {
            let ss: f64 = col.resid.iter().map(|r| r * r).sum();
            let in_box = col.resid.iter().all(|r| r * r <= m);
            let in_ball = ss <= m;
            return McStats {
                ei: if in_ball { m - ss } else { 0.0 },
                p_inside: in_ball as u8 as f64,
                p_box: in_box as u8 as f64,
            };
        }
        let (mut ei_sum, mut inside, mut boxed) = (0.0, 0usize, 0usize);
        for xi in self.normals.chunks_exact(n) {
            let (mut box_ok, mut ball_ok) = (want_box, want_ball);
            let mut ss = 0.0;
            let mut row = 0;
            for i in 0..n {
                let li = &col.packed[row..row + i + 1];
                row += i + 1;
                let mut acc = 0.0;
                for (l, x) in li.iter().zip(xi) {
                    acc += l * x;
                }
                let d = col.resid[i] - acc;
                let d2 = d * d;
                if box_ok && d2 > m {
                    box_ok = false;
                }
                if ball_ok {
                    ss += d2;
                    if ss > m {
                        ball_ok = false;
                    }
                }
                if !box_ok && !ball_ok {
                    break;
                }
            }
            if box_ok {
                boxed += 1;
            }
            if ball_ok {
                inside += 1;
                ei_sum += m - ss;
            }
        }
        let d = self.ei_draws as f64;
        McStats {
            ei: (ei_sum / d).clamp(0.0, m),
            p_inside: inside as f64 / d,
            p_box: boxed as f64 / d,
        }
    }
}

struct Column {
    resid: Vec<f64>,
    packed: Vec<f64>,
    cov: DMatrix<f64>,
    deterministic: bool,
}

#[derive(Debug, Clone, Copy)]
struct McStats {
    ei: f64,
    p_inside: f64,
    p_box: f64,
}

/// Latin-hypercube stratified standard normals: each coordinate takes one value from
/// every probability stratum `[t/D, (t+1)/D)` in random order.
fn stratified_normals(draws: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::standard();
    let mut out = vec![0.0; draws * n];
    let mut order: Vec<usize> = (0..draws).collect();
    for i in 0..n {
        order.shuffle(&mut rng);
        for (t, &s) in order.iter().enumerate() {
            let u = (s as f64 + rng.random::<f64>()) / draws as f64;
            out[t * n + i] = std.inverse_cdf(u.clamp(1e-300, 1.0 - 1e-16));
        }
    }
    out
}

/// Improvement estimate and the probability of improving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EiEstimate {
    pub ei: f64,
    pub prob_inside: f64,
}

/// Monte Carlo estimate of `E[(m − SS(theta))⁺]` under the state's emulator.
pub fn ei_estimate(state: &EiState, theta: &[f64]) -> Result<EiEstimate> {
    let col = state.column(theta)?;
    let s = state.mc(&col, false, true);
    Ok(EiEstimate {
        ei: s.ei,
        prob_inside: s.p_inside,
    })
}

/// `P[z − Y(X_f, theta) ∈ [−√m, √m]^n]`: exact when the predictive covariance is
/// diagonal, estimated from the shared draws otherwise.
pub fn hyperrect_prob(state: &EiState, theta: &[f64]) -> Result<f64> {
    let col = state.column(theta)?;
    let n = col.resid.len();
    let max_diag = (0..n).map(|i| col.cov[(i, i)]).fold(0.0, f64::max);
    let off = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|ij| col.cov[ij].abs())
        .fold(0.0, f64::max);
    if off <= 1e-12 * max_diag || max_diag == 0.0 {
        let half = state.incumbent.sqrt();
        return Ok(col
            .resid
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let s = col.cov[(i, i)].sqrt();
                if s == 0.0 {
                    (r.abs() <= half) as u8 as f64
                } else {
                    let std = Normal::standard();
                    std.cdf((half - r) / s) - std.cdf((-half - r) / s)
                }
            })
            .product());
    }
    Ok(state.mc(&col, true, false).p_box)
}

/// Outcome of the grid search for the next parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    /// Index in the active grid.
    pub index: usize,
    pub theta: Vec<f64>,
    pub ei: f64,
    pub prob_inside: f64,
    pub prob_box: f64,
    /// Candidates whose improvement was estimated.
    pub evaluated: usize,
    pub grid_size: usize,
    /// No candidate has a positive improvement estimate.
    pub zero_improvement: bool,
}

/// Pruned maximization of the improvement over the active grid.
///
/// The box probability is estimated on the whole grid, the improvement of its maximizer
/// sets a threshold, and the improvement is then estimated only where `m·P_box` reaches
/// that threshold. Ties go to the larger box probability, then the lower index.
pub fn select_theta(state: &EiState) -> Result<Selection> {
    select(state, true)
}

/// Same as [`select_theta`] but estimates the improvement at every grid point.
pub fn select_theta_exhaustive(state: &EiState) -> Result<Selection> {
    select(state, false)
}

fn select(state: &EiState, prune: bool) -> Result<Selection> {
    let grid = state.active_grid();
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let m = state.incumbent;
    let columns: Vec<Column> = grid
        .par_iter()
        .map(|t| state.column(t))
        .collect::<Result<_>>()?;
    let boxes: Vec<f64> = columns
        .par_iter()
        .map(|c| state.mc(c, true, false).p_box)
        .collect();

    let keep: Vec<bool> = if prune {
        let ref_idx = argmax_first(&boxes);
        let ref_ei = state.mc(&columns[ref_idx], false, true).ei;
        // The relative slack only admits extra candidates, never drops one.
        boxes
            .iter()
            .map(|p| ref_ei <= m * p * (1.0 + 1e-12))
            .collect()
    } else {
        vec![true; grid.len()]
    };

    let scored: Vec<Option<McStats>> = columns
        .par_iter()
        .zip(keep.par_iter())
        .map(|(c, &k)| k.then(|| state.mc(c, false, true)))
        .collect();

    let mut best: Option<usize> = None;
    for (i, s) in scored.iter().enumerate() {
        let Some(s) = s else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let sb = scored[b].expect("best is scored");
                s.ei > sb.ei || (s.ei == sb.ei && boxes[i] > boxes[b])
            }
        };
        if better {
            best = Some(i);
        }
    }
    let i = best.expect("the reference candidate always survives pruning");
    let s = scored[i].expect("best is scored");
    Ok(Selection {
        index: i,
        theta: grid[i].clone(),
        ei: s.ei,
        prob_inside: s.p_inside,
        prob_box: boxes[i],
        evaluated: scored.iter().filter(|s| s.is_some()).count(),
        grid_size: grid.len(),
        zero_improvement: s.ei <= 0.0,
    })
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
