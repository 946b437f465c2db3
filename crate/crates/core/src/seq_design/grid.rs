use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Bounds;

/// Disjoint finite candidate grids over the parameter box, visited in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    grids: Vec<Vec<Vec<f64>>>,
}

impl GridSpec {
    pub fn new(grids: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if grids.is_empty() || grids.iter().any(Vec::is_empty) {
            return Err(Error::EmptyGrid);
        }
        let dim = grids[0][0].len();
        for p in grids.iter().flatten() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(
                    "grid point with non-finite coordinate".into(),
                ));
            }
        }
        for a in 0..grids.len() {
            for b in (a + 1)..grids.len() {
                if grids[a].iter().any(|p| grids[b].iter().any(|q| same(p, q))) {
                    return Err(Error::InvalidArgument(format!(
                        "grids {} and {} overlap",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(Self { grids })
    }

    pub fn single(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![points])
    }

    /// `count` equally spaced values on `[lo, hi]`.
    pub fn uniform_1d(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Self::single(
            linspace(lo, hi, count)
                .into_iter()
                .map(|v| vec![v])
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.grids[0][0].len()
    }

    pub fn count(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[Vec<Vec<f64>>] {
        &self.grids
    }

    /// Grid used at iteration `k ≥ 1`: `G_{((k−1) mod M) + 1}`.
    pub fn for_iteration(&self, k: usize) -> &[Vec<f64>] {
        &self.grids[k.saturating_sub(1) % self.grids.len()]
    }

    pub fn check_within(&self, bounds: &Bounds) -> Result<()> {
        if bounds.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                got: self.dim(),
            });
        }
        match self.grids.iter().flatten().find(|p| !bounds.contains(p)) {
            Some(p) => Err(Error::InvalidArgument(format!(
                "grid point {p:?} lies outside the parameter box"
            ))),
            None => Ok(()),
        }
    }
}

fn same(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Full factorial product of per-axis levels, last axis varying fastest.
pub fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, levels| {
        acc.iter()
            .flat_map(|prefix| {
                levels.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}
