//! Boxes, input points and the joint control × parameter space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An axis-aligned box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "bounds of dimension {i} must be finite with lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// The same interval repeated `dim` times.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lower[i] && *v <= self.upper[i])
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn to_unit(&self, p: &[f64]) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(i, v)| (v - self.lower[i]) / self.width(i))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.lower[i] + v * self.width(i))
            .collect()
    }

    /// Mirror `p` back into the box, coordinate by coordinate.
    pub fn reflect(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            let (lo, w) = (self.lower[i], self.width(i));
            let mut t = (*v - lo) / w;
            // Folding with period 2 keeps the mirrored map exact for any overshoot.
            t = t.rem_euclid(2.0);
            if t > 1.0 {
                t = 2.0 - t;
            }
            *v = lo + t * w;
        }
    }

    /// Concatenate two boxes.
    pub fn join(&self, other: &Bounds) -> Bounds {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        Bounds { lower, upper }
    }
}

/// A pair `(x, tau)` of control variables and code parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPoint {
    pub x: Vec<f64>,
    pub tau: Vec<f64>,
}

impl InputPoint {
    pub fn new(x: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        if x.iter().chain(&tau).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "input point has non-finite entries".into(),
            ));
        }
        Ok(Self { x, tau })
    }

    /// Split a joint vector into its first `d` controls and remaining parameters.
    pub fn from_joint(v: &[f64], d: usize) -> Self {
        Self {
            x: v[..d].to_vec(),
            tau: v[d..].to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len() + self.tau.len()
    }

    pub fn joint(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.tau);
        v
    }
}

/// The joint input space of the simulator: controls in `x` and parameters in `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpace {
    pub x: Bounds,
    pub tau: Bounds,
}

impl InputSpace {
    pub fn new(x: Bounds, tau: Bounds) -> Self {
        Self { x, tau }
    }

    pub fn x_dim(&self) -> usize {
        self.x.dim()
    }

    pub fn tau_dim(&self) -> usize {
        self.tau.dim()
    }

    pub fn dim(&self) -> usize {
        self.x_dim() + self.tau_dim()
    }

    pub fn joint_bounds(&self) -> Bounds {
        self.x.join(&self.tau)
    }

    pub fn check(&self, p: &InputPoint) -> Result<()> {
        if p.x.len() != self.x_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.x_dim(),
                got: p.x.len(),
            });
        }
        if p.tau.len() != self.tau_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.tau_dim(),
                got: p.tau.len(),
            });
        }
        Ok(())
    }

    /// Rescale a point to the unit cube of the joint space.
    pub fn to_unit(&self, p: &InputPoint) -> Vec<f64> {
        let mut u = self.x.to_unit(&p.x);
        u.extend(self.tau.to_unit(&p.tau));
        u
    }

    /// Rescale `(x, tau)` given as slices, writing into `out`.
    pub fn to_unit_into(&self, x: &[f64], tau: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (i, v) in x.iter().enumerate() {
            out.push((v - self.x.lower[i]) / self.x.width(i));
        }
        for (i, v) in tau.iter().enumerate() {
            out.push((v - self.tau.lower[i]) / self.tau.width(i));
        }
    }

    pub fn from_unit(&self, u: &[f64]) -> InputPoint {
        let d = self.x_dim();
        InputPoint {
            x: self.x.from_unit(&u[..d]),
            tau: self.tau.from_unit(&u[d..]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_stays_inside() {
        let b = Bounds::new(vec![5.0], vec![15.0]).unwrap();
        for (v, want) in [
            (16.0, 14.0),
            (4.0, 6.0),
            (27.0, 7.0),
            (10.0, 10.0),
            (-6.0, 14.0),
        ] {
            let mut p = [v];
            b.reflect(&mut p);
            assert!((p[0] - want).abs() < 1e-12, "{v} -> {} (want {want})", p[0]);
        }
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Bounds::new(vec![1.0], vec![0.0]).is_err());
        assert!(Bounds::new(vec![0.0, 0.0], vec![1.0]).is_err());
    }

    #[test]
    fn unit_roundtrip() {
        let s = InputSpace::new(Bounds::unit(1), Bounds::new(vec![5.0], vec![15.0]).unwrap());
        let p = InputPoint::new(vec![0.25], vec![12.0]).unwrap();
        let u = s.to_unit(&p);
        assert_eq!(u, vec![0.25, 0.7]);
        assert_eq!(s.from_unit(&u), p);
    }
}
