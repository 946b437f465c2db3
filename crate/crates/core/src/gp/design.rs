use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{InputPoint, InputSpace};

/// Points closer than this (unit-cube coordinates) are considered duplicates.
pub const DEDUP_RADIUS: f64 = 1e-9;

/// A numerical design of experiments together with the simulator outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    space: InputSpace,
    points: Vec<InputPoint>,
    outputs: Vec<f64>,
}

impl Design {
    pub fn new(space: InputSpace) -> Self {
        Self {
            space,
            points: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Build a design from parallel lists, rejecting duplicates.
    pub fn from_parts(
        space: InputSpace,
        points: Vec<InputPoint>,
        outputs: Vec<f64>,
    ) -> Result<Self> {
        if points.len() != outputs.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: outputs.len(),
            });
        }
        let mut d = Self::new(space);
        for (p, y) in points.into_iter().zip(outputs) {
            d.push(p, y)?;
        }
        Ok(d)
    }

    pub fn space(&self) -> &InputSpace {
        &self.space
    }

    pub fn points(&self) -> &[InputPoint] {
        &self.points
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of an existing point within [`DEDUP_RADIUS`] of `p`, if any.
    pub fn find_duplicate(&self, p: &InputPoint) -> Option<usize> {
        let u = self.space.to_unit(p);
        self.points.iter().position(|q| {
            let v = self.space.to_unit(q);
            u.iter()
                .zip(&v)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                < DEDUP_RADIUS
        })
    }

    fn check_entry(&self, p: &InputPoint, y: f64) -> Result<()> {
        self.space.check(p)?;
        if !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite simulator output {y}"
            )));
        }
        if p.x.iter().chain(&p.tau).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "input point has non-finite entries".into(),
            ));
        }
        Ok(())
    }

    /// Append a point; duplicates within the dedup radius are rejected.
    pub fn push(&mut self, p: InputPoint, y: f64) -> Result<()> {
        self.check_entry(&p, y)?;
        if let Some(existing) = self.find_duplicate(&p) {
            return Err(Error::DuplicatePoint { existing });
        }
        self.points.push(p);
        self.outputs.push(y);
        Ok(())
    }

    /// Append a point even if it duplicates an existing one.
    ///
    /// Used by the sequential loops, where the emulator's nugget absorbs the
    /// resulting near-singularity.
    pub fn push_allow_duplicate(&mut self, p: InputPoint, y: f64) -> Result<()> {
        self.check_entry(&p, y)?;
        self.points.push(p);
        self.outputs.push(y);
        Ok(())
    }

    pub(crate) fn unit_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| self.space.to_unit(p)).collect()
    }

    /// Write the design as CSV with columns `x1..xd, t1..tm, y`.
    pub fn to_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for (p, y) in self.points.iter().zip(&self.outputs) {
            let row: Vec<String> =
                p.x.iter()
                    .chain(&p.tau)
                    .chain(std::iter::once(y))
                    .map(|v| v.to_string())
                    .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a CSV written by [`Design::to_csv`]; duplicates are kept.
    pub fn from_csv<P: AsRef<Path>>(path: P, space: InputSpace) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let dim = space.dim();
        let mut d = Self::new(space);
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim + 1,
                    got: rec.len(),
                });
            }
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("bad number in design csv: {e}")))?;
            let p = InputPoint::from_joint(&vals[..dim], d.space.x_dim());
            d.push_allow_duplicate(p, vals[dim])?;
        }
        Ok(d)
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.space.x_dim()).map(|i| format!("x{i}")).collect();
        h.extend((1..=self.space.tau_dim()).map(|i| format!("t{i}")));
        h.push("y".into());
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Bounds;

    fn space() -> InputSpace {
        InputSpace::new(Bounds::unit(1), Bounds::new(vec![5.0], vec![15.0]).unwrap())
    }

    #[test]
    fn rejects_duplicates_and_mismatches() {
        let mut d = Design::new(space());
        d.push(InputPoint::new(vec![0.1], vec![12.0]).unwrap(), 1.0)
            .unwrap();
        let err = d.push(InputPoint::new(vec![0.1], vec![12.0 + 1e-12]).unwrap(), 1.0);
        assert!(matches!(err, Err(Error::DuplicatePoint { existing: 0 })));
        let err = d.push(InputPoint::new(vec![0.1, 0.2], vec![12.0]).unwrap(), 1.0);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        d.push_allow_duplicate(InputPoint::new(vec![0.1], vec![12.0]).unwrap(), 1.0)
            .unwrap();
        assert_eq!(d.len(), 2);
        assert!(Design::from_parts(space(), vec![], vec![1.0]).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut d = Design::new(space());
        d.push(InputPoint::new(vec![0.1], vec![12.0]).unwrap(), 1.5)
            .unwrap();
        d.push(InputPoint::new(vec![0.7], vec![6.25]).unwrap(), -0.3)
            .unwrap();
        d.to_csv(&path).unwrap();
        let back = Design::from_csv(&path, space()).unwrap();
        assert_eq!(back, d);
    }
}
