use crate::gp::Design;
use crate::space::Bounds;

use super::grid::{cartesian, linspace};

/// Full factorial probe grid in the unit cube with `per_axis` levels per axis.
pub fn probe_grid(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    cartesian(&vec![linspace(0.0, 1.0, per_axis); dim])
}

/// Largest distance from a probe point to its nearest design point, in unit coordinates.
///
/// `probe` is given in unit coordinates; `points` in the coordinates of `bounds`.
pub fn covering_distance(points: &[Vec<f64>], bounds: &Bounds, probe: &[Vec<f64>]) -> f64 {
    if points.is_empty() {
        return f64::INFINITY;
    }
    let unit: Vec<Vec<f64>> = points.iter().map(|p| bounds.to_unit(p)).collect();
    probe
        .iter()
        .map(|q| {
            unit.iter()
                .map(|u| u.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Covering distance of a design over its joint input box.
pub fn design_covering_distance(design: &Design, per_axis: usize) -> f64 {
    let bounds = design.space().joint_bounds();
    let pts: Vec<Vec<f64>> = design.points().iter().map(|p| p.joint()).collect();
    covering_distance(&pts, &bounds, &probe_grid(bounds.dim(), per_axis))
}
