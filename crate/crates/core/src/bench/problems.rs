//! Benchmark codes and their calibration settings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldData, PriorSpec, Simulator};
use crate::seq_design::{cartesian, linspace, maximin_lhd, GridSpec};
use crate::space::{Bounds, InputSpace};

/// `(6x − 2)² sin(tx − 4)`.
pub fn forrester2d(x: f64, t: f64) -> f64 {
    (6.0 * x - 2.0).powi(2) * (t * x - 4.0).sin()
}

/// `∏ (|4x_i − 2| + τ_i) / (1 + τ_i)` over three coordinates.
pub fn gfunction6d(x: &[f64], tau: &[f64]) -> f64 {
    x.iter()
        .zip(tau)
        .map(|(x, t)| ((4.0 * x - 2.0).abs() + t) / (1.0 + t))
        .product()
}

/// The two-dimensional code on `[0,1] × [5,15]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Forrester;

impl Simulator for Forrester {
    fn x_dim(&self) -> usize {
        1
    }
    fn tau_dim(&self) -> usize {
        1
    }
    fn run(&self, x: &[f64], tau: &[f64]) -> Result<f64> {
        Ok(forrester2d(x[0], tau[0]))
    }
}

/// The six-dimensional code on `[0,1]³ × [0,1]³`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GFunction;

impl Simulator for GFunction {
    fn x_dim(&self) -> usize {
        3
    }
    fn tau_dim(&self) -> usize {
        3
    }
    fn run(&self, x: &[f64], tau: &[f64]) -> Result<f64> {
        Ok(gfunction6d(x, tau))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulatorKind {
    Forrester,
    Gfunction,
}

impl SimulatorKind {
    pub fn space(self) -> InputSpace {
        match self {
            SimulatorKind::Forrester => InputSpace::new(
                Bounds::unit(1),
                Bounds::new(vec![5.0], vec![15.0]).expect("valid bounds"),
            ),
            SimulatorKind::Gfunction => InputSpace::new(Bounds::unit(3), Bounds::unit(3)),
        }
    }

    pub fn simulator(self) -> std::sync::Arc<dyn Simulator> {
        match self {
            SimulatorKind::Forrester => std::sync::Arc::new(Forrester),
            SimulatorKind::Gfunction => std::sync::Arc::new(GFunction),
        }
    }

    /// Candidate grids used when none are configured.
    pub fn default_grid(self) -> GridSpec {
        match self {
            SimulatorKind::Forrester => GridSpec::uniform_1d(5.0, 15.0, 101).expect("valid grid"),
            SimulatorKind::Gfunction => {
                let g1 = cartesian(&vec![linspace(0.0, 1.0, 6); 3]);
                let g2 = cartesian(&vec![linspace(0.1, 0.9, 5); 3]);
                GridSpec::new(vec![g1, g2]).expect("disjoint grids")
            }
        }
    }
}

/// Seed of the hypercube holding the 60 field sites of the six-dimensional problem.
pub const G6D_SITE_SEED: u64 = 60;
pub const G6D_SITES: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// Two-dimensional code with three field sites.
    Case1,
    /// Two-dimensional code with nine field sites.
    Case2,
    /// Six-dimensional code with sixty field sites.
    G6d,
    /// Field sites, true parameter and noise given in the configuration.
    Custom,
}

impl Problem {
    pub fn name(self) -> &'static str {
        match self {
            Problem::Case1 => "case1",
            Problem::Case2 => "case2",
            Problem::G6d => "g6d",
            Problem::Custom => "custom",
        }
    }

    /// Simulator of a built-in problem.
    pub fn simulator_kind(self) -> Option<SimulatorKind> {
        match self {
            Problem::Case1 | Problem::Case2 => Some(SimulatorKind::Forrester),
            Problem::G6d => Some(SimulatorKind::Gfunction),
            Problem::Custom => None,
        }
    }

    /// Field sites of a built-in problem.
    pub fn field_sites(self) -> Option<Vec<Vec<f64>>> {
        match self {
            Problem::Case1 => Some(vec![vec![0.1], vec![0.3], vec![0.8]]),
            Problem::Case2 => Some((1..=9).map(|i| vec![i as f64 / 10.0]).collect()),
            Problem::G6d => Some(maximin_lhd(G6D_SITES, &Bounds::unit(3), G6D_SITE_SEED, 10)),
            Problem::Custom => None,
        }
    }

    pub fn theta_true(self) -> Option<Vec<f64>> {
        match self {
            Problem::Case1 | Problem::Case2 => Some(vec![12.0]),
            Problem::G6d => Some(vec![0.34; 3]),
            Problem::Custom => None,
        }
    }

    pub fn noise_sd(self) -> Option<f64> {
        match self {
            Problem::Case1 | Problem::Case2 => Some(0.3),
            Problem::G6d => Some(0.05),
            Problem::Custom => None,
        }
    }

    /// `(N0, N)`.
    pub fn default_budget(self) -> (usize, usize) {
        match self {
            Problem::G6d => (100, 200),
            _ => (12, 30),
        }
    }
}

impl std::str::FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "case1" => Ok(Problem::Case1),
            "case2" => Ok(Problem::Case2),
            "g6d" => Ok(Problem::G6d),
            "custom" => Ok(Problem::Custom),
            _ => Err(Error::Config(format!("unknown problem '{s}'"))),
        }
    }
}

/// Settings of the `custom` problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProblem {
    pub simulator: SimulatorKind,
    pub sites: Vec<Vec<f64>>,
    pub theta_true: Vec<f64>,
    pub noise_sd: f64,
}

/// Everything needed to calibrate one benchmark code.
#[derive(Clone)]
pub struct ProblemSetup {
    pub simulator: SimulatorKind,
    pub sites: Vec<Vec<f64>>,
    pub theta_true: Vec<f64>,
    pub noise_sd: f64,
    pub grid: GridSpec,
}

impl ProblemSetup {
    pub fn builtin(problem: Problem) -> Result<Self> {
        let kind = problem.simulator_kind().ok_or_else(|| {
            Error::Config("the custom problem needs its settings in the configuration".into())
        })?;
        Ok(Self {
            simulator: kind,
            sites: problem.field_sites().expect("built-in problem"),
            theta_true: problem.theta_true().expect("built-in problem"),
            noise_sd: problem.noise_sd().expect("built-in problem"),
            grid: kind.default_grid(),
        })
    }

    /// A built-in problem, or the `custom` settings, with optional candidate grids given
    /// by their levels along every parameter axis.
    pub fn resolve(
        problem: Problem,
        custom: Option<&CustomProblem>,
        grid_axes: Option<&[Vec<Vec<f64>>]>,
    ) -> Result<Self> {
        let mut setup = match (problem, custom) {
            (Problem::Custom, Some(c)) => ProblemSetup {
                simulator: c.simulator,
                sites: c.sites.clone(),
                theta_true: c.theta_true.clone(),
                noise_sd: c.noise_sd,
                grid: c.simulator.default_grid(),
            },
            (Problem::Custom, None) => {
                return Err(Error::Config(
                    "problem 'custom' needs a [custom] table".into(),
                ))
            }
            (p, _) => ProblemSetup::builtin(p)?,
        };
        if let Some(axes) = grid_axes {
            setup.grid = GridSpec::new(axes.iter().map(|a| cartesian(a)).collect())?;
        }
        setup.validate()?;
        Ok(setup)
    }

    pub fn space(&self) -> InputSpace {
        self.simulator.space()
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::uniform(self.space().tau)
    }

    pub fn validate(&self) -> Result<()> {
        let space = self.space();
        if self.sites.is_empty() {
            return Err(Error::Config("no field sites".into()));
        }
        if let Some(x) = self
            .sites
            .iter()
            .find(|x| x.len() != space.x_dim() || !space.x.contains(x))
        {
            return Err(Error::Config(format!(
                "field site {x:?} is outside the control box"
            )));
        }
        if self.theta_true.len() != space.tau_dim() || !space.tau.contains(&self.theta_true) {
            return Err(Error::Config(format!(
                "true parameter {:?} is outside the parameter box",
                self.theta_true
            )));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!(
                "noise standard deviation must be positive, got {}",
                self.noise_sd
            )));
        }
        if self.grid.dim() != space.tau_dim() {
            return Err(Error::Config(
                "grid dimension differs from the parameter dimension".into(),
            ));
        }
        self.grid.check_within(&space.tau)
    }
}

/// Field measurements `z_i = y_θ(x_i) + ε_i` with `ε_i ~ N(0, noise_sd²)`.
///
/// `λ²` is set to `noise_sd²`, or to 1 when `noise_sd` is 0.
pub fn generate_field_data<S: Simulator + ?Sized>(
    sim: &S,
    sites: &[Vec<f64>],
    theta_true: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<FieldData> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be nonnegative, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).expect("valid normal");
    let z = sites
        .iter()
        .map(|x| {
            Ok(sim.run(x, theta_true)?
                + if noise_sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    let lambda2 = if noise_sd > 0.0 {
        noise_sd * noise_sd
    } else {
        1.0
    };
    FieldData::new(sites.to_vec(), z, lambda2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forrester_values() {
        for t in [5.0, 9.3, 15.0] {
            assert!(forrester2d(1.0 / 3.0, t).abs() < 1e-14);
        }
        assert!((forrester2d(0.5, 12.0) - 0.909_297_426_825_681_7).abs() < 1e-12);
        assert!((forrester2d(0.0, 5.0) - 3.027_209_981_231_713).abs() < 1e-12);
    }

    #[test]
    fn gfunction_values() {
        assert_eq!(gfunction6d(&[0.5; 3], &[0.0; 3]), 0.0);
        let want = (0.2 / 1.2) * (0.7 / 1.7) * (0.1 / 1.1);
        assert!((gfunction6d(&[0.5; 3], &[0.2, 0.7, 0.1]) - want).abs() < 1e-15);
        assert!((gfunction6d(&[1.0; 3], &[0.0; 3]) - 8.0).abs() < 1e-14);
        assert!((gfunction6d(&[1.0; 3], &[1.0; 3]) - 3.375).abs() < 1e-14);
    }

    #[test]
    fn field_sizes() {
        let s1 = ProblemSetup::builtin(Problem::Case1).unwrap();
        let s2 = ProblemSetup::builtin(Problem::Case2).unwrap();
        let s6 = ProblemSetup::builtin(Problem::G6d).unwrap();
        let f1 = generate_field_data(&Forrester, &s1.sites, &s1.theta_true, 0.3, 1).unwrap();
        let f2 = generate_field_data(&Forrester, &s2.sites, &s2.theta_true, 0.3, 1).unwrap();
        let f6 = generate_field_data(&GFunction, &s6.sites, &s6.theta_true, 0.05, 1).unwrap();
        assert_eq!(f1.n(), 3);
        assert_eq!(f1.x, vec![vec![0.1], vec![0.3], vec![0.8]]);
        assert_eq!(f2.n(), 9);
        for (i, x) in f2.x.iter().enumerate() {
            assert!((x[0] - (i + 1) as f64 / 10.0).abs() < 1e-15);
        }
        assert_eq!(f6.n(), 60);
        assert!((f1.lambda2 - 0.09).abs() < 1e-15);
        for s in [s1, s2, s6] {
            s.validate().unwrap();
        }
    }

    #[test]
    fn noiseless_data_is_exact() {
        let s = ProblemSetup::builtin(Problem::Case2).unwrap();
        let f = generate_field_data(&Forrester, &s.sites, &[12.0], 0.0, 3).unwrap();
        for (x, z) in f.x.iter().zip(&f.z) {
            assert_eq!(*z, forrester2d(x[0], 12.0));
        }
    }

    #[test]
    fn seeded_data_repeats() {
        let s = ProblemSetup::builtin(Problem::G6d).unwrap();
        let a = generate_field_data(&GFunction, &s.sites, &s.theta_true, 0.05, 9).unwrap();
        let b = generate_field_data(&GFunction, &s.sites, &s.theta_true, 0.05, 9).unwrap();
        let c = generate_field_data(&GFunction, &s.sites, &s.theta_true, 0.05, 10).unwrap();
        assert_eq!(a.z, b.z);
        assert_ne!(a.z, c.z);
        assert_eq!(Problem::G6d.field_sites(), Problem::G6d.field_sites());
    }

    #[test]
    fn noise_has_the_stated_spread() {
        let sites: Vec<Vec<f64>> = (0..4000).map(|i| vec![(i % 100) as f64 / 100.0]).collect();
        let f = generate_field_data(&Forrester, &sites, &[12.0], 0.3, 5).unwrap();
        let r: Vec<f64> =
            f.x.iter()
                .zip(&f.z)
                .map(|(x, z)| z - forrester2d(x[0], 12.0))
                .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        // Standard errors: 0.3/√4000 ≈ 0.0047 for the mean, ≈ 0.0034 for the sd.
        assert!(mean.abs() < 0.015, "{mean}");
        assert!((sd - 0.3).abs() < 0.011, "{sd}");
    }
}
