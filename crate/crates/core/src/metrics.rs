//! Sample-based scores: nearest-neighbour Kullback-Leibler divergence and coverage of
//! credible intervals.

use std::cmp::Ordering;
use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::mcmc::{credible_interval, Chain};

/// Distances below this are replaced by it.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlOptions {
    /// Neighbour order.
    pub k: usize,
    /// Treat repeated points as one: neighbour distances skip exact copies and the
    /// sample-size term uses distinct counts. Suited to Metropolis chains, which repeat
    /// the current state on every rejection.
    pub collapse_ties: bool,
}

impl Default for KlOptions {
    fn default() -> Self {
        Self {
            k: 1,
            collapse_ties: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    /// Can be slightly negative through estimator noise.
    pub value: f64,
    pub k: usize,
    pub n_p: usize,
    pub n_q: usize,
}

/// Distinct points with their multiplicities, in a kd-tree.
struct Cloud<const K: usize> {
    tree: ImmutableKdTree<f64, K>,
    counts: Vec<usize>,
}

impl<const K: usize> Cloud<K> {
    fn new(samples: &[[f64; K]]) -> Self {
        let mut sorted: Vec<&[f64; K]> = samples.iter().collect();
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        let mut distinct: Vec<[f64; K]> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for p in sorted {
            if distinct.last() == Some(p) {
                *counts.last_mut().expect("a previous point exists") += 1;
            } else {
                distinct.push(*p);
                counts.push(1);
            }
        }
        let tree = ImmutableKdTree::new_from_slice(&distinct).expect("finite coordinates");
        Self { tree, counts }
    }

    fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Distance to the `k`-th neighbour of `p`, not counting one copy of `p` itself when
    /// `exclude_self`.
    fn kth_distance(&self, p: &[f64; K], k: usize, exclude_self: bool, collapse: bool) -> f64 {
        let mut seen = 0usize;
        let mut self_skipped = !exclude_self;
        // Distinct points carry their multiplicity, so k + 1 of them always suffice.
        let want = NonZero::new(k + 1).expect("k + 1 is positive");
        let near = self
            .tree
            .query(p)
            .nearest_n::<SquaredEuclidean<f64>>(want)
            .execute();
        let mut last = f64::INFINITY;
        for r in near {
            let d2 = r.distance;
            last = d2;
            let mut c = if collapse {
                1
            } else {
                self.counts[r.item as usize]
            };
            if d2 == 0.0 {
                if collapse {
                    continue;
                }
                if !self_skipped {
                    c -= 1;
                    self_skipped = true;
                }
            }
            seen += c;
            if seen >= k {
                return d2.sqrt().max(DISTANCE_FLOOR);
            }
        }
        last.sqrt().max(DISTANCE_FLOOR)
    }
}

/// Largest sample dimension accepted by [`kl_knn`].
pub const MAX_KL_DIM: usize = 8;

/// `KL(P‖Q)` from samples by the `k`-nearest-neighbour estimator
/// `(d/n) Σ ln(ν_k(i)/ρ_k(i)) + ln(m/(n−1))`, where `ρ_k(i)` is the distance from the
/// `i`-th point of P to its `k`-th neighbour in P (itself excluded) and `ν_k(i)` the
/// distance to its `k`-th neighbour in Q.
pub fn kl_knn(p: &[Vec<f64>], q: &[Vec<f64>], opts: KlOptions) -> Result<KlEstimate> {
    let k = opts.k;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "neighbour order must be at least 1".into(),
        ));
    }
    if p.len() < k + 1 || q.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least {} samples on each side, got {} and {}",
            k + 1,
            p.len(),
            q.len()
        )));
    }
    let d = p[0].len();
    if let Some(bad) = p.iter().chain(q).find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if p.iter().chain(q).flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "samples contain non-finite values".into(),
        ));
    }
    let value = match d {
        1 => kl_fixed::<1>(p, q, opts),
        2 => kl_fixed::<2>(p, q, opts),
        3 => kl_fixed::<3>(p, q, opts),
        4 => kl_fixed::<4>(p, q, opts),
        5 => kl_fixed::<5>(p, q, opts),
        6 => kl_fixed::<6>(p, q, opts),
        7 => kl_fixed::<7>(p, q, opts),
        8 => kl_fixed::<8>(p, q, opts),
        _ => Err(Error::InvalidArgument(format!(
            "sample dimension must be 1..={MAX_KL_DIM}, got {d}"
        ))),
    }?;
    Ok(KlEstimate {
        value,
        k,
        n_p: p.len(),
        n_q: q.len(),
    })
}

fn to_arrays<const K: usize>(v: &[Vec<f64>]) -> Vec<[f64; K]> {
    v.iter().map(|s| std::array::from_fn(|i| s[i])).collect()
}

fn kl_fixed<const K: usize>(p: &[Vec<f64>], q: &[Vec<f64>], opts: KlOptions) -> Result<f64> {
    let k = opts.k;
    let p = to_arrays::<K>(p);
    let cp = Cloud::new(&p);
    let cq = Cloud::new(&to_arrays::<K>(q));
    let collapse = opts.collapse_ties;
    if cp.distinct() < 2 || (collapse && (cp.distinct() < k + 1 || cq.distinct() < k)) {
        return Err(Error::DegenerateSamples(format!(
            "{} distinct points in P and {} in Q are too few for k = {k}",
            cp.distinct(),
            cq.distinct()
        )));
    }
    let (n, m) = if collapse {
        (cp.distinct(), cq.distinct())
    } else {
        (p.len(), q.len())
    };
    let sum: f64 = p
        .iter()
        .map(|x| {
            let rho = cp.kth_distance(x, k, true, collapse);
            let nu = cq.kth_distance(x, k, false, collapse);
            (nu / rho).ln()
        })
        .sum();
    Ok(K as f64 * sum / p.len() as f64 + (m as f64 / (n as f64 - 1.0)).ln())
}

/// Whether the equal-tailed `level` interval of each marginal contains `theta_true`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub per_dim: Vec<bool>,
    /// All dimensions covered.
    pub covered: bool,
}

pub fn coverage(chain: &Chain, theta_true: &[f64], level: f64) -> Result<Coverage> {
    if chain.dim() != theta_true.len() && !chain.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: chain.dim(),
            got: theta_true.len(),
        });
    }
    let ci = credible_interval(chain, level)?;
    let per_dim: Vec<bool> = ci
        .iter()
        .zip(theta_true)
        .map(|((lo, hi), t)| lo <= t && t <= hi)
        .collect();
    Ok(Coverage {
        covered: per_dim.iter().all(|c| *c),
        per_dim,
    })
}

/// Fraction of covered replicates.
pub fn coverage_rate(results: &[Coverage]) -> f64 {
    if results.is_empty() {
        return f64::NAN;
    }
    results.iter().filter(|c| c.covered).count() as f64 / results.len() as f64
}

/// Spearman rank correlation with a two-sided p-value from the t approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankCorrelation {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<RankCorrelation> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 pairs, got {n}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("values must be finite".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let m = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSamples("a variable is constant".into()));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if rho.abs() == 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        2.0 * dist.cdf(-t.abs())
    };
    Ok(RankCorrelation { rho, p_value, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn normal(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mean, sd).unwrap();
        (0..n).map(|_| vec![d.sample(&mut rng)]).collect()
    }

    fn kl(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
        kl_knn(p, q, KlOptions::default()).unwrap().value
    }

    #[test]
    fn gaussian_shift() {
        let v = kl(&normal(10_000, 0.0, 1.0, 1), &normal(10_000, 1.0, 1.0, 2));
        assert!((v - 0.5).abs() < 0.1, "{v}");
    }

    #[test]
    fn gaussian_scale() {
        let want = 0.5 * (0.25 - 1.0 + 4.0f64.ln());
        let v = kl(&normal(10_000, 0.0, 1.0, 3), &normal(10_000, 0.0, 2.0, 4));
        assert!((v - want).abs() < 0.1, "{v} vs {want}");
    }

    #[test]
    fn same_distribution_is_near_zero() {
        let v = kl(&normal(10_000, 0.0, 1.0, 5), &normal(10_000, 0.0, 1.0, 6));
        assert!(v.abs() < 0.05, "{v}");
    }

    #[test]
    fn two_dimensional_shift() {
        // KL between unit-covariance Gaussians is half the squared mean distance.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let nd = Normal::new(0.0, 1.0).unwrap();
        let p: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![nd.sample(&mut rng), nd.sample(&mut rng)])
            .collect();
        let q: Vec<Vec<f64>> = (0..10_000)
            .map(|_| vec![1.0 + nd.sample(&mut rng), 1.0 + nd.sample(&mut rng)])
            .collect();
        let v = kl(&p, &q);
        assert!((v - 1.0).abs() < 0.15, "{v}");
    }

    #[test]
    fn error_shrinks_with_sample_size() {
        let mut medians = Vec::new();
        for n in [1_000, 10_000, 100_000] {
            let mut errs: Vec<f64> = (0..20)
                .map(|s| {
                    (kl(&normal(n, 0.0, 1.0, 100 + s), &normal(n, 1.0, 1.0, 200 + s)) - 0.5).abs()
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            medians.push(0.5 * (errs[9] + errs[10]));
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "{medians:?}"
        );
    }

    #[test]
    fn repeated_points_collapse() {
        let p = normal(4_000, 0.0, 1.0, 8);
        let q = normal(4_000, 1.0, 1.0, 9);
        let plain = kl_knn(
            &p,
            &q,
            KlOptions {
                k: 1,
                collapse_ties: true,
            },
        )
        .unwrap()
        .value;
        // Every point repeated three times, as a sticky chain would.
        let sticky: Vec<Vec<f64>> = p
            .iter()
            .flat_map(|x| std::iter::repeat_n(x.clone(), 3))
            .collect();
        let collapsed = kl_knn(
            &sticky,
            &q,
            KlOptions {
                k: 1,
                collapse_ties: true,
            },
        )
        .unwrap()
        .value;
        assert!((plain - collapsed).abs() < 1e-12);
        let naive = kl_knn(&sticky, &q, KlOptions::default()).unwrap().value;
        assert!(naive > 5.0);
    }

    #[test]
    fn multiplicity_matches_explicit_copies() {
        let p = vec![vec![0.0], vec![0.0], vec![1.0], vec![3.0]];
        let q = vec![vec![0.5], vec![2.0]];
        // ρ = (1e-12, 1e-12, 1, 2); ν = (0.5, 0.5, 0.5, 1).
        let want = (2.0 * (0.5f64 / 1e-12).ln() + (0.5f64).ln() + (0.5f64).ln()) / 4.0
            + (2.0f64 / 3.0).ln();
        assert!((kl(&p, &q) - want).abs() < 1e-9);
    }

    #[test]
    fn rejects_degenerate_and_small() {
        let same = vec![vec![1.0]; 10];
        assert!(matches!(
            kl_knn(&same, &same, KlOptions::default()),
            Err(Error::DegenerateSamples(_))
        ));
        assert!(kl_knn(&[vec![1.0]], &[vec![1.0], vec![2.0]], KlOptions::default()).is_err());
        assert!(kl_knn(
            &[vec![1.0], vec![2.0]],
            &[vec![1.0, 0.0], vec![2.0, 0.0]],
            KlOptions::default()
        )
        .is_err());
    }

    fn chain(values: Vec<f64>) -> Chain {
        Chain {
            log_density: vec![0.0; values.len()],
            samples: values.into_iter().map(|v| vec![v]).collect(),
            acceptance_rate: 0.0,
            burn_in: 0,
            seed: 0,
            proposal_sd: vec![1.0],
        }
    }

    #[test]
    fn coverage_cases() {
        let centered = chain((0..1000).map(|i| i as f64 / 999.0 - 0.5).collect());
        assert!(coverage(&centered, &[0.0], 0.95).unwrap().covered);
        let above = chain((0..100).map(|i| 1.0 + i as f64).collect());
        assert!(!coverage(&above, &[0.0], 0.95).unwrap().covered);
        assert!(coverage(&above, &[0.0, 1.0], 0.95).is_err());
    }

    #[test]
    fn nominal_coverage_of_exact_posterior() {
        // Normal mean with prior N(0, 10²) and five unit-variance observations.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let prior = Normal::new(0.0, 10.0).unwrap();
        let noise = Normal::new(0.0, 1.0).unwrap();
        let results: Vec<Coverage> = (0..1000)
            .map(|_| {
                let theta: f64 = prior.sample(&mut rng);
                let sum: f64 = (0..5).map(|_| theta + noise.sample(&mut rng)).sum();
                let prec = 0.01 + 5.0;
                let post = Normal::new(sum / prec, (1.0 / prec).sqrt()).unwrap();
                let c = chain((0..2000).map(|_| post.sample(&mut rng)).collect());
                coverage(&c, &[theta], 0.95).unwrap()
            })
            .collect();
        let rate = coverage_rate(&results);
        assert!((0.93..=0.97).contains(&rate), "{rate}");
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn permutation_invariant(seed in 0u64..1000) {
            let p = normal(300, 0.0, 1.0, seed);
            let q = normal(300, 0.5, 1.5, seed + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p2 = p.clone();
            let mut q2 = q.clone();
            for i in (1..p2.len()).rev() {
                p2.swap(i, rng.random_range(0..=i));
                q2.swap(i, rng.random_range(0..=i));
            }
            proptest::prop_assert!((kl(&p, &q) - kl(&p2, &q2)).abs() < 1e-9);
        }

        #[test]
        fn coverage_monotone_in_level(seed in 0u64..1000, t in -2.0f64..2.0) {
            let c = chain(normal(200, 0.0, 1.0, seed).into_iter().map(|v| v[0]).collect());
            let mut prev = false;
            for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
                let cov = coverage(&c, &[t], level).unwrap().covered;
                proptest::prop_assert!(cov || !prev);
                prev = cov;
            }
        }
    }

    #[test]
    fn spearman_matches_reference_values() {
        // Reference values from scipy.stats.spearmanr.
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y = [2.1, 1.9, 3.5, 3.0, 5.2, 4.4, 7.1, 6.0, 9.9, 8.2];
        let s = spearman(&x, &y).unwrap();
        assert!((s.rho - 0.939_393_939_393_939_3).abs() < 1e-12);
        assert!((s.p_value - 5.484_052_998_513_666e-5).abs() < 1e-9);

        let x = [15.0, 15.0, 15.0, 30.0, 30.0, 30.0, 60.0, 60.0, 60.0];
        let y = [3.0, 2.5, 2.9, 2.0, 2.6, 1.1, 1.2, 0.4, 0.9];
        let s = spearman(&x, &y).unwrap();
        assert!((s.rho + 0.843_274_042_711_567_7).abs() < 1e-12);
        assert!((s.p_value - 0.004_289_748_768_094_628).abs() < 1e-9);
    }

    #[test]
    fn spearman_edge_cases() {
        let s = spearman(&[1.0, 2.0, 3.0, 4.0], &[8.0, 4.0, 2.0, 1.0]).unwrap();
        assert_eq!((s.rho, s.p_value), (-1.0, 0.0));
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }
}
