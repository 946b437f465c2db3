//! Maximin Latin hypercube designs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seed::derive_seed;
use crate::space::Bounds;

/// Exponent of the Morris-Mitchell criterion that drives the swap search.
const PHI_P: i32 = 15;

/// Strata indices `perm[j][i]` of point `i` along axis `j`.
struct Lhd {
    n: usize,
    cols: Vec<Vec<usize>>,
    /// Squared distances between cell centers in unit coordinates.
    d2: Vec<f64>,
}

impl Lhd {
    fn random<R: Rng>(n: usize, dims: usize, rng: &mut R) -> Self {
        let cols = (0..dims)
            .map(|_| {
                let mut c: Vec<usize> = (0..n).collect();
                c.shuffle(rng);
                c
            })
            .collect();
        let mut l = Self {
            n,
            cols,
            d2: vec![0.0; n * n],
        };
        for a in 0..n {
            for b in (a + 1)..n {
                let d = l.pair_d2(a, b);
                l.d2[a * n + b] = d;
                l.d2[b * n + a] = d;
            }
        }
        l
    }

    fn coord(&self, j: usize, i: usize) -> f64 {
        (self.cols[j][i] as f64 + 0.5) / self.n as f64
    }

    fn pair_d2(&self, a: usize, b: usize) -> f64 {
        (0..self.cols.len())
            .map(|j| (self.coord(j, a) - self.coord(j, b)).powi(2))
            .sum()
    }

    fn min_d2(&self) -> (f64, usize, usize) {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                let d = self.d2[a * self.n + b];
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        best
    }

    /// Change of the criterion sum `Σ d^-p` if rows `a` and `b` swap axis `j`.
    fn swap_delta(&self, j: usize, a: usize, b: usize) -> f64 {
        let n = self.n;
        let (ca, cb) = (self.coord(j, a), self.coord(j, b));
        let mut delta = 0.0;
        for c in 0..n {
            if c == a || c == b {
                continue;
            }
            let cc = self.coord(j, c);
            let (old_a, old_b) = (self.d2[a * n + c], self.d2[b * n + c]);
            let new_a = old_a - (ca - cc).powi(2) + (cb - cc).powi(2);
            let new_b = old_b - (cb - cc).powi(2) + (ca - cc).powi(2);
            delta += inv_pow(new_a) + inv_pow(new_b) - inv_pow(old_a) - inv_pow(old_b);
        }
        delta
    }

    fn swap(&mut self, j: usize, a: usize, b: usize) {
        self.cols[j].swap(a, b);
        let n = self.n;
        for c in 0..n {
            for r in [a, b] {
                if c != r {
                    let d = self.pair_d2(r, c);
                    self.d2[r * n + c] = d;
                    self.d2[c * n + r] = d;
                }
            }
        }
    }

    fn points(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.cols.len()).map(|j| self.coord(j, i)).collect())
            .collect()
    }
}

fn inv_pow(d2: f64) -> f64 {
    d2.max(1e-300).powi(-PHI_P / 2) / d2.max(1e-300).sqrt().powi(PHI_P % 2)
}

/// A Latin hypercube of `n` cell-centered points in `bounds`, the best of `restarts`
/// swap-improved random hypercubes by minimum pairwise distance (measured in unit
/// coordinates).
pub fn maximin_lhd(n: usize, bounds: &Bounds, seed: u64, restarts: usize) -> Vec<Vec<f64>> {
    let dims = bounds.dim();
    if n == 0 {
        return Vec::new();
    }
    let mut best: Option<(f64, Lhd)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
        let mut l = Lhd::random(n, dims, &mut rng);
        if n > 2 && dims > 0 {
            let iters = 40 * n * dims;
            let mut stale = 0;
            let mut closest = l.min_d2();
            for _ in 0..iters {
                let (_, a, b) = closest;
                let row = if rng.random::<bool>() { a } else { b };
                let other = loop {
                    let o = rng.random_range(0..n);
                    if o != row {
                        break o;
                    }
                };
                let j = rng.random_range(0..dims);
                if l.swap_delta(j, row, other) < 0.0 {
                    l.swap(j, row, other);
                    closest = l.min_d2();
                    stale = 0;
                } else {
                    stale += 1;
                    if stale > 10 * n {
                        break;
                    }
                }
            }
        }
        let score = l.min_d2().0;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, l));
        }
    }
    let (_, l) = best.expect("at least one restart");
    l.points()
        .into_iter()
        .map(|u| bounds.from_unit(&u))
        .collect()
}

/// A random (unimproved) Latin hypercube in the unit cube.
pub fn random_lhd(n: usize, dims: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Lhd::random(n, dims, &mut rng).points()
}

/// Nested space-filling designs: the first `sizes[i]` rows form level `i`.
///
/// Level 0 is a maximin hypercube; each further level adds the points of a fresh maximin
/// hypercube of the new size greedily, farthest from the current design first.
pub fn nested_maximin(
    sizes: &[usize],
    bounds: &Bounds,
    seed: u64,
    restarts: usize,
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut unit: Vec<Vec<f64>> = Vec::new();
    for (level, &size) in sizes.iter().enumerate() {
        if size <= out.len() {
            continue;
        }
        let pool = maximin_lhd(
            size,
            &Bounds::unit(bounds.dim()),
            derive_seed(seed, level as u64),
            restarts,
        );
        if unit.is_empty() {
            unit = pool;
        } else {
            let mut pool = pool;
            let mut near: Vec<f64> = pool.iter().map(|p| min_dist2(p, &unit)).collect();
            while unit.len() < size && !pool.is_empty() {
                let k = (0..pool.len())
                    .max_by(|&a, &b| near[a].total_cmp(&near[b]).then(b.cmp(&a)))
                    .unwrap();
                let p = pool.swap_remove(k);
                near.swap_remove(k);
                for (q, d) in pool.iter().zip(near.iter_mut()) {
                    *d = d.min(dist2(q, &p));
                }
                unit.push(p);
            }
        }
        out = unit.iter().map(|u| bounds.from_unit(u)).collect();
    }
    out
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn min_dist2(p: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter()
        .map(|q| dist2(p, q))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum pairwise Euclidean distance in unit coordinates.
pub fn min_pairwise_distance(points: &[Vec<f64>], bounds: &Bounds) -> f64 {
    let unit: Vec<Vec<f64>> = points.iter().map(|p| bounds.to_unit(p)).collect();
    let mut best = f64::INFINITY;
    for a in 0..unit.len() {
        for b in (a + 1)..unit.len() {
            best = best.min(dist2(&unit[a], &unit[b]));
        }
    }
    best.sqrt()
}
