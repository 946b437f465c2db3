//! Divergence between posterior samples and coverage of credible intervals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use seqcal::field::PriorSpec;
use seqcal::mcmc::{sample, SamplerConfig};
use seqcal::metrics::{coverage, kl_knn, KlOptions};
use seqcal::space::Bounds;

fn draws(n: usize, mean: f64, sd: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(mean, sd).expect("valid normal");
    (0..n).map(|_| vec![d.sample(&mut rng)]).collect()
}

fn main() -> seqcal::Result<()> {
    let p = draws(10_000, 0.0, 1.0, 1);
    for (mean, sd, exact) in [
        (1.0, 1.0, 0.5),
        (0.0, 2.0, 0.5 * (0.25 - 1.0 + 4f64.ln())),
        (0.0, 1.0, 0.0),
    ] {
        let q = draws(10_000, mean, sd, 2);
        let kl = kl_knn(&p, &q, KlOptions::default())?;
        println!(
            "KL(N(0,1) ‖ N({mean},{sd}²)) ≈ {:.4}   exact {exact:.4}",
            kl.value
        );
    }

    // Metropolis chains repeat states: thin them and collapse the remaining copies.
    let prior = PriorSpec::uniform(Bounds::new(vec![-10.0], vec![10.0])?);
    let cfg = |seed| SamplerConfig {
        seed,
        thin: 10,
        ..SamplerConfig::default()
    };
    let a = sample(|t| Ok(-0.5 * t[0] * t[0]), &prior, &cfg(1))?;
    let b = sample(|t| Ok(-0.5 * (t[0] - 1.0).powi(2)), &prior, &cfg(2))?;
    let kl = kl_knn(
        &a.samples,
        &b.samples,
        KlOptions {
            k: 1,
            collapse_ties: true,
        },
    )?;
    println!("chains N(0,1) vs N(1,1): KL ≈ {:.4}   exact 0.5", kl.value);

    for truth in [0.0, 1.5, 2.5] {
        println!(
            "95% interval of the first chain covers {truth}: {}",
            coverage(&a, &[truth], 0.95)?.covered
        );
    }
    Ok(())
}
