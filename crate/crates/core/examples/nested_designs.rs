//! Divergence of the approximated posterior along nested maximin designs of growing size.

use seqcal::bench::{run_nested_study, NestedConfig};

fn main() -> seqcal::Result<()> {
    let cfg = NestedConfig {
        replicates: 4,
        sizes: vec![10, 20, 40, 80],
        ..NestedConfig::default()
    };
    let r = run_nested_study(&cfg)?;
    for (i, size) in cfg.sizes.iter().enumerate() {
        println!(
            "N = {size:>3}: median KL {:.4}, median covering distance {:.4}",
            r.median_kl[i], r.median_covering[i]
        );
    }
    println!(
        "Spearman rho {:.3}, p = {:.2e}",
        r.trend.rho, r.trend.p_value
    );
    Ok(())
}
