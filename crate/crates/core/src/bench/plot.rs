//! Long-format tables for external plotting.

use std::collections::BTreeMap;
use std::path::Path;

use super::experiment::{read_replicates, Status};
use crate::error::Result;

/// Rewrite `replicates.csv` of a benchmark directory as `plot_data.csv` with columns
/// `kind, dataset, design, metric, value`.
///
/// Metrics are `kl` and `covered` per calibration, plus `kl_dataset_mean` and
/// `coverage_dataset_rate` per data set (with an empty `design`). Returns the number of
/// rows written.
pub fn write_plot_data(dir: &Path, out: &Path) -> Result<usize> {
    let records = read_replicates(dir)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["kind", "dataset", "design", "metric", "value"])?;
    let mut rows = 0;
    let mut per_dataset: BTreeMap<(String, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == Status::Ok) {
        let (Some(kl), Some(cov)) = (r.kl, r.covered) else {
            continue;
        };
        let cov = if cov { 1.0 } else { 0.0 };
        for (metric, value) in [("kl", kl), ("covered", cov)] {
            w.write_record([
                r.kind.name().to_string(),
                r.dataset.to_string(),
                r.design.to_string(),
                metric.to_string(),
                value.to_string(),
            ])?;
            rows += 1;
        }
        let e = per_dataset
            .entry((r.kind.name().to_string(), r.dataset))
            .or_default();
        e.0.push(kl);
        e.1.push(cov);
    }
    for ((kind, dataset), (kl, cov)) in &per_dataset {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        for (metric, value) in [
            ("kl_dataset_mean", mean(kl)),
            ("coverage_dataset_rate", mean(cov)),
        ] {
            w.write_record([
                kind.clone(),
                dataset.to_string(),
                String::new(),
                metric.to_string(),
                value.to_string(),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}
