//! CSV and JSON writers for experiment results.

use std::io::Write;

use super::runner::{ExperimentSummary, ReplicateRecord};
use crate::error::{L2eError, Result};

fn io_err(e: impl std::fmt::Display) -> L2eError {
    L2eError::InvalidArgument(format!("write failed: {e}"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const COLUMNS: [&str; 16] = [
    "replicate",
    "seed",
    "method",
    "mse",
    "relative_error",
    "f1",
    "true_positives",
    "false_positives",
    "false_negatives",
    "outer_iters",
    "mean_inner_beta",
    "mean_inner_eta",
    "converged",
    "precision_diverged",
    "tuning",
    "error",
];

/// One row per (method, replicate). The `runtime` column is appended when
/// `include_timing` is set.
pub fn write_replicates_csv<W: Write>(
    records: &[ReplicateRecord],
    out: W,
    include_timing: bool,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    if include_timing {
        header.push("runtime");
    }
    w.write_record(&header).map_err(io_err)?;
    for r in records {
        let mut row = vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            r.method.to_string(),
            r.mse.to_string(),
            r.relative_error.to_string(),
            r.f1.to_string(),
            r.true_positives.to_string(),
            r.false_positives.to_string(),
            r.false_negatives.to_string(),
            r.outer_iters.to_string(),
            r.mean_inner_beta.to_string(),
            r.mean_inner_eta.to_string(),
            r.converged.to_string(),
            r.precision_diverged.to_string(),
            fmt_opt(r.tuning),
            r.error.clone().unwrap_or_default(),
        ];
        if include_timing {
            row.push(fmt_opt(r.runtime));
        }
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// One row per (method, replicate) with the iteration counters and wall time.
pub fn write_bench_csv<W: Write>(records: &[ReplicateRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "replicate",
        "outer_iters",
        "mean_inner_beta",
        "mean_inner_eta",
        "runtime",
    ])
    .map_err(io_err)?;
    for r in records {
        w.write_record([
            r.method.to_string(),
            r.replicate.to_string(),
            r.outer_iters.to_string(),
            r.mean_inner_beta.to_string(),
            r.mean_inner_eta.to_string(),
            fmt_opt(r.runtime),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Per-method means of the iteration counters and wall times.
pub fn write_bench_means_csv<W: Write>(summary: &ExperimentSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "replicates",
        "mean_outer_iters",
        "mean_inner_beta",
        "mean_inner_eta",
        "mean_runtime",
    ])
    .map_err(io_err)?;
    for m in &summary.methods {
        w.write_record([
            m.method.to_string(),
            m.replicates.to_string(),
            m.mean_outer_iters.to_string(),
            m.mean_inner_beta.to_string(),
            m.mean_inner_eta.to_string(),
            fmt_opt(m.mean_runtime),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Aggregate JSON without the per-replicate rows.
pub fn summary_json(summary: &ExperimentSummary) -> String {
    #[derive(serde::Serialize)]
    struct Aggregate<'a> {
        scenario: &'a str,
        n_reps: usize,
        seed: u64,
        methods: &'a [super::runner::MethodSummary],
    }
    serde_json::to_string_pretty(&Aggregate {
        scenario: &summary.scenario,
        n_reps: summary.n_reps,
        seed: summary.seed,
        methods: &summary.methods,
    })
    .expect("summary serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::runner::{run_replicates, ExperimentConfig, Method, Scenario};
    use crate::experiments::scenario::IsotonicScenario;

    #[test]
    fn csv_shape() {
        let sc = Scenario::Isotonic(IsotonicScenario {
            n: 40,
            m: 4,
            shift: 14.0,
            seed: 0,
        });
        let s = run_replicates(&ExperimentConfig::new(
            sc,
            vec![Method::Mm, Method::Ls],
            2,
            1,
        ))
        .unwrap();
        let mut buf = Vec::new();
        write_replicates_csv(&s.records, &mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(!text.lines().next().unwrap().contains("runtime"));
        let mut buf = Vec::new();
        write_replicates_csv(&s.records, &mut buf, true).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .ends_with("runtime"));
        let json: serde_json::Value = serde_json::from_str(&summary_json(&s)).unwrap();
        assert_eq!(json["methods"].as_array().unwrap().len(), 2);
        let mut buf = Vec::new();
        write_bench_csv(&s.records, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 4);
        let mut buf = Vec::new();
        write_bench_means_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2);
    }
}
