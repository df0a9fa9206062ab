//! Deterministic CSV and JSON output.
//!
//! Every file written here is a pure function of the run configuration and
//! seed: wall-clock timings stay on stdout/stderr so repeated invocations
//! with the same flags produce byte-identical files.

use serde::Serialize;

use crate::experiments::{AblationRow, RobustnessCell, SweepCell};
use crate::metrics::SeparabilityReport;
use crate::trainer::{RunResult, TrainConfig};

/// One summary CSV row per run.
pub const SUMMARY_HEADER: &str = "dataset,backbone,method,seed,acc,val_acc,epochs,anchors_mean";

/// Mean anchor-set size over the co-training epochs of one run.
pub fn anchors_mean(run: &RunResult, e1: usize) -> f64 {
    let phase2: Vec<usize> = run
        .trace
        .iter()
        .filter(|r| r.epoch >= e1)
        .map(|r| r.anchors)
        .collect();
    if phase2.is_empty() {
        0.0
    } else {
        phase2.iter().sum::<usize>() as f64 / phase2.len() as f64
    }
}

pub fn summary_csv(dataset: &str, cfg: &TrainConfig, runs: &[RunResult]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for run in runs {
        out.push_str(&format!(
            "{dataset},{},{},{},{},{},{},{}\n",
            cfg.backbone.name(),
            cfg.method.name(),
            run.seed,
            run.test_accuracy,
            run.best_val_accuracy,
            run.trace.len(),
            anchors_mean(run, cfg.e1),
        ));
    }
    out
}

#[derive(Serialize)]
struct RunTrace<'a> {
    dataset: &'a str,
    config: &'a TrainConfig,
    #[serde(flatten)]
    result: &'a RunResult,
}

/// Per-run JSON trace (config, per-epoch records, accuracies).
pub fn run_trace_json(dataset: &str, cfg: &TrainConfig, run: &RunResult) -> String {
    let mut s = serde_json::to_string_pretty(&RunTrace {
        dataset,
        config: cfg,
        result: run,
    })
    .expect("trace serialization");
    s.push('\n');
    s
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("gamma_pos,k_neg,mean,std\n");
    for c in cells {
        out.push_str(&format!("{},{},{},{}\n", c.gamma_pos, c.k_neg, c.mean, c.std));
    }
    out
}

pub fn robustness_csv(cells: &[RobustnessCell]) -> String {
    let mut out = String::from("n_swaps,method,mean,std\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.n_swaps,
            c.method.name(),
            c.mean,
            c.std
        ));
    }
    out
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("component,positive_pairs,mean,std\n");
    for r in rows {
        let pp = match r.positive_pairs {
            Some(true) => "with",
            Some(false) => "without",
            None => "",
        };
        out.push_str(&format!("{},{pp},{},{}\n", r.component, r.mean, r.std));
    }
    out
}

/// Hop-indexed separability rows followed by the global value.
pub fn separability_csv(report: &SeparabilityReport) -> String {
    let mut out = String::from("metric,hop,value,pairs\n");
    for (i, hop) in report.per_hop.iter().enumerate() {
        match hop {
            Some((value, pairs)) => {
                out.push_str(&format!("separability_n,{},{value},{pairs}\n", i + 1));
            }
            None => out.push_str(&format!("separability_n,{},,0\n", i + 1)),
        }
    }
    out.push_str(&format!("separability_g,,{},\n", report.global));
    out
}
