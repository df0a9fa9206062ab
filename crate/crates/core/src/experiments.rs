//! Experiment drivers: hyperparameter grids, label-noise robustness, and the
//! ablation matrix.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backbone::BackboneKind;
use crate::error::Result;
use crate::graph::GraphBundle;
use crate::losses::Method;
use crate::scalar::Scalar;
use crate::trainer::{multi_run, TrainConfig};

/// Default threshold grid: 0.5 to 0.9.
pub fn default_gamma_grid() -> Vec<f64> {
    (5..=9).map(|g| g as f64 / 10.0).collect()
}

/// Default negative-set-size grid: 10 to 100 in steps of 10.
pub fn default_k_grid() -> Vec<usize> {
    (1..=10).map(|k| k * 10).collect()
}

/// Default robustness grid of swapped-label counts.
pub const DEFAULT_SWAP_COUNTS: [usize; 5] = [1, 2, 5, 10, 20];

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepCell {
    pub gamma_pos: f64,
    pub k_neg: usize,
    pub mean: f64,
    pub std: f64,
}

/// Accuracy over the gamma x K grid, `n_runs` seeds per cell.
pub fn hyper_sweep<S: Scalar>(
    cfg: &TrainConfig,
    bundle: &GraphBundle<S>,
    gammas: &[f64],
    ks: &[usize],
    n_runs: usize,
) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::with_capacity(gammas.len() * ks.len());
    for &gamma_pos in gammas {
        for &k_neg in ks {
            let cell_cfg = TrainConfig {
                gamma_pos,
                k_neg,
                ..*cfg
            };
            let summary = multi_run(&cell_cfg, bundle, n_runs)?;
            cells.push(SweepCell {
                gamma_pos,
                k_neg,
                mean: summary.mean,
                std: summary.std,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RobustnessCell {
    pub n_swaps: usize,
    pub method: Method,
    pub mean: f64,
    pub std: f64,
}

/// Methods compared in the robustness sweep.
pub const ROBUSTNESS_METHODS: [Method; 4] = [Method::None, Method::Pcl, Method::Ppl, Method::Npl];

/// For each swap count: inject label noise once (seeded from the base seed
/// and the count), then run every method on the noised bundle.
pub fn robustness_sweep<S: Scalar>(
    cfg: &TrainConfig,
    bundle: &GraphBundle<S>,
    swap_counts: &[usize],
    n_runs: usize,
) -> Result<Vec<RobustnessCell>> {
    let mut cells = Vec::with_capacity(swap_counts.len() * ROBUSTNESS_METHODS.len());
    for &n_swaps in swap_counts {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (n_swaps as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let noised = bundle.inject_label_noise(n_swaps, &mut noise_rng)?;
        for method in ROBUSTNESS_METHODS {
            let cell_cfg = TrainConfig { method, ..*cfg };
            let summary = multi_run(&cell_cfg, &noised, n_runs)?;
            cells.push(RobustnessCell {
                n_swaps,
                method,
                mean: summary.mean,
                std: summary.std,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    /// Loss/sampling component: "ucl", "twcl", "ppl", "npl", or "topk".
    pub component: &'static str,
    /// `Some(true)` = with positive pairs, `Some(false)` = without,
    /// `None` for the loss-variant rows where the axis does not apply.
    pub positive_pairs: Option<bool>,
    pub mean: f64,
    pub std: f64,
}

/// The 2 + 6 ablation grid: the two contrastive-loss variants, then
/// {ppl, npl, topk} x {with, without} positive pairs. Always runs the GCN
/// backbone; "topk w/o P" is exactly the default configuration.
pub fn ablation_matrix<S: Scalar>(
    cfg: &TrainConfig,
    bundle: &GraphBundle<S>,
    n_runs: usize,
) -> Result<Vec<AblationRow>> {
    let base = TrainConfig {
        backbone: BackboneKind::Gcn,
        ..*cfg
    };
    let grid: [(&'static str, Method, Option<bool>); 8] = [
        ("ucl", Method::Ucl, None),
        ("twcl", Method::Pcl, None),
        ("ppl", Method::Ppl, Some(true)),
        ("ppl", Method::Ppl, Some(false)),
        ("npl", Method::Npl, Some(true)),
        ("npl", Method::Npl, Some(false)),
        ("topk", Method::Pcl, Some(true)),
        ("topk", Method::Pcl, Some(false)),
    ];
    let mut rows = Vec::with_capacity(grid.len());
    for (component, method, positive_pairs) in grid {
        let cell_cfg = TrainConfig {
            method,
            use_positive_pairs: positive_pairs.unwrap_or(false),
            ..base
        };
        let summary = multi_run(&cell_cfg, bundle, n_runs)?;
        rows.push(AblationRow {
            component,
            positive_pairs,
            mean: summary.mean,
            std: summary.std,
        });
    }
    Ok(rows)
}
