//! Two-phase training: a cross-entropy warm-up followed by co-training with
//! the configured auxiliary objective, pairs regenerated every epoch.
//!
//! One ChaCha8 RNG per run drives Glorot initialization, dropout masks, and
//! positive-pair sampling, in that order, so runs are bit-reproducible per
//! seed. Evaluation passes are dropout-free and consume no randomness.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adam::{AdamHyper, AdamState};
use crate::backbone::{gcn_forward, mlp_forward, BackboneKind, BackboneParams, ForwardOutput, Mode};
use crate::error::{PclError, Result};
use crate::graph::{GraphBundle, NormalizedOperators};
use crate::losses::{combined, LossConfig, Method};
use crate::metrics::accuracy;
use crate::pairs::{build_plan, ContrastPlan};
use crate::pseudo::{self, PseudoLabelSet};
use crate::rwr::{pair_weights, RwrScores};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TrainConfig {
    pub gamma_pos: f64,
    pub k_neg: usize,
    pub tau: f64,
    pub e1: usize,
    pub e2: usize,
    pub hidden: usize,
    pub weight_decay: f64,
    pub lr: f64,
    pub dropout: f64,
    pub q_restart: f64,
    pub seed: u64,
    pub method: Method,
    pub backbone: BackboneKind,
    pub use_positive_pairs: bool,
    pub gamma_neg: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma_pos: 0.5,
            k_neg: 20,
            tau: 0.05,
            e1: 200,
            e2: 300,
            hidden: 64,
            weight_decay: 5e-4,
            lr: 0.01,
            dropout: 0.5,
            q_restart: crate::rwr::DEFAULT_RESTART,
            seed: 0,
            method: Method::Pcl,
            backbone: BackboneKind::Gcn,
            use_positive_pairs: false,
            gamma_neg: 0.05,
        }
    }
}

impl TrainConfig {
    fn loss_config(&self, method: Method) -> LossConfig {
        LossConfig {
            method,
            tau: self.tau,
            use_positive_pairs: self.use_positive_pairs,
            gamma_neg: self.gamma_neg,
        }
    }

    fn validate<S: Scalar>(&self, bundle: &GraphBundle<S>) -> Result<()> {
        if !bundle.has_split() {
            return Err(PclError::Contract(
                "bundle carries no train/val/test masks".into(),
            ));
        }
        if self.e1 + self.e2 == 0 {
            return Err(PclError::parameter("epochs", "e1 + e2 must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(PclError::parameter("hidden", "must be >= 1"));
        }
        if self.lr <= 0.0 {
            return Err(PclError::parameter("lr", "must be > 0"));
        }
        if !(self.q_restart > 0.0 && self.q_restart < 1.0) {
            return Err(PclError::parameter("q_restart", "must be in (0,1)"));
        }
        if !(self.gamma_pos > 0.0 && self.gamma_pos <= 1.0) {
            return Err(PclError::parameter("gamma_pos", "must be in (0,1]"));
        }
        if self.k_neg == 0 || self.k_neg > bundle.n_nodes() {
            return Err(PclError::parameter("k_neg", "must be in [1, n_nodes]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_supervised: f64,
    pub loss_auxiliary: f64,
    pub val_accuracy: f64,
    pub anchors: usize,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub seed: u64,
    /// Test accuracy of the best-validation-epoch parameters.
    pub test_accuracy: f64,
    /// Test accuracy of the final-epoch parameters.
    pub final_accuracy: f64,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub trace: Vec<EpochRecord>,
    #[serde(skip)]
    pub wall_ms: u128,
}

/// Graph-derived state shared by every run on the same bundle: normalized
/// operators and the RWR score cache.
pub struct TrainContext<S: Scalar> {
    pub operators: NormalizedOperators<S>,
    pub rwr: RwrScores<S>,
}

impl<S: Scalar> TrainContext<S> {
    pub fn new(bundle: &GraphBundle<S>, q_restart: f64) -> Self {
        TrainContext {
            operators: bundle.normalize_operators(),
            rwr: RwrScores::with_defaults(q_restart),
        }
    }
}

fn forward_pass<S: Scalar>(
    cfg: &TrainConfig,
    params: &BackboneParams<S>,
    bundle: &GraphBundle<S>,
    ctx: &TrainContext<S>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<ForwardOutput<S>> {
    match cfg.backbone {
        BackboneKind::Gcn => gcn_forward(params, bundle, &ctx.operators, mode, cfg.dropout, rng),
        BackboneKind::Mlp => mlp_forward(params, bundle, mode, cfg.dropout, rng),
    }
}

/// A finished run plus the selected (best-validation) and final parameters.
pub struct TrainedRun<S: Scalar> {
    pub result: RunResult,
    pub best_params: BackboneParams<S>,
    pub final_params: BackboneParams<S>,
}

/// Trains one run on a bundle with precomputed context.
pub fn train_with_context<S: Scalar>(
    cfg: &TrainConfig,
    bundle: &GraphBundle<S>,
    ctx: &TrainContext<S>,
) -> Result<RunResult> {
    train_model(cfg, bundle, ctx).map(|t| t.result)
}

/// Trains one run and keeps the selected and final parameters for
/// downstream analysis (e.g. separability of the learned representations).
pub fn train_model<S: Scalar>(
    cfg: &TrainConfig,
    bundle: &GraphBundle<S>,
    ctx: &TrainContext<S>,
) -> Result<TrainedRun<S>> {
    cfg.validate(bundle)?;
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = BackboneParams::glorot(
        bundle.n_features(),
        cfg.hidden,
        bundle.n_classes(),
        &mut rng,
    );
    let mut adam = AdamState::new();
    let hyper = AdamHyper {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamHyper::default()
    };

    let labels = bundle.labels();
    let mut eval = forward_pass(cfg, &params, bundle, ctx, Mode::Eval, &mut rng)?;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = params.clone();
    let mut trace = Vec::with_capacity(cfg.e1 + cfg.e2);

    for epoch in 0..cfg.e1 + cfg.e2 {
        let co_training = epoch >= cfg.e1 && cfg.method != Method::None;

        let (pls, plan): (Option<PseudoLabelSet>, Option<ContrastPlan<S>>) = if co_training {
            let pls = pseudo::build(eval.predictions(), cfg.gamma_pos, cfg.k_neg)?;
            let plan = match cfg.method {
                Method::Pcl | Method::Ucl => {
                    let mut plan = build_plan(&pls);
                    if cfg.method == Method::Pcl && !plan.is_empty() {
                        pair_weights(&mut plan, &ctx.rwr, &ctx.operators.rw_adj)?;
                    }
                    Some(plan)
                }
                _ => None,
            };
            (Some(pls), plan)
        } else {
            (None, None)
        };

        let mut out = forward_pass(cfg, &params, bundle, ctx, Mode::Train, &mut rng)?;
        let method = if co_training { cfg.method } else { Method::None };
        let loss = combined(
            &mut out.tape,
            &cfg.loss_config(method),
            out.p,
            out.z,
            labels,
            bundle.train_mask(),
            pls.as_ref(),
            plan.as_ref(),
            &mut rng,
        )?;
        let total = out.tape.scalar_value(loss.total).to_f64_lossy();
        if !total.is_finite() {
            return Err(PclError::NonFinite { epoch });
        }
        out.tape.backward(loss.total)?;

        let grad_bufs: Vec<Vec<S>> = out
            .param_ids
            .iter()
            .map(|&id| {
                out.tape
                    .grad(id)
                    .map(<[S]>::to_vec)
                    .unwrap_or_else(|| vec![S::zero(); out.tape.value(id).numel()])
            })
            .collect();
        let grads: Vec<&[S]> = grad_bufs.iter().map(Vec::as_slice).collect();
        adam.step(&mut params.tensors_mut(), &grads, &hyper)?;

        eval = forward_pass(cfg, &params, bundle, ctx, Mode::Eval, &mut rng)?;
        let val_accuracy = accuracy(eval.predictions(), labels, bundle.val_mask())?;
        if val_accuracy > best_val {
            best_val = val_accuracy;
            best_epoch = epoch;
            best_params = params.clone();
        }
        trace.push(EpochRecord {
            epoch,
            loss_total: total,
            loss_supervised: loss.supervised,
            loss_auxiliary: loss.auxiliary,
            val_accuracy,
            anchors: pls.as_ref().map_or(0, |p| p.anchor_nodes().len()),
            pairs: plan.as_ref().map_or(0, ContrastPlan::pair_count),
        });
    }

    let final_accuracy = accuracy(eval.predictions(), labels, bundle.test_mask())?;
    let best_eval = forward_pass(cfg, &best_params, bundle, ctx, Mode::Eval, &mut rng)?;
    let test_accuracy = accuracy(best_eval.predictions(), labels, bundle.test_mask())?;

    Ok(TrainedRun {
        result: RunResult {
            seed: cfg.seed,
            test_accuracy,
            final_accuracy,
            best_epoch,
            best_val_accuracy: best_val,
            trace,
            wall_ms: start.elapsed().as_millis(),
        },
        best_params,
        final_params: params,
    })
}

/// Trains one run, building the shared context on the fly.
pub fn train<S: Scalar>(cfg: &TrainConfig, bundle: &GraphBundle<S>) -> Result<RunResult> {
    let ctx = TrainContext::new(bundle, cfg.q_restart);
    train_with_context(cfg, bundle, &ctx)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<RunResult>,
}

/// Repeats training over seeds `cfg.seed .. cfg.seed + n_runs`, sharing the
/// RWR cache, and reports mean and population standard deviation of the test
/// accuracy. Runs execute in parallel on the rayon pool.
pub fn multi_run<S: Scalar>(
    cfg: &TrainConfig,
    bundle: &GraphBundle<S>,
    n_runs: usize,
) -> Result<RunSummary> {
    if n_runs == 0 {
        return Err(PclError::parameter("n_runs", "must be >= 1"));
    }
    let ctx = TrainContext::new(bundle, cfg.q_restart);
    let runs: Vec<RunResult> = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let run_cfg = TrainConfig {
                seed: cfg.seed + i as u64,
                ..*cfg
            };
            train_with_context(&run_cfg, bundle, &ctx)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(runs))
}

pub fn summarize(runs: Vec<RunResult>) -> RunSummary {
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.test_accuracy).sum::<f64>() / n;
    let var = runs
        .iter()
        .map(|r| (r.test_accuracy - mean).powi(2))
        .sum::<f64>()
        / n;
    RunSummary {
        mean,
        std: var.sqrt(),
        runs,
    }
}
