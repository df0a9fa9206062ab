//! Training objectives.
//!
//! Supervised cross-entropy plus one of the auxiliary terms: the
//! topologically weighted contrastive loss (the default), its unweighted
//! variant, self-training on positive pseudo-labels, or negative learning on
//! low-score entries. All losses are summed onto the same tape so one
//! backward pass covers the joint objective.
//!
//! Saturated discriminators are handled by the `log` floor: `ln` arguments
//! are clamped at 1e-7, so a fully saturated pair contributes a finite
//! `-ln(1e-7)` and zero gradient.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PclError, Result};
use crate::pairs::ContrastPlan;
use crate::pseudo::PseudoLabelSet;
use crate::scalar::Scalar;
use crate::tape::{Tape, VarId};

/// Contrastive/auxiliary objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Pcl,
    Ucl,
    Ppl,
    Npl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Pcl => "pcl",
            Method::Ucl => "ucl",
            Method::Ppl => "ppl",
            Method::Npl => "npl",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Method::None),
            "pcl" => Ok(Method::Pcl),
            "ucl" => Ok(Method::Ucl),
            "ppl" => Ok(Method::Ppl),
            "npl" => Ok(Method::Npl),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    pub method: Method,
    pub tau: f64,
    pub use_positive_pairs: bool,
    pub gamma_neg: f64,
}

/// Summed cross-entropy over the masked nodes: sum of -ln(p_iy) for
/// each masked node i with label y.
pub fn cross_entropy<S: Scalar>(
    tape: &mut Tape<S>,
    p: VarId,
    labels: &[i32],
    mask: &[bool],
) -> Result<VarId> {
    let mut coords = Vec::new();
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        if labels[i] < 0 {
            return Err(PclError::Contract(format!("masked node {i} has no label")));
        }
        coords.push((i, labels[i] as usize));
    }
    if coords.is_empty() {
        return Err(PclError::Contract("cross_entropy over an empty mask".into()));
    }
    let n = coords.len();
    let picked = tape.pick(p, coords)?;
    let logs = tape.log(picked);
    tape.weighted_sum(logs, vec![-S::one(); n])
}

/// Shared tail of every contrastive term: gather the paired rows of Z,
/// compute sigmoid(cos/tau) per pair, take ln(D) or ln(1-D), and form the
/// coefficient-weighted sum.
fn pair_log_sum<S: Scalar>(
    tape: &mut Tape<S>,
    z: VarId,
    pairs: &[(usize, usize)],
    coeffs: Vec<S>,
    tau: f64,
    agreement: bool,
) -> Result<VarId> {
    debug_assert_eq!(pairs.len(), coeffs.len());
    let left = tape.gather_rows(z, pairs.iter().map(|p| p.0).collect())?;
    let right = tape.gather_rows(z, pairs.iter().map(|p| p.1).collect())?;
    let cos = tape.cosine_rows(left, right)?;
    let scaled = tape.affine(cos, S::of(1.0 / tau), S::zero());
    let d = tape.sigmoid(scaled);
    let arg = if agreement {
        d
    } else {
        tape.affine(d, -S::one(), S::one())
    };
    let logs = tape.log(arg);
    tape.weighted_sum(logs, coeffs)
}

/// Topologically weighted contrastive loss:
/// (1/|A|) Σ_anchors Σ_j -w_ij ln(1 - sigmoid(cos(z_i, z_j)/tau)).
/// An empty plan contributes an exact zero.
pub fn twcl<S: Scalar>(
    tape: &mut Tape<S>,
    z: VarId,
    plan: &ContrastPlan<S>,
    tau: f64,
) -> Result<VarId> {
    if tau <= 0.0 {
        return Err(PclError::parameter("tau", format!("{tau} must be > 0")));
    }
    if plan.is_empty() {
        return Ok(tape.scalar(S::zero()));
    }
    let inv_anchors = S::of(-1.0 / plan.anchors.len() as f64);
    let mut pairs = Vec::with_capacity(plan.pair_count());
    let mut coeffs = Vec::with_capacity(plan.pair_count());
    for (node, j, w) in plan.flat_pairs()? {
        pairs.push((node, j));
        coeffs.push(w * inv_anchors);
    }
    pair_log_sum(tape, z, &pairs, coeffs, tau, false)
}

/// Unweighted contrastive loss. Per anchor the negative terms (and, when
/// enabled and a same-pseudo-label partner exists, one positive agreement
/// term) are averaged with the 1/(pos + K) normalizer, then averaged over
/// anchors. With positives disabled this equals [`twcl`] under uniform
/// weights.
pub fn ucl<S: Scalar, R: Rng>(
    tape: &mut Tape<S>,
    z: VarId,
    plan: &ContrastPlan<S>,
    tau: f64,
    use_positive_pairs: bool,
    pls: &PseudoLabelSet,
    rng: &mut R,
) -> Result<VarId> {
    if tau <= 0.0 {
        return Err(PclError::parameter("tau", format!("{tau} must be > 0")));
    }
    if plan.is_empty() {
        return Ok(tape.scalar(S::zero()));
    }
    let inv_anchors = -1.0 / plan.anchors.len() as f64;
    let mut neg_pairs = Vec::with_capacity(plan.pair_count());
    let mut neg_coeffs = Vec::with_capacity(plan.pair_count());
    let mut pos_pairs = Vec::new();
    let mut pos_coeffs = Vec::new();
    for anchor in &plan.anchors {
        let partner = if use_positive_pairs {
            sample_partner(pls, anchor.node, anchor.class_id, rng)
        } else {
            None
        };
        let denom = (partner.is_some() as usize + anchor.negatives.len()) as f64;
        let coeff = S::of(inv_anchors / denom);
        for &j in &anchor.negatives {
            neg_pairs.push((anchor.node, j));
            neg_coeffs.push(coeff);
        }
        if let Some(j) = partner {
            pos_pairs.push((anchor.node, j));
            pos_coeffs.push(coeff);
        }
    }
    let neg = pair_log_sum(tape, z, &neg_pairs, neg_coeffs, tau, false)?;
    if pos_pairs.is_empty() {
        return Ok(neg);
    }
    let pos = pair_log_sum(tape, z, &pos_pairs, pos_coeffs, tau, true)?;
    tape.add(neg, pos)
}

/// Standalone positive-pair agreement term used by the "w P" ablation
/// variants: the mean over pseudo-labeled anchors (that have a partner) of
/// -ln sigmoid(cos(z_i, z_j)/tau). Returns `None` when no anchor has a
/// same-pseudo-label partner.
pub fn positive_pair_term<S: Scalar, R: Rng>(
    tape: &mut Tape<S>,
    z: VarId,
    pls: &PseudoLabelSet,
    tau: f64,
    rng: &mut R,
) -> Result<Option<VarId>> {
    if tau <= 0.0 {
        return Err(PclError::parameter("tau", format!("{tau} must be > 0")));
    }
    let mut pairs = Vec::new();
    for i in pls.anchor_nodes() {
        if let Some(j) = sample_partner(pls, i, pls.positive[i], rng) {
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Ok(None);
    }
    let coeff = S::of(-1.0 / pairs.len() as f64);
    let coeffs = vec![coeff; pairs.len()];
    Ok(Some(pair_log_sum(tape, z, &pairs, coeffs, tau, true)?))
}

/// Uniform draw from the nodes sharing `class_id` as positive pseudo-label,
/// excluding `node` itself.
fn sample_partner<R: Rng>(
    pls: &PseudoLabelSet,
    node: usize,
    class_id: usize,
    rng: &mut R,
) -> Option<usize> {
    let candidates = pls.same_positive(class_id);
    if candidates.len() < 2 {
        return None;
    }
    loop {
        let j = candidates[rng.random_range(0..candidates.len())];
        if j != node {
            return Some(j);
        }
    }
}

/// Negative learning: every entry of P at or below `gamma_neg` contributes
/// -ln(1 - p_ic). Selection is taken from the same prediction matrix the
/// loss is evaluated on.
pub fn npl_loss<S: Scalar>(tape: &mut Tape<S>, p: VarId, gamma_neg: f64) -> Result<VarId> {
    if !(gamma_neg > 0.0 && gamma_neg < 1.0) {
        return Err(PclError::parameter(
            "gamma_neg",
            format!("{gamma_neg} not in (0,1)"),
        ));
    }
    let thresh = S::of(gamma_neg);
    let weights: Vec<S> = tape
        .value(p)
        .data()
        .iter()
        .map(|&v| if v <= thresh { -S::one() } else { S::zero() })
        .collect();
    let one_minus = tape.affine(p, -S::one(), S::one());
    let logs = tape.log(one_minus);
    tape.weighted_sum(logs, weights)
}

/// Self-training: summed cross-entropy of pseudo-labeled nodes against their
/// positive pseudo-label. Ground-truth training nodes are excluded (they keep
/// their supervised term).
pub fn ppl_loss<S: Scalar>(
    tape: &mut Tape<S>,
    p: VarId,
    pls: &PseudoLabelSet,
    train_mask: &[bool],
) -> Result<VarId> {
    let mut coords = Vec::new();
    for (i, &c) in pls.positive.iter().enumerate() {
        if c != 0 && !train_mask[i] {
            coords.push((i, c - 1));
        }
    }
    if coords.is_empty() {
        return Ok(tape.scalar(S::zero()));
    }
    let n = coords.len();
    let picked = tape.pick(p, coords)?;
    let logs = tape.log(picked);
    tape.weighted_sum(logs, vec![-S::one(); n])
}

/// Joint loss value plus the component values for tracing.
pub struct CombinedLoss {
    pub total: VarId,
    pub supervised: f64,
    pub auxiliary: f64,
}

/// L = L_s + L_c, with L_c picked by the configured method. Pseudo-label
/// inputs are only consulted by the methods that need them; `method = none`
/// reduces to the supervised loss exactly.
#[allow(clippy::too_many_arguments)]
pub fn combined<S: Scalar, R: Rng>(
    tape: &mut Tape<S>,
    cfg: &LossConfig,
    p: VarId,
    z: VarId,
    labels: &[i32],
    train_mask: &[bool],
    pls: Option<&PseudoLabelSet>,
    plan: Option<&ContrastPlan<S>>,
    rng: &mut R,
) -> Result<CombinedLoss> {
    let l_s = cross_entropy(tape, p, labels, train_mask)?;
    let supervised = tape.scalar_value(l_s).to_f64_lossy();

    let missing = |what: &str| PclError::Contract(format!("method {} needs {what}", cfg.method.name()));
    let aux = match cfg.method {
        Method::None => None,
        Method::Pcl => {
            let plan = plan.ok_or_else(|| missing("a contrast plan"))?;
            Some(twcl(tape, z, plan, cfg.tau)?)
        }
        Method::Ucl => {
            let plan = plan.ok_or_else(|| missing("a contrast plan"))?;
            let pls = pls.ok_or_else(|| missing("pseudo-labels"))?;
            Some(ucl(tape, z, plan, cfg.tau, cfg.use_positive_pairs, pls, rng)?)
        }
        Method::Ppl => {
            let pls = pls.ok_or_else(|| missing("pseudo-labels"))?;
            Some(ppl_loss(tape, p, pls, train_mask)?)
        }
        Method::Npl => Some(npl_loss(tape, p, cfg.gamma_neg)?),
    };

    let pos_extra = if cfg.use_positive_pairs && matches!(cfg.method, Method::Pcl | Method::Ppl | Method::Npl)
    {
        let pls = pls.ok_or_else(|| missing("pseudo-labels"))?;
        positive_pair_term(tape, z, pls, cfg.tau, rng)?
    } else {
        None
    };

    let mut auxiliary = 0.0;
    let mut total = l_s;
    for term in [aux, pos_extra].into_iter().flatten() {
        auxiliary += tape.scalar_value(term).to_f64_lossy();
        total = tape.add(total, term)?;
    }
    Ok(CombinedLoss {
        total,
        supervised,
        auxiliary,
    })
}
