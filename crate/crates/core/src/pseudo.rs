//! Pseudo-label generation.
//!
//! Positive pseudo-labels come from confidence thresholding the prediction
//! matrix; negative pseudo-labels are assigned per class to the K nodes with
//! the smallest predicted score for that class.

use crate::error::{PclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Positive labels (0 = none, classes re-indexed 1..=C) and per-class
/// negative node sets of exactly `k_neg` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub positive: Vec<usize>,
    pub negative_sets: Vec<Vec<usize>>,
    pub gamma_pos: f64,
    pub k_neg: usize,
}

/// Per-node positive pseudo-label: `argmax_j p_ij` (ties to the lowest class
/// index) when the max reaches `gamma_pos`, else 0.
pub fn positive_labels<S: Scalar>(p: &Tensor<S>, gamma_pos: f64) -> Result<Vec<usize>> {
    // 1.0 is allowed so sweeps can disable pseudo-labeling entirely
    if !(gamma_pos > 0.0 && gamma_pos <= 1.0) {
        return Err(PclError::parameter(
            "gamma_pos",
            format!("{gamma_pos} not in (0, 1]"),
        ));
    }
    let thresh = S::of(gamma_pos);
    let mut out = Vec::with_capacity(p.rows());
    for i in 0..p.rows() {
        let best = p.argmax_row(i);
        out.push(if p.at(i, best) >= thresh { best + 1 } else { 0 });
    }
    Ok(out)
}

/// Per class, the `k_neg` node ids with the smallest predicted score for that
/// class; ties break toward the lower node id.
pub fn negative_sets<S: Scalar>(p: &Tensor<S>, k_neg: usize) -> Result<Vec<Vec<usize>>> {
    let n = p.rows();
    if k_neg > n {
        return Err(PclError::parameter(
            "k_neg",
            format!("{k_neg} exceeds {n} nodes"),
        ));
    }
    let mut sets = Vec::with_capacity(p.cols());
    let mut order: Vec<usize> = (0..n).collect();
    for c in 0..p.cols() {
        order.sort_by(|&a, &b| {
            p.at(a, c)
                .partial_cmp(&p.at(b, c))
                .expect("finite prediction")
                .then(a.cmp(&b))
        });
        sets.push(order[..k_neg].to_vec());
    }
    Ok(sets)
}

/// Full pseudo-label generation over a prediction matrix.
pub fn build<S: Scalar>(p: &Tensor<S>, gamma_pos: f64, k_neg: usize) -> Result<PseudoLabelSet> {
    Ok(PseudoLabelSet {
        positive: positive_labels(p, gamma_pos)?,
        negative_sets: negative_sets(p, k_neg)?,
        gamma_pos,
        k_neg,
    })
}

impl PseudoLabelSet {
    /// Node ids holding a positive pseudo-label.
    pub fn anchor_nodes(&self) -> Vec<usize> {
        self.positive
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c != 0).then_some(i))
            .collect()
    }

    /// Nodes sharing the positive pseudo-label `class_id` (1..=C).
    pub fn same_positive(&self, class_id: usize) -> Vec<usize> {
        self.positive
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == class_id).then_some(i))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows)
    }

    #[test]
    fn confident_row_gets_its_argmax_class() {
        let p = pm(&[vec![0.9, 0.05, 0.05]]);
        assert_eq!(positive_labels(&p, 0.8).unwrap(), vec![1]);
    }

    #[test]
    fn low_confidence_row_gets_none() {
        let p = pm(&[vec![0.5, 0.3, 0.2]]);
        assert_eq!(positive_labels(&p, 0.8).unwrap(), vec![0]);
    }

    #[test]
    fn argmax_tie_breaks_to_lowest_class() {
        let p = pm(&[vec![0.45, 0.45, 0.1]]);
        assert_eq!(positive_labels(&p, 0.4).unwrap(), vec![1]);
    }

    #[test]
    fn gamma_outside_range_is_rejected() {
        let p = pm(&[vec![1.0]]);
        assert!(positive_labels(&p, 0.0).is_err());
        assert!(positive_labels(&p, 1.5).is_err());
        assert!(positive_labels(&p, 1.0).is_ok());
    }

    #[test]
    fn two_smallest_scores_selected() {
        let p = pm(&[vec![0.1], vec![0.9], vec![0.2], vec![0.05]]);
        assert_eq!(negative_sets(&p, 2).unwrap(), vec![vec![3, 0]]);
    }

    #[test]
    fn k_equals_n_selects_everyone() {
        let p = pm(&[vec![0.3], vec![0.1], vec![0.6]]);
        assert_eq!(negative_sets(&p, 3).unwrap(), vec![vec![1, 0, 2]]);
        assert!(negative_sets(&p, 4).is_err());
    }

    #[test]
    fn value_ties_break_to_lower_node_id() {
        let p = pm(&[vec![0.2], vec![0.1], vec![0.1], vec![0.9]]);
        assert_eq!(negative_sets(&p, 2).unwrap(), vec![vec![1, 2]]);
    }

    #[test]
    fn build_matches_figure_configuration() {
        // threshold 0.8, two negatives per class
        let p = pm(&[
            vec![0.85, 0.10, 0.05],
            vec![0.20, 0.70, 0.10],
            vec![0.05, 0.05, 0.90],
            vec![0.30, 0.40, 0.30],
        ]);
        let pls = build(&p, 0.8, 2).unwrap();
        assert_eq!(pls.positive, vec![1, 0, 3, 0]);
        assert_eq!(pls.negative_sets.len(), 3);
        for set in &pls.negative_sets {
            assert_eq!(set.len(), 2);
        }
        assert_eq!(pls.negative_sets[0], vec![2, 1]);
        assert_eq!(pls.anchor_nodes(), vec![0, 2]);
    }

    #[test]
    fn uniform_predictions_give_no_positives_and_id_ordered_negatives() {
        let p = pm(&[vec![0.25; 4], vec![0.25; 4], vec![0.25; 4]]);
        let pls = build(&p, 0.5, 2).unwrap();
        assert!(pls.positive.iter().all(|&c| c == 0));
        for set in &pls.negative_sets {
            assert_eq!(set, &vec![0, 1]);
        }
    }

    #[test]
    fn build_is_deterministic() {
        let p = pm(&[vec![0.6, 0.4], vec![0.3, 0.7], vec![0.5, 0.5]]);
        assert_eq!(build(&p, 0.6, 1).unwrap(), build(&p, 0.6, 1).unwrap());
    }

    #[test]
    fn raising_gamma_never_adds_positives() {
        let p = pm(&[
            vec![0.82, 0.18],
            vec![0.55, 0.45],
            vec![0.35, 0.65],
            vec![0.98, 0.02],
        ]);
        let lo = positive_labels(&p, 0.5).unwrap();
        let hi = positive_labels(&p, 0.8).unwrap();
        for (l, h) in lo.iter().zip(&hi) {
            if *h != 0 {
                assert_eq!(l, h);
            }
        }
        let count = |v: &[usize]| v.iter().filter(|&&c| c != 0).count();
        assert!(count(&hi) <= count(&lo));
    }
}
