//! Negative-pair construction.
//!
//! Every node with a positive pseudo-label becomes an anchor; its negatives
//! are the nodes in the negative set of its pseudo-label class, minus the
//! anchor itself. Weights are attached later from RWR relevance scores.

use std::io::Write;

use crate::error::{PclError, Result};
use crate::pseudo::PseudoLabelSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Anchor<S: Scalar> {
    pub node: usize,
    /// Positive pseudo-label of the anchor, 1..=C.
    pub class_id: usize,
    pub negatives: Vec<usize>,
    /// Per-negative weights; empty until [`crate::rwr::pair_weights`] runs.
    pub weights: Vec<S>,
}

#[derive(Debug, Clone, Default)]
pub struct ContrastPlan<S: Scalar> {
    pub anchors: Vec<Anchor<S>>,
    /// Anchors discarded because self-exclusion emptied their negative set.
    pub dropped_anchors: usize,
}

/// Builds the anchor/negative plan from a pseudo-label set.
pub fn build_plan<S: Scalar>(pls: &PseudoLabelSet) -> ContrastPlan<S> {
    let mut plan = ContrastPlan {
        anchors: Vec::new(),
        dropped_anchors: 0,
    };
    for (node, &class_id) in pls.positive.iter().enumerate() {
        if class_id == 0 {
            continue;
        }
        let negatives: Vec<usize> = pls.negative_sets[class_id - 1]
            .iter()
            .copied()
            .filter(|&j| j != node)
            .collect();
        if negatives.is_empty() {
            plan.dropped_anchors += 1;
            continue;
        }
        plan.anchors.push(Anchor {
            node,
            class_id,
            negatives,
            weights: Vec::new(),
        });
    }
    plan
}

impl<S: Scalar> ContrastPlan<S> {
    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        self.anchors.iter().map(|a| a.negatives.len()).sum()
    }

    pub fn is_weighted(&self) -> bool {
        self.anchors.iter().all(|a| a.weights.len() == a.negatives.len())
    }

    /// Flattened (anchor, negative, weight) triples in plan order.
    pub fn flat_pairs(&self) -> Result<Vec<(usize, usize, S)>> {
        if !self.is_weighted() {
            return Err(PclError::Contract("plan has no weights attached".into()));
        }
        let mut out = Vec::with_capacity(self.pair_count());
        for a in &self.anchors {
            for (&j, &w) in a.negatives.iter().zip(&a.weights) {
                out.push((a.node, j, w));
            }
        }
        Ok(out)
    }

    /// Debug dump: `anchor,class,negative,weight` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "anchor,class,negative,weight")?;
        for a in &self.anchors {
            for (k, &j) in a.negatives.iter().enumerate() {
                let weight = a
                    .weights
                    .get(k)
                    .map_or(String::new(), |v| format!("{}", v.to_f64_lossy()));
                writeln!(w, "{},{},{},{}", a.node, a.class_id, j, weight)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pls(positive: Vec<usize>, negative_sets: Vec<Vec<usize>>, k: usize) -> PseudoLabelSet {
        PseudoLabelSet {
            positive,
            negative_sets,
            gamma_pos: 0.8,
            k_neg: k,
        }
    }

    #[test]
    fn no_positives_means_empty_plan() {
        let plan: ContrastPlan<f64> = build_plan(&pls(vec![0, 0, 0], vec![vec![0, 1]], 2));
        assert!(plan.is_empty());
        assert_eq!(plan.pair_count(), 0);
    }

    #[test]
    fn one_anchor_with_k2_yields_two_pairs() {
        let plan: ContrastPlan<f64> =
            build_plan(&pls(vec![1, 0, 0, 0], vec![vec![2, 3]], 2));
        assert_eq!(plan.anchors.len(), 1);
        assert_eq!(plan.pair_count(), 2);
        assert_eq!(plan.anchors[0].negatives, vec![2, 3]);
    }

    #[test]
    fn anchor_inside_its_negative_set_is_excluded() {
        let plan: ContrastPlan<f64> = build_plan(&pls(vec![1, 0, 0], vec![vec![0, 2]], 2));
        assert_eq!(plan.anchors[0].negatives, vec![2]);
        assert_eq!(plan.dropped_anchors, 0);

        let degenerate: ContrastPlan<f64> = build_plan(&pls(vec![1, 0], vec![vec![0]], 1));
        assert!(degenerate.is_empty());
        assert_eq!(degenerate.dropped_anchors, 1);
    }

    #[test]
    fn every_negative_comes_from_the_anchors_class_set() {
        let sets = vec![vec![4, 5, 6], vec![1, 2, 3]];
        let labels = vec![1, 2, 0, 2, 0, 1, 0];
        let plan: ContrastPlan<f64> = build_plan(&pls(labels, sets.clone(), 3));
        assert!(plan.pair_count() <= plan.anchors.len() * 3);
        for a in &plan.anchors {
            for &j in &a.negatives {
                assert!(sets[a.class_id - 1].contains(&j));
                assert_ne!(j, a.node);
            }
        }
    }

    #[test]
    fn csv_dump_has_one_row_per_pair() {
        let plan: ContrastPlan<f64> = build_plan(&pls(vec![1, 1, 0], vec![vec![2, 1]], 2));
        let mut buf = Vec::new();
        plan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + plan.pair_count());
        assert!(text.starts_with("anchor,class,negative,weight\n"));
    }
}
