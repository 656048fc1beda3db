use serde::{Deserialize, Serialize};

use crate::attention::AttentionRecord;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

/// Single-label metrics over `class_count` classes. A class that never
/// occurs in `pred` or `gold` still counts toward the macro average with F1 0.
pub fn node_classification_metrics(pred: &[usize], gold: &[usize], class_count: usize) -> Result<ClassificationMetrics> {
    if pred.is_empty() {
        return Err(Error::Contract("no predictions to score".into()));
    }
    if pred.len() != gold.len() {
        return Err(Error::dim("classification metrics", &[pred.len()], &[gold.len()]));
    }
    let classes = class_count.max(1 + pred.iter().chain(gold).copied().max().unwrap_or(0));
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let macro_f1 = (0..classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / classes as f64;
    let (t, p, n) = (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    Ok(ClassificationMetrics {
        accuracy: t as f64 / pred.len() as f64,
        micro_f1: f1(t, p, n),
        macro_f1,
    })
}

/// One held-out edge scored against its sampled non-neighbors.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

impl CandidateSet {
    /// From parallel score and label slices; exactly one label must be set.
    pub fn from_labeled(scores: &[f64], is_positive: &[bool]) -> Result<Self> {
        if scores.len() != is_positive.len() {
            return Err(Error::dim("candidate set", &[scores.len()], &[is_positive.len()]));
        }
        let pos: Vec<usize> = (0..scores.len()).filter(|&i| is_positive[i]).collect();
        if pos.len() != 1 {
            return Err(Error::Contract(format!("candidate set has {} positives, expected 1", pos.len())));
        }
        Ok(CandidateSet {
            positive: scores[pos[0]],
            negatives: (0..scores.len()).filter(|&i| !is_positive[i]).map(|i| scores[i]).collect(),
        })
    }

    /// 1-based rank of the positive; equal-scored negatives go first.
    pub fn pessimistic_rank(&self) -> usize {
        1 + self.negatives.iter().filter(|&&s| s >= self.positive).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub auc: f64,
    pub mrr: f64,
}

/// AUC over every (positive, negative) pair pooled across sets, ties
/// counting one half, and the mean reciprocal pessimistic rank.
pub fn link_prediction_metrics(sets: &[CandidateSet]) -> Result<LinkMetrics> {
    if sets.is_empty() {
        return Err(Error::Contract("no candidate sets to score".into()));
    }
    let mut negatives: Vec<f64> = sets.iter().flat_map(|s| s.negatives.iter().copied()).collect();
    if negatives.is_empty() {
        return Err(Error::Contract("candidate sets contain no negatives".into()));
    }
    if sets.iter().any(|s| !s.positive.is_finite()) || negatives.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite link score".into()));
    }
    negatives.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for s in sets {
        let below = negatives.partition_point(|&v| v < s.positive);
        let tied = negatives[below..].partition_point(|&v| v <= s.positive);
        wins += below as f64 + 0.5 * tied as f64;
    }
    let auc = wins / (sets.len() as f64 * negatives.len() as f64);
    let mrr = sets.iter().map(|s| 1.0 / s.pessimistic_rank() as f64).sum::<f64>() / sets.len() as f64;
    Ok(LinkMetrics { auc, mrr })
}

const KL_FLOOR: f64 = 1e-12;

/// `KL(Bern(a) || Bern(b))` with `0 log 0 = 0` and `b` kept inside the floor.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let b = b.clamp(KL_FLOOR, 1.0 - KL_FLOOR);
    let term = |p: f64, q: f64| if p <= 0.0 { 0.0 } else { p * (p / q).ln() };
    (term(a, b) + term(1.0 - a, 1.0 - b)).max(0.0)
}

/// Mean over neighbors of the per-edge divergence between `alpha` and `lambda`.
pub fn divergence(alpha: &[f64], lambda: &[f64]) -> f64 {
    if alpha.is_empty() {
        return 0.0;
    }
    alpha.iter().zip(lambda).map(|(&a, &l)| bernoulli_kl(a, l)).sum::<f64>() / alpha.len() as f64
}

/// `diff` of every target in `record`, on head-averaged coefficients.
pub fn attention_divergence(record: &AttentionRecord) -> Vec<f64> {
    (0..record.target_count())
        .map(|s| {
            let (a, l) = record.head_mean(s);
            divergence(&a, &l)
        })
        .collect()
}

/// Counts per bin `[k w, (k+1) w)`; returns `(left edges, counts)`.
pub fn histogram(values: &[f64], width: f64) -> (Vec<f64>, Vec<usize>) {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    let bins = (max / width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[((v / width).floor().max(0.0) as usize).min(bins - 1)] += 1;
    }
    ((0..bins).map(|k| k as f64 * width).collect(), counts)
}

/// Normalized mutual information with arithmetic-mean normalization; two
/// single-cluster partitions score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("nmi", &[a.len()], &[b.len()]));
    }
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(1.0);
    }
    let mut joint = std::collections::HashMap::<(usize, usize), f64>::new();
    let mut pa = std::collections::HashMap::<usize, f64>::new();
    let mut pb = std::collections::HashMap::<usize, f64>::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *pa.entry(x).or_default() += 1.0;
        *pb.entry(y).or_default() += 1.0;
    }
    let entropy = |m: &std::collections::HashMap<usize, f64>| -> f64 { m.values().map(|&c| -(c / n) * (c / n).ln()).sum() };
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| (c / n) * (c * n / (pa[&x] * pb[&y])).ln())
        .sum();
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / values.len() as f64;
    (m, v.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_hand_counts() {
        let m = node_classification_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((m.accuracy, m.micro_f1, m.macro_f1), (1.0, 1.0, 1.0));

        let m = node_classification_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert!((m.accuracy - 0.5).abs() < 1e-12);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-12);

        // Confusion rows are gold, columns predicted: [[2,0,0],[1,1,0],[0,0,2]].
        let gold = [0, 0, 1, 1, 2, 2];
        let pred = [0, 0, 0, 1, 2, 2];
        let m = node_classification_metrics(&pred, &gold, 3).unwrap();
        assert!((m.accuracy - 5.0 / 6.0).abs() < 1e-12);
        assert!((m.micro_f1 - 5.0 / 6.0).abs() < 1e-12);
        let macro_f1 = (0.8 + 2.0 / 3.0 + 1.0) / 3.0;
        assert!((m.macro_f1 - macro_f1).abs() < 1e-12);

        assert!(node_classification_metrics(&[], &[], 2).is_err());
    }

    #[test]
    fn absent_class_drags_macro_f1() {
        let m = node_classification_metrics(&[0, 1], &[0, 1], 4).unwrap();
        assert!((m.macro_f1 - 0.5).abs() < 1e-12);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn forced_ranks() {
        let top = vec![CandidateSet { positive: 5.0, negatives: vec![1.0, 2.0, 3.0, 4.0] }; 3];
        let m = link_prediction_metrics(&top).unwrap();
        assert_eq!((m.auc, m.mrr), (1.0, 1.0));
        let bottom = vec![CandidateSet { positive: 0.0, negatives: vec![1.0, 2.0, 3.0, 4.0] }; 3];
        let m = link_prediction_metrics(&bottom).unwrap();
        assert_eq!(m.auc, 0.0);
        assert!((m.mrr - 0.2).abs() < 1e-15);
        let tie = CandidateSet { positive: 1.0, negatives: vec![1.0, 1.0] };
        assert_eq!(tie.pessimistic_rank(), 3);
        assert_eq!(link_prediction_metrics(&[tie]).unwrap().auc, 0.5);
    }

    #[test]
    fn random_scores_sit_at_one_half() {
        use rand::Rng;
        let mut r = crate::rng::stream(17);
        let sets: Vec<CandidateSet> = (0..10_000)
            .map(|_| CandidateSet { positive: r.random(), negatives: (0..4).map(|_| r.random()).collect() })
            .collect();
        let m = link_prediction_metrics(&sets).unwrap();
        assert!((m.auc - 0.5).abs() < 0.02, "{}", m.auc);
    }

    #[test]
    fn labeled_sets_need_one_positive() {
        assert!(CandidateSet::from_labeled(&[1.0, 2.0], &[false, false]).is_err());
        assert!(CandidateSet::from_labeled(&[1.0, 2.0], &[true, true]).is_err());
        let s = CandidateSet::from_labeled(&[1.0, 2.0, 3.0], &[false, true, false]).unwrap();
        assert_eq!(s.positive, 2.0);
        assert_eq!(s.negatives, vec![1.0, 3.0]);
    }

    #[test]
    fn closed_form_divergence() {
        assert_eq!(divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        let d = divergence(&[1.0, 0.0], &[0.5, 0.5]);
        assert!((d - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bernoulli_kl(1.0, 0.0).is_finite());
    }

    #[test]
    fn bins_are_left_closed() {
        let (edges, counts) = histogram(&[0.0, 0.049, 0.05, 0.12], 0.05);
        assert_eq!(counts, vec![2, 1, 1]);
        assert!((edges[2] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap(), 0.0);
        assert!((nmi(&[0, 1, 2], &[0, 1, 2]).unwrap() - 1.0).abs() < 1e-12);
    }
}
