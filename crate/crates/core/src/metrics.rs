//! Discrimination and calibration metrics for imbalanced binary outcomes.
//!
//! AUC follows the Mann–Whitney convention (ties count one half). The Brier
//! score is reported separately within each outcome class so that a model
//! cannot hide poor minority-class calibration behind the majority class:
//!
//! ```text
//! BS_j = (1/n_j) * sum over rows with y = j of (y - p1)^2
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("both outcome classes must be present")]
    OneClassOnly,
    #[error("empty input")]
    EmptyInput,
    #[error("labels and predictions have different lengths ({labels} vs {preds})")]
    LengthMismatch { labels: usize, preds: usize },
}

/// Predicted probability of class 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbPrediction {
    pub p1: f64,
}

impl ProbPrediction {
    pub fn new(p1: f64) -> Self {
        debug_assert!((0.0..=1.0).contains(&p1), "probability out of range: {p1}");
        Self { p1 }
    }
}

/// AUC plus per-class Brier scores for one evaluation partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub auc: f64,
    pub brier0: f64,
    pub brier1: f64,
    pub n0: usize,
    pub n1: usize,
}

fn check_lengths(labels: &[u8], preds: &[ProbPrediction]) -> Result<(), MetricsError> {
    if labels.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            preds: preds.len(),
        });
    }
    Ok(())
}

fn check_both_classes(labels: &[u8]) -> Result<(usize, usize), MetricsError> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(MetricsError::OneClassOnly);
    }
    Ok((n0, n1))
}

/// Area under the ROC curve via midranks: equal to
/// `(#concordant + 0.5 * #tied) / (n0 * n1)` over all class-0/class-1 pairs.
pub fn auc(labels: &[u8], preds: &[ProbPrediction]) -> Result<f64, MetricsError> {
    check_lengths(labels, preds)?;
    let (n0, n1) = check_both_classes(labels)?;

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| preds[a].p1.partial_cmp(&preds[b].p1).unwrap());

    // Midranks over tied score groups; 1-based ranks.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && preds[order[j]].p1 == preds[order[i]].p1 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let n1f = n1 as f64;
    Ok((rank_sum_pos - n1f * (n1f + 1.0) / 2.0) / (n0 as f64 * n1f))
}

/// Brier score within each class: `(bs0, bs1)`.
pub fn brier_per_class(
    labels: &[u8],
    preds: &[ProbPrediction],
) -> Result<(f64, f64), MetricsError> {
    check_lengths(labels, preds)?;
    let (n0, n1) = check_both_classes(labels)?;
    let mut sum0 = 0.0;
    let mut sum1 = 0.0;
    for (&y, p) in labels.iter().zip(preds) {
        let err = (y as f64 - p.p1).powi(2);
        if y == 0 {
            sum0 += err;
        } else {
            sum1 += err;
        }
    }
    Ok((sum0 / n0 as f64, sum1 / n1 as f64))
}

/// Overall Brier score, the class-size-weighted average of the per-class
/// scores.
pub fn brier_overall(labels: &[u8], preds: &[ProbPrediction]) -> Result<f64, MetricsError> {
    check_lengths(labels, preds)?;
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let sum: f64 = labels
        .iter()
        .zip(preds)
        .map(|(&y, p)| (y as f64 - p.p1).powi(2))
        .sum();
    Ok(sum / labels.len() as f64)
}

/// Threshold probabilities into hard labels: 1 iff `p1 >= cutoff`.
pub fn threshold_classify(preds: &[ProbPrediction], cutoff: f64) -> Vec<u8> {
    preds.iter().map(|p| (p.p1 >= cutoff) as u8).collect()
}

/// Full evaluation of one partition.
pub fn evaluate(labels: &[u8], preds: &[ProbPrediction]) -> Result<EvaluationReport, MetricsError> {
    let (n0, n1) = check_both_classes(labels)?;
    let auc = auc(labels, preds)?;
    let (brier0, brier1) = brier_per_class(labels, preds)?;
    Ok(EvaluationReport {
        auc,
        brier0,
        brier1,
        n0,
        n1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn preds(ps: &[f64]) -> Vec<ProbPrediction> {
        ps.iter().map(|&p| ProbPrediction::new(p)).collect()
    }

    /// Pairwise Mann–Whitney count, independent of the ranking implementation.
    fn auc_brute_force(labels: &[u8], preds: &[ProbPrediction]) -> f64 {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi != 1 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                pairs += 1.0;
                if preds[i].p1 > preds[j].p1 {
                    concordant += 1.0;
                } else if preds[i].p1 == preds[j].p1 {
                    concordant += 0.5;
                }
            }
        }
        concordant / pairs
    }

    #[test]
    fn auc_perfect_separation() {
        let labels = [1u8, 0];
        assert_abs_diff_eq!(auc(&labels, &preds(&[0.9, 0.1])).unwrap(), 1.0);
    }

    #[test]
    fn auc_all_tied_scores() {
        let labels = [1u8, 0, 1, 0];
        assert_abs_diff_eq!(auc(&labels, &preds(&[0.3; 4])).unwrap(), 0.5);
    }

    #[test]
    fn auc_four_pair_enumeration() {
        // 4 pairs: (0.8,0.6) c, (0.8,0.2) c, (0.4,0.6) d, (0.4,0.2) c -> 3/4.
        let labels = [1u8, 1, 0, 0];
        let p = preds(&[0.8, 0.4, 0.6, 0.2]);
        assert_abs_diff_eq!(auc(&labels, &p).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(auc_brute_force(&labels, &p), 0.75, epsilon = 1e-15);
    }

    #[test]
    fn auc_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha12Rng::seed_from_u64(2024);
        for _ in 0..50 {
            let labels: Vec<u8> = (0..50).map(|_| rng.random_range(0..2) as u8).collect();
            if labels.iter().all(|&y| y == 0) || labels.iter().all(|&y| y == 1) {
                continue;
            }
            // Coarse grid so score ties actually occur.
            let p: Vec<ProbPrediction> = (0..50)
                .map(|_| ProbPrediction::new(rng.random_range(0..10) as f64 / 10.0))
                .collect();
            assert_abs_diff_eq!(
                auc(&labels, &p).unwrap(),
                auc_brute_force(&labels, &p),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn auc_requires_both_classes() {
        assert!(matches!(
            auc(&[1, 1], &preds(&[0.1, 0.2])),
            Err(MetricsError::OneClassOnly)
        ));
    }

    #[test]
    fn brier_per_class_arithmetic() {
        let labels = [1u8, 1, 0];
        let p = preds(&[0.9, 0.8, 0.0]);
        let (bs0, bs1) = brier_per_class(&labels, &p).unwrap();
        assert_abs_diff_eq!(bs1, 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(bs0, 0.0);
    }

    #[test]
    fn brier_perfect_and_constant() {
        let labels = [1u8, 0];
        assert_eq!(brier_per_class(&labels, &preds(&[1.0, 0.0])).unwrap(), (0.0, 0.0));
        assert_eq!(
            brier_per_class(&labels, &preds(&[0.5, 0.5])).unwrap(),
            (0.25, 0.25)
        );
        assert_abs_diff_eq!(brier_overall(&labels, &preds(&[1.0, 0.0])).unwrap(), 0.0);
        assert_abs_diff_eq!(brier_overall(&labels, &preds(&[0.5, 0.5])).unwrap(), 0.25);
    }

    #[test]
    fn brier_decomposition_on_random_vector() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let labels: Vec<u8> = (0..50).map(|_| (rng.random::<f64>() < 0.3) as u8).collect();
        let p: Vec<ProbPrediction> = (0..50)
            .map(|_| ProbPrediction::new(rng.random::<f64>()))
            .collect();
        if labels.iter().any(|&y| y == 0) && labels.iter().any(|&y| y == 1) {
            let (bs0, bs1) = brier_per_class(&labels, &p).unwrap();
            let n1 = labels.iter().filter(|&&y| y == 1).count() as f64;
            let n0 = labels.len() as f64 - n1;
            let weighted = (n0 * bs0 + n1 * bs1) / (n0 + n1);
            assert_abs_diff_eq!(
                brier_overall(&labels, &p).unwrap(),
                weighted,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn threshold_at_half_is_inclusive() {
        let p = preds(&[0.5, 0.49, 0.0]);
        assert_eq!(threshold_classify(&p, 0.5), vec![1, 0, 0]);
        assert_eq!(threshold_classify(&p, 0.0), vec![1, 1, 1]);
    }

    #[test]
    fn auc_invariant_under_increasing_transform() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let labels: Vec<u8> = (0..40).map(|_| rng.random_range(0..2) as u8).collect();
        let raw: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let a = auc(&labels, &preds(&raw)).unwrap();
        let squeezed: Vec<f64> = raw.iter().map(|&x| 1.0 / (1.0 + (-3.0 * x).exp())).collect();
        let b = auc(&labels, &preds(&squeezed)).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn auc_complement_sums_to_one_without_ties() {
        let labels = [0u8, 1, 0, 1, 1];
        let raw = [0.11, 0.52, 0.33, 0.74, 0.95];
        let flipped: Vec<f64> = raw.iter().map(|&x| 1.0 - x).collect();
        let a = auc(&labels, &preds(&raw)).unwrap();
        let b = auc(&labels, &preds(&flipped)).unwrap();
        assert_abs_diff_eq!(a + b, 1.0, epsilon = 1e-12);
    }
}
