//! Brute-force ranking metrics. Quadratic in the sample count.

/// ROC AUC by comparing every positive/negative pair; ties count one half.
/// `None` when either class is empty.
pub fn auc_pairwise(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &sp) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sn) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1.0;
            if sp > sn {
                wins += 1.0;
            } else if sp == sn {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Step-integrated area under the precision-recall curve. Every distinct
/// score is tried as a threshold (`score ≥ t` predicts positive), counting
/// hits from scratch each time; area is `Σ (R_i − R_{i−1}) P_i` over
/// thresholds in descending order. `None` without positives.
pub fn aupr_threshold_enumeration(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for &t in &thresholds {
        let mut tp = 0usize;
        let mut fp = 0usize;
        for (s, &p) in scores.iter().zip(positive) {
            if *s >= t {
                if p {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / n_pos as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Some(area)
}

/// Micro-averaged `(AUPR, AUC)` over the one-vs-rest binarization of a
/// `K × R` score matrix against integer labels.
pub fn metric_oracle(scores: &[Vec<f64>], labels: &[usize]) -> (Option<f64>, Option<f64>) {
    assert_eq!(scores.len(), labels.len());
    let mut flat = Vec::new();
    let mut pos = Vec::new();
    for (row, &y) in scores.iter().zip(labels) {
        for (r, &s) in row.iter().enumerate() {
            flat.push(s);
            pos.push(r == y);
        }
    }
    (
        aupr_threshold_enumeration(&flat, &pos),
        auc_pairwise(&flat, &pos),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let s = [0.9, 0.8, 0.2, 0.1];
        let p = [true, true, false, false];
        assert_eq!(auc_pairwise(&s, &p), Some(1.0));
        assert_eq!(aupr_threshold_enumeration(&s, &p), Some(1.0));
    }

    #[test]
    fn all_ties() {
        let s = [0.5; 6];
        let p = [true, false, false, true, false, false];
        assert_eq!(auc_pairwise(&s, &p), Some(0.5));
        // One threshold: recall 1 at precision 1/3.
        assert!((aupr_threshold_enumeration(&s, &p).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_undefined() {
        assert_eq!(auc_pairwise(&[0.1, 0.2], &[true, true]), None);
        assert_eq!(
            aupr_threshold_enumeration(&[0.1, 0.2], &[false, false]),
            None
        );
    }
}
