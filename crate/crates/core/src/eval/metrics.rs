use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// How the ranking metrics combine classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankAveraging {
    /// One pooled curve over the one-vs-rest binarized score matrix.
    #[default]
    Micro,
    /// Mean of per-class curves over classes where the curve is defined.
    Macro,
}

/// The six evaluation metrics, all in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// States the averaging used for every field.
    pub averaging: String,
    pub aupr: f64,
    pub auc: f64,
    pub acc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Classes left out of the macro means.
    pub skipped_classes: Vec<usize>,
}

/// `(score, is_positive)` sorted by descending score.
fn ranked(scores: impl Iterator<Item = (f64, bool)>) -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = scores.collect();
    v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    v
}

/// Splits a descending ranking into runs of equal score, yielding
/// `(positives, negatives)` per run.
fn tie_groups(ranked: &[(f64, bool)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < ranked.len() {
        let mut j = i;
        let (mut p, mut n) = (0, 0);
        while j < ranked.len() && ranked[j].0 == ranked[i].0 {
            if ranked[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        out.push((p, n));
        i = j;
    }
    out
}

/// ROC AUC as the Mann-Whitney statistic with midranks for ties. `None`
/// when either class is empty.
pub fn auc_score(ranked: &[(f64, bool)]) -> Option<f64> {
    let groups = tie_groups(ranked);
    let pos: usize = groups.iter().map(|g| g.0).sum();
    let neg: usize = groups.iter().map(|g| g.1).sum();
    if pos == 0 || neg == 0 {
        return None;
    }
    // Walking from the top: each positive beats every negative ranked
    // strictly below it and ties half of its own group's negatives.
    let mut neg_above = 0usize;
    let mut wins = 0.0;
    for &(p, n) in &groups {
        wins += p as f64 * ((neg - neg_above - n) as f64 + 0.5 * n as f64);
        neg_above += n;
    }
    Some(wins / (pos as f64 * neg as f64))
}

/// Step-integrated precision-recall area, thresholding at every distinct
/// score. `None` without positives.
pub fn aupr_score(ranked: &[(f64, bool)]) -> Option<f64> {
    let groups = tie_groups(ranked);
    let pos: usize = groups.iter().map(|g| g.0).sum();
    if pos == 0 {
        return None;
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for &(p, n) in &groups {
        tp += p;
        fp += n;
        let recall = tp as f64 / pos as f64;
        area += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
    }
    Some(area)
}

/// Index of the largest entry, ties to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Scores `K × R` against integer labels. The predicted class is the row
/// argmax with ties to the lowest index.
pub fn compute_metrics(
    scores: &Tensor,
    labels: &[usize],
    averaging: RankAveraging,
) -> Result<MetricReport> {
    let (k, r) = scores.shape();
    if labels.len() != k {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} labels for {k} rows", labels.len()),
        ));
    }
    if k == 0 || r < 2 {
        return Err(Error::Validation(format!(
            "need samples and at least 2 classes, got {k} × {r}"
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= r) {
        return Err(Error::Validation(format!(
            "label {y} out of range for {r} classes"
        )));
    }
    if !scores.is_finite() {
        return Err(Error::NonFinite("scores".into()));
    }

    let present: Vec<bool> = (0..r).map(|c| labels.contains(&c)).collect();
    let skipped: Vec<usize> = (0..r).filter(|&c| !present[c]).collect();
    if !skipped.is_empty() {
        log::info!("classes absent from labels, skipped in macro means: {skipped:?}");
    }

    let (aupr, auc) = match averaging {
        RankAveraging::Micro => {
            let flat = ranked(
                (0..k)
                    .flat_map(|i| (0..r).map(move |c| (i, c)))
                    .map(|(i, c)| (scores.get(i, c), labels[i] == c)),
            );
            // With at least two classes every row adds one positive and one
            // negative entry, so both curves are defined.
            (
                aupr_score(&flat).expect("positives exist"),
                auc_score(&flat).expect("both classes exist"),
            )
        }
        RankAveraging::Macro => {
            let (mut aupr_sum, mut auc_sum, mut defined) = (0.0, 0.0, 0usize);
            for c in (0..r).filter(|&c| present[c]) {
                let col = ranked((0..k).map(|i| (scores.get(i, c), labels[i] == c)));
                match (aupr_score(&col), auc_score(&col)) {
                    (Some(p), Some(a)) => {
                        aupr_sum += p;
                        auc_sum += a;
                        defined += 1;
                    }
                    _ => log::warn!("class {c} has a single label value; AUC undefined, skipped"),
                }
            }
            if defined == 0 {
                return Err(Error::Validation(
                    "no class has both positive and negative samples".into(),
                ));
            }
            (aupr_sum / defined as f64, auc_sum / defined as f64)
        }
    };

    let predicted: Vec<usize> = (0..k).map(|i| argmax(scores.row(i))).collect();
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    let (mut f1, mut precision, mut recall) = (0.0, 0.0, 0.0);
    let classes = r - skipped.len();
    for c in (0..r).filter(|&c| present[c]) {
        let tp = predicted
            .iter()
            .zip(labels)
            .filter(|&(&p, &y)| p == c && y == c)
            .count() as f64;
        let predicted_c = predicted.iter().filter(|&&p| p == c).count() as f64;
        let support = labels.iter().filter(|&&y| y == c).count() as f64;
        let p = if predicted_c > 0.0 {
            tp / predicted_c
        } else {
            0.0
        };
        let rc = tp / support;
        precision += p;
        recall += rc;
        f1 += if p + rc > 0.0 {
            2.0 * p * rc / (p + rc)
        } else {
            0.0
        };
    }
    let averaging = match averaging {
        RankAveraging::Micro => {
            "aupr/auc micro one-vs-rest; f1/precision/recall macro over present classes"
        }
        RankAveraging::Macro => {
            "aupr/auc macro one-vs-rest; f1/precision/recall macro over present classes"
        }
    };
    Ok(MetricReport {
        averaging: averaging.into(),
        aupr,
        auc,
        acc: correct as f64 / k as f64,
        f1: f1 / classes as f64,
        precision: precision / classes as f64,
        recall: recall / classes as f64,
        skipped_classes: skipped,
    })
}

/// Per-metric mean and sample standard deviation across folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub folds: usize,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl MetricSummary {
    /// Field order of `mean` and `std`.
    pub const FIELDS: [&'static str; 6] = ["aupr", "auc", "acc", "f1", "precision", "recall"];

    pub fn new(reports: &[MetricReport]) -> Option<Self> {
        if reports.is_empty() {
            return None;
        }
        let rows: Vec<[f64; 6]> = reports
            .iter()
            .map(|m| [m.aupr, m.auc, m.acc, m.f1, m.precision, m.recall])
            .collect();
        let n = rows.len() as f64;
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for j in 0..6 {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            if rows.len() > 1 {
                let ss: f64 = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum();
                std[j] = (ss / (n - 1.0)).sqrt();
            }
        }
        Some(MetricSummary {
            folds: rows.len(),
            mean,
            std,
        })
    }
}
