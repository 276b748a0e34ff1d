//! Classification metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(predictions, labels)?;
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn check_lengths(predictions: &[usize], labels: &[usize]) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            lhs: vec![predictions.len()],
            rhs: vec![labels.len()],
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("accuracy"));
    }
    Ok(())
}

/// `N×N` counts; rows are true classes, columns predicted classes.
pub fn confusion(predictions: &[usize], labels: &[usize], n: usize) -> Result<Vec<Vec<u64>>> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "confusion",
            lhs: vec![predictions.len()],
            rhs: vec![labels.len()],
        });
    }
    let mut m = vec![vec![0u64; n]; n];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= n || l >= n {
            return Err(Error::LabelOutOfRange { label: p.max(l), n });
        }
        m[l][p] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Roc,
    Pr,
}

/// One-vs-rest curve for `class`.
///
/// Thresholds run over the distinct scores from high to low; a sample is
/// called positive when its score is at or above the threshold. ROC points
/// are `(FPR, TPR)` and start at `(0, 0)`; PR points are
/// `(recall, precision)`.
pub fn curve_points(kind: CurveKind, scores: &[f64], labels: &[usize], class: usize) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "curve_points",
            lhs: vec![scores.len()],
            rhs: vec![labels.len()],
        });
    }
    let positives = labels.iter().filter(|&&l| l == class).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::param(
            "labels",
            format!("class {class} needs both positive and negative samples"),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    if kind == CurveKind::Roc {
        points.push((0.0, 0.0));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / positives as f64;
        match kind {
            CurveKind::Roc => points.push((fp as f64 / negatives as f64, tpr)),
            CurveKind::Pr => points.push((tpr, tp as f64 / (tp + fp) as f64)),
        }
    }
    Ok(points)
}

/// Trapezoid area under a point list.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub samples: usize,
    pub top1: f64,
    pub confusion: Vec<Vec<u64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// One-vs-rest ROC AUC per class; `None` where a class is absent.
    pub roc_auc: Vec<Option<f64>>,
}

impl MetricsBundle {
    /// `class_scores[k][i]` is the decision statistic of class `i` for
    /// sample `k` (weighted score or probability).
    pub fn compute(predictions: &[usize], labels: &[usize], n: usize, class_scores: &[Vec<f64>]) -> Result<Self> {
        let top1 = accuracy(predictions, labels)?;
        let confusion = confusion(predictions, labels, n)?;
        let mut precision = vec![0.0; n];
        let mut recall = vec![0.0; n];
        for c in 0..n {
            let tp = confusion[c][c] as f64;
            let predicted: u64 = (0..n).map(|r| confusion[r][c]).sum();
            let actual: u64 = confusion[c].iter().sum();
            precision[c] = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            recall[c] = if actual > 0 { tp / actual as f64 } else { 0.0 };
        }
        let roc_auc = (0..n)
            .map(|c| {
                let scores: Vec<f64> = class_scores.iter().map(|s| s[c]).collect();
                curve_points(CurveKind::Roc, &scores, labels, c).ok().map(|p| auc(&p))
            })
            .collect();
        Ok(MetricsBundle {
            samples: labels.len(),
            top1,
            confusion,
            precision,
            recall,
            roc_auc,
        })
    }

    pub fn confusion_csv(&self) -> String {
        let n = self.confusion.len();
        let mut out = String::from("true\\pred");
        for c in 0..n {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (r, row) in self.confusion.iter().enumerate() {
            let _ = write!(out, "{r}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn curve_csv(kind: CurveKind, points: &[(f64, f64)]) -> String {
    let mut out = String::from(match kind {
        CurveKind::Roc => "fpr,tpr\n",
        CurveKind::Pr => "recall,precision\n",
    });
    for (x, y) in points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclineRow {
    pub p: f64,
    pub accuracy: f64,
    pub decline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclineTable {
    pub clean_accuracy: f64,
    pub rows: Vec<DeclineRow>,
    pub warnings: Vec<String>,
}

/// Accuracy decline `clean − attacked` per attack strength. Rows are kept
/// in the given order; a decline that shrinks as `p` grows is reported as
/// a warning.
pub fn decline_summary(clean: f64, attacked_by_p: &[(f64, f64)]) -> DeclineTable {
    let rows: Vec<DeclineRow> = attacked_by_p
        .iter()
        .map(|&(p, acc)| DeclineRow {
            p,
            accuracy: acc,
            decline: clean - acc,
        })
        .collect();
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.p.total_cmp(&b.p));
    let warnings = sorted
        .windows(2)
        .filter(|w| w[1].decline < w[0].decline)
        .map(|w| {
            format!(
                "decline is not monotone: p={} gives {:.4} but p={} gives {:.4}",
                w[0].p, w[0].decline, w[1].p, w[1].decline
            )
        })
        .collect();
    DeclineTable {
        clean_accuracy: clean,
        rows,
        warnings,
    }
}
