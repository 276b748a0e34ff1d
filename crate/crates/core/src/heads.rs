//! Classifier heads and their losses.
//!
//! The vanilla head maps `N` logits to one probability per class. The
//! Score-Softmax head maps `N·G` logits to an `N×G` [`ScoreMatrix`]: each
//! class gets its own distribution over the score levels `1..=G`, and the
//! class decision statistic is the expected level ([`weighted_scores`]).

use serde::{Deserialize, Serialize};

use crate::dgss::SupervisionMatrix;
use crate::error::{Error, Result};
use crate::tensor::{softmax_in_place, Tape, Tensor, Var};

const ROW_SUM_TOL: f64 = 1e-6;

/// Score levels `1, 2, …, G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreTable {
    g: usize,
}

impl ScoreTable {
    pub fn new(g: usize) -> Result<Self> {
        if g < 2 {
            return Err(Error::param(
                "G",
                format!("score table needs at least 2 levels, got {g}"),
            ));
        }
        Ok(ScoreTable { g })
    }

    pub fn levels_count(&self) -> usize {
        self.g
    }

    pub fn levels(&self) -> Vec<f64> {
        (1..=self.g).map(|j| j as f64).collect()
    }
}

/// `N×G` row-stochastic matrix of per-class score-level weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    n: usize,
    g: usize,
    cells: Vec<f64>,
}

impl ScoreMatrix {
    /// Validates shape, range and row sums (within 1e-6).
    pub fn new(n: usize, g: usize, cells: Vec<f64>) -> Result<Self> {
        if n == 0 || g == 0 || cells.len() != n * g {
            return Err(Error::Construction {
                shape: vec![n, g],
                expected: n * g,
                got: cells.len(),
            });
        }
        for (i, row) in cells.chunks(g).enumerate() {
            if let Some(&bad) = row.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::param(
                    "score matrix",
                    format!("row {i} has entry {bad} outside [0, 1]"),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::param("score matrix", format!("row {i} sums to {sum}")));
            }
        }
        Ok(ScoreMatrix { n, g, cells })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let g = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != g) {
            return Err(Error::param("score matrix", "ragged rows"));
        }
        Self::new(rows.len(), g, rows.concat())
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.g
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.cells[i * self.g..(i + 1) * self.g]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.cells.chunks(self.g)
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }
}

/// Per-class weighted scores `t_i ∈ [1, G]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores(pub Vec<f64>);

impl ClassScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Numerically stable softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Probability floor used by [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// `-ln(probs[label])`, with the probability clamped below at 1e-12.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = *probs
        .get(label)
        .ok_or(Error::LabelOutOfRange { label, n: probs.len() })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Vanilla label smoothing: `(1-eps)` one-hot plus `eps/N` uniform.
pub fn smooth_labels(label: usize, n: usize, eps: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::param("eps", format!("{eps} is outside [0, 1)")));
    }
    if label >= n {
        return Err(Error::LabelOutOfRange { label, n });
    }
    let off = eps / n as f64;
    let mut v = vec![off; n];
    v[label] = 1.0 - eps + off;
    Ok(v)
}

/// Softmax inside each row of an `N×G` logit matrix.
pub fn grouped_softmax(logits: &Tensor) -> Result<ScoreMatrix> {
    let &[n, g] = logits.shape() else {
        return Err(Error::ShapeMismatch {
            op: "grouped_softmax",
            lhs: logits.shape().to_vec(),
            rhs: vec![0, 0],
        });
    };
    let mut cells = logits.data().to_vec();
    for row in cells.chunks_mut(g) {
        softmax_in_place(row);
    }
    ScoreMatrix::new(n, g, cells)
}

/// `t_i = Σ_j j·s_ij`.
pub fn weighted_scores(s: &ScoreMatrix, table: &ScoreTable) -> Result<ClassScores> {
    if s.g != table.g {
        return Err(Error::ShapeMismatch {
            op: "weighted_scores",
            lhs: vec![s.n, s.g],
            rhs: vec![table.g],
        });
    }
    Ok(ClassScores(s.rows().map(expected_level).collect()))
}

pub(crate) fn expected_level(row: &[f64]) -> f64 {
    row.iter().enumerate().map(|(j, w)| (j + 1) as f64 * w).sum()
}

/// Index of the highest score; ties go to the lowest index.
pub fn predict(t: &ClassScores) -> Result<usize> {
    argmax(&t.0).ok_or(Error::Empty("predict"))
}

/// The `k` highest-scoring classes, best first (stable for ties).
pub fn top_k(t: &ClassScores, k: usize) -> Result<Vec<usize>> {
    if t.0.is_empty() {
        return Err(Error::Empty("predict"));
    }
    let mut idx: Vec<usize> = (0..t.0.len()).collect();
    idx.sort_by(|&a, &b| t.0[b].total_cmp(&t.0[a]));
    idx.truncate(k);
    Ok(idx)
}

pub(crate) fn argmax(v: &[f64]) -> Option<usize> {
    if v.is_empty() {
        return None;
    }
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    Some(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    /// `sqrt(Σ(y-s)² + 1e-12)`.
    Frobenius,
    /// `Σ(y-s)² / (N·G)`.
    #[default]
    Squared,
}

const FROBENIUS_GUARD: f64 = 1e-12;

/// Distance between a supervision matrix and a predicted score matrix.
pub fn score_loss(y: &SupervisionMatrix, s: &ScoreMatrix, form: LossForm) -> Result<f64> {
    if y.classes() != s.n || y.levels() != s.g {
        return Err(Error::ShapeMismatch {
            op: "score_loss",
            lhs: vec![y.classes(), y.levels()],
            rhs: vec![s.n, s.g],
        });
    }
    let sq: f64 = y.cells().iter().zip(&s.cells).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(match form {
        LossForm::Frobenius => (sq + FROBENIUS_GUARD).sqrt(),
        LossForm::Squared => sq / (s.n * s.g) as f64,
    })
}

// ---------------------------------------------------------------------------
// Tape versions used for training.

/// Groups the last axis of `logits` (`[..., N·G]` or `[N, G]`) into
/// `[..., N, G]` and applies softmax inside each group.
pub fn grouped_softmax_var(tape: &mut Tape, logits: Var, n: usize, g: usize) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    let last = shape.last().copied().unwrap_or(0);
    let grouped = if shape.len() >= 2 && shape[shape.len() - 2..] == [n, g] {
        shape
    } else if last == n * g {
        let mut s = shape[..shape.len() - 1].to_vec();
        s.extend([n, g]);
        s
    } else {
        return Err(Error::ShapeMismatch {
            op: "grouped_softmax",
            lhs: shape,
            rhs: vec![n, g],
        });
    };
    let r = tape.reshape(logits, grouped)?;
    tape.softmax_last(r)
}

/// Weighted scores over the last axis of a `[..., G]` score tensor.
pub fn weighted_scores_var(tape: &mut Tape, s: Var, table: &ScoreTable) -> Result<Var> {
    let shape = tape.value(s).shape().to_vec();
    if shape.last() != Some(&table.g) {
        return Err(Error::ShapeMismatch {
            op: "weighted_scores",
            lhs: shape,
            rhs: vec![table.g],
        });
    }
    let rows = tape.value(s).len() / table.g;
    let flat = tape.reshape(s, vec![rows, table.g])?;
    let levels = tape.leaf(Tensor::new(vec![table.g, 1], table.levels())?);
    let t = tape.matmul(flat, levels)?;
    let mut out_shape = shape;
    out_shape.pop();
    if out_shape.is_empty() {
        out_shape.push(1);
    }
    tape.reshape(t, out_shape)
}

/// Score loss on the tape. For a batch `[B, N, G]` the Frobenius form is
/// computed per sample and averaged; the squared form is the mean over all
/// cells.
pub fn score_loss_var(tape: &mut Tape, y: Var, s: Var, form: LossForm) -> Result<Var> {
    let (ys, ss) = (tape.value(y).shape().to_vec(), tape.value(s).shape().to_vec());
    if ys != ss {
        return Err(Error::ShapeMismatch {
            op: "score_loss",
            lhs: ys,
            rhs: ss,
        });
    }
    let d = tape.sub(y, s)?;
    let sq = tape.mul(d, d)?;
    match form {
        LossForm::Squared => tape.mean_all(sq),
        LossForm::Frobenius => {
            let batch = if ss.len() >= 3 { ss[0] } else { 1 };
            let per = tape.value(sq).len() / batch;
            let flat = tape.reshape(sq, vec![batch, per])?;
            let sums = tape.reduce(crate::tensor::ReduceOp::Sum, flat, 1)?;
            let guard = tape.leaf(Tensor::scalar(FROBENIUS_GUARD)?);
            let guarded = tape.add(sums, guard)?;
            let norms = tape.unary(crate::tensor::UnaryOp::Sqrt, guarded)?;
            tape.mean_all(norms)
        }
    }
}

/// Batch cross-entropy `-(1/B) Σ_b Σ_i y_bi · log_softmax(p_b)_i` against
/// (possibly soft) targets.
pub fn cross_entropy_var(tape: &mut Tape, logits: Var, targets: Var) -> Result<Var> {
    let (ls, ts) = (
        tape.value(logits).shape().to_vec(),
        tape.value(targets).shape().to_vec(),
    );
    if ls != ts {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            lhs: ls,
            rhs: ts,
        });
    }
    let batch = if ls.len() >= 2 { ls[0] } else { 1 };
    let logp = tape.log_softmax_last(logits)?;
    let prod = tape.mul(logp, targets)?;
    let total = tape.sum_all(prod)?;
    tape.scale(total, -1.0 / batch as f64)
}
