//! Evaluation: confusion matrix, accuracy, Macro-F1, Quadratic Weighted
//! Kappa, the PCA projection, and the class-wise cross-domain alignment
//! proxy.

mod export;
mod pca;

pub use export::{write_json, write_pca_csv};
pub use pca::{pca_project, PcaProjection};

use serde::{Deserialize, Serialize};

use crate::numerics::norm;
use crate::{Error, Result};

/// K x K matrix of counts, rows = true label, columns = predicted label
/// (1-based labels).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    /// Row-major counts.
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("confusion matrix needs k >= 2, got {k}")));
        }
        Ok(Self { k, counts: vec![0; k * k] })
    }

    pub fn from_pairs(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::Shape(format!(
                "{} true labels vs {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        if y_true.is_empty() {
            return Err(Error::InvalidArgument("confusion matrix of empty label lists".into()));
        }
        let mut cm = Self::new(k)?;
        for (t, p) in y_true.iter().zip(y_pred.iter()) {
            cm.add(*t, *p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, y_true: usize, y_pred: usize) -> Result<()> {
        if y_true < 1 || y_true > self.k || y_pred < 1 || y_pred > self.k {
            return Err(Error::InvalidArgument(format!(
                "label pair ({y_true}, {y_pred}) outside 1..={}",
                self.k
            )));
        }
        self.counts[(y_true - 1) * self.k + (y_pred - 1)] += 1;
        Ok(())
    }

    #[inline]
    pub fn get(&self, y_true: usize, y_pred: usize) -> u64 {
        self.counts[(y_true - 1) * self.k + (y_pred - 1)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, y_true: usize) -> u64 {
        (1..=self.k).map(|p| self.get(y_true, p)).sum()
    }

    pub fn col_sum(&self, y_pred: usize) -> u64 {
        (1..=self.k).map(|t| self.get(t, y_pred)).sum()
    }
}

/// Accuracy and Macro-F1. A class whose precision and recall are both zero
/// contributes F1 = 0 and stays in the mean over all K classes.
pub fn accuracy_macro_f1(cm: &ConfusionMatrix) -> Result<(f64, f64)> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics of an all-zero confusion matrix".into()));
    }
    let trace: u64 = (1..=cm.k).map(|c| cm.get(c, c)).sum();
    let accuracy = trace as f64 / total as f64;
    let mut f1_sum = 0.0;
    for c in 1..=cm.k {
        let tp = cm.get(c, c) as f64;
        let col = cm.col_sum(c) as f64;
        let row = cm.row_sum(c) as f64;
        let precision = if col > 0.0 { tp / col } else { 0.0 };
        let recall = if row > 0.0 { tp / row } else { 0.0 };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok((accuracy, f1_sum / cm.k as f64))
}

/// Quadratic Weighted Kappa with weights `w_ij = (i-j)^2 / (K-1)^2` and
/// chance matrix `E = outer(row marginals, col marginals) / n`:
/// `kappa = 1 - sum(w*O) / sum(w*E)`. Returns `None` when the weighted
/// chance agreement is zero (degenerate marginals), rather than NaN.
pub fn qwk(cm: &ConfusionMatrix) -> Result<Option<f64>> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::InvalidArgument("qwk of an all-zero confusion matrix".into()));
    }
    let denom = ((cm.k - 1) * (cm.k - 1)) as f64;
    let mut wo = 0.0;
    let mut we = 0.0;
    for t in 1..=cm.k {
        let row = cm.row_sum(t) as f64;
        for p in 1..=cm.k {
            let w = ((t as f64 - p as f64) * (t as f64 - p as f64)) / denom;
            wo += w * cm.get(t, p) as f64;
            we += w * row * cm.col_sum(p) as f64 / n as f64;
        }
    }
    if we == 0.0 {
        return Ok(None);
    }
    Ok(Some(1.0 - wo / we))
}

/// Instance- or bag-level evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    /// Rows = true label, columns = predicted label.
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `None` when chance agreement degenerates.
    pub qwk: Option<f64>,
    pub count: u64,
}

impl EvalReport {
    pub fn from_pairs(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<Self> {
        let cm = ConfusionMatrix::from_pairs(y_true, y_pred, k)?;
        Self::from_confusion(&cm)
    }

    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let (accuracy, macro_f1) = accuracy_macro_f1(cm)?;
        let kappa = qwk(cm)?;
        Ok(Self {
            k: cm.k,
            confusion: (1..=cm.k)
                .map(|t| (1..=cm.k).map(|p| cm.get(t, p)).collect())
                .collect(),
            accuracy,
            macro_f1,
            qwk: kappa,
            count: cm.total(),
        })
    }
}

/// Mean class-wise distance between domain centroids in embedding space.
/// Classes with no instances in one of the domains are excluded from the
/// mean and listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScore {
    /// Per-class centroid distance; `None` for excluded classes. Index 0
    /// is class 1.
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    pub excluded_classes: Vec<usize>,
}

/// `source_by_class[c]` and `target_by_class[c]` hold the embeddings of
/// class `c + 1` in each domain.
pub fn alignment_score(
    source_by_class: &[Vec<Vec<f64>>],
    target_by_class: &[Vec<Vec<f64>>],
) -> Result<AlignmentScore> {
    if source_by_class.len() != target_by_class.len() {
        return Err(Error::Shape(format!(
            "{} source classes vs {} target classes",
            source_by_class.len(),
            target_by_class.len()
        )));
    }
    let mut per_class = Vec::with_capacity(source_by_class.len());
    let mut excluded = Vec::new();
    let mut sum = 0.0;
    let mut shared = 0usize;
    for (c, (s, t)) in source_by_class.iter().zip(target_by_class.iter()).enumerate() {
        if s.is_empty() || t.is_empty() {
            per_class.push(None);
            excluded.push(c + 1);
            continue;
        }
        let cs = centroid(s);
        let ct = centroid(t);
        let diff: Vec<f64> = cs.iter().zip(ct.iter()).map(|(a, b)| a - b).collect();
        let d = norm(&diff);
        per_class.push(Some(d));
        sum += d;
        shared += 1;
    }
    if shared == 0 {
        return Err(Error::InvalidArgument(
            "alignment_score: no class present in both domains".into(),
        ));
    }
    Ok(AlignmentScore { per_class, mean: sum / shared as f64, excluded_classes: excluded })
}

fn centroid(points: &[Vec<f64>]) -> Vec<f64> {
    let d = points[0].len();
    let mut c = vec![0.0; d];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(p.iter()) {
            *ci += pi;
        }
    }
    for ci in c.iter_mut() {
        *ci /= points.len() as f64;
    }
    c
}
