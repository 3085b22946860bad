//! Training objectives: k-rank instance loss, bag loss, adversarial
//! discriminator/encoder losses, the triplet anchor gate, the max-severity
//! triplet loss, and the total target loss.
//!
//! These are the value-level definitions; the differentiable versions in
//! [`crate::graph`] build the same expressions on the tape and are tested
//! to match these bit for bit.
//!
//! Reductions default to per-batch means so that the triplet weight and
//! learning rates are bag-size invariant; literal summed forms are
//! available behind [`Reduction::Sum`].

use serde::{Deserialize, Serialize};

use crate::datamodel::{Bag, SeverityLabel};
use crate::model::{discriminate, krank_encode_label};
use crate::numerics::{clamp_prob, stable_sigmoid, MlpParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    pub(crate) fn scale(self, n: usize) -> f64 {
        match self {
            Reduction::Mean => 1.0 / n as f64,
            Reduction::Sum => 1.0,
        }
    }
}

/// Triplet weight and hinge margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the triplet term in the total target loss.
    pub alpha: f64,
    /// Hinge margin.
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.01, margin: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.margin < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// One gated triplet anchor: a target instance predicted strictly more
/// severe than its bag label, in a bag whose label is below the ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletGate {
    pub bag_index: usize,
    pub instance_index: usize,
    pub bag_label: SeverityLabel,
    pub predicted: usize,
}

/// Binary cross-entropy of one clamped probability.
#[inline]
pub(crate) fn bce(p: f64, target: f64) -> f64 {
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

fn krank_bce(logit_rows: &[Vec<f64>], target_rows: &[Vec<f64>], reduction: Reduction) -> Result<f64> {
    if logit_rows.is_empty() {
        return Err(Error::InvalidArgument("k-rank loss: empty batch".into()));
    }
    if logit_rows.len() != target_rows.len() {
        return Err(Error::Shape(format!(
            "{} logit rows vs {} target rows",
            logit_rows.len(),
            target_rows.len()
        )));
    }
    let width = logit_rows[0].len();
    let mut total = 0.0;
    for (i, (logits, targets)) in logit_rows.iter().zip(target_rows.iter()).enumerate() {
        if logits.len() != width || targets.len() != width {
            return Err(Error::Shape(format!("row {i} width differs from {width}")));
        }
        for (z, t) in logits.iter().zip(targets.iter()) {
            total += bce(clamp_prob(stable_sigmoid(*z)), *t);
        }
    }
    Ok(total * reduction.scale(logit_rows.len() * width))
}

/// Mean (or sum) over instances and ranks of the binary cross-entropy
/// between `sigmoid(logit)` and the 0/1 target.
pub fn loss_instance_krank(
    logit_rows: &[Vec<f64>],
    target_rows: &[Vec<f64>],
    reduction: Reduction,
) -> Result<f64> {
    krank_bce(logit_rows, target_rows, reduction)
}

/// Same form over bags; targets are the k-rank encodings of the bag labels.
pub fn loss_bag(
    bag_logit_rows: &[Vec<f64>],
    bag_labels: &[SeverityLabel],
    k: usize,
    reduction: Reduction,
) -> Result<f64> {
    if bag_logit_rows.len() != bag_labels.len() {
        return Err(Error::Shape(format!(
            "{} bag logit rows vs {} bag labels",
            bag_logit_rows.len(),
            bag_labels.len()
        )));
    }
    let targets: Vec<Vec<f64>> = bag_labels
        .iter()
        .map(|y| krank_encode_label(y.get(), k))
        .collect::<Result<_>>()?;
    krank_bce(bag_logit_rows, &targets, reduction)
}

/// Domain discriminator objective:
/// `-sum log d(e_s) - sum log(1 - d(e_t))`, divided by `n_s + n_t` under
/// mean reduction.
pub fn loss_disc(
    source_embeddings: &[Vec<f64>],
    target_embeddings: &[Vec<f64>],
    d_params: &MlpParams,
    reduction: Reduction,
) -> Result<f64> {
    if source_embeddings.is_empty() || target_embeddings.is_empty() {
        return Err(Error::InvalidArgument(
            "loss_disc: both domains must contribute embeddings".into(),
        ));
    }
    let mut total = 0.0;
    for e in source_embeddings {
        total += bce(discriminate(d_params, e)?, 1.0);
    }
    for e in target_embeddings {
        total += bce(discriminate(d_params, e)?, 0.0);
    }
    Ok(total * reduction.scale(source_embeddings.len() + target_embeddings.len()))
}

/// Encoder confusion objective: mean (or sum) of `-log d(e_t)`.
pub fn loss_enc(
    target_embeddings: &[Vec<f64>],
    d_params: &MlpParams,
    reduction: Reduction,
) -> Result<f64> {
    if target_embeddings.is_empty() {
        return Err(Error::InvalidArgument("loss_enc: empty target batch".into()));
    }
    let mut total = 0.0;
    for e in target_embeddings {
        total += bce(discriminate(d_params, e)?, 1.0);
    }
    Ok(total * reduction.scale(target_embeddings.len()))
}

/// Anchor gate: instance (i, j) is selected iff `Y_i <= K-1` and the
/// prediction exceeds the bag label. Predictions come from the frozen
/// source instance head applied to current target embeddings.
pub fn select_triplet_anchors(
    bag: &Bag,
    bag_index: usize,
    predicted_labels: &[usize],
    k: usize,
) -> Result<Vec<TripletGate>> {
    if predicted_labels.len() != bag.len() {
        return Err(Error::Shape(format!(
            "bag '{}' has {} instances but {} predictions",
            bag.bag_id,
            bag.len(),
            predicted_labels.len()
        )));
    }
    let y = bag.bag_label.get();
    if y > k.saturating_sub(1) {
        return Ok(Vec::new());
    }
    Ok(predicted_labels
        .iter()
        .enumerate()
        .filter(|(_, pred)| **pred > y)
        .map(|(j, pred)| TripletGate {
            bag_index,
            instance_index: j,
            bag_label: bag.bag_label,
            predicted: *pred,
        })
        .collect())
}

/// Max-severity triplet loss: mean (or sum) over anchors of
/// `max(||e - p_+|| - ||e - p_-|| + margin, 0)` with Euclidean norms.
/// An empty anchor set yields 0.
pub fn loss_triplet(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    margin: f64,
    reduction: Reduction,
) -> Result<f64> {
    if anchors.len() != positives.len() || anchors.len() != negatives.len() {
        return Err(Error::Shape(format!(
            "triplet arity mismatch: {} anchors, {} positives, {} negatives",
            anchors.len(),
            positives.len(),
            negatives.len()
        )));
    }
    if margin < 0.0 {
        return Err(Error::InvalidArgument(format!("margin must be >= 0, got {margin}")));
    }
    if anchors.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((e, p), n) in anchors.iter().zip(positives.iter()).zip(negatives.iter()) {
        if e.len() != p.len() || e.len() != n.len() {
            return Err(Error::Shape("triplet embedding dimension mismatch".into()));
        }
        let dp = dist(e, p);
        let dn = dist(e, n);
        total += (dp - dn + margin).max(0.0);
    }
    Ok(total * reduction.scale(anchors.len()))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Total target objective `l_bag + l_enc + alpha * l_triplet`.
pub fn loss_target_total(l_bag: f64, l_enc: f64, l_triplet: f64, weights: &LossWeights) -> f64 {
    l_bag + l_enc + weights.alpha * l_triplet
}
