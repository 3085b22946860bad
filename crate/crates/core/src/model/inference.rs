//! Dataset-level inference: instance and bag predictions, embedding
//! collection, and evaluation reports.
//!
//! The inference path on target data is always the frozen source instance
//! head composed with the target encoder; bag predictions run frozen
//! tokens and bag heads over the same embeddings.

use crate::datamodel::{Domain, DomainDataset};
use crate::metrics::EvalReport;
use crate::numerics::{clamp_prob, mlp_apply, stable_sigmoid, MlpParams};
use crate::{Error, Result};

use super::{bag_logits, krank_decode, predict_from_embedding, ModelState};

/// Encoder used for a dataset: source data goes through the source
/// encoder, target data through the target encoder.
pub fn encoder_for_domain(state: &ModelState, domain: Domain) -> &MlpParams {
    match domain {
        Domain::Source => &state.source_encoder,
        Domain::Target => &state.target_encoder,
    }
}

/// Embed every instance of a dataset with the domain's encoder, in
/// dataset order.
pub fn embed_dataset(state: &ModelState, ds: &DomainDataset) -> Result<Vec<Vec<f64>>> {
    let encoder = encoder_for_domain(state, ds.domain);
    let mut out = Vec::with_capacity(ds.n_instances());
    for (_, _, inst) in ds.instances() {
        out.push(mlp_apply(encoder, &inst.features)?);
    }
    Ok(out)
}

/// Severity prediction for one instance.
pub fn predict_instance_label(state: &ModelState, domain: Domain, features: &[f64]) -> Result<usize> {
    let e = mlp_apply(encoder_for_domain(state, domain), features)?;
    predict_from_embedding(&state.instance_head, &e)
}

/// Bag-level prediction through attention pooling and the bag heads.
pub fn predict_bag_label(state: &ModelState, domain: Domain, instances: &[Vec<f64>]) -> Result<usize> {
    let encoder = encoder_for_domain(state, domain);
    let embeddings: Vec<Vec<f64>> = instances
        .iter()
        .map(|f| mlp_apply(encoder, f))
        .collect::<Result<_>>()?;
    let logits = bag_logits(&state.tokens, &state.bag_heads, &embeddings)?;
    let probs: Vec<f64> = logits.iter().map(|z| clamp_prob(stable_sigmoid(*z))).collect();
    krank_decode(&probs)
}

/// Instance-level evaluation against ground-truth labels, which must be
/// present on every instance (target labels are eval-only).
pub fn evaluate_instances(state: &ModelState, ds: &DomainDataset) -> Result<EvalReport> {
    let mut y_true = Vec::with_capacity(ds.n_instances());
    let mut y_pred = Vec::with_capacity(ds.n_instances());
    for (_, _, inst) in ds.instances() {
        let label = inst.label.ok_or_else(|| {
            Error::Validation(format!(
                "instance '{}' has no ground-truth label for evaluation",
                inst.id
            ))
        })?;
        y_true.push(label.get());
        y_pred.push(predict_instance_label(state, ds.domain, &inst.features)?);
    }
    EvalReport::from_pairs(&y_true, &y_pred, ds.k)
}

/// Bag-level evaluation against the max-severity bag labels.
pub fn evaluate_bags(state: &ModelState, ds: &DomainDataset) -> Result<EvalReport> {
    let mut y_true = Vec::with_capacity(ds.bags.len());
    let mut y_pred = Vec::with_capacity(ds.bags.len());
    for bag in &ds.bags {
        let features: Vec<Vec<f64>> =
            bag.instances.iter().map(|i| i.features.clone()).collect();
        y_true.push(bag.bag_label.get());
        y_pred.push(predict_bag_label(state, ds.domain, &features)?);
    }
    EvalReport::from_pairs(&y_true, &y_pred, ds.k)
}

/// Embeddings grouped by true class (index 0 = class 1); instances
/// without labels are skipped.
pub fn collect_embeddings_by_class(
    state: &ModelState,
    ds: &DomainDataset,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let encoder = encoder_for_domain(state, ds.domain);
    let mut by_class = vec![Vec::new(); ds.k];
    for (_, _, inst) in ds.instances() {
        if let Some(label) = inst.label {
            by_class[label.get() - 1].push(mlp_apply(encoder, &inst.features)?);
        }
    }
    Ok(by_class)
}

/// One instance row of the PCA export (labels kept internal 1-based; the
/// CSV writer converts to the clinical convention).
#[derive(Debug, Clone)]
pub struct PcaExportRow {
    pub domain: Domain,
    pub bag_id: String,
    pub instance_id: String,
    pub true_label: Option<usize>,
    pub pred_label: usize,
    pub pc1: f64,
    pub pc2: f64,
}

/// Joint 2-D PCA rows over both domains' instance embeddings.
pub fn pca_rows(
    state: &ModelState,
    source: &DomainDataset,
    target: &DomainDataset,
) -> Result<Vec<PcaExportRow>> {
    let mut embeddings = embed_dataset(state, source)?;
    embeddings.extend(embed_dataset(state, target)?);
    let proj = crate::metrics::pca_project(&embeddings, 2)?;
    let mut rows = Vec::with_capacity(embeddings.len());
    let mut idx = 0;
    for ds in [source, target] {
        for (bi, _, inst) in ds.instances() {
            rows.push(PcaExportRow {
                domain: ds.domain,
                bag_id: ds.bags[bi].bag_id.clone(),
                instance_id: inst.id.clone(),
                true_label: inst.label.map(|l| l.get()),
                pred_label: predict_instance_label(state, ds.domain, &inst.features)?,
                pc1: proj.coords[idx][0],
                pc2: proj.coords[idx][1],
            });
            idx += 1;
        }
    }
    Ok(rows)
}
