//! Stage-1 source pre-training, stage-2 target adaptation, and the
//! ablation harness.
//!
//! Stage 1 jointly trains the source encoder and instance head on the
//! instance k-rank loss, and the aggregation tokens and bag heads on the
//! bag loss, interleaving one batch of each per step and early-stopping
//! on validation bag-level quadratic weighted kappa. Stage 2 freezes
//! everything trained in stage 1, initializes the target encoder as a
//! copy of the source encoder, computes prototypes once, and then
//! alternates one discriminator Adam step with one target-encoder Adam
//! step per batch for a fixed number of epochs.

mod ablation;

pub use ablation::{run_ablation, AblationReport, SeedRun, Variant, VariantSummary};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datamodel::{mix_seed, oversample_indices, DomainDataset};
use crate::graph::{
    bag_krank_loss_node, disc_loss_node, enc_loss_node, instance_krank_loss_node,
    triplet_loss_node, TapeBagHeads, TapeKRank, TapeMlp, TapeTokens,
};
use crate::losses::{select_triplet_anchors, LossWeights, Reduction};
use crate::metrics::{qwk, ConfusionMatrix};
use crate::model::{
    compute_prototypes, krank_encode_label, predict_bag_label, predict_from_embedding, ModelDims,
    ModelState, PrototypeSet,
};
use crate::numerics::{adam_step, mlp_apply, AdamState, NodeId, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    /// Learning rate for the source encoder and instance head.
    pub lr_encoder: f64,
    /// Learning rate for the aggregation tokens and bag heads.
    pub lr_bag: f64,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Fraction of source bags held out for validation.
    pub val_fraction: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            lr_encoder: 1e-3,
            lr_bag: 1e-3,
            max_epochs: 1500,
            patience: 100,
            val_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage2Config {
    pub lr_disc: f64,
    pub lr_encoder: f64,
    /// Fixed epoch count; stage 2 has no early stopping.
    pub epochs: usize,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self { lr_disc: 1e-3, lr_encoder: 1e-4, epochs: 150 }
    }
}

/// Independent switches for the adaptation components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSwitches {
    /// Adversarial alignment: discriminator training plus the encoder
    /// confusion term.
    pub use_adv: bool,
    /// Bag classification through the frozen aggregation tokens.
    pub use_shared_tokens: bool,
    /// Max-severity triplet loss.
    pub use_triplet: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        Self { use_adv: true, use_shared_tokens: true, use_triplet: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub d_in: usize,
    pub k: usize,
    /// Embedding dimension.
    pub d: usize,
    pub encoder_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    /// Bags per mini-batch for every bag-level objective.
    pub bag_batch_size: usize,
    /// Instances per mini-batch for the stage-1 instance loss.
    pub instance_batch_size: usize,
    /// Triplet weight in the total target loss.
    pub alpha: f64,
    /// Triplet hinge margin.
    pub margin: f64,
    pub reduction: Reduction,
    pub seed: u64,
    pub ablation: AblationSwitches,
    /// Alternate learning rates for fine-tuning a large pretrained
    /// extractor instead of training these small encoders from scratch.
    /// Kept in the config for documentation; training does not read them.
    pub reference_rates: BTreeMap<String, f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut reference_rates = BTreeMap::new();
        reference_rates.insert("stage1_encoder_and_instance_head".to_string(), 3e-6);
        reference_rates.insert("stage1_bag_classifier".to_string(), 1e-5);
        reference_rates.insert("stage2_discriminator".to_string(), 1e-4);
        reference_rates.insert("stage2_target_encoder".to_string(), 1e-6);
        Self {
            d_in: 8,
            k: 4,
            d: 8,
            encoder_hidden: vec![16],
            disc_hidden: vec![32],
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            bag_batch_size: 16,
            instance_batch_size: 16,
            alpha: 0.01,
            margin: 1.0,
            reduction: Reduction::Mean,
            seed: 7,
            ablation: AblationSwitches::default(),
            reference_rates,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Validation(format!("train: k must be >= 2, got {}", self.k)));
        }
        if self.d_in == 0 || self.d == 0 {
            return Err(Error::Validation("train: d_in and d must be positive".into()));
        }
        for (name, lr) in [
            ("stage1.lr_encoder", self.stage1.lr_encoder),
            ("stage1.lr_bag", self.stage1.lr_bag),
            ("stage2.lr_disc", self.stage2.lr_disc),
            ("stage2.lr_encoder", self.stage2.lr_encoder),
        ] {
            if lr <= 0.0 {
                return Err(Error::Validation(format!("train: {name} must be positive, got {lr}")));
            }
        }
        if self.stage1.max_epochs == 0 || self.stage2.epochs == 0 {
            return Err(Error::Validation("train: epoch counts must be >= 1".into()));
        }
        if !(0.0 < self.stage1.val_fraction && self.stage1.val_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "train: val_fraction must lie in (0, 1), got {}",
                self.stage1.val_fraction
            )));
        }
        if self.bag_batch_size == 0 || self.instance_batch_size == 0 {
            return Err(Error::Validation("train: batch sizes must be >= 1".into()));
        }
        LossWeights { alpha: self.alpha, margin: self.margin }.validate()?;
        Ok(())
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            k: self.k,
            d_in: self.d_in,
            d: self.d,
            encoder_hidden: self.encoder_hidden.clone(),
            disc_hidden: self.disc_hidden.clone(),
        }
    }

    /// Hash of the serialized config; recorded in train logs so runs can
    /// be matched to their exact configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(json.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Loss components and validation metric of one completed epoch. Fields
/// stay `None` when the corresponding objective was not exercised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_instance: Option<f64>,
    pub loss_bag: Option<f64>,
    pub loss_disc: Option<f64>,
    pub loss_enc: Option<f64>,
    pub loss_triplet: Option<f64>,
    pub loss_total: Option<f64>,
    pub val_qwk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub config_hash: String,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    /// Wall-clock duration; informational only and excluded from
    /// determinism comparisons.
    pub wall_clock_ms: u64,
}

struct BatchIter {
    indices: Vec<usize>,
    chunk: usize,
}

impl BatchIter {
    fn new(indices: Vec<usize>, chunk: usize) -> Self {
        Self { indices, chunk }
    }

    fn n_batches(&self) -> usize {
        self.indices.len().div_ceil(self.chunk)
    }

    fn batch(&self, i: usize) -> &[usize] {
        let lo = i * self.chunk;
        let hi = ((i + 1) * self.chunk).min(self.indices.len());
        &self.indices[lo..hi]
    }
}

fn adam_update_group(
    flat: &mut Vec<f64>,
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    adam_step(flat, grads, state, lr)
}

/// Validation metric: bag-level QWK over the given bags; undefined kappa
/// ranks below every defined value.
fn validation_qwk(state: &ModelState, ds: &DomainDataset, val_bags: &[usize]) -> Result<Option<f64>> {
    let mut cm = ConfusionMatrix::new(ds.k)?;
    for bi in val_bags {
        let bag = &ds.bags[*bi];
        let features: Vec<Vec<f64>> = bag.instances.iter().map(|i| i.features.clone()).collect();
        let pred = predict_bag_label(state, ds.domain, &features)?;
        cm.add(bag.bag_label.get(), pred)?;
    }
    qwk(&cm)
}

/// Stage 1: joint source pre-training with early stopping on validation
/// bag-level QWK. Returns the best-validation snapshot.
pub fn pretrain_source(cfg: &TrainConfig, source_ds: &DomainDataset) -> Result<(ModelState, TrainLog)> {
    let started = std::time::Instant::now();
    cfg.validate()?;
    source_ds.validate()?;
    if cfg.k != source_ds.k || cfg.d_in != source_ds.d_in {
        return Err(Error::Validation(format!(
            "config (k={}, d_in={}) does not match dataset (k={}, d_in={})",
            cfg.k, cfg.d_in, source_ds.k, source_ds.d_in
        )));
    }
    if !source_ds.fully_labeled() {
        return Err(Error::Validation("stage 1 requires every source instance labeled".into()));
    }
    // Prototypes must be computable after training; fail early if a class
    // is absent.
    let mut class_seen = vec![false; cfg.k];
    for (_, _, inst) in source_ds.instances() {
        class_seen[inst.label.expect("checked above").get() - 1] = true;
    }
    if let Some(missing) = class_seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!(
            "class {} absent from source data; prototypes undefined",
            missing + 1
        )));
    }

    let n_bags = source_ds.bags.len();
    if n_bags < 2 {
        return Err(Error::Validation("need at least 2 source bags for a validation split".into()));
    }
    // Deterministic validation split.
    let mut order: Vec<usize> = (0..n_bags).collect();
    {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0x5EED));
        order.shuffle(&mut rng);
    }
    let n_val = ((n_bags as f64 * cfg.stage1.val_fraction).round() as usize).clamp(1, n_bags - 1);
    let val_bags: Vec<usize> = order[..n_val].to_vec();
    let train_bags: Vec<usize> = order[n_val..].to_vec();

    // Flat views of the training instances of the train split.
    let mut inst_features: Vec<&[f64]> = Vec::new();
    let mut inst_labels: Vec<usize> = Vec::new();
    for bi in &train_bags {
        for inst in &source_ds.bags[*bi].instances {
            inst_features.push(&inst.features);
            inst_labels.push(inst.label.expect("fully labeled").get());
        }
    }
    let bag_labels: Vec<usize> = train_bags
        .iter()
        .map(|bi| source_ds.bags[*bi].bag_label.get())
        .collect();

    let mut state = ModelState::init(&cfg.dims(), cfg.seed)?;
    let mut adam_enc = AdamState::new(state.source_encoder.n_params());
    let mut adam_head = AdamState::new(state.instance_head.n_params());
    let mut adam_tokens = AdamState::new(state.tokens.n_params());
    let mut adam_bag_heads = AdamState::new(state.bag_heads.n_params());

    let mut log = TrainLog {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        epochs: Vec::new(),
        best_epoch: None,
        best_metric: None,
        wall_clock_ms: 0,
    };
    let mut best_state = state.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;

    for epoch in 1..=cfg.stage1.max_epochs {
        let inst_stream = BatchIter::new(
            oversample_indices(&inst_labels, mix_seed(cfg.seed, 0xA000 + epoch as u64))?,
            cfg.instance_batch_size,
        );
        let bag_stream = BatchIter::new(
            oversample_indices(&bag_labels, mix_seed(cfg.seed, 0xB000 + epoch as u64))?,
            cfg.bag_batch_size,
        );
        let steps = inst_stream.n_batches().max(bag_stream.n_batches());
        let mut inst_loss_sum = 0.0;
        let mut inst_steps = 0usize;
        let mut bag_loss_sum = 0.0;
        let mut bag_steps = 0usize;

        for step in 0..steps {
            if step < inst_stream.n_batches() {
                let batch = inst_stream.batch(step);
                let features: Vec<Vec<f64>> =
                    batch.iter().map(|i| inst_features[*i].to_vec()).collect();
                let targets: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|i| krank_encode_label(inst_labels[*i], cfg.k))
                    .collect::<Result<_>>()?;
                let mut tape = Tape::new();
                let enc = TapeMlp::register(&mut tape, &state.source_encoder);
                let head = TapeKRank::register(&mut tape, &state.instance_head);
                let loss = instance_krank_loss_node(
                    &mut tape, &enc, &head, &features, &targets, cfg.reduction,
                );
                let adj = tape.backward(loss);
                inst_loss_sum += tape.scalar(loss);
                inst_steps += 1;

                let mut flat = state.source_encoder.flatten();
                adam_update_group(&mut flat, &enc.read_grads(&adj), &mut adam_enc, cfg.stage1.lr_encoder)?;
                state.source_encoder.load_flat(&flat)?;
                let mut flat = state.instance_head.flatten();
                adam_update_group(&mut flat, &head.read_grads(&adj), &mut adam_head, cfg.stage1.lr_encoder)?;
                state.instance_head.load_flat(&flat)?;
            }
            if step < bag_stream.n_batches() {
                let batch = bag_stream.batch(step);
                // Embeddings are computed with the current encoder and
                // treated as constants; the bag step trains only tokens
                // and bag heads.
                let mut tape = Tape::new();
                let tokens = TapeTokens::register(&mut tape, &state.tokens);
                let heads = TapeBagHeads::register(&mut tape, &state.bag_heads);
                let mut bag_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(batch.len());
                let mut targets: Vec<Vec<f64>> = Vec::with_capacity(batch.len());
                for i in batch {
                    let bag = &source_ds.bags[train_bags[*i]];
                    let nodes: Vec<NodeId> = bag
                        .instances
                        .iter()
                        .map(|inst| {
                            mlp_apply(&state.source_encoder, &inst.features)
                                .map(|e| tape.leaf(e))
                        })
                        .collect::<Result<_>>()?;
                    bag_nodes.push(nodes);
                    targets.push(krank_encode_label(bag.bag_label.get(), cfg.k)?);
                }
                let loss = bag_krank_loss_node(
                    &mut tape, &tokens, &heads, &bag_nodes, &targets, cfg.reduction,
                );
                let adj = tape.backward(loss);
                bag_loss_sum += tape.scalar(loss);
                bag_steps += 1;

                let mut flat = state.tokens.flatten();
                adam_update_group(&mut flat, &tokens.read_grads(&adj), &mut adam_tokens, cfg.stage1.lr_bag)?;
                state.tokens.load_flat(&flat)?;
                let mut flat = state.bag_heads.flatten();
                adam_update_group(&mut flat, &heads.read_grads(&adj), &mut adam_bag_heads, cfg.stage1.lr_bag)?;
                state.bag_heads.load_flat(&flat)?;
            }
        }

        let val = validation_qwk(&state, source_ds, &val_bags)?;
        log.epochs.push(EpochRecord {
            epoch,
            loss_instance: (inst_steps > 0).then(|| inst_loss_sum / inst_steps as f64),
            loss_bag: (bag_steps > 0).then(|| bag_loss_sum / bag_steps as f64),
            val_qwk: val,
            ..EpochRecord::default()
        });
        let metric = val.unwrap_or(f64::NEG_INFINITY);
        if metric > best_metric {
            best_metric = metric;
            best_epoch = epoch;
            best_state = state.clone();
        } else {
            // Ties keep the later snapshot (the metric often saturates
            // while the instance head is still improving) but do not
            // reset the patience clock.
            if metric == best_metric {
                best_state = state.clone();
            }
            if epoch - best_epoch > cfg.stage1.patience {
                break;
            }
        }
    }

    log.best_epoch = (best_epoch > 0).then_some(best_epoch);
    log.best_metric = (best_metric > f64::NEG_INFINITY).then_some(best_metric);
    log.wall_clock_ms = started.elapsed().as_millis() as u64;
    Ok((best_state, log))
}

/// Serialized bytes of the parameter groups that stage 2 must not touch.
pub(crate) fn frozen_group_bytes(state: &ModelState) -> Vec<u8> {
    serde_json::to_vec(&(
        &state.source_encoder,
        &state.tokens,
        &state.instance_head,
        &state.bag_heads,
    ))
    .expect("parameter groups serialize")
}

/// Stage 2: adversarial adaptation of the target encoder with frozen
/// source components, shared aggregation tokens, and the gated
/// max-severity triplet loss. Runs exactly `cfg.stage2.epochs` epochs.
pub fn adapt_target(
    cfg: &TrainConfig,
    pretrained: &ModelState,
    source_ds: &DomainDataset,
    target_ds: &DomainDataset,
) -> Result<(ModelState, TrainLog)> {
    let started = std::time::Instant::now();
    cfg.validate()?;
    source_ds.validate()?;
    target_ds.validate()?;
    if source_ds.k != target_ds.k || source_ds.d_in != target_ds.d_in {
        return Err(Error::Validation("source and target datasets disagree on k or d_in".into()));
    }
    if cfg.k != source_ds.k || cfg.d_in != source_ds.d_in {
        return Err(Error::Validation("config does not match dataset dimensions".into()));
    }

    let mut state = pretrained.clone();
    state.target_encoder = state.source_encoder.clone();
    state.freeze = crate::model::FreezeFlags {
        source_encoder: true,
        target_encoder: false,
        instance_head: true,
        tokens: true,
        bag_heads: true,
        discriminator: false,
    };
    let frozen_before = frozen_group_bytes(&state);

    // Prototypes are computed once with the frozen source encoder and
    // never mutated afterwards.
    let prototypes: PrototypeSet = compute_prototypes(source_ds, &state.source_encoder)?;

    let mut log = TrainLog {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        epochs: Vec::new(),
        best_epoch: None,
        best_metric: None,
        wall_clock_ms: 0,
    };

    let sw = cfg.ablation;
    if !sw.use_adv && !sw.use_shared_tokens && !sw.use_triplet {
        // Nothing to optimize: the target encoder stays the exact copy.
        log.wall_clock_ms = started.elapsed().as_millis() as u64;
        return Ok((state, log));
    }

    // Source embeddings are fixed for the whole stage.
    let source_embeddings: Vec<Vec<Vec<f64>>> = source_ds
        .bags
        .iter()
        .map(|bag| {
            bag.instances
                .iter()
                .map(|inst| mlp_apply(&state.source_encoder, &inst.features))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let target_bag_labels: Vec<usize> =
        target_ds.bags.iter().map(|b| b.bag_label.get()).collect();
    let source_bag_labels: Vec<usize> =
        source_ds.bags.iter().map(|b| b.bag_label.get()).collect();
    let weights = LossWeights { alpha: cfg.alpha, margin: cfg.margin };
    weights.validate()?;

    let mut adam_disc = AdamState::new(state.discriminator.n_params());
    let mut adam_enc = AdamState::new(state.target_encoder.n_params());

    for epoch in 1..=cfg.stage2.epochs {
        let target_stream = BatchIter::new(
            oversample_indices(&target_bag_labels, mix_seed(cfg.seed, 0xC000 + epoch as u64))?,
            cfg.bag_batch_size,
        );
        let source_stream = BatchIter::new(
            oversample_indices(&source_bag_labels, mix_seed(cfg.seed, 0xD000 + epoch as u64))?,
            cfg.bag_batch_size,
        );
        let mut sums = EpochSums::default();

        for step in 0..target_stream.n_batches() {
            let tbatch = target_stream.batch(step);
            let target_bags: Vec<usize> = tbatch.to_vec();

            if sw.use_adv {
                // (a) one discriminator step on the domain classification
                // loss; embeddings on both sides are constants here.
                let sbatch = source_stream.batch(step % source_stream.n_batches());
                let mut tape = Tape::new();
                let disc = TapeMlp::register(&mut tape, &state.discriminator);
                let mut src_nodes = Vec::new();
                for bi in sbatch {
                    for e in &source_embeddings[*bi] {
                        src_nodes.push(tape.leaf(e.clone()));
                    }
                }
                let mut tgt_nodes = Vec::new();
                for bi in &target_bags {
                    for inst in &target_ds.bags[*bi].instances {
                        let e = mlp_apply(&state.target_encoder, &inst.features)?;
                        tgt_nodes.push(tape.leaf(e));
                    }
                }
                let loss =
                    disc_loss_node(&mut tape, &disc, &src_nodes, &tgt_nodes, cfg.reduction);
                let adj = tape.backward(loss);
                sums.disc.add(tape.scalar(loss));
                let mut flat = state.discriminator.flatten();
                adam_update_group(&mut flat, &disc.read_grads(&adj), &mut adam_disc, cfg.stage2.lr_disc)?;
                state.discriminator.load_flat(&flat)?;
            }

            // (b) one target-encoder step on the total target loss.
            let mut tape = Tape::new();
            let enc = TapeMlp::register(&mut tape, &state.target_encoder);
            let disc = TapeMlp::register(&mut tape, &state.discriminator);
            let tokens = TapeTokens::register(&mut tape, &state.tokens);
            let heads = TapeBagHeads::register(&mut tape, &state.bag_heads);

            let mut bag_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(target_bags.len());
            let mut bag_targets: Vec<Vec<f64>> = Vec::with_capacity(target_bags.len());
            for bi in &target_bags {
                let bag = &target_ds.bags[*bi];
                let nodes: Vec<NodeId> = bag
                    .instances
                    .iter()
                    .map(|inst| {
                        let x = tape.leaf(inst.features.clone());
                        enc.forward(&mut tape, x)
                    })
                    .collect();
                bag_nodes.push(nodes);
                bag_targets.push(krank_encode_label(bag.bag_label.get(), cfg.k)?);
            }

            let mut terms: Vec<(NodeId, f64)> = Vec::new();
            if sw.use_shared_tokens {
                let l_bag = bag_krank_loss_node(
                    &mut tape, &tokens, &heads, &bag_nodes, &bag_targets, cfg.reduction,
                );
                sums.bag.add(tape.scalar(l_bag));
                terms.push((l_bag, 1.0));
            }
            if sw.use_adv {
                let all_emb: Vec<NodeId> = bag_nodes.iter().flatten().copied().collect();
                let l_enc = enc_loss_node(&mut tape, &disc, &all_emb, cfg.reduction);
                sums.enc.add(tape.scalar(l_enc));
                terms.push((l_enc, 1.0));
            }
            if sw.use_triplet {
                // Gating predictions are recomputed every step with the
                // frozen instance head on current target embeddings.
                let mut anchors: Vec<NodeId> = Vec::new();
                let mut positives: Vec<Vec<f64>> = Vec::new();
                let mut negatives: Vec<Vec<f64>> = Vec::new();
                for (pos_in_batch, bi) in target_bags.iter().enumerate() {
                    let bag = &target_ds.bags[*bi];
                    let predicted: Vec<usize> = bag_nodes[pos_in_batch]
                        .iter()
                        .map(|e| predict_from_embedding(&state.instance_head, tape.value(*e)))
                        .collect::<Result<_>>()?;
                    for gate in select_triplet_anchors(bag, *bi, &predicted, cfg.k)? {
                        anchors.push(bag_nodes[pos_in_batch][gate.instance_index]);
                        positives.push(prototypes.get(gate.bag_label.get())?.to_vec());
                        negatives.push(prototypes.get(gate.predicted)?.to_vec());
                    }
                }
                let l_triplet = triplet_loss_node(
                    &mut tape, &anchors, &positives, &negatives, cfg.margin, cfg.reduction,
                );
                sums.triplet.add(tape.scalar(l_triplet));
                terms.push((l_triplet, weights.alpha));
            }
            let total = tape.lin_comb(&terms, 0.0);
            sums.total.add(tape.scalar(total));
            let adj = tape.backward(total);
            let mut flat = state.target_encoder.flatten();
            adam_update_group(&mut flat, &enc.read_grads(&adj), &mut adam_enc, cfg.stage2.lr_encoder)?;
            state.target_encoder.load_flat(&flat)?;
        }

        log.epochs.push(sums.into_record(epoch));
    }

    let frozen_after = frozen_group_bytes(&state);
    if frozen_before != frozen_after {
        return Err(Error::Validation(
            "internal error: a frozen parameter group changed during adaptation".into(),
        ));
    }
    log.wall_clock_ms = started.elapsed().as_millis() as u64;
    Ok((state, log))
}

#[derive(Default)]
struct MeanAcc {
    sum: f64,
    n: usize,
}

impl MeanAcc {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default)]
struct EpochSums {
    disc: MeanAcc,
    bag: MeanAcc,
    enc: MeanAcc,
    triplet: MeanAcc,
    total: MeanAcc,
}

impl EpochSums {
    fn into_record(self, epoch: usize) -> EpochRecord {
        EpochRecord {
            epoch,
            loss_instance: None,
            loss_bag: self.bag.mean(),
            loss_disc: self.disc.mean(),
            loss_enc: self.enc.mean(),
            loss_triplet: self.triplet.mean(),
            loss_total: self.total.mean(),
            val_qwk: None,
        }
    }
}
