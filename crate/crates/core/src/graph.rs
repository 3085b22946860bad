//! Differentiable forward graphs for training.
//!
//! Each `Tape*` struct registers one parameter group as tape leaves and
//! can rebuild the group's flat gradient after a backward pass, in the
//! same order as the group's `flatten()`. The loss builders compose the
//! model forwards on the tape; their values match the value-level
//! definitions in [`crate::losses`].

use crate::losses::Reduction;
use crate::model::{AggregationTokens, BagHeads, KRankHead};
use crate::numerics::{Adjoints, MlpParams, NodeId, Tape, PROB_EPS};

/// Encoder or discriminator MLP on the tape.
pub struct TapeMlp {
    /// Per layer: weight leaf, bias leaf, (rows, cols).
    layers: Vec<(NodeId, NodeId, usize, usize)>,
}

impl TapeMlp {
    pub fn register(tape: &mut Tape, params: &MlpParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| {
                let w = tape.leaf(l.weight.data.clone());
                let b = tape.leaf(l.bias.clone());
                (w, b, l.weight.rows, l.weight.cols)
            })
            .collect();
        Self { layers }
    }

    /// Forward pass matching [`crate::numerics::mlp_apply`]: tanh hidden
    /// layers, linear output.
    pub fn forward(&self, tape: &mut Tape, input: NodeId) -> NodeId {
        let n = self.layers.len();
        let mut x = input;
        for (i, (w, b, rows, cols)) in self.layers.iter().enumerate() {
            let z = tape.matvec(*w, *rows, *cols, x);
            let z = tape.add(z, *b);
            x = if i + 1 < n { tape.tanh(z) } else { z };
        }
        x
    }

    /// Flat gradient in `MlpParams::flatten` order.
    pub fn read_grads(&self, adj: &Adjoints) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b, ..) in &self.layers {
            out.extend_from_slice(adj.get(*w));
            out.extend_from_slice(adj.get(*b));
        }
        out
    }
}

/// K-rank instance head on the tape.
pub struct TapeKRank {
    w: NodeId,
    thresholds: NodeId,
}

impl TapeKRank {
    pub fn register(tape: &mut Tape, head: &KRankHead) -> Self {
        Self {
            w: tape.leaf(head.weight.clone()),
            thresholds: tape.leaf(head.thresholds.clone()),
        }
    }

    /// `logit_k = w . e + b_k`.
    pub fn logits(&self, tape: &mut Tape, embedding: NodeId) -> NodeId {
        let s = tape.dot(self.w, embedding);
        tape.broadcast_add(s, self.thresholds)
    }

    pub fn read_grads(&self, adj: &Adjoints) -> Vec<f64> {
        let mut out = adj.get(self.w).to_vec();
        out.extend_from_slice(adj.get(self.thresholds));
        out
    }
}

/// Aggregation tokens on the tape.
pub struct TapeTokens {
    ids: Vec<NodeId>,
    d: usize,
}

impl TapeTokens {
    pub fn register(tape: &mut Tape, tokens: &AggregationTokens) -> Self {
        let d = tokens.tokens.first().map(Vec::len).unwrap_or(0);
        Self {
            ids: tokens.tokens.iter().map(|t| tape.leaf(t.clone())).collect(),
            d,
        }
    }

    pub fn read_grads(&self, adj: &Adjoints) -> Vec<f64> {
        self.ids.iter().flat_map(|id| adj.get(*id).to_vec()).collect()
    }
}

/// Per-token linear bag scorers on the tape.
pub struct TapeBagHeads {
    ids: Vec<(NodeId, NodeId)>,
}

impl TapeBagHeads {
    pub fn register(tape: &mut Tape, heads: &BagHeads) -> Self {
        Self {
            ids: heads
                .heads
                .iter()
                .map(|h| (tape.leaf(h.weight.clone()), tape.leaf(vec![h.bias])))
                .collect(),
        }
    }

    pub fn read_grads(&self, adj: &Adjoints) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.ids {
            out.extend_from_slice(adj.get(*w));
            out.extend_from_slice(adj.get(*b));
        }
        out
    }
}

/// Sigmoid probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn prob_node(tape: &mut Tape, logits: NodeId) -> NodeId {
    let p = tape.sigmoid(logits);
    tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

/// Per-row BCE of k-rank logit rows against 0/1 target rows, reduced over
/// rows and ranks.
pub fn krank_bce_node(
    tape: &mut Tape,
    logit_rows: &[NodeId],
    target_rows: &[Vec<f64>],
    reduction: Reduction,
) -> NodeId {
    assert_eq!(logit_rows.len(), target_rows.len());
    assert!(!logit_rows.is_empty(), "krank_bce_node: empty batch");
    let width = target_rows[0].len();
    let scale = reduction.scale(logit_rows.len() * width);
    let mut terms = Vec::with_capacity(logit_rows.len());
    for (logits, targets) in logit_rows.iter().zip(target_rows.iter()) {
        let p = prob_node(tape, *logits);
        let row = tape.bce_from_probs(p, targets.clone(), 1.0);
        terms.push((row, scale));
    }
    tape.lin_comb(&terms, 0.0)
}

/// Instance k-rank loss over raw feature rows, differentiable in the
/// encoder and the head.
pub fn instance_krank_loss_node(
    tape: &mut Tape,
    encoder: &TapeMlp,
    head: &TapeKRank,
    features: &[Vec<f64>],
    target_rows: &[Vec<f64>],
    reduction: Reduction,
) -> NodeId {
    let logit_rows: Vec<NodeId> = features
        .iter()
        .map(|f| {
            let x = tape.leaf(f.clone());
            let e = encoder.forward(tape, x);
            head.logits(tape, e)
        })
        .collect();
    krank_bce_node(tape, &logit_rows, target_rows, reduction)
}

/// K-1 bag logits over instance embedding nodes: scaled-dot attention per
/// token, weighted pooling, linear scorer.
pub fn bag_logits_node(
    tape: &mut Tape,
    tokens: &TapeTokens,
    heads: &TapeBagHeads,
    embeddings: &[NodeId],
) -> NodeId {
    assert!(!embeddings.is_empty(), "bag_logits_node: empty bag");
    let scale = 1.0 / (tokens.d as f64).sqrt();
    let mut logits = Vec::with_capacity(tokens.ids.len());
    for (token, (hw, hb)) in tokens.ids.iter().zip(heads.ids.iter()) {
        let scores: Vec<NodeId> = embeddings.iter().map(|e| tape.dot(*token, *e)).collect();
        let scores = tape.stack(&scores);
        let scores = tape.affine(scores, scale, 0.0);
        let weights = tape.softmax(scores);
        let pooled = tape.weighted_sum(weights, embeddings);
        let s = tape.dot(*hw, pooled);
        logits.push(tape.add(s, *hb));
    }
    tape.stack(&logits)
}

/// Bag-level k-rank loss over per-bag embedding nodes.
pub fn bag_krank_loss_node(
    tape: &mut Tape,
    tokens: &TapeTokens,
    heads: &TapeBagHeads,
    bags: &[Vec<NodeId>],
    target_rows: &[Vec<f64>],
    reduction: Reduction,
) -> NodeId {
    let logit_rows: Vec<NodeId> = bags
        .iter()
        .map(|emb| bag_logits_node(tape, tokens, heads, emb))
        .collect();
    krank_bce_node(tape, &logit_rows, target_rows, reduction)
}

/// Clamped source-probability of one embedding node.
pub fn discriminate_node(tape: &mut Tape, disc: &TapeMlp, embedding: NodeId) -> NodeId {
    let z = disc.forward(tape, embedding);
    prob_node(tape, z)
}

/// Discriminator objective over source and target embedding nodes.
pub fn disc_loss_node(
    tape: &mut Tape,
    disc: &TapeMlp,
    source: &[NodeId],
    target: &[NodeId],
    reduction: Reduction,
) -> NodeId {
    assert!(!source.is_empty() && !target.is_empty(), "disc_loss_node: empty side");
    let mut probs = Vec::with_capacity(source.len() + target.len());
    let mut targets = Vec::with_capacity(source.len() + target.len());
    for e in source {
        probs.push(discriminate_node(tape, disc, *e));
        targets.push(1.0);
    }
    for e in target {
        probs.push(discriminate_node(tape, disc, *e));
        targets.push(0.0);
    }
    let stacked = tape.stack(&probs);
    let scale = reduction.scale(targets.len());
    tape.bce_from_probs(stacked, targets, scale)
}

/// Encoder confusion objective over target embedding nodes.
pub fn enc_loss_node(
    tape: &mut Tape,
    disc: &TapeMlp,
    target: &[NodeId],
    reduction: Reduction,
) -> NodeId {
    assert!(!target.is_empty(), "enc_loss_node: empty target batch");
    let probs: Vec<NodeId> = target
        .iter()
        .map(|e| discriminate_node(tape, disc, *e))
        .collect();
    let stacked = tape.stack(&probs);
    let scale = reduction.scale(target.len());
    tape.bce_from_probs(stacked, vec![1.0; target.len()], scale)
}

/// Hinge triplet loss over anchor embedding nodes with constant prototype
/// positives/negatives. Returns a constant zero node for no anchors.
pub fn triplet_loss_node(
    tape: &mut Tape,
    anchors: &[NodeId],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    margin: f64,
    reduction: Reduction,
) -> NodeId {
    assert_eq!(anchors.len(), positives.len());
    assert_eq!(anchors.len(), negatives.len());
    if anchors.is_empty() {
        return tape.scalar_leaf(0.0);
    }
    let scale = reduction.scale(anchors.len());
    let mut terms = Vec::with_capacity(anchors.len());
    for ((a, p), n) in anchors.iter().zip(positives.iter()).zip(negatives.iter()) {
        let p = tape.leaf(p.clone());
        let n = tape.leaf(n.clone());
        let dp_vec = tape.sub(*a, p);
        let dn_vec = tape.sub(*a, n);
        let dp = tape.norm(dp_vec);
        let dn = tape.norm(dn_vec);
        let arg = tape.lin_comb(&[(dp, 1.0), (dn, -1.0)], margin);
        let hinge = tape.relu(arg);
        terms.push((hinge, scale));
    }
    tape.lin_comb(&terms, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::SeverityLabel;
    use crate::losses;
    use crate::model::{
        bag_logits, discriminate, instance_logits, krank_encode_label, ModelDims, ModelState,
    };
    use crate::numerics::mlp_apply;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0), "{a} vs {b}");
    }

    fn random_state(rng: &mut ChaCha8Rng) -> (ModelState, ModelDims) {
        let dims = ModelDims {
            k: 4,
            d_in: 5,
            d: 4,
            encoder_hidden: vec![6],
            disc_hidden: vec![5],
        };
        let state = ModelState::init(&dims, rng.random()).unwrap();
        (state, dims)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    #[test]
    fn tape_mlp_forward_matches_mlp_apply() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let (state, dims) = random_state(&mut rng);
            let x = random_vec(&mut rng, dims.d_in);
            let plain = mlp_apply(&state.source_encoder, &x).unwrap();
            let mut tape = Tape::new();
            let enc = TapeMlp::register(&mut tape, &state.source_encoder);
            let xin = tape.leaf(x);
            let out = enc.forward(&mut tape, xin);
            for (a, b) in tape.value(out).iter().zip(plain.iter()) {
                close(*a, *b);
            }
        }
    }

    #[test]
    fn tape_instance_loss_matches_value_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let (state, dims) = random_state(&mut rng);
            let n = rng.random_range(1..5);
            let features: Vec<Vec<f64>> =
                (0..n).map(|_| random_vec(&mut rng, dims.d_in)).collect();
            let targets: Vec<Vec<f64>> = (0..n)
                .map(|_| krank_encode_label(rng.random_range(1..=dims.k), dims.k).unwrap())
                .collect();
            let logit_rows: Vec<Vec<f64>> = features
                .iter()
                .map(|f| {
                    let e = mlp_apply(&state.source_encoder, f).unwrap();
                    instance_logits(&state.instance_head, &e).unwrap()
                })
                .collect();
            for reduction in [Reduction::Mean, Reduction::Sum] {
                let expected =
                    losses::loss_instance_krank(&logit_rows, &targets, reduction).unwrap();
                let mut tape = Tape::new();
                let enc = TapeMlp::register(&mut tape, &state.source_encoder);
                let head = TapeKRank::register(&mut tape, &state.instance_head);
                let loss = instance_krank_loss_node(
                    &mut tape, &enc, &head, &features, &targets, reduction,
                );
                close(tape.scalar(loss), expected);
            }
        }
    }

    #[test]
    fn tape_bag_loss_matches_value_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let (state, dims) = random_state(&mut rng);
            let n_bags = rng.random_range(1..4);
            let bags: Vec<Vec<Vec<f64>>> = (0..n_bags)
                .map(|_| {
                    let size = rng.random_range(1..5);
                    (0..size).map(|_| random_vec(&mut rng, dims.d)).collect()
                })
                .collect();
            let labels: Vec<SeverityLabel> = (0..n_bags)
                .map(|_| SeverityLabel::new(rng.random_range(1..=dims.k), dims.k).unwrap())
                .collect();
            let logit_rows: Vec<Vec<f64>> = bags
                .iter()
                .map(|emb| bag_logits(&state.tokens, &state.bag_heads, emb).unwrap())
                .collect();
            let expected =
                losses::loss_bag(&logit_rows, &labels, dims.k, Reduction::Mean).unwrap();

            let mut tape = Tape::new();
            let tokens = TapeTokens::register(&mut tape, &state.tokens);
            let heads = TapeBagHeads::register(&mut tape, &state.bag_heads);
            let bag_nodes: Vec<Vec<NodeId>> = bags
                .iter()
                .map(|emb| emb.iter().map(|e| tape.leaf(e.clone())).collect())
                .collect();
            let targets: Vec<Vec<f64>> = labels
                .iter()
                .map(|y| krank_encode_label(y.get(), dims.k).unwrap())
                .collect();
            let loss = bag_krank_loss_node(
                &mut tape, &tokens, &heads, &bag_nodes, &targets, Reduction::Mean,
            );
            close(tape.scalar(loss), expected);
        }
    }

    #[test]
    fn tape_disc_and_enc_losses_match_value_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let (state, dims) = random_state(&mut rng);
            let ns = rng.random_range(1..4);
            let nt = rng.random_range(1..4);
            let src: Vec<Vec<f64>> = (0..ns).map(|_| random_vec(&mut rng, dims.d)).collect();
            let tgt: Vec<Vec<f64>> = (0..nt).map(|_| random_vec(&mut rng, dims.d)).collect();
            let expected_disc =
                losses::loss_disc(&src, &tgt, &state.discriminator, Reduction::Mean).unwrap();
            let expected_enc =
                losses::loss_enc(&tgt, &state.discriminator, Reduction::Mean).unwrap();

            let mut tape = Tape::new();
            let disc = TapeMlp::register(&mut tape, &state.discriminator);
            let src_nodes: Vec<NodeId> = src.iter().map(|e| tape.leaf(e.clone())).collect();
            let tgt_nodes: Vec<NodeId> = tgt.iter().map(|e| tape.leaf(e.clone())).collect();
            let ld = disc_loss_node(&mut tape, &disc, &src_nodes, &tgt_nodes, Reduction::Mean);
            let le = enc_loss_node(&mut tape, &disc, &tgt_nodes, Reduction::Mean);
            close(tape.scalar(ld), expected_disc);
            close(tape.scalar(le), expected_enc);

            // Probability node agrees with the plain discriminate().
            let p_plain = discriminate(&state.discriminator, &tgt[0]).unwrap();
            let pn = discriminate_node(&mut tape, &disc, tgt_nodes[0]);
            close(tape.value(pn)[0], p_plain);
        }
    }

    #[test]
    fn tape_triplet_matches_value_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let d = 4;
            let n = rng.random_range(0..4);
            let anchors: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
            let pos: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
            let neg: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, d)).collect();
            let margin = rng.random_range(0.0..2.0);
            let expected =
                losses::loss_triplet(&anchors, &pos, &neg, margin, Reduction::Mean).unwrap();
            let mut tape = Tape::new();
            let anchor_nodes: Vec<NodeId> =
                anchors.iter().map(|a| tape.leaf(a.clone())).collect();
            let loss =
                triplet_loss_node(&mut tape, &anchor_nodes, &pos, &neg, margin, Reduction::Mean);
            close(tape.scalar(loss), expected);
        }
    }

    #[test]
    fn tape_bag_logits_match_plain_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10 {
            let (state, dims) = random_state(&mut rng);
            let size = rng.random_range(1..6);
            let emb: Vec<Vec<f64>> = (0..size).map(|_| random_vec(&mut rng, dims.d)).collect();
            let plain = bag_logits(&state.tokens, &state.bag_heads, &emb).unwrap();
            let mut tape = Tape::new();
            let tokens = TapeTokens::register(&mut tape, &state.tokens);
            let heads = TapeBagHeads::register(&mut tape, &state.bag_heads);
            let nodes: Vec<NodeId> = emb.iter().map(|e| tape.leaf(e.clone())).collect();
            let logits = bag_logits_node(&mut tape, &tokens, &heads, &nodes);
            for (a, b) in tape.value(logits).iter().zip(plain.iter()) {
                close(*a, *b);
            }
        }
    }
}
