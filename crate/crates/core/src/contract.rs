//! Gradient contract suite: every training loss must expose analytic
//! gradients that agree with central differences on random small
//! configurations.
//!
//! Each check rebuilds the loss tape from a flat parameter vector, so the
//! finite-difference function and the backward pass exercise exactly the
//! same graph. Hinge checks are sampled with every hinge argument at
//! least `10 h` away from the kink.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::graph::{
    bag_krank_loss_node, disc_loss_node, enc_loss_node, instance_krank_loss_node, triplet_loss_node,
    TapeBagHeads, TapeKRank, TapeMlp, TapeTokens,
};
use crate::losses::Reduction;
use crate::model::{krank_encode_label, ModelDims, ModelState};
use crate::numerics::{grad_check, Tape};
use crate::{Error, Result};

/// Verification outcome for one loss.
#[derive(Debug, Clone, Serialize)]
pub struct LossContract {
    pub loss: String,
    pub configs: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Full gradient-contract report.
#[derive(Debug, Clone, Serialize)]
pub struct ContractReport {
    pub h: f64,
    pub tol: f64,
    pub seed: u64,
    pub losses: Vec<LossContract>,
    pub passed: bool,
}

struct Sample {
    state: ModelState,
    dims: ModelDims,
    rng: ChaCha8Rng,
}

fn sample_config(rng: &mut ChaCha8Rng) -> Sample {
    let dims = ModelDims {
        k: if rng.random_bool(0.5) { 3 } else { 4 },
        d_in: rng.random_range(2..=8),
        d: rng.random_range(2..=6),
        encoder_hidden: vec![rng.random_range(2..=5)],
        disc_hidden: vec![rng.random_range(2..=5)],
    };
    let state = ModelState::init(&dims, rng.random()).unwrap();
    let rng = ChaCha8Rng::seed_from_u64(rng.random());
    Sample { state, dims, rng }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-scale..scale)).collect())
        .collect()
}

fn random_targets(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| krank_encode_label(rng.random_range(1..=k), k).unwrap())
        .collect()
}

/// Run one loss check: `build` must construct the loss tape from the flat
/// parameter vector and report which slice of leaves carries gradients.
fn check_loss<F>(params: &[f64], h: f64, tol: f64, build: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, analytic) = build(params)?;
    let report = grad_check(|theta| build(theta).map(|(v, _)| v), params, &analytic, h, tol)?;
    Ok(report.max_rel_error)
}

fn instance_loss_case(sample: &mut Sample, h: f64, tol: f64) -> Result<f64> {
    let n = sample.rng.random_range(1..=4);
    let features = random_rows(&mut sample.rng, n, sample.dims.d_in, 1.5);
    let targets = random_targets(&mut sample.rng, n, sample.dims.k);
    let n_enc = sample.state.source_encoder.n_params();
    let mut params = sample.state.source_encoder.flatten();
    params.extend(sample.state.instance_head.flatten());
    let state = std::cell::RefCell::new((
        sample.state.source_encoder.clone(),
        sample.state.instance_head.clone(),
    ));
    check_loss(&params, h, tol, |theta| {
        let (enc, head) = &mut *state.borrow_mut();
        enc.load_flat(&theta[..n_enc])?;
        head.load_flat(&theta[n_enc..])?;
        let mut tape = Tape::new();
        let tenc = TapeMlp::register(&mut tape, enc);
        let thead = TapeKRank::register(&mut tape, head);
        let loss =
            instance_krank_loss_node(&mut tape, &tenc, &thead, &features, &targets, Reduction::Mean);
        let adj = tape.backward(loss);
        let mut g = tenc.read_grads(&adj);
        g.extend(thead.read_grads(&adj));
        Ok((tape.scalar(loss), g))
    })
}

fn bag_loss_case(sample: &mut Sample, h: f64, tol: f64) -> Result<f64> {
    let n_bags = sample.rng.random_range(1..=4);
    let bags: Vec<Vec<Vec<f64>>> = (0..n_bags)
        .map(|_| {
            let size = sample.rng.random_range(1..=5);
            random_rows(&mut sample.rng, size, sample.dims.d_in, 1.5)
        })
        .collect();
    let targets = random_targets(&mut sample.rng, n_bags, sample.dims.k);
    let n_enc = sample.state.source_encoder.n_params();
    let n_tok = sample.state.tokens.n_params();
    let mut params = sample.state.source_encoder.flatten();
    params.extend(sample.state.tokens.flatten());
    params.extend(sample.state.bag_heads.flatten());
    let state = std::cell::RefCell::new((
        sample.state.source_encoder.clone(),
        sample.state.tokens.clone(),
        sample.state.bag_heads.clone(),
    ));
    check_loss(&params, h, tol, |theta| {
        let (enc, tokens, heads) = &mut *state.borrow_mut();
        enc.load_flat(&theta[..n_enc])?;
        tokens.load_flat(&theta[n_enc..n_enc + n_tok])?;
        heads.load_flat(&theta[n_enc + n_tok..])?;
        let mut tape = Tape::new();
        let tenc = TapeMlp::register(&mut tape, enc);
        let ttok = TapeTokens::register(&mut tape, tokens);
        let thead = TapeBagHeads::register(&mut tape, heads);
        let bag_nodes: Vec<Vec<crate::numerics::NodeId>> = bags
            .iter()
            .map(|bag| {
                bag.iter()
                    .map(|f| {
                        let x = tape.leaf(f.clone());
                        tenc.forward(&mut tape, x)
                    })
                    .collect()
            })
            .collect();
        let loss =
            bag_krank_loss_node(&mut tape, &ttok, &thead, &bag_nodes, &targets, Reduction::Mean);
        let adj = tape.backward(loss);
        let mut g = tenc.read_grads(&adj);
        g.extend(ttok.read_grads(&adj));
        g.extend(thead.read_grads(&adj));
        Ok((tape.scalar(loss), g))
    })
}

fn disc_loss_case(sample: &mut Sample, h: f64, tol: f64) -> Result<f64> {
    let ns = sample.rng.random_range(1..=4);
    let nt = sample.rng.random_range(1..=4);
    let src = random_rows(&mut sample.rng, ns, sample.dims.d, 1.5);
    let tgt = random_rows(&mut sample.rng, nt, sample.dims.d, 1.5);
    let params = sample.state.discriminator.flatten();
    let state = std::cell::RefCell::new(sample.state.discriminator.clone());
    check_loss(&params, h, tol, |theta| {
        let disc = &mut *state.borrow_mut();
        disc.load_flat(theta)?;
        let mut tape = Tape::new();
        let tdisc = TapeMlp::register(&mut tape, disc);
        let src_nodes: Vec<_> = src.iter().map(|e| tape.leaf(e.clone())).collect();
        let tgt_nodes: Vec<_> = tgt.iter().map(|e| tape.leaf(e.clone())).collect();
        let loss = disc_loss_node(&mut tape, &tdisc, &src_nodes, &tgt_nodes, Reduction::Mean);
        let adj = tape.backward(loss);
        Ok((tape.scalar(loss), tdisc.read_grads(&adj)))
    })
}

fn enc_loss_case(sample: &mut Sample, h: f64, tol: f64) -> Result<f64> {
    let nt = sample.rng.random_range(1..=4);
    let feats = random_rows(&mut sample.rng, nt, sample.dims.d_in, 1.5);
    let disc = sample.state.discriminator.clone();
    let params = sample.state.target_encoder.flatten();
    let state = std::cell::RefCell::new(sample.state.target_encoder.clone());
    check_loss(&params, h, tol, |theta| {
        let enc = &mut *state.borrow_mut();
        enc.load_flat(theta)?;
        let mut tape = Tape::new();
        let tenc = TapeMlp::register(&mut tape, enc);
        let tdisc = TapeMlp::register(&mut tape, &disc);
        let emb: Vec<_> = feats
            .iter()
            .map(|f| {
                let x = tape.leaf(f.clone());
                tenc.forward(&mut tape, x)
            })
            .collect();
        let loss = enc_loss_node(&mut tape, &tdisc, &emb, Reduction::Mean);
        let adj = tape.backward(loss);
        Ok((tape.scalar(loss), tenc.read_grads(&adj)))
    })
}

/// Hinge arguments and the smallest anchor-prototype distance of a
/// triplet configuration at given encoder params.
fn hinge_args(
    enc: &crate::numerics::MlpParams,
    feats: &[Vec<f64>],
    pos: &[Vec<f64>],
    neg: &[Vec<f64>],
    margin: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut out = Vec::with_capacity(feats.len());
    let mut min_dist = f64::INFINITY;
    for ((f, p), n) in feats.iter().zip(pos.iter()).zip(neg.iter()) {
        let e = crate::numerics::mlp_apply(enc, f)?;
        let dp = e.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let dn = e.iter().zip(n.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        min_dist = min_dist.min(dp).min(dn);
        out.push(dp - dn + margin);
    }
    Ok((out, min_dist))
}

struct TripletCase {
    feats: Vec<Vec<f64>>,
    pos: Vec<Vec<f64>>,
    neg: Vec<Vec<f64>>,
    margin: f64,
}

/// Sample a triplet configuration whose hinge arguments all sit at least
/// `10 h` from the kink and whose distances are bounded away from zero.
fn sample_triplet_case(sample: &mut Sample, h: f64) -> Result<TripletCase> {
    let enc = sample.state.target_encoder.clone();
    for _ in 0..200 {
        let n = sample.rng.random_range(1..=4);
        let feats = random_rows(&mut sample.rng, n, sample.dims.d_in, 1.5);
        let pos = random_rows(&mut sample.rng, n, sample.dims.d, 1.0);
        let neg = random_rows(&mut sample.rng, n, sample.dims.d, 1.0);
        let margin = sample.rng.random_range(0.1..1.5);
        let (args, min_dist) = hinge_args(&enc, &feats, &pos, &neg, margin)?;
        let clear_of_kink = args.iter().all(|a| a.abs() >= 10.0 * h);
        // Distances bounded away from zero keep the norm gradient defined
        // and the central difference well-conditioned.
        if clear_of_kink && min_dist > 1e-2 {
            return Ok(TripletCase { feats, pos, neg, margin });
        }
    }
    Err(Error::InvalidArgument(
        "could not sample a triplet configuration away from the hinge kink".into(),
    ))
}

fn triplet_loss_case(sample: &mut Sample, h: f64, tol: f64) -> Result<f64> {
    let case = sample_triplet_case(sample, h)?;
    let params = sample.state.target_encoder.flatten();
    let state = std::cell::RefCell::new(sample.state.target_encoder.clone());
    check_loss(&params, h, tol, |theta| {
        let enc = &mut *state.borrow_mut();
        enc.load_flat(theta)?;
        let mut tape = Tape::new();
        let tenc = TapeMlp::register(&mut tape, enc);
        let anchors: Vec<_> = case
            .feats
            .iter()
            .map(|f| {
                let x = tape.leaf(f.clone());
                tenc.forward(&mut tape, x)
            })
            .collect();
        let loss = triplet_loss_node(
            &mut tape, &anchors, &case.pos, &case.neg, case.margin, Reduction::Mean,
        );
        let adj = tape.backward(loss);
        Ok((tape.scalar(loss), tenc.read_grads(&adj)))
    })
}

fn total_loss_case(sample: &mut Sample, h: f64, tol: f64) -> Result<f64> {
    let triplet = sample_triplet_case(sample, h)?;
    let n_bags = sample.rng.random_range(1..=3);
    let bags: Vec<Vec<Vec<f64>>> = (0..n_bags)
        .map(|_| {
            let size = sample.rng.random_range(1..=4);
            random_rows(&mut sample.rng, size, sample.dims.d_in, 1.5)
        })
        .collect();
    let bag_targets = random_targets(&mut sample.rng, n_bags, sample.dims.k);
    let alpha = 0.01;
    let disc = sample.state.discriminator.clone();
    let tokens = sample.state.tokens.clone();
    let heads = sample.state.bag_heads.clone();
    let params = sample.state.target_encoder.flatten();
    let state = std::cell::RefCell::new(sample.state.target_encoder.clone());
    check_loss(&params, h, tol, |theta| {
        let enc = &mut *state.borrow_mut();
        enc.load_flat(theta)?;
        let mut tape = Tape::new();
        let tenc = TapeMlp::register(&mut tape, enc);
        let tdisc = TapeMlp::register(&mut tape, &disc);
        let ttok = TapeTokens::register(&mut tape, &tokens);
        let thead = TapeBagHeads::register(&mut tape, &heads);

        let bag_nodes: Vec<Vec<crate::numerics::NodeId>> = bags
            .iter()
            .map(|bag| {
                bag.iter()
                    .map(|f| {
                        let x = tape.leaf(f.clone());
                        tenc.forward(&mut tape, x)
                    })
                    .collect()
            })
            .collect();
        let l_bag =
            bag_krank_loss_node(&mut tape, &ttok, &thead, &bag_nodes, &bag_targets, Reduction::Mean);
        let all_emb: Vec<_> = bag_nodes.iter().flatten().copied().collect();
        let l_enc = enc_loss_node(&mut tape, &tdisc, &all_emb, Reduction::Mean);
        let anchors: Vec<_> = triplet
            .feats
            .iter()
            .map(|f| {
                let x = tape.leaf(f.clone());
                tenc.forward(&mut tape, x)
            })
            .collect();
        let l_triplet = triplet_loss_node(
            &mut tape, &anchors, &triplet.pos, &triplet.neg, triplet.margin, Reduction::Mean,
        );
        let total = tape.lin_comb(&[(l_bag, 1.0), (l_enc, 1.0), (l_triplet, alpha)], 0.0);
        let adj = tape.backward(total);
        Ok((tape.scalar(total), tenc.read_grads(&adj)))
    })
}

/// Run the full gradient contract: `configs_per_loss` random small
/// configurations for each training loss, checked at step `h` against
/// tolerance `tol`.
pub fn run_gradient_contract(
    seed: u64,
    configs_per_loss: usize,
    h: f64,
    tol: f64,
) -> Result<ContractReport> {
    type Case = fn(&mut Sample, f64, f64) -> Result<f64>;
    let cases: [(&str, Case); 6] = [
        ("loss_instance_krank", instance_loss_case),
        ("loss_bag", bag_loss_case),
        ("loss_disc", disc_loss_case),
        ("loss_enc", enc_loss_case),
        ("loss_triplet", triplet_loss_case),
        ("loss_target_total", total_loss_case),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut losses = Vec::with_capacity(cases.len());
    let mut passed = true;
    for (name, case) in cases {
        let mut max_rel = 0.0_f64;
        for _ in 0..configs_per_loss {
            let mut sample = sample_config(&mut rng);
            let rel = case(&mut sample, h, tol)?;
            max_rel = max_rel.max(rel);
        }
        let ok = max_rel < tol;
        passed &= ok;
        losses.push(LossContract {
            loss: name.to_string(),
            configs: configs_per_loss,
            max_rel_error: max_rel,
            passed: ok,
        });
    }
    Ok(ContractReport { h, tol, seed, losses, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_contract_small_sample() {
        let report = run_gradient_contract(11, 3, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.losses.len(), 6);
        for l in &report.losses {
            assert!(l.max_rel_error < 1e-4, "{}: {}", l.loss, l.max_rel_error);
        }
    }
}
