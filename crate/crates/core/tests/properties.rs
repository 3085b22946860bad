//! Property tests for the spec-level invariants.

use proptest::prelude::*;

use ordmil::datamodel::{oversample_indices, Bag, Domain, Instance, SeverityLabel};
use ordmil::losses::select_triplet_anchors;
use ordmil::model::{
    bag_attention, compute_prototypes, krank_decode, krank_encode_label,
};
use ordmil::numerics::{adam_step, softmax, AdamState};

proptest! {
    #[test]
    fn softmax_shift_invariance(
        scores in proptest::collection::vec(-20.0f64..20.0, 1..12),
        shift in -50.0f64..50.0,
    ) {
        let base = softmax(&scores).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let moved = softmax(&shifted).unwrap();
        for (a, b) in base.iter().zip(moved.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let sum: f64 = base.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(base.iter().all(|p| *p > 0.0 && *p <= 1.0));
    }

    #[test]
    fn adam_zero_gradient_never_moves_params_for_any_state(
        params in proptest::collection::vec(-5.0f64..5.0, 1..8),
        m in proptest::collection::vec(-2.0f64..2.0, 8),
        v in proptest::collection::vec(0.0f64..2.0, 8),
        t in 0u64..100,
    ) {
        let n = params.len();
        let mut state = AdamState::new(n);
        state.m.copy_from_slice(&m[..n]);
        state.v.copy_from_slice(&v[..n]);
        state.t = t;
        let mut theta = params.clone();
        adam_step(&mut theta, &vec![0.0; n], &mut state, 0.05).unwrap();
        prop_assert_eq!(theta, params);
        prop_assert_eq!(state.t, t + 1);
    }

    #[test]
    fn krank_round_trip(k in 2usize..=6, y_frac in 0.0f64..1.0) {
        let y = 1 + ((y_frac * k as f64) as usize).min(k - 1);
        let encoded = krank_encode_label(y, k).unwrap();
        prop_assert_eq!(encoded.len(), k - 1);
        prop_assert_eq!(krank_decode(&encoded).unwrap(), y);
    }

    #[test]
    fn oversample_balances_every_class(
        labels in proptest::collection::vec(0usize..5, 1..40),
        seed in 0u64..1000,
    ) {
        let out = oversample_indices(&labels, seed).unwrap();
        let mut input_counts = std::collections::BTreeMap::new();
        for l in &labels {
            *input_counts.entry(*l).or_insert(0usize) += 1;
        }
        let max = *input_counts.values().max().unwrap();
        let mut out_counts = std::collections::BTreeMap::new();
        for idx in &out {
            prop_assert!(*idx < labels.len());
            *out_counts.entry(labels[*idx]).or_insert(0usize) += 1;
        }
        for class in input_counts.keys() {
            prop_assert_eq!(out_counts[class], max);
        }
        prop_assert_eq!(out.len(), max * input_counts.len());
    }

    #[test]
    fn attention_weights_stay_on_the_simplex(
        token in proptest::collection::vec(-3.0f64..3.0, 2..6),
        flat in proptest::collection::vec(-3.0f64..3.0, 2..60),
    ) {
        let d = token.len();
        let n = (flat.len() / d).max(1);
        let embeddings: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..d).map(|j| flat[(i * d + j) % flat.len()]).collect())
            .collect();
        let w = bag_attention(&token, &embeddings).unwrap();
        prop_assert_eq!(w.len(), embeddings.len());
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        let sum: f64 = w.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn anchor_gate_matches_brute_force(
        bag_label in 1usize..=4,
        preds in proptest::collection::vec(1usize..=4, 1..12),
    ) {
        let k = 4;
        let bag = Bag {
            bag_id: "p".into(),
            domain: Domain::Target,
            bag_label: SeverityLabel::new(bag_label, k).unwrap(),
            instances: preds
                .iter()
                .enumerate()
                .map(|(j, _)| Instance { id: format!("i{j}"), features: vec![0.0], label: None })
                .collect(),
        };
        let got = select_triplet_anchors(&bag, 0, &preds, k).unwrap();
        let expected: Vec<usize> = preds
            .iter()
            .enumerate()
            .filter(|(_, p)| bag_label <= k - 1 && **p > bag_label)
            .map(|(j, _)| j)
            .collect();
        let got_idx: Vec<usize> = got.iter().map(|g| g.instance_index).collect();
        prop_assert_eq!(got_idx, expected);
        for g in &got {
            prop_assert_eq!(g.bag_label.get(), bag_label);
            prop_assert!(g.predicted > bag_label);
        }
    }
}

#[test]
fn prototypes_lie_in_per_coordinate_hull() {
    // The class mean must sit inside the coordinate-wise bounding box of
    // its class embeddings (an identity encoder makes embeddings equal
    // features).
    use ordmil::numerics::{DenseLayer, Matrix, MlpParams};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let k = 3;
    let d = 3;
    let identity = MlpParams {
        layers: vec![DenseLayer { weight: Matrix::identity(d), bias: vec![0.0; d] }],
    };
    for _ in 0..20 {
        let instances: Vec<Instance> = (0..15)
            .map(|i| {
                let label = 1 + i % k;
                Instance {
                    id: format!("i{i}"),
                    features: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    label: Some(SeverityLabel::new(label, k).unwrap()),
                }
            })
            .collect();
        let bag_label = instances.iter().map(|i| i.label.unwrap()).max().unwrap();
        let ds = ordmil::datamodel::DomainDataset {
            domain: Domain::Source,
            k,
            d_in: d,
            bags: vec![Bag {
                bag_id: "b".into(),
                domain: Domain::Source,
                instances: instances.clone(),
                bag_label,
            }],
        };
        let protos = compute_prototypes(&ds, &identity).unwrap();
        for class in 1..=k {
            let members: Vec<&Instance> = instances
                .iter()
                .filter(|i| i.label.unwrap().get() == class)
                .collect();
            let proto = protos.get(class).unwrap();
            for c in 0..d {
                let lo = members.iter().map(|m| m.features[c]).fold(f64::INFINITY, f64::min);
                let hi = members.iter().map(|m| m.features[c]).fold(f64::NEG_INFINITY, f64::max);
                assert!(proto[c] >= lo - 1e-12 && proto[c] <= hi + 1e-12);
            }
            // And it equals the brute-force mean.
            let mean: Vec<f64> = (0..d)
                .map(|c| {
                    members.iter().map(|m| m.features[c]).sum::<f64>() / members.len() as f64
                })
                .collect();
            for (p, m) in proto.iter().zip(mean.iter()) {
                assert!((p - m).abs() < 1e-12);
            }
        }
    }
}
