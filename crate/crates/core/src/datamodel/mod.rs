//! Bags, domains, labels, synthetic domain-shift generation, oversampling,
//! and dataset file I/O.
//!
//! Severity labels follow the internal convention `1..=K` with the total
//! order `K > K-1 > ... > 1`; the file format uses the clinical `0..K-1`
//! convention and the I/O layer converts. A bag's label is the maximum
//! severity among its instances.

mod io;
mod synth;

pub use io::{load_dataset, save_dataset};
pub use synth::{generate_synthetic_domains, ShiftConfig};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::all_finite;
use crate::{Error, Result};

/// Ordinal severity class, internally `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeverityLabel(usize);

impl SeverityLabel {
    pub fn new(value: usize, k: usize) -> Result<Self> {
        if value < 1 || value > k {
            return Err(Error::InvalidArgument(format!(
                "severity label {value} outside 1..={k}"
            )));
        }
        Ok(Self(value))
    }

    /// Convert from the on-disk clinical `0..K-1` convention.
    pub fn from_clinical(raw: i64, k: usize) -> Result<Self> {
        if raw < 0 || raw as usize >= k {
            return Err(Error::InvalidArgument(format!(
                "clinical label {raw} outside 0..={}",
                k - 1
            )));
        }
        Ok(Self(raw as usize + 1))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    #[inline]
    pub fn to_clinical(self) -> usize {
        self.0 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::Validation(format!("unknown domain tag '{other}'"))),
        }
    }
}

/// One feature vector with an optional severity label. Source instances
/// always carry labels; target instance labels exist only for evaluation
/// and are never shown to training.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Option<SeverityLabel>,
}

/// Non-empty ordered collection of instances with a max-severity label.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub bag_id: String,
    pub domain: Domain,
    pub instances: Vec<Instance>,
    pub bag_label: SeverityLabel,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// All bags of one domain, sharing `k` and feature length `d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain: Domain,
    pub k: usize,
    pub d_in: usize,
    pub bags: Vec<Bag>,
}

impl DomainDataset {
    pub fn n_instances(&self) -> usize {
        self.bags.iter().map(Bag::len).sum()
    }

    /// Iterate `(bag_index, instance_index, instance)` over all instances.
    pub fn instances(&self) -> impl Iterator<Item = (usize, usize, &Instance)> {
        self.bags.iter().enumerate().flat_map(|(bi, bag)| {
            bag.instances
                .iter()
                .enumerate()
                .map(move |(ii, inst)| (bi, ii, inst))
        })
    }

    pub fn fully_labeled(&self) -> bool {
        self.instances().all(|(_, _, inst)| inst.label.is_some())
    }

    /// Check every structural invariant, naming the offending bag or
    /// instance in the error.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Validation(format!("k must be >= 2, got {}", self.k)));
        }
        for bag in &self.bags {
            if bag.is_empty() {
                return Err(Error::Validation(format!("bag '{}' is empty", bag.bag_id)));
            }
            if bag.domain != self.domain {
                return Err(Error::Validation(format!(
                    "bag '{}' is tagged {} in a {} dataset",
                    bag.bag_id,
                    bag.domain.as_str(),
                    self.domain.as_str()
                )));
            }
            if bag.bag_label.get() > self.k {
                return Err(Error::Validation(format!(
                    "bag '{}' label {} exceeds k={}",
                    bag.bag_id,
                    bag.bag_label.get(),
                    self.k
                )));
            }
            let mut labeled_max = 0usize;
            let mut n_labeled = 0usize;
            for inst in &bag.instances {
                if inst.features.len() != self.d_in {
                    return Err(Error::Shape(format!(
                        "instance '{}' in bag '{}' has {} features, expected {}",
                        inst.id,
                        bag.bag_id,
                        inst.features.len(),
                        self.d_in
                    )));
                }
                if !all_finite(&inst.features) {
                    return Err(Error::NonFinite(format!(
                        "features of instance '{}' in bag '{}'",
                        inst.id, bag.bag_id
                    )));
                }
                if let Some(label) = inst.label {
                    n_labeled += 1;
                    labeled_max = labeled_max.max(label.get());
                    if label.get() > self.k {
                        return Err(Error::Validation(format!(
                            "instance '{}' label {} exceeds k={}",
                            inst.id,
                            label.get(),
                            self.k
                        )));
                    }
                } else if self.domain == Domain::Source {
                    return Err(Error::Validation(format!(
                        "source instance '{}' in bag '{}' is missing its label",
                        inst.id, bag.bag_id
                    )));
                }
            }
            // Any labeled instance above the bag label is inconsistent; when
            // every instance is labeled the bag label must be the exact max.
            if n_labeled > 0 && labeled_max > bag.bag_label.get() {
                return Err(Error::Validation(format!(
                    "bag '{}' has label {} but contains an instance of severity {}",
                    bag.bag_id,
                    bag.bag_label.get(),
                    labeled_max
                )));
            }
            if n_labeled == bag.len() && labeled_max != bag.bag_label.get() {
                return Err(Error::Validation(format!(
                    "bag '{}' label {} is not the max of its instance labels ({})",
                    bag.bag_id,
                    bag.bag_label.get(),
                    labeled_max
                )));
            }
        }
        Ok(())
    }
}

/// Max-severity rule: the bag label is the most severe instance label.
pub fn bag_label_from_instances(labels: &[SeverityLabel]) -> Result<SeverityLabel> {
    labels
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidArgument("bag label of an empty label list".into()))
}

/// splitmix64 over `seed ^ tag`; keeps per-purpose random streams
/// independent while staying reproducible from one run seed.
pub(crate) fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Duplicate-to-max oversampling: every class's index count is raised to
/// the maximum per-class count by sampling with replacement within the
/// class, and the combined order is shuffled by `seed`.
pub fn oversample_indices(labels: &[usize], seed: u64) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("oversample_indices: empty input".into()));
    }
    let mut by_class: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match by_class.iter_mut().find(|(c, _)| c == l) {
            Some((_, idxs)) => idxs.push(i),
            None => by_class.push((*l, vec![i])),
        }
    }
    let max_count = by_class.iter().map(|(_, v)| v.len()).max().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(max_count * by_class.len());
    for (_, idxs) in &by_class {
        out.extend_from_slice(idxs);
        for _ in idxs.len()..max_count {
            out.push(idxs[rng.random_range(0..idxs.len())]);
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}
