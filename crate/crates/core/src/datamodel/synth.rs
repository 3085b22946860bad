//! Synthetic two-domain generator with an ordinal class layout.
//!
//! Class centroids sit on a line with equal spacing, so confusing class k
//! with k±1 is easier than with k±2. The target domain applies an affine
//! transform (rotation in the first coordinate plane, isotropic scale,
//! translation) to the source generative process.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mix_seed, Bag, Domain, DomainDataset, Instance, SeverityLabel};
use crate::{Error, Result};

/// Generator configuration for a pair of domain-shifted datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftConfig {
    pub d_in: usize,
    pub k: usize,
    /// Distance between consecutive class centroids along the class axis.
    pub spacing: f64,
    /// Per-coordinate standard deviation around each centroid.
    pub spread: f64,
    /// Rotation angle (radians) applied in the (0, 1) coordinate plane of
    /// the target domain. Requires `d_in >= 2` when non-zero.
    pub rotation: f64,
    /// Target translation vector; must have length `d_in`.
    pub translation: Vec<f64>,
    /// Isotropic target scale factor.
    pub scale: f64,
    pub bag_size_min: usize,
    pub bag_size_max: usize,
    /// Bags generated per domain.
    pub n_bags: usize,
    /// Optional class weights (length `k`) for drawing sub-maximum instance
    /// labels; `None` means uniform over `1..=Y`.
    pub class_mixture: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            d_in: 8,
            k: 4,
            spacing: 2.0,
            spread: 0.6,
            rotation: 0.7,
            translation: vec![1.06; 8],
            scale: 1.2,
            bag_size_min: 4,
            bag_size_max: 30,
            n_bags: 40,
            class_mixture: None,
            seed: 7,
        }
    }
}

impl ShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 {
            return Err(Error::Validation("shift: d_in must be positive".into()));
        }
        if self.k < 2 {
            return Err(Error::Validation(format!("shift: k must be >= 2, got {}", self.k)));
        }
        if self.spacing <= 0.0 {
            return Err(Error::Validation("shift: spacing must be positive".into()));
        }
        if self.spread <= 0.0 {
            return Err(Error::Validation("shift: spread must be positive".into()));
        }
        if self.rotation != 0.0 && self.d_in < 2 {
            return Err(Error::Validation(
                "shift: rotation needs at least two feature dimensions".into(),
            ));
        }
        if self.translation.len() != self.d_in {
            return Err(Error::Validation(format!(
                "shift: translation has length {}, expected d_in = {}",
                self.translation.len(),
                self.d_in
            )));
        }
        if self.scale <= 0.0 {
            return Err(Error::Validation("shift: scale must be positive".into()));
        }
        if self.bag_size_min < 1 || self.bag_size_max < self.bag_size_min {
            return Err(Error::Validation(format!(
                "shift: bag size range [{}, {}] is degenerate",
                self.bag_size_min, self.bag_size_max
            )));
        }
        if self.n_bags == 0 {
            return Err(Error::Validation("shift: n_bags must be positive".into()));
        }
        if let Some(mix) = &self.class_mixture {
            if mix.len() != self.k {
                return Err(Error::Validation(format!(
                    "shift: class_mixture has {} weights, expected k = {}",
                    mix.len(),
                    self.k
                )));
            }
            if mix.iter().any(|w| *w < 0.0) || mix.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Validation(
                    "shift: class_mixture weights must be non-negative with positive sum".into(),
                ));
            }
        }
        Ok(())
    }

    /// Centroid of class `label` (1-based) along the unit diagonal.
    pub fn centroid(&self, label: usize) -> Vec<f64> {
        let u = 1.0 / (self.d_in as f64).sqrt();
        vec![(label - 1) as f64 * self.spacing * u; self.d_in]
    }
}

fn draw_sub_label<R: Rng>(rng: &mut R, max_label: usize, mixture: Option<&[f64]>) -> usize {
    match mixture {
        None => rng.random_range(1..=max_label),
        Some(weights) => {
            let total: f64 = weights[..max_label].iter().sum();
            if total <= 0.0 {
                return max_label;
            }
            let mut t = rng.random_range(0.0..total);
            for (i, w) in weights[..max_label].iter().enumerate() {
                if t < *w {
                    return i + 1;
                }
                t -= w;
            }
            max_label
        }
    }
}

/// Apply the target affine map: rotate in the (0, 1) plane, scale, translate.
fn target_transform(cfg: &ShiftConfig, x: &mut [f64]) {
    if cfg.rotation != 0.0 {
        let (s, c) = cfg.rotation.sin_cos();
        let (x0, x1) = (x[0], x[1]);
        x[0] = c * x0 - s * x1;
        x[1] = s * x0 + c * x1;
    }
    for (xi, ti) in x.iter_mut().zip(cfg.translation.iter()) {
        *xi = cfg.scale * *xi + ti;
    }
}

fn generate_domain(cfg: &ShiftConfig, domain: Domain, seed: u64) -> Result<DomainDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.spread).expect("spread validated positive");
    let prefix = match domain {
        Domain::Source => "s",
        Domain::Target => "t",
    };
    let mut bags = Vec::with_capacity(cfg.n_bags);
    for b in 0..cfg.n_bags {
        let bag_id = format!("{prefix}{b:04}");
        let size = rng.random_range(cfg.bag_size_min..=cfg.bag_size_max);
        let bag_label = rng.random_range(1..=cfg.k);
        // One instance is forced to the bag label so the max rule holds.
        let mut labels = vec![bag_label];
        for _ in 1..size {
            labels.push(draw_sub_label(&mut rng, bag_label, cfg.class_mixture.as_deref()));
        }
        labels.shuffle(&mut rng);
        let mut instances = Vec::with_capacity(size);
        for (j, label) in labels.iter().enumerate() {
            let mut x = cfg.centroid(*label);
            for xi in x.iter_mut() {
                *xi += noise.sample(&mut rng);
            }
            if domain == Domain::Target {
                target_transform(cfg, &mut x);
            }
            instances.push(Instance {
                id: format!("{bag_id}-{j}"),
                features: x,
                label: Some(SeverityLabel::new(*label, cfg.k)?),
            });
        }
        bags.push(Bag {
            bag_id,
            domain,
            instances,
            bag_label: SeverityLabel::new(bag_label, cfg.k)?,
        });
    }
    let ds = DomainDataset {
        domain,
        k: cfg.k,
        d_in: cfg.d_in,
        bags,
    };
    ds.validate()?;
    Ok(ds)
}

/// Generate a (source, target) pair. Fully deterministic for a fixed
/// config: the same seed always produces identical datasets.
pub fn generate_synthetic_domains(cfg: &ShiftConfig) -> Result<(DomainDataset, DomainDataset)> {
    cfg.validate()?;
    let source = generate_domain(cfg, Domain::Source, mix_seed(cfg.seed, 1))?;
    let target = generate_domain(cfg, Domain::Target, mix_seed(cfg.seed, 2))?;
    Ok((source, target))
}
