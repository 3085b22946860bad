//! Multi-seed ablation harness: one pretrained state per seed shared
//! across the adaptation variants, with per-variant target-domain metrics,
//! alignment scores, and optional PCA exports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{adapt_target, frozen_group_bytes, pretrain_source, AblationSwitches, TrainConfig};
use crate::datamodel::{generate_synthetic_domains, ShiftConfig};
use crate::metrics::{alignment_score, write_pca_csv, AlignmentScore, EvalReport};
use crate::model::{
    collect_embeddings_by_class, evaluate_bags, evaluate_instances, pca_rows,
};
use crate::{Error, Result};

/// Adaptation variants, ordered strongest to weakest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Adversarial alignment + shared tokens + triplet loss.
    Full,
    /// Adversarial alignment + shared tokens.
    NoTriplet,
    /// Adversarial alignment only.
    AdvOnly,
    /// No adaptation: the pretrained model evaluated on target data.
    SourceOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::Full, Variant::NoTriplet, Variant::AdvOnly, Variant::SourceOnly];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_triplet" => Ok(Variant::NoTriplet),
            "adv_only" => Ok(Variant::AdvOnly),
            "source_only" => Ok(Variant::SourceOnly),
            other => Err(Error::InvalidArgument(format!(
                "unknown ablation variant '{other}' (expected full, no_triplet, adv_only, source_only)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTriplet => "no_triplet",
            Variant::AdvOnly => "adv_only",
            Variant::SourceOnly => "source_only",
        }
    }

    pub fn switches(self) -> AblationSwitches {
        match self {
            Variant::Full => AblationSwitches {
                use_adv: true,
                use_shared_tokens: true,
                use_triplet: true,
            },
            Variant::NoTriplet => AblationSwitches {
                use_adv: true,
                use_shared_tokens: true,
                use_triplet: false,
            },
            Variant::AdvOnly => AblationSwitches {
                use_adv: true,
                use_shared_tokens: false,
                use_triplet: false,
            },
            Variant::SourceOnly => AblationSwitches {
                use_adv: false,
                use_shared_tokens: false,
                use_triplet: false,
            },
        }
    }
}

/// One variant evaluated for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Target-domain instance-level metrics (the primary readout).
    pub instance: EvalReport,
    /// Target-domain bag-level metrics, for diagnostics.
    pub bag: EvalReport,
    /// Class-wise source/target centroid distance in embedding space.
    pub alignment: AlignmentScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub runs: Vec<SeedRun>,
    pub mean_instance_accuracy: f64,
    pub mean_instance_macro_f1: f64,
    /// Mean over seeds with a defined kappa; `None` if every seed
    /// degenerated.
    pub mean_instance_qwk: Option<f64>,
    pub mean_alignment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub variants: Vec<VariantSummary>,
}

impl AblationReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v.name())
    }
}

/// Run every requested variant for every seed. Each seed generates its
/// own dataset pair and pretrains once; all variants adapt from that
/// shared stage-1 state. Frozen groups are byte-compared against their
/// stage-1 values on every run. With `export_dir` set, a PCA CSV is
/// written per (seed, variant).
pub fn run_ablation(
    shift: &ShiftConfig,
    train: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    export_dir: Option<&Path>,
) -> Result<AblationReport> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one variant and one seed".into()));
    }
    let mut summaries: Vec<VariantSummary> = variants
        .iter()
        .map(|v| VariantSummary {
            variant: v.name().to_string(),
            runs: Vec::new(),
            mean_instance_accuracy: 0.0,
            mean_instance_macro_f1: 0.0,
            mean_instance_qwk: None,
            mean_alignment: 0.0,
        })
        .collect();

    for seed in seeds {
        let shift_cfg = ShiftConfig { seed: *seed, ..shift.clone() };
        let (source, target) = generate_synthetic_domains(&shift_cfg)?;
        let base_cfg = TrainConfig { seed: *seed, ..train.clone() };
        let (pretrained, _) = pretrain_source(&base_cfg, &source)?;
        let pretrained_frozen = frozen_group_bytes(&pretrained);

        for (vi, variant) in variants.iter().enumerate() {
            let cfg = TrainConfig { ablation: variant.switches(), ..base_cfg.clone() };
            let (adapted, _) = adapt_target(&cfg, &pretrained, &source, &target)?;
            if frozen_group_bytes(&adapted) != pretrained_frozen {
                return Err(Error::Validation(format!(
                    "variant {} seed {seed}: frozen groups diverged from stage-1 values",
                    variant.name()
                )));
            }
            let instance = evaluate_instances(&adapted, &target)?;
            let bag = evaluate_bags(&adapted, &target)?;
            let src_by_class = collect_embeddings_by_class(&adapted, &source)?;
            let tgt_by_class = collect_embeddings_by_class(&adapted, &target)?;
            let alignment = alignment_score(&src_by_class, &tgt_by_class)?;
            if let Some(dir) = export_dir {
                let rows = pca_rows(&adapted, &source, &target)?;
                let path = dir.join(format!("pca_seed{seed}_{}.csv", variant.name()));
                write_pca_csv(&path, &rows)?;
            }
            summaries[vi].runs.push(SeedRun { seed: *seed, instance, bag, alignment });
        }
    }

    for summary in summaries.iter_mut() {
        let n = summary.runs.len() as f64;
        summary.mean_instance_accuracy =
            summary.runs.iter().map(|r| r.instance.accuracy).sum::<f64>() / n;
        summary.mean_instance_macro_f1 =
            summary.runs.iter().map(|r| r.instance.macro_f1).sum::<f64>() / n;
        let defined: Vec<f64> = summary.runs.iter().filter_map(|r| r.instance.qwk).collect();
        summary.mean_instance_qwk = (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        summary.mean_alignment =
            summary.runs.iter().map(|r| r.alignment.mean).sum::<f64>() / n;
    }

    Ok(AblationReport { seeds: seeds.to_vec(), variants: summaries })
}
