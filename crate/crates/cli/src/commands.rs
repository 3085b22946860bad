//! Command implementations. Every command with an output directory
//! writes its manifest before doing any work.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use ordmil::contract::run_gradient_contract;
use ordmil::datamodel::{generate_synthetic_domains, load_dataset, save_dataset};
use ordmil::metrics::{write_json, write_pca_csv, EvalReport};
use ordmil::model::{evaluate_bags, evaluate_instances, load_model, pca_rows, save_model};
use ordmil::training::{adapt_target, pretrain_source, run_ablation, Variant};

use crate::config::{load_config, single_seed, RunConfig};
use crate::manifest::{write_manifest, ManifestSnapshot};
use crate::CliError;

fn prepare_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Run(format!("cannot create output directory {}: {e}", out.display())))
}

fn snapshot(
    command: &str,
    config_path: Option<&Path>,
    config: &RunConfig,
    seeds: &[u64],
    inputs: &[(&str, &Path)],
    outputs: &[&str],
) -> ManifestSnapshot {
    ManifestSnapshot {
        command: command.to_string(),
        config_path: config_path.map(|p| p.display().to_string()),
        config: config.clone(),
        seeds: seeds.to_vec(),
        inputs: inputs
            .iter()
            .map(|(k, v)| (k.to_string(), v.display().to_string()))
            .collect::<BTreeMap<_, _>>(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn gen_data(
    config_path: Option<PathBuf>,
    seed: Option<String>,
    out: Option<PathBuf>,
    print_defaults: bool,
) -> Result<(), CliError> {
    if print_defaults {
        let json = serde_json::to_string_pretty(&RunConfig::default())
            .map_err(|e| CliError::Run(e.to_string()))?;
        println!("{json}");
        return Ok(());
    }
    let out = out.ok_or_else(|| CliError::Usage("gen-data requires --out".into()))?;
    let mut cfg = load_config(config_path.as_deref())?;
    if let Some(s) = single_seed(seed.as_deref())? {
        cfg.set_seed(s);
    }
    prepare_out(&out)?;
    write_manifest(
        &out,
        snapshot(
            "gen-data",
            config_path.as_deref(),
            &cfg,
            &[cfg.shift.seed],
            &[],
            &["source.jsonl", "target.jsonl"],
        ),
    )?;
    let (source, target) = generate_synthetic_domains(&cfg.shift)?;
    save_dataset(&source, &out.join("source.jsonl"))?;
    save_dataset(&target, &out.join("target.jsonl"))?;
    println!("wrote {} and {}", out.join("source.jsonl").display(), out.join("target.jsonl").display());
    Ok(())
}

pub fn pretrain(
    config_path: Option<PathBuf>,
    seed: Option<String>,
    out: PathBuf,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path.as_deref())?;
    if let Some(s) = single_seed(seed.as_deref())? {
        cfg.set_seed(s);
    }
    let source_path = cfg
        .paths
        .source
        .clone()
        .ok_or_else(|| CliError::Run("config missing paths.source for pretrain".into()))?;
    prepare_out(&out)?;
    write_manifest(
        &out,
        snapshot(
            "pretrain",
            config_path.as_deref(),
            &cfg,
            &[cfg.train.seed],
            &[("source", &source_path)],
            &["checkpoint.json", "trainlog.json"],
        ),
    )?;
    let source = load_dataset(&source_path)?;
    let (state, log) = pretrain_source(&cfg.train, &source)?;
    save_model(&state, &out.join("checkpoint.json"))?;
    write_json(&out.join("trainlog.json"), &log)?;
    println!(
        "pretrained {} epochs (best {:?}); checkpoint at {}",
        log.epochs.len(),
        log.best_epoch,
        out.join("checkpoint.json").display()
    );
    Ok(())
}

pub fn adapt(
    config_path: Option<PathBuf>,
    seed: Option<String>,
    out: PathBuf,
) -> Result<(), CliError> {
    let mut cfg = load_config(config_path.as_deref())?;
    if let Some(s) = single_seed(seed.as_deref())? {
        cfg.set_seed(s);
    }
    let checkpoint = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| CliError::Run("config missing paths.checkpoint for adapt".into()))?;
    let source_path = cfg
        .paths
        .source
        .clone()
        .ok_or_else(|| CliError::Run("config missing paths.source for adapt".into()))?;
    let target_path = cfg
        .paths
        .target
        .clone()
        .ok_or_else(|| CliError::Run("config missing paths.target for adapt".into()))?;
    prepare_out(&out)?;
    write_manifest(
        &out,
        snapshot(
            "adapt",
            config_path.as_deref(),
            &cfg,
            &[cfg.train.seed],
            &[
                ("checkpoint", &checkpoint),
                ("source", &source_path),
                ("target", &target_path),
            ],
            &["checkpoint.json", "trainlog.json"],
        ),
    )?;
    let pretrained = load_model(&checkpoint)?;
    let source = load_dataset(&source_path)?;
    let target = load_dataset(&target_path)?;
    let (state, log) = adapt_target(&cfg.train, &pretrained, &source, &target)?;
    save_model(&state, &out.join("checkpoint.json"))?;
    write_json(&out.join("trainlog.json"), &log)?;
    println!(
        "adapted {} epochs; checkpoint at {}",
        log.epochs.len(),
        out.join("checkpoint.json").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalDocument {
    instance: EvalReport,
    bag: EvalReport,
}

pub fn eval(
    config_path: Option<PathBuf>,
    checkpoint: PathBuf,
    dataset: PathBuf,
    out: PathBuf,
) -> Result<(), CliError> {
    let cfg = load_config(config_path.as_deref())?;
    prepare_out(&out)?;
    write_manifest(
        &out,
        snapshot(
            "eval",
            config_path.as_deref(),
            &cfg,
            &[],
            &[("checkpoint", &checkpoint), ("dataset", &dataset)],
            &["eval.json"],
        ),
    )?;
    let state = load_model(&checkpoint)?;
    let ds = load_dataset(&dataset)?;
    let doc = EvalDocument {
        instance: evaluate_instances(&state, &ds)?,
        bag: evaluate_bags(&state, &ds)?,
    };
    write_json(&out.join("eval.json"), &doc)?;
    println!(
        "instance accuracy {:.4}, macro-F1 {:.4}, qwk {:?}; report at {}",
        doc.instance.accuracy,
        doc.instance.macro_f1,
        doc.instance.qwk,
        out.join("eval.json").display()
    );
    Ok(())
}

pub fn ablate(
    config_path: Option<PathBuf>,
    seed: Option<String>,
    variants_spec: Option<String>,
    out: PathBuf,
) -> Result<(), CliError> {
    let cfg = load_config(config_path.as_deref())?;
    let seeds = match seed.as_deref() {
        Some(spec) => crate::config::parse_seeds(spec)?,
        None => vec![cfg.train.seed],
    };
    let variants: Vec<Variant> = match variants_spec.as_deref() {
        None => Variant::ALL.to_vec(),
        Some(spec) => spec
            .split(',')
            .map(|s| Variant::parse(s.trim()).map_err(|e| CliError::Run(e.to_string())))
            .collect::<Result<_, _>>()?,
    };
    prepare_out(&out)?;
    write_manifest(
        &out,
        snapshot(
            "ablate",
            config_path.as_deref(),
            &cfg,
            &seeds,
            &[],
            &["ablation.json"],
        ),
    )?;
    let report = run_ablation(&cfg.shift, &cfg.train, &variants, &seeds, Some(&out))?;
    write_json(&out.join("ablation.json"), &report)?;
    for v in &report.variants {
        println!(
            "{:<12} mean instance accuracy {:.4}, macro-F1 {:.4}, qwk {:?}",
            v.variant, v.mean_instance_accuracy, v.mean_instance_macro_f1, v.mean_instance_qwk
        );
    }
    println!("report at {}", out.join("ablation.json").display());
    Ok(())
}

pub fn grad_check(seed: Option<String>, out: Option<PathBuf>) -> Result<(), CliError> {
    let seed = single_seed(seed.as_deref())?.unwrap_or(7);
    let report = run_gradient_contract(seed, 10, 1e-5, 1e-4)?;
    for l in &report.losses {
        println!(
            "{:<22} configs={} max_rel_error={:.3e} {}",
            l.loss,
            l.configs,
            l.max_rel_error,
            if l.passed { "pass" } else { "FAIL" }
        );
    }
    if let Some(out) = out {
        prepare_out(&out)?;
        write_json(&out.join("gradcheck.json"), &report)?;
        println!("report at {}", out.join("gradcheck.json").display());
    }
    if !report.passed {
        return Err(CliError::Run("gradient contract violated".into()));
    }
    Ok(())
}

pub fn export_pca(
    checkpoint: PathBuf,
    source: PathBuf,
    target: PathBuf,
    out: PathBuf,
) -> Result<(), CliError> {
    let cfg = RunConfig::default();
    prepare_out(&out)?;
    write_manifest(
        &out,
        snapshot(
            "export-pca",
            None,
            &cfg,
            &[],
            &[
                ("checkpoint", &checkpoint),
                ("source", &source),
                ("target", &target),
            ],
            &["pca.csv"],
        ),
    )?;
    let state = load_model(&checkpoint)?;
    let source_ds = load_dataset(&source)?;
    let target_ds = load_dataset(&target)?;
    let rows = pca_rows(&state, &source_ds, &target_ds)?;
    write_pca_csv(&out.join("pca.csv"), &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.join("pca.csv").display());
    Ok(())
}
