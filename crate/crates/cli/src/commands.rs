//! The four operator commands behind the CLI surface.

use crate::config::{Dataset, RunConfig, DATA_ROOT_ENV};
use crate::metrics_doc::MetricsDocument;
use crate::synth;
use crate::train::{run_training, RunArtifacts};
use rescnn_core::data::{load_bern, load_bonn, DatasetSplit, EegSegment, SplitManifest};
use rescnn_core::error::{Error, Result};
use rescnn_core::eval::{collect_activations, evaluate, export_heatmap_csv, export_topk_csv};
use rescnn_core::model::{load_checkpoint, sha256_hex, ResCnnModel};
use std::fs;
use std::path::{Path, PathBuf};

/// Train per the resolved config. Artifacts land in the output directory.
pub fn cmd_train(cfg: &RunConfig, verbose: bool) -> Result<RunArtifacts> {
    run_training(cfg, verbose)
}

fn data_root_or_env(data_root: Option<&Path>) -> Option<PathBuf> {
    data_root.map(|p| p.to_path_buf()).or_else(|| {
        std::env::var(DATA_ROOT_ENV)
            .ok()
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
    })
}

/// Load the dataset a manifest refers to, plus the split rebuilt against it.
fn load_manifest_dataset(
    manifest: &SplitManifest,
    data_root: Option<&Path>,
) -> Result<(Vec<EegSegment>, DatasetSplit)> {
    let dataset = Dataset::parse(&manifest.dataset)?;
    let segments = match dataset {
        Dataset::Synthetic => synth::generate(manifest.seed).0,
        Dataset::Bonn | Dataset::Bern => {
            let root = data_root_or_env(data_root).ok_or_else(|| {
                Error::config(format!(
                    "dataset {} needs --data-root or ${DATA_ROOT_ENV}",
                    manifest.dataset
                ))
            })?;
            match dataset {
                Dataset::Bonn => load_bonn(&root)?,
                _ => load_bern(&root)?,
            }
        }
    };
    let split = DatasetSplit::from_manifest(manifest, &segments)?;
    Ok((segments, split))
}

fn check_model_matches(model: &ResCnnModel, segments: &[EegSegment], part: &[usize]) -> Result<()> {
    let first = part
        .first()
        .and_then(|&i| segments.get(i))
        .ok_or_else(|| Error::invalid("eval", "empty or out-of-range split part"))?;
    if first.channels() != model.config.input_channels {
        return Err(Error::shape(
            "eval",
            format!(
                "checkpoint expects {} input channels, dataset has {}",
                model.config.input_channels,
                first.channels()
            ),
        ));
    }
    if first.len() < model.config.input_length {
        return Err(Error::shape(
            "eval",
            format!(
                "checkpoint expects {}-sample crops, segments hold only {}",
                model.config.input_length,
                first.len()
            ),
        ));
    }
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub data_root: Option<PathBuf>,
    pub part: String,
    pub out: Option<PathBuf>,
    pub batch_size: usize,
}

/// Deterministic evaluation of a checkpoint on one manifest part. Returns
/// the document and the path it was written to.
pub fn cmd_eval(args: &EvalArgs) -> Result<(MetricsDocument, PathBuf)> {
    let manifest = SplitManifest::load(&args.manifest)?;
    let (segments, split) = load_manifest_dataset(&manifest, args.data_root.as_deref())?;
    let (model, _, _) = load_checkpoint(&args.checkpoint)?;
    let part = split.part(&args.part)?;
    check_model_matches(&model, &segments, part)?;

    let out = evaluate(
        &model,
        &segments,
        part,
        model.config.input_length,
        args.batch_size,
    )?;
    let ckpt_bytes = fs::read(&args.checkpoint).map_err(|e| Error::io(&args.checkpoint, e))?;
    let doc = MetricsDocument::new(
        &manifest.dataset,
        &args.part,
        manifest.seed,
        &out.report,
        sha256_hex(&ckpt_bytes),
    );
    let out_path = args.out.clone().unwrap_or_else(|| {
        let dir = args.checkpoint.parent().unwrap_or_else(|| Path::new("."));
        dir.join(format!("eval_metrics_{}.json", args.part))
    });
    fs::write(&out_path, doc.to_json_pretty()?).map_err(|e| Error::io(&out_path, e))?;
    Ok((doc, out_path))
}

pub struct InspectArgs {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub data_root: Option<PathBuf>,
    pub part: String,
    pub top_k: usize,
    pub units: Option<Vec<usize>>,
    pub out_dir: PathBuf,
    pub batch_size: usize,
}

pub struct InspectOutputs {
    pub heatmap_csv: PathBuf,
    pub groups_json: PathBuf,
    pub topk_csv: PathBuf,
    pub n_examples: usize,
    pub n_units: usize,
}

/// Export the hidden-layer activation heatmap and the per-unit top-k tables.
pub fn cmd_inspect(args: &InspectArgs) -> Result<InspectOutputs> {
    let manifest = SplitManifest::load(&args.manifest)?;
    let (segments, split) = load_manifest_dataset(&manifest, args.data_root.as_deref())?;
    let (model, _, _) = load_checkpoint(&args.checkpoint)?;
    let part = split.part(&args.part)?;
    check_model_matches(&model, &segments, part)?;

    let acts = collect_activations(
        &model,
        &segments,
        part,
        model.config.input_length,
        args.batch_size,
    )?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let heatmap_csv = args.out_dir.join("heatmap.csv");
    let groups_json = args.out_dir.join("heatmap_groups.json");
    let topk_csv = args.out_dir.join("topk.csv");
    export_heatmap_csv(&acts, &heatmap_csv, &groups_json)?;
    export_topk_csv(&acts, args.top_k, args.units.as_deref(), &topk_csv)?;
    Ok(InspectOutputs {
        heatmap_csv,
        groups_json,
        topk_csv,
        n_examples: acts.n_examples(),
        n_units: acts.n_units(),
    })
}

pub struct SynthCheckArgs {
    pub seed: u64,
    pub epochs: usize,
    pub out_dir: Option<PathBuf>,
    pub report_only: bool,
}

pub struct SynthCheckOutcome {
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub passed: bool,
    pub artifacts: RunArtifacts,
}

pub const SYNTH_CHECK_THRESHOLD: f64 = 0.95;

/// Train the reduced model on the synthetic task and check test accuracy
/// against the 0.95 bar. Validation accuracy >= 0.995 ends training early.
pub fn cmd_synth_check(args: &SynthCheckArgs) -> Result<SynthCheckOutcome> {
    let mut cfg = RunConfig::defaults(Dataset::Synthetic);
    cfg.seed = args.seed;
    cfg.epochs = args.epochs;
    cfg.early_stop_val_acc = Some(0.995);
    cfg.output_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| std::env::temp_dir().join(format!("rescnn_synth_check_{}", args.seed)));
    let _ = synth::SYNTH_CROP; // geometry fixed in the defaults
    let artifacts = run_training(&cfg, true)?;
    let test_accuracy = artifacts.test_metrics.accuracy;
    Ok(SynthCheckOutcome {
        test_accuracy,
        epochs_run: artifacts.rows.len(),
        passed: test_accuracy >= SYNTH_CHECK_THRESHOLD,
        artifacts,
    })
}
