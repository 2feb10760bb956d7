//! The training loop and its on-disk artifacts.
//!
//! A run directory is self-describing:
//!
//! ```text
//! resolved_config.json   the exact RunConfig used
//! split_manifest.json    segment ids per part plus the seed
//! epochs.csv             epoch,lr,train_loss,train_acc,val_acc,wall_time_s
//! best.ckpt              highest validation accuracy (earlier epoch on ties)
//! final.ckpt             state after the last epoch
//! metrics.json           test-part evaluation of final.ckpt
//! ```
//!
//! Single-threaded and fully deterministic: the seed fixes initialization,
//! shuffling, crop offsets and dropout masks, so identical configs reproduce
//! identical logs and checkpoints bit for bit.

use crate::config::{Dataset, RunConfig};
use crate::metrics_doc::MetricsDocument;
use crate::synth;
use rescnn_core::data::{load_bern, load_bonn, make_batches, split_bern, split_bonn};
use rescnn_core::data::{DatasetSplit, EegSegment};
use rescnn_core::error::{Error, Result};
use rescnn_core::eval::evaluate;
use rescnn_core::layers::Mode;
use rescnn_core::model::{
    build_model, model_backward, model_forward, save_checkpoint, sha256_hex, CheckpointMeta,
};
use rescnn_core::optim::{adam_step, lr_at, softmax_cross_entropy, AdamState};
use rescnn_core::tensor::Rng;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct EpochRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub wall_s: f64,
}

impl EpochRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_acc, self.wall_s
        )
    }

    /// The deterministic part of the row (everything but wall time).
    fn digest_line(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_acc
        )
    }
}

/// Digest over the deterministic columns of the epoch log so far.
fn history_digest(rows: &[EpochRow]) -> String {
    let text: String = rows.iter().map(|r| r.digest_line()).collect();
    sha256_hex(text.as_bytes())
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub rows: Vec<EpochRow>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_metrics: MetricsDocument,
    pub config_path: PathBuf,
    pub manifest_path: PathBuf,
    pub log_path: PathBuf,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
}

/// Load the configured dataset and its split protocol.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Vec<EegSegment>, DatasetSplit)> {
    match cfg.dataset {
        Dataset::Bonn => {
            let root = cfg.data_root.as_ref().expect("validated");
            let segments = load_bonn(root)?;
            let split = split_bonn(&segments, cfg.seed)?;
            Ok((segments, split))
        }
        Dataset::Bern => {
            let root = cfg.data_root.as_ref().expect("validated");
            let segments = load_bern(root)?;
            let split = split_bern(&segments, cfg.seed)?;
            Ok((segments, split))
        }
        Dataset::Synthetic => Ok(synth::generate(cfg.seed)),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run the full training loop, writing all artifacts into the output
/// directory. Quiet unless `verbose`.
pub fn run_training(cfg: &RunConfig, verbose: bool) -> Result<RunArtifacts> {
    cfg.validate()?;
    let (segments, split) = load_dataset(cfg)?;

    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let config_path = cfg.output_dir.join("resolved_config.json");
    write_file(&config_path, &serde_json::to_string_pretty(cfg)?)?;
    let manifest = split.to_manifest(cfg.dataset.name(), &segments);
    let manifest_path = cfg.output_dir.join("split_manifest.json");
    manifest.save(&manifest_path)?;

    // Independent deterministic streams for init, data order/crops, dropout.
    let mut master = Rng::new(cfg.seed);
    let mut init_rng = master.fork();
    let mut data_rng = master.fork();
    let mut model_rng = master.fork();

    let mut model = build_model(&cfg.model, &mut init_rng)?;
    let mut adam = AdamState::new(&model.params());

    let log_path = cfg.output_dir.join("epochs.csv");
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    log.write_all(b"epoch,lr,train_loss,train_acc,val_acc,wall_time_s\n")
        .map_err(|e| Error::io(&log_path, e))?;

    let best_path = cfg.output_dir.join("best.ckpt");
    let final_path = cfg.output_dir.join("final.ckpt");
    let mut rows: Vec<EpochRow> = Vec::with_capacity(cfg.epochs);
    let mut best_val_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;

    for epoch in 0..cfg.epochs {
        let lr = lr_at(&cfg.schedule, epoch);
        let t0 = Instant::now();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;

        let stream = make_batches(
            &segments,
            &split.train,
            cfg.crop_len,
            cfg.batch_size,
            Mode::Train,
            Some(&mut data_rng),
        )?;
        for batch in stream {
            let batch = batch?;
            let (logits, trace) =
                model_forward(&mut model, &batch.x, Mode::Train, Some(&mut model_rng))?;
            let sce = softmax_cross_entropy(&logits, &batch.y)?;
            if !sce.loss.is_finite() {
                return Err(Error::non_finite(
                    "train",
                    format!("loss diverged at epoch {epoch}"),
                ));
            }
            let b = batch.y.len();
            loss_sum += sce.loss * b as f64;
            seen += b;
            let n_classes = cfg.model.n_classes;
            for (i, &label) in batch.y.iter().enumerate() {
                let row = &sce.probs.data()[i * n_classes..(i + 1) * n_classes];
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(j, _)| j)
                    .unwrap_or(0);
                if pred == label {
                    correct += 1;
                }
            }
            let grads = model_backward(&model, trace, &sce.dlogits)?.into_vec();
            adam_step(&mut model.params_mut(), &grads, &mut adam, lr)?;
        }

        let val = evaluate(&model, &segments, &split.val, cfg.crop_len, cfg.batch_size)?;
        let row = EpochRow {
            epoch,
            lr,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_acc: val.report.accuracy,
            wall_s: t0.elapsed().as_secs_f64(),
        };
        log.write_all(row.csv_line().as_bytes())
            .map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        if verbose {
            eprintln!(
                "epoch {:>3}  lr {:<8}  loss {:.4}  train acc {:.3}  val acc {:.3}  ({:.1}s)",
                row.epoch, row.lr, row.train_loss, row.train_acc, row.val_acc, row.wall_s
            );
        }
        rows.push(row);

        if val.report.accuracy > best_val_acc {
            best_val_acc = val.report.accuracy;
            best_epoch = epoch;
            save_checkpoint(
                &model,
                &adam,
                &CheckpointMeta {
                    epoch: (epoch + 1) as u64,
                    history_digest: history_digest(&rows),
                },
                &best_path,
            )?;
        }

        if let Some(th) = cfg.early_stop_val_acc {
            if val.report.accuracy >= th {
                break;
            }
        }
    }

    save_checkpoint(
        &model,
        &adam,
        &CheckpointMeta {
            epoch: rows.len() as u64,
            history_digest: history_digest(&rows),
        },
        &final_path,
    )?;

    let test_eval = evaluate(&model, &segments, &split.test, cfg.crop_len, cfg.batch_size)?;
    let final_bytes = fs::read(&final_path).map_err(|e| Error::io(&final_path, e))?;
    let doc = MetricsDocument::new(
        cfg.dataset.name(),
        "test",
        cfg.seed,
        &test_eval.report,
        sha256_hex(&final_bytes),
    );
    let metrics_path = cfg.output_dir.join("metrics.json");
    write_file(&metrics_path, &doc.to_json_pretty()?)?;

    Ok(RunArtifacts {
        out_dir: cfg.output_dir.clone(),
        rows,
        best_epoch,
        best_val_acc,
        test_metrics: doc,
        config_path,
        manifest_path,
        log_path,
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        metrics_path,
    })
}
