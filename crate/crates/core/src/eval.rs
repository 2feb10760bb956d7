//! Confusion-matrix metrics and the hidden-unit inspection pipeline.

use crate::data::{make_batches, EegSegment};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{model_forward, ResCnnModel};
use crate::optim::softmax;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// True-class rows, predicted-class columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn at(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class * self.n_classes + pred_class]
    }

    pub fn add(&mut self, true_class: usize, pred_class: usize) {
        self.counts[true_class * self.n_classes + pred_class] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.n_classes)
            .map(|t| (0..self.n_classes).map(|p| self.at(t, p)).collect())
            .collect()
    }
}

/// Tally predictions against labels.
pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "confusion",
            format!("{} predictions vs {} labels", preds.len(), labels.len()),
        ));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (i, (&p, &t)) in preds.iter().zip(labels.iter()).enumerate() {
        if p >= n_classes || t >= n_classes {
            return Err(Error::invalid(
                "confusion",
                format!("entry {i}: class out of range (pred {p}, label {t}, n {n_classes})"),
            ));
        }
        cm.add(t, p);
    }
    Ok(cm)
}

/// One-vs-rest sensitivity/specificity for a single class. `None` marks an
/// undefined ratio (zero denominator), never silently zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub n_examples: u64,
    /// Class used for the headline sensitivity/specificity pair.
    pub positive_class: usize,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: Vec<Vec<u64>>,
}

/// Collapse the matrix one-vs-rest for every class; the headline pair comes
/// from `positive_class`.
pub fn metrics(cm: &ConfusionMatrix, positive_class: usize) -> Result<MetricsReport> {
    let n = cm.n_classes();
    if positive_class >= n {
        return Err(Error::invalid(
            "metrics",
            format!("positive_class {positive_class} out of range for {n} classes"),
        ));
    }
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("metrics", "empty confusion matrix"));
    }
    let trace: u64 = (0..n).map(|c| cm.at(c, c)).sum();
    let ratio = |num: u64, den: u64| -> Option<f64> {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|p| {
            let tp = cm.at(p, p);
            let fn_: u64 = (0..n).filter(|&j| j != p).map(|j| cm.at(p, j)).sum();
            let fp: u64 = (0..n).filter(|&i| i != p).map(|i| cm.at(i, p)).sum();
            let tn = total - tp - fn_ - fp;
            ClassMetrics {
                class: p,
                sensitivity: ratio(tp, tp + fn_),
                specificity: ratio(tn, tn + fp),
            }
        })
        .collect();
    Ok(MetricsReport {
        accuracy: trace as f64 / total as f64,
        n_examples: total,
        positive_class,
        sensitivity: per_class[positive_class].sensitivity,
        specificity: per_class[positive_class].specificity,
        per_class,
        confusion: cm.rows(),
    })
}

/// Per-example evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleProbs {
    pub segment_id: String,
    pub label: usize,
    pub pred: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug)]
pub struct EvalOutput {
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub examples: Vec<ExampleProbs>,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Deterministic evaluation: center-cropped eval-mode forwards over the part
/// in fixed order, argmax predictions, one-vs-rest metrics with the last
/// class as the headline positive (seizure for Bonn, focal for Bern).
pub fn evaluate(
    model: &ResCnnModel,
    segments: &[EegSegment],
    part: &[usize],
    crop_len: usize,
    batch_size: usize,
) -> Result<EvalOutput> {
    // Eval-mode forwards leave the model untouched; the local clone keeps
    // this function read-only over the caller's snapshot by construction.
    let mut m = model.clone();
    let n_classes = m.config.n_classes;
    let mut examples = Vec::with_capacity(part.len());
    for batch in make_batches(segments, part, crop_len, batch_size, Mode::Eval, None)? {
        let batch = batch?;
        let (logits, _) = model_forward(&mut m, &batch.x, Mode::Eval, None)?;
        let probs = softmax(&logits)?;
        for (i, id) in batch.segment_ids.iter().enumerate() {
            let row = &probs.data()[i * n_classes..(i + 1) * n_classes];
            examples.push(ExampleProbs {
                segment_id: id.clone(),
                label: batch.y[i],
                pred: argmax(row),
                probs: row.to_vec(),
            });
        }
    }
    let preds: Vec<usize> = examples.iter().map(|e| e.pred).collect();
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let cm = confusion(&preds, &labels, n_classes)?;
    let report = metrics(&cm, n_classes - 1)?;
    Ok(EvalOutput {
        report,
        confusion: cm,
        examples,
    })
}

/// Hidden-FC activations per test example, rows grouped by class then id.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    /// [n_examples, n_units] post-LReLU hidden FC activations.
    pub values: Tensor,
    pub labels: Vec<usize>,
    pub segment_ids: Vec<String>,
}

impl ActivationMatrix {
    pub fn n_examples(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_units(&self) -> usize {
        self.values.shape()[1]
    }

    /// Contiguous row ranges per class label, in label order.
    pub fn class_ranges(&self) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for (row, &label) in self.labels.iter().enumerate() {
            match out.last_mut() {
                Some((l, _, end)) if *l == label => *end = row + 1,
                _ => out.push((label, row, row + 1)),
            }
        }
        out
    }
}

/// Run eval-mode forwards over a part and collect the hidden-layer
/// activations, sorted by (class label, segment id).
pub fn collect_activations(
    model: &ResCnnModel,
    segments: &[EegSegment],
    part: &[usize],
    crop_len: usize,
    batch_size: usize,
) -> Result<ActivationMatrix> {
    let mut m = model.clone();
    let n_units = m.config.fc_hidden;
    let mut rows: Vec<(usize, String, Vec<f64>)> = Vec::with_capacity(part.len());
    for batch in make_batches(segments, part, crop_len, batch_size, Mode::Eval, None)? {
        let batch = batch?;
        let (_, trace) = model_forward(&mut m, &batch.x, Mode::Eval, None)?;
        let acts = &trace.hidden_activations;
        for (i, id) in batch.segment_ids.iter().enumerate() {
            rows.push((
                batch.y[i],
                id.clone(),
                acts.data()[i * n_units..(i + 1) * n_units].to_vec(),
            ));
        }
    }
    rows.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));

    let n = rows.len();
    let mut values = Tensor::zeros(&[n, n_units]);
    let mut labels = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (r, (label, id, acts)) in rows.into_iter().enumerate() {
        values.data_mut()[r * n_units..(r + 1) * n_units].copy_from_slice(&acts);
        labels.push(label);
        ids.push(id);
    }
    Ok(ActivationMatrix {
        values,
        labels,
        segment_ids: ids,
    })
}

/// The k examples with the largest activation for one unit, descending;
/// ties break by ascending segment id.
pub fn top_k_inputs(
    acts: &ActivationMatrix,
    unit: usize,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    if unit >= acts.n_units() {
        return Err(Error::invalid(
            "top_k_inputs",
            format!("unit {unit} out of range for {} units", acts.n_units()),
        ));
    }
    if k == 0 {
        return Err(Error::invalid("top_k_inputs", "k must be >= 1"));
    }
    let n_units = acts.n_units();
    let mut ranked: Vec<(String, f64)> = acts
        .segment_ids
        .iter()
        .enumerate()
        .map(|(r, id)| (id.clone(), acts.values.data()[r * n_units + unit]))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// Sidecar metadata for the heatmap CSV: where each class block starts/ends.
#[derive(Debug, Serialize, Deserialize)]
pub struct HeatmapGroups {
    pub classes: Vec<ClassRows>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassRows {
    pub label: usize,
    /// First data row of the class block (0-based, excluding the header).
    pub start_row: usize,
    /// One past the last data row.
    pub end_row: usize,
}

/// Write the activation matrix as CSV (`label,segment_id,0,1,...` header,
/// one row per example) plus a JSON sidecar with the class-group row ranges.
pub fn export_heatmap_csv(
    acts: &ActivationMatrix,
    csv_path: &Path,
    groups_path: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str("label,segment_id");
    for u in 0..acts.n_units() {
        out.push_str(&format!(",{u}"));
    }
    out.push('\n');
    let n_units = acts.n_units();
    for r in 0..acts.n_examples() {
        out.push_str(&format!("{},{}", acts.labels[r], acts.segment_ids[r]));
        for u in 0..n_units {
            out.push_str(&format!(",{}", acts.values.data()[r * n_units + u]));
        }
        out.push('\n');
    }
    fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;

    let groups = HeatmapGroups {
        classes: acts
            .class_ranges()
            .into_iter()
            .map(|(label, start_row, end_row)| ClassRows {
                label,
                start_row,
                end_row,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&groups)?;
    fs::write(groups_path, json).map_err(|e| Error::io(groups_path, e))
}

/// Parse a heatmap CSV back into an ActivationMatrix (full precision).
pub fn parse_heatmap_csv(path: &Path) -> Result<ActivationMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(Some(path.to_path_buf()), Some(1), "empty file"))?;
    let n_units = header.split(',').count().saturating_sub(2);
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| {
                Error::data(Some(path.to_path_buf()), Some(lineno + 2), "bad label field")
            })?;
        let id = fields
            .next()
            .ok_or_else(|| {
                Error::data(Some(path.to_path_buf()), Some(lineno + 2), "missing id field")
            })?
            .to_string();
        let row: Vec<f64> = fields
            .map(|f| {
                f.parse().map_err(|_| {
                    Error::data(
                        Some(path.to_path_buf()),
                        Some(lineno + 2),
                        format!("non-numeric activation '{f}'"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != n_units {
            return Err(Error::data(
                Some(path.to_path_buf()),
                Some(lineno + 2),
                format!("{} activations, header has {n_units} units", row.len()),
            ));
        }
        labels.push(label);
        ids.push(id);
        values.extend(row);
    }
    let n = labels.len();
    Ok(ActivationMatrix {
        values: Tensor::new(vec![n, n_units], values)?,
        labels,
        segment_ids: ids,
    })
}

/// Per-unit top-k table: `unit,rank,segment_id,activation` rows for the
/// requested units (all units when `units` is None).
pub fn export_topk_csv(
    acts: &ActivationMatrix,
    k: usize,
    units: Option<&[usize]>,
    path: &Path,
) -> Result<()> {
    let all: Vec<usize> = (0..acts.n_units()).collect();
    let units = units.unwrap_or(&all);
    let mut out = String::from("unit,rank,segment_id,activation\n");
    for &u in units {
        for (rank, (id, v)) in top_k_inputs(acts, u, k)?.into_iter().enumerate() {
            out.push_str(&format!("{u},{rank},{id},{v}\n"));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
