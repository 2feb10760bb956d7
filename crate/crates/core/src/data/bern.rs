//! Bern-Barcelona corpus loader.
//!
//! Each segment is a text file of 10240 rows holding the two channel values
//! separated by a comma. Files are discovered recursively under the root and
//! classified by the published naming convention: a stem containing `_F_` is
//! focal, `_N_` is non-focal (case-insensitive). Files under a directory
//! whose name starts with `focal` / `non` are classified the same way when
//! the stem pattern is absent.

use crate::data::{EegSegment, SegmentSource, BERN_CHANNELS, BERN_SEGMENT_LEN};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::path::{Path, PathBuf};

fn collect_txt_recursive(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_txt_recursive(&path, out)?;
        } else if path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("txt"))
            .unwrap_or(false)
        {
            out.push(path);
        }
    }
    Ok(())
}

fn classify(path: &Path) -> Option<SegmentSource> {
    let stem = path.file_stem()?.to_string_lossy().to_ascii_uppercase();
    if stem.contains("_F_") {
        return Some(SegmentSource::BernFocal);
    }
    if stem.contains("_N_") {
        return Some(SegmentSource::BernNonFocal);
    }
    for ancestor in path.ancestors().skip(1) {
        if let Some(name) = ancestor.file_name() {
            let lower = name.to_string_lossy().to_ascii_lowercase();
            if lower.starts_with("focal") {
                return Some(SegmentSource::BernFocal);
            }
            if lower.starts_with("non") {
                return Some(SegmentSource::BernNonFocal);
            }
        }
    }
    None
}

fn read_segment_file(path: &Path, source: SegmentSource) -> Result<EegSegment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::with_capacity(BERN_SEGMENT_LEN * BERN_CHANNELS);
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let parse = |field: Option<&str>| -> Result<f64> {
            let raw = field.ok_or_else(|| {
                Error::data(
                    Some(path.to_path_buf()),
                    Some(lineno + 1),
                    "expected two comma-separated values",
                )
            })?;
            raw.trim().parse().map_err(|_| {
                Error::data(
                    Some(path.to_path_buf()),
                    Some(lineno + 1),
                    format!("non-numeric field '{}'", raw.trim()),
                )
            })
        };
        let v1 = parse(fields.next())?;
        let v2 = parse(fields.next())?;
        if fields.next().is_some() {
            return Err(Error::data(
                Some(path.to_path_buf()),
                Some(lineno + 1),
                "more than two columns",
            ));
        }
        // Column 1 -> channel 0, column 2 -> channel 1.
        samples.push(v1);
        samples.push(v2);
        rows += 1;
    }
    if rows != BERN_SEGMENT_LEN {
        return Err(Error::data(
            Some(path.to_path_buf()),
            None,
            format!("expected {BERN_SEGMENT_LEN} rows, found {rows}"),
        ));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EegSegment::new(
        Tensor::new(vec![BERN_SEGMENT_LEN, BERN_CHANNELS], samples)?,
        source,
        stem,
    )
}

/// Load all Bern-Barcelona segments: 10240 x 2 samples each, label 1 for
/// focal and 0 for non-focal recordings.
pub fn load_bern(root: &Path) -> Result<Vec<EegSegment>> {
    if !root.is_dir() {
        return Err(Error::data(
            Some(root.to_path_buf()),
            None,
            "Bern-Barcelona dataset not found: root is not a directory",
        ));
    }
    let mut files = Vec::new();
    collect_txt_recursive(root, &mut files)?;
    files.sort();

    let mut segments = Vec::new();
    for path in files {
        if let Some(source) = classify(&path) {
            segments.push(read_segment_file(&path, source)?);
        }
    }
    if segments.is_empty() {
        return Err(Error::data(
            Some(root.to_path_buf()),
            None,
            "no focal or non-focal segment files found",
        ));
    }
    let focal = segments
        .iter()
        .filter(|s| s.source == SegmentSource::BernFocal)
        .count();
    if focal == 0 || focal == segments.len() {
        return Err(Error::data(
            Some(root.to_path_buf()),
            None,
            format!(
                "need both classes: {focal} focal of {} total",
                segments.len()
            ),
        ));
    }
    // Deterministic order: non-focal block then focal block, each sorted by id.
    segments.sort_by(|a, b| (a.label, &a.segment_id).cmp(&(b.label, &b.segment_id)));
    Ok(segments)
}
