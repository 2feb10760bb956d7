//! Bonn corpus loader.
//!
//! On-disk layout: one directory per set, each holding 100 plain-text files
//! with one integer sample per line (4097 lines). Sets are discovered by
//! directory name, case-insensitively: the set letter (A..E), the original
//! code letter (Z, O, N, F, S), or `set<letter>`. A `manifest.json` in the
//! root can override discovery with explicit per-set file lists.

use crate::data::{EegSegment, SegmentSource, BONN_SEGMENT_LEN};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

const SETS: [(char, char, SegmentSource); 5] = [
    ('A', 'Z', SegmentSource::BonnA),
    ('B', 'O', SegmentSource::BonnB),
    ('C', 'N', SegmentSource::BonnC),
    ('D', 'F', SegmentSource::BonnD),
    ('E', 'S', SegmentSource::BonnE),
];

fn dir_matches_set(dir_name: &str, set_letter: char, code_letter: char) -> bool {
    let lower = dir_name.to_ascii_lowercase();
    let set = set_letter.to_ascii_lowercase().to_string();
    let code = code_letter.to_ascii_lowercase().to_string();
    lower == set || lower == code || lower == format!("set{set}") || lower == format!("set{code}")
}

fn read_segment_file(path: &Path, source: SegmentSource, set_letter: char) -> Result<EegSegment> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut samples = Vec::with_capacity(BONN_SEGMENT_LEN);
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: f64 = trimmed.parse().map_err(|_| {
            Error::data(
                Some(path.to_path_buf()),
                Some(lineno + 1),
                format!("non-numeric sample '{trimmed}'"),
            )
        })?;
        samples.push(value);
    }
    if samples.len() != BONN_SEGMENT_LEN {
        return Err(Error::data(
            Some(path.to_path_buf()),
            Some(samples.len()),
            format!(
                "expected {BONN_SEGMENT_LEN} samples, found {}",
                samples.len()
            ),
        ));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EegSegment::new(
        Tensor::new(vec![BONN_SEGMENT_LEN, 1], samples)?,
        source,
        format!("{set_letter}/{stem}"),
    )
}

fn txt_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("txt"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Optional override: `{"A": ["relative/path.txt", ...], "B": [...], ...}`.
fn load_manifest(root: &Path) -> Result<Option<HashMap<String, Vec<String>>>> {
    let path = root.join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}

/// Load all five Bonn sets: 500 segments of 4097 single-channel samples,
/// labeled healthy (A, B), unhealthy (C, D) and seizure (E).
pub fn load_bonn(root: &Path) -> Result<Vec<EegSegment>> {
    if !root.is_dir() {
        return Err(Error::data(
            Some(root.to_path_buf()),
            None,
            "Bonn dataset not found: root is not a directory",
        ));
    }
    let manifest = load_manifest(root)?;

    let mut segments = Vec::new();
    for (set_letter, code_letter, source) in SETS {
        let files: Vec<PathBuf> = if let Some(manifest) = &manifest {
            let listed = manifest.get(&set_letter.to_string()).ok_or_else(|| {
                Error::data(
                    Some(root.join("manifest.json")),
                    None,
                    format!("manifest is missing set {set_letter}"),
                )
            })?;
            listed.iter().map(|rel| root.join(rel)).collect()
        } else {
            let dir = fs::read_dir(root)
                .map_err(|e| Error::io(root, e))?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .find(|p| {
                    p.is_dir()
                        && p.file_name()
                            .map(|n| {
                                dir_matches_set(&n.to_string_lossy(), set_letter, code_letter)
                            })
                            .unwrap_or(false)
                });
            let dir = dir.ok_or_else(|| {
                Error::data(
                    Some(root.to_path_buf()),
                    None,
                    format!("set {set_letter} ({code_letter}) not found"),
                )
            })?;
            txt_files_in(&dir)?
        };
        if files.is_empty() {
            return Err(Error::data(
                Some(root.to_path_buf()),
                None,
                format!("set {set_letter} contains no .txt segment files"),
            ));
        }
        for file in files {
            segments.push(read_segment_file(&file, source, set_letter)?);
        }
    }
    Ok(segments)
}
