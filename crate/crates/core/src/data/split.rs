//! Deterministic train/val/test splits and their JSON manifests.

use crate::data::{EegSegment, SegmentSource};
use crate::error::{Error, Result};
use crate::model::sha256_hex;
use crate::tensor::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::path::Path;

/// Index-based split over a segment list. Parts are pairwise disjoint and
/// cover the whole dataset; the same seed always reproduces the same split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn part(&self, name: &str) -> Result<&[usize]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::invalid(
                "DatasetSplit::part",
                format!("unknown part '{other}' (expected train, val or test)"),
            )),
        }
    }

    pub fn to_manifest(&self, dataset: &str, segments: &[EegSegment]) -> SplitManifest {
        let ids = |part: &[usize]| -> Vec<String> {
            part.iter()
                .map(|&i| segments[i].segment_id.clone())
                .collect()
        };
        let mut manifest = SplitManifest {
            dataset: dataset.to_string(),
            seed: self.seed,
            digest: String::new(),
            train: ids(&self.train),
            val: ids(&self.val),
            test: ids(&self.test),
        };
        manifest.digest = manifest.compute_digest();
        manifest
    }

    /// Rebuild index lists by matching manifest ids against `segments`.
    pub fn from_manifest(manifest: &SplitManifest, segments: &[EegSegment]) -> Result<Self> {
        let want = manifest.compute_digest();
        if manifest.digest != want {
            return Err(Error::data(
                None,
                None,
                format!(
                    "split manifest digest mismatch: recorded {}, computed {want}",
                    manifest.digest
                ),
            ));
        }
        let mut by_id: HashMap<&str, usize> = HashMap::with_capacity(segments.len());
        for (i, s) in segments.iter().enumerate() {
            if by_id.insert(s.segment_id.as_str(), i).is_some() {
                return Err(Error::data(
                    None,
                    None,
                    format!("duplicate segment id '{}'", s.segment_id),
                ));
            }
        }
        let resolve = |ids: &[String]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| {
                    by_id.get(id.as_str()).copied().ok_or_else(|| {
                        Error::data(
                            None,
                            None,
                            format!("manifest references unknown segment '{id}'"),
                        )
                    })
                })
                .collect()
        };
        Ok(DatasetSplit {
            train: resolve(&manifest.train)?,
            val: resolve(&manifest.val)?,
            test: resolve(&manifest.test)?,
            seed: manifest.seed,
        })
    }
}

/// Serializable split: dataset kind, seed, digest and per-part segment ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dataset: String,
    pub seed: u64,
    pub digest: String,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn compute_digest(&self) -> String {
        let mut text = format!("{}\n{}\n", self.dataset, self.seed);
        for (part, ids) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ] {
            text.push_str(part);
            text.push(':');
            for id in ids {
                text.push_str(id);
                text.push(',');
            }
            text.push('\n');
        }
        sha256_hex(text.as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn indices_for(segments: &[EegSegment], source: SegmentSource) -> Vec<usize> {
    segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.source == source)
        .map(|(i, _)| i)
        .collect()
}

/// Stratified Bonn split: from each of the five sets, 60 segments go to
/// train, 20 to test and 20 to validation, under one seeded shuffle stream.
pub fn split_bonn(segments: &[EegSegment], seed: u64) -> Result<DatasetSplit> {
    if segments.len() != 500 {
        return Err(Error::invalid(
            "split_bonn",
            format!("expected 500 Bonn segments, got {}", segments.len()),
        ));
    }
    let mut rng = Rng::new(seed);
    let mut split = DatasetSplit {
        train: Vec::with_capacity(300),
        val: Vec::with_capacity(100),
        test: Vec::with_capacity(100),
        seed,
    };
    for source in [
        SegmentSource::BonnA,
        SegmentSource::BonnB,
        SegmentSource::BonnC,
        SegmentSource::BonnD,
        SegmentSource::BonnE,
    ] {
        let mut idx = indices_for(segments, source);
        if idx.len() != 100 {
            return Err(Error::invalid(
                "split_bonn",
                format!("set {source:?} has {} segments, expected 100", idx.len()),
            ));
        }
        rng.shuffle(&mut idx);
        split.train.extend_from_slice(&idx[0..60]);
        split.test.extend_from_slice(&idx[60..80]);
        split.val.extend_from_slice(&idx[80..100]);
    }
    Ok(split)
}

/// Class-paired Bern split: per class, 500 segments to test, 250 to
/// validation and the remaining 3000 to train.
pub fn split_bern(segments: &[EegSegment], seed: u64) -> Result<DatasetSplit> {
    if segments.len() != 7500 {
        return Err(Error::invalid(
            "split_bern",
            format!("expected 7500 Bern segments, got {}", segments.len()),
        ));
    }
    let mut rng = Rng::new(seed);
    let mut split = DatasetSplit {
        train: Vec::with_capacity(6000),
        val: Vec::with_capacity(500),
        test: Vec::with_capacity(1000),
        seed,
    };
    for source in [SegmentSource::BernNonFocal, SegmentSource::BernFocal] {
        let mut idx = indices_for(segments, source);
        if idx.len() != 3750 {
            return Err(Error::invalid(
                "split_bern",
                format!("class {source:?} has {} segments, expected 3750", idx.len()),
            ));
        }
        rng.shuffle(&mut idx);
        split.test.extend_from_slice(&idx[0..500]);
        split.val.extend_from_slice(&idx[500..750]);
        split.train.extend_from_slice(&idx[750..3750]);
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::collections::HashSet;

    fn tiny_segment(source: SegmentSource, id: String) -> EegSegment {
        // Splits only look at sources and ids; keep samples tiny.
        EegSegment::new(Tensor::zeros(&[4, 1]), source, id).unwrap()
    }

    pub(crate) fn bonn_like() -> Vec<EegSegment> {
        let sources = [
            SegmentSource::BonnA,
            SegmentSource::BonnB,
            SegmentSource::BonnC,
            SegmentSource::BonnD,
            SegmentSource::BonnE,
        ];
        let mut out = Vec::new();
        for (si, source) in sources.iter().enumerate() {
            for i in 0..100 {
                out.push(tiny_segment(*source, format!("s{si}/{i:03}")));
            }
        }
        out
    }

    fn bern_like() -> Vec<EegSegment> {
        let mut out = Vec::new();
        for i in 0..3750 {
            out.push(tiny_segment(
                SegmentSource::BernNonFocal,
                format!("N{i:04}"),
            ));
        }
        for i in 0..3750 {
            out.push(tiny_segment(SegmentSource::BernFocal, format!("F{i:04}")));
        }
        out
    }

    fn assert_disjoint_cover(split: &DatasetSplit, n: usize) {
        let mut seen = HashSet::new();
        for part in [&split.train, &split.val, &split.test] {
            for &i in part {
                assert!(seen.insert(i), "index {i} appears twice");
            }
        }
        assert_eq!(seen.len(), n, "parts must cover the dataset");
    }

    #[test]
    fn bonn_sizes_and_stratification() {
        let segments = bonn_like();
        let split = split_bonn(&segments, 7).unwrap();
        assert_eq!(split.train.len(), 300);
        assert_eq!(split.test.len(), 100);
        assert_eq!(split.val.len(), 100);
        for part in [&split.train, &split.test, &split.val] {
            let mut per_set = [0usize; 5];
            for &i in part.iter() {
                let set = segments[i].segment_id.as_bytes()[1] - b'0';
                per_set[set as usize] += 1;
            }
            let want = part.len() / 5;
            assert!(per_set.iter().all(|&c| c == want), "{per_set:?}");
        }
        assert_disjoint_cover(&split, 500);
    }

    #[test]
    fn bonn_split_is_seed_deterministic() {
        let segments = bonn_like();
        assert_eq!(
            split_bonn(&segments, 3).unwrap(),
            split_bonn(&segments, 3).unwrap()
        );
        assert_ne!(
            split_bonn(&segments, 3).unwrap(),
            split_bonn(&segments, 4).unwrap()
        );
    }

    #[test]
    fn bonn_rejects_wrong_count() {
        let mut segments = bonn_like();
        segments.pop();
        assert!(split_bonn(&segments, 0).is_err());
    }

    #[test]
    fn bern_sizes_and_balance() {
        let segments = bern_like();
        let split = split_bern(&segments, 11).unwrap();
        assert_eq!(split.train.len(), 6000);
        assert_eq!(split.val.len(), 500);
        assert_eq!(split.test.len(), 1000);
        for part in [&split.train, &split.val, &split.test] {
            let focal = part.iter().filter(|&&i| segments[i].label == 1).count();
            assert_eq!(focal * 2, part.len(), "class-balanced part");
        }
        assert_disjoint_cover(&split, 7500);
    }

    #[test]
    fn disjointness_holds_over_many_seeds() {
        let segments = bonn_like();
        for seed in 0..50 {
            let split = split_bonn(&segments, seed).unwrap();
            assert_disjoint_cover(&split, 500);
        }
    }

    #[test]
    fn manifest_round_trip() {
        let segments = bonn_like();
        let split = split_bonn(&segments, 21).unwrap();
        let manifest = split.to_manifest("bonn", &segments);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        manifest.save(&path).unwrap();
        let loaded = SplitManifest::load(&path).unwrap();
        assert_eq!(loaded, manifest);
        let rebuilt = DatasetSplit::from_manifest(&loaded, &segments).unwrap();
        assert_eq!(rebuilt, split);
    }

    #[test]
    fn manifest_rejects_digest_mismatch_and_unknown_ids() {
        let segments = bonn_like();
        let split = split_bonn(&segments, 22).unwrap();
        let mut manifest = split.to_manifest("bonn", &segments);
        manifest.train[0] = "s0/999".to_string();
        let err = DatasetSplit::from_manifest(&manifest, &segments).unwrap_err();
        assert!(err.to_string().contains("digest"), "{err}");

        manifest.digest = manifest.compute_digest();
        let err = DatasetSplit::from_manifest(&manifest, &segments).unwrap_err();
        assert!(err.to_string().contains("unknown segment"), "{err}");
    }
}
