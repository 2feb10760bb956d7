//! Dataset ingestion, normalization, cropping, splits, and mini-batching.

mod batch;
mod bern;
mod bonn;
mod split;

pub use batch::{make_batches, Batch, BatchStream};
pub use bern::load_bern;
pub use bonn::load_bonn;
pub use split::{split_bern, split_bonn, DatasetSplit, SplitManifest};

use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};
use serde::{Deserialize, Serialize};

/// Bonn corpus geometry: 23.6 s at 173.61 Hz, single channel.
pub const BONN_SEGMENT_LEN: usize = 4097;
pub const BONN_CHANNELS: usize = 1;
/// Bern-Barcelona geometry: 20 s at 512 Hz, two channels.
pub const BERN_SEGMENT_LEN: usize = 10240;
pub const BERN_CHANNELS: usize = 2;

/// Where a segment came from; fixes its class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentSource {
    BonnA,
    BonnB,
    BonnC,
    BonnD,
    BonnE,
    BernFocal,
    BernNonFocal,
    /// Generated data for smoke tests and the desk-scale benchmark.
    Synthetic { class: usize },
}

impl SegmentSource {
    /// Class index. Bonn groups A,B -> healthy 0; C,D -> unhealthy 1;
    /// E -> seizure 2. Bern: non-focal 0, focal 1.
    pub fn label(&self) -> usize {
        match self {
            SegmentSource::BonnA | SegmentSource::BonnB => 0,
            SegmentSource::BonnC | SegmentSource::BonnD => 1,
            SegmentSource::BonnE => 2,
            SegmentSource::BernNonFocal => 0,
            SegmentSource::BernFocal => 1,
            SegmentSource::Synthetic { class } => *class,
        }
    }
}

/// One labeled recording segment: samples are [length, channels] in the
/// stored amplitude units.
#[derive(Debug, Clone)]
pub struct EegSegment {
    pub samples: Tensor,
    pub label: usize,
    pub source: SegmentSource,
    pub segment_id: String,
}

impl EegSegment {
    pub fn new(samples: Tensor, source: SegmentSource, segment_id: String) -> Result<Self> {
        if samples.rank() != 2 {
            return Err(Error::shape(
                "EegSegment",
                format!("samples must be [length, channels], got {:?}", samples.shape()),
            ));
        }
        Ok(EegSegment {
            label: source.label(),
            samples,
            source,
            segment_id,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }
}

/// Z-score a [length, channels] window per channel using the population
/// standard deviation. Channels with sigma below 1e-12 come out as zeros.
///
/// The mean is removed with a two-pass correction so the residual mean stays
/// at roundoff level even for long, large-amplitude windows.
pub fn zscore(window: &Tensor) -> Result<Tensor> {
    if window.rank() != 2 {
        return Err(Error::shape(
            "zscore",
            format!("expects [length, channels], got {:?}", window.shape()),
        ));
    }
    let (l, ch) = (window.shape()[0], window.shape()[1]);
    let mut out = Tensor::zeros(window.shape());
    let xd = window.data();
    let od = out.data_mut();
    let inv_n = 1.0 / l as f64;
    for c in 0..ch {
        let mut sum = 0.0;
        for t in 0..l {
            sum += xd[t * ch + c];
        }
        let mut mu = sum * inv_n;
        // Fold the residual of the first pass back into the mean.
        let mut resid = 0.0;
        for t in 0..l {
            resid += xd[t * ch + c] - mu;
        }
        mu += resid * inv_n;
        let mut sq = 0.0;
        for t in 0..l {
            let d = xd[t * ch + c] - mu;
            sq += d * d;
        }
        let sigma = (sq * inv_n).sqrt();
        if sigma < 1e-12 {
            for t in 0..l {
                od[t * ch + c] = 0.0;
            }
        } else {
            let inv_sigma = 1.0 / sigma;
            for t in 0..l {
                od[t * ch + c] = (xd[t * ch + c] - mu) * inv_sigma;
            }
        }
    }
    Ok(out)
}

fn crop_at(seg: &EegSegment, offset: usize, crop_len: usize) -> Tensor {
    let ch = seg.channels();
    let data = seg.samples.data()[offset * ch..(offset + crop_len) * ch].to_vec();
    Tensor::new(vec![crop_len, ch], data).expect("crop bounds already checked")
}

fn check_crop(seg: &EegSegment, crop_len: usize, op: &'static str) -> Result<()> {
    if crop_len == 0 {
        return Err(Error::invalid(op, "crop length must be >= 1"));
    }
    if crop_len > seg.len() {
        return Err(Error::invalid(
            op,
            format!(
                "crop length {crop_len} exceeds segment '{}' length {}",
                seg.segment_id,
                seg.len()
            ),
        ));
    }
    Ok(())
}

/// Contiguous window at an offset drawn uniformly from {0, ..., L - crop_len}.
pub fn random_crop(seg: &EegSegment, crop_len: usize, rng: &mut Rng) -> Result<Tensor> {
    check_crop(seg, crop_len, "random_crop")?;
    let offsets = (seg.len() - crop_len + 1) as u64;
    let offset = rng.below(offsets) as usize;
    Ok(crop_at(seg, offset, crop_len))
}

/// Deterministic window starting at floor((L - crop_len) / 2).
pub fn center_crop(seg: &EegSegment, crop_len: usize) -> Result<Tensor> {
    check_crop(seg, crop_len, "center_crop")?;
    let offset = (seg.len() - crop_len) / 2;
    Ok(crop_at(seg, offset, crop_len))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(l: usize, ch: usize) -> EegSegment {
        let mut rng = Rng::new(1);
        EegSegment::new(
            Tensor::uniform(&mut rng, -100.0, 100.0, &[l, ch]).unwrap(),
            SegmentSource::Synthetic { class: 0 },
            "s0".to_string(),
        )
        .unwrap()
    }

    #[test]
    fn zscore_three_points_closed_form() {
        let x = Tensor::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let z = zscore(&x).unwrap();
        let want = 1.5f64.sqrt();
        assert!((z.data()[0] + want).abs() <= 1e-12);
        assert!(z.data()[1].abs() <= 1e-12);
        assert!((z.data()[2] - want).abs() <= 1e-12);
    }

    #[test]
    fn zscore_constant_channel_is_zeroed() {
        let x = Tensor::new(vec![4, 2], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0]).unwrap();
        let z = zscore(&x).unwrap();
        for t in 0..4 {
            assert_eq!(z.data()[t * 2], 0.0);
        }
        // The non-constant channel is standardized as usual.
        let mean: f64 = (0..4).map(|t| z.data()[t * 2 + 1]).sum::<f64>() / 4.0;
        assert!(mean.abs() <= 1e-12);
    }

    #[test]
    fn zscore_standardizes_random_input() {
        let mut rng = Rng::new(3);
        let x = Tensor::uniform(&mut rng, -2000.0, 2000.0, &[9800, 2]).unwrap();
        let z = zscore(&x).unwrap();
        for c in 0..2 {
            let n = 9800.0;
            let mean: f64 = (0..9800).map(|t| z.data()[t * 2 + c]).sum::<f64>() / n;
            let var: f64 = (0..9800)
                .map(|t| {
                    let v = z.data()[t * 2 + c] - mean;
                    v * v
                })
                .sum::<f64>()
                / n;
            assert!(mean.abs() <= 1e-12, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() <= 1e-9, "std {}", var.sqrt());
        }
    }

    #[test]
    fn full_length_crop_is_the_whole_segment() {
        let seg = segment(50, 2);
        let mut rng = Rng::new(2);
        let c = random_crop(&seg, 50, &mut rng).unwrap();
        assert_eq!(c, seg.samples);
        let c = center_crop(&seg, 50).unwrap();
        assert_eq!(c, seg.samples);
    }

    #[test]
    fn random_crop_covers_every_offset_uniformly() {
        // Bonn geometry: 4097 - 3800 + 1 = 298 possible offsets. Sample t
        // stores the value t, so the first sample of a window is its offset.
        let ramp: Vec<f64> = (0..4097).map(|t| t as f64).collect();
        let seg = EegSegment::new(
            Tensor::new(vec![4097, 1], ramp).unwrap(),
            SegmentSource::Synthetic { class: 0 },
            "ramp".to_string(),
        )
        .unwrap();
        let crop = 3800;
        let n_offsets = seg.len() - crop + 1;
        assert_eq!(n_offsets, 298);

        let mut rng = Rng::new(9);
        let draws = 100_000usize;
        let mut counts = vec![0u64; n_offsets];
        for _ in 0..draws {
            let w = random_crop(&seg, crop, &mut rng).unwrap();
            counts[w.data()[0] as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "some offset never drawn");

        // Chi-square uniformity at p > 0.001 (297 dof, Wilson-Hilferty bound).
        let expected = draws as f64 / n_offsets as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        let dof = (n_offsets - 1) as f64;
        let z = 3.0902; // one-sided 0.001 quantile of the standard normal
        let limit = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
        assert!(chi2 < limit, "chi2 {chi2} over limit {limit}");
    }

    #[test]
    fn center_crop_offset_and_idempotence() {
        let seg = segment(4097, 1);
        let w = center_crop(&seg, 3800).unwrap();
        // floor(297 / 2) = 148
        assert_eq!(w.data()[0], seg.samples.data()[148]);

        let again = EegSegment::new(
            w.clone(),
            SegmentSource::Synthetic { class: 0 },
            "w".to_string(),
        )
        .unwrap();
        assert_eq!(center_crop(&again, 3800).unwrap(), w);
    }

    #[test]
    fn crops_reject_oversized_requests() {
        let seg = segment(10, 1);
        let mut rng = Rng::new(1);
        assert!(random_crop(&seg, 11, &mut rng).is_err());
        assert!(center_crop(&seg, 11).is_err());
    }
}
