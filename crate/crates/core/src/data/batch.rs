//! Mini-batch streaming: shuffle, crop, z-score.

use crate::data::{center_crop, random_crop, zscore, EegSegment};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::tensor::{Rng, Tensor};

/// One mini-batch ready for the network: x is [b, crop_len, ch], every
/// window z-scored per channel.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor,
    pub y: Vec<usize>,
    pub segment_ids: Vec<String>,
}

/// Single-pass batch iterator over one split part.
///
/// Train mode shuffles the part once per stream (one stream == one epoch)
/// and draws a fresh random crop per segment; eval mode keeps the given
/// order and center-crops. The final partial batch is emitted.
pub struct BatchStream<'a> {
    segments: &'a [EegSegment],
    order: Vec<usize>,
    pos: usize,
    crop_len: usize,
    batch_size: usize,
    mode: Mode,
    rng: Option<&'a mut Rng>,
}

pub fn make_batches<'a>(
    segments: &'a [EegSegment],
    part: &[usize],
    crop_len: usize,
    batch_size: usize,
    mode: Mode,
    rng: Option<&'a mut Rng>,
) -> Result<BatchStream<'a>> {
    if part.is_empty() {
        return Err(Error::invalid("make_batches", "empty split part"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("make_batches", "batch_size must be >= 1"));
    }
    let ch = segments
        .get(part[0])
        .ok_or_else(|| Error::invalid("make_batches", "part index out of range"))?
        .channels();
    for &i in part {
        let seg = segments
            .get(i)
            .ok_or_else(|| Error::invalid("make_batches", format!("index {i} out of range")))?;
        if seg.channels() != ch {
            return Err(Error::shape(
                "make_batches",
                format!(
                    "segment '{}' has {} channels, part starts with {ch}",
                    seg.segment_id,
                    seg.channels()
                ),
            ));
        }
        if seg.len() < crop_len {
            return Err(Error::invalid(
                "make_batches",
                format!(
                    "segment '{}' ({} samples) shorter than crop {crop_len}",
                    seg.segment_id,
                    seg.len()
                ),
            ));
        }
    }

    let mut order = part.to_vec();
    let rng = match mode {
        Mode::Train => {
            let rng = rng.ok_or_else(|| {
                Error::invalid("make_batches", "train mode requires an rng for shuffling")
            })?;
            rng.shuffle(&mut order);
            Some(rng)
        }
        Mode::Eval => None,
    };

    Ok(BatchStream {
        segments,
        order,
        pos: 0,
        crop_len,
        batch_size,
        mode,
        rng,
    })
}

impl BatchStream<'_> {
    fn build_batch(&mut self, count: usize) -> Result<Batch> {
        let ch = self.segments[self.order[self.pos]].channels();
        let mut x = Tensor::zeros(&[count, self.crop_len, ch]);
        let mut y = Vec::with_capacity(count);
        let mut ids = Vec::with_capacity(count);
        let row = self.crop_len * ch;
        for b in 0..count {
            let seg = &self.segments[self.order[self.pos + b]];
            let window = match self.mode {
                Mode::Train => {
                    let rng = self.rng.as_deref_mut().expect("train stream owns an rng");
                    random_crop(seg, self.crop_len, rng)?
                }
                Mode::Eval => center_crop(seg, self.crop_len)?,
            };
            let z = zscore(&window)?;
            x.data_mut()[b * row..(b + 1) * row].copy_from_slice(z.data());
            y.push(seg.label);
            ids.push(seg.segment_id.clone());
        }
        self.pos += count;
        Ok(Batch {
            x,
            y,
            segment_ids: ids,
        })
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        let remaining = self.order.len() - self.pos;
        if remaining == 0 {
            return None;
        }
        let count = remaining.min(self.batch_size);
        Some(self.build_batch(count))
    }
}
