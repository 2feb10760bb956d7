//! Desk-scale synthetic benchmark: three classes of one-channel signals that
//! mirror the healthy / unhealthy / seizure structure of the real task.
//!
//! Class 0: sinusoid with frequency drawn from the 4-6 Hz band plus noise.
//! Class 1: sinusoid from the 23-27 Hz band plus noise.
//! Class 2: broadband noise at five times the base amplitude.
//!
//! Signals are nominally sampled at 512 Hz for one second. The fixed layout
//! is 300 training, 100 validation and 100 test segments, classes
//! interleaved so every part stays balanced.

use rescnn_core::data::{DatasetSplit, EegSegment, SegmentSource};
use rescnn_core::model::ResCnnConfig;
use rescnn_core::tensor::{Rng, Tensor};
use std::f64::consts::TAU;

pub const SYNTH_LEN: usize = 512;
pub const SYNTH_CROP: usize = 448;
pub const SYNTH_RATE_HZ: f64 = 512.0;
const NOISE_SIGMA: f64 = 0.35;
const BROADBAND_FACTOR: f64 = 5.0;
const N_TRAIN: usize = 300;
const N_VAL: usize = 100;
const N_TEST: usize = 100;

/// Reduced model for the synthetic task.
pub fn model_config() -> ResCnnConfig {
    let mut cfg = ResCnnConfig::bonn();
    cfg.input_length = SYNTH_CROP;
    cfg.fc_hidden = 64;
    cfg
}

fn gaussian(rng: &mut Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - rng.next_f64();
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

fn make_signal(class: usize, rng: &mut Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(SYNTH_LEN);
    match class {
        0 | 1 => {
            let (lo, hi) = if class == 0 { (4.0, 6.0) } else { (23.0, 27.0) };
            let freq = rng.uniform(lo, hi);
            let phase = rng.uniform(0.0, TAU);
            for t in 0..SYNTH_LEN {
                let time = t as f64 / SYNTH_RATE_HZ;
                out.push((TAU * freq * time + phase).sin() + NOISE_SIGMA * gaussian(rng));
            }
        }
        _ => {
            for _ in 0..SYNTH_LEN {
                out.push(BROADBAND_FACTOR * NOISE_SIGMA * gaussian(rng));
            }
        }
    }
    out
}

/// Generate the full synthetic dataset and its fixed split, deterministically
/// from the seed.
pub fn generate(seed: u64) -> (Vec<EegSegment>, DatasetSplit) {
    let mut rng = Rng::new(seed ^ 0x53594E_54480000); // dedicated stream for data
    let total = N_TRAIN + N_VAL + N_TEST;
    let mut segments = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % 3;
        let samples = make_signal(class, &mut rng);
        segments.push(
            EegSegment::new(
                Tensor::new(vec![SYNTH_LEN, 1], samples).expect("fixed geometry"),
                SegmentSource::Synthetic { class },
                format!("synth{i:04}"),
            )
            .expect("rank-2 samples"),
        );
    }
    let split = DatasetSplit {
        train: (0..N_TRAIN).collect(),
        val: (N_TRAIN..N_TRAIN + N_VAL).collect(),
        test: (N_TRAIN + N_VAL..total).collect(),
        seed,
    };
    (segments, split)
}
