//! Deterministic ship-like test audio.
//!
//! Each ship class is a harmonic comb with its own fundamental, slow
//! frequency wander and occasional fades, over a shared background of
//! broadband noise, low-frequency rumble and impulsive bursts. `Noise` recordings are the
//! background alone.

use std::f64::consts::PI;
use std::path::Path;

use lofar_core::signal::SampleBuffer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::manifest::{ClassLabel, DatasetManifest, ManifestEntry, Split};
use crate::wav::write_wav;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 52734.0;

pub fn fundamental_hz(class: ClassLabel) -> Option<f64> {
    match class {
        ClassLabel::W => Some(62.0),
        ClassLabel::X => Some(94.0),
        ClassLabel::Y => Some(131.0),
        ClassLabel::Z => Some(178.0),
        ClassLabel::Noise => None,
    }
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / rms);
    }
}

fn background(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // broadband floor plus a weaker low-frequency rumble
    let mut floor: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
    scale_to_rms(&mut floor, 0.25);
    let mut rumble = vec![0.0; n];
    let mut state = 0.0;
    for v in rumble.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut *rng);
        state = 0.95 * state + z;
        *v = state;
    }
    scale_to_rms(&mut rumble, 0.1);
    let mut x: Vec<f64> = floor.iter().zip(&rumble).map(|(a, b)| a + b).collect();

    // broadband bursts of about 2 ms
    let burst = (0.002 * fs) as usize;
    let mut at = rng.random_range(0..(0.1 * fs) as usize + 1);
    while at + burst < n {
        let amp = rng.random_range(0.3..1.2);
        for i in 0..burst {
            let z: f64 = StandardNormal.sample(&mut *rng);
            x[at + i] += amp * z * (-(i as f64) / (burst as f64 / 4.0)).exp();
        }
        at += rng.random_range((0.05 * fs) as usize..(0.2 * fs) as usize);
    }
    x
}

/// Harmonic comb plus background for a ship class, or background alone for
/// `Noise`.
pub fn class_signal(class: ClassLabel, seconds: f64, fs: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * fs).round() as usize;
    let mut x = background(n, fs, &mut rng);
    let Some(base) = fundamental_hz(class) else {
        return x;
    };
    let f0 = base * (1.0 + rng.random_range(-0.03..0.03));

    // Gain per 50 ms segment; roughly one segment in ten fades out.
    let seg = (0.05 * fs) as usize;
    let gains: Vec<f64> = (0..n / seg + 1)
        .map(|_| if rng.random_bool(0.1) { 0.1 } else { 1.0 })
        .collect();

    for h in 1..=6 {
        let amp = 0.4 / (h as f64).powf(0.8);
        let wander_rate = rng.random_range(0.1..0.5);
        let wander_phase = rng.random_range(0.0..2.0 * PI);
        let mut phase = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let f = h as f64 * f0 * (1.0 + 0.002 * (2.0 * PI * wander_rate * t + wander_phase).sin());
            phase += 2.0 * PI * f / fs;
            *v += gains[i / seg] * amp * phase.sin();
        }
    }
    x
}

#[derive(Debug, thiserror::Error)]
pub enum MixError {
    #[error("noise has no energy")]
    SilentNoise,
    #[error("signal has no energy")]
    SilentSignal,
    #[error("SNR must be finite, got {0}")]
    BadSnr(f64),
}

/// `signal + g * noise` with `g` chosen so that the power ratio is `snr_db`.
/// The noise is repeated or truncated to the signal length.
pub fn mix_at_snr(signal: &[f64], noise: &[f64], snr_db: f64) -> Result<Vec<f64>, MixError> {
    if !snr_db.is_finite() {
        return Err(MixError::BadSnr(snr_db));
    }
    let power = |x: &mut dyn Iterator<Item = f64>, n: usize| x.map(|v| v * v).sum::<f64>() / n as f64;
    if noise.is_empty() {
        return Err(MixError::SilentNoise);
    }
    let tiled = || noise.iter().copied().cycle().take(signal.len());
    let ps = power(&mut signal.iter().copied(), signal.len().max(1));
    let pn = power(&mut tiled(), signal.len().max(1));
    if !(ps > 0.0) {
        return Err(MixError::SilentSignal);
    }
    if !(pn > 0.0) {
        return Err(MixError::SilentNoise);
    }
    let g = (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    Ok(signal.iter().zip(tiled()).map(|(s, n)| s + g * n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub seconds: f64,
    pub recordings_per_split: usize,
    pub noise_recordings: usize,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            seconds: 2.0,
            recordings_per_split: 1,
            noise_recordings: 2,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            seed: 0,
        }
    }
}

fn recording_seed(base: u64, index: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index)
}

/// Writes `audio/*.wav` and `manifest.toml` under `dir` and returns the
/// manifest as loaded from disk.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec) -> anyhow::Result<DatasetManifest> {
    let audio = dir.join("audio");
    std::fs::create_dir_all(&audio)?;
    let mut entries = Vec::new();
    let mut index = 0;
    let mut plan = Vec::new();
    for class in ClassLabel::SHIPS {
        for split in [Split::Train, Split::Test] {
            for k in 0..spec.recordings_per_split {
                plan.push((class, split, format!("{}_{split}_{k}", class.to_string().to_lowercase())));
            }
        }
    }
    for k in 0..spec.noise_recordings {
        plan.push((ClassLabel::Noise, Split::Train, format!("noise_{k}")));
    }
    for (class, split, id) in plan {
        let x = class_signal(class, spec.seconds, spec.sample_rate_hz, recording_seed(spec.seed, index));
        index += 1;
        let rel = Path::new("audio").join(format!("{id}.wav"));
        write_wav(&dir.join(&rel), &SampleBuffer::new(x, spec.sample_rate_hz)?)?;
        entries.push(ManifestEntry {
            audio_path: rel,
            class,
            recording_id: id,
            split,
        });
    }
    let path = dir.join("manifest.toml");
    std::fs::write(&path, DatasetManifest { entries }.to_toml())?;
    Ok(DatasetManifest::load(&path)?)
}
