//! Batch processing: audio -> high-resonance component -> LOFAR samples,
//! optionally line-enhanced, -> LFR1 export.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::time::Instant;

use lofar_core::linespec::{calibrate, extract_with_thresholds, merge_enhanced, Thresholds};
use lofar_core::rssd::Mca;
use lofar_core::signal::{stft, to_lofar, SampleBuffer, Spectrogram};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::export::{export_samples, Index, SampleTensor};
use crate::manifest::{ClassLabel, DatasetManifest, ManifestEntry, Split};
use crate::wav::read_wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Manifest,
    Ingest,
    Decompose,
    Spectrogram,
    Calibrate,
    Track,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).expect("unit variant");
        f.write_str(name.as_str().expect("serialized as a string"))
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {subject}: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    /// Recording id, or a path when no recording is involved.
    pub subject: String,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, subject: impl Into<String>, message: impl ToString) -> Self {
        Self {
            stage,
            subject: subject.into(),
            message: message.to_string(),
        }
    }
}

/// Decomposition and spectrogram settings prepared once per run.
pub struct Frontend {
    cfg: PipelineConfig,
    mca: Mca,
}

impl Frontend {
    pub fn new(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()
            .map_err(|e| PipelineError::new(Stage::Config, "config", e))?;
        let mca = cfg
            .rssd
            .to_mca()
            .and_then(Mca::new)
            .map_err(|e| PipelineError::new(Stage::Config, "config", e))?;
        Ok(Self { cfg: *cfg, mca })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn mca(&self) -> &Mca {
        &self.mca
    }

    pub fn high_component(&self, buf: &SampleBuffer) -> lofar_core::Result<SampleBuffer> {
        let d = self.mca.decompose(buf.samples())?;
        SampleBuffer::new(d.x_high, buf.sample_rate_hz())
    }

    pub fn spectrogram(&self, buf: &SampleBuffer) -> lofar_core::Result<Spectrogram> {
        stft(buf, &self.cfg.window, self.cfg.fft_size)
    }

    /// Linear spectrogram of the high-resonance component of one file.
    fn front(&self, entry: &ManifestEntry, timings: &mut StageTimings) -> Result<Spectrogram, PipelineError> {
        let id = entry.recording_id.as_str();
        let t = Instant::now();
        let buf = read_wav(&entry.audio_path).map_err(|e| PipelineError::new(Stage::Ingest, id, e))?;
        timings.ingest_s = t.elapsed().as_secs_f64();
        timings.duration_s = buf.duration_s();

        let t = Instant::now();
        let high = self
            .high_component(&buf)
            .map_err(|e| PipelineError::new(Stage::Decompose, id, e))?;
        timings.decompose_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let spec = self
            .spectrogram(&high)
            .map_err(|e| PipelineError::new(Stage::Spectrogram, id, e))?;
        timings.spectrogram_s = t.elapsed().as_secs_f64();
        Ok(spec)
    }
}

/// Start frames of the samples cut from `frames` frames.
pub fn sample_starts(frames: usize, per_sample: usize, stride: usize) -> Vec<usize> {
    (0..)
        .map(|k| k * stride)
        .take_while(|s| s + per_sample <= frames)
        .collect()
}

/// Cuts a linear spectrogram into samples. Each sample is the per-sample
/// LOFAR map, merged with the tracked line counts when thresholds are given.
pub fn render_samples(
    linear: &Spectrogram,
    cfg: &PipelineConfig,
    thresholds: Option<&Thresholds>,
) -> lofar_core::Result<Vec<(usize, Array2<f64>)>> {
    sample_starts(linear.cols(), cfg.frames_per_sample, cfg.stride())
        .into_iter()
        .map(|start| {
            let slice = linear.slice_frames(start, cfg.frames_per_sample)?;
            let display = to_lofar(&slice)?;
            let out = match thresholds {
                Some(th) => {
                    let counts = extract_with_thresholds(&slice, &cfg.tracker, th)?;
                    merge_enhanced(&display, &counts)?.amplitudes().clone()
                }
                None => display.amplitudes().clone(),
            };
            Ok((start, out))
        })
        .collect()
}

/// Non-overlapping noise slices of the configured sample size.
pub fn noise_slices(linear: &Spectrogram, per_sample: usize) -> lofar_core::Result<Vec<Spectrogram>> {
    sample_starts(linear.cols(), per_sample, per_sample)
        .into_iter()
        .map(|s| linear.slice_frames(s, per_sample))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub duration_s: f64,
    pub ingest_s: f64,
    pub decompose_s: f64,
    pub spectrogram_s: f64,
    pub track_s: f64,
}

impl StageTimings {
    pub fn total_s(&self) -> f64 {
        self.ingest_s + self.decompose_s + self.spectrogram_s + self.track_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordingReport {
    pub recording_id: String,
    pub class: ClassLabel,
    pub split: Split,
    pub frames: usize,
    pub samples: usize,
    pub timings: StageTimings,
    /// Seconds of audio processed per second of wall time.
    pub realtime_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub threads: usize,
    pub enhancement: bool,
    pub thresholds: Option<Thresholds>,
    pub calibration_s: f64,
    pub noise_slices: usize,
    pub recordings: Vec<RecordingReport>,
    /// Keyed `split/class`.
    pub samples_per_group: BTreeMap<String, usize>,
    pub classification_ready: bool,
    pub total_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<SampleTensor>,
    pub groups: Vec<(Split, ClassLabel)>,
    pub rows: usize,
    pub cols: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses one per core.
    pub threads: Option<usize>,
}

/// Calibrates on the pooled noise entries (each cut into sample-sized slices).
pub fn calibrate_noise<'a>(
    frontend: &Frontend,
    noise: impl IntoParallelIterator<Item = &'a ManifestEntry>,
) -> Result<(Thresholds, usize), PipelineError> {
    let per = frontend.cfg.frames_per_sample;
    let slices: Vec<Result<Vec<Spectrogram>, PipelineError>> = noise
        .into_par_iter()
        .map(|entry| {
            let spec = frontend.front(entry, &mut StageTimings::default())?;
            noise_slices(&spec, per)
                .map_err(|e| PipelineError::new(Stage::Calibrate, entry.recording_id.as_str(), e))
        })
        .collect();
    let mut pool = Vec::new();
    for s in slices {
        pool.extend(s?);
    }
    if pool.is_empty() {
        return Err(PipelineError::new(
            Stage::Calibrate,
            "noise",
            format!("no noise recording is long enough for one {per}-frame slice"),
        ));
    }
    let th = calibrate(&pool, &frontend.cfg.tracker)
        .map_err(|e| PipelineError::new(Stage::Calibrate, "noise", e))?;
    Ok((th, pool.len()))
}

fn process_ship(
    frontend: &Frontend,
    entry: &ManifestEntry,
    thresholds: Option<&Thresholds>,
) -> Result<(Vec<SampleTensor>, RecordingReport), PipelineError> {
    let mut timings = StageTimings::default();
    let spec = frontend.front(entry, &mut timings)?;
    let t = Instant::now();
    let rendered = render_samples(&spec, &frontend.cfg, thresholds)
        .map_err(|e| PipelineError::new(Stage::Track, entry.recording_id.as_str(), e))?;
    timings.track_s = t.elapsed().as_secs_f64();

    let samples: Vec<SampleTensor> = rendered
        .into_iter()
        .map(|(start, data)| SampleTensor {
            data: data.mapv(|v| v as f32),
            label: entry.class,
            recording_id: entry.recording_id.clone(),
            split: entry.split,
            start_frame: start,
        })
        .collect();
    let report = RecordingReport {
        recording_id: entry.recording_id.clone(),
        class: entry.class,
        split: entry.split,
        frames: spec.cols(),
        samples: samples.len(),
        realtime_factor: timings.duration_s / timings.total_s().max(f64::MIN_POSITIVE),
        timings,
    };
    Ok((samples, report))
}

/// Processes every ship entry of `manifest`. Results are gathered in
/// manifest order, so the output does not depend on the thread count.
pub fn run_pipeline(
    manifest: &DatasetManifest,
    cfg: &PipelineConfig,
    opts: &RunOptions,
) -> Result<RunOutput, PipelineError> {
    let started = Instant::now();
    let frontend = Frontend::new(cfg)?;
    manifest
        .validate()
        .map_err(|e| PipelineError::new(Stage::Manifest, "manifest", e))?;
    if cfg.enhancement && manifest.noise().next().is_none() {
        return Err(PipelineError::new(
            Stage::Calibrate,
            "manifest",
            "enhancement is on but the manifest has no Noise entries",
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::new(Stage::Config, "threads", e))?;

    pool.install(|| {
        let t = Instant::now();
        let (thresholds, noise_count) = if cfg.enhancement {
            let noise: Vec<&ManifestEntry> = manifest.noise().collect();
            let (th, n) = calibrate_noise(&frontend, noise)?;
            (Some(th), n)
        } else {
            (None, 0)
        };
        let calibration_s = t.elapsed().as_secs_f64();

        let ships: Vec<&ManifestEntry> = manifest.ships().collect();
        let results: Vec<_> = ships
            .par_iter()
            .map(|e| process_ship(&frontend, e, thresholds.as_ref()))
            .collect();

        let mut samples = Vec::new();
        let mut recordings = Vec::new();
        for r in results {
            let (s, rep) = r?;
            samples.extend(s);
            recordings.push(rep);
        }
        let groups: Vec<(Split, ClassLabel)> = ships
            .iter()
            .map(|e| (e.split, e.class))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut samples_per_group = BTreeMap::new();
        for &(split, class) in &groups {
            let n = samples.iter().filter(|s| s.split == split && s.label == class).count();
            samples_per_group.insert(format!("{split}/{class}"), n);
        }
        let report = RunReport {
            threads: rayon::current_num_threads(),
            enhancement: cfg.enhancement,
            thresholds,
            calibration_s,
            noise_slices: noise_count,
            recordings,
            samples_per_group,
            classification_ready: manifest.check_classification().is_ok() && !groups.is_empty(),
            total_s: started.elapsed().as_secs_f64(),
        };
        Ok(RunOutput {
            samples,
            groups,
            rows: cfg.fft_size / 2,
            cols: cfg.frames_per_sample,
            report,
        })
    })
}

pub const REPORT_FILE: &str = "report.json";

/// Writes the LFR1 files, `index.json` and `report.json`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<Index, PipelineError> {
    let subject = dir.display().to_string();
    let index = export_samples(dir, out.rows, out.cols, &out.groups, &out.samples)
        .map_err(|e| PipelineError::new(Stage::Export, subject.as_str(), e))?;
    let report = serde_json::to_string_pretty(&out.report).expect("report is plain data");
    std::fs::write(dir.join(REPORT_FILE), report + "\n")
        .map_err(|e| PipelineError::new(Stage::Export, subject.as_str(), e))?;
    Ok(index)
}
