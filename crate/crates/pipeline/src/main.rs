use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lofar_core::rssd::{band_energy_percentages, default_band_edges};
use lofar_core::signal::{to_lofar, SampleBuffer};
use lofar_pipeline::export::read_lfr1;
use lofar_pipeline::manifest::{ClassLabel, DatasetManifest, ManifestEntry, Split};
use lofar_pipeline::pipeline::{calibrate_noise, render_samples, Frontend, PipelineError, Stage};
use lofar_pipeline::synth::{mix_at_snr, write_corpus, CorpusSpec};
use lofar_pipeline::wav::{read_wav, write_wav};
use lofar_pipeline::{plot, run_pipeline, write_outputs, PipelineConfig, RunOptions};
use ndarray::{concatenate, Array2, Axis};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lofar", version, about = "Resonance decomposition and enhanced LOFAR spectra for ship-noise audio")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Pipeline configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "lofar-out")]
    out: PathBuf,
    /// Worker threads (default: one per core)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic data
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Split a recording into high-resonance, low-resonance and residual parts
    Decompose { wav: PathBuf },
    /// Render the LOFAR spectrogram of a recording's high-resonance component
    Lofar {
        wav: PathBuf,
        /// Skip the decomposition and use the recording as is
        #[arg(long)]
        raw: bool,
    },
    /// Track line spectra and render the enhanced LOFAR spectrogram
    Enhance {
        wav: PathBuf,
        /// Noise-only recordings used for threshold calibration
        #[arg(long, required = true, num_args = 1..)]
        noise: Vec<PathBuf>,
    },
    /// Dataset utilities
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Render the samples of an LFR1 file as PNG images
    Plot {
        lfr1: PathBuf,
        /// Only this sample
        #[arg(long)]
        sample: Option<usize>,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Run the full pipeline on a manifest and export LFR1 tensors
    Build { manifest: PathBuf },
    /// Add noise to a signal at a given SNR
    Mix {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: f64,
        /// File name inside the output directory
        #[arg(long, default_value = "mixed.wav")]
        name: String,
    },
    /// Write a synthetic four-class corpus with a manifest
    Synth {
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 1)]
        per_split: usize,
        #[arg(long, default_value_t = 2)]
        noise: usize,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(cfg)
}

fn ingest(path: &Path) -> Result<SampleBuffer, PipelineError> {
    read_wav(path).map_err(|e| PipelineError::new(Stage::Ingest, path.display().to_string(), e))
}

fn subject(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn decompose(g: &Global, cfg: &PipelineConfig, wav: &Path) -> Result<()> {
    let frontend = Frontend::new(cfg)?;
    let buf = ingest(wav)?;
    let id = subject(wav);
    let d = frontend
        .mca()
        .decompose(buf.samples())
        .map_err(|e| PipelineError::new(Stage::Decompose, id.as_str(), e))?;
    let fs = buf.sample_rate_hz();
    let edges = default_band_edges(fs);
    let mut bands = serde_json::Map::new();
    for (name, x) in [
        ("original", buf.samples()),
        ("high", &d.x_high[..]),
        ("low", &d.x_low[..]),
        ("residual", &d.residual[..]),
    ] {
        let part = SampleBuffer::new(x.to_vec(), fs)?;
        if name != "original" {
            write_wav(&g.out.join(format!("{name}.wav")), &part)?;
        }
        bands.insert(
            name.into(),
            band_energy_percentages(&part, &edges).map_or(serde_json::Value::Null, |p| json!(p)),
        );
    }
    write_json(
        &g.out.join("decompose.json"),
        &json!({
            "recording": id,
            "band_edges_hz": edges,
            "band_energy_percent": bands,
            "objective_final": d.objective_trace.last(),
            "lambdas": {
                "high": frontend.mca().lambdas().high,
                "low": frontend.mca().lambdas().low,
            },
        }),
    )
}

fn lofar(g: &Global, cfg: &PipelineConfig, wav: &Path, raw: bool) -> Result<()> {
    let frontend = Frontend::new(cfg)?;
    let id = subject(wav);
    let mut buf = ingest(wav)?;
    if !raw {
        buf = frontend
            .high_component(&buf)
            .map_err(|e| PipelineError::new(Stage::Decompose, id.as_str(), e))?;
    }
    let spec = frontend
        .spectrogram(&buf)
        .map_err(|e| PipelineError::new(Stage::Spectrogram, id.as_str(), e))?;
    let display = to_lofar(&spec)?;
    plot::write_png(&g.out.join(format!("{id}_lofar.png")), display.amplitudes())?;
    Ok(())
}

fn enhance(g: &Global, cfg: &PipelineConfig, wav: &Path, noise: &[PathBuf]) -> Result<()> {
    let frontend = Frontend::new(cfg)?;
    let entries: Vec<ManifestEntry> = noise
        .iter()
        .enumerate()
        .map(|(i, p)| ManifestEntry {
            audio_path: p.clone(),
            class: ClassLabel::Noise,
            recording_id: format!("noise{i}:{}", subject(p)),
            split: Split::Train,
        })
        .collect();
    let (th, slices) = calibrate_noise(&frontend, &entries)?;

    let id = subject(wav);
    let buf = ingest(wav)?;
    let high = frontend
        .high_component(&buf)
        .map_err(|e| PipelineError::new(Stage::Decompose, id.as_str(), e))?;
    let spec = frontend
        .spectrogram(&high)
        .map_err(|e| PipelineError::new(Stage::Spectrogram, id.as_str(), e))?;
    let track = |t| render_samples(&spec, cfg, t).map_err(|e| PipelineError::new(Stage::Track, id.as_str(), e));
    let plain = track(None)?;
    let enhanced = track(Some(&th))?;
    if plain.is_empty() {
        bail!("{id}: shorter than one {}-frame sample", cfg.frames_per_sample);
    }
    let strip = |parts: &[(usize, Array2<f64>)]| {
        let views: Vec<_> = parts.iter().map(|(_, a)| a.view()).collect();
        concatenate(Axis(1), &views).expect("samples share their row count")
    };
    plot::write_png(&g.out.join(format!("{id}_lofar.png")), &strip(&plain))?;
    plot::write_png(&g.out.join(format!("{id}_enhanced.png")), &strip(&enhanced))?;
    write_json(
        &g.out.join(format!("{id}_enhance.json")),
        &json!({
            "recording": id,
            "thresholds": th,
            "noise_slices": slices,
            "samples": plain.len(),
        }),
    )
}

fn plot_lfr1(g: &Global, path: &Path, only: Option<usize>) -> Result<()> {
    let file = read_lfr1(path)?;
    let stem = subject(path);
    let picks: Vec<usize> = match only {
        Some(i) if i >= file.samples.len() => {
            bail!("{}: sample {i} requested, file holds {}", path.display(), file.samples.len())
        }
        Some(i) => vec![i],
        None => (0..file.samples.len()).collect(),
    };
    for i in picks {
        let values = file.samples[i].mapv(f64::from);
        plot::write_png(&g.out.join(format!("{stem}_{i}.png")), &values)?;
    }
    Ok(())
}

fn dataset(g: &Global, cfg: &PipelineConfig, cmd: &DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Build { manifest } => {
            let m = DatasetManifest::load(manifest)
                .map_err(|e| PipelineError::new(Stage::Manifest, manifest.display().to_string(), e))?;
            let out = run_pipeline(&m, cfg, &RunOptions { threads: g.threads })?;
            write_outputs(&g.out, &out)?;
            for (group, n) in &out.report.samples_per_group {
                println!("{group}: {n} samples");
            }
            Ok(())
        }
        DatasetCommand::Mix {
            signal,
            noise,
            snr_db,
            name,
        } => {
            let s = ingest(signal)?;
            let n = ingest(noise)?;
            if s.sample_rate_hz() != n.sample_rate_hz() {
                bail!(
                    "sample rates differ: {} Hz vs {} Hz",
                    s.sample_rate_hz(),
                    n.sample_rate_hz()
                );
            }
            let mixed = mix_at_snr(s.samples(), n.samples(), *snr_db)?;
            write_wav(&g.out.join(name), &SampleBuffer::new(mixed, s.sample_rate_hz())?)?;
            Ok(())
        }
        DatasetCommand::Synth {
            seconds,
            per_split,
            noise,
        } => {
            let spec = CorpusSpec {
                seconds: *seconds,
                recordings_per_split: *per_split,
                noise_recordings: *noise,
                seed: g.seed,
                ..CorpusSpec::default()
            };
            let m = write_corpus(&g.out, &spec)?;
            println!("{} recordings, manifest at {}", m.entries.len(), g.out.join("manifest.toml").display());
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let g = &cli.global;
    let cfg = load_config(g.config.as_deref())?;
    std::fs::create_dir_all(&g.out).with_context(|| format!("creating {}", g.out.display()))?;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Decompose { wav } => decompose(g, &cfg, wav),
        Command::Lofar { wav, raw } => lofar(g, &cfg, wav, *raw),
        Command::Enhance { wav, noise } => enhance(g, &cfg, wav, noise),
        Command::Dataset(cmd) => dataset(g, &cfg, cmd),
        Command::Plot { lfr1, sample } => plot_lfr1(g, lfr1, *sample),
    }
}
