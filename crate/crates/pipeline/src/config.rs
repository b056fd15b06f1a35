//! Pipeline configuration, read from TOML. Every field has a default, so an
//! empty file is a valid configuration.

use std::path::Path;

use lofar_core::linespec::TrackerConfig;
use lofar_core::rssd::McaConfig;
use lofar_core::signal::{WindowKind, WindowSpec};
use lofar_core::tqwt::TqwtParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssdConfig {
    pub block_len: usize,
    pub q_high: f64,
    pub r_high: f64,
    pub levels_high: usize,
    pub q_low: f64,
    pub r_low: f64,
    pub levels_low: usize,
    pub k_high: f64,
    pub k_low: f64,
    pub iterations: usize,
    pub salsa_mu: f64,
}

impl Default for RssdConfig {
    fn default() -> Self {
        Self {
            block_len: 2048,
            q_high: 4.0,
            r_high: 3.0,
            levels_high: 32,
            q_low: 1.0,
            r_low: 3.0,
            levels_low: 3,
            k_high: 0.5,
            k_low: 0.5,
            iterations: McaConfig::DEFAULT_ITERATIONS,
            salsa_mu: McaConfig::DEFAULT_SALSA_MU,
        }
    }
}

impl RssdConfig {
    pub fn to_mca(&self) -> lofar_core::Result<McaConfig> {
        let mut cfg = McaConfig::new(
            TqwtParams::from_q(self.q_high, self.r_high, self.levels_high, self.block_len)?,
            TqwtParams::from_q(self.q_low, self.r_low, self.levels_low, self.block_len)?,
        )?;
        cfg.k_high = self.k_high;
        cfg.k_low = self.k_low;
        cfg.iterations = self.iterations;
        cfg.salsa_mu = self.salsa_mu;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Lfr1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub fft_size: usize,
    pub frames_per_sample: usize,
    /// Frames between sample starts; `None` means back-to-back samples.
    pub sample_stride: Option<usize>,
    pub enhancement: bool,
    pub export: ExportFormat,
    pub rssd: RssdConfig,
    pub tracker: TrackerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec {
                kind: WindowKind::Hanning,
                length: 2048,
                overlap_fraction: 0.75,
            },
            fft_size: 2048,
            frames_per_sample: 64,
            sample_stride: None,
            enhancement: true,
            export: ExportFormat::Lfr1,
            rssd: RssdConfig::default(),
            tracker: TrackerConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Parse {
        path: std::path::PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are plain data")
    }

    pub fn stride(&self) -> usize {
        self.sample_stride.unwrap_or(self.frames_per_sample)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.window
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.fft_size.is_power_of_two() || self.fft_size < self.window.length {
            return invalid(format!(
                "fft_size {} must be a power of two no smaller than the window length {}",
                self.fft_size, self.window.length
            ));
        }
        if self.frames_per_sample < 3 {
            return invalid(format!(
                "frames_per_sample must be at least 3, got {}",
                self.frames_per_sample
            ));
        }
        if self.stride() == 0 {
            return invalid("sample_stride must be positive".into());
        }
        self.rssd
            .to_mca()
            .map_err(|e| ConfigError::Invalid(format!("rssd: {e}")))?;
        self.tracker
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("tracker: {e}")))?;
        if self.tracker.window_len > self.fft_size / 2 {
            return invalid(format!(
                "tracker window of {} rows exceeds the {} frequency rows",
                self.tracker.window_len,
                self.fft_size / 2
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.stride(), 64);
        let mca = cfg.rssd.to_mca().unwrap();
        assert_eq!(mca.high.levels, 32);
        assert_eq!(mca.low.levels, 3);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.sample_stride = Some(16);
        cfg.tracker.window_len = 7;
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_and_errors() {
        let cfg: PipelineConfig =
            toml::from_str("enhancement = false\n[tracker]\nmode = \"greedy\"\n").unwrap();
        assert!(!cfg.enhancement);
        assert_eq!(cfg.tracker.window_len, 5);
        assert!(toml::from_str::<PipelineConfig>("bogus = 1").is_err());

        let mut bad = PipelineConfig::default();
        bad.frames_per_sample = 2;
        assert!(bad.validate().is_err());
        let mut bad = PipelineConfig::default();
        bad.fft_size = 1000;
        assert!(bad.validate().is_err());
        let mut bad = PipelineConfig::default();
        bad.rssd.levels_high = 99;
        assert!(bad.validate().is_err());
    }
}
