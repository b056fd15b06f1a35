//! Time-series containers, framing and the STFT that produces LOFAR maps.
//!
//! The per-frame order is fixed: frame, taper, decenter/normalize, FFT.
//! Rows of a [`Spectrogram`] are frequency bins `1..=fft_size/2` (the DC bin
//! is dropped), columns are frames.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor added before taking the logarithm in [`to_lofar`].
pub const LOG_FLOOR: f64 = 1e-10;

/// A mono, finite, non-empty sample sequence with its sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl SampleBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hanning,
    Hamming,
    Rectangular,
}

/// Analysis window: taper shape, length in samples and fractional overlap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub length: usize,
    pub overlap_fraction: f64,
}

impl WindowSpec {
    pub fn new(kind: WindowKind, length: usize, overlap_fraction: f64) -> Result<Self> {
        let spec = Self {
            kind,
            length,
            overlap_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidParameter(format!(
                "window length must be at least 2, got {}",
                self.length
            )));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidParameter(format!(
                "overlap fraction must lie in [0, 1), got {}",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    /// Overlapping samples, `floor(overlap_fraction * length)`.
    pub fn overlap(&self) -> usize {
        (self.overlap_fraction * self.length as f64).floor() as usize
    }

    pub fn hop(&self) -> usize {
        self.length - self.overlap()
    }

    /// Periodic (DFT-even) taper coefficients.
    pub fn taper(&self) -> Vec<f64> {
        let n = self.length as f64;
        (0..self.length)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n;
                match self.kind {
                    WindowKind::Hanning => 0.5 - 0.5 * phase.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * phase.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }

    /// Number of whole frames that fit in `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.length {
            0
        } else {
            (len - self.length) / self.hop() + 1
        }
    }
}

/// Splits `buf` into tapered frames starting every `hop` samples. A trailing
/// partial frame is dropped.
pub fn frame_signal(buf: &SampleBuffer, win: &WindowSpec) -> Result<Vec<Vec<f64>>> {
    win.validate()?;
    if buf.len() < win.length {
        return Err(Error::InsufficientSamples {
            needed: win.length,
            got: buf.len(),
        });
    }
    let taper = win.taper();
    let hop = win.hop();
    let frames = (0..win.frame_count(buf.len()))
        .map(|k| {
            let start = k * hop;
            buf.samples[start..start + win.length]
                .iter()
                .zip(&taper)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect();
    Ok(frames)
}

/// Removes the mean and scales so that the largest deviation is exactly 1.
/// A constant frame maps to all zeros.
pub fn normalize_decenter(frame: &[f64]) -> Vec<f64> {
    if frame.is_empty() {
        return Vec::new();
    }
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let centered: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    let peak = centered.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return vec![0.0; frame.len()];
    }
    centered.into_iter().map(|v| v / peak).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeScale {
    Linear,
    LogAmplitude,
}

/// Per-frame preprocessing applied between the taper and the FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameNormalization {
    #[default]
    DecenterScale,
    None,
}

/// M x N time-frequency amplitude map. Row `i` is frequency `freq_axis_hz[i]`,
/// column `j` is frame time `time_axis_s[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    amplitudes: Array2<f64>,
    freq_axis_hz: Vec<f64>,
    time_axis_s: Vec<f64>,
    scale: AmplitudeScale,
}

impl Spectrogram {
    pub fn new(
        amplitudes: Array2<f64>,
        freq_axis_hz: Vec<f64>,
        time_axis_s: Vec<f64>,
        scale: AmplitudeScale,
    ) -> Result<Self> {
        let (m, n) = amplitudes.dim();
        if m == 0 || n == 0 {
            return Err(Error::EmptySpectrogram);
        }
        if freq_axis_hz.len() != m {
            return Err(Error::LengthMismatch {
                expected: m,
                got: freq_axis_hz.len(),
            });
        }
        if time_axis_s.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: time_axis_s.len(),
            });
        }
        if freq_axis_hz.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "frequency axis must be strictly increasing".into(),
            ));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude".into()));
        }
        if scale == AmplitudeScale::Linear && amplitudes.iter().any(|&a| a < 0.0) {
            return Err(Error::InvalidParameter(
                "linear amplitudes must be non-negative".into(),
            ));
        }
        Ok(Self {
            amplitudes,
            freq_axis_hz,
            time_axis_s,
            scale,
        })
    }

    /// Builds a map with unit-spaced axes, handy for synthetic tracker input.
    pub fn from_amplitudes(amplitudes: Array2<f64>, scale: AmplitudeScale) -> Result<Self> {
        let (m, n) = amplitudes.dim();
        let freqs = (1..=m).map(|i| i as f64).collect();
        let times = (0..n).map(|j| j as f64).collect();
        Self::new(amplitudes, freqs, times, scale)
    }

    pub fn amplitudes(&self) -> &Array2<f64> {
        &self.amplitudes
    }

    pub fn freq_axis_hz(&self) -> &[f64] {
        &self.freq_axis_hz
    }

    pub fn time_axis_s(&self) -> &[f64] {
        &self.time_axis_s
    }

    pub fn scale(&self) -> AmplitudeScale {
        self.scale
    }

    /// Number of frequency rows (M).
    pub fn rows(&self) -> usize {
        self.amplitudes.nrows()
    }

    /// Number of frames (N).
    pub fn cols(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.amplitudes.dim()
    }

    /// Columns `start..start + count` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.cols() {
            return Err(Error::InvalidParameter(format!(
                "frame range {start}..{} outside 0..{}",
                start + count,
                self.cols()
            )));
        }
        Ok(Self {
            amplitudes: self.amplitudes.slice(s![.., start..start + count]).to_owned(),
            freq_axis_hz: self.freq_axis_hz.clone(),
            time_axis_s: self.time_axis_s[start..start + count].to_vec(),
            scale: self.scale,
        })
    }

    pub(crate) fn with_amplitudes(&self, amplitudes: Array2<f64>, scale: AmplitudeScale) -> Self {
        Self {
            amplitudes,
            freq_axis_hz: self.freq_axis_hz.clone(),
            time_axis_s: self.time_axis_s.clone(),
            scale,
        }
    }
}

/// LOFAR-style STFT with the default per-frame normalization.
pub fn stft(buf: &SampleBuffer, win: &WindowSpec, fft_size: usize) -> Result<Spectrogram> {
    stft_with(buf, win, fft_size, FrameNormalization::DecenterScale)
}

/// One-sided STFT magnitude. Frames are zero-padded to `fft_size`; bins
/// `1..=fft_size/2` become the rows.
pub fn stft_with(
    buf: &SampleBuffer,
    win: &WindowSpec,
    fft_size: usize,
    normalization: FrameNormalization,
) -> Result<Spectrogram> {
    if !fft_size.is_power_of_two() || fft_size < win.length {
        return Err(Error::InvalidParameter(format!(
            "fft size must be a power of two no smaller than the window ({}), got {fft_size}",
            win.length
        )));
    }
    let frames = frame_signal(buf, win)?;
    let rows = fft_size / 2;
    let fs = buf.sample_rate_hz();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut amplitudes = Array2::<f64>::zeros((rows, frames.len()));
    let mut spectrum = vec![Complex64::default(); fft_size];
    for (j, frame) in frames.iter().enumerate() {
        let prepared = match normalization {
            FrameNormalization::DecenterScale => normalize_decenter(frame),
            FrameNormalization::None => frame.clone(),
        };
        spectrum.fill(Complex64::default());
        for (dst, &v) in spectrum.iter_mut().zip(&prepared) {
            dst.re = v;
        }
        fft.process(&mut spectrum);
        for i in 0..rows {
            amplitudes[[i, j]] = spectrum[i + 1].norm();
        }
    }
    let freq_axis = (1..=rows).map(|k| k as f64 * fs / fft_size as f64).collect();
    let hop = win.hop() as f64;
    let time_axis = (0..frames.len())
        .map(|k| (k as f64 * hop + win.length as f64 / 2.0) / fs)
        .collect();
    Spectrogram::new(amplitudes, freq_axis, time_axis, AmplitudeScale::Linear)
}

/// Row index holding DFT bin `bin` (bins start at 1).
pub fn bin_to_row(bin: usize) -> Option<usize> {
    bin.checked_sub(1)
}

/// Min-max rescale to [0, 1]; a flat input maps to zeros.
pub fn min_max_normalize(values: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = hi - lo;
    if !(span > 0.0) {
        return Array2::zeros(values.dim());
    }
    values.mapv(|v| (v - lo) / span)
}

/// `20 log10(a + 1e-10)` followed by a per-map min-max rescale to [0, 1].
pub fn to_lofar(spec: &Spectrogram) -> Result<Spectrogram> {
    if spec.scale() != AmplitudeScale::Linear {
        return Err(Error::InvalidParameter(
            "to_lofar expects a linear-amplitude spectrogram".into(),
        ));
    }
    let db = spec.amplitudes().mapv(|a| 20.0 * (a + LOG_FLOOR).log10());
    Ok(spec.with_amplitudes(min_max_normalize(&db), AmplitudeScale::LogAmplitude))
}
