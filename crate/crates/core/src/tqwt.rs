//! Tunable-Q wavelet transform.
//!
//! Each level splits the current spectrum into a low-pass branch (rescaled by
//! `alpha`) and a high-pass branch (rescaled by `beta`). Both branches are
//! formed directly on unitary DFT coefficients, so the analysis operator is a
//! Parseval tight frame and synthesis is its exact adjoint. Only the
//! non-negative half of each spectrum is stored; every signal involved is real.
//!
//! Subband lengths are fixed per level from the current length `n`:
//! low-pass `2*round(alpha*n/2)`, high-pass `2*round(beta*n/2)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use realfft::{num_complex::Complex64, ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

/// Transition-band response `0.5 (1 + cos w) sqrt(2 - cos w)` on `[0, pi]`.
pub fn transition(w: f64) -> f64 {
    0.5 * (1.0 + w.cos()) * (2.0 - w.cos()).sqrt()
}

/// Scaling factors and depth of a TQWT.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TqwtParams {
    pub alpha: f64,
    pub beta: f64,
    pub levels: usize,
    pub input_length: usize,
}

impl TqwtParams {
    pub fn new(alpha: f64, beta: f64, levels: usize, input_length: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "beta must lie in (0, 1], got {beta}"
            )));
        }
        if alpha + beta <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha + beta must exceed 1 for perfect reconstruction, got {}",
                alpha + beta
            )));
        }
        if levels == 0 {
            return Err(Error::InvalidParameter("at least one level is required".into()));
        }
        if input_length < 2 || !input_length.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "input length must be even and at least 2, got {input_length}"
            )));
        }
        let max = max_levels(alpha, beta, input_length);
        if levels > max {
            return Err(Error::TooManyLevels {
                requested: levels,
                max,
            });
        }
        let params = Self {
            alpha,
            beta,
            levels,
            input_length,
        };
        // The rounding rule can still starve a level of transition bins.
        params.level_geometry()?;
        Ok(params)
    }

    /// Builds parameters from a Q factor and redundancy:
    /// `beta = 2/(Q+1)`, `alpha = 1 - beta/r`.
    pub fn from_q(q: f64, redundancy: f64, levels: usize, input_length: usize) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("Q must be at least 1, got {q}")));
        }
        if !(redundancy > 1.0 && redundancy.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "redundancy r must exceed 1, got {redundancy}"
            )));
        }
        let beta = 2.0 / (q + 1.0);
        let alpha = 1.0 - beta / redundancy;
        Self::new(alpha, beta, levels, input_length)
    }

    /// `Q = (2 - beta) / beta`.
    pub fn q_factor(&self) -> f64 {
        (2.0 - self.beta) / self.beta
    }

    /// Oversampling rate `r = beta / (1 - alpha)`.
    pub fn redundancy(&self) -> f64 {
        self.beta / (1.0 - self.alpha)
    }

    pub fn max_levels(&self) -> usize {
        max_levels(self.alpha, self.beta, self.input_length)
    }

    /// Center frequency of level `j` in Hz: `alpha^j (2 - beta) / (4 alpha) fs`.
    pub fn center_frequency(&self, level: usize, fs: f64) -> Result<f64> {
        self.check_level(level)?;
        Ok(self.alpha.powi(level as i32) * (2.0 - self.beta) / (4.0 * self.alpha) * fs)
    }

    /// Bandwidth of level `j` in normalized radians: `0.5 beta alpha^(j-1) pi`.
    pub fn bandwidth(&self, level: usize) -> Result<f64> {
        self.check_level(level)?;
        Ok(0.5 * self.beta * self.alpha.powi(level as i32 - 1) * PI)
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels {
            return Err(Error::LevelOutOfRange {
                level,
                max: self.levels,
            });
        }
        Ok(())
    }

    /// Per-level `(input, low, high)` lengths.
    pub fn level_lengths(&self) -> Vec<(usize, usize, usize)> {
        let mut n = self.input_length;
        (0..self.levels)
            .map(|_| {
                let low = even_round(self.alpha * n as f64);
                let high = even_round(self.beta * n as f64);
                let out = (n, low, high);
                n = low;
                out
            })
            .collect()
    }

    /// Lengths of the J+1 subbands: high-pass levels 1..J, then the final low-pass.
    pub fn subband_lengths(&self) -> Vec<usize> {
        let lengths = self.level_lengths();
        let mut out: Vec<usize> = lengths.iter().map(|&(_, _, h)| h).collect();
        out.push(lengths.last().map_or(self.input_length, |&(_, l, _)| l));
        out
    }

    fn level_geometry(&self) -> Result<Vec<LevelGeometry>> {
        self.level_lengths()
            .into_iter()
            .map(|(n, low, high)| LevelGeometry::new(n, low, high))
            .collect()
    }
}

/// Deepest admissible level: `floor(log(beta N / 8) / log(1 / alpha))`.
pub fn max_levels(alpha: f64, beta: f64, input_length: usize) -> usize {
    let j = (beta * input_length as f64 / 8.0).ln() / (1.0 / alpha).ln();
    if j.is_finite() && j > 0.0 {
        j.floor() as usize
    } else {
        0
    }
}

fn even_round(x: f64) -> usize {
    2 * (x / 2.0).round() as usize
}

/// Continuous frequency responses of one analysis stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterBank {
    pub alpha: f64,
    pub beta: f64,
}

impl FilterBank {
    pub fn new(params: &TqwtParams) -> Self {
        Self {
            alpha: params.alpha,
            beta: params.beta,
        }
    }

    pub fn low_response(&self, w: f64) -> f64 {
        let w = w.abs();
        let pass = (1.0 - self.beta) * PI;
        let stop = self.alpha * PI;
        if w <= pass {
            1.0
        } else if w >= stop {
            0.0
        } else {
            transition((w + (self.beta - 1.0) * PI) / (self.alpha + self.beta - 1.0))
        }
    }

    pub fn high_response(&self, w: f64) -> f64 {
        let w = w.abs();
        let stop = (1.0 - self.beta) * PI;
        let pass = self.alpha * PI;
        if w <= stop {
            0.0
        } else if w >= pass {
            1.0
        } else {
            transition((self.alpha * PI - w) / (self.alpha + self.beta - 1.0))
        }
    }

    /// Transition band `[(1 - beta) pi, alpha pi]`.
    pub fn transition_band(&self) -> (f64, f64) {
        ((1.0 - self.beta) * PI, self.alpha * PI)
    }
}

/// Discrete bin layout of one level on half spectra (bins `0..=n/2`).
#[derive(Debug, Clone)]
struct LevelGeometry {
    n: usize,
    low: usize,
    high: usize,
    pass: usize,
    stop: usize,
    trans: Vec<f64>,
}

impl LevelGeometry {
    fn new(n: usize, low: usize, high: usize) -> Result<Self> {
        if low > n || high > n || low + high < n + 2 || low < 2 || high < 2 {
            return Err(Error::InvalidParameter(format!(
                "level of length {n} cannot split into low {low} / high {high}; reduce the level count"
            )));
        }
        let pass = (n - high) / 2;
        let t = (low + high - n) / 2 - 1;
        let stop = (n - low) / 2;
        let trans = (1..=t)
            .map(|i| transition(i as f64 / (t + 1) as f64 * PI))
            .collect();
        Ok(Self {
            n,
            low,
            high,
            pass,
            stop,
            trans,
        })
    }

    // Bins 0..=pass pass straight to the low branch, pass+1..=pass+t are
    // shared through the transition taper, the rest (up to Nyquist) go high.
    fn analyze(&self, x: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let (p, s) = (self.pass, self.stop);
        let t = self.trans.len();
        let tr = &self.trans;
        let mut v0 = vec![Complex64::default(); self.low / 2 + 1];
        let mut v1 = vec![Complex64::default(); self.high / 2 + 1];

        v0[..=p].copy_from_slice(&x[..=p]);
        for i in 1..=t {
            v0[p + i] = x[p + i] * tr[i - 1];
            v1[i] = x[p + i] * tr[t - i];
        }
        v1[t + 1..=t + s].copy_from_slice(&x[p + t + 1..=p + t + s]);
        v1[self.high / 2] = x[self.n / 2];
        (v0, v1)
    }

    fn synthesize(&self, v0: &[Complex64], v1: &[Complex64]) -> Vec<Complex64> {
        let (p, s) = (self.pass, self.stop);
        let t = self.trans.len();
        let tr = &self.trans;
        let mut y = vec![Complex64::default(); self.n / 2 + 1];

        y[..=p].copy_from_slice(&v0[..=p]);
        for i in 1..=t {
            y[p + i] = v0[p + i] * tr[i - 1] + v1[i] * tr[t - i];
        }
        y[p + t + 1..=p + t + s].copy_from_slice(&v1[t + 1..=t + s]);
        y[self.n / 2] = v1[self.high / 2];
        y
    }
}

/// Wavelet coefficients: `subbands[j-1]` is level `j` high-pass for
/// `j = 1..=J`; `subbands[J]` is the final low-pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    pub subbands: Vec<Vec<f64>>,
    pub params: TqwtParams,
}

impl SubbandSet {
    pub fn zeros(params: TqwtParams) -> Self {
        let subbands = params.subband_lengths().into_iter().map(|l| vec![0.0; l]).collect();
        Self { subbands, params }
    }

    pub fn energy(&self) -> f64 {
        self.subbands.iter().flatten().map(|v| v * v).sum()
    }

    pub fn level_energies(&self) -> Vec<f64> {
        self.subbands
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum())
            .collect()
    }

    pub fn coefficient_count(&self) -> usize {
        self.subbands.iter().map(Vec::len).sum()
    }
}

/// A prepared transform: level layout, real FFT plans and the basis-norm cache.
///
/// Spectra are kept as unitary half spectra (`len/2 + 1` bins, scaled by
/// `1/sqrt(len)`), which makes analysis and synthesis exact adjoints.
pub struct Tqwt {
    params: TqwtParams,
    levels: Vec<LevelGeometry>,
    forward: HashMap<usize, Arc<dyn RealToComplex<f64>>>,
    inverse: HashMap<usize, Arc<dyn ComplexToReal<f64>>>,
    scratch_len: usize,
    norms: OnceLock<Vec<f64>>,
}

impl std::fmt::Debug for Tqwt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tqwt").field("params", &self.params).finish_non_exhaustive()
    }
}

impl Tqwt {
    pub fn new(params: TqwtParams) -> Result<Self> {
        let levels = params.level_geometry()?;
        let mut planner = RealFftPlanner::<f64>::new();
        let mut forward = HashMap::new();
        let mut inverse = HashMap::new();
        let mut lengths = vec![params.input_length];
        lengths.extend(params.subband_lengths());
        for len in lengths {
            forward
                .entry(len)
                .or_insert_with(|| planner.plan_fft_forward(len));
            inverse
                .entry(len)
                .or_insert_with(|| planner.plan_fft_inverse(len));
        }
        let scratch_len = forward
            .values()
            .map(|p| p.get_scratch_len())
            .chain(inverse.values().map(|p| p.get_scratch_len()))
            .max()
            .unwrap_or(0);
        Ok(Self {
            params,
            levels,
            forward,
            inverse,
            scratch_len,
            norms: OnceLock::new(),
        })
    }

    pub fn params(&self) -> &TqwtParams {
        &self.params
    }

    fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::default(); self.scratch_len]
    }

    /// Unitary half spectrum of a real signal whose length this transform uses.
    pub(crate) fn forward_half(&self, x: &[f64]) -> Vec<Complex64> {
        self.forward_with(x, &mut self.scratch())
    }

    fn forward_with(&self, x: &[f64], scratch: &mut [Complex64]) -> Vec<Complex64> {
        let fft = &self.forward[&x.len()];
        let mut input = x.to_vec();
        let mut out = fft.make_output_vec();
        fft.process_with_scratch(&mut input, &mut out, &mut scratch[..fft.get_scratch_len()])
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / (x.len() as f64).sqrt();
        out.iter_mut().for_each(|c| *c *= scale);
        out
    }

    /// Inverse of [`Self::forward_half`] for an even length `len`.
    pub(crate) fn inverse_half(&self, spectrum: Vec<Complex64>, len: usize) -> Vec<f64> {
        self.inverse_with(spectrum, len, &mut self.scratch())
    }

    fn inverse_with(&self, mut spectrum: Vec<Complex64>, len: usize, scratch: &mut [Complex64]) -> Vec<f64> {
        let fft = &self.inverse[&len];
        // DC and Nyquist of a real signal are real.
        spectrum[0].im = 0.0;
        spectrum[len / 2].im = 0.0;
        let mut out = fft.make_output_vec();
        fft.process_with_scratch(&mut spectrum, &mut out, &mut scratch[..fft.get_scratch_len()])
            .expect("buffer sizes come from the plan");
        let scale = 1.0 / (len as f64).sqrt();
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// Analysis starting from the unitary half spectrum of the input.
    pub(crate) fn analyze_spectrum(&self, mut spectrum: Vec<Complex64>) -> Vec<Vec<f64>> {
        let mut scratch = self.scratch();
        let mut subbands = Vec::with_capacity(self.levels.len() + 1);
        for level in &self.levels {
            let (low, high) = level.analyze(&spectrum);
            subbands.push(self.inverse_with(high, level.high, &mut scratch));
            spectrum = low;
        }
        let last = self.levels.last().map_or(self.params.input_length, |l| l.low);
        subbands.push(self.inverse_with(spectrum, last, &mut scratch));
        subbands
    }

    /// Synthesis up to (but excluding) the final inverse FFT.
    pub(crate) fn synthesize_spectrum(&self, bands: &[Vec<f64>]) -> Result<Vec<Complex64>> {
        let expected = self.params.subband_lengths();
        if bands.len() != expected.len() {
            return Err(Error::LengthMismatch {
                expected: expected.len(),
                got: bands.len(),
            });
        }
        for (band, &len) in bands.iter().zip(&expected) {
            if band.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    got: band.len(),
                });
            }
        }
        let mut scratch = self.scratch();
        let mut spectrum = self.forward_with(&bands[self.levels.len()], &mut scratch);
        for (level, band) in self.levels.iter().zip(bands).rev() {
            let high = self.forward_with(band, &mut scratch);
            spectrum = level.synthesize(&spectrum, &high);
        }
        Ok(spectrum)
    }

    pub fn analyze(&self, x: &[f64]) -> Result<SubbandSet> {
        if x.len() != self.params.input_length {
            return Err(Error::LengthMismatch {
                expected: self.params.input_length,
                got: x.len(),
            });
        }
        Ok(SubbandSet {
            subbands: self.analyze_spectrum(self.forward_half(x)),
            params: self.params,
        })
    }

    /// Inverse transform from raw subband slices (same layout as [`SubbandSet`]).
    pub fn synthesize_bands(&self, bands: &[Vec<f64>]) -> Result<Vec<f64>> {
        let spectrum = self.synthesize_spectrum(bands)?;
        Ok(self.inverse_half(spectrum, self.params.input_length))
    }

    pub fn synthesize(&self, sub: &SubbandSet) -> Result<Vec<f64>> {
        if sub.params != self.params {
            return Err(Error::InvalidParameter(
                "subband set was produced with different parameters".into(),
            ));
        }
        self.synthesize_bands(&sub.subbands)
    }

    /// L2 norm of one synthesis atom per subband (J+1 values), computed once.
    pub fn basis_norms(&self) -> &[f64] {
        self.norms.get_or_init(|| {
            let lengths = self.params.subband_lengths();
            (0..lengths.len())
                .map(|j| {
                    let mut bands: Vec<Vec<f64>> =
                        lengths.iter().map(|&l| vec![0.0; l]).collect();
                    bands[j][lengths[j] / 2] = 1.0;
                    let atom = self
                        .synthesize_bands(&bands)
                        .expect("layout matches by construction");
                    atom.iter().map(|v| v * v).sum::<f64>().sqrt()
                })
                .collect()
        })
    }
}

/// One-shot analysis.
pub fn analyze(x: &[f64], params: &TqwtParams) -> Result<SubbandSet> {
    Tqwt::new(*params)?.analyze(x)
}

/// One-shot synthesis.
pub fn synthesize(sub: &SubbandSet) -> Result<Vec<f64>> {
    Tqwt::new(sub.params)?.synthesize(sub)
}
