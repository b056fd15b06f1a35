//! Resonance-based sparse signal decomposition.
//!
//! A frame `x` is split as `x = Phi_h w_h + Phi_l w_l + n` by minimizing
//!
//! ```text
//! ||x - Phi_h w_h - Phi_l w_l||^2 + sum_j lam_h[j] ||w_h^j||_1 + sum_j lam_l[j] ||w_l^j||_1
//! ```
//!
//! over the high-Q and low-Q TQWT dictionaries. The solver is SALSA: an
//! augmented-Lagrangian split with per-level soft thresholding, followed by a
//! closed-form data-consistency step that uses `Phi Phi^T = I` for each
//! dictionary (so the stacked dictionary satisfies `A A^T = 2 I`).

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::{Error, Result};
use crate::signal::{SampleBuffer, WindowKind, WindowSpec};
use crate::tqwt::{SubbandSet, Tqwt, TqwtParams};

/// Settings for one MCA decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McaConfig {
    pub high: TqwtParams,
    pub low: TqwtParams,
    pub k_high: f64,
    pub k_low: f64,
    pub iterations: usize,
    pub salsa_mu: f64,
}

impl McaConfig {
    pub const DEFAULT_ITERATIONS: usize = 100;
    pub const DEFAULT_SALSA_MU: f64 = 0.5;

    /// Equal energy split (`k = 0.5`), 100 iterations, `mu = 0.5`.
    pub fn new(high: TqwtParams, low: TqwtParams) -> Result<Self> {
        let cfg = Self {
            high,
            low,
            k_high: 0.5,
            k_low: 0.5,
            iterations: Self::DEFAULT_ITERATIONS,
            salsa_mu: Self::DEFAULT_SALSA_MU,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// High `Q=4, r=3, J=32`, low `Q=1, r=3, J=3` on `n`-sample blocks.
    pub fn ship_noise_default(n: usize) -> Result<Self> {
        Self::new(
            TqwtParams::from_q(4.0, 3.0, 32, n)?,
            TqwtParams::from_q(1.0, 3.0, 3, n)?,
        )
    }

    pub fn block_len(&self) -> usize {
        self.high.input_length
    }

    pub fn validate(&self) -> Result<()> {
        if self.high.input_length != self.low.input_length {
            return Err(Error::InvalidParameter(format!(
                "high and low transforms disagree on block length ({} vs {})",
                self.high.input_length, self.low.input_length
            )));
        }
        for (name, k) in [("k_high", self.k_high), ("k_low", self.k_low)] {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {k}"
                )));
            }
        }
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be at least 1".into()));
        }
        if !(self.salsa_mu > 0.0 && self.salsa_mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "salsa_mu must be positive, got {}",
                self.salsa_mu
            )));
        }
        Ok(())
    }
}

/// Per-level L1 weights, `lam[j] = k * ||Phi_j||_2` for `j = 1..=J+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaWeights {
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

pub fn lambda_weights(cfg: &McaConfig) -> Result<LambdaWeights> {
    cfg.validate()?;
    let high = Tqwt::new(cfg.high)?;
    let low = Tqwt::new(cfg.low)?;
    Ok(weights_from(cfg, &high, &low))
}

fn weights_from(cfg: &McaConfig, high: &Tqwt, low: &Tqwt) -> LambdaWeights {
    LambdaWeights {
        high: high.basis_norms().iter().map(|n| cfg.k_high * n).collect(),
        low: low.basis_norms().iter().map(|n| cfg.k_low * n).collect(),
    }
}

/// High-resonance, low-resonance and residual parts of a signal.
/// The residual is formed by subtraction, so the three parts sum to `x` up
/// to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub x_high: Vec<f64>,
    pub x_low: Vec<f64>,
    pub residual: Vec<f64>,
    /// Lowest objective reached up to each iteration (summed over blocks).
    pub objective_trace: Vec<f64>,
    /// Objective of each raw SALSA iterate (summed over blocks).
    pub salsa_trace: Vec<f64>,
}

/// Solution for one `N`-sample block, including the final coefficients.
#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub high: SubbandSet,
    pub low: SubbandSet,
    pub decomposition: Decomposition,
}

/// Prepared dual-dictionary solver.
#[derive(Debug)]
pub struct Mca {
    cfg: McaConfig,
    high: Tqwt,
    low: Tqwt,
    lambdas: LambdaWeights,
}

fn soft(v: f64, t: f64) -> f64 {
    let m = v.abs() - t;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

fn weighted_l1(bands: &[Vec<f64>], lambdas: &[f64]) -> f64 {
    bands
        .iter()
        .zip(lambdas)
        .map(|(b, l)| l * b.iter().map(|v| v.abs()).sum::<f64>())
        .sum()
}

impl Mca {
    pub fn new(cfg: McaConfig) -> Result<Self> {
        cfg.validate()?;
        let high = Tqwt::new(cfg.high)?;
        let low = Tqwt::new(cfg.low)?;
        let lambdas = weights_from(&cfg, &high, &low);
        Ok(Self {
            cfg,
            high,
            low,
            lambdas,
        })
    }

    pub fn config(&self) -> &McaConfig {
        &self.cfg
    }

    pub fn lambdas(&self) -> &LambdaWeights {
        &self.lambdas
    }

    pub fn high_transform(&self) -> &Tqwt {
        &self.high
    }

    pub fn low_transform(&self) -> &Tqwt {
        &self.low
    }

    /// Objective value for given coefficients.
    pub fn objective(&self, x: &[f64], high: &SubbandSet, low: &SubbandSet) -> Result<f64> {
        let xh = self.high.synthesize(high)?;
        let xl = self.low.synthesize(low)?;
        if x.len() != xh.len() {
            return Err(Error::LengthMismatch {
                expected: xh.len(),
                got: x.len(),
            });
        }
        Ok(self.objective_parts(x, &xh, &xl, &high.subbands, &low.subbands))
    }

    fn objective_parts(
        &self,
        x: &[f64],
        xh: &[f64],
        xl: &[f64],
        wh: &[Vec<f64>],
        wl: &[Vec<f64>],
    ) -> f64 {
        let fidelity: f64 = x
            .iter()
            .zip(xh)
            .zip(xl)
            .map(|((x, h), l)| (x - h - l).powi(2))
            .sum();
        fidelity + weighted_l1(wh, &self.lambdas.high) + weighted_l1(wl, &self.lambdas.low)
    }

    /// Runs SALSA on exactly one block of `N` samples.
    ///
    /// The iteration is not monotone, so the coefficients of the lowest
    /// objective seen are returned; `objective_trace` is the running minimum
    /// and `salsa_trace` the raw per-iteration value.
    pub fn solve_block(&self, x: &[f64]) -> Result<BlockSolution> {
        let n = self.cfg.block_len();
        if x.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let mu = self.cfg.salsa_mu;
        let th_high: Vec<f64> = self.lambdas.high.iter().map(|l| l / (2.0 * mu)).collect();
        let th_low: Vec<f64> = self.lambdas.low.iter().map(|l| l / (2.0 * mu)).collect();

        let mut w_high = SubbandSet::zeros(self.cfg.high).subbands;
        let mut w_low = SubbandSet::zeros(self.cfg.low).subbands;
        let mut d_high = w_high.clone();
        let mut d_low = w_low.clone();
        let mut u_high = w_high.clone();
        let mut u_low = w_low.clone();
        let mut best_high = w_high.clone();
        let mut best_low = w_low.clone();
        // Starting point: all coefficients zero.
        let mut best = x.iter().map(|v| v * v).sum::<f64>();
        let mut trace = Vec::with_capacity(self.cfg.iterations);
        let mut raw = Vec::with_capacity(self.cfg.iterations);

        for iteration in 1..=self.cfg.iterations {
            shrink(&mut u_high, &w_high, &d_high, &th_high);
            shrink(&mut u_low, &w_low, &d_low, &th_low);

            let mut spectrum = self.high.synthesize_spectrum(&u_high)?;
            for (a, b) in spectrum.iter_mut().zip(self.low.synthesize_spectrum(&u_low)?) {
                *a += b;
            }
            let s = self.high.inverse_half(spectrum, n);
            let c: Vec<f64> = x.iter().zip(&s).map(|(x, s)| (x - s) / (mu + 2.0)).collect();
            let c_spectrum = self.high.forward_half(&c);
            d_high = self.high.analyze_spectrum(c_spectrum.clone());
            d_low = self.low.analyze_spectrum(c_spectrum);
            combine(&mut w_high, &d_high, &u_high);
            combine(&mut w_low, &d_low, &u_low);

            // Phi (d + u) = Phi Phi^T c + Phi u = c + Phi u for each dictionary.
            let fidelity: f64 = x
                .iter()
                .zip(&c)
                .zip(&s)
                .map(|((x, c), s)| (x - 2.0 * c - s).powi(2))
                .sum();
            let value = fidelity
                + weighted_l1(&w_high, &self.lambdas.high)
                + weighted_l1(&w_low, &self.lambdas.low);
            if !value.is_finite() {
                return Err(Error::Divergence {
                    iteration,
                    salsa_mu: mu,
                });
            }
            raw.push(value);
            if value < best {
                best = value;
                clone_into(&mut best_high, &w_high);
                clone_into(&mut best_low, &w_low);
            }
            trace.push(best);
        }

        let x_high = self.high.synthesize_bands(&best_high)?;
        let x_low = self.low.synthesize_bands(&best_low)?;
        let residual = x
            .iter()
            .zip(&x_high)
            .zip(&x_low)
            .map(|((x, h), l)| x - h - l)
            .collect();
        Ok(BlockSolution {
            high: SubbandSet {
                subbands: best_high,
                params: self.cfg.high,
            },
            low: SubbandSet {
                subbands: best_low,
                params: self.cfg.low,
            },
            decomposition: Decomposition {
                x_high,
                x_low,
                residual,
                objective_trace: trace,
                salsa_trace: raw,
            },
        })
    }

    /// Decomposes a signal of any length in consecutive `N`-sample blocks.
    /// The last block is zero-padded and truncated after synthesis. Blocks
    /// run in parallel; the result does not depend on the thread count.
    pub fn decompose(&self, x: &[f64]) -> Result<Decomposition> {
        if x.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let n = self.cfg.block_len();
        let blocks: Vec<Decomposition> = x
            .par_chunks(n)
            .map(|chunk| {
                let mut block = chunk.to_vec();
                block.resize(n, 0.0);
                self.solve_block(&block).map(|s| s.decomposition)
            })
            .collect::<Result<_>>()?;

        let mut out = Decomposition {
            x_high: Vec::with_capacity(x.len()),
            x_low: Vec::with_capacity(x.len()),
            residual: Vec::with_capacity(x.len()),
            objective_trace: vec![0.0; self.cfg.iterations],
            salsa_trace: vec![0.0; self.cfg.iterations],
        };
        for (block, chunk) in blocks.iter().zip(x.chunks(n)) {
            let m = chunk.len();
            out.x_high.extend_from_slice(&block.x_high[..m]);
            out.x_low.extend_from_slice(&block.x_low[..m]);
            for (acc, v) in out.objective_trace.iter_mut().zip(&block.objective_trace) {
                *acc += v;
            }
            for (acc, v) in out.salsa_trace.iter_mut().zip(&block.salsa_trace) {
                *acc += v;
            }
        }
        out.residual = x
            .iter()
            .zip(&out.x_high)
            .zip(&out.x_low)
            .map(|((x, h), l)| x - h - l)
            .collect();
        Ok(out)
    }
}

fn shrink(u: &mut [Vec<f64>], w: &[Vec<f64>], d: &[Vec<f64>], thresholds: &[f64]) {
    for (((u, w), d), &t) in u.iter_mut().zip(w).zip(d).zip(thresholds) {
        for ((u, w), d) in u.iter_mut().zip(w).zip(d) {
            *u = soft(w + d, t) - d;
        }
    }
}

fn clone_into(dst: &mut [Vec<f64>], src: &[Vec<f64>]) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.copy_from_slice(s);
    }
}

fn combine(w: &mut [Vec<f64>], d: &[Vec<f64>], u: &[Vec<f64>]) {
    for ((w, d), u) in w.iter_mut().zip(d).zip(u) {
        for ((w, d), u) in w.iter_mut().zip(d).zip(u) {
            *w = d + u;
        }
    }
}

/// Convenience wrapper: decompose a buffer with `cfg`.
pub fn decompose(x: &SampleBuffer, cfg: &McaConfig) -> Result<Decomposition> {
    Mca::new(*cfg)?.decompose(x.samples())
}

/// Ten 1 kHz bands from 0 Hz, then one band up to Nyquist.
pub fn default_band_edges(sample_rate_hz: f64) -> Vec<f64> {
    let nyquist = sample_rate_hz / 2.0;
    let mut edges: Vec<f64> = (0..=10)
        .map(|k| k as f64 * 1000.0)
        .take_while(|&e| e < nyquist)
        .collect();
    edges.push(nyquist);
    edges
}

/// One-sided periodogram `(frequency, power)` of the whole signal.
fn one_sided_power(samples: &[f64], fs: f64) -> Vec<(f64, f64)> {
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    (0..=n / 2)
        .map(|k| {
            let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            let p = buf[k].norm_sqr() * if mirrored { 2.0 } else { 1.0 };
            (k as f64 * fs / n as f64, p)
        })
        .collect()
}

/// Share of spectral energy (percent) in each band `[e_i, e_{i+1})`; the
/// last band includes its upper edge. Percentages sum to 100.
pub fn band_energy_percentages(x: &SampleBuffer, band_edges_hz: &[f64]) -> Result<Vec<f64>> {
    let nyquist = x.sample_rate_hz() / 2.0;
    if band_edges_hz.len() < 2 {
        return Err(Error::InvalidParameter("at least two band edges are required".into()));
    }
    if band_edges_hz.windows(2).any(|w| w[1] <= w[0])
        || band_edges_hz[0] < 0.0
        || *band_edges_hz.last().unwrap() > nyquist * (1.0 + 1e-12)
    {
        return Err(Error::InvalidParameter(format!(
            "band edges must increase within [0, {nyquist}]"
        )));
    }
    let bands = band_edges_hz.len() - 1;
    let mut energy = vec![0.0; bands];
    for (f, p) in one_sided_power(x.samples(), x.sample_rate_hz()) {
        let last = band_edges_hz[bands];
        if f < band_edges_hz[0] || f > last {
            continue;
        }
        let idx = band_edges_hz[1..]
            .iter()
            .position(|&e| f < e)
            .unwrap_or(bands - 1);
        energy[idx] += p;
    }
    let total: f64 = energy.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoEnergy);
    }
    Ok(energy.into_iter().map(|e| 100.0 * e / total).collect())
}

/// Spectral correlation coefficient over `[f1_hz, f2_hz]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SccResult {
    pub value: f64,
    pub f1_hz: f64,
    pub f2_hz: f64,
}

/// Segment length of the averaged power spectra used by [`scc`].
pub const SCC_SEGMENT: usize = 2048;

/// Averaged Hanning-windowed periodogram (50% overlap, zero-padded when the
/// signal is shorter than one segment). Bin `k` sits at `k fs / 2048`.
pub fn power_spectrum(x: &SampleBuffer) -> Vec<f64> {
    let seg = SCC_SEGMENT;
    let mut samples = x.samples().to_vec();
    if samples.len() < seg {
        samples.resize(seg, 0.0);
    }
    let win = WindowSpec {
        kind: WindowKind::Hanning,
        length: seg,
        overlap_fraction: 0.5,
    };
    let taper = win.taper();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let frames = win.frame_count(samples.len());
    let mut acc = vec![0.0; seg / 2 + 1];
    let mut buf = vec![Complex64::default(); seg];
    for k in 0..frames {
        let start = k * win.hop();
        for (i, dst) in buf.iter_mut().enumerate() {
            *dst = Complex64::new(samples[start + i] * taper[i], 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
    }
    acc.iter_mut().for_each(|a| *a /= frames as f64);
    acc
}

pub fn scc(a: &SampleBuffer, b: &SampleBuffer, f1_hz: f64, f2_hz: f64) -> Result<SccResult> {
    let fs = a.sample_rate_hz();
    if (b.sample_rate_hz() - fs).abs() > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sample rates differ ({fs} vs {})",
            b.sample_rate_hz()
        )));
    }
    if !(f1_hz >= 0.0 && f1_hz < f2_hz && f2_hz <= fs / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "band must satisfy 0 <= f1 < f2 <= fs/2, got [{f1_hz}, {f2_hz}]"
        )));
    }
    let pa = power_spectrum(a);
    let pb = power_spectrum(b);
    let df = fs / SCC_SEGMENT as f64;
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (k, (x, y)) in pa.iter().zip(&pb).enumerate() {
        let f = k as f64 * df;
        if f < f1_hz || f > f2_hz {
            continue;
        }
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if !(aa > 0.0 && bb > 0.0) {
        return Err(Error::NoEnergy);
    }
    Ok(SccResult {
        value: ab / (aa * bb).sqrt(),
        f1_hz,
        f2_hz,
    })
}
