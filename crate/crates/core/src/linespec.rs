//! Sliding-window line-spectrum tracking.
//!
//! A window of `L` adjacent frequency rows spans the whole time axis. Inside
//! it, a path picks one row per frame and is scored by
//!
//! ```text
//! O(path) = (lambda_f * F + mu_t * T) / A
//! ```
//!
//! where `A` is the amplitude sum, `F` the summed absolute second difference
//! of the row index and `T` the number of cells below the breakpoint
//! threshold `epsilon`. Paths through a line have large `A` and small `F`,
//! `T`, so a low cost marks a line. Every window whose best path beats the
//! noise-calibrated threshold `gamma` adds one count to each cell of that
//! path; the counts are then merged into the display spectrogram.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{min_max_normalize, AmplitudeScale, Spectrogram};

/// Lower bound on `A` in the cost denominator.
pub const A_GUARD: f64 = 1e-12;

/// Line width assumed when sizing the search window.
pub const DEFAULT_LINE_WIDTH_HZ: f64 = 25.0;

/// Search window width: `ceil(line_width / bin_width) + 2`, at least 5 rows.
pub fn default_window_len(line_width_hz: f64, bin_width_hz: f64) -> usize {
    let bins = (line_width_hz / bin_width_hz).ceil();
    if bins.is_finite() && bins > 0.0 {
        (bins as usize + 2).max(5)
    } else {
        5
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub lambda_f: f64,
    pub mu_t: f64,
    pub epsilon: f64,
    pub window_len: usize,
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_f", self.lambda_f),
            ("mu_t", self.mu_t),
            ("epsilon", self.epsilon),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.lambda_f == 0.0 && self.mu_t == 0.0 {
            return Err(Error::InvalidParameter(
                "lambda_f and mu_t cannot both be zero".into(),
            ));
        }
        if self.window_len < 2 {
            return Err(Error::InvalidParameter(format!(
                "window_len must be at least 2, got {}",
                self.window_len
            )));
        }
        Ok(())
    }
}

/// Score of one path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub amplitude_sum: f64,
    pub continuity: f64,
    pub breakpoints: usize,
    pub cost: f64,
    /// Row of the second-to-last step, if the path has one.
    pub prev_bin: Option<usize>,
}

/// Scores a path given its per-frame amplitudes and row indices.
pub fn path_cost(amps: &[f64], bins: &[usize], w: &CostWeights) -> PathState {
    debug_assert_eq!(amps.len(), bins.len());
    let amplitude_sum: f64 = amps.iter().sum();
    let mut continuity = 0.0;
    for i in 2..bins.len() {
        let d1 = bins[i - 2] as f64 - bins[i - 1] as f64;
        let d2 = bins[i - 1] as f64 - bins[i] as f64;
        continuity += (d1 - d2).abs();
    }
    let breakpoints = amps.iter().filter(|&&a| a < w.epsilon).count();
    let cost = (w.lambda_f * continuity + w.mu_t * breakpoints as f64) / amplitude_sum.max(A_GUARD);
    PathState {
        amplitude_sum,
        continuity,
        breakpoints,
        cost,
        prev_bin: bins.len().checked_sub(2).map(|i| bins[i]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Globally optimal path (parametric dynamic programming).
    #[default]
    Exact,
    /// Frame-by-frame extension keeping, per row, the predecessor whose
    /// extended path has the lowest cost.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectDirection {
    /// A window detects a line when its best cost is below `gamma`.
    #[default]
    BelowGamma,
    AboveGamma,
}

impl DetectDirection {
    pub fn detects(self, cost: f64, gamma: f64) -> bool {
        match self {
            Self::BelowGamma => cost < gamma,
            Self::AboveGamma => cost > gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub lambda_f: f64,
    pub mu_t: f64,
    pub window_len: usize,
    pub mode: SearchMode,
    pub direction: DetectDirection,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda_f: 1.0,
            mu_t: 1.0,
            window_len: 5,
            mode: SearchMode::Exact,
            direction: DetectDirection::BelowGamma,
        }
    }
}

impl TrackerConfig {
    pub fn weights(&self, epsilon: f64) -> CostWeights {
        CostWeights {
            lambda_f: self.lambda_f,
            mu_t: self.mu_t,
            epsilon,
            window_len: self.window_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.weights(0.0).validate()
    }
}

/// Best path in one window; `bins` are absolute row indices, one per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPath {
    pub start: usize,
    pub bins: Vec<usize>,
    pub state: PathState,
}

/// Amplitudes of rows `start..start + l`, laid out frame-major.
fn window_amps(amps: &Array2<f64>, start: usize, l: usize) -> Vec<f64> {
    let n = amps.ncols();
    let mut out = vec![0.0; n * l];
    for j in 0..l {
        for (t, &a) in amps.row(start + j).iter().enumerate() {
            out[t * l + j] = a;
        }
    }
    out
}

/// Minimizes `sum_i g(a_i) + lambda_f * F` over paths with
/// `g(a) = mu_t [a < eps] - c a`. Ties go to the lowest row indices.
/// Returns window-relative rows.
fn minimize_linearized(win: &[f64], n: usize, l: usize, w: &CostWeights, c: f64) -> Vec<usize> {
    let g: Vec<f64> = win
        .iter()
        .map(|&a| (if a < w.epsilon { w.mu_t } else { 0.0 }) - c * a)
        .collect();
    if n == 1 {
        return vec![argmin(&g[..l])];
    }

    // value[p * l + q]: best partial path ending with rows (p, q).
    let mut value = vec![0.0; l * l];
    for p in 0..l {
        for q in 0..l {
            value[p * l + q] = g[p] + g[l + q];
        }
    }
    // jump[(p * l + q) * l + o] = lambda_f |o - 2p + q|
    let mut jump = vec![0.0; l * l * l];
    for p in 0..l {
        for q in 0..l {
            for o in 0..l {
                jump[(p * l + q) * l + o] = w.lambda_f * (o as f64 - 2.0 * p as f64 + q as f64).abs();
            }
        }
    }
    let mut back = vec![0u16; n * l * l];
    let mut next = vec![0.0; l * l];
    for t in 2..n {
        let gt = &g[t * l..(t + 1) * l];
        for p in 0..l {
            for q in 0..l {
                let jumps = &jump[(p * l + q) * l..(p * l + q + 1) * l];
                let mut best = f64::INFINITY;
                let mut arg = 0;
                for (o, &j) in jumps.iter().enumerate() {
                    let v = value[o * l + p] + j;
                    if v < best {
                        best = v;
                        arg = o;
                    }
                }
                next[p * l + q] = best + gt[q];
                back[t * l * l + p * l + q] = arg as u16;
            }
        }
        std::mem::swap(&mut value, &mut next);
    }

    let last = argmin(&value);
    let mut path = vec![0; n];
    path[n - 2] = last / l;
    path[n - 1] = last % l;
    for t in (2..n).rev() {
        path[t - 2] = back[t * l * l + path[t - 1] * l + path[t]] as usize;
    }
    path
}

fn argmin(values: &[f64]) -> usize {
    let mut arg = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[arg] {
            arg = i;
        }
    }
    arg
}

fn score(win: &[f64], l: usize, rel: &[usize], start: usize, w: &CostWeights) -> (Vec<usize>, PathState) {
    let amps: Vec<f64> = rel.iter().enumerate().map(|(t, &j)| win[t * l + j]).collect();
    let bins: Vec<usize> = rel.iter().map(|&j| start + j).collect();
    let state = path_cost(&amps, &bins, w);
    (bins, state)
}

// Dinkelbach iteration: the ratio is minimized by repeatedly minimizing
// h - c A at the current best ratio c until no path improves on it.
fn track_exact(win: &[f64], n: usize, l: usize, start: usize, w: &CostWeights) -> (Vec<usize>, PathState) {
    const MAX_ROUNDS: usize = 100;
    let mut best = score(win, l, &minimize_linearized(win, n, l, w, 0.0), start, w);
    for _ in 0..MAX_ROUNDS {
        let cand = score(win, l, &minimize_linearized(win, n, l, w, best.1.cost), start, w);
        if cand.1.cost < best.1.cost {
            best = cand;
        } else {
            break;
        }
    }
    best
}

// Each row keeps the running (A, F, T) of its best path; the first frame
// starts at (a, 0, 0).
fn track_greedy(win: &[f64], n: usize, l: usize, start: usize, w: &CostWeights) -> (Vec<usize>, PathState) {
    #[derive(Clone, Copy)]
    struct Triple {
        a: f64,
        f: f64,
        t: usize,
    }
    let cost = |s: &Triple| (w.lambda_f * s.f + w.mu_t * s.t as f64) / s.a.max(A_GUARD);

    let mut states: Vec<Triple> = (0..l).map(|j| Triple { a: win[j], f: 0.0, t: 0 }).collect();
    let mut back = vec![0usize; n * l];
    for t in 1..n {
        let mut next = Vec::with_capacity(l);
        for j in 0..l {
            let a = win[t * l + j];
            let mut best: Option<(f64, Triple, usize)> = None;
            for (o, s) in states.iter().enumerate() {
                let bend = if t >= 2 {
                    let p = back[(t - 1) * l + o];
                    let d1 = p as f64 - o as f64;
                    let d2 = o as f64 - j as f64;
                    (d1 - d2).abs()
                } else {
                    0.0
                };
                let ext = Triple {
                    a: s.a + a,
                    f: s.f + bend,
                    t: s.t + usize::from(a < w.epsilon),
                };
                let c = cost(&ext);
                if best.is_none_or(|(bc, _, _)| c < bc) {
                    best = Some((c, ext, o));
                }
            }
            let (_, ext, o) = best.expect("window has at least one row");
            back[t * l + j] = o;
            next.push(ext);
        }
        states = next;
    }
    let costs: Vec<f64> = states.iter().map(cost).collect();
    let mut rel = vec![0; n];
    rel[n - 1] = argmin(&costs);
    for t in (1..n).rev() {
        rel[t - 1] = back[t * l + rel[t]];
    }
    score(win, l, &rel, start, w)
}

/// Best full-length path within rows `start..start + L`.
pub fn track_window(
    lofar: &Spectrogram,
    start: usize,
    w: &CostWeights,
    mode: SearchMode,
) -> Result<TrackedPath> {
    w.validate()?;
    let (m, n) = lofar.dim();
    let l = w.window_len;
    if l > m {
        return Err(Error::InvalidParameter(format!(
            "window of {l} rows does not fit {m} frequency rows"
        )));
    }
    if start > m - l {
        return Err(Error::WindowOutOfRange { start, max: m - l });
    }
    let win = window_amps(lofar.amplitudes(), start, l);
    let (bins, state) = match mode {
        SearchMode::Exact => track_exact(&win, n, l, start, w),
        SearchMode::Greedy => track_greedy(&win, n, l, start, w),
    };
    Ok(TrackedPath { start, bins, state })
}

/// Best path of every window start `0..=M-L`, computed in parallel.
pub fn track_all(lofar: &Spectrogram, w: &CostWeights, mode: SearchMode) -> Result<Vec<TrackedPath>> {
    w.validate()?;
    let m = lofar.rows();
    if w.window_len > m {
        return Err(Error::InvalidParameter(format!(
            "window of {} rows does not fit {m} frequency rows",
            w.window_len
        )));
    }
    (0..=m - w.window_len)
        .into_par_iter()
        .map(|k| track_window(lofar, k, w, mode))
        .collect()
}

fn require_linear(spec: &Spectrogram) -> Result<()> {
    if spec.scale() != AmplitudeScale::Linear {
        return Err(Error::InvalidParameter(
            "tracker thresholds need a linear-amplitude spectrogram".into(),
        ));
    }
    Ok(())
}

/// `sqrt(mean(a^2))` over every cell of a noise spectrogram.
pub fn epsilon_from_noise(noise: &Spectrogram) -> Result<f64> {
    epsilon_pooled(std::slice::from_ref(noise))
}

/// `sqrt(mean(a^2))` over the cells of all given noise spectrograms.
pub fn epsilon_pooled(noise: &[Spectrogram]) -> Result<f64> {
    if noise.is_empty() {
        return Err(Error::EmptySpectrogram);
    }
    let mut power = 0.0;
    let mut cells = 0usize;
    for spec in noise {
        require_linear(spec)?;
        power += spec.amplitudes().iter().map(|a| a * a).sum::<f64>();
        cells += spec.amplitudes().len();
    }
    Ok((power / cells as f64).sqrt())
}

/// Lowest best-path cost over all windows of a noise spectrogram.
pub fn gamma_from_noise(noise: &Spectrogram, w: &CostWeights, mode: SearchMode) -> Result<f64> {
    Ok(track_all(noise, w, mode)?
        .iter()
        .map(|p| p.state.cost)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub epsilon: f64,
    pub gamma: f64,
}

/// Pooled `epsilon`, then `gamma` as the minimum over every noise map.
pub fn calibrate(noise: &[Spectrogram], cfg: &TrackerConfig) -> Result<Thresholds> {
    cfg.validate()?;
    let epsilon = epsilon_pooled(noise)?;
    let w = cfg.weights(epsilon);
    let mut gamma = f64::INFINITY;
    for spec in noise {
        gamma = gamma.min(gamma_from_noise(spec, &w, cfg.mode)?);
    }
    Ok(Thresholds { epsilon, gamma })
}

/// Per-cell detection tally.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterMap {
    pub counts: Array2<u32>,
    pub gamma: f64,
    pub windows: usize,
    pub detections: usize,
}

impl CounterMap {
    pub fn detection_rate(&self) -> f64 {
        if self.windows == 0 {
            0.0
        } else {
            self.detections as f64 / self.windows as f64
        }
    }
}

/// Number of windows of width `l` over `m` rows that contain row `row`.
pub fn windows_covering(m: usize, l: usize, row: usize) -> usize {
    if l > m || row >= m {
        return 0;
    }
    let hi = row.min(m - l);
    let lo = (row + 1).saturating_sub(l);
    hi + 1 - lo
}

/// Runs every window and counts the cells of detected paths.
pub fn extract_with_thresholds(
    lofar: &Spectrogram,
    cfg: &TrackerConfig,
    thresholds: &Thresholds,
) -> Result<CounterMap> {
    require_linear(lofar)?;
    let paths = track_all(lofar, &cfg.weights(thresholds.epsilon), cfg.mode)?;
    let mut counts = Array2::<u32>::zeros(lofar.dim());
    let mut detections = 0;
    for path in &paths {
        if cfg.direction.detects(path.state.cost, thresholds.gamma) {
            detections += 1;
            for (t, &row) in path.bins.iter().enumerate() {
                counts[(row, t)] += 1;
            }
        }
    }
    Ok(CounterMap {
        counts,
        gamma: thresholds.gamma,
        windows: paths.len(),
        detections,
    })
}

/// Calibrates on `noise` and tracks `lofar`; both must share their shape.
pub fn extract_linespectrum(
    lofar: &Spectrogram,
    noise: &Spectrogram,
    cfg: &TrackerConfig,
) -> Result<CounterMap> {
    if lofar.dim() != noise.dim() {
        return Err(Error::DimensionMismatch {
            expected: lofar.dim(),
            got: noise.dim(),
        });
    }
    let thresholds = calibrate(std::slice::from_ref(noise), cfg)?;
    extract_with_thresholds(lofar, cfg, &thresholds)
}

/// `max(minmax(display), counts / max_count)` cell by cell.
pub fn merge_enhanced(display: &Spectrogram, counts: &CounterMap) -> Result<Spectrogram> {
    if display.dim() != counts.counts.dim() {
        return Err(Error::DimensionMismatch {
            expected: display.dim(),
            got: counts.counts.dim(),
        });
    }
    let max_count = counts.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let mut out = min_max_normalize(display.amplitudes());
    out.zip_mut_with(&counts.counts, |v, &c| *v = v.max(c as f64 / max_count));
    Ok(display.with_amplitudes(out, display.scale()))
}
