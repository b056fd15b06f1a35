//! Signal-processing core for passive-sonar LOFAR analysis.
//!
//! - [`signal`]: sample buffers, framing, per-frame normalization, STFT and
//!   log-amplitude LOFAR maps.
//! - [`tqwt`]: tunable-Q wavelet transform realized in the DFT domain.
//! - [`rssd`]: resonance-based sparse decomposition (dual-TQWT MCA solved with
//!   SALSA) plus band-energy and spectral-correlation metrics.
//! - [`linespec`]: sliding-window multi-step line-spectrum tracker, noise
//!   calibrated thresholds and enhancement merge.

pub mod error;
pub mod linespec;
pub mod rssd;
pub mod signal;
pub mod tqwt;

pub use error::{Error, Result};
