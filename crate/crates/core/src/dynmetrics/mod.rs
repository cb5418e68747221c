//! Regime characterization: Lyapunov spectrum, active information storage
//! and Welch-based spectral signature.

mod ais;
mod lyapunov;
mod spectral;

pub use ais::{ais, ais_pooled, AisEstimate};
pub use lyapunov::{lyapunov_generic, lyapunov_spectrum, lyapunov_with_fallback, LyapunovConfig, LyapunovReport};
pub use spectral::{
    psd_welch, series_signature, spectral_scan, spectral_signature, welch_segment_len, DimsPolicy, ScanRow,
    SpectralScanConfig, SpectralSignature,
};
