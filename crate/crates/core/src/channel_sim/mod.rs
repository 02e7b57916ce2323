//! Synthetic location-correlated massive-MIMO channels.
//!
//! A scene is a set of point scatterers with complex gains. The downlink
//! channel from a half-wavelength ULA at the base station to a user at `p`
//! is the single-bounce sum
//!
//! ```text
//! h(p) = Σ_c g_c · exp(−j2π(‖s_c − bs‖ + ‖s_c − p‖)/λ) · d₀/max(‖s_c − p‖, d₀) · a(θ_c)
//! a(θ)_n = exp(−jπ n sin θ)
//! ```
//!
//! with `θ_c` the departure angle of scatterer `c` measured from the array
//! broadside (the +x axis). Multi-antenna users get the matching receive
//! steering factor; extra subcarriers shift the wavelength by the configured
//! subcarrier spacing.

mod dataset;
mod scene;

pub use dataset::{
    build_datasets, measure, remeasure, Dataset, DatasetKind, DatasetSizes, Datasets,
    pilot_seed, MeasurementSample, PilotMatrix,
};
pub use scene::{channel_at, steering_vector, Area, ChannelSample, Scatterer, Scene};

use crate::error::{Error, Result};

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference distance of the path-loss model, meters.
pub const REFERENCE_DISTANCE: f64 = 1.0;

/// Array and pilot dimensions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Base-station antennas.
    pub n_tx: usize,
    /// Antennas per user.
    pub n_rx: usize,
    /// Subcarriers used for estimation.
    pub n_sc: usize,
    /// Pilot length `L`.
    pub pilot_len: usize,
    /// Carrier wavelength, meters.
    pub wavelength: f64,
    pub bs_position: [f64; 2],
    /// Spacing between the estimated subcarriers, Hz.
    pub subcarrier_spacing_hz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_tx: 56,
            n_rx: 1,
            n_sc: 1,
            pilot_len: 24,
            wavelength: 0.12,
            bs_position: [-50.0, 50.0],
            subcarrier_spacing_hz: 20e6 / 1024.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_sc == 0 || self.pilot_len == 0 {
            return Err(Error::Config(format!(
                "antenna, subcarrier and pilot counts must be >= 1: {self:?}"
            )));
        }
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(Error::Config(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        if !(self.subcarrier_spacing_hz >= 0.0) {
            return Err(Error::Config("subcarrier spacing must be non-negative".into()));
        }
        Ok(())
    }

    /// Length of `vec(H)`: `N_r · N_t · N_c`.
    pub fn channel_len(&self) -> usize {
        self.n_rx * self.n_tx * self.n_sc
    }

    /// Length of `vec(Y)`: `N_r · L · N_c`.
    pub fn measurement_len(&self) -> usize {
        self.n_rx * self.pilot_len * self.n_sc
    }

    /// Length of the real-vectorized measurement, `2 · N_r · L · N_c`.
    pub fn input_len(&self) -> usize {
        2 * self.measurement_len()
    }

    /// Wavelength seen on subcarrier `n`.
    pub fn subcarrier_wavelength(&self, n: usize) -> f64 {
        let fc = SPEED_OF_LIGHT / self.wavelength;
        SPEED_OF_LIGHT / (fc + n as f64 * self.subcarrier_spacing_hz)
    }
}
