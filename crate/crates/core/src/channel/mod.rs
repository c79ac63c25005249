//! Desk-scale WDM coherent transmission: RRC pulse shaping, frequency-multiplexed
//! dual-polarization channels, split-step Manakov propagation and lumped amplification.
//!
//! Internal units: time in ps, frequency in THz, distance in km, power in W.

mod propagate;
mod transmitter;

use serde::{Deserialize, Serialize};

use crate::error::SignalError;

pub use propagate::{
    amplify, dispersion_factor, propagate, propagate_span, span_steps, Field, FftKit, Propagation,
};
pub use transmitter::{build_wdm_field, frequency_grid, rrc_spectrum, WdmField};

/// Speed of light in nm/ps.
pub const SPEED_OF_LIGHT_NM_PS: f64 = 299_792.458;
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Split-step size control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    /// Largest nonlinear phase `(8/9)·γ·P·h` accumulated by one step, rad.
    pub max_nl_phase_rad: f64,
    /// Longest allowed step, km.
    pub max_step_km: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            max_nl_phase_rad: 3e-3,
            max_step_km: 5.0,
        }
    }
}

impl StepPolicy {
    /// The same policy with every step divided by `factor`.
    pub fn refined(self, factor: f64) -> Self {
        Self {
            max_nl_phase_rad: self.max_nl_phase_rad / factor,
            max_step_km: self.max_step_km / factor,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.max_nl_phase_rad) || !ok(self.max_step_km) {
            return Err(SignalError::StepPolicy(
                "step bounds must be positive and finite".into(),
            ));
        }
        if self.max_nl_phase_rad > 0.1 {
            return Err(SignalError::StepPolicy(format!(
                "nonlinear phase per step {} rad exceeds the 0.1 rad bound",
                self.max_nl_phase_rad
            )));
        }
        Ok(())
    }
}

/// Fiber link and WDM signal parameters (units as named).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkScenario {
    pub name: String,
    pub spans: usize,
    pub span_length_km: f64,
    pub alpha_db_per_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub gamma_per_w_km: f64,
    pub wavelength_nm: f64,
    pub baud_rate_gbaud: f64,
    pub num_channels: usize,
    pub channel_spacing_ghz: f64,
    pub rolloff: f64,
    pub launch_power_dbm: f64,
    pub noise_figure_db: f64,
    /// Disables amplifier noise entirely (for physics checks).
    pub ase_noise: bool,
    pub samples_per_symbol: usize,
    /// 4D symbols per channel per realization.
    pub symbols_per_channel: usize,
    /// Averaging window of the data-aided phase filter, symbols.
    pub phase_window: usize,
    pub step: StepPolicy,
}

impl Default for LinkScenario {
    fn default() -> Self {
        Self::scenario1_desk()
    }
}

impl LinkScenario {
    /// 1 × 205 km, 5 × 50 GBaud on a 55 GHz grid.
    pub fn scenario1() -> Self {
        Self {
            name: "scenario1".into(),
            spans: 1,
            span_length_km: 205.0,
            alpha_db_per_km: 0.2,
            dispersion_ps_nm_km: 17.0,
            gamma_per_w_km: 1.3,
            wavelength_nm: 1550.0,
            baud_rate_gbaud: 50.0,
            num_channels: 5,
            channel_spacing_ghz: 55.0,
            rolloff: 0.1,
            launch_power_dbm: 10.0,
            noise_figure_db: 5.0,
            ase_noise: true,
            samples_per_symbol: 8,
            symbols_per_channel: 1 << 18,
            phase_window: 64,
            step: StepPolicy::default(),
        }
    }

    /// Scenario 1 reduced to 3 channels × 2¹⁶ symbols.
    pub fn scenario1_desk() -> Self {
        Self {
            name: "scenario1-desk".into(),
            num_channels: 3,
            samples_per_symbol: 6,
            symbols_per_channel: 1 << 16,
            ..Self::scenario1()
        }
    }

    /// 5 × 80 km, 5 × 110 GBaud on a 112.5 GHz grid, 3 dBm.
    pub fn scenario2() -> Self {
        Self {
            name: "scenario2".into(),
            spans: 5,
            span_length_km: 80.0,
            baud_rate_gbaud: 110.0,
            channel_spacing_ghz: 112.5,
            launch_power_dbm: 3.0,
            ..Self::scenario1()
        }
    }

    /// Scenario 2 reduced to 3 channels × 2¹⁶ symbols.
    pub fn scenario2_desk() -> Self {
        Self {
            name: "scenario2-desk".into(),
            num_channels: 3,
            samples_per_symbol: 5,
            symbols_per_channel: 1 << 16,
            ..Self::scenario2()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "scenario1" => Some(Self::scenario1()),
            "scenario1-desk" => Some(Self::scenario1_desk()),
            "scenario2" => Some(Self::scenario2()),
            "scenario2-desk" => Some(Self::scenario2_desk()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let positive = [
            ("span_length_km", self.span_length_km),
            ("wavelength_nm", self.wavelength_nm),
            ("baud_rate_gbaud", self.baud_rate_gbaud),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SignalError::Config(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("alpha_db_per_km", self.alpha_db_per_km),
            ("gamma_per_w_km", self.gamma_per_w_km),
            ("noise_figure_db", self.noise_figure_db.max(0.0)),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SignalError::Config(format!("{name} must be non-negative")));
            }
        }
        if !self.dispersion_ps_nm_km.is_finite() || !self.launch_power_dbm.is_finite() {
            return Err(SignalError::Config("dispersion and power must be finite".into()));
        }
        if self.spans == 0 || self.num_channels == 0 || self.symbols_per_channel == 0 {
            return Err(SignalError::Config(
                "spans, channels and symbols must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(SignalError::Config("rolloff must lie in [0, 1]".into()));
        }
        if self.phase_window == 0 {
            return Err(SignalError::Config("phase window must be positive".into()));
        }
        let occupied = (self.num_channels as f64 - 1.0) * self.channel_spacing_ghz
            + (1.0 + self.rolloff) * self.baud_rate_gbaud;
        let simulated = self.samples_per_symbol as f64 * self.baud_rate_gbaud;
        if simulated <= occupied {
            return Err(SignalError::Config(format!(
                "{} samples/symbol cannot hold {occupied} GHz of WDM spectrum",
                self.samples_per_symbol
            )));
        }
        if self.num_channels > 1 && !(self.channel_spacing_ghz > 0.0) {
            return Err(SignalError::Config("channel spacing must be positive".into()));
        }
        self.step.validate()
    }

    /// Power attenuation coefficient in 1/km.
    pub fn alpha_per_km(&self) -> f64 {
        self.alpha_db_per_km * std::f64::consts::LN_10 / 10.0
    }

    /// Group-velocity dispersion β₂ in ps²/km.
    pub fn beta2_ps2_per_km(&self) -> f64 {
        -self.dispersion_ps_nm_km * self.wavelength_nm.powi(2)
            / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PS)
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_w(self.launch_power_dbm)
    }

    /// Symbol rate in THz (symbols per ps).
    pub fn symbol_rate_thz(&self) -> f64 {
        self.baud_rate_gbaud * 1e-3
    }

    pub fn sample_count(&self) -> usize {
        self.symbols_per_channel * self.samples_per_symbol
    }

    pub fn total_length_km(&self) -> f64 {
        self.spans as f64 * self.span_length_km
    }

    /// Photon energy at the carrier, J.
    pub fn photon_energy_j(&self) -> f64 {
        PLANCK * SPEED_OF_LIGHT_NM_PS * 1e3 / (self.wavelength_nm * 1e-9)
    }

    /// Amplifier gain restoring one span.
    pub fn span_gain(&self) -> f64 {
        (self.alpha_per_km() * self.span_length_km).exp()
    }

    /// One-sided ASE power spectral density per polarization at an amplifier output, W/Hz.
    pub fn ase_psd_per_pol(&self) -> f64 {
        0.5 * 10f64.powf(self.noise_figure_db / 10.0) * self.photon_energy_j() * self.span_gain()
    }

    /// Carrier offset of channel `c` from the simulation centre, THz.
    pub fn channel_offset_thz(&self, c: usize) -> f64 {
        (c as f64 - (self.num_channels as f64 - 1.0) / 2.0) * self.channel_spacing_ghz * 1e-3
    }

    /// Index of the channel under test.
    pub fn center_channel(&self) -> usize {
        self.num_channels / 2
    }
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_constants() {
        let s = LinkScenario::scenario1();
        assert!((s.beta2_ps2_per_km() + 21.68).abs() < 0.01);
        assert!((s.alpha_per_km() - 0.046_05).abs() < 1e-4);
        assert!((s.photon_energy_j() - 1.2816e-19).abs() < 1e-22);
        assert!((s.launch_power_w() - 0.01).abs() < 1e-12);
        assert!(s.validate().is_ok());
        assert!(LinkScenario::scenario1_desk().validate().is_ok());
        assert!(LinkScenario::scenario2_desk().validate().is_ok());
        assert!(LinkScenario::scenario2().validate().is_ok());
    }

    #[test]
    fn bad_configs() {
        let mut s = LinkScenario::scenario1_desk();
        s.span_length_km = -1.0;
        assert!(matches!(s.validate(), Err(SignalError::Config(_))));
        let mut s = LinkScenario::scenario1_desk();
        s.samples_per_symbol = 2;
        assert!(s.validate().is_err());
        let mut s = LinkScenario::scenario1_desk();
        s.step.max_nl_phase_rad = 0.5;
        assert!(matches!(s.validate(), Err(SignalError::StepPolicy(_))));
    }

    #[test]
    fn toml_round_trip_with_defaults() {
        let s = LinkScenario::scenario2_desk();
        let text = toml::to_string(&s).unwrap();
        assert_eq!(toml::from_str::<LinkScenario>(&text).unwrap(), s);
        let partial: LinkScenario = toml::from_str("launch_power_dbm = 4.0\nspans = 2").unwrap();
        assert_eq!(partial.spans, 2);
        assert_eq!(partial.num_channels, 3);
    }
}
