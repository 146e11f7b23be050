//! Experiment configuration and its TOML form.
//!
//! Every field has a default, so an empty file is a valid config. Unknown keys
//! are rejected.
//!
//! ```toml
//! population = 100
//! calibrated_stages = 3
//! snr_db = 70.0            # `inf` for a noiseless path
//! eval_snr_db = inf
//! alpha_digital = 0.7071067811865476
//! algorithm = "blhec-wiener"   # hec-wiener | blhec-wiener | blhec-sgd
//! wiener_samples = 2000
//! sgd_samples = 48000
//! noise_coupling = "independent"  # or "held"
//! n_fft = 16384
//! window = "rectangular"   # or "blackman-harris"
//! seed = 1
//! ideal_stages = []
//!
//! [architecture]
//! stages = 5
//! flash_bits = 3
//!
//! [mismatch]
//! gain_lsb = 25.0
//! dac_lsb = 15.0
//! unit_bits = 12           # 0 measures in the converter's own LSB
//!
//! [delta]
//! kind = "normal"          # or kind = "fixed", value = 1e-3
//! variance = 1e-4
//!
//! [[tones]]
//! freq = 0.1077            # cycles per sample, snapped to an odd FFT bin
//! amplitude = 1.0
//! phase = 0.0
//!
//! [schedule]
//! mu_nl_initial = 0.5
//! mu_nl_final = 0.015625
//! halve_every = 24000
//! alpha_ratio = 0.5
//!
//! [blhec]
//! max_iterations = 200
//! tolerance = 1e-7
//! ```

use crate::HarnessError;
use hecal_core::adc::{AdcArchitecture, MismatchBounds};
use hecal_core::calibration::{BlhecOptions, StepSchedule};
use hecal_core::signal::NoiseCoupling;
use hecal_core::spectral::Window;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    HecWiener,
    BlhecWiener,
    BlhecSgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HecWiener => "hec-wiener",
            Algorithm::BlhecWiener => "blhec-wiener",
            Algorithm::BlhecSgd => "blhec-sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::HecWiener, Self::BlhecWiener, Self::BlhecSgd]
            .into_iter()
            .find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DeltaSource {
    Fixed { value: f64 },
    Normal { variance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Coupling {
    Independent,
    Held,
}

impl From<Coupling> for NoiseCoupling {
    fn from(c: Coupling) -> Self {
        match c {
            Coupling::Independent => NoiseCoupling::Independent,
            Coupling::Held => NoiseCoupling::Held,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    Rectangular,
    BlackmanHarris,
}

impl WindowKind {
    pub fn window(self) -> Window {
        match self {
            WindowKind::Rectangular => Window::Rectangular,
            WindowKind::BlackmanHarris => Window::BlackmanHarris4,
        }
    }
}

/// `stages` 2.5-bit MDAC stages and a `flash_bits` flash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub stages: usize,
    pub flash_bits: u32,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            stages: 5,
            flash_bits: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchConfig {
    pub gain_lsb: f64,
    pub dac_lsb: f64,
    /// Full scale over `2^unit_bits` is the unit of the bounds; 0 uses the
    /// converter's own LSB.
    pub unit_bits: u32,
}

impl Default for MismatchConfig {
    fn default() -> Self {
        let d = MismatchBounds::default();
        Self {
            gain_lsb: d.gain_lsb,
            dac_lsb: d.dac_lsb,
            unit_bits: d.unit_bits.unwrap_or(0),
        }
    }
}

impl MismatchConfig {
    pub fn bounds(&self) -> MismatchBounds {
        MismatchBounds {
            gain_lsb: self.gain_lsb,
            dac_lsb: self.dac_lsb,
            unit_bits: (self.unit_bits > 0).then_some(self.unit_bits),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToneConfig {
    /// Cycles per sample; snapped to the nearest odd bin of the FFT grid.
    pub freq: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub mu_nl_initial: f64,
    pub mu_nl_final: f64,
    pub halve_every: u64,
    pub alpha_ratio: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let s = StepSchedule::default();
        Self {
            mu_nl_initial: s.mu_nl_initial,
            mu_nl_final: s.mu_nl_final,
            halve_every: s.halve_every,
            alpha_ratio: s.alpha_ratio,
        }
    }
}

impl From<ScheduleConfig> for StepSchedule {
    fn from(s: ScheduleConfig) -> Self {
        StepSchedule {
            mu_nl_initial: s.mu_nl_initial,
            mu_nl_final: s.mu_nl_final,
            halve_every: s.halve_every,
            alpha_ratio: s.alpha_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlhecConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for BlhecConfig {
    fn default() -> Self {
        let o = BlhecOptions::default();
        Self {
            max_iterations: o.max_iterations,
            tolerance: o.tolerance,
        }
    }
}

impl From<BlhecConfig> for BlhecOptions {
    fn from(b: BlhecConfig) -> Self {
        BlhecOptions {
            max_iterations: b.max_iterations,
            tolerance: b.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: usize,
    pub architecture: ArchitectureConfig,
    pub mismatch: MismatchConfig,
    /// Pipeline stages (0-based) forced ideal, e.g. `[0, 1, 2]` to leave only
    /// the uncalibrated stages non-ideal.
    pub ideal_stages: Vec<usize>,
    /// Number of leading stages the correction covers.
    pub calibrated_stages: usize,
    pub tones: Vec<ToneConfig>,
    pub snr_db: f64,
    pub eval_snr_db: f64,
    pub alpha_digital: f64,
    pub delta: DeltaSource,
    pub algorithm: Algorithm,
    pub wiener_samples: usize,
    pub sgd_samples: usize,
    pub schedule: ScheduleConfig,
    pub blhec: BlhecConfig,
    pub noise_coupling: Coupling,
    pub n_fft: usize,
    pub window: WindowKind,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            population: 100,
            architecture: ArchitectureConfig::default(),
            mismatch: MismatchConfig::default(),
            ideal_stages: Vec::new(),
            calibrated_stages: 3,
            tones: vec![ToneConfig {
                freq: 0.1077,
                amplitude: 1.0,
                phase: 0.0,
            }],
            snr_db: 70.0,
            eval_snr_db: f64::INFINITY,
            alpha_digital: std::f64::consts::FRAC_1_SQRT_2,
            delta: DeltaSource::Normal { variance: 1e-4 },
            algorithm: Algorithm::BlhecWiener,
            wiener_samples: 2000,
            sgd_samples: 48_000,
            schedule: ScheduleConfig::default(),
            blhec: BlhecConfig::default(),
            noise_coupling: Coupling::Independent,
            n_fft: 1 << 14,
            window: WindowKind::Rectangular,
            seed: 0,
        }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn architecture(&self) -> AdcArchitecture {
        AdcArchitecture::mdac_pipeline(self.architecture.stages, self.architecture.flash_bits)
    }

    /// Samples consumed by `algorithm`.
    pub fn sample_budget(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::BlhecSgd => self.sgd_samples,
            _ => self.wiener_samples,
        }
    }

    /// Hex SHA-256 of the canonical TOML form, truncated to 16 digits.
    pub fn digest(&self) -> Result<String, HarnessError> {
        let hash = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(hash[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let a = &self.architecture;
        if a.stages == 0 || !(1..=8).contains(&a.flash_bits) {
            return Err(config_err("architecture needs at least one stage and 1-8 flash bits"));
        }
        if self.calibrated_stages == 0 || self.calibrated_stages > a.stages {
            return Err(config_err(format!(
                "calibrated_stages must be in 1..={}, got {}",
                a.stages, self.calibrated_stages
            )));
        }
        if let Some(&s) = self.ideal_stages.iter().find(|&&s| s >= a.stages) {
            return Err(config_err(format!("ideal stage {s} does not exist")));
        }
        let m = &self.mismatch;
        if !(m.gain_lsb >= 0.0 && m.dac_lsb >= 0.0) {
            return Err(config_err("mismatch bounds must be non-negative"));
        }
        if self.tones.is_empty() {
            return Err(config_err("at least one tone is required"));
        }
        for t in &self.tones {
            if !(t.freq > 0.0 && t.freq < 0.5) || !(t.amplitude > 0.0) || !t.phase.is_finite() {
                return Err(config_err(format!("invalid tone {t:?}")));
            }
        }
        if self.tones.iter().map(|t| t.amplitude).sum::<f64>() > 1.0 + 1e-12 {
            return Err(config_err("tone amplitudes exceed full scale"));
        }
        if self.snr_db.is_nan() || self.eval_snr_db.is_nan() {
            return Err(config_err("SNR must be a number or inf"));
        }
        if !(self.alpha_digital > 0.0 && self.alpha_digital < 1.0) {
            return Err(config_err("alpha_digital must be in (0, 1)"));
        }
        match self.delta {
            DeltaSource::Fixed { value } if !value.is_finite() => {
                return Err(config_err("fixed delta must be finite"));
            }
            DeltaSource::Normal { variance } if !(variance >= 0.0 && variance.is_finite()) => {
                return Err(config_err("delta variance must be finite and non-negative"));
            }
            _ => {}
        }
        if self.n_fft < 16 || !self.n_fft.is_power_of_two() {
            return Err(config_err("n_fft must be a power of two >= 16"));
        }
        let s = &self.schedule;
        if !(s.mu_nl_initial >= 0.0 && s.mu_nl_final >= 0.0 && s.alpha_ratio >= 0.0) || s.halve_every == 0 {
            return Err(config_err("invalid SGD schedule"));
        }
        if self.blhec.max_iterations == 0 || !(self.blhec.tolerance >= 0.0) {
            return Err(config_err("invalid BL-HEC options"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(config_err("seed must fit in a signed 64-bit integer"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn defaults_match_library_defaults() {
        let c = ExperimentConfig::default();
        assert_eq!(c.mismatch.bounds(), MismatchBounds::default());
        assert_eq!(StepSchedule::from(c.schedule), StepSchedule::default());
        assert_eq!(BlhecOptions::from(c.blhec), BlhecOptions::default());
        assert_eq!(c.architecture().resolution_bits(), 13);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("populaton = 3").is_err());
        assert!(ExperimentConfig::from_toml("calibrated_stages = 6").is_err());
        assert!(ExperimentConfig::from_toml("n_fft = 1000").is_err());
        assert!(ExperimentConfig::from_toml("algorithm = \"lms\"").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_eq!(a.digest().unwrap(), a.clone().digest().unwrap());
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
