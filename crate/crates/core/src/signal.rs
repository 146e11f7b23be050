//! Test signals and matched (unscaled, scaled) conversion pairs.

use crate::adc::{AdcInstance, ConversionRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("tone frequency {0} rad/sample is outside (0, pi)")]
    Frequency(f64),
    #[error("tone amplitude {0} is outside [0, 1]")]
    Amplitude(f64),
    #[error("invalid analog path: {0}")]
    Path(String),
}

/// One sinusoid `amplitude * sin(omega k + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneSpec {
    /// Normalized angular frequency in rad/sample.
    pub omega: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl ToneSpec {
    pub fn new(omega: f64, amplitude: f64, phase: f64) -> Result<Self, SignalError> {
        let tone = Self {
            omega,
            amplitude,
            phase,
        };
        tone.validate()?;
        Ok(tone)
    }

    /// Tone at `freq / sample_rate` of the sampling rate.
    pub fn from_frequency(freq: f64, sample_rate: f64, amplitude: f64) -> Result<Self, SignalError> {
        Self::new(2.0 * PI * freq / sample_rate, amplitude, 0.0)
    }

    fn validate(&self) -> Result<(), SignalError> {
        if !(self.omega > 0.0 && self.omega < PI) {
            return Err(SignalError::Frequency(self.omega));
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(SignalError::Amplitude(self.amplitude));
        }
        Ok(())
    }

    pub fn power(&self) -> f64 {
        0.5 * self.amplitude * self.amplitude
    }
}

/// Sum of sinusoids, `n` samples starting at `k = 0`.
pub fn gen_tones(tones: &[ToneSpec], n: usize) -> Result<Vec<f64>, SignalError> {
    for t in tones {
        t.validate()?;
    }
    Ok((0..n)
        .map(|k| {
            tones
                .iter()
                .map(|t| t.amplitude * (t.omega * k as f64 + t.phase).sin())
                .sum()
        })
        .collect())
}

/// Intermodulation levels of an impure two-tone generator, in dBc relative to
/// the mean tone amplitude. `f64::NEG_INFINITY` disables a product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpurityLevels {
    /// `f1 + f2`, `f2 - f1`.
    pub second_dbc: f64,
    /// `2f1 - f2`, `2f2 - f1`.
    pub third_dbc: f64,
    /// `3f1 - 2f2`, `3f2 - 2f1`.
    pub fifth_dbc: f64,
}

impl ImpurityLevels {
    pub const CLEAN: Self = Self {
        second_dbc: f64::NEG_INFINITY,
        third_dbc: f64::NEG_INFINITY,
        fifth_dbc: f64::NEG_INFINITY,
    };
}

/// Two-tone signal with added intermodulation products, optionally
/// re-quantized to `bits` (mid-tread, clipped to `[-1, 1]`).
pub fn gen_impure_two_tone(
    tones: [ToneSpec; 2],
    levels: ImpurityLevels,
    bits: Option<u32>,
    n: usize,
) -> Result<Vec<f64>, SignalError> {
    let mut x = gen_tones(&tones, n)?;
    let [a, b] = tones;
    let carrier = 0.5 * (a.amplitude + b.amplitude);
    let products: [(f64, f64, f64); 6] = [
        (levels.second_dbc, 1.0, 1.0),
        (levels.second_dbc, -1.0, 1.0),
        (levels.third_dbc, 2.0, -1.0),
        (levels.third_dbc, -1.0, 2.0),
        (levels.fifth_dbc, 3.0, -2.0),
        (levels.fifth_dbc, -2.0, 3.0),
    ];
    for (dbc, ma, mb) in products {
        if dbc == f64::NEG_INFINITY {
            continue;
        }
        let amplitude = carrier * 10f64.powf(dbc / 20.0);
        let omega = ma * a.omega + mb * b.omega;
        let phase = ma * a.phase + mb * b.phase;
        // Fold into the first Nyquist zone; products landing on DC or pi are dropped.
        let folded = omega.rem_euclid(2.0 * PI);
        let (omega, sign) = if folded > PI {
            (2.0 * PI - folded, -1.0)
        } else {
            (folded, 1.0)
        };
        if omega <= 0.0 || omega >= PI {
            continue;
        }
        for (k, v) in x.iter_mut().enumerate() {
            *v += amplitude * (omega * k as f64 + sign * phase).sin() * sign;
        }
    }
    if let Some(bits) = bits {
        let step = 2.0 / f64::from(1u32 << bits);
        for v in x.iter_mut() {
            *v = ((*v / step).round() * step).clamp(-1.0, 1.0);
        }
    }
    Ok(x)
}

/// How the input noise of the two conversions of a pair is related.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseCoupling {
    /// Each conversion gets its own noise draw.
    #[default]
    Independent,
    /// The noisy sample is held and scaled, so the second conversion sees
    /// `alpha_a (x_d + n_x)`.
    Held,
}

/// Analog path of the calibration signal: scaling and additive input noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Scale `alpha_a` applied in the analog domain.
    pub alpha_analog: f64,
    /// Scale `alpha_d` assumed by the calibrator.
    pub alpha_digital: f64,
    /// Input SNR in dB; `f64::INFINITY` for a noiseless path.
    pub snr_db: f64,
    /// Power of the deterministic signal, used to set the noise variance.
    pub signal_power: f64,
    pub coupling: NoiseCoupling,
}

impl PathConfig {
    pub fn new(alpha_digital: f64, delta: f64, snr_db: f64, signal_power: f64) -> Result<Self, SignalError> {
        let path = Self {
            alpha_analog: alpha_digital + delta,
            alpha_digital,
            snr_db,
            signal_power,
            coupling: NoiseCoupling::Independent,
        };
        if !(path.alpha_analog > 0.0 && path.alpha_analog < 1.0) {
            return Err(SignalError::Path(format!(
                "analog scale {} outside (0, 1)",
                path.alpha_analog
            )));
        }
        if snr_db.is_nan() || !(signal_power >= 0.0) {
            return Err(SignalError::Path("SNR and signal power must be numbers".into()));
        }
        Ok(path)
    }

    pub fn with_coupling(mut self, coupling: NoiseCoupling) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn delta(&self) -> f64 {
        self.alpha_analog - self.alpha_digital
    }

    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            self.signal_power / 10f64.powf(self.snr_db / 10.0)
        }
    }
}

/// Both conversions of one held sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub unscaled: ConversionRecord,
    pub scaled: ConversionRecord,
    pub index: usize,
}

/// Lazily converts `x_d[k] + n_x[k]` and `alpha_a x_d[k] + n_a[k]` for every `k`.
pub struct PairStream<'a> {
    adc: &'a AdcInstance,
    signal: &'a [f64],
    alpha_analog: f64,
    coupling: NoiseCoupling,
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    next: usize,
}

impl Iterator for PairStream<'_> {
    type Item = SamplePair;

    fn next(&mut self) -> Option<SamplePair> {
        let x = *self.signal.get(self.next)?;
        let (n_x, n_a) = match &self.noise {
            Some(d) => (d.sample(&mut self.rng), d.sample(&mut self.rng)),
            None => (0.0, 0.0),
        };
        let scaled_input = match self.coupling {
            NoiseCoupling::Independent => self.alpha_analog * x + n_a,
            NoiseCoupling::Held => self.alpha_analog * (x + n_x),
        };
        let pair = SamplePair {
            unscaled: self.adc.convert(x + n_x),
            scaled: self.adc.convert(scaled_input),
            index: self.next,
        };
        self.next += 1;
        Some(pair)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.signal.len() - self.next;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for PairStream<'_> {}

/// Pair stream over `signal`, noise coupled as `path.coupling` says.
/// Two normal draws are consumed per pair in either mode.
pub fn make_pairs<'a>(adc: &'a AdcInstance, signal: &'a [f64], path: &PathConfig, seed: u64) -> PairStream<'a> {
    let variance = path.noise_variance();
    let noise = (variance > 0.0).then(|| Normal::new(0.0, variance.sqrt()).expect("finite std dev"));
    PairStream {
        adc,
        signal,
        alpha_analog: path.alpha_analog,
        coupling: path.coupling,
        noise,
        rng: ChaCha8Rng::seed_from_u64(seed),
        next: 0,
    }
}

/// Draws a scale mismatch `delta ~ N(0, variance)`.
pub fn draw_scale_mismatch(variance: f64, seed: u64) -> f64 {
    if variance == 0.0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Normal::new(0.0, variance.sqrt())
        .expect("non-negative variance")
        .sample(&mut rng)
}

/// Adds white Gaussian noise at `snr_db` relative to `signal_power`.
pub fn add_noise(signal: &[f64], snr_db: f64, signal_power: f64, seed: u64) -> Vec<f64> {
    if snr_db == f64::INFINITY {
        return signal.to_vec();
    }
    let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite std dev");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    signal.iter().map(|x| x + normal.sample(&mut rng)).collect()
}
