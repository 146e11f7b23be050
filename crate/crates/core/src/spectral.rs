//! Averaged periodograms, SFDR, SNDR and parameter error norms.
//!
//! Bin powers are one-sided and normalized by the window's power gain, so a
//! coherent sinusoid of amplitude `A` under a rectangular window shows up as a
//! single bin of power `A^2 / 2`, and the bins of any sequence sum to
//! `mean(w^2 x^2) / mean(w^2)`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("FFT length {0} is not a power of two >= 4")]
    FftLength(usize),
    #[error("{samples} samples are fewer than the FFT length {n_fft}")]
    TooShort { samples: usize, n_fft: usize },
    #[error("window is all zero")]
    ZeroWindow,
    #[error("window has {found} coefficients, FFT length is {expected}")]
    WindowLength { expected: usize, found: usize },
    #[error("no signal bins declared")]
    NoSignalBins,
    #[error("signal bin {bin} outside the spectrum of {bins} bins")]
    BinOutOfRange { bin: usize, bins: usize },
    #[error("signal bins ({signal:e}) carry less power than the strongest spur ({spur:e} at bin {spur_bin})")]
    Misdeclared { signal: f64, spur: f64, spur_bin: usize },
    #[error("no bins left outside the signal and DC regions")]
    NoSpurBins,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Analysis window.
#[derive(Debug, Clone, PartialEq)]
pub enum Window {
    Rectangular,
    /// Periodic 4-term Blackman-Harris, about -92 dB sidelobes.
    BlackmanHarris4,
    /// User coefficients (length must equal the FFT length) and main-lobe half width in bins.
    Custom { coefficients: Vec<f64>, lobe_bins: usize },
}

impl Window {
    pub fn coefficients(&self, n: usize) -> Result<Vec<f64>, SpectralError> {
        let w = match self {
            Window::Rectangular => vec![1.0; n],
            Window::BlackmanHarris4 => {
                let a = [0.35875, 0.48829, 0.14128, 0.01168];
                (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        a[0] - a[1] * t.cos() + a[2] * (2.0 * t).cos() - a[3] * (3.0 * t).cos()
                    })
                    .collect()
            }
            Window::Custom { coefficients, .. } => {
                if coefficients.len() != n {
                    return Err(SpectralError::WindowLength {
                        expected: n,
                        found: coefficients.len(),
                    });
                }
                coefficients.clone()
            }
        };
        if w.iter().all(|&v| v == 0.0) {
            return Err(SpectralError::ZeroWindow);
        }
        Ok(w)
    }

    /// Bins on each side of a tone that belong to its main lobe.
    pub fn lobe_bins(&self) -> usize {
        match self {
            Window::Rectangular => 1,
            Window::BlackmanHarris4 => 4,
            Window::Custom { lobe_bins, .. } => *lobe_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    /// One-sided bin powers, `n_fft / 2 + 1` entries.
    pub power: Vec<f64>,
    pub n_fft: usize,
    pub segments: usize,
    pub lobe_bins: usize,
    /// `mean(w)`.
    pub coherent_gain: f64,
    /// `mean(w^2)`, the normalization applied to every bin.
    pub power_gain: f64,
}

impl SpectrumEstimate {
    /// Bin spacing in rad/sample.
    pub fn bin_width(&self) -> f64 {
        2.0 * PI / self.n_fft as f64
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// Windowed periodogram averaged over the `len / n_fft` non-overlapping segments.
pub fn spectrum(samples: &[f64], window: &Window, n_fft: usize) -> Result<SpectrumEstimate, SpectralError> {
    if n_fft < 4 || !n_fft.is_power_of_two() {
        return Err(SpectralError::FftLength(n_fft));
    }
    if samples.len() < n_fft {
        return Err(SpectralError::TooShort {
            samples: samples.len(),
            n_fft,
        });
    }
    let w = window.coefficients(n_fft)?;
    let coherent_gain = w.iter().sum::<f64>() / n_fft as f64;
    let power_gain = w.iter().map(|v| v * v).sum::<f64>() / n_fft as f64;
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let segments = samples.len() / n_fft;
    let half = n_fft / 2;
    let mut power = vec![0.0; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for seg in samples.chunks_exact(n_fft).take(segments) {
        for ((b, &x), &wk) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex::new(x * wk, 0.0);
        }
        fft.process(&mut buf);
        for (k, p) in power.iter_mut().enumerate() {
            let one_sided = if k == 0 || k == half { 1.0 } else { 2.0 };
            *p += one_sided * buf[k].norm_sqr();
        }
    }
    let scale = 1.0 / ((n_fft * n_fft) as f64 * power_gain * segments as f64);
    power.iter_mut().for_each(|p| *p *= scale);
    Ok(SpectrumEstimate {
        power,
        n_fft,
        segments,
        lobe_bins: window.lobe_bins(),
        coherent_gain,
        power_gain,
    })
}

/// Nearest odd bin to `freq_ratio * n_fft`, so that the tone is coherent and
/// its harmonics do not fall on each other.
pub fn coherent_bin(freq_ratio: f64, n_fft: usize) -> usize {
    let exact = freq_ratio * n_fft as f64;
    let odd = 2.0 * ((exact - 1.0) / 2.0).round() + 1.0;
    (odd.max(1.0) as usize).min(n_fft / 2 - 1)
}

/// Angular frequency of `bin`, in rad/sample.
pub fn bin_omega(bin: usize, n_fft: usize) -> f64 {
    2.0 * PI * bin as f64 / n_fft as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub sfdr_db: f64,
    pub sndr_db: f64,
    pub signal_bins: Vec<usize>,
    pub spur_bin: usize,
    /// Strongest spur relative to the strongest signal bin.
    pub spur_dbc: f64,
}

fn excluded_mask(spec: &SpectrumEstimate, signal_bins: &[usize]) -> Result<Vec<bool>, SpectralError> {
    if signal_bins.is_empty() {
        return Err(SpectralError::NoSignalBins);
    }
    let n = spec.power.len();
    let lobe = spec.lobe_bins;
    let mut mask = vec![false; n];
    for k in 0..=lobe.min(n - 1) {
        mask[k] = true;
    }
    for &s in signal_bins {
        if s >= n {
            return Err(SpectralError::BinOutOfRange { bin: s, bins: n });
        }
        for k in s.saturating_sub(lobe)..=(s + lobe).min(n - 1) {
            mask[k] = true;
        }
    }
    Ok(mask)
}

fn strongest_spur(spec: &SpectrumEstimate, mask: &[bool]) -> Result<(usize, f64), SpectralError> {
    spec.power
        .iter()
        .enumerate()
        .filter(|(k, _)| !mask[*k])
        .fold(None, |best: Option<(usize, f64)>, (k, &p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((k, p)),
        })
        .ok_or(SpectralError::NoSpurBins)
}

/// Full metric set for declared signal bins.
pub fn analyze(spec: &SpectrumEstimate, signal_bins: &[usize]) -> Result<MetricReport, SpectralError> {
    let mask = excluded_mask(spec, signal_bins)?;
    let (spur_bin, spur) = strongest_spur(spec, &mask)?;
    let signal = signal_bins.iter().map(|&s| spec.power[s]).fold(0.0, f64::max);
    if signal < spur {
        return Err(SpectralError::Misdeclared {
            signal,
            spur,
            spur_bin,
        });
    }
    let lobe = spec.lobe_bins;
    let n = spec.power.len();
    let mut in_signal = vec![false; n];
    for &s in signal_bins {
        for k in s.saturating_sub(lobe)..=(s + lobe).min(n - 1) {
            in_signal[k] = true;
        }
    }
    let signal_power: f64 = (0..n).filter(|&k| in_signal[k]).map(|k| spec.power[k]).sum();
    let rest: f64 = (0..n).filter(|&k| !mask[k]).map(|k| spec.power[k]).sum();
    let sfdr_db = 10.0 * (signal / spur).log10();
    Ok(MetricReport {
        sfdr_db,
        sndr_db: 10.0 * (signal_power / rest).log10(),
        signal_bins: signal_bins.to_vec(),
        spur_bin,
        spur_dbc: -sfdr_db,
    })
}

/// Strongest signal bin over strongest unwanted bin, in dB.
pub fn sfdr(spec: &SpectrumEstimate, signal_bins: &[usize]) -> Result<f64, SpectralError> {
    analyze(spec, signal_bins).map(|r| r.sfdr_db)
}

/// Signal power over everything else except DC, in dB.
pub fn sndr(spec: &SpectrumEstimate, signal_bins: &[usize]) -> Result<f64, SpectralError> {
    analyze(spec, signal_bins).map(|r| r.sndr_db)
}

/// Euclidean distance between two parameter vectors.
pub fn error_norm(theta: &[f64], reference: &[f64]) -> Result<f64, SpectralError> {
    if theta.len() != reference.len() {
        return Err(SpectralError::DimensionMismatch(theta.len(), reference.len()));
    }
    Ok(theta
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(bin: usize, n: usize, amp: f64, phase: f64) -> Vec<f64> {
        (0..n)
            .map(|k| amp * (bin_omega(bin, n) * k as f64 + phase).sin())
            .collect()
    }

    #[test]
    fn coherent_tone_single_bin() {
        let n = 1024;
        let x = tone(101, n, 0.8, 0.3);
        let s = spectrum(&x, &Window::Rectangular, n).unwrap();
        assert_eq!(s.power.len(), n / 2 + 1);
        assert!((s.power[101] - 0.32).abs() < 1e-12);
        let rest: f64 = s.power.iter().enumerate().filter(|(k, _)| *k != 101).map(|(_, p)| p).sum();
        assert!(rest < 1e-24);
    }

    #[test]
    fn parseval() {
        let n = 256;
        let x: Vec<f64> = (0..3 * n).map(|k| ((k * 7919) % 113) as f64 / 113.0 - 0.4).collect();
        for window in [Window::Rectangular, Window::BlackmanHarris4] {
            let s = spectrum(&x, &window, n).unwrap();
            let w = window.coefficients(n).unwrap();
            let pg = w.iter().map(|v| v * v).sum::<f64>() / n as f64;
            let direct = x[..3 * n]
                .chunks(n)
                .map(|seg| seg.iter().zip(&w).map(|(a, b)| (a * b).powi(2)).sum::<f64>() / n as f64)
                .sum::<f64>()
                / 3.0
                / pg;
            assert!((s.total_power() - direct).abs() <= 1e-9 * direct);
        }
    }

    #[test]
    fn sixty_db_spur() {
        let n = 4096;
        let a = tone(301, n, 1.0, 0.0);
        let b = tone(903, n, 1e-3, 0.0);
        let x: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p + q).collect();
        let s = spectrum(&x, &Window::Rectangular, n).unwrap();
        let r = analyze(&s, &[301]).unwrap();
        assert!((r.sfdr_db - 60.0).abs() < 1e-9);
        assert_eq!(r.spur_bin, 903);
    }

    #[test]
    fn rejections() {
        let x = vec![0.1; 64];
        assert!(matches!(spectrum(&x, &Window::Rectangular, 48), Err(SpectralError::FftLength(48))));
        assert!(spectrum(&x, &Window::Rectangular, 128).is_err());
        let zero = Window::Custom {
            coefficients: vec![0.0; 64],
            lobe_bins: 1,
        };
        assert_eq!(spectrum(&x, &zero, 64), Err(SpectralError::ZeroWindow));
        let s = spectrum(&tone(5, 64, 1.0, 0.0), &Window::Rectangular, 64).unwrap();
        assert!(matches!(analyze(&s, &[20]), Err(SpectralError::Misdeclared { .. })));
        assert!(matches!(analyze(&s, &[]), Err(SpectralError::NoSignalBins)));
    }

    #[test]
    fn odd_bin_snapping() {
        assert_eq!(coherent_bin(10.77 / 100.0, 1 << 14), 1765);
        assert_eq!(coherent_bin(0.24, 64), 15);
        assert_eq!(coherent_bin(1e-6, 64), 1);
    }

    #[test]
    fn error_norm_cases() {
        assert_eq!(error_norm(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(error_norm(&[1.0, 5.0], &[1.0, 2.0]).unwrap(), 3.0);
        assert!(error_norm(&[1.0], &[1.0, 2.0]).is_err());
    }
}
