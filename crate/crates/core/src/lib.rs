//! Behavioral pipelined-ADC simulation and homogeneity-enforced calibration.
//!
//! A converter is calibrated by feeding a signal `x` and its analog-scaled copy
//! `alpha_a x` through it and choosing additive per-code corrections so that the
//! corrected outputs scale by the same factor. The bi-linear variant also
//! estimates the scale itself, which makes it insensitive to an imprecise
//! analog scaler.
//!
//! Modules, bottom up:
//!
//! * [`adc`]: stage quantizers, mismatch draws, conversion records.
//! * [`correction`]: reduced selection vectors and the additive correction.
//! * [`signal`]: test tones and matched sample pairs.
//! * [`calibration`]: Wiener, alternating Wiener and SGD estimators.
//! * [`spectral`]: periodograms, SFDR, SNDR.

pub mod adc;
pub mod calibration;
pub mod correction;
pub mod signal;
pub mod spectral;

pub use adc::{build_adc, AdcArchitecture, AdcInstance, ConversionRecord, MismatchBounds, StageSpec};
pub use calibration::{
    accumulate_statistics, blhec_wiener, hec_wiener, run_sgd, sgd_step, BlhecOptions, CalibrationState,
    PairStatistics, StepSchedule,
};
pub use correction::{apply_correction, selection_vector, CorrectionLayout, ParameterVector, SelectionVector};
pub use signal::{gen_tones, make_pairs, NoiseCoupling, PathConfig, SamplePair, ToneSpec};
pub use spectral::{analyze, spectrum, MetricReport, SpectrumEstimate, Window};
