//! Behavioral model of a pipelined ADC with per-stage gain and DAC mismatches.
//!
//! Each pipeline stage digitizes its input with a coarse sub-ADC, subtracts the
//! (mismatched) DAC level and amplifies the difference with a (mismatched) gain.
//! The digital output recombines the selected code values with the *ideal*
//! stage gains, so every mismatch shows up as a code-dependent error in the
//! output. All voltages are normalized to `v_ref = 1`, full scale is `[-1, 1]`.
//!
//! Stage code indices are 0-based throughout the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Absolute tolerance used by [`AdcInstance::reference_output`].
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdcError {
    #[error("invalid stage {stage}: {reason}")]
    InvalidStage { stage: usize, reason: String },
    #[error("mismatch set does not match the pipeline: {0}")]
    MismatchShape(String),
    #[error("mismatch bound of {bound_lsb} LSB inverts the code ordering of stage {stage}")]
    BoundTooLarge { stage: usize, bound_lsb: f64 },
    #[error("closed-form output {reference} disagrees with pipeline output {pipeline} (|diff| = {diff:e})")]
    Inconsistent {
        reference: f64,
        pipeline: f64,
        diff: f64,
    },
}

/// One pipeline stage: sub-ADC thresholds, digital code values and ideal gain.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    codes: Vec<f64>,
    thresholds: Vec<f64>,
    gain: f64,
}

impl StageSpec {
    pub fn new(codes: Vec<f64>, thresholds: Vec<f64>, gain: f64) -> Result<Self, AdcError> {
        let invalid = |reason: &str| AdcError::InvalidStage {
            stage: 0,
            reason: reason.to_string(),
        };
        if codes.len() < 2 {
            return Err(invalid("a stage needs at least two levels"));
        }
        if thresholds.len() + 1 != codes.len() {
            return Err(invalid("expected exactly one threshold less than codes"));
        }
        if codes.iter().chain(&thresholds).any(|v| !v.is_finite()) || !gain.is_finite() {
            return Err(invalid("non-finite code, threshold or gain"));
        }
        if codes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("codes must be strictly increasing"));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("thresholds must be strictly increasing"));
        }
        if gain <= 0.0 {
            return Err(invalid("gain must be positive"));
        }
        Ok(Self {
            codes,
            thresholds,
            gain,
        })
    }

    /// Standard 2.5-bit MDAC: seven codes `k/4`, thresholds at the odd eighths, gain 4.
    pub fn mdac_2p5bit() -> Self {
        Self::uniform_mid_tread(7, 0.25, 4.0)
    }

    /// 1.5-bit stage with codes `{-1/2, 0, 1/2}`, thresholds `±1/4` and gain 2.
    pub fn mdac_1p5bit() -> Self {
        Self::uniform_mid_tread(3, 0.5, 2.0)
    }

    /// Odd number of uniformly spaced codes centered on zero, thresholds at midpoints.
    pub fn uniform_mid_tread(levels: usize, step: f64, gain: f64) -> Self {
        assert!(levels >= 2 && levels % 2 == 1, "mid-tread stage needs an odd level count");
        let half = (levels / 2) as f64;
        let codes = (0..levels).map(|k| (k as f64 - half) * step).collect::<Vec<_>>();
        let thresholds = codes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::new(codes, thresholds, gain).expect("uniform stage is valid")
    }

    /// `2^bits` uniform mid-rise levels covering `[-1, 1]`.
    pub fn flash(bits: u32) -> Self {
        assert!((1..16).contains(&bits));
        let levels = 1usize << bits;
        let step = 2.0 / levels as f64;
        let codes = (0..levels)
            .map(|k| -1.0 + (k as f64 + 0.5) * step)
            .collect::<Vec<_>>();
        let thresholds = codes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::new(codes, thresholds, 1.0).expect("flash stage is valid")
    }

    pub fn level_count(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[f64] {
        &self.codes
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Selects the code for `x`: the first code if `x <= v_1`, code `j` if
    /// `v_{j-1} < x <= v_j`, the last code above the top threshold.
    pub fn quantize(&self, x: f64) -> (usize, f64) {
        let index = self.thresholds.partition_point(|&v| v < x);
        (index, self.codes[index])
    }

    /// Largest `|x - code|` over inputs in `[-1, 1]`.
    pub fn max_digitization_error(&self) -> f64 {
        let p = self.codes.len();
        (0..p)
            .map(|j| {
                let lo = if j == 0 { -1.0 } else { self.thresholds[j - 1] };
                let hi = if j == p - 1 { 1.0 } else { self.thresholds[j] };
                let d = self.codes[j];
                (lo - d).abs().max((hi - d).abs())
            })
            .fold(0.0, f64::max)
    }

    fn min_code_spacing(&self) -> f64 {
        self.codes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// How the final flash treats residues beyond its outermost thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverRange {
    /// Keep quantizing on the flash's uniform grid past the nominal levels.
    Extend,
    /// Saturate at the outermost code.
    Clip,
}

/// Last stage of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum FinalStage {
    Flash { spec: StageSpec, overrange: OverRange },
    /// Passes the residue through unquantized (infinite-resolution back end).
    Unquantized,
}

impl FinalStage {
    pub fn quantize(&self, x: f64) -> f64 {
        match self {
            FinalStage::Unquantized => x,
            FinalStage::Flash { spec, overrange } => {
                let (_, code) = spec.quantize(x);
                if *overrange == OverRange::Clip {
                    return code;
                }
                let codes = spec.codes();
                let p = codes.len();
                let first = codes[0];
                let last = codes[p - 1];
                if x > spec.thresholds()[p - 2] {
                    let step = last - codes[p - 2];
                    let m = ((x - last) / step - 0.5).ceil().max(0.0);
                    last + m * step
                } else if x <= spec.thresholds()[0] {
                    let step = codes[1] - first;
                    let m = ((first - x) / step + 0.5).floor().max(0.0);
                    first - m * step
                } else {
                    code
                }
            }
        }
    }

    /// Spacing of the final quantizer levels (zero for an unquantized back end).
    pub fn step(&self) -> f64 {
        match self {
            FinalStage::Unquantized => 0.0,
            FinalStage::Flash { spec, .. } => spec.min_code_spacing(),
        }
    }
}

/// Stage layout of a converter, independent of any drawn mismatch.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcArchitecture {
    stages: Vec<StageSpec>,
    final_stage: FinalStage,
    resolution_bits: u32,
}

impl AdcArchitecture {
    pub fn new(
        stages: Vec<StageSpec>,
        final_stage: FinalStage,
        resolution_bits: u32,
    ) -> Result<Self, AdcError> {
        if stages.is_empty() {
            return Err(AdcError::InvalidStage {
                stage: 0,
                reason: "pipeline needs at least one stage before the flash".into(),
            });
        }
        Ok(Self {
            stages,
            final_stage,
            resolution_bits,
        })
    }

    /// 13-bit converter: five 2.5-bit stages with gain 4 and a 3-bit flash.
    pub fn default_13bit() -> Self {
        Self::mdac_pipeline(5, 3)
    }

    /// `n` 2.5-bit stages followed by a `flash_bits` flash with over-range extension.
    pub fn mdac_pipeline(n: usize, flash_bits: u32) -> Self {
        let stages = vec![StageSpec::mdac_2p5bit(); n];
        let final_stage = FinalStage::Flash {
            spec: StageSpec::flash(flash_bits),
            overrange: OverRange::Extend,
        };
        Self::new(stages, final_stage, 2 * n as u32 + flash_bits).expect("valid pipeline")
    }

    /// Small converter of `n` 1.5-bit stages (gain 2) and a nine-level mid-tread flash.
    pub fn toy(n: usize) -> Self {
        let stages = vec![StageSpec::mdac_1p5bit(); n];
        let final_stage = FinalStage::Flash {
            spec: StageSpec::uniform_mid_tread(9, 0.25, 1.0),
            overrange: OverRange::Extend,
        };
        Self::new(stages, final_stage, n as u32 + 3).expect("valid toy pipeline")
    }

    pub fn with_final_stage(mut self, final_stage: FinalStage) -> Self {
        self.final_stage = final_stage;
        self
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn final_stage(&self) -> &FinalStage {
        &self.final_stage
    }

    pub fn resolution_bits(&self) -> u32 {
        self.resolution_bits
    }

    /// Composite LSB, `2 v_ref / 2^bits`.
    pub fn lsb(&self) -> f64 {
        2.0 / f64::from(1u32 << self.resolution_bits)
    }

    /// Weight of the final quantizer in the digital output, `prod 1/G_j`.
    pub fn final_weight(&self) -> f64 {
        self.stages.iter().map(|s| 1.0 / s.gain).product()
    }
}

/// Drawn gain mismatches `zeta_i` and DAC errors `e_i^DA` for every pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchSet {
    pub gain: Vec<f64>,
    pub dac: Vec<Vec<f64>>,
}

impl MismatchSet {
    pub fn ideal(arch: &AdcArchitecture) -> Self {
        Self {
            gain: vec![0.0; arch.stages.len()],
            dac: arch.stages.iter().map(|s| vec![0.0; s.level_count()]).collect(),
        }
    }

    fn check(&self, arch: &AdcArchitecture) -> Result<(), AdcError> {
        let n = arch.stages.len();
        if self.gain.len() != n || self.dac.len() != n {
            return Err(AdcError::MismatchShape(format!(
                "{n} stages but {} gain and {} DAC entries",
                self.gain.len(),
                self.dac.len()
            )));
        }
        for (i, (stage, dac)) in arch.stages.iter().zip(&self.dac).enumerate() {
            if dac.len() != stage.level_count() {
                return Err(AdcError::MismatchShape(format!(
                    "stage {i} has {} codes but {} DAC errors",
                    stage.level_count(),
                    dac.len()
                )));
            }
            if self.gain[i] <= -1.0 || dac.iter().chain([&self.gain[i]]).any(|v| !v.is_finite()) {
                return Err(AdcError::MismatchShape(format!("stage {i} has an invalid mismatch")));
            }
        }
        Ok(())
    }
}

/// Uniform mismatch bounds, in LSB of the composite resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchBounds {
    /// Bound on the output contribution `|zeta_i| * max|e^q_i|` of the gain mismatch.
    pub gain_lsb: f64,
    /// Bound on each DAC level error.
    pub dac_lsb: f64,
    /// Resolution whose LSB (`2 / 2^bits`) is the unit of both bounds.
    /// `None` uses the architecture's own resolution.
    pub unit_bits: Option<u32>,
}

impl MismatchBounds {
    pub const NONE: Self = Self {
        gain_lsb: 0.0,
        dac_lsb: 0.0,
        unit_bits: None,
    };

    /// Bounds in LSBs of the converter being built.
    pub fn in_own_lsb(gain_lsb: f64, dac_lsb: f64) -> Self {
        Self {
            gain_lsb,
            dac_lsb,
            unit_bits: None,
        }
    }

    pub fn unit(&self, arch: &AdcArchitecture) -> f64 {
        match self.unit_bits {
            Some(bits) => 2.0 / 2f64.powi(bits as i32),
            None => arch.lsb(),
        }
    }
}

/// 25 and 15 LSB of a 12-bit full scale. Expressed in LSBs of the 13-bit
/// default converter these are 50 and 30.
impl Default for MismatchBounds {
    fn default() -> Self {
        Self {
            gain_lsb: 25.0,
            dac_lsb: 15.0,
            unit_bits: Some(12),
        }
    }
}

/// One converter with its mismatches drawn. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcInstance {
    arch: AdcArchitecture,
    mismatch: MismatchSet,
}

/// Output of one conversion plus the stage decisions that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConversionRecord {
    pub output: f64,
    pub stage_code_index: Vec<usize>,
    pub stage_code_value: Vec<f64>,
    pub flash_code: f64,
    /// Analog input that was converted. Simulation bookkeeping only.
    pub input: f64,
}

/// Draws a converter from uniform mismatch distributions.
///
/// `zeta_i` is uniform with `|zeta_i| <= gain_lsb * LSB / max|e^q_i|`, so that the
/// gain mismatch of stage `i` contributes at most `gain_lsb / prod_{j<i} G_j` LSB
/// to the output. Every DAC level error is uniform in `±dac_lsb` LSB.
pub fn build_adc(
    arch: &AdcArchitecture,
    bounds: MismatchBounds,
    seed: u64,
) -> Result<AdcInstance, AdcError> {
    let lsb = bounds.unit(arch);
    if !(bounds.gain_lsb >= 0.0 && bounds.dac_lsb >= 0.0) {
        return Err(AdcError::MismatchShape("bounds must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatch = MismatchSet::ideal(arch);
    for (i, stage) in arch.stages.iter().enumerate() {
        let dac_bound = bounds.dac_lsb * lsb;
        if dac_bound >= 0.5 * stage.min_code_spacing() {
            return Err(AdcError::BoundTooLarge {
                stage: i,
                bound_lsb: bounds.dac_lsb,
            });
        }
        let gain_bound = bounds.gain_lsb * lsb / stage.max_digitization_error();
        if gain_bound >= 1.0 {
            return Err(AdcError::BoundTooLarge {
                stage: i,
                bound_lsb: bounds.gain_lsb,
            });
        }
        mismatch.gain[i] = gain_bound * symmetric_unit(&mut rng);
        for e in mismatch.dac[i].iter_mut() {
            *e = dac_bound * symmetric_unit(&mut rng);
        }
    }
    Ok(AdcInstance { arch: arch.clone(), mismatch })
}

fn symmetric_unit(rng: &mut ChaCha8Rng) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}

impl AdcInstance {
    pub fn new(arch: AdcArchitecture, mismatch: MismatchSet) -> Result<Self, AdcError> {
        mismatch.check(&arch)?;
        Ok(Self { arch, mismatch })
    }

    pub fn ideal(arch: AdcArchitecture) -> Self {
        let mismatch = MismatchSet::ideal(&arch);
        Self { arch, mismatch }
    }

    pub fn architecture(&self) -> &AdcArchitecture {
        &self.arch
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.arch.stages
    }

    pub fn mismatches(&self) -> &MismatchSet {
        &self.mismatch
    }

    pub fn resolution_bits(&self) -> u32 {
        self.arch.resolution_bits
    }

    pub fn lsb(&self) -> f64 {
        self.arch.lsb()
    }

    /// Copy of this converter with the listed (0-based) stages made ideal.
    pub fn with_ideal_stages(&self, stages: &[usize]) -> Self {
        let mut out = self.clone();
        for &i in stages {
            if i < out.mismatch.gain.len() {
                out.mismatch.gain[i] = 0.0;
                out.mismatch.dac[i].iter_mut().for_each(|e| *e = 0.0);
            }
        }
        out
    }

    /// Runs one sample through the pipeline.
    pub fn convert(&self, x_in: f64) -> ConversionRecord {
        let n = self.arch.stages.len();
        let mut stage_code_index = Vec::with_capacity(n);
        let mut stage_code_value = Vec::with_capacity(n);
        let mut residue = x_in;
        let mut weight = 1.0;
        let mut output = 0.0;
        for (i, stage) in self.arch.stages.iter().enumerate() {
            let (j, code) = stage.quantize(residue);
            stage_code_index.push(j);
            stage_code_value.push(code);
            output += code * weight;
            let true_gain = stage.gain * (1.0 + self.mismatch.gain[i]);
            residue = true_gain * (residue - code - self.mismatch.dac[i][j]);
            weight /= stage.gain;
        }
        let flash_code = self.arch.final_stage.quantize(residue);
        output += flash_code * weight;
        ConversionRecord {
            output,
            stage_code_index,
            stage_code_value,
            flash_code,
            input: x_in,
        }
    }

    /// Overall gain `beta = prod (1 + zeta_i)` of the non-ideal converter.
    pub fn beta(&self) -> f64 {
        self.mismatch.gain.iter().map(|z| 1.0 + z).product()
    }

    /// Per-stage, per-code non-ideal parameters `phi_0`, so that
    /// `y = beta x - sum_i phi_0[i][j_i] + q_x`.
    pub fn nonideal_parameters(&self) -> Vec<Vec<f64>> {
        let n = self.arch.stages.len();
        let mut out = Vec::with_capacity(n);
        let mut weight = 1.0;
        for (l, stage) in self.arch.stages.iter().enumerate() {
            let tail_gain: f64 = self.mismatch.gain[l..].iter().map(|z| 1.0 + z).product();
            let params = stage
                .codes
                .iter()
                .zip(&self.mismatch.dac[l])
                .map(|(d, e)| weight * ((tail_gain - 1.0) * d + tail_gain * e))
                .collect();
            out.push(params);
            weight /= stage.gain;
        }
        out
    }

    /// Evaluates the closed-form decomposition `beta x - w^T phi_0 + q_x` for a
    /// record produced by [`convert`](Self::convert) and checks it against the
    /// pipeline output.
    pub fn reference_output(&self, x_in: f64, record: &ConversionRecord) -> Result<f64, AdcError> {
        let stages = &self.arch.stages;
        if record.stage_code_index.len() != stages.len() {
            return Err(AdcError::MismatchShape(
                "record does not belong to this converter".into(),
            ));
        }
        let phi = self.nonideal_parameters();
        let nonideal: f64 = record
            .stage_code_index
            .iter()
            .zip(&phi)
            .map(|(&j, p)| p[j])
            .sum();

        // Last residue, unrolled: prod(G~) x - sum_l (d_l + e_l) prod_{j>=l} G~_j.
        let true_gains: Vec<f64> = stages
            .iter()
            .zip(&self.mismatch.gain)
            .map(|(s, z)| s.gain * (1.0 + z))
            .collect();
        let mut last_residue = x_in * true_gains.iter().product::<f64>();
        for (l, (&j, stage)) in record.stage_code_index.iter().zip(stages).enumerate() {
            let tail: f64 = true_gains[l..].iter().product();
            last_residue -= (stage.codes[j] + self.mismatch.dac[l][j]) * tail;
        }
        let q_x = (record.flash_code - last_residue) * self.arch.final_weight();

        let reference = self.beta() * x_in - nonideal + q_x;
        let diff = (reference - record.output).abs();
        if diff > CLOSED_FORM_TOLERANCE {
            return Err(AdcError::Inconsistent {
                reference,
                pipeline: record.output,
                diff,
            });
        }
        Ok(reference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_stage() -> StageSpec {
        StageSpec::new(vec![-0.5, 0.0, 0.5], vec![-0.25, 0.25], 2.0).unwrap()
    }

    #[test]
    fn quantize_three_case_rule() {
        let s = toy_stage();
        assert_eq!(s.quantize(0.3), (2, 0.5));
        assert_eq!(s.quantize(-0.25), (0, -0.5));
        assert_eq!(s.quantize(0.0), (1, 0.0));
        assert_eq!(s.quantize(0.25), (1, 0.0));
        assert_eq!(s.quantize(-7.0), (0, -0.5));
        assert_eq!(s.quantize(7.0), (2, 0.5));
    }

    #[test]
    fn stage_validation() {
        assert!(StageSpec::new(vec![0.0, 1.0], vec![0.6, 0.5], 2.0).is_err());
        assert!(StageSpec::new(vec![0.0, 1.0, 2.0], vec![0.5, 0.5], 2.0).is_err());
        assert!(StageSpec::new(vec![0.0], vec![], 2.0).is_err());
        assert!(StageSpec::new(vec![0.0, 1.0], vec![0.5, 0.7], 2.0).is_err());
        assert!(StageSpec::new(vec![1.0, 0.0], vec![0.5], 2.0).is_err());
    }

    #[test]
    fn mdac_layout() {
        let s = StageSpec::mdac_2p5bit();
        assert_eq!(s.level_count(), 7);
        assert_eq!(s.codes(), &[-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75]);
        assert_eq!(s.thresholds(), &[-0.625, -0.375, -0.125, 0.125, 0.375, 0.625]);
        assert_eq!(s.gain(), 4.0);
        assert_eq!(s.max_digitization_error(), 0.25);
        let f = StageSpec::flash(3);
        assert_eq!(f.codes()[0], -0.875);
        assert_eq!(f.thresholds()[3], 0.0);
    }

    #[test]
    fn default_config_is_13_bits() {
        let arch = AdcArchitecture::default_13bit();
        assert_eq!(arch.stages().len(), 5);
        assert!(arch.stages().iter().all(|s| s.gain() == 4.0 && s.level_count() == 7));
        assert_eq!(arch.resolution_bits(), 13);
        assert_eq!(arch.lsb(), 2.0 / 8192.0);
        // Final flash step scaled to the input equals one LSB.
        assert_eq!(arch.final_stage().step() * arch.final_weight(), arch.lsb());
    }

    #[test]
    fn extended_flash_continues_grid() {
        let f = FinalStage::Flash {
            spec: StageSpec::flash(3),
            overrange: OverRange::Extend,
        };
        assert_eq!(f.quantize(0.9), 0.875);
        assert_eq!(f.quantize(1.0), 0.875);
        assert_eq!(f.quantize(1.01), 1.125);
        assert_eq!(f.quantize(2.3), 2.375);
        assert_eq!(f.quantize(-0.99), -0.875);
        assert_eq!(f.quantize(-1.0), -1.125);
        assert_eq!(f.quantize(-1.2), -1.125);
        let clip = FinalStage::Flash {
            spec: StageSpec::flash(3),
            overrange: OverRange::Clip,
        };
        assert_eq!(clip.quantize(2.3), 0.875);
    }

    #[test]
    fn zero_bounds_give_ideal_instance() {
        let arch = AdcArchitecture::default_13bit();
        let adc = build_adc(&arch, MismatchBounds::NONE, 7).unwrap();
        assert!(adc.mismatches().gain.iter().all(|&z| z == 0.0));
        assert!(adc.mismatches().dac.iter().flatten().all(|&e| e == 0.0));
        assert_eq!(adc.beta(), 1.0);
    }

    #[test]
    fn same_seed_same_draw() {
        let arch = AdcArchitecture::default_13bit();
        let a = build_adc(&arch, MismatchBounds::default(), 99).unwrap();
        let b = build_adc(&arch, MismatchBounds::default(), 99).unwrap();
        let c = build_adc(&arch, MismatchBounds::default(), 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn drawn_mismatch_respects_bounds() {
        let arch = AdcArchitecture::default_13bit();
        let lsb = MismatchBounds::default().unit(&arch);
        assert_eq!(lsb, 2.0 * arch.lsb());
        for seed in 0..20 {
            let adc = build_adc(&arch, MismatchBounds::default(), seed).unwrap();
            for (i, stage) in adc.stages().iter().enumerate() {
                let z = adc.mismatches().gain[i];
                assert!(z.abs() * stage.max_digitization_error() <= 25.0 * lsb + 1e-18);
                assert!(adc.mismatches().dac[i].iter().all(|e| e.abs() <= 15.0 * lsb));
            }
        }
    }

    #[test]
    fn oversized_bounds_rejected() {
        let arch = AdcArchitecture::toy(2);
        // toy LSB is 1/16, half the code spacing is 0.25 = 4 LSB.
        let err = build_adc(
            &arch,
            MismatchBounds::in_own_lsb(0.0, 4.0),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, AdcError::BoundTooLarge { stage: 0, .. }));
    }

    #[test]
    fn toy_zero_input_is_exact() {
        let adc = AdcInstance::ideal(AdcArchitecture::toy(2));
        let rec = adc.convert(0.0);
        assert_eq!(rec.output, 0.0);
        assert_eq!(rec.stage_code_index, vec![1, 1]);
    }

    #[test]
    fn ideal_transfer_within_one_step() {
        let adc = AdcInstance::ideal(AdcArchitecture::default_13bit());
        let bound = adc.lsb();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=20_000 {
            let x = -1.0 + 2.0 * k as f64 / 20_000.0;
            let y = adc.convert(x).output;
            assert!((y - x).abs() <= bound, "x={x} y={y}");
            assert!(y >= prev);
            prev = y;
        }
    }

    #[test]
    fn single_dac_error_weighting_law() {
        // Unquantized back end: the output carries no final quantization error,
        // so the DAC error appears exactly as eps * prod_{j<i} 1/G_j * (1 + zeta_i).
        let arch = AdcArchitecture::toy(3).with_final_stage(FinalStage::Unquantized);
        let eps = 0.01;
        for stage in 0..3 {
            let mut mm = MismatchSet::ideal(&arch);
            mm.gain = vec![0.02, -0.01, 0.015];
            let reference = AdcInstance::new(arch.clone(), mm.clone()).unwrap();
            mm.dac[stage][1] = eps;
            let adc = AdcInstance::new(arch.clone(), mm.clone()).unwrap();
            let weight = 0.5f64.powi(stage as i32) * (1.0 + mm.gain[stage]);
            let mut hits = 0;
            for k in 0..=400 {
                let x = -1.0 + 2.0 * k as f64 / 400.0;
                let rec = adc.convert(x);
                let base = reference.convert(x);
                if rec.stage_code_index == base.stage_code_index && rec.stage_code_index[stage] == 1 {
                    hits += 1;
                    // Later stages see the residue scaled by their own true gains, which
                    // the ideal recombination weights undo up to prod(1 + zeta_j), j > i.
                    let tail: f64 = mm.gain[stage + 1..].iter().map(|z| 1.0 + z).product();
                    let shift = base.output - rec.output;
                    assert!((shift - eps * weight * tail).abs() < 1e-14, "stage {stage} x {x}");
                }
            }
            assert!(hits > 0);
        }
    }

    #[test]
    fn beta_two_stage_formula() {
        let arch = AdcArchitecture::toy(2);
        let mut mm = MismatchSet::ideal(&arch);
        mm.gain = vec![0.03, -0.02];
        let adc = AdcInstance::new(arch, mm).unwrap();
        let (z1, z2) = (0.03, -0.02);
        assert!((adc.beta() - (1.0 + z1 + (1.0 + z1) * z2)).abs() < 1e-15);
    }

    #[test]
    fn ideal_reference_is_input_minus_flash_error() {
        let adc = AdcInstance::ideal(AdcArchitecture::default_13bit());
        for &x in &[-0.93, -0.1, 0.0, 0.377, 0.999] {
            let rec = adc.convert(x);
            let r = adc.reference_output(x, &rec).unwrap();
            assert!((r - rec.output).abs() < 1e-15);
            assert!(adc.nonideal_parameters().iter().flatten().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn reference_detects_foreign_record() {
        let arch = AdcArchitecture::toy(2);
        let adc = build_adc(&arch, MismatchBounds::in_own_lsb(0.3, 0.3), 3).unwrap();
        let mut rec = adc.convert(0.4);
        rec.output += 1e-6;
        assert!(matches!(
            adc.reference_output(0.4, &rec),
            Err(AdcError::Inconsistent { .. })
        ));
    }
}
