//! Population runs and parameter sweeps.

use crate::config::{Algorithm, DeltaSource, ExperimentConfig};
use crate::HarnessError;
use hecal_core::adc::{build_adc, AdcArchitecture, AdcInstance, ConversionRecord};
use hecal_core::calibration::{
    accumulate_statistics, blhec_wiener, hec_wiener, run_sgd_observed, SgdOptions, StepSchedule, Termination,
};
use hecal_core::correction::{apply_correction, selection_vector, CorrectionLayout, ParameterVector};
use hecal_core::signal::{add_noise, draw_scale_mismatch, gen_tones, make_pairs, PathConfig, ToneSpec};
use hecal_core::spectral::{analyze, bin_omega, coherent_bin, error_norm, spectrum, MetricReport, Window};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::time::Instant;

/// Independent random streams of one converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Mismatch,
    Delta,
    PairNoise,
    EvalNoise,
}

impl Stream {
    fn tag(self) -> &'static [u8] {
        match self {
            Stream::Mismatch => b"mismatch",
            Stream::Delta => b"delta",
            Stream::PairNoise => b"pair-noise",
            Stream::EvalNoise => b"eval-noise",
        }
    }
}

/// Seed of `stream` for converter `adc_id`: the first 8 bytes of
/// SHA-256(master, adc_id, tag), little endian.
pub fn child_seed(master: u64, adc_id: usize, stream: Stream) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((adc_id as u64).to_le_bytes());
    h.update(stream.tag());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// One calibrated converter.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub adc_id: usize,
    /// Mismatch seed of this converter.
    pub seed: u64,
    pub config_digest: String,
    pub algorithm: Algorithm,
    pub pre_sndr_db: f64,
    pub pre_sfdr_db: f64,
    pub post_sndr_db: f64,
    pub post_sfdr_db: f64,
    /// `None` for plain HEC, which does not estimate the scale.
    pub theta_alpha: Option<f64>,
    pub delta: f64,
    pub samples: usize,
    pub iterations: Option<usize>,
    pub status: String,
    /// Distance to the BL-HEC Wiener solution; convergence sweeps only.
    pub error_norm: Option<f64>,
    /// Seconds; kept out of the result CSV.
    pub wall_clock: f64,
}

/// Everything shared by the converters of one run.
struct Setup {
    config: ExperimentConfig,
    arch: AdcArchitecture,
    layout: CorrectionLayout,
    digest: String,
    calibration: Vec<f64>,
    evaluation: Vec<f64>,
    bins: Vec<usize>,
    signal_power: f64,
    window: Window,
}

impl Setup {
    fn new(config: &ExperimentConfig, max_samples: usize) -> Result<Self, HarnessError> {
        config.validate()?;
        let arch = config.architecture();
        let layout = CorrectionLayout::for_architecture(&arch, config.calibrated_stages)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let n = config.n_fft;
        let mut bins = Vec::new();
        let mut tones = Vec::new();
        for t in &config.tones {
            let bin = coherent_bin(t.freq, n);
            if bins.contains(&bin) {
                return Err(HarnessError::Config(format!("two tones share bin {bin}")));
            }
            bins.push(bin);
            tones.push(
                ToneSpec::new(bin_omega(bin, n), t.amplitude, t.phase)
                    .map_err(|e| HarnessError::Config(e.to_string()))?,
            );
        }
        let gen = |len| gen_tones(&tones, len).map_err(|e| HarnessError::Config(e.to_string()));
        Ok(Self {
            config: config.clone(),
            arch,
            layout,
            digest: config.digest()?,
            calibration: gen(max_samples)?,
            evaluation: gen(n)?,
            bins,
            signal_power: tones.iter().map(ToneSpec::power).sum(),
            window: config.window.window(),
        })
    }

    fn adc(&self, adc_id: usize) -> Result<(AdcInstance, u64), HarnessError> {
        let seed = child_seed(self.config.seed, adc_id, Stream::Mismatch);
        let adc = build_adc(&self.arch, self.config.mismatch.bounds(), seed)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.config.ideal_stages.is_empty() {
            Ok((adc, seed))
        } else {
            Ok((adc.with_ideal_stages(&self.config.ideal_stages), seed))
        }
    }

    fn delta(&self, adc_id: usize) -> f64 {
        match self.config.delta {
            DeltaSource::Fixed { value } => value,
            DeltaSource::Normal { variance } => {
                draw_scale_mismatch(variance, child_seed(self.config.seed, adc_id, Stream::Delta))
            }
        }
    }

    fn path(&self, adc_id: usize) -> Result<PathConfig, HarnessError> {
        let c = &self.config;
        PathConfig::new(c.alpha_digital, self.delta(adc_id), c.snr_db, self.signal_power)
            .map(|p| p.with_coupling(c.noise_coupling.into()))
            .map_err(|e| HarnessError::numerical(adc_id, e))
    }
}

/// Conversions of the evaluation signal and their selection vectors.
struct Evaluation {
    records: Vec<ConversionRecord>,
    h: Vec<hecal_core::SelectionVector>,
}

impl Evaluation {
    fn new(setup: &Setup, adc: &AdcInstance, adc_id: usize) -> Result<Self, HarnessError> {
        let c = &setup.config;
        let input = add_noise(
            &setup.evaluation,
            c.eval_snr_db,
            setup.signal_power,
            child_seed(c.seed, adc_id, Stream::EvalNoise),
        );
        let records: Vec<_> = input.iter().map(|&x| adc.convert(x)).collect();
        let h = records
            .iter()
            .map(|r| selection_vector(r, &setup.layout))
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::numerical(adc_id, e))?;
        Ok(Self { records, h })
    }

    fn output(&self, theta: Option<&ParameterVector>) -> Result<Vec<f64>, hecal_core::correction::CorrectionError> {
        self.records
            .iter()
            .zip(&self.h)
            .map(|(r, h)| match theta {
                Some(t) => apply_correction(r.output, h, t),
                None => Ok(r.output),
            })
            .collect()
    }

    fn metrics(&self, setup: &Setup, adc_id: usize, theta: Option<&ParameterVector>) -> Result<MetricReport, HarnessError> {
        let y = self.output(theta).map_err(|e| HarnessError::numerical(adc_id, e))?;
        let s = spectrum(&y, &setup.window, setup.config.n_fft).map_err(|e| HarnessError::numerical(adc_id, e))?;
        analyze(&s, &setup.bins).map_err(|e| HarnessError::numerical(adc_id, e))
    }
}

struct Fit {
    theta: ParameterVector,
    theta_alpha: Option<f64>,
    iterations: Option<usize>,
    status: String,
}

fn termination_status(t: Termination) -> String {
    match t {
        Termination::Converged => "converged".into(),
        Termination::MaxIterations => "max-iterations".into(),
        Termination::SingularStep { iteration, .. } => format!("singular-step@{iteration}"),
    }
}

fn wiener_fit(
    setup: &Setup,
    adc: &AdcInstance,
    adc_id: usize,
    algorithm: Algorithm,
    samples: usize,
) -> Result<Fit, HarnessError> {
    let c = &setup.config;
    let path = setup.path(adc_id)?;
    let pairs = make_pairs(
        adc,
        &setup.calibration[..samples],
        &path,
        child_seed(c.seed, adc_id, Stream::PairNoise),
    );
    let stats =
        accumulate_statistics(pairs, &setup.layout, c.alpha_digital).map_err(|e| HarnessError::numerical(adc_id, e))?;
    match algorithm {
        Algorithm::HecWiener => Ok(Fit {
            theta: hec_wiener(&stats).map_err(|e| HarnessError::numerical(adc_id, e))?,
            theta_alpha: None,
            iterations: None,
            status: "ok".into(),
        }),
        _ => {
            let sol = blhec_wiener(&stats, &c.blhec.into()).map_err(|e| HarnessError::numerical(adc_id, e))?;
            Ok(Fit {
                theta: sol.theta,
                theta_alpha: Some(sol.theta_alpha),
                iterations: Some(sol.iterations),
                status: termination_status(sol.termination),
            })
        }
    }
}

/// SGD snapshots after each of `checkpoints` updates (sorted, deduplicated).
fn sgd_fits(
    setup: &Setup,
    adc: &AdcInstance,
    adc_id: usize,
    checkpoints: &[usize],
) -> Result<Vec<Fit>, HarnessError> {
    let c = &setup.config;
    let last = *checkpoints.last().expect("nonempty checkpoints");
    let path = setup.path(adc_id)?;
    let pairs = make_pairs(
        adc,
        &setup.calibration[..last],
        &path,
        child_seed(c.seed, adc_id, Stream::PairNoise),
    );
    let every = checkpoints.iter().fold(0, |g, &k| gcd(g, k)).max(1) as u64;
    let options = SgdOptions {
        log_every: every,
        ..SgdOptions::default()
    };
    let schedule = StepSchedule::from(c.schedule);
    let mut fits = Vec::new();
    run_sgd_observed(pairs, &setup.layout, c.alpha_digital, &schedule, &options, |state| {
        if checkpoints.binary_search(&(state.step as usize)).is_ok() && fits.len() < checkpoints.len() {
            fits.push(Fit {
                theta: state.theta.clone(),
                theta_alpha: Some(state.theta_alpha),
                iterations: None,
                status: "ok".into(),
            });
        }
    })
    .map_err(|e| HarnessError::numerical(adc_id, e))?;
    Ok(fits)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Setup {
    /// Rows of converter `adc_id`, one per entry of `samples`.
    fn run_adc(
        &self,
        adc_id: usize,
        algorithm: Algorithm,
        samples: &[usize],
        with_error_norm: bool,
    ) -> Result<Vec<ResultRow>, HarnessError> {
        let start = Instant::now();
        let (adc, seed) = self.adc(adc_id)?;
        let eval = Evaluation::new(self, &adc, adc_id)?;
        let pre = eval.metrics(self, adc_id, None)?;
        let fits = match algorithm {
            Algorithm::BlhecSgd => sgd_fits(self, &adc, adc_id, samples)?,
            _ => samples
                .iter()
                .map(|&n| wiener_fit(self, &adc, adc_id, algorithm, n))
                .collect::<Result<_, _>>()?,
        };
        let reference = if with_error_norm {
            let n = self.config.wiener_samples;
            Some(wiener_fit(self, &adc, adc_id, Algorithm::BlhecWiener, n)?.theta)
        } else {
            None
        };
        let delta = self.delta(adc_id);
        let mut rows = Vec::with_capacity(fits.len());
        for (fit, &n) in fits.into_iter().zip(samples) {
            let post = eval.metrics(self, adc_id, Some(&fit.theta))?;
            let error_norm = match &reference {
                Some(r) => Some(error_norm(&fit.theta.0, &r.0).map_err(|e| HarnessError::numerical(adc_id, e))?),
                None => None,
            };
            rows.push(ResultRow {
                adc_id,
                seed,
                config_digest: self.digest.clone(),
                algorithm,
                pre_sndr_db: pre.sndr_db,
                pre_sfdr_db: pre.sfdr_db,
                post_sndr_db: post.sndr_db,
                post_sfdr_db: post.sfdr_db,
                theta_alpha: fit.theta_alpha,
                delta,
                samples: n,
                iterations: fit.iterations,
                status: fit.status,
                error_norm,
                wall_clock: 0.0,
            });
        }
        let elapsed = start.elapsed().as_secs_f64() / rows.len().max(1) as f64;
        for r in &mut rows {
            r.wall_clock = elapsed;
        }
        Ok(rows)
    }
}

fn run_population(
    config: &ExperimentConfig,
    ids: &[usize],
    algorithm: Algorithm,
    samples: &[usize],
    with_error_norm: bool,
) -> Result<Vec<ResultRow>, HarnessError> {
    let mut max_samples = samples.iter().copied().max().unwrap_or(0);
    if with_error_norm {
        max_samples = max_samples.max(config.wiener_samples);
    }
    let setup = Setup::new(config, max_samples)?;
    let mut per_adc: Vec<Vec<ResultRow>> = ids
        .par_iter()
        .map(|&id| setup.run_adc(id, algorithm, samples, with_error_norm))
        .collect::<Result<_, _>>()?;
    per_adc.sort_by_key(|rows| rows.first().map(|r| r.adc_id));
    Ok(per_adc.into_iter().flatten().collect())
}

/// Calibrates converters `0..config.population` with `config.algorithm`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let ids: Vec<usize> = (0..config.population).collect();
    run_adcs(config, &ids)
}

/// [`run_experiment`] restricted to the converters in `ids`.
pub fn run_adcs(config: &ExperimentConfig, ids: &[usize]) -> Result<Vec<ResultRow>, HarnessError> {
    let samples = [config.sample_budget(config.algorithm)];
    run_population(config, ids, config.algorithm, &samples, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Digital scale `alpha_d`.
    Alpha,
    /// Calibration input SNR in dB.
    Snr,
    /// Fixed scale mismatch.
    Delta,
    /// Calibration sample count.
    Convergence,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Alpha => "alpha",
            SweepKind::Snr => "snr",
            SweepKind::Delta => "delta",
            SweepKind::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Alpha, Self::Snr, Self::Delta, Self::Convergence]
            .into_iter()
            .find(|k| k.name() == s)
    }
}

/// Rows of one algorithm at one grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub kind: SweepKind,
    pub value: f64,
    pub algorithm: Algorithm,
    pub rows: Vec<ResultRow>,
}

/// Runs every algorithm at every grid value. The population and its random
/// draws are the same at every point.
pub fn run_sweep(
    kind: SweepKind,
    config: &ExperimentConfig,
    grid: &[f64],
    algorithms: &[Algorithm],
) -> Result<Vec<SweepPoint>, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Config("sweep grid is empty".into()));
    }
    if algorithms.is_empty() {
        return Err(HarnessError::Config("no algorithm selected".into()));
    }
    let ids: Vec<usize> = (0..config.population).collect();
    let mut points = Vec::new();
    for &algorithm in algorithms {
        if kind == SweepKind::Convergence {
            points.extend(convergence(config, &ids, grid, algorithm)?);
            continue;
        }
        for &value in grid {
            let mut c = config.clone();
            match kind {
                SweepKind::Alpha => c.alpha_digital = value,
                SweepKind::Snr => c.snr_db = value,
                SweepKind::Delta => c.delta = DeltaSource::Fixed { value },
                SweepKind::Convergence => unreachable!(),
            }
            let samples = [c.sample_budget(algorithm)];
            points.push(SweepPoint {
                kind,
                value,
                algorithm,
                rows: run_population(&c, &ids, algorithm, &samples, false)?,
            });
        }
    }
    Ok(points)
}

fn convergence(
    config: &ExperimentConfig,
    ids: &[usize],
    grid: &[f64],
    algorithm: Algorithm,
) -> Result<Vec<SweepPoint>, HarnessError> {
    let mut samples = Vec::with_capacity(grid.len());
    for &v in grid {
        if !(v >= 1.0 && v.fract() == 0.0 && v <= 1e9) {
            return Err(HarnessError::Config(format!("sample count {v} is not a positive integer")));
        }
        samples.push(v as usize);
    }
    let mut sorted = samples.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let rows = run_population(config, ids, algorithm, &sorted, true)?;
    let mut points: Vec<SweepPoint> = sorted
        .iter()
        .map(|&n| SweepPoint {
            kind: SweepKind::Convergence,
            value: n as f64,
            algorithm,
            rows: Vec::new(),
        })
        .collect();
    for row in rows {
        let k = sorted.binary_search(&row.samples).expect("checkpoint row");
        points[k].rows.push(row);
    }
    Ok(points)
}
