//! Parameter estimation from sample pairs.
//!
//! Three estimators share one error model. For a pair of conversions of `x` and
//! of `alpha_a x`, the corrected outputs should satisfy the homogeneity
//! relation `y^c(alpha_a x) = alpha_d y^c(x)`:
//!
//! * [`hec_wiener`] solves the normal equations for `theta` with `alpha_d` fixed,
//! * [`blhec_wiener`] alternates between the scale correction `theta_alpha` and
//!   `theta`, each step being a closed-form minimizer of the empirical MSE,
//! * [`sgd_step`] / [`run_sgd`] perform the same minimization sample by sample.

use crate::correction::{selection_vector, CorrectionError, CorrectionLayout, ParameterVector, SelectionVector};
use crate::signal::SamplePair;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Largest accepted condition number of a system matrix.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("{samples} samples cannot determine {dim} parameters")]
    TooFewSamples { samples: usize, dim: usize },
    #[error("regressor covariance is rank deficient (condition {condition:e}); never-selected positions: {uncovered:?}")]
    RankDeficient { condition: f64, uncovered: Vec<usize> },
    #[error("system matrix is singular (condition {condition:e})")]
    Singular { condition: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("parameters diverged after {step} updates (max |theta| = {max_abs})")]
    Diverged { step: u64, max_abs: f64 },
    #[error(transparent)]
    Correction(#[from] CorrectionError),
}

/// Outputs and regressors of one sample pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRegressors {
    pub y_x: f64,
    pub y_a: f64,
    pub h_x: SelectionVector,
    pub h_a: SelectionVector,
}

impl PairRegressors {
    pub fn from_pair(pair: &SamplePair, layout: &CorrectionLayout) -> Result<Self, CorrectionError> {
        Ok(Self {
            y_x: pair.unscaled.output,
            y_a: pair.scaled.output,
            h_x: selection_vector(&pair.unscaled, layout)?,
            h_a: selection_vector(&pair.scaled, layout)?,
        })
    }

    /// Homogeneity error `y_a + h_a^T theta - s (y_x + h_x^T theta)` at overall scale `s`.
    pub fn error(&self, theta: &[f64], scale: f64) -> f64 {
        let ya = self.y_a + self.h_a.dot_unchecked(theta);
        let yx = self.y_x + self.h_x.dot_unchecked(theta);
        ya - scale * yx
    }
}

/// Sample moments of a block of pairs, plus the pairs themselves.
///
/// All scale-dependent statistics are exact quadratic functions of the scale,
/// so they are assembled from the unscaled moments below rather than by
/// another pass over the samples.
#[derive(Debug, Clone)]
pub struct PairStatistics {
    alpha_d: f64,
    dim: usize,
    samples: Vec<PairRegressors>,
    m_aa: DMatrix<f64>,
    m_ax: DMatrix<f64>,
    m_xx: DMatrix<f64>,
    v_aa: DVector<f64>,
    v_ax: DVector<f64>,
    v_xa: DVector<f64>,
    v_xx: DVector<f64>,
    s_ax: f64,
    s_xx: f64,
    condition: f64,
}

/// Consumes `pairs` and forms the sample statistics.
pub fn accumulate_statistics<I>(
    pairs: I,
    layout: &CorrectionLayout,
    alpha_d: f64,
) -> Result<PairStatistics, CalibrationError>
where
    I: IntoIterator<Item = SamplePair>,
{
    let samples = pairs
        .into_iter()
        .map(|p| PairRegressors::from_pair(&p, layout))
        .collect::<Result<Vec<_>, _>>()?;
    PairStatistics::from_regressors(samples, layout.dim(), alpha_d)
}

fn add_outer(m: &mut DMatrix<f64>, a: &SelectionVector, b: &SelectionVector) {
    for &(i, va) in a.entries() {
        for &(j, vb) in b.entries() {
            m[(i, j)] += va * vb;
        }
    }
}

fn add_scaled(v: &mut DVector<f64>, a: &SelectionVector, s: f64) {
    for &(i, va) in a.entries() {
        v[i] += va * s;
    }
}

impl PairStatistics {
    pub fn from_regressors(
        samples: Vec<PairRegressors>,
        dim: usize,
        alpha_d: f64,
    ) -> Result<Self, CalibrationError> {
        let n = samples.len();
        if n < dim || n == 0 {
            return Err(CalibrationError::TooFewSamples { samples: n, dim });
        }
        let mut m_aa = DMatrix::zeros(dim, dim);
        let mut m_ax = DMatrix::zeros(dim, dim);
        let mut m_xx = DMatrix::zeros(dim, dim);
        let mut v_aa = DVector::zeros(dim);
        let mut v_ax = DVector::zeros(dim);
        let mut v_xa = DVector::zeros(dim);
        let mut v_xx = DVector::zeros(dim);
        let (mut s_ax, mut s_xx) = (0.0, 0.0);
        for r in &samples {
            if r.h_x.dim() != dim || r.h_a.dim() != dim {
                return Err(CorrectionError::DimensionMismatch {
                    expected: dim,
                    found: r.h_x.dim().max(r.h_a.dim()),
                }
                .into());
            }
            if !(r.y_x.is_finite() && r.y_a.is_finite()) {
                return Err(CalibrationError::NonFinite("sample outputs"));
            }
            add_outer(&mut m_aa, &r.h_a, &r.h_a);
            add_outer(&mut m_ax, &r.h_a, &r.h_x);
            add_outer(&mut m_xx, &r.h_x, &r.h_x);
            add_scaled(&mut v_aa, &r.h_a, r.y_a);
            add_scaled(&mut v_ax, &r.h_a, r.y_x);
            add_scaled(&mut v_xa, &r.h_x, r.y_a);
            add_scaled(&mut v_xx, &r.h_x, r.y_x);
            s_ax += r.y_a * r.y_x;
            s_xx += r.y_x * r.y_x;
        }
        let inv = 1.0 / n as f64;
        let mut stats = Self {
            alpha_d,
            dim,
            samples,
            m_aa: m_aa * inv,
            m_ax: m_ax * inv,
            m_xx: m_xx * inv,
            v_aa: v_aa * inv,
            v_ax: v_ax * inv,
            v_xa: v_xa * inv,
            v_xx: v_xx * inv,
            s_ax: s_ax * inv,
            s_xx: s_xx * inv,
            condition: 0.0,
        };
        let r_hh = stats.r_hh_at(0.0);
        stats.condition = condition_number(&r_hh);
        if !(stats.condition <= CONDITION_LIMIT) {
            let uncovered = (0..dim).filter(|&i| r_hh[(i, i)] == 0.0).collect();
            return Err(CalibrationError::RankDeficient {
                condition: stats.condition,
                uncovered,
            });
        }
        Ok(stats)
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha_d(&self) -> f64 {
        self.alpha_d
    }

    pub fn samples(&self) -> &[PairRegressors] {
        &self.samples
    }

    /// Condition number of `R_hh` at `theta_alpha = 0`.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `E[dh dh^T]` with `dh = h_a - (alpha_d + theta_alpha) h_x`.
    pub fn r_hh_at(&self, theta_alpha: f64) -> DMatrix<f64> {
        let s = self.alpha_d + theta_alpha;
        let cross = &self.m_ax + self.m_ax.transpose();
        &self.m_aa - cross * s + &self.m_xx * (s * s)
    }

    /// `E[dh dy]` with `dy = y_a - (alpha_d + theta_alpha) y_x`.
    pub fn r_hy_at(&self, theta_alpha: f64) -> DVector<f64> {
        let s = self.alpha_d + theta_alpha;
        &self.v_aa - (&self.v_ax + &self.v_xa) * s + &self.v_xx * (s * s)
    }

    pub fn r_hh(&self) -> DMatrix<f64> {
        self.r_hh_at(0.0)
    }

    pub fn r_hy(&self) -> DVector<f64> {
        self.r_hy_at(0.0)
    }

    /// `E[(y_x + h_x^T theta)^2]`.
    pub fn r_yy(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        self.s_xx + 2.0 * t.dot(&self.v_xx) + t.dot(&(&self.m_xx * &t))
    }

    /// `E[(y_a + h_a^T theta)(y_x + h_x^T theta)]`.
    pub fn r_yya(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        self.s_ax + t.dot(&self.v_xa) + t.dot(&self.v_ax) + t.dot(&(&self.m_ax * &t))
    }

    /// Empirical mean squared homogeneity error and its standard error.
    pub fn mse(&self, theta_alpha: f64, theta: &[f64]) -> MseEstimate {
        let s = self.alpha_d + theta_alpha;
        let n = self.samples.len() as f64;
        let sq: Vec<f64> = self
            .samples
            .iter()
            .map(|r| r.error(theta, s).powi(2))
            .collect();
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        MseEstimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// `theta` minimizing the MSE for a fixed `theta_alpha`, and that minimum.
    pub fn profile(&self, theta_alpha: f64) -> Result<(f64, ParameterVector), CalibrationError> {
        let theta = wiener_at(self, theta_alpha)?;
        Ok((self.mse(theta_alpha, &theta.0).mean, theta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min = eig.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `m x = b` for symmetric positive-definite `m`.
pub fn solve_spd(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, CalibrationError> {
    let condition = condition_number(m);
    if !(condition <= CONDITION_LIMIT) {
        return Err(CalibrationError::Singular { condition });
    }
    let chol = Cholesky::new(m.clone()).ok_or(CalibrationError::Singular { condition })?;
    let x = chol.solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CalibrationError::NonFinite("linear solve"));
    }
    Ok(x)
}

fn wiener_at(stats: &PairStatistics, theta_alpha: f64) -> Result<ParameterVector, CalibrationError> {
    let x = solve_spd(&stats.r_hh_at(theta_alpha), &stats.r_hy_at(theta_alpha))?;
    Ok(ParameterVector(x.iter().map(|v| -v).collect()))
}

/// Wiener solution `-R_hh^{-1} r_hy` with the digital scale held at `alpha_d`.
pub fn hec_wiener(stats: &PairStatistics) -> Result<ParameterVector, CalibrationError> {
    wiener_at(stats, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlhecOptions {
    pub max_iterations: usize,
    /// Stop once `|theta_alpha[m] - theta_alpha[m-1]|` falls below this.
    pub tolerance: f64,
}

impl Default for BlhecOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// `R_hh(theta_alpha)` was singular at this iteration; the previous `theta` was kept.
    SingularStep { iteration: usize, condition: f64 },
}

/// MSE after one half-step of the alternation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsePoint {
    pub iteration: usize,
    /// `true` after the scale update, `false` after the parameter update.
    pub after_scale_update: bool,
    pub theta_alpha: f64,
    pub mse: MseEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlhecSolution {
    pub theta: ParameterVector,
    pub theta_alpha: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Starts with the MSE of the zero initialization.
    pub trajectory: Vec<MsePoint>,
}

/// Alternating minimization over `(theta_alpha, theta)`, starting from zero.
pub fn blhec_wiener(stats: &PairStatistics, options: &BlhecOptions) -> Result<BlhecSolution, CalibrationError> {
    let mut theta = ParameterVector::zeros(stats.dim());
    let mut theta_alpha = 0.0;
    let mut trajectory = vec![MsePoint {
        iteration: 0,
        after_scale_update: false,
        theta_alpha,
        mse: stats.mse(theta_alpha, &theta.0),
    }];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for m in 1..=options.max_iterations {
        iterations = m;
        let previous = theta_alpha;
        theta_alpha = stats.r_yya(&theta.0) / stats.r_yy(&theta.0) - stats.alpha_d();
        if !theta_alpha.is_finite() {
            return Err(CalibrationError::NonFinite("scale update"));
        }
        trajectory.push(MsePoint {
            iteration: m,
            after_scale_update: true,
            theta_alpha,
            mse: stats.mse(theta_alpha, &theta.0),
        });
        match wiener_at(stats, theta_alpha) {
            Ok(t) => theta = t,
            Err(CalibrationError::Singular { condition }) => {
                termination = Termination::SingularStep {
                    iteration: m,
                    condition,
                };
                break;
            }
            Err(e) => return Err(e),
        }
        trajectory.push(MsePoint {
            iteration: m,
            after_scale_update: false,
            theta_alpha,
            mse: stats.mse(theta_alpha, &theta.0),
        });
        if (theta_alpha - previous).abs() < options.tolerance {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(BlhecSolution {
        theta,
        theta_alpha,
        iterations,
        termination,
        trajectory,
    })
}

/// Running state of the stochastic-gradient calibrator.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    pub theta: ParameterVector,
    pub theta_alpha: f64,
    pub mu_nl: f64,
    pub mu_alpha: f64,
    /// Number of updates performed.
    pub step: u64,
}

impl CalibrationState {
    pub fn new(dim: usize, mu_nl: f64, mu_alpha: f64) -> Self {
        Self {
            theta: ParameterVector::zeros(dim),
            theta_alpha: 0.0,
            mu_nl,
            mu_alpha,
            step: 0,
        }
    }
}

/// Errors around one update: a priori values use the state before the
/// respective sub-step, a posteriori values the state after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Corrected unscaled output `y_x + h_x^T theta` before the update.
    pub corrected_unscaled: f64,
    pub e_alpha: f64,
    pub e_alpha_post: f64,
    pub e_nl: f64,
    pub e_nl_post: f64,
    /// `||h_a - (alpha_d + theta_alpha) h_x||^2` with the updated scale.
    pub delta_h_norm_sq: f64,
}

/// Multiplication counts of one instrumented update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MulCount {
    pub scale_path: usize,
    pub parameter_path: usize,
}

/// One update: the scale first, using the previous `theta`, then `theta`
/// using the fresh scale.
pub fn sgd_update(state: &mut CalibrationState, reg: &PairRegressors, alpha_d: f64) -> StepReport {
    let theta = &mut state.theta.0;
    let yx = reg.y_x + reg.h_x.dot_unchecked(theta);
    let ya = reg.y_a + reg.h_a.dot_unchecked(theta);

    let e_alpha = ya - (alpha_d + state.theta_alpha) * yx;
    state.theta_alpha += state.mu_alpha * (yx * e_alpha);
    let scale = alpha_d + state.theta_alpha;
    let e_nl = ya - scale * yx;

    let dh = reg.h_a.scaled_difference(&reg.h_x, scale);
    let g = state.mu_nl * e_nl;
    for &(pos, v) in dh.entries() {
        theta[pos] -= g * v;
    }
    state.step += 1;

    StepReport {
        corrected_unscaled: yx,
        e_alpha,
        e_alpha_post: e_nl,
        e_nl,
        e_nl_post: reg.error(theta, scale),
        delta_h_norm_sq: dh.norm_sq(),
    }
}

/// Same update as [`sgd_update`] on a dense datapath that visits every
/// parameter, counting multiplications.
///
/// Counted: the scale-dependent products `s ytilde_x` for both errors and the
/// gradient `ytilde_x e_alpha` (scale path), and one product per parameter
/// entry (parameter path). Not counted: step-size scalings, which are powers
/// of two, and forming the regressors and corrected outputs, which any
/// correcting datapath computes anyway.
pub fn sgd_update_counted(
    state: &mut CalibrationState,
    reg: &PairRegressors,
    alpha_d: f64,
    count: &mut MulCount,
) -> StepReport {
    let theta = &mut state.theta.0;
    let yx = reg.y_x + reg.h_x.dot_unchecked(theta);
    let ya = reg.y_a + reg.h_a.dot_unchecked(theta);
    let mul = |a: f64, b: f64, n: &mut usize| {
        *n += 1;
        a * b
    };

    let e_alpha = ya - mul(alpha_d + state.theta_alpha, yx, &mut count.scale_path);
    state.theta_alpha += state.mu_alpha * mul(yx, e_alpha, &mut count.scale_path);
    let scale = alpha_d + state.theta_alpha;
    let e_nl = ya - mul(scale, yx, &mut count.scale_path);

    let dh = reg.h_a.scaled_difference(&reg.h_x, scale).to_dense();
    let g = state.mu_nl * e_nl;
    for (t, &v) in theta.iter_mut().zip(&dh) {
        *t -= mul(g, v, &mut count.parameter_path);
    }
    state.step += 1;

    StepReport {
        corrected_unscaled: yx,
        e_alpha,
        e_alpha_post: e_nl,
        e_nl,
        e_nl_post: reg.error(theta, scale),
        delta_h_norm_sq: dh.iter().map(|v| v * v).sum(),
    }
}

/// Forms the regressors of `pair` and applies [`sgd_update`].
pub fn sgd_step(
    state: &mut CalibrationState,
    pair: &SamplePair,
    layout: &CorrectionLayout,
    alpha_d: f64,
) -> Result<StepReport, CorrectionError> {
    let reg = PairRegressors::from_pair(pair, layout)?;
    Ok(sgd_update(state, &reg, alpha_d))
}

/// Piecewise-constant step sizes: `mu_nl` halves every `halve_every` updates
/// until it reaches `mu_nl_final`; `mu_alpha = alpha_ratio * mu_nl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub mu_nl_initial: f64,
    pub mu_nl_final: f64,
    pub halve_every: u64,
    pub alpha_ratio: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            mu_nl_initial: 2f64.powi(-1),
            mu_nl_final: 2f64.powi(-6),
            halve_every: 24_000,
            alpha_ratio: 0.5,
        }
    }
}

impl StepSchedule {
    pub fn constant(mu_nl: f64, mu_alpha: f64) -> Self {
        Self {
            mu_nl_initial: mu_nl,
            mu_nl_final: mu_nl,
            halve_every: u64::MAX,
            alpha_ratio: if mu_nl == 0.0 { 0.0 } else { mu_alpha / mu_nl },
        }
    }

    /// Step size for the update following `step` completed updates.
    pub fn mu_nl(&self, step: u64) -> f64 {
        let halvings = (step / self.halve_every.max(1)).min(1023) as i32;
        (self.mu_nl_initial * 0.5f64.powi(halvings)).max(self.mu_nl_final)
    }

    pub fn mu_alpha(&self, step: u64) -> f64 {
        self.alpha_ratio * self.mu_nl(step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdOptions {
    /// Abort once any `|theta_j|` exceeds this.
    pub divergence_guard: f64,
    /// Log the distance to this parameter vector.
    pub reference: Option<ParameterVector>,
    /// Logging and observer period in updates; 0 logs only start and end.
    pub log_every: u64,
}

impl Default for SgdOptions {
    fn default() -> Self {
        Self {
            divergence_guard: 1.0,
            reference: None,
            log_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdLogPoint {
    pub step: u64,
    pub theta_alpha: f64,
    pub error_norm: Option<f64>,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Runs the calibrator over `pairs` from the zero state.
pub fn run_sgd<I>(
    pairs: I,
    layout: &CorrectionLayout,
    alpha_d: f64,
    schedule: &StepSchedule,
    options: &SgdOptions,
) -> Result<(CalibrationState, Vec<SgdLogPoint>), CalibrationError>
where
    I: IntoIterator<Item = SamplePair>,
{
    run_sgd_observed(pairs, layout, alpha_d, schedule, options, |_| {})
}

/// [`run_sgd`] that also hands the state to `observer` at every log point.
pub fn run_sgd_observed<I, F>(
    pairs: I,
    layout: &CorrectionLayout,
    alpha_d: f64,
    schedule: &StepSchedule,
    options: &SgdOptions,
    mut observer: F,
) -> Result<(CalibrationState, Vec<SgdLogPoint>), CalibrationError>
where
    I: IntoIterator<Item = SamplePair>,
    F: FnMut(&CalibrationState),
{
    if let Some(r) = &options.reference {
        if r.len() != layout.dim() {
            return Err(CorrectionError::DimensionMismatch {
                expected: layout.dim(),
                found: r.len(),
            }
            .into());
        }
    }
    let mut state = CalibrationState::new(layout.dim(), schedule.mu_nl(0), schedule.mu_alpha(0));
    let mut log = Vec::new();
    let mut record = |state: &CalibrationState, log: &mut Vec<SgdLogPoint>| {
        log.push(SgdLogPoint {
            step: state.step,
            theta_alpha: state.theta_alpha,
            error_norm: options.reference.as_ref().map(|r| distance(&state.theta.0, &r.0)),
        });
        observer(state);
    };
    record(&state, &mut log);
    for pair in pairs {
        state.mu_nl = schedule.mu_nl(state.step);
        state.mu_alpha = schedule.mu_alpha(state.step);
        let reg = PairRegressors::from_pair(&pair, layout)?;
        sgd_update(&mut state, &reg, alpha_d);
        let max_abs = state.theta.max_abs();
        if !(max_abs <= options.divergence_guard) || !state.theta_alpha.is_finite() {
            return Err(CalibrationError::Diverged {
                step: state.step,
                max_abs,
            });
        }
        if options.log_every > 0 && state.step.is_multiple_of(options.log_every) {
            record(&state, &mut log);
        }
    }
    if log.last().map(|p| p.step) != Some(state.step) {
        record(&state, &mut log);
    }
    Ok((state, log))
}

/// Largest step sizes for which the per-sample error cannot grow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeBounds {
    pub mu_alpha_max: f64,
    pub mu_nl_max: f64,
}

/// Bounds `2 / y_max^2` and `2 / max ||h_a - alpha_d h_x||^2` over the given pairs.
pub fn step_size_bounds<'a, I>(y_max: f64, alpha_d: f64, regressors: I) -> StepSizeBounds
where
    I: IntoIterator<Item = &'a PairRegressors>,
{
    let max_norm = regressors
        .into_iter()
        .map(|r| r.h_a.scaled_difference(&r.h_x, alpha_d).norm_sq())
        .fold(0.0, f64::max);
    StepSizeBounds {
        mu_alpha_max: 2.0 / (y_max * y_max),
        mu_nl_max: 2.0 / max_norm,
    }
}

/// Pair-independent version of [`step_size_bounds`] from the layout's code ranges.
pub fn analytic_step_size_bounds(layout: &CorrectionLayout, y_max: f64, alpha_d: f64) -> StepSizeBounds {
    let a = alpha_d.abs();
    let max_norm: f64 = (0..layout.stage_count())
        .map(|i| ((1.0 + a) * layout.weighted_bound(i)).powi(2) + 1.0 + a * a)
        .sum();
    StepSizeBounds {
        mu_alpha_max: 2.0 / (y_max * y_max),
        mu_nl_max: 2.0 / max_norm,
    }
}
