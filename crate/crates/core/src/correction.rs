//! Reduced selection vectors and the additive output correction `y + h^T theta`.
//!
//! For `q` calibrated stages the regressor has one block per stage. Each block
//! starts with a gain-weighted cumulative code sum, followed by one indicator
//! per code index `1..p_i - 1`. Code index 0 is represented by the weighted
//! entry, and for every stage but the last the top code is dropped so that the
//! stacked regressor matrix has full column rank.

use crate::adc::{AdcArchitecture, ConversionRecord};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrectionError {
    #[error("record has {available} pipeline stages, layout needs {needed}")]
    MissingStages { needed: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
}

/// `sum p_i - (q - 1)`; zero for an empty stage list.
pub fn model_dimension(levels: &[usize]) -> usize {
    if levels.is_empty() {
        return 0;
    }
    levels.iter().sum::<usize>() - (levels.len() - 1)
}

/// Position map of the reduced regressor for the first `q` pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionLayout {
    levels: Vec<usize>,
    gains: Vec<f64>,
    max_code: Vec<f64>,
    offsets: Vec<usize>,
    dim: usize,
}

impl CorrectionLayout {
    /// `levels[i]` is `p_i`, `gains[i]` the ideal gain of stage `i`,
    /// `max_code[i]` the largest code magnitude (used only for step-size caps).
    pub fn new(levels: Vec<usize>, gains: Vec<f64>, max_code: Vec<f64>) -> Result<Self, CorrectionError> {
        if levels.is_empty() {
            return Err(CorrectionError::InvalidLayout("q must be at least 1".into()));
        }
        if gains.len() != levels.len() || max_code.len() != levels.len() {
            return Err(CorrectionError::InvalidLayout(
                "levels, gains and code bounds differ in length".into(),
            ));
        }
        if levels.iter().any(|&p| p < 2) {
            return Err(CorrectionError::InvalidLayout("every stage needs p >= 2".into()));
        }
        let q = levels.len();
        let mut offsets = Vec::with_capacity(q);
        let mut pos = 0;
        for (i, &p) in levels.iter().enumerate() {
            offsets.push(pos);
            pos += if i + 1 == q { p } else { p - 1 };
        }
        debug_assert_eq!(pos, model_dimension(&levels));
        Ok(Self {
            levels,
            gains,
            max_code,
            offsets,
            dim: pos,
        })
    }

    /// Layout calibrating the first `q` pipeline stages of `arch`.
    pub fn for_architecture(arch: &AdcArchitecture, q: usize) -> Result<Self, CorrectionError> {
        let stages = arch.stages();
        if q == 0 || q > stages.len() {
            return Err(CorrectionError::MissingStages {
                needed: q,
                available: stages.len(),
            });
        }
        let stages = &stages[..q];
        Self::new(
            stages.iter().map(|s| s.level_count()).collect(),
            stages.iter().map(|s| s.gain()).collect(),
            stages
                .iter()
                .map(|s| s.codes().iter().fold(0.0f64, |m, c| m.max(c.abs())))
                .collect(),
        )
    }

    pub fn stage_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position of the weighted-code entry of `stage`.
    pub fn weighted_position(&self, stage: usize) -> usize {
        self.offsets[stage]
    }

    /// Position of the indicator for `(stage, code index)`, if it has one.
    pub fn indicator_position(&self, stage: usize, code: usize) -> Option<usize> {
        let p = self.levels[stage];
        let last_stage = stage + 1 == self.levels.len();
        let top = if last_stage { p } else { p - 1 };
        (code >= 1 && code < top).then(|| self.offsets[stage] + code)
    }

    /// Bound on `|weighted entry|` of `stage`, from the largest code magnitudes.
    pub fn weighted_bound(&self, stage: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..=stage {
            acc = if i == 0 { 0.0 } else { acc * self.gains[i - 1] };
            acc += self.max_code[i];
        }
        acc
    }
}

/// Sparse regressor: sorted `(position, value)` pairs in a space of size `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SelectionVector {
    pub fn from_entries(dim: usize, mut entries: Vec<(usize, f64)>) -> Result<Self, CorrectionError> {
        entries.sort_by_key(|e| e.0);
        if let Some(&(pos, _)) = entries.last() {
            if pos >= dim {
                return Err(CorrectionError::DimensionMismatch {
                    expected: dim,
                    found: pos + 1,
                });
            }
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CorrectionError::InvalidLayout("duplicate position".into()));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|e| e.1 != 0.0).count()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(pos, v) in &self.entries {
            out[pos] = v;
        }
        out
    }

    pub fn dot(&self, theta: &[f64]) -> Result<f64, CorrectionError> {
        if theta.len() != self.dim {
            return Err(CorrectionError::DimensionMismatch {
                expected: self.dim,
                found: theta.len(),
            });
        }
        Ok(self.dot_unchecked(theta))
    }

    pub(crate) fn dot_unchecked(&self, theta: &[f64]) -> f64 {
        self.entries.iter().map(|&(pos, v)| v * theta[pos]).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    /// `self - scale * other`, merged by position.
    pub fn scaled_difference(&self, other: &SelectionVector, scale: f64) -> SelectionVector {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), other.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(pa, va)), Some(&&(pb, vb))) => {
                    if pa == pb {
                        out.push((pa, va - scale * vb));
                        a.next();
                        b.next();
                    } else if pa < pb {
                        out.push((pa, va));
                        a.next();
                    } else {
                        out.push((pb, -scale * vb));
                        b.next();
                    }
                }
                (Some(&&(pa, va)), None) => {
                    out.push((pa, va));
                    a.next();
                }
                (None, Some(&&(pb, vb))) => {
                    out.push((pb, -scale * vb));
                    b.next();
                }
                (None, None) => break,
            }
        }
        SelectionVector {
            dim: self.dim,
            entries: out,
        }
    }
}

/// Builds the reduced regressor of `record` for the stages in `layout`.
pub fn selection_vector(
    record: &ConversionRecord,
    layout: &CorrectionLayout,
) -> Result<SelectionVector, CorrectionError> {
    let q = layout.stage_count();
    if record.stage_code_index.len() < q || record.stage_code_value.len() < q {
        return Err(CorrectionError::MissingStages {
            needed: q,
            available: record.stage_code_index.len(),
        });
    }
    let mut entries = Vec::with_capacity(2 * q);
    let mut weighted = 0.0;
    for i in 0..q {
        if i > 0 {
            weighted *= layout.gains[i - 1];
        }
        weighted += record.stage_code_value[i];
        entries.push((layout.weighted_position(i), weighted));
        if let Some(pos) = layout.indicator_position(i, record.stage_code_index[i]) {
            entries.push((pos, 1.0));
        }
    }
    Ok(SelectionVector {
        dim: layout.dim,
        entries,
    })
}

/// Correction parameters in the layout of a [`CorrectionLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// `y + h^T theta`.
pub fn apply_correction(y: f64, h: &SelectionVector, theta: &ParameterVector) -> Result<f64, CorrectionError> {
    Ok(y + h.dot(&theta.0)?)
}
