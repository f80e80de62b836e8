//! Domain types shared by every module: scores, labels, gradient
//! orientations, sample records and combiner outputs.

use crate::error::{Error, Result};

/// A relevance probability in [0, 1].
///
/// Both the student and the teachers emit these. Construction rejects
/// NaN and out-of-range values, so downstream code can rely on the range.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score(f64);

impl Score {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || !(0.0..=1.0).contains(&value) {
            return Err(Error::ScoreOutOfRange(value));
        }
        Ok(Score(value))
    }

    /// Clamps into [0, 1]. For values that are in range up to rounding
    /// error (convex combinations, sampler output), not for user input.
    pub fn clamped(value: f64) -> Self {
        Score(value.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Direction a teacher would push the student: sign(teacher - student).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Down,
    Flat,
    Up,
}

impl Orientation {
    pub fn signum(self) -> i32 {
        match self {
            Orientation::Down => -1,
            Orientation::Flat => 0,
            Orientation::Up => 1,
        }
    }

    pub fn from_signum(s: i32) -> Self {
        match s.signum() {
            -1 => Orientation::Down,
            0 => Orientation::Flat,
            _ => Orientation::Up,
        }
    }
}

/// Ground-truth relevance label. Stored as 0/1 in files, ±1 in the math.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// +1 for positive, -1 for negative.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }
}

/// One question-paragraph pair: features, optional label, and the
/// precomputed scores of every teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub question_id: String,
    pub paragraph_id: String,
    pub features: Vec<f64>,
    pub label: Option<Label>,
    pub teacher_scores: Vec<Score>,
}

/// An in-memory corpus. Feature dimensionality and teacher count are
/// uniform across records and (question_id, paragraph_id) pairs are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<SampleRecord>,
    feature_dim: usize,
    teacher_count: usize,
}

impl Dataset {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyDataset)?;
        let feature_dim = first.features.len();
        let teacher_count = first.teacher_scores.len();
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if r.features.len() != feature_dim {
                return Err(Error::InvalidParameter(format!(
                    "record ({}, {}) has {} features, expected {}",
                    r.question_id,
                    r.paragraph_id,
                    r.features.len(),
                    feature_dim
                )));
            }
            if r.teacher_scores.len() != teacher_count {
                return Err(Error::InvalidParameter(format!(
                    "record ({}, {}) has {} teacher scores, expected {}",
                    r.question_id,
                    r.paragraph_id,
                    r.teacher_scores.len(),
                    teacher_count
                )));
            }
            if !seen.insert((r.question_id.clone(), r.paragraph_id.clone())) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate record id ({}, {})",
                    r.question_id, r.paragraph_id
                )));
            }
        }
        Ok(Dataset {
            records,
            feature_dim,
            teacher_count,
        })
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn teacher_count(&self) -> usize {
        self.teacher_count
    }

    /// Splits off the records whose index satisfies the predicate,
    /// preserving order. Errors if either side would be empty.
    pub fn partition(&self, keep: impl Fn(usize) -> bool) -> Result<(Dataset, Dataset)> {
        let mut kept = Vec::new();
        let mut rest = Vec::new();
        for (i, r) in self.records.iter().enumerate() {
            if keep(i) {
                kept.push(r.clone());
            } else {
                rest.push(r.clone());
            }
        }
        Ok((Dataset::new(kept)?, Dataset::new(rest)?))
    }
}

/// Which combiner produced an `EnsembleTarget`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Mean,
    LRWeighted,
    Govern,
    GovernCA,
    CAMKD,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Strategy::Mean => "mean",
            Strategy::LRWeighted => "lr",
            Strategy::Govern => "govern",
            Strategy::GovernCA => "govern-ca",
            Strategy::CAMKD => "camkd",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Strategy::Mean),
            "lr" => Ok(Strategy::LRWeighted),
            "govern" => Ok(Strategy::Govern),
            "govern-ca" => Ok(Strategy::GovernCA),
            "camkd" => Ok(Strategy::CAMKD),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?}, expected mean|lr|govern|govern-ca|camkd"
            ))),
        }
    }
}

/// A per-sample distillation target plus the teacher weights behind it.
///
/// `skipped` is true only for supervised combiners that excluded every
/// teacher; such samples carry zero weights and must not enter the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTarget {
    pub target: Score,
    pub weights: Vec<f64>,
    pub strategy: Strategy,
    pub skipped: bool,
    /// Confidence-weight sum before renormalization (GovernCA / CAMKD
    /// with two or more selected teachers; 1 - 1/K in exact arithmetic).
    pub raw_weight_sum: Option<f64>,
}
