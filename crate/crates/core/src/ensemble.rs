//! Teacher-combination strategies.
//!
//! Five ways to turn N teacher scores into one distillation target:
//!
//! * `mean_target`: plain average.
//! * `lr_target`: sigmoid of a logistic-regression weighted sum, with
//!   weights fitted on a labeled dev set by `lr_fit`.
//! * `govern_target`: per-sample majority vote over gradient
//!   orientations. Each teacher pushes the student up or down depending
//!   on the sign of (teacher - student); only teachers agreeing with the
//!   majority direction are averaged.
//! * `govern_ca_target`: supervised variant. Teachers are gated by
//!   agreement with the label's direction and the survivors weighted by
//!   cross-entropy confidence.
//! * `camkd_target`: confidence weighting over all teachers, no gating.
//!
//! All functions are pure and cheap; callers parallelize across samples.

use crate::error::{Error, Result};
use crate::types::{Dataset, EnsembleTarget, Label, Orientation, Score, Strategy};

/// Clamp bound for cross-entropy: keeps exp(L_CE) finite when a teacher
/// emits exactly 0 or 1.
pub const CE_CLAMP: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sign of (teacher - student). The zero branch fires on exact floating
/// equality only; ties are measure-zero on real data and an epsilon band
/// would silently change vote counts.
pub fn orientation(student: Score, teacher: Score) -> Orientation {
    if teacher.value() > student.value() {
        Orientation::Up
    } else if teacher.value() < student.value() {
        Orientation::Down
    } else {
        Orientation::Flat
    }
}

/// Majority direction: sign of the orientation sum.
pub fn vote(orientations: &[Orientation]) -> Result<Orientation> {
    if orientations.is_empty() {
        return Err(Error::EmptyOrientations);
    }
    let sum: i64 = orientations.iter().map(|o| o.signum() as i64).sum();
    Ok(Orientation::from_signum(sum.signum() as i32))
}

/// Convex combination of teacher scores; callers guarantee a positive
/// weight sum. Clamp covers the last-ulp rounding of the division.
fn weighted_target(teachers: &[Score], weights: &[f64]) -> Score {
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, w) in teachers.iter().zip(weights) {
        num += w * t.value();
        den += w;
    }
    Score::clamped(num / den)
}

pub fn mean_target(teachers: &[Score]) -> Result<EnsembleTarget> {
    if teachers.is_empty() {
        return Err(Error::EmptyTeachers);
    }
    let weights = vec![1.0; teachers.len()];
    let target = weighted_target(teachers, &weights);
    Ok(EnsembleTarget {
        target,
        weights,
        strategy: Strategy::Mean,
        skipped: false,
        raw_weight_sum: None,
    })
}

/// Majority-vote selection: W_i = 1 iff the vote and teacher i's
/// orientation do not oppose each other, then average the selected.
///
/// Never skips: a zero vote selects everyone (reducing to the mean), and
/// a nonzero vote keeps at least the majority side.
pub fn govern_target(student: Score, teachers: &[Score]) -> Result<EnsembleTarget> {
    if teachers.is_empty() {
        return Err(Error::EmptyTeachers);
    }
    let grads: Vec<Orientation> = teachers.iter().map(|&t| orientation(student, t)).collect();
    let chi = vote(&grads)?;
    let weights: Vec<f64> = grads
        .iter()
        .map(|g| {
            if chi.signum() * g.signum() >= 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let target = weighted_target(teachers, &weights);
    Ok(EnsembleTarget {
        target,
        weights,
        strategy: Strategy::Govern,
        skipped: false,
        raw_weight_sum: None,
    })
}

/// Cross entropy of a prediction against a hard label: -ln of the
/// probability assigned to the true class, clamped to
/// [CE_CLAMP, 1 - CE_CLAMP].
pub fn ce_loss(prediction: Score, label: Label) -> f64 {
    let p_true = match label {
        Label::Positive => prediction.value(),
        Label::Negative => 1.0 - prediction.value(),
    };
    -p_true.clamp(CE_CLAMP, 1.0 - CE_CLAMP).ln()
}

/// Confidence weights shared by GOVERN-CA and CA-MKD.
///
/// Over the index set with `selected[i]` true (size K ≥ 1):
/// raw_i = (1/K) · (1 - exp(L_CE^i) / Σ_selected exp(L_CE^j)),
/// which sums to 1 - 1/K, so the weights are renormalized to sum to 1.
/// A shrunken sum would pull the target toward 0 and out of the convex
/// hull of the teacher scores; renormalization keeps the relative
/// confidence ordering intact. K = 1 degenerates raw to 0 and the single
/// selected teacher carries weight 1 instead.
fn confidence_weights(
    teachers: &[Score],
    label: Label,
    selected: &[bool],
) -> (Vec<f64>, Option<f64>) {
    let k = selected.iter().filter(|&&s| s).count();
    debug_assert!(k >= 1);
    let exp_losses: Vec<f64> = teachers
        .iter()
        .zip(selected)
        .map(|(&t, &s)| if s { ce_loss(t, label).exp() } else { 0.0 })
        .collect();
    let exp_sum: f64 = exp_losses.iter().sum();
    let raw: Vec<f64> = exp_losses
        .iter()
        .zip(selected)
        .map(|(&e, &s)| {
            if s {
                (1.0 - e / exp_sum) / k as f64
            } else {
                0.0
            }
        })
        .collect();
    let raw_sum: f64 = raw.iter().sum();
    if k == 1 {
        let weights = selected.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
        return (weights, Some(raw_sum));
    }
    (raw.iter().map(|&w| w / raw_sum).collect(), Some(raw_sum))
}

/// Label-gated confidence combiner: teachers whose orientation opposes
/// (or is flat against) the label's direction get weight 0. When every
/// teacher is gated out the sample is skipped; the 0.5 target on a
/// skipped sample is a placeholder that no loss may consume.
pub fn govern_ca_target(student: Score, teachers: &[Score], label: Label) -> Result<EnsembleTarget> {
    if teachers.is_empty() {
        return Err(Error::EmptyTeachers);
    }
    let selected: Vec<bool> = teachers
        .iter()
        .map(|&t| label.sign() * orientation(student, t).signum() as f64 > 0.0)
        .collect();
    if selected.iter().all(|&s| !s) {
        return Ok(EnsembleTarget {
            target: Score::clamped(0.5),
            weights: vec![0.0; teachers.len()],
            strategy: Strategy::GovernCA,
            skipped: true,
            raw_weight_sum: None,
        });
    }
    let (weights, raw_weight_sum) = confidence_weights(teachers, label, &selected);
    let target = weighted_target(teachers, &weights);
    Ok(EnsembleTarget {
        target,
        weights,
        strategy: Strategy::GovernCA,
        skipped: false,
        raw_weight_sum,
    })
}

/// Confidence weighting over all teachers, no orientation gating.
pub fn camkd_target(teachers: &[Score], label: Label) -> Result<EnsembleTarget> {
    if teachers.is_empty() {
        return Err(Error::EmptyTeachers);
    }
    let selected = vec![true; teachers.len()];
    let (weights, raw_weight_sum) = confidence_weights(teachers, label, &selected);
    let target = weighted_target(teachers, &weights);
    Ok(EnsembleTarget {
        target,
        weights,
        strategy: Strategy::CAMKD,
        skipped: false,
        raw_weight_sum,
    })
}

/// Logistic-regression combiner parameters: one coefficient per teacher
/// plus a bias. Coefficients may be negative (a contrarian teacher is
/// still informative).
#[derive(Debug, Clone, PartialEq)]
pub struct LRWeights {
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone)]
pub struct LRFitConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop when the largest gradient component falls below this.
    pub tolerance: f64,
}

impl Default for LRFitConfig {
    fn default() -> Self {
        LRFitConfig {
            learning_rate: 0.5,
            max_iters: 10_000,
            tolerance: 1e-8,
        }
    }
}

/// Full-batch gradient descent on mean cross entropy of
/// sigmoid(bias + Σ c_i · teacher_i) against the labels. Zero
/// initialization, fixed iteration order: deterministic per config.
pub fn lr_fit(dev: &Dataset, config: &LRFitConfig) -> Result<LRWeights> {
    if config.learning_rate <= 0.0 {
        return Err(Error::InvalidParameter("learning_rate must be positive".into()));
    }
    let mut pos = 0usize;
    let mut neg = 0usize;
    for r in dev.records() {
        match r.label {
            Some(Label::Positive) => pos += 1,
            Some(Label::Negative) => neg += 1,
            None => {
                return Err(Error::UnlabeledRecord {
                    question_id: r.question_id.clone(),
                    paragraph_id: r.paragraph_id.clone(),
                })
            }
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClassDevSet);
    }

    let n = dev.teacher_count();
    let m = dev.len() as f64;
    let mut coefficients = vec![0.0; n];
    let mut bias = 0.0;
    for _ in 0..config.max_iters {
        let mut grad_c = vec![0.0; n];
        let mut grad_b = 0.0;
        for r in dev.records() {
            let z = bias
                + r.teacher_scores
                    .iter()
                    .zip(&coefficients)
                    .map(|(t, c)| c * t.value())
                    .sum::<f64>();
            let y = if r.label == Some(Label::Positive) { 1.0 } else { 0.0 };
            let dz = (sigmoid(z) - y) / m;
            for (g, t) in grad_c.iter_mut().zip(&r.teacher_scores) {
                *g += dz * t.value();
            }
            grad_b += dz;
        }
        let max_grad = grad_c
            .iter()
            .chain(std::iter::once(&grad_b))
            .fold(0.0f64, |a, &g| a.max(g.abs()));
        if max_grad < config.tolerance {
            break;
        }
        for (c, g) in coefficients.iter_mut().zip(&grad_c) {
            *c -= config.learning_rate * g;
        }
        bias -= config.learning_rate * grad_b;
    }
    Ok(LRWeights { coefficients, bias })
}

/// sigmoid(bias + Σ c_i · teacher_i). The weights field reports the
/// coefficients, not a convex combination.
pub fn lr_target(weights: &LRWeights, teachers: &[Score]) -> Result<EnsembleTarget> {
    if weights.coefficients.len() != teachers.len() {
        return Err(Error::LengthMismatch {
            expected: weights.coefficients.len(),
            found: teachers.len(),
        });
    }
    let z = weights.bias
        + teachers
            .iter()
            .zip(&weights.coefficients)
            .map(|(t, c)| c * t.value())
            .sum::<f64>();
    Ok(EnsembleTarget {
        target: Score::clamped(sigmoid(z)),
        weights: weights.coefficients.clone(),
        strategy: Strategy::LRWeighted,
        skipped: false,
        raw_weight_sum: None,
    })
}
