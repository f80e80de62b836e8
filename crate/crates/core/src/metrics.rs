//! Offline evaluation: precision-recall curves at pair and question
//! granularity, recall at a precision floor, PR-AUC, and the
//! good/same/bad delta for side-by-side comparisons.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{Dataset, Label, Score};

/// One scored, labeled question-paragraph pair. Metrics are supervised,
/// so the label is mandatory here.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub question_id: String,
    pub paragraph_id: String,
    pub score: Score,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PRPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Points ordered by strictly descending threshold; recall is
/// nondecreasing along the list.
#[derive(Debug, Clone, PartialEq)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
}

/// Pairs labeled and scored by a model, ready for the curve builders.
pub fn pairs_from_scores(dataset: &Dataset, scores: &[Score]) -> Result<Vec<ScoredPair>> {
    if scores.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            found: scores.len(),
        });
    }
    dataset
        .records()
        .iter()
        .zip(scores)
        .map(|(r, &score)| {
            let label = r.label.ok_or_else(|| Error::UnlabeledRecord {
                question_id: r.question_id.clone(),
                paragraph_id: r.paragraph_id.clone(),
            })?;
            Ok(ScoredPair {
                question_id: r.question_id.clone(),
                paragraph_id: r.paragraph_id.clone(),
                score,
                label,
            })
        })
        .collect()
}

/// Pair-level curve: one point per distinct score t, counting every pair
/// with score ≥ t as predicted positive.
pub fn qp_pr_curve(pairs: &[ScoredPair]) -> Result<PRCurve> {
    let total_pos = pairs.iter().filter(|p| p.label.is_positive()).count();
    if total_pos == 0 {
        return Err(Error::MetricInput("no positive pair".into()));
    }
    let mut sorted: Vec<&ScoredPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| b.score.value().partial_cmp(&a.score.value()).unwrap());

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].score.value();
        while i < sorted.len() && sorted[i].score.value() == t {
            if sorted[i].label.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PRPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / total_pos as f64,
        });
    }
    Ok(PRCurve { points })
}

struct QuestionSummary {
    selected_score: f64,
    selected_positive: bool,
    has_positive: bool,
}

/// Question-level curve over each question's top-scored paragraph
/// (score ties broken by smallest paragraph_id). Per threshold t a
/// question counts as a true positive when its selected score is ≥ t
/// with a positive selected label, a false positive when ≥ t with a
/// negative one, and a false negative when the selected score is below t
/// but the question has some positive paragraph. Questions without any
/// positive can only ever contribute false positives.
pub fn q_pr_curve(pairs: &[ScoredPair]) -> Result<PRCurve> {
    let mut best: BTreeMap<&str, (&ScoredPair, bool)> = BTreeMap::new();
    for pair in pairs {
        match best.entry(pair.question_id.as_str()) {
            std::collections::btree_map::Entry::Vacant(slot) => {
                slot.insert((pair, pair.label.is_positive()));
            }
            std::collections::btree_map::Entry::Occupied(mut slot) => {
                let (sel, has_pos) = slot.get_mut();
                *has_pos |= pair.label.is_positive();
                let better = pair.score.value() > sel.score.value()
                    || (pair.score.value() == sel.score.value()
                        && pair.paragraph_id < sel.paragraph_id);
                if better {
                    *sel = pair;
                }
            }
        }
    }
    let mut summaries: Vec<QuestionSummary> = best
        .values()
        .map(|&(sel, has_positive)| QuestionSummary {
            selected_score: sel.score.value(),
            selected_positive: sel.label.is_positive(),
            has_positive,
        })
        .collect();
    let mut fnq = summaries.iter().filter(|s| s.has_positive).count();
    if fnq == 0 {
        return Err(Error::MetricInput("no question with a positive pair".into()));
    }
    summaries.sort_by(|a, b| b.selected_score.partial_cmp(&a.selected_score).unwrap());

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < summaries.len() {
        let t = summaries[i].selected_score;
        while i < summaries.len() && summaries[i].selected_score == t {
            let s = &summaries[i];
            if s.selected_positive {
                tp += 1;
                fnq -= 1;
            } else {
                fp += 1;
                if s.has_positive {
                    fnq -= 1;
                }
            }
            i += 1;
        }
        let recall = if tp + fnq == 0 {
            0.0
        } else {
            tp as f64 / (tp + fnq) as f64
        };
        points.push(PRPoint {
            threshold: t,
            precision: tp as f64 / (tp + fp) as f64,
            recall,
        });
    }
    Ok(PRCurve { points })
}

/// Maximum recall over curve points whose precision is at least the
/// floor; 0 when no point qualifies. Precision is not monotone along a
/// PR curve, so every point is considered.
pub fn recall_at_precision(curve: &PRCurve, precision_floor: f64) -> f64 {
    curve
        .points
        .iter()
        .filter(|p| p.precision >= precision_floor)
        .fold(0.0, |acc, p| acc.max(p.recall))
}

/// Step-interpolated area Σ (R_k - R_{k-1}) · P_k over points in
/// increasing-recall order with R_0 = 0 (the average-precision
/// convention; trapezoidal interpolation would overstate the area).
pub fn pr_auc(curve: &PRCurve) -> f64 {
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in &curve.points {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GSBCounts {
    pub good: u64,
    pub same: u64,
    pub bad: u64,
}

/// (good - bad) / (good + same + bad).
pub fn gsb_delta(counts: &GSBCounts) -> Result<f64> {
    let total = counts.good + counts.same + counts.bad;
    if total == 0 {
        return Err(Error::MetricInput("good + same + bad must be positive".into()));
    }
    Ok((counts.good as f64 - counts.bad as f64) / total as f64)
}
