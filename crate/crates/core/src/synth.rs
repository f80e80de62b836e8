//! Synthetic ranking data: a hidden linear scorer labels
//! question/paragraph pairs, and a bank of noisy teachers scores them.
//!
//! Every record draws from its own (seed, record index) stream, so the
//! dataset is reproducible and records can be generated in parallel.
//! Stream 0 is reserved for the hidden scorer.

use rayon::prelude::*;

use crate::ensemble::sigmoid;
use crate::error::{Error, Result};
use crate::montecarlo::{beta_sample, BetaSpec};
use crate::rng::stream;
use crate::types::{Dataset, Label, SampleRecord};

/// How one teacher corrupts the truth: it sees the label flipped with
/// probability `flip_rate`, then reports a Beta draw from `sharp_pos`
/// when its perceived label is positive and `sharp_neg` otherwise.
#[derive(Debug, Clone, Copy)]
pub struct TeacherQuality {
    pub flip_rate: f64,
    pub sharp_pos: BetaSpec,
    pub sharp_neg: BetaSpec,
}

impl TeacherQuality {
    pub fn new(flip_rate: f64, sharp_pos: BetaSpec, sharp_neg: BetaSpec) -> Result<Self> {
        if !(0.0..=0.5).contains(&flip_rate) {
            return Err(Error::InvalidParameter(format!(
                "flip rate must lie in [0, 0.5], got {flip_rate}"
            )));
        }
        Ok(TeacherQuality {
            flip_rate,
            sharp_pos,
            sharp_neg,
        })
    }
}

/// Label separability: the hidden unit scorer is scaled by this before
/// the sigmoid, giving roughly 19% Bayes error on standard-normal
/// features.
const LABEL_GAIN: f64 = 2.5;

fn hidden_scorer(feature_dim: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = stream(seed, 0);
    let mut w: Vec<f64> = (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        w[0] = 1.0;
        return w;
    }
    for x in &mut w {
        *x /= norm;
    }
    w
}

/// Generates `n_questions * paragraphs_per_question` labeled records.
/// Labels are Bernoulli(sigmoid(gain * w.x)) under a hidden unit-norm
/// scorer w; teacher i then scores each record from its positive or
/// negative Beta depending on its (possibly flipped) view of the label.
pub fn synthesize_dataset(
    n_questions: usize,
    paragraphs_per_question: usize,
    feature_dim: usize,
    teacher_qualities: &[TeacherQuality],
    seed: u64,
) -> Result<Dataset> {
    use rand::prelude::Distribution;
    use rand::Rng;

    if n_questions == 0 || paragraphs_per_question == 0 || feature_dim == 0 {
        return Err(Error::InvalidParameter(
            "question, paragraph and feature counts must be positive".into(),
        ));
    }
    if teacher_qualities.is_empty() {
        return Err(Error::EmptyTeachers);
    }

    let w = hidden_scorer(feature_dim, seed);
    let normal = rand_distr::StandardNormal;
    let total = n_questions * paragraphs_per_question;

    let records: Vec<SampleRecord> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream(seed, 1 + idx as u64);
            let features: Vec<f64> = (0..feature_dim).map(|_| normal.sample(&mut rng)).collect();
            let margin: f64 = w.iter().zip(&features).map(|(a, b)| a * b).sum();
            let positive = rng.gen_bool(sigmoid(LABEL_GAIN * margin));
            let teacher_scores = teacher_qualities
                .iter()
                .map(|q| {
                    let flipped = rng.gen_bool(q.flip_rate);
                    let sees_positive = positive != flipped;
                    let spec = if sees_positive { q.sharp_pos } else { q.sharp_neg };
                    beta_sample(spec, &mut rng)
                })
                .collect();
            SampleRecord {
                question_id: format!("q{}", idx / paragraphs_per_question),
                paragraph_id: format!("p{}", idx % paragraphs_per_question),
                features,
                label: Some(if positive { Label::Positive } else { Label::Negative }),
                teacher_scores,
            }
        })
        .collect();

    Dataset::new(records)
}
