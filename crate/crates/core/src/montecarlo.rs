//! Voting-math verification tools: exact and Monte-Carlo majority-vote
//! accuracy for independent Bernoulli voters, Beta-distributed scorer
//! simulation comparing single-teacher / mean / vote-selected ensembles,
//! and histograms for external plotting.
//!
//! Simulation trials are keyed by (seed, trial index), processed in
//! fixed-size chunks, and chunk statistics are merged in chunk order, so
//! every result is bit-identical for any worker count.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ensemble::{govern_target, mean_target};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::types::Score;

/// Beta distribution parameters, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSpec {
    alpha: f64,
    beta: f64,
}

impl BetaSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "beta parameters must be positive and finite, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaSpec { alpha, beta })
    }

    pub fn alpha(self) -> f64 {
        self.alpha
    }

    pub fn beta(self) -> f64 {
        self.beta
    }

    /// b1 / (b1 + b2).
    pub fn mean(self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// b1 b2 / ((b1 + b2)^2 (b1 + b2 + 1)).
    pub fn variance(self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

const MAX_EXACT_N: u64 = 1001;

fn validate_vote_params(p: f64, n: u64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "voter accuracy must lie strictly inside (0, 1), got {p}"
        )));
    }
    if n == 0 || n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "voter count must be odd and positive, got {n}"
        )));
    }
    Ok(())
}

/// Probability that a majority of n independent voters, each correct
/// with probability p, is correct: the binomial tail
/// Σ_{m=(n+1)/2}^{n} C(n, m) p^m (1-p)^{n-m}, computed with log-domain
/// binomial coefficients.
pub fn condorcet_exact(p: f64, n: u64) -> Result<f64> {
    validate_vote_params(p, n)?;
    if n > MAX_EXACT_N {
        return Err(Error::InvalidParameter(format!(
            "exact tail sum supports up to {MAX_EXACT_N} voters, got {n}"
        )));
    }
    let mut ln_fact = vec![0.0f64; n as usize + 1];
    for k in 1..=n as usize {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut total = 0.0;
    for m in n.div_ceil(2)..=n {
        let ln_c = ln_fact[n as usize] - ln_fact[m as usize] - ln_fact[(n - m) as usize];
        total += (ln_c + m as f64 * ln_p + (n - m) as f64 * ln_q).exp();
    }
    Ok(total)
}

/// Monte-Carlo estimate of the same majority probability. Each trial
/// draws its n votes from its own (seed, trial) stream; the success
/// count is an integer sum, so the estimate is thread-count independent.
pub fn condorcet_mc(p: f64, n: u64, trials: u64, seed: u64) -> Result<f64> {
    use rand::Rng;
    validate_vote_params(p, n)?;
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    let need = n / 2 + 1;
    let successes: u64 = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, trial);
            let correct = (0..n).filter(|_| rng.gen_bool(p)).count() as u64;
            u64::from(correct >= need)
        })
        .sum();
    Ok(successes as f64 / trials as f64)
}

/// One Beta draw as a ratio of two gamma draws, clamped into [0, 1].
pub fn beta_sample(spec: BetaSpec, rng: &mut ChaCha8Rng) -> Score {
    use rand::prelude::Distribution;
    let ga = rand_distr::Gamma::new(spec.alpha, 1.0).unwrap();
    let gb = rand_distr::Gamma::new(spec.beta, 1.0).unwrap();
    let x: f64 = ga.sample(rng);
    let y: f64 = gb.sample(rng);
    if x + y == 0.0 {
        // Both gammas can underflow to zero for tiny shapes.
        return Score::clamped(0.5);
    }
    Score::clamped(x / (x + y))
}

/// Moments of the average of n independent draws from the spec:
/// mean b1/(b1+b2), variance b1 b2 / (n (b1+b2)^2 (b1+b2+1)).
pub fn beta_mean_ensemble_moments(spec: BetaSpec, n: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter("ensemble size must be positive".into()));
    }
    Ok((spec.mean(), spec.variance() / n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimStrategy {
    SingleTeacher,
    MeanEnsemble,
    GovernEnsemble,
}

impl std::fmt::Display for SimStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimStrategy::SingleTeacher => "single_teacher",
            SimStrategy::MeanEnsemble => "mean_ensemble",
            SimStrategy::GovernEnsemble => "govern_ensemble",
        })
    }
}

/// Sample mean and unbiased sample variance of one strategy's targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub strategy: SimStrategy,
    pub mean: f64,
    pub variance: f64,
    pub trials: u64,
}

/// Fixed 100 uniform bins on [0, 1].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub const BINS: usize = 100;

    pub fn new() -> Self {
        Histogram {
            counts: vec![0; Self::BINS],
        }
    }

    pub fn push(&mut self, x: f64) {
        let idx = ((x * Self::BINS as f64) as usize).min(Self::BINS - 1);
        self.counts[idx] += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// (bin_center, count) rows for the external two-column format.
    pub fn rows(&self) -> Vec<(f64, u64)> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| ((i as f64 + 0.5) / Self::BINS as f64, c))
            .collect()
    }
}

impl Default for Histogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Welford accumulator with Chan's merge, so chunked parallel runs
/// reduce to the same bits as a sequential pass over chunk results.
#[derive(Debug, Clone, Copy)]
struct MomentAcc {
    n: u64,
    mean: f64,
    m2: f64,
}

impl MomentAcc {
    fn new() -> Self {
        MomentAcc {
            n: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: MomentAcc) -> MomentAcc {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        MomentAcc {
            n,
            mean: self.mean + delta * (other.n as f64 / n as f64),
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64),
        }
    }

    fn sample_variance(&self) -> f64 {
        self.m2 / (self.n - 1) as f64
    }
}

const SIM_CHUNK: u64 = 8192;
const STRATEGIES: [SimStrategy; 3] = [
    SimStrategy::SingleTeacher,
    SimStrategy::MeanEnsemble,
    SimStrategy::GovernEnsemble,
];

pub struct EnsembleSim {
    pub results: Vec<SimResult>,
    /// Target histograms aligned with `results`.
    pub histograms: Vec<Histogram>,
}

/// Per trial: draw one student score and one score per teacher, then
/// form the single-teacher, mean and vote-selected targets. The student
/// draw enters the vote as the reference point teachers are compared
/// against, exactly as during distillation.
pub fn run_ensemble_sim_full(
    student: BetaSpec,
    teachers: &[BetaSpec],
    trials: u64,
    seed: u64,
) -> Result<EnsembleSim> {
    if teachers.is_empty() {
        return Err(Error::EmptyTeachers);
    }
    if trials < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 trials for a sample variance".into(),
        ));
    }
    let chunk_count = trials.div_ceil(SIM_CHUNK);
    let chunks: Vec<([MomentAcc; 3], [Histogram; 3])> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let lo = c * SIM_CHUNK;
            let hi = ((c + 1) * SIM_CHUNK).min(trials);
            let mut accs = [MomentAcc::new(); 3];
            let mut hists = [Histogram::new(), Histogram::new(), Histogram::new()];
            let mut draws = Vec::with_capacity(teachers.len());
            for trial in lo..hi {
                let mut rng = stream(seed, trial);
                let student_draw = beta_sample(student, &mut rng);
                draws.clear();
                draws.extend(teachers.iter().map(|&t| beta_sample(t, &mut rng)));

                let single = draws[0].value();
                let mean = mean_target(&draws).expect("nonempty").target.value();
                let govern = govern_target(student_draw, &draws)
                    .expect("nonempty")
                    .target
                    .value();
                for (k, x) in [single, mean, govern].into_iter().enumerate() {
                    accs[k].push(x);
                    hists[k].push(x);
                }
            }
            (accs, hists)
        })
        .collect();

    let mut accs = [MomentAcc::new(); 3];
    let mut hists = [Histogram::new(), Histogram::new(), Histogram::new()];
    for (chunk_accs, chunk_hists) in chunks {
        for k in 0..3 {
            accs[k] = accs[k].merge(chunk_accs[k]);
            hists[k].merge(&chunk_hists[k]);
        }
    }

    let results = STRATEGIES
        .iter()
        .zip(&accs)
        .map(|(&strategy, acc)| SimResult {
            strategy,
            mean: acc.mean,
            variance: acc.sample_variance(),
            trials,
        })
        .collect();
    Ok(EnsembleSim {
        results,
        histograms: hists.into_iter().collect(),
    })
}

pub fn run_ensemble_sim(
    student: BetaSpec,
    teachers: &[BetaSpec],
    trials: u64,
    seed: u64,
) -> Result<Vec<SimResult>> {
    Ok(run_ensemble_sim_full(student, teachers, trials, seed)?.results)
}
