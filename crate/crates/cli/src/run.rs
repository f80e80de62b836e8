//! Subcommand implementations. Every command resolves its settings via
//! `Resolver` (flags over config file), writes a manifest, and touches
//! the filesystem only at the paths it was given.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};

use clap::{Args, Subcommand};

use govern_core::dataset::{load_dataset, write_dataset};
use govern_core::ensemble::{lr_fit, LRFitConfig};
use govern_core::metrics::{
    gsb_delta, pairs_from_scores, pr_auc, q_pr_curve, qp_pr_curve, recall_at_precision, GSBCounts,
};
use govern_core::montecarlo::{
    beta_sample, condorcet_exact, condorcet_mc, run_ensemble_sim_full, BetaSpec, Histogram,
};
use govern_core::numfmt::{fmt_compact, fmt_g17};
use govern_core::persist::{load_lr_weights, load_model, save_lr_weights, save_model};
use govern_core::rng::stream;
use govern_core::student::{
    distill, init_model, train_supervised, CombinerSpec, LossKind, TrainConfig, TrainLog,
};
use govern_core::synth::{synthesize_dataset, TeacherQuality};
use govern_core::types::{Score, Strategy};

use crate::config::{usage, AppError, AppResult, Resolver};

const R_AT_P_FLOOR: f64 = 0.9;

fn runtime(msg: String) -> AppError {
    AppError::Runtime(anyhow::anyhow!(msg))
}

fn write_text(path: &str, text: &str) -> AppResult<()> {
    fs::write(path, text).map_err(|e| runtime(format!("cannot write {path}: {e}")))
}

/// Reports go to stdout and, when requested, verbatim into a file.
fn emit(report: &str, out: Option<&str>) -> AppResult<()> {
    print!("{report}");
    if let Some(path) = out {
        write_text(path, report)?;
    }
    Ok(())
}

fn parse_f64(what: &str, s: &str) -> AppResult<f64> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("{what}: expected a number, got {s:?}")))
}

/// "alpha,beta"
fn parse_beta(s: &str) -> AppResult<BetaSpec> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| usage(format!("beta spec must be alpha,beta, got {s:?}")))?;
    BetaSpec::new(parse_f64("beta spec", a)?, parse_f64("beta spec", b)?)
        .map_err(|e| usage(e.to_string()))
}

/// Semicolon-separated items, each optionally repeated with a `Kx`
/// prefix: "10x20,2" is ten B(20,2) teachers.
fn parse_beta_list(s: &str) -> AppResult<Vec<BetaSpec>> {
    let mut out = Vec::new();
    for item in s.split(';') {
        let item = item.trim();
        let (count, spec) = split_repeat(item);
        let spec = parse_beta(spec)?;
        out.extend(std::iter::repeat_n(spec, count));
    }
    Ok(out)
}

fn split_repeat(item: &str) -> (usize, &str) {
    if let Some((head, rest)) = item.split_once('x') {
        if !head.is_empty() && head.chars().all(|c| c.is_ascii_digit()) {
            return (head.parse().unwrap(), rest);
        }
    }
    (1, item)
}

/// "flip:aPos,bPos:aNeg,bNeg", `Kx` repeat prefix allowed.
fn parse_teachers(s: &str) -> AppResult<Vec<TeacherQuality>> {
    let mut out = Vec::new();
    for item in s.split(';') {
        let item = item.trim();
        let (count, spec) = split_repeat(item);
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(usage(format!(
                "teacher spec must be flip:aPos,bPos:aNeg,bNeg, got {spec:?}"
            )));
        }
        let quality = TeacherQuality::new(
            parse_f64("flip rate", parts[0])?,
            parse_beta(parts[1])?,
            parse_beta(parts[2])?,
        )
        .map_err(|e| usage(e.to_string()))?;
        out.extend(std::iter::repeat_n(quality, count));
    }
    Ok(out)
}

fn parse_arch(s: &str) -> AppResult<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| usage(format!("arch: expected layer sizes like 8,16,1, got {s:?}")))
        })
        .collect()
}

#[derive(Args)]
pub struct SynthesizeArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Output dataset path
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    questions: Option<usize>,
    /// Paragraphs per question
    #[arg(long)]
    paragraphs: Option<usize>,
    /// Feature dimension
    #[arg(long)]
    features: Option<usize>,
    /// Teacher specs flip:aPos,bPos:aNeg,bNeg joined by `;`, `Kx` repeats
    #[arg(long)]
    teachers: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Manifest path (default: <out>.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

pub fn synthesize(args: SynthesizeArgs) -> AppResult<()> {
    let mut r = Resolver::new("synthesize", args.config.as_deref())?;
    let out: String = r.required("out", args.out)?;
    let questions = r.required("questions", args.questions)?;
    let paragraphs = r.required("paragraphs", args.paragraphs)?;
    let features = r.required("features", args.features)?;
    let teachers: String = r.required("teachers", args.teachers)?;
    let seed = r.required("seed", args.seed)?;
    let manifest = r.finish()?;

    let qualities = parse_teachers(&teachers)?;
    let data = synthesize_dataset(questions, paragraphs, features, &qualities, seed)?;
    write_dataset(&data, &out)?;
    manifest.write(&manifest.path(args.manifest.as_deref(), Some(&out)))?;
    println!(
        "wrote {out} ({} records, {} teachers)",
        data.len(),
        data.teacher_count()
    );
    Ok(())
}

#[derive(Args)]
pub struct EnsembleArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Input dataset
    #[arg(long)]
    input: Option<String>,
    /// mean | lr | govern | govern-ca | camkd
    #[arg(long)]
    strategy: Option<String>,
    /// Student model file; required for govern and govern-ca
    #[arg(long = "student-model")]
    student_model: Option<String>,
    /// Weight file from lr-fit; required for lr
    #[arg(long = "lr-weights")]
    lr_weights: Option<String>,
    /// Output target file
    #[arg(long)]
    out: Option<String>,
    /// Manifest path (default: <out>.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

pub fn ensemble(args: EnsembleArgs) -> AppResult<()> {
    let mut r = Resolver::new("ensemble", args.config.as_deref())?;
    let input: String = r.required("input", args.input)?;
    let strategy_name: String = r.required("strategy", args.strategy)?;
    let student_model: Option<String> = r.optional("student-model", args.student_model)?;
    let lr_weights: Option<String> = r.optional("lr-weights", args.lr_weights)?;
    let out: String = r.required("out", args.out)?;
    let manifest = r.finish()?;

    let strategy: Strategy = strategy_name.parse().map_err(|e: govern_core::Error| usage(e.to_string()))?;
    let wants_student = matches!(strategy, Strategy::Govern | Strategy::GovernCA);
    if wants_student && student_model.is_none() {
        return Err(usage(format!("strategy {strategy} requires --student-model")));
    }
    if !wants_student && student_model.is_some() {
        return Err(usage(format!("--student-model is not used by strategy {strategy}")));
    }
    if strategy == Strategy::LRWeighted && lr_weights.is_none() {
        return Err(usage("strategy lr requires --lr-weights"));
    }
    if strategy != Strategy::LRWeighted && lr_weights.is_some() {
        return Err(usage(format!("--lr-weights is not used by strategy {strategy}")));
    }

    let combiner = match strategy {
        Strategy::Mean => CombinerSpec::Mean,
        Strategy::LRWeighted => CombinerSpec::LRWeighted(load_lr_weights(lr_weights.unwrap())?),
        Strategy::Govern => CombinerSpec::Govern,
        Strategy::GovernCA => CombinerSpec::GovernCA,
        Strategy::CAMKD => CombinerSpec::CAMKD,
    };
    let model = student_model.map(load_model).transpose()?;
    let data = load_dataset(&input, None)?;

    let file = fs::File::create(&out).map_err(|e| runtime(format!("cannot write {out}: {e}")))?;
    let mut w = BufWriter::new(file);
    let mut skipped = 0u64;
    for record in data.records() {
        let student = match &model {
            Some(m) => m.forward(&record.features)?,
            None => Score::clamped(0.5),
        };
        let t = combiner.target(student, record)?;
        skipped += u64::from(t.skipped);
        let weights: Vec<String> = t.weights.iter().map(|&x| fmt_g17(x)).collect();
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            record.question_id,
            record.paragraph_id,
            fmt_g17(t.target.value()),
            u8::from(t.skipped),
            weights.join(",")
        )
        .map_err(|e| runtime(format!("cannot write {out}: {e}")))?;
    }
    w.flush().map_err(|e| runtime(format!("cannot write {out}: {e}")))?;
    manifest.write(&manifest.path(args.manifest.as_deref(), Some(&out)))?;
    println!("wrote {out} ({} targets, {skipped} skipped)", data.len());
    Ok(())
}

#[derive(Args)]
pub struct LrFitArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Labeled dataset to fit on
    #[arg(long)]
    input: Option<String>,
    /// Output weight file
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Manifest path (default: <out>.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

pub fn lr_fit_cmd(args: LrFitArgs) -> AppResult<()> {
    let defaults = LRFitConfig::default();
    let mut r = Resolver::new("lr-fit", args.config.as_deref())?;
    let input: String = r.required("input", args.input)?;
    let out: String = r.required("out", args.out)?;
    let config = LRFitConfig {
        learning_rate: r.or_default("learning-rate", args.learning_rate, defaults.learning_rate)?,
        max_iters: r.or_default("max-iters", args.max_iters, defaults.max_iters)?,
        tolerance: r.or_default("tolerance", args.tolerance, defaults.tolerance)?,
    };
    let manifest = r.finish()?;

    let data = load_dataset(&input, None)?;
    let weights = lr_fit(&data, &config)?;
    save_lr_weights(&weights, &out)?;
    manifest.write(&manifest.path(args.manifest.as_deref(), Some(&out)))?;
    println!("wrote {out} ({} coefficients)", weights.coefficients.len());
    Ok(())
}

#[derive(Args)]
pub struct TrainFlags {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Training dataset
    #[arg(long)]
    input: Option<String>,
    /// Continue from a saved model (alternative to --arch)
    #[arg(long = "init-model")]
    init_model: Option<String>,
    /// Fresh model layer sizes, input first, e.g. 8,16,1
    #[arg(long)]
    arch: Option<String>,
    /// Labeled dev set for epoch checkpoint selection
    #[arg(long)]
    dev: Option<String>,
    /// Output model file
    #[arg(long)]
    out: Option<String>,
    /// Per-epoch CSV log path
    #[arg(long)]
    log: Option<String>,
    #[arg(long = "learning-rate")]
    learning_rate: Option<f64>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Linear learning-rate warmup steps
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// mse | ce
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Manifest path (default: <out>.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

enum ModelInit {
    Load(String),
    Fresh(Vec<usize>),
}

struct TrainingPlan {
    input: String,
    dev: Option<String>,
    out: String,
    log: Option<String>,
    init: ModelInit,
    config: TrainConfig,
}

fn resolve_training(
    r: &mut Resolver,
    flags: TrainFlags,
    default_loss: LossKind,
) -> AppResult<TrainingPlan> {
    let defaults = TrainConfig::default();
    let input = r.required("input", flags.input)?;
    let init_model_path: Option<String> = r.optional("init-model", flags.init_model)?;
    let arch: Option<String> = r.optional("arch", flags.arch)?;
    let init = match (init_model_path, arch) {
        (Some(_), Some(_)) => {
            return Err(usage("pass either --init-model or --arch, not both"))
        }
        (Some(p), None) => ModelInit::Load(p),
        (None, Some(a)) => ModelInit::Fresh(parse_arch(&a)?),
        (None, None) => return Err(usage("missing model: pass --init-model or --arch")),
    };
    let dev = r.optional("dev", flags.dev)?;
    let out = r.required("out", flags.out)?;
    let log = r.optional("log", flags.log)?;
    let loss_name: String =
        r.or_default("loss", flags.loss, default_loss.to_string())?;
    let loss: LossKind = loss_name
        .parse()
        .map_err(|e: govern_core::Error| usage(e.to_string()))?;
    let config = TrainConfig {
        learning_rate: r.or_default("learning-rate", flags.learning_rate, defaults.learning_rate)?,
        batch_size: r.or_default("batch-size", flags.batch_size, defaults.batch_size)?,
        epochs: r.or_default("epochs", flags.epochs, defaults.epochs)?,
        warmup_steps: r.or_default("warmup", flags.warmup, defaults.warmup_steps)?,
        seed: r.required("seed", flags.seed)?,
        adam_beta1: r.or_default("beta1", flags.beta1, defaults.adam_beta1)?,
        adam_beta2: r.or_default("beta2", flags.beta2, defaults.adam_beta2)?,
        adam_epsilon: r.or_default("epsilon", flags.epsilon, defaults.adam_epsilon)?,
        loss,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(TrainingPlan {
        input,
        dev,
        out,
        log,
        init,
        config,
    })
}

fn train_summary(log: &TrainLog) -> String {
    let mut s = String::new();
    if let Some(last) = log.epochs.last() {
        let _ = writeln!(s, "final_mean_loss={}", fmt_compact(last.mean_loss));
    }
    if let Some(best) = log.best_epoch {
        let prauc = log
            .epochs
            .iter()
            .find(|e| e.epoch == best)
            .and_then(|e| e.dev_prauc)
            .unwrap_or(0.0);
        let _ = writeln!(s, "best_epoch={best}");
        let _ = writeln!(s, "best_dev_prauc={}", fmt_compact(prauc));
    }
    s
}

fn execute_training(
    plan: TrainingPlan,
    manifest: crate::config::Manifest,
    manifest_flag: Option<&str>,
    combiner: Option<CombinerSpec>,
) -> AppResult<()> {
    let data = load_dataset(&plan.input, None)?;
    let dev = plan
        .dev
        .as_ref()
        .map(|p| load_dataset(p, None))
        .transpose()?;
    let model = match &plan.init {
        ModelInit::Load(path) => load_model(path)?,
        ModelInit::Fresh(sizes) => {
            init_model(sizes, plan.config.seed).map_err(|e| usage(e.to_string()))?
        }
    };
    let (model, log) = match &combiner {
        Some(c) => distill(model, &data, c, dev.as_ref(), &plan.config)?,
        None => train_supervised(model, &data, dev.as_ref(), &plan.config)?,
    };
    save_model(&model, &plan.out)?;
    if let Some(path) = &plan.log {
        write_text(path, &log.to_csv())?;
    }
    manifest.write(&manifest.path(manifest_flag, Some(&plan.out)))?;
    println!("wrote {}", plan.out);
    print!("{}", train_summary(&log));
    Ok(())
}

#[derive(Args)]
pub struct DistillArgs {
    /// mean | lr | govern | govern-ca | camkd
    #[arg(long)]
    strategy: Option<String>,
    /// Weight file from lr-fit; required for lr
    #[arg(long = "lr-weights")]
    lr_weights: Option<String>,
    #[command(flatten)]
    train: TrainFlags,
}

pub fn distill_cmd(args: DistillArgs) -> AppResult<()> {
    let mut r = Resolver::new("distill", args.train.config.as_deref())?;
    let strategy_name: String = r.required("strategy", args.strategy)?;
    let lr_weights: Option<String> = r.optional("lr-weights", args.lr_weights)?;
    let manifest_flag = args.train.manifest.clone();
    let plan = resolve_training(&mut r, args.train, LossKind::MSE)?;
    let manifest = r.finish()?;

    let strategy: Strategy = strategy_name
        .parse()
        .map_err(|e: govern_core::Error| usage(e.to_string()))?;
    if strategy == Strategy::LRWeighted && lr_weights.is_none() {
        return Err(usage("strategy lr requires --lr-weights"));
    }
    if strategy != Strategy::LRWeighted && lr_weights.is_some() {
        return Err(usage(format!("--lr-weights is not used by strategy {strategy}")));
    }
    let combiner = match strategy {
        Strategy::Mean => CombinerSpec::Mean,
        Strategy::LRWeighted => CombinerSpec::LRWeighted(load_lr_weights(lr_weights.unwrap())?),
        Strategy::Govern => CombinerSpec::Govern,
        Strategy::GovernCA => CombinerSpec::GovernCA,
        Strategy::CAMKD => CombinerSpec::CAMKD,
    };
    execute_training(plan, manifest, manifest_flag.as_deref(), Some(combiner))
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    train: TrainFlags,
}

pub fn train_cmd(args: TrainArgs) -> AppResult<()> {
    let mut r = Resolver::new("train", args.train.config.as_deref())?;
    let manifest_flag = args.train.manifest.clone();
    let plan = resolve_training(&mut r, args.train, LossKind::CrossEntropy)?;
    let manifest = r.finish()?;
    execute_training(plan, manifest, manifest_flag.as_deref(), None)
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Labeled dataset to score
    #[arg(long)]
    input: Option<String>,
    /// Model file to evaluate
    #[arg(long)]
    model: Option<String>,
    /// Also write the report here
    #[arg(long)]
    out: Option<String>,
    /// Manifest path (default: <out>.manifest, else govern-evaluate.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

pub fn evaluate(args: EvaluateArgs) -> AppResult<()> {
    let mut r = Resolver::new("evaluate", args.config.as_deref())?;
    let input: String = r.required("input", args.input)?;
    let model_path: String = r.required("model", args.model)?;
    let out: Option<String> = r.optional("out", args.out)?;
    let manifest = r.finish()?;

    let data = load_dataset(&input, None)?;
    let model = load_model(&model_path)?;
    let scores = govern_core::student::score_dataset(&model, &data)?;
    let pairs = pairs_from_scores(&data, &scores)?;
    let qp = qp_pr_curve(&pairs)?;
    let q = q_pr_curve(&pairs)?;

    let mut questions = BTreeSet::new();
    let mut positive_questions = BTreeSet::new();
    let mut positive_pairs = 0usize;
    for record in data.records() {
        questions.insert(record.question_id.as_str());
        if record.label.map(|l| l.is_positive()).unwrap_or(false) {
            positive_questions.insert(record.question_id.as_str());
            positive_pairs += 1;
        }
    }

    let mut report = String::new();
    let _ = writeln!(
        report,
        "# r_at_p90: max recall over curve points with precision >= {R_AT_P_FLOOR}"
    );
    let _ = writeln!(report, "# prauc: step interpolation (average precision)");
    let _ = writeln!(
        report,
        "qp_r_at_p90={}",
        fmt_compact(recall_at_precision(&qp, R_AT_P_FLOOR))
    );
    let _ = writeln!(
        report,
        "q_r_at_p90={}",
        fmt_compact(recall_at_precision(&q, R_AT_P_FLOOR))
    );
    let _ = writeln!(report, "qp_prauc={}", fmt_compact(pr_auc(&qp)));
    let _ = writeln!(
        report,
        "counts=pairs:{} questions:{} positive_pairs:{} positive_questions:{}",
        data.len(),
        questions.len(),
        positive_pairs,
        positive_questions.len()
    );
    emit(&report, out.as_deref())?;
    manifest.write(&manifest.path(args.manifest.as_deref(), out.as_deref()))?;
    Ok(())
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(subcommand)]
    pub mode: SimulateCmd,
}

#[derive(Subcommand)]
pub enum SimulateCmd {
    /// Majority-vote accuracy for n voters of accuracy p
    Condorcet(CondorcetArgs),
    /// Sample a Beta scorer and compare with analytic moments
    Beta(BetaArgs),
    /// Per-trial single/mean/vote-selected target moments
    EnsembleSim(EnsembleSimArgs),
}

pub fn simulate(args: SimulateArgs) -> AppResult<()> {
    match args.mode {
        SimulateCmd::Condorcet(a) => condorcet(a),
        SimulateCmd::Beta(a) => beta(a),
        SimulateCmd::EnsembleSim(a) => ensemble_sim(a),
    }
}

#[derive(Args)]
pub struct CondorcetArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Per-voter accuracy in (0,1)
    #[arg(long)]
    p: Option<f64>,
    /// Odd voter count
    #[arg(long)]
    n: Option<u64>,
    /// Closed-form tail sum instead of Monte Carlo
    #[arg(long)]
    exact: bool,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report here
    #[arg(long)]
    out: Option<String>,
    /// Manifest path (default: <out>.manifest, else govern-simulate-condorcet.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

fn condorcet(args: CondorcetArgs) -> AppResult<()> {
    let mut r = Resolver::new("simulate condorcet", args.config.as_deref())?;
    let p: f64 = r.required("p", args.p)?;
    let n: u64 = r.required("n", args.n)?;
    let exact = r.switch("exact", args.exact)?;
    let trials: Option<u64> = r.optional("trials", args.trials)?;
    let seed: Option<u64> = r.optional("seed", args.seed)?;
    let out: Option<String> = r.optional("out", args.out)?;
    let manifest = r.finish()?;

    let report = if exact {
        let p0 = condorcet_exact(p, n).map_err(|e| usage(e.to_string()))?;
        format!("p0={}\n", fmt_compact(p0))
    } else {
        let trials =
            trials.ok_or_else(|| usage("Monte Carlo mode needs --trials (or pass --exact)"))?;
        let seed = seed.ok_or_else(|| usage("Monte Carlo mode needs an explicit --seed"))?;
        let p0 = condorcet_mc(p, n, trials, seed).map_err(|e| usage(e.to_string()))?;
        format!("p0_mc={}\n", fmt_compact(p0))
    };
    emit(&report, out.as_deref())?;
    manifest.write(&manifest.path(args.manifest.as_deref(), out.as_deref()))?;
    Ok(())
}

#[derive(Args)]
pub struct BetaArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    draws: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram file: bin_center<TAB>count, 100 bins on [0,1]
    #[arg(long)]
    histogram: Option<String>,
    /// Also write the report here
    #[arg(long)]
    out: Option<String>,
    /// Manifest path (default: <out>.manifest, else govern-simulate-beta.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

fn write_histogram(path: &str, hist: &Histogram) -> AppResult<()> {
    let mut s = String::new();
    for (center, count) in hist.rows() {
        let _ = writeln!(s, "{}\t{}", fmt_compact(center), count);
    }
    write_text(path, &s)
}

fn beta(args: BetaArgs) -> AppResult<()> {
    let mut r = Resolver::new("simulate beta", args.config.as_deref())?;
    let alpha: f64 = r.required("alpha", args.alpha)?;
    let beta: f64 = r.required("beta", args.beta)?;
    let draws: u64 = r.required("draws", args.draws)?;
    let seed: u64 = r.required("seed", args.seed)?;
    let histogram: Option<String> = r.optional("histogram", args.histogram)?;
    let out: Option<String> = r.optional("out", args.out)?;
    let manifest = r.finish()?;

    let spec = BetaSpec::new(alpha, beta).map_err(|e| usage(e.to_string()))?;
    if draws < 2 {
        return Err(usage("need at least 2 draws for a sample variance"));
    }
    let mut rng = stream(seed, 0);
    let mut samples = Vec::with_capacity(draws as usize);
    let mut hist = Histogram::new();
    for _ in 0..draws {
        let x = beta_sample(spec, &mut rng).value();
        samples.push(x);
        hist.push(x);
    }
    let mean = samples.iter().sum::<f64>() / draws as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (draws - 1) as f64;

    let mut report = String::new();
    let _ = writeln!(report, "draws={draws}");
    let _ = writeln!(report, "sample_mean={}", fmt_compact(mean));
    let _ = writeln!(report, "sample_variance={}", fmt_compact(var));
    let _ = writeln!(report, "analytic_mean={}", fmt_compact(spec.mean()));
    let _ = writeln!(report, "analytic_variance={}", fmt_compact(spec.variance()));
    emit(&report, out.as_deref())?;
    if let Some(path) = &histogram {
        write_histogram(path, &hist)?;
    }
    manifest.write(&manifest.path(args.manifest.as_deref(), out.as_deref()))?;
    Ok(())
}

#[derive(Args)]
pub struct EnsembleSimArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Student Beta spec alpha,beta
    #[arg(long)]
    student: Option<String>,
    /// Teacher Beta specs joined by `;`, `Kx` repeats: 10x20,2
    #[arg(long)]
    teachers: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Histogram file of one strategy's targets
    #[arg(long)]
    histogram: Option<String>,
    /// single_teacher | mean_ensemble | govern_ensemble
    #[arg(long = "histogram-strategy")]
    histogram_strategy: Option<String>,
    /// Also write the report here
    #[arg(long)]
    out: Option<String>,
    /// Manifest path (default: <out>.manifest, else govern-simulate-ensemble-sim.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

fn ensemble_sim(args: EnsembleSimArgs) -> AppResult<()> {
    let mut r = Resolver::new("simulate ensemble-sim", args.config.as_deref())?;
    let student_raw: String = r.required("student", args.student)?;
    let teachers_raw: String = r.required("teachers", args.teachers)?;
    let trials: u64 = r.required("trials", args.trials)?;
    let seed: u64 = r.required("seed", args.seed)?;
    let histogram: Option<String> = r.optional("histogram", args.histogram)?;
    let hist_strategy: String = r.or_default(
        "histogram-strategy",
        args.histogram_strategy,
        "govern_ensemble".to_string(),
    )?;
    let out: Option<String> = r.optional("out", args.out)?;
    let manifest = r.finish()?;

    let student = parse_beta(&student_raw)?;
    let teachers = parse_beta_list(&teachers_raw)?;
    let hist_index = match hist_strategy.as_str() {
        "single_teacher" => 0,
        "mean_ensemble" => 1,
        "govern_ensemble" => 2,
        other => {
            return Err(usage(format!(
                "unknown histogram strategy {other:?}, expected single_teacher|mean_ensemble|govern_ensemble"
            )))
        }
    };
    let sim = run_ensemble_sim_full(student, &teachers, trials, seed)
        .map_err(|e| usage(e.to_string()))?;

    let mut report = String::new();
    let _ = writeln!(report, "trials={trials}");
    for res in &sim.results {
        let _ = writeln!(report, "{}_mean={}", res.strategy, fmt_compact(res.mean));
        let _ = writeln!(
            report,
            "{}_variance={}",
            res.strategy,
            fmt_compact(res.variance)
        );
    }
    emit(&report, out.as_deref())?;
    if let Some(path) = &histogram {
        write_histogram(path, &sim.histograms[hist_index])?;
    }
    manifest.write(&manifest.path(args.manifest.as_deref(), out.as_deref()))?;
    Ok(())
}

#[derive(Args)]
pub struct GsbArgs {
    /// Config file with `key = value` lines; flags override it
    #[arg(long)]
    config: Option<String>,
    /// Good, Same, Bad counts
    #[arg(value_name = "GOOD")]
    good: Option<u64>,
    #[arg(value_name = "SAME")]
    same: Option<u64>,
    #[arg(value_name = "BAD")]
    bad: Option<u64>,
    /// Also write the report here
    #[arg(long)]
    out: Option<String>,
    /// Manifest path (default: govern-gsb.manifest)
    #[arg(long)]
    manifest: Option<String>,
}

pub fn gsb(args: GsbArgs) -> AppResult<()> {
    let mut r = Resolver::new("gsb", args.config.as_deref())?;
    let good: u64 = r.required("good", args.good)?;
    let same: u64 = r.required("same", args.same)?;
    let bad: u64 = r.required("bad", args.bad)?;
    let out: Option<String> = r.optional("out", args.out)?;
    let manifest = r.finish()?;

    let delta = gsb_delta(&GSBCounts { good, same, bad }).map_err(|e| usage(e.to_string()))?;
    emit(&format!("delta_gsb={}\n", fmt_compact(delta)), out.as_deref())?;
    manifest.write(&manifest.path(args.manifest.as_deref(), out.as_deref()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_list_supports_repeats() {
        let specs = parse_beta_list("10x20,2;19,3").unwrap();
        assert_eq!(specs.len(), 11);
        assert_eq!(specs[0].alpha(), 20.0);
        assert_eq!(specs[9].beta(), 2.0);
        assert_eq!(specs[10].alpha(), 19.0);

        assert!(parse_beta_list("20").is_err());
        assert!(parse_beta_list("0,2").is_err());
        assert!(parse_beta_list("x1,2").is_err());
    }

    #[test]
    fn teacher_specs_parse() {
        let qs = parse_teachers("0.05:12,3:3,12;2x0.25:8,4:4,8").unwrap();
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[0].flip_rate, 0.05);
        assert_eq!(qs[1].flip_rate, 0.25);
        assert_eq!(qs[2].sharp_pos.alpha(), 8.0);

        assert!(parse_teachers("0.05:12,3").is_err());
        assert!(parse_teachers("0.7:1,1:1,1").is_err());
    }

    #[test]
    fn arch_parses_sizes() {
        assert_eq!(parse_arch("8,16,1").unwrap(), vec![8, 16, 1]);
        assert!(parse_arch("8,,1").is_err());
        assert!(parse_arch("8;1").is_err());
    }
}
