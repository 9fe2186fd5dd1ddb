use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use maskpolicy::corpus::{build_vocab as build_corpus_vocab, load_anchor_dataset, read_anchor_records, read_documents, Vocab};
use maskpolicy::corruption::{mask_corpus as mask_documents, read_examples_jsonl, write_examples_jsonl, PolicySpec};
use maskpolicy::evaluation::{
    answer_coverage, compare_policies, span_hit_metrics, LearnedProposer, PolicyReport, RandomSpanProposer,
    SalientProposer, SpanProposer,
};
use maskpolicy::policy::{check_policy_gradients, train_policy as train, Checkpoint, DeploymentMode, PolicyDims};
use maskpolicy::{PolicyParams, Span};

use crate::config::{set, set_list, PolicyKind, RunConfig, DEFAULT_VOCAB_MAX_SIZE};
use crate::manifest::Manifest;
use crate::{BuildVocabArgs, CompareArgs, Common, EvalArgs, GradCheckArgs, MaskArgs, TrainArgs, UsageError};

const DEFAULT_MAX_SPAN_LEN: usize = 10;
const DEFAULT_CHUNK_LEN: usize = 128;
const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

fn load_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, common.seed);
    set(&mut cfg.out, common.out.clone());
    Ok(cfg)
}

fn require<T: Clone>(value: &Option<T>, flag: &str) -> anyhow::Result<T> {
    value
        .clone()
        .ok_or_else(|| UsageError(format!("missing required {flag}")).into())
}

fn require_files(paths: &[&Path]) -> anyhow::Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
    }
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let out = require(&cfg.out, "--out")?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn config_json(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn build_vocab(args: BuildVocabArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?;
    set_list(&mut cfg.corpus, args.corpus);
    set(&mut cfg.vocab_max_size, args.max_size);
    set(&mut cfg.vocab_min_freq, args.min_freq);
    if cfg.corpus.is_empty() {
        return Err(UsageError("missing required --corpus".into()).into());
    }
    let out = prepare_out(&cfg)?;
    require_files(&cfg.corpus.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;

    let max_size = cfg.vocab_max_size.unwrap_or(DEFAULT_VOCAB_MAX_SIZE);
    let min_freq = cfg.vocab_min_freq.unwrap_or(1);
    let vocab = build_corpus_vocab(&cfg.corpus, max_size, min_freq)?;
    info!("vocabulary of {} entries, hash {}", vocab.len(), vocab.hash());

    let mut manifest = Manifest::new("build-vocab", config_json(&cfg));
    for p in &cfg.corpus {
        manifest.input(p)?;
    }
    manifest.write_artifact(&out, "vocab.txt", vocab.to_file_string().as_bytes())?;
    manifest.save(&out)
}

pub fn train_policy(args: TrainArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?;
    set(&mut cfg.train, args.train);
    set(&mut cfg.valid, args.valid);
    set(&mut cfg.vocab, args.vocab);
    set(&mut cfg.max_span_len, args.max_span_len);
    if let Some(seed) = cfg.seed {
        cfg.training.seed = seed;
    }
    if let Some(m) = cfg.max_span_len {
        cfg.training.max_span_len = m;
    }
    if let Some(e) = args.epochs {
        cfg.training.epochs = e;
    }
    let train_path = require(&cfg.train, "--train")?;
    let valid_path = require(&cfg.valid, "--valid")?;
    let out = prepare_out(&cfg)?;
    let mut inputs = vec![train_path.as_path(), valid_path.as_path()];
    if let Some(v) = &cfg.vocab {
        inputs.push(v);
    }
    require_files(&inputs)?;
    cfg.training.validate()?;

    let vocab = match &cfg.vocab {
        Some(p) => Vocab::load(p)?,
        None => {
            let records = read_anchor_records(&train_path)?;
            let max_size = cfg.vocab_max_size.unwrap_or(DEFAULT_VOCAB_MAX_SIZE);
            Vocab::from_texts(records.iter().map(|r| r.context.as_str()), max_size, cfg.vocab_min_freq.unwrap_or(1))?
        }
    };
    let (train_set, train_report) = load_anchor_dataset(&train_path, &vocab)?;
    let (valid_set, valid_report) = load_anchor_dataset(&valid_path, &vocab)?;
    for (name, r) in [("train", &train_report), ("valid", &valid_report)] {
        if r.skipped > 0 {
            warn!("{name}: skipped {} records whose answer is not in the context", r.skipped);
        }
        info!("{name}: {} examples", r.loaded);
    }

    let (params, log) = train::<f64>(&train_set, &valid_set, vocab.len(), &cfg.training)?;
    info!("selected epoch {}", log.chosen_epoch);

    let checkpoint = Checkpoint::from_params(&params, &cfg.training, &vocab);
    let mut log_bytes = Vec::new();
    log.write_jsonl(&mut log_bytes)?;

    let mut manifest = Manifest::new("train-policy", config_json(&cfg));
    manifest.seed("training", cfg.training.seed);
    for p in inputs {
        manifest.input(p)?;
    }
    manifest.write_artifact(&out, "checkpoint.json", checkpoint.to_json().as_bytes())?;
    manifest.write_artifact(&out, "training_log.jsonl", &log_bytes)?;
    manifest.write_artifact(&out, "vocab.txt", vocab.to_file_string().as_bytes())?;
    manifest.save(&out)
}

pub fn eval_policy(args: EvalArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?;
    set(&mut cfg.dev, args.dev);
    set(&mut cfg.policy, args.policy);
    set(&mut cfg.checkpoint, args.checkpoint);
    set(&mut cfg.vocab, args.vocab);
    set(&mut cfg.max_span_len, args.max_span_len);
    set(&mut cfg.masked, args.masked);
    let dev_path = require(&cfg.dev, "--dev")?;
    let policy = require(&cfg.policy, "--policy")?;
    if policy == PolicyKind::Random15 {
        return Err(UsageError("--policy random15 masks tokens, not spans; use randomspan".into()).into());
    }
    let checkpoint_path = match policy {
        PolicyKind::Learned => Some(require(&cfg.checkpoint, "--checkpoint")?),
        _ => None,
    };
    if policy == PolicyKind::Learned {
        require(&cfg.vocab, "--vocab")?;
    }
    let out = prepare_out(&cfg)?;
    let mut inputs: Vec<&Path> = vec![&dev_path];
    inputs.extend(cfg.vocab.as_deref());
    inputs.extend(checkpoint_path.as_deref());
    inputs.extend(cfg.masked.as_deref());
    require_files(&inputs)?;

    let seed = cfg.seed.unwrap_or(0);
    let max_span_len = cfg.max_span_len.unwrap_or(DEFAULT_MAX_SPAN_LEN);
    let vocab = match &cfg.vocab {
        Some(p) => Vocab::load(p)?,
        None => {
            let records = read_anchor_records(&dev_path)?;
            Vocab::from_texts(records.iter().map(|r| r.context.as_str()), DEFAULT_VOCAB_MAX_SIZE, 1)?
        }
    };
    let (dev, load) = load_anchor_dataset(&dev_path, &vocab)?;
    if load.skipped > 0 {
        warn!("dev: skipped {} records whose answer is not in the context", load.skipped);
    }

    let params: Option<(PolicyParams, usize)> = match &checkpoint_path {
        Some(p) => {
            let ckpt = Checkpoint::load_verified(p, &vocab)?;
            Some((ckpt.to_params()?, ckpt.hyperparameters.max_input_len))
        }
        None => None,
    };
    let proposer: Box<dyn SpanProposer + '_> = match (&params, policy) {
        (Some((p, max_len)), _) => Box::new(LearnedProposer::new(p, *max_len)),
        (None, PolicyKind::Salient) => Box::new(SalientProposer { seed }),
        (None, _) => Box::new(RandomSpanProposer { seed }),
    };
    let mut report = span_hit_metrics(proposer.as_ref(), &dev, max_span_len)?;

    let mut manifest = Manifest::new("eval-policy", config_json(&cfg));
    manifest.seed("evaluation", seed);
    if let Some(masked) = &cfg.masked {
        let text = fs::read_to_string(masked).with_context(|| format!("reading {}", masked.display()))?;
        let examples = read_examples_jsonl(&text).with_context(|| format!("parsing {}", masked.display()))?;
        let mut answers: Vec<String> = dev.iter().map(|e| e.answer.clone()).collect();
        answers.sort();
        answers.dedup();
        let coverage = answer_coverage(&examples, &answers, &vocab)?;
        report.answer_coverage = Some(coverage.coverage);
        manifest.write_artifact(&out, "coverage.json", (serde_json::to_string_pretty(&coverage)? + "\n").as_bytes())?;
    }
    eprintln!(
        "{}: em@1 {:.4}  em@5 {:.4}  f1@1 {:.4}  n {}",
        report.policy, report.em_at_1, report.em_at_5, report.token_f1_at_1, report.n
    );
    for p in inputs {
        manifest.input(p)?;
    }
    manifest.write_artifact(&out, "report.json", (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    manifest.save(&out)
}

pub fn mask_corpus(args: MaskArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?;
    set_list(&mut cfg.corpus, args.corpus);
    set(&mut cfg.vocab, args.vocab);
    set(&mut cfg.policy, args.policy);
    set(&mut cfg.checkpoint, args.checkpoint);
    set(&mut cfg.mode, args.mode.map(DeploymentMode::from));
    set(&mut cfg.max_span_len, args.max_span_len);
    set(&mut cfg.chunk_len, args.chunk_len);
    set(&mut cfg.workers, args.workers);
    if cfg.corpus.is_empty() {
        return Err(UsageError("missing required --corpus".into()).into());
    }
    let vocab_path = require(&cfg.vocab, "--vocab")?;
    let policy = require(&cfg.policy, "--policy")?;
    let checkpoint_path = match policy {
        PolicyKind::Learned => Some(require(&cfg.checkpoint, "--checkpoint")?),
        _ => None,
    };
    let out = prepare_out(&cfg)?;
    let mut inputs: Vec<&Path> = cfg.corpus.iter().map(PathBuf::as_path).collect();
    inputs.push(&vocab_path);
    inputs.extend(checkpoint_path.as_deref());
    require_files(&inputs)?;

    let seed = cfg.seed.unwrap_or(0);
    let max_span_len = cfg.max_span_len.unwrap_or(DEFAULT_MAX_SPAN_LEN);
    let chunk_len = cfg.chunk_len.unwrap_or(DEFAULT_CHUNK_LEN);
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mode = cfg.mode.unwrap_or(DeploymentMode::Top1);

    let vocab = Vocab::load(&vocab_path)?;
    let docs = read_documents(&cfg.corpus)?;
    info!("{} documents", docs.len());

    let learned = match &checkpoint_path {
        Some(p) => {
            let ckpt = Checkpoint::load_verified(p, &vocab)?;
            let params: PolicyParams = ckpt.to_params()?;
            Some((ckpt, params))
        }
        None => None,
    };
    let spec: PolicySpec<'_, f64> = match (&learned, policy) {
        (Some((ckpt, params)), _) => PolicySpec::learned(ckpt, params, &vocab, mode, max_span_len)?,
        (None, PolicyKind::Random15) => PolicySpec::random15(),
        (None, PolicyKind::Salient) => PolicySpec::Salient { max_span_len },
        (None, _) => PolicySpec::RandomSpan { max_span_len },
    };
    let run = mask_documents(&docs, &vocab, &spec, chunk_len, seed, workers)?;
    if run.examples.is_empty() {
        warn!("no examples emitted; documents shorter than a quarter of --chunk-len {chunk_len} are dropped");
    }
    info!(
        "{} examples, masked-token rate {:.4}, {} chunks skipped",
        run.summary.chunks, run.summary.masked_token_rate, run.skipped
    );

    let mut examples = Vec::new();
    write_examples_jsonl(&run.examples, &mut examples)?;
    let mut manifest = Manifest::new("mask-corpus", config_json(&cfg));
    manifest.seed("global", seed);
    for p in inputs {
        manifest.input(p)?;
    }
    manifest.write_artifact(&out, "masked.jsonl", &examples)?;
    manifest.write_artifact(&out, "summary.json", (run.summary.to_json() + "\n").as_bytes())?;
    manifest.save(&out)
}

pub fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?;
    set_list(&mut cfg.reports, args.reports);
    if cfg.reports.is_empty() {
        return Err(UsageError("missing required --reports".into()).into());
    }
    let out = prepare_out(&cfg)?;
    require_files(&cfg.reports.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;

    let mut reports = Vec::new();
    for p in &cfg.reports {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: PolicyReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        reports.push(r);
    }
    let cmp = compare_policies(&reports)?;
    eprint!("{}", cmp.table);

    let mut manifest = Manifest::new("compare", config_json(&cfg));
    for p in &cfg.reports {
        manifest.input(p)?;
    }
    manifest.write_artifact(&out, "comparison.txt", cmp.table.as_bytes())?;
    manifest.write_artifact(&out, "comparison.json", (cmp.to_json() + "\n").as_bytes())?;
    manifest.save(&out)
}

#[derive(serde::Serialize)]
struct GradCheckSummary {
    instances: usize,
    base_seed: u64,
    tolerance: f64,
    max_relative_error: f64,
    worst_seed: u64,
    passed: bool,
}

pub fn grad_check(args: GradCheckArgs) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.common)?;
    set(&mut cfg.seeds, args.seeds);
    let out = prepare_out(&cfg)?;
    let base_seed = cfg.seed.unwrap_or(0);
    let instances = cfg.seeds.unwrap_or(100);
    if instances == 0 {
        return Err(UsageError("--seeds must be positive".into()).into());
    }

    let mut worst = (0.0f64, base_seed);
    for i in 0..instances as u64 {
        let seed = base_seed.wrapping_add(i);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = PolicyDims {
            vocab_size: 12,
            embedding_dim: 4,
            hidden_dim: 3,
            num_layers: 2,
        };
        let params = PolicyParams::random(dims, 0.5, &mut rng);
        let len = rng.gen_range(1..=12);
        let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..dims.vocab_size as u32)).collect();
        let start = rng.gen_range(0..len);
        let end = rng.gen_range(start..len);
        let report = check_policy_gradients(&params, &[(&ids, Span::new(start, end))], 1e-6)?;
        if report.max_relative_error > worst.0 {
            worst = (report.max_relative_error, seed);
        }
    }
    let summary = GradCheckSummary {
        instances,
        base_seed,
        tolerance: GRAD_CHECK_TOLERANCE,
        max_relative_error: worst.0,
        worst_seed: worst.1,
        passed: worst.0 < GRAD_CHECK_TOLERANCE,
    };
    eprintln!(
        "{} instances, max relative error {:.3e} (seed {})",
        instances, worst.0, worst.1
    );
    let mut manifest = Manifest::new("grad-check", config_json(&cfg));
    manifest.seed("base", base_seed);
    manifest.write_artifact(&out, "gradcheck.json", (serde_json::to_string_pretty(&summary)? + "\n").as_bytes())?;
    manifest.save(&out)?;
    if !summary.passed {
        bail!("relative error {:.3e} exceeds {GRAD_CHECK_TOLERANCE:e}", worst.0);
    }
    Ok(())
}
