//! `puli` — corpus forging, training, evaluation, streaming, and judging
//! from one entry point. Every run writes a manifest (config snapshot, seed,
//! input hashes) next to its outputs, so results are reproducible from the
//! manifest alone.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use puli::config::{hash_file, Manifest, RunConfig};
use puli::corpus::{self, Split};
use puli::forge;
use puli::gateway::{Gateway, HttpTransport, JudgeOutcome};
use puli::learners::{ObserverBackend, PresenterBackend};
use puli::memory::ExtractiveSummarizer;
use puli::metrics;
use puli::runtime::{self, GateMode};
use puli::trainloop;

#[derive(Parser)]
#[command(name = "puli", version, about = "Learning-to-intervene engine for scientific dialogues")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (sectioned key = value format).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override applied to the relevant section.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Produce corpora: deterministic synthetic or LLM-backed.
    Forge {
        #[command(subcommand)]
        kind: ForgeKind,
    },
    /// Run the end-to-end training loop on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate trained artifacts: timing and content blocks, optional λ
    /// sweep and conclusion regeneration.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        /// Split to evaluate (validation or test).
        #[arg(long, default_value = "test")]
        split: String,
        /// Rerun training once per λ in [train].lambda_sweep and report the
        /// final metrics per value.
        #[arg(long)]
        sweep: bool,
        /// Regenerate dialogue conclusions through the gateway and score
        /// them against golden conclusions (requires credentials).
        #[arg(long)]
        conclude: bool,
        /// Cap on dialogues scored with --conclude.
        #[arg(long, default_value_t = 8)]
        max_dialogues: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Stream dialogues through the inference gate, emitting a JSONL event
    /// transcript.
    Stream {
        /// Corpus file holding the dialogue(s) to stream.
        #[arg(long)]
        dialogue: PathBuf,
        #[arg(long)]
        artifacts: PathBuf,
        /// Stream only this dialogue id (default: all in the file).
        #[arg(long)]
        dialogue_id: Option<String>,
        /// Regenerate and score a conclusion from the augmented context.
        #[arg(long)]
        conclude: bool,
        /// Transcript output file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write per-round decision latencies (ms, one per line) here.
        #[arg(long)]
        timings: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Ask the judge model to pick the best candidate conclusion.
    Judge {
        /// File holding the golden conclusion.
        #[arg(long)]
        golden: PathBuf,
        /// Directory of candidate files; each file stem names its method.
        #[arg(long)]
        candidates: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Subcommand)]
enum ForgeKind {
    /// Deterministic synthetic corpus with planted goal drift.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// LLM-backed pipeline over extracted paper texts.
    Llm {
        /// Directory of .txt paper files.
        #[arg(long)]
        papers: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of prompt templates (default templates if omitted).
        #[arg(long)]
        prompts: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write the default prompt templates to a directory for editing.
    InitPrompts {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.train.seed = seed;
        config.synth.seed = seed;
    }
    Ok(config)
}

fn build_gateway(config: &RunConfig) -> Result<Arc<Gateway>> {
    let transport = HttpTransport::from_config(&config.gateway)?;
    Ok(Arc::new(Gateway::new(
        Arc::new(transport),
        config.gateway.clone(),
    )))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: u64,
    config: &RunConfig,
    inputs: &[(&str, &Path)],
) -> Result<()> {
    let mut hashed = Vec::new();
    for (name, path) in inputs {
        let hash = hash_file(path).with_context(|| format!("hashing {}", path.display()))?;
        hashed.push((name.to_string(), hash));
    }
    Manifest {
        command: command.to_string(),
        seed,
        config: config.clone(),
        inputs: hashed,
    }
    .write(dir)
    .context("writing manifest")?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("puli: {error:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Forge { kind } => run_forge(kind),
        Command::Train { corpus, out, common } => run_train(&corpus, &out, &common),
        Command::Eval {
            corpus,
            artifacts,
            split,
            sweep,
            conclude,
            max_dialogues,
            out,
            common,
        } => run_eval(
            &corpus,
            &artifacts,
            &split,
            sweep,
            conclude,
            max_dialogues,
            out.as_deref(),
            &common,
        ),
        Command::Stream {
            dialogue,
            artifacts,
            dialogue_id,
            conclude,
            out,
            timings,
            common,
        } => run_stream(
            &dialogue,
            &artifacts,
            dialogue_id.as_deref(),
            conclude,
            out.as_deref(),
            timings.as_deref(),
            &common,
        ),
        Command::Judge {
            golden,
            candidates,
            common,
        } => run_judge(&golden, &candidates, &common),
        Command::Stats { corpus } => {
            let corpus = corpus::load_corpus(&corpus)?;
            print!("{}", corpus::corpus_stats(&corpus));
            Ok(())
        }
    }
}

fn run_forge(kind: ForgeKind) -> Result<()> {
    match kind {
        ForgeKind::Synth { out, common } => {
            let config = load_config(&common)?;
            let corpus = forge::synth_corpus(&config.synth)?;
            corpus::write_corpus(&corpus, &out)?;
            if let Some(dir) = out.parent() {
                write_manifest(dir, "forge-synth", config.synth.seed, &config, &[])?;
            }
            println!(
                "wrote {} dialogues ({} proposals) to {}",
                corpus.len(),
                corpus.proposals().count(),
                out.display()
            );
            Ok(())
        }
        ForgeKind::Llm {
            papers,
            out,
            prompts,
            common,
        } => {
            let config = load_config(&common)?;
            let prompt_set = match &prompts {
                Some(dir) => forge::ForgePrompts::load_dir(dir)?,
                None => forge::ForgePrompts::default(),
            };
            let paper_texts = forge::load_papers(&papers)?;
            let gateway = build_gateway(&config)?;
            let seed = common.seed.unwrap_or(config.synth.seed);
            let (corpus, warnings) =
                forge::llm_forge(&paper_texts, &prompt_set, &gateway, &config.forge, seed)?;
            for warning in &warnings {
                eprintln!("warning: {warning}");
            }
            corpus::write_corpus(&corpus, &out)?;
            if let Some(dir) = out.parent() {
                write_manifest(dir, "forge-llm", seed, &config, &[("papers", papers.as_path())])?;
            }
            println!(
                "wrote {} dialogues from {} papers to {} ({} dropped)",
                corpus.len(),
                paper_texts.len(),
                out.display(),
                warnings.len()
            );
            Ok(())
        }
        ForgeKind::InitPrompts { out } => {
            forge::ForgePrompts::default().write_dir(&out)?;
            println!("wrote default prompt templates to {}", out.display());
            Ok(())
        }
    }
}

fn run_train(corpus_path: &Path, out: &Path, common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let corpus = corpus::load_corpus(corpus_path)?;
    let gateway = match config.train.backend {
        trainloop::BackendKind::Remote => Some(build_gateway(&config)?),
        trainloop::BackendKind::Surrogate => None,
    };
    write_manifest(
        out,
        "train",
        config.train.seed,
        &config,
        &[("corpus", corpus_path)],
    )?;
    let artifacts = trainloop::train(config.train.clone(), &corpus, gateway, Some(out))?;
    let last = artifacts
        .state
        .metrics_log_lines()
        .last()
        .expect("pretrain logged");
    println!(
        "trained {} epochs: z0={:.4} l0={:.4} -> z={:.4} l={:.4}; artifacts in {}",
        artifacts.reports.len(),
        artifacts.z0,
        artifacts.l0,
        last.z,
        last.l,
        out.display()
    );
    Ok(())
}

struct EvalData {
    timing_preds: Vec<bool>,
    timing_labels: Vec<bool>,
    rouge_scores: Vec<f64>,
    bleu_scores: Vec<f64>,
}

fn eval_artifacts(
    corpus: &corpus::Corpus,
    loaded: &trainloop::LoadedArtifacts,
    split: Split,
    max_summary_tokens: usize,
) -> Result<EvalData> {
    let pu = corpus::assemble_pu(corpus, split, 4, 0)?;
    let mut timing_preds = Vec::new();
    let mut timing_labels = Vec::new();
    let mut rouge_scores = Vec::new();
    let mut bleu_scores = Vec::new();
    for (round_ref, label) in pu
        .positives
        .iter()
        .map(|r| (r, true))
        .chain(pu.negatives_eval.iter().map(|r| (r, false)))
    {
        let dialogue = corpus.dialogue(&round_ref.dialogue_id).expect("pu round");
        let proposal = corpus.proposal_for(dialogue);
        let summarizer = ExtractiveSummarizer::new(&proposal.goal, max_summary_tokens);
        let memory =
            puli::memory::assemble(proposal, &dialogue.rounds, round_ref.t, &summarizer, None)?;
        let text = memory.render();
        let prob = loaded.observer.predict(&text)?;
        timing_preds.push(prob >= 0.5);
        timing_labels.push(label);
        if label {
            let round = corpus.round(round_ref).expect("pu round");
            if let corpus::RoundLabel::Positive { intervention } = &round.label {
                let generated = loaded.presenter.generate(&text)?;
                let cand = metrics::tokenize(&generated);
                let reference = metrics::tokenize(&intervention.content);
                rouge_scores.push(metrics::rouge1(&cand, &reference).unwrap_or(0.0));
                bleu_scores.push(metrics::bleu1(&cand, &reference).unwrap_or(0.0));
            }
        }
    }
    Ok(EvalData {
        timing_preds,
        timing_labels,
        rouge_scores,
        bleu_scores,
    })
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn run_eval(
    corpus_path: &Path,
    artifacts_dir: &Path,
    split: &str,
    sweep: bool,
    conclude: bool,
    max_dialogues: usize,
    out: Option<&Path>,
    common: &CommonArgs,
) -> Result<()> {
    let config = load_config(common)?;
    let corpus = corpus::load_corpus(corpus_path)?;
    let split: Split = split
        .parse()
        .map_err(|e: String| anyhow::anyhow!(e))?;
    let loaded = trainloop::load_artifacts(artifacts_dir)?;

    let data = eval_artifacts(&corpus, &loaded, split, config.train.max_summary_tokens)?;
    let report = metrics::classify_metrics(&data.timing_preds, &data.timing_labels)?;

    let mut output = String::new();
    output.push_str(&format!("== {split} split ==\n"));
    output.push_str("Intervention Timing Classification (%)\n");
    output.push_str("  Accuracy  Recall  Precision  F1\n");
    output.push_str(&format!(
        "  {:>8.1}  {:>6.1}  {:>9.1}  {:>4.1}\n",
        report.accuracy * 100.0,
        report.recall * 100.0,
        report.precision * 100.0,
        report.f1 * 100.0
    ));
    output.push_str("Intervention Content Quality (%)\n");
    output.push_str("  ROUGE-1  BLEU-1\n");
    output.push_str(&format!(
        "  {:>7.1}  {:>6.1}\n",
        mean(&data.rouge_scores) * 100.0,
        mean(&data.bleu_scores) * 100.0
    ));

    if conclude {
        let gateway = build_gateway(&config)?;
        let summary_tokens = config.train.max_summary_tokens;
        let observer = Arc::new(loaded.observer.clone());
        let presenter = Arc::new(loaded.presenter.clone());
        let mut standard = Vec::new();
        let mut intervened = Vec::new();
        for dialogue in corpus.dialogues_in(split).take(max_dialogues) {
            let proposal = corpus.proposal_for(dialogue);
            let Some(golden) = proposal.golden_conclusion.clone() else {
                continue; // no reference to score against
            };
            for (gate, bucket) in [
                (GateMode::Silent, &mut standard),
                (GateMode::Observer, &mut intervened),
            ] {
                let replay = runtime::replay(
                    proposal,
                    dialogue,
                    Box::new(ExtractiveSummarizer::new(&proposal.goal, summary_tokens)),
                    observer.clone(),
                    presenter.clone(),
                    Some(loaded.policy.clone()),
                    gate,
                )?;
                let conclusion =
                    runtime::regenerate_conclusion(&gateway, proposal, &replay.transcript)?;
                let (rouge, bleu) = runtime::score_conclusion(&conclusion, &golden);
                bucket.push((rouge, bleu));
            }
        }
        let summarize = |rows: &[(f64, f64)]| {
            let rouge: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let bleu: Vec<f64> = rows.iter().map(|r| r.1).collect();
            (mean(&rouge) * 100.0, mean(&bleu) * 100.0)
        };
        let (sr, sb) = summarize(&standard);
        let (ir, ib) = summarize(&intervened);
        output.push_str("Conclusion Quality vs Golden (%)\n");
        output.push_str("  Method      ROUGE-1  BLEU-1\n");
        output.push_str(&format!("  Standard    {sr:>7.1}  {sb:>6.1}\n"));
        output.push_str(&format!("  Intervened  {ir:>7.1}  {ib:>6.1}\n"));
    }

    if sweep {
        let lambdas = config
            .train
            .lambda_sweep
            .clone()
            .unwrap_or_else(|| (1..10).map(|i| i as f64 / 10.0).collect());
        let points = trainloop::lambda_sweep(&config.train, &corpus, &lambdas, None)?;
        output.push_str("Lambda sweep (final validation metrics per λ)\n");
        output.push_str("  lambda  z_final  l_final\n");
        for point in points {
            output.push_str(&format!(
                "  {:>6.2}  {:>7.4}  {:>7.4}\n",
                point.lambda, point.final_z, point.final_l
            ));
        }
    }

    print!("{output}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("eval.txt"), &output)?;
        write_manifest(
            dir,
            "eval",
            config.train.seed,
            &config,
            &[("corpus", corpus_path)],
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_stream(
    dialogue_path: &Path,
    artifacts_dir: &Path,
    dialogue_id: Option<&str>,
    conclude: bool,
    out: Option<&Path>,
    timings: Option<&Path>,
    common: &CommonArgs,
) -> Result<()> {
    let config = load_config(common)?;
    let corpus = corpus::load_corpus(dialogue_path)?;
    let loaded = trainloop::load_artifacts(artifacts_dir)?;
    let observer = Arc::new(loaded.observer);
    let presenter = Arc::new(loaded.presenter);

    let mut transcript_out = String::new();
    let mut latencies = Vec::new();
    let mut streamed = 0usize;
    for dialogue in corpus.dialogues() {
        if let Some(id) = dialogue_id {
            if dialogue.id != id {
                continue;
            }
        }
        let proposal = corpus.proposal_for(dialogue);
        let replay = runtime::replay(
            proposal,
            dialogue,
            Box::new(ExtractiveSummarizer::new(
                &proposal.goal,
                config.train.max_summary_tokens,
            )),
            observer.clone(),
            presenter.clone(),
            Some(loaded.policy.clone()),
            config.stream_gate,
        )?;
        streamed += 1;
        transcript_out.push_str(&replay.transcript_jsonl());
        latencies.extend(replay.latency_report());
        if conclude {
            let gateway = build_gateway(&config)?;
            if let Some(golden) = &proposal.golden_conclusion {
                let conclusion =
                    runtime::regenerate_conclusion(&gateway, proposal, &replay.transcript)?;
                let (rouge, bleu) = runtime::score_conclusion(&conclusion, golden);
                eprintln!(
                    "{}: conclusion ROUGE-1 {:.4}, BLEU-1 {:.4}",
                    dialogue.id, rouge, bleu
                );
            } else {
                eprintln!("{}: no golden conclusion to score against", dialogue.id);
            }
        }
    }
    if streamed == 0 {
        bail!(
            "no dialogue matched{}",
            dialogue_id.map(|id| format!(" id {id}")).unwrap_or_default()
        );
    }
    match out {
        Some(path) => {
            std::fs::write(path, &transcript_out)?;
            if let Some(dir) = path.parent() {
                write_manifest(
                    dir,
                    "stream",
                    config.train.seed,
                    &config,
                    &[("dialogue", dialogue_path)],
                )?;
            }
        }
        None => print!("{transcript_out}"),
    }
    if let Some(path) = timings {
        let rendered: String = latencies.iter().map(|ms| format!("{ms}\n")).collect();
        std::fs::write(path, rendered)?;
    }
    Ok(())
}

fn run_judge(golden_path: &Path, candidates_dir: &Path, common: &CommonArgs) -> Result<()> {
    let config = load_config(common)?;
    let golden = std::fs::read_to_string(golden_path)
        .with_context(|| format!("reading {}", golden_path.display()))?;
    let mut candidates = BTreeMap::new();
    for entry in std::fs::read_dir(candidates_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let method = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("unnamed")
            .to_string();
        candidates.insert(method, std::fs::read_to_string(&path)?);
    }
    let gateway = build_gateway(&config)?;
    let seed = common.seed.unwrap_or(0);
    match gateway.judge(&golden, &candidates, seed)? {
        JudgeOutcome::Winner(method) => println!("winner: {method}"),
        JudgeOutcome::Abstain { raw } => println!("abstain (unparseable verdict {raw:?})"),
    }
    Ok(())
}
