//! End-to-end training: pretrain both learners treating unlabeled rounds as
//! negative, then per epoch let the coordinator select intervene/silent over
//! every unlabeled round, refit the learners on the induced partition,
//! convert validation deltas into a reward, and apply one REINFORCE update.
//!
//! Everything is seeded: the unlabeled iteration order is a fresh seeded
//! shuffle per epoch, action sampling draws from the same master stream, and
//! learner refits are warm-started from the previous epoch's state.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::{
    self, action_prob, sample_action, CoordinatorError, CoordinatorPolicy, PolicyConfig,
    Trajectory, TrajectoryStep,
};
use crate::corpus::{assemble_pu, Corpus, CorpusError, PUDataset, RoundRef, Split};
use crate::gateway::{Gateway, RemoteObserver, RemotePresenter};
use crate::learners::{
    fit_observer, fit_presenter, ContentExample, LearnerError, ObserverBackend, PresenterBackend,
    SurrogateObserver, SurrogateObserverConfig, SurrogatePresenter, SurrogatePresenterConfig,
    TimingContentRef, TimingExample,
};
use crate::memory::{self, ExtractiveSummarizer, LongTermCache, MemoryError};
use crate::rewards::{r_total, MetricLedger, MetricsLogLine, RewardError};

pub const POLICY_CHECKPOINT_FILE: &str = "policy.ckpt";
pub const OBSERVER_FILE: &str = "observer.json";
pub const PRESENTER_FILE: &str = "presenter.json";
pub const METRICS_LOG_FILE: &str = "metrics.tsv";
pub const SELECTION_FILE: &str = "selection.tsv";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("pretrain must run before epochs")]
    NotPretrained,
    #[error("remote backends require a configured gateway")]
    MissingGateway,
    #[error("validation split is empty; cannot score epochs")]
    EmptyValidation,
    #[error("cannot write artifact {path}: {source}")]
    Artifact {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Surrogate,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total epochs E.
    pub epochs: usize,
    /// Reward trade-off λ between timing and content improvements.
    pub lambda: f64,
    /// Coordinator learning rate η.
    pub eta: f64,
    /// Unlabeled rounds sampled per training dialogue.
    pub k_unlabeled: usize,
    pub seed: u64,
    pub backend: BackendKind,
    /// Observer embedding dimension d_o.
    pub observer_dim: usize,
    /// Presenter embedding dimension d_p.
    pub presenter_dim: usize,
    /// Coordinator hidden width.
    pub hidden_width: usize,
    pub observer_buckets: usize,
    pub observer_lr: f64,
    pub observer_fit_epochs: usize,
    pub observer_class_balance: bool,
    pub max_summary_tokens: usize,
    /// λ values for the sweep harness, if running a sweep.
    pub lambda_sweep: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            lambda: crate::rewards::DEFAULT_LAMBDA,
            eta: 1e-4,
            k_unlabeled: 4,
            seed: 0,
            backend: BackendKind::Surrogate,
            observer_dim: 64,
            presenter_dim: 32,
            hidden_width: 128,
            observer_buckets: 4096,
            observer_lr: 2.0,
            observer_fit_epochs: 300,
            observer_class_balance: false,
            max_summary_tokens: memory::DEFAULT_MAX_SUMMARY_TOKENS,
            lambda_sweep: None,
        }
    }
}

/// Per-epoch summary. Selected/silent hold the actual round partitions so
/// downstream checks can verify them as sets, not just sizes.
#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub selected: Vec<RoundRef>,
    pub silent: Vec<RoundRef>,
    pub z: f64,
    pub l: f64,
    pub r_when: f64,
    pub r_how: f64,
    pub r_total: f64,
    pub wall_ms: u64,
    pub observer_refit_skipped: bool,
    pub presenter_refit_skipped: bool,
}

impl EpochReport {
    pub fn n_selected(&self) -> usize {
        self.selected.len()
    }

    pub fn n_silent(&self) -> usize {
        self.silent.len()
    }
}

/// One row of the final threshold-mode pass over the unlabeled rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub round: RoundRef,
    pub prob: f64,
    pub action: bool,
}

/// Mutable training state across pretrain and epochs.
pub struct TrainState {
    config: TrainConfig,
    pu: PUDataset,
    positive_texts: Vec<String>,
    positive_examples: Vec<ContentExample>,
    unlabeled_texts: Vec<String>,
    val_timing: Vec<TimingExample>,
    val_content: Vec<ContentExample>,
    observer: Box<dyn ObserverBackend>,
    presenter: Box<dyn PresenterBackend>,
    policy: CoordinatorPolicy,
    ledger: Option<MetricLedger>,
    epoch: usize,
    last_z: f64,
    last_l: f64,
    log: Vec<MetricsLogLine>,
    rng: ChaCha8Rng,
}

type DialogueCaches = std::collections::BTreeMap<String, (ExtractiveSummarizer, LongTermCache)>;
type BackendPair = (Box<dyn ObserverBackend>, Box<dyn PresenterBackend>);

fn render_round_memory(
    corpus: &Corpus,
    round: &RoundRef,
    max_summary_tokens: usize,
    caches: &DialogueCaches,
) -> Result<String, TrainError> {
    let dialogue = corpus
        .dialogue(&round.dialogue_id)
        .expect("round refs come from this corpus");
    let proposal = corpus.proposal_for(dialogue);
    let (summarizer, cache) = caches
        .get(&round.dialogue_id)
        .expect("cache prepared per dialogue");
    let _ = max_summary_tokens;
    let memory = memory::assemble(proposal, &dialogue.rounds, round.t, summarizer, Some(cache))?;
    Ok(memory.render())
}

fn prepare_caches(
    corpus: &Corpus,
    refs: &[&RoundRef],
    max_summary_tokens: usize,
) -> DialogueCaches {
    let mut caches = std::collections::BTreeMap::new();
    for round in refs {
        caches.entry(round.dialogue_id.clone()).or_insert_with(|| {
            let dialogue = corpus.dialogue(&round.dialogue_id).expect("known dialogue");
            let proposal = corpus.proposal_for(dialogue);
            (
                ExtractiveSummarizer::new(&proposal.goal, max_summary_tokens),
                LongTermCache::new(),
            )
        });
    }
    caches
}

fn build_backends(config: &TrainConfig, gateway: Option<Arc<Gateway>>) -> Result<BackendPair, TrainError> {
    match config.backend {
        BackendKind::Surrogate => Ok((
            Box::new(SurrogateObserver::new(SurrogateObserverConfig {
                n_buckets: config.observer_buckets,
                hidden_dim: config.observer_dim,
                learning_rate: config.observer_lr,
                fit_epochs: config.observer_fit_epochs,
                class_balance: config.observer_class_balance,
                seed: config.seed.wrapping_add(1),
            })),
            Box::new(SurrogatePresenter::new(SurrogatePresenterConfig {
                n_buckets: config.observer_buckets,
                dim: config.presenter_dim,
                seed: config.seed.wrapping_add(2),
            })),
        )),
        BackendKind::Remote => {
            let gateway = gateway.ok_or(TrainError::MissingGateway)?;
            Ok((
                Box::new(RemoteObserver::new(gateway.clone(), config.observer_dim)),
                Box::new(RemotePresenter::new(gateway, config.presenter_dim)),
            ))
        }
    }
}

impl TrainState {
    /// Assembles PU data, renders every needed memory, and builds the
    /// configured backends plus a fresh coordinator.
    pub fn new(
        config: TrainConfig,
        corpus: &Corpus,
        gateway: Option<Arc<Gateway>>,
    ) -> Result<Self, TrainError> {
        let (observer, presenter) = build_backends(&config, gateway)?;
        TrainState::with_backends(config, corpus, observer, presenter)
    }

    /// Like [`TrainState::new`] with caller-supplied backends, e.g. wrapped
    /// or instrumented ones.
    pub fn with_backends(
        config: TrainConfig,
        corpus: &Corpus,
        observer: Box<dyn ObserverBackend>,
        presenter: Box<dyn PresenterBackend>,
    ) -> Result<Self, TrainError> {
        let pu = assemble_pu(corpus, Split::Train, config.k_unlabeled, config.seed)?;
        let val = assemble_pu(corpus, Split::Validation, config.k_unlabeled, config.seed)?;
        if val.positives.is_empty() || val.negatives_eval.is_empty() {
            return Err(TrainError::EmptyValidation);
        }

        let all_refs: Vec<&RoundRef> = pu
            .positives
            .iter()
            .chain(pu.unlabeled.iter())
            .chain(val.positives.iter())
            .chain(val.negatives_eval.iter())
            .collect();
        let caches = prepare_caches(corpus, &all_refs, config.max_summary_tokens);

        let mut positive_texts = Vec::with_capacity(pu.positives.len());
        let mut positive_examples = Vec::with_capacity(pu.positives.len());
        for round_ref in &pu.positives {
            let text = render_round_memory(corpus, round_ref, config.max_summary_tokens, &caches)?;
            let round = corpus.round(round_ref).expect("positive exists");
            let content = match &round.label {
                crate::corpus::RoundLabel::Positive { intervention } => {
                    intervention.content.clone()
                }
                _ => unreachable!("assemble_pu returns positives"),
            };
            positive_texts.push(text.clone());
            positive_examples.push(ContentExample {
                memory_text: text,
                intervention: content,
            });
        }

        let mut unlabeled_texts = Vec::with_capacity(pu.unlabeled.len());
        for round_ref in &pu.unlabeled {
            unlabeled_texts.push(render_round_memory(
                corpus,
                round_ref,
                config.max_summary_tokens,
                &caches,
            )?);
        }

        let mut val_timing = Vec::new();
        let mut val_content = Vec::new();
        for round_ref in &val.positives {
            let text = render_round_memory(corpus, round_ref, config.max_summary_tokens, &caches)?;
            let round = corpus.round(round_ref).expect("val positive exists");
            if let crate::corpus::RoundLabel::Positive { intervention } = &round.label {
                val_content.push(ContentExample {
                    memory_text: text.clone(),
                    intervention: intervention.content.clone(),
                });
            }
            val_timing.push(TimingExample {
                memory_text: text,
                intervene: true,
            });
        }
        for round_ref in &val.negatives_eval {
            val_timing.push(TimingExample {
                memory_text: render_round_memory(
                    corpus,
                    round_ref,
                    config.max_summary_tokens,
                    &caches,
                )?,
                intervene: false,
            });
        }

        let policy = CoordinatorPolicy::new(PolicyConfig {
            observer_dim: config.observer_dim,
            presenter_dim: config.presenter_dim,
            hidden_width: config.hidden_width,
            learning_rate: config.eta,
            seed: config.seed.wrapping_add(3),
        });

        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(4));
        Ok(TrainState {
            config,
            pu,
            positive_texts,
            positive_examples,
            unlabeled_texts,
            val_timing,
            val_content,
            observer,
            presenter,
            policy,
            ledger: None,
            epoch: 0,
            last_z: 0.0,
            last_l: 0.0,
            log: Vec::new(),
            rng,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn policy(&self) -> &CoordinatorPolicy {
        &self.policy
    }

    pub fn policy_mut(&mut self) -> &mut CoordinatorPolicy {
        &mut self.policy
    }

    pub fn observer(&self) -> &dyn ObserverBackend {
        self.observer.as_ref()
    }

    pub fn presenter(&self) -> &dyn PresenterBackend {
        self.presenter.as_ref()
    }

    pub fn unlabeled(&self) -> &[RoundRef] {
        &self.pu.unlabeled
    }

    pub fn positives(&self) -> &[RoundRef] {
        &self.pu.positives
    }

    pub fn ledger(&self) -> Option<&MetricLedger> {
        self.ledger.as_ref()
    }

    pub fn metrics_log_lines(&self) -> &[MetricsLogLine] {
        &self.log
    }

    /// Pretrains both learners treating every unlabeled round as negative and
    /// initializes the reward ledger with (z⁰, l⁰).
    pub fn pretrain(&mut self) -> Result<(f64, f64), TrainError> {
        let positives: Vec<&str> = self.positive_texts.iter().map(String::as_str).collect();
        let negatives: Vec<&str> = self.unlabeled_texts.iter().map(String::as_str).collect();
        let z0 = fit_observer(
            self.observer.as_mut(),
            &positives,
            &negatives,
            &self.val_timing,
        )?;
        let val_content_refs: Vec<TimingContentRef<'_>> = self
            .val_content
            .iter()
            .map(|e| TimingContentRef {
                memory_text: &e.memory_text,
                reference: &e.intervention,
            })
            .collect();
        let l0 = fit_presenter(
            self.presenter.as_mut(),
            &self.positive_examples,
            &val_content_refs,
        )?;
        self.ledger = Some(MetricLedger::init(z0, l0)?);
        self.last_z = z0;
        self.last_l = l0;
        self.log.push(MetricsLogLine {
            epoch: 0,
            z: z0,
            l: l0,
            r_when: 0.0,
            r_how: 0.0,
            r_total: 0.0,
        });
        Ok((z0, l0))
    }

    /// One epoch: coordinator selection over every unlabeled round, learner
    /// refits on the induced partition, reward, and one policy update.
    pub fn run_epoch(&mut self) -> Result<EpochReport, TrainError> {
        if self.ledger.is_none() {
            return Err(TrainError::NotPretrained);
        }
        let start = Instant::now();
        self.epoch += 1;

        let mut order: Vec<usize> = (0..self.pu.unlabeled.len()).collect();
        order.shuffle(&mut self.rng);

        let mut trajectory = Trajectory::default();
        let mut selected = Vec::new();
        let mut silent = Vec::new();
        let mut selected_idx = Vec::new();
        let mut silent_idx = Vec::new();
        for &i in &order {
            let text = &self.unlabeled_texts[i];
            let observer_embed = self.observer.embed(text)?;
            let presenter_embed = self.presenter.embed(text)?;
            let state = self.policy.encode_state(&observer_embed, &presenter_embed)?;
            let prob = self.policy.prob(&state);
            let action = sample_action(prob, &mut self.rng);
            trajectory.steps.push(TrajectoryStep {
                observer_embed,
                presenter_embed,
                action,
                log_prob: action_prob(prob, action).ln(),
            });
            if action {
                selected.push(self.pu.unlabeled[i].clone());
                selected_idx.push(i);
            } else {
                silent.push(self.pu.unlabeled[i].clone());
                silent_idx.push(i);
            }
        }

        // observer refit on P vs the silent set, from a fresh state so z_T
        // depends only on this epoch's selection
        let observer_refit_skipped = silent_idx.is_empty();
        let z_t = if observer_refit_skipped {
            self.last_z
        } else {
            let positives: Vec<&str> = self.positive_texts.iter().map(String::as_str).collect();
            let negatives: Vec<&str> = silent_idx
                .iter()
                .map(|&i| self.unlabeled_texts[i].as_str())
                .collect();
            self.observer.cold_reset();
            fit_observer(
                self.observer.as_mut(),
                &positives,
                &negatives,
                &self.val_timing,
            )?
        };

        // presenter refit on P' = P ∪ P+, where selected rounds are
        // pseudo-labeled with the current presenter's own generation
        let presenter_refit_skipped = selected_idx.is_empty();
        let l_t = if presenter_refit_skipped {
            self.last_l
        } else {
            let mut expanded = self.positive_examples.clone();
            for &i in &selected_idx {
                let text = &self.unlabeled_texts[i];
                expanded.push(ContentExample {
                    memory_text: text.clone(),
                    intervention: self.presenter.generate(text)?,
                });
            }
            let val_content_refs: Vec<TimingContentRef<'_>> = self
                .val_content
                .iter()
                .map(|e| TimingContentRef {
                    memory_text: &e.memory_text,
                    reference: &e.intervention,
                })
                .collect();
            fit_presenter(self.presenter.as_mut(), &expanded, &val_content_refs)?
        };

        let ledger = self.ledger.as_mut().expect("checked above");
        let r_when = ledger.r_when(z_t)?;
        let r_how = ledger.r_how(l_t)?;
        let reward = r_total(r_when, r_how, self.config.lambda)?;
        self.policy
            .reinforce_update(&trajectory, reward, self.config.eta)?;

        self.last_z = z_t;
        self.last_l = l_t;
        self.log.push(MetricsLogLine {
            epoch: self.epoch,
            z: z_t,
            l: l_t,
            r_when,
            r_how,
            r_total: reward,
        });

        Ok(EpochReport {
            epoch: self.epoch,
            selected,
            silent,
            z: z_t,
            l: l_t,
            r_when,
            r_how,
            r_total: reward,
            wall_ms: start.elapsed().as_millis() as u64,
            observer_refit_skipped,
            presenter_refit_skipped,
        })
    }

    /// Deployment-mode pass over the unlabeled rounds with the current
    /// policy: threshold decisions, no sampling, no learning.
    pub fn threshold_selection(&self) -> Result<Vec<SelectionRow>, TrainError> {
        let mut rows = Vec::with_capacity(self.pu.unlabeled.len());
        for (i, round) in self.pu.unlabeled.iter().enumerate() {
            let text = &self.unlabeled_texts[i];
            let observer_embed = self.observer.embed(text)?;
            let presenter_embed = self.presenter.embed(text)?;
            let state = self.policy.encode_state(&observer_embed, &presenter_embed)?;
            let prob = self.policy.prob(&state);
            rows.push(SelectionRow {
                round: round.clone(),
                prob,
                action: prob >= 0.5,
            });
        }
        Ok(rows)
    }

    /// Rendered metrics log (header plus one line per recorded epoch).
    pub fn metrics_log(&self) -> String {
        crate::rewards::render_metrics_log(&self.log)
    }
}

/// Training artifacts kept in memory; files are written when an output
/// directory is provided to [`train`].
pub struct TrainArtifacts {
    pub state: TrainState,
    pub reports: Vec<EpochReport>,
    pub z0: f64,
    pub l0: f64,
}

fn write_artifact(path: &Path, content: &str) -> Result<(), TrainError> {
    std::fs::write(path, content).map_err(|source| TrainError::Artifact {
        path: path.display().to_string(),
        source,
    })
}

/// Runs pretraining plus the configured number of epochs, optionally
/// persisting artifacts (policy checkpoint, backend dumps, metrics log, and
/// the final threshold selection) into `out_dir`.
pub fn train(
    config: TrainConfig,
    corpus: &Corpus,
    gateway: Option<Arc<Gateway>>,
    out_dir: Option<&Path>,
) -> Result<TrainArtifacts, TrainError> {
    let backend = config.backend;
    let epochs = config.epochs;
    let mut state = TrainState::new(config, corpus, gateway)?;
    let (z0, l0) = state.pretrain()?;
    let mut reports = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        reports.push(state.run_epoch()?);
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Artifact {
            path: dir.display().to_string(),
            source,
        })?;
        coordinator::save_checkpoint(&state.policy, dir.join(POLICY_CHECKPOINT_FILE))?;
        write_artifact(&dir.join(METRICS_LOG_FILE), &state.metrics_log())?;

        let mut selection = String::from("dialogue_id\tt\tprob\taction\n");
        for row in state.threshold_selection()? {
            selection.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                row.round.dialogue_id,
                row.round.t,
                row.prob,
                if row.action { 1 } else { 0 }
            ));
        }
        write_artifact(&dir.join(SELECTION_FILE), &selection)?;

        match backend {
            BackendKind::Surrogate => {
                // concrete types are known for the surrogate pair
                let observer = state
                    .observer
                    .as_ref()
                    .as_any()
                    .downcast_ref::<SurrogateObserver>()
                    .expect("surrogate backend");
                let presenter = state
                    .presenter
                    .as_ref()
                    .as_any()
                    .downcast_ref::<SurrogatePresenter>()
                    .expect("surrogate backend");
                write_artifact(
                    &dir.join(OBSERVER_FILE),
                    &serde_json::to_string(observer).expect("observer serializes"),
                )?;
                write_artifact(
                    &dir.join(PRESENTER_FILE),
                    &serde_json::to_string(presenter).expect("presenter serializes"),
                )?;
            }
            BackendKind::Remote => {
                eprintln!("trainloop: remote backends are stateless here; skipping backend dumps");
            }
        }
    }

    Ok(TrainArtifacts {
        state,
        reports,
        z0,
        l0,
    })
}

/// Loaded artifacts for evaluation and streaming.
pub struct LoadedArtifacts {
    pub policy: CoordinatorPolicy,
    pub observer: SurrogateObserver,
    pub presenter: SurrogatePresenter,
}

/// Loads the artifact files written by [`train`] with surrogate backends.
pub fn load_artifacts(dir: impl AsRef<Path>) -> Result<LoadedArtifacts, TrainError> {
    let dir = dir.as_ref();
    let policy = coordinator::load_checkpoint(dir.join(POLICY_CHECKPOINT_FILE))?;
    let read = |name: &str| -> Result<String, TrainError> {
        let path = dir.join(name);
        std::fs::read_to_string(&path).map_err(|source| TrainError::Artifact {
            path: path.display().to_string(),
            source,
        })
    };
    let observer: SurrogateObserver = serde_json::from_str(&read(OBSERVER_FILE)?)
        .map_err(|e| TrainError::Artifact {
            path: dir.join(OBSERVER_FILE).display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
    let presenter: SurrogatePresenter = serde_json::from_str(&read(PRESENTER_FILE)?)
        .map_err(|e| TrainError::Artifact {
            path: dir.join(PRESENTER_FILE).display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })?;
    Ok(LoadedArtifacts {
        policy,
        observer,
        presenter,
    })
}

/// One point of the λ sweep harness.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub final_z: f64,
    pub final_l: f64,
}

/// Reruns training once per λ value with otherwise identical config and
/// seeds, reporting the final validation metrics per point.
pub fn lambda_sweep(
    config: &TrainConfig,
    corpus: &Corpus,
    lambdas: &[f64],
    gateway: Option<Arc<Gateway>>,
) -> Result<Vec<SweepPoint>, TrainError> {
    let mut points = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let run_config = TrainConfig {
            lambda,
            lambda_sweep: None,
            ..config.clone()
        };
        let artifacts = train(run_config, corpus, gateway.clone(), None)?;
        let last = artifacts
            .state
            .metrics_log_lines()
            .last()
            .expect("pretrain logged");
        points.push(SweepPoint {
            lambda,
            final_z: last.z,
            final_l: last.l,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{synth_corpus, SynthConfig};
    use std::collections::BTreeSet;

    fn test_corpus() -> Corpus {
        synth_corpus(&SynthConfig {
            n_dialogues: 40,
            rounds_per_dialogue: 10,
            drift_position_range: (2, 7),
            tokens_per_round: 30,
            validation_fraction: 0.2,
            test_fraction: 0.1,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            observer_dim: 16,
            presenter_dim: 8,
            hidden_width: 16,
            observer_buckets: 2048,
            observer_lr: 1.0,
            observer_fit_epochs: 400,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn pretrain_initializes_ledger_with_one_entry_each() {
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        let (z0, l0) = state.pretrain().unwrap();
        let ledger = state.ledger().unwrap();
        assert_eq!(ledger.z_history(), &[z0]);
        assert_eq!(ledger.l_history(), &[l0]);
        assert_eq!(state.metrics_log_lines().len(), 1);
    }

    #[test]
    fn pretrain_on_separable_corpus_recovers_signal() {
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        let (z0, _) = state.pretrain().unwrap();
        // hidden drift rounds pollute the negatives, so pretraining cannot be
        // perfect, but the drift signal is partially recoverable
        assert!(z0 >= 0.7, "z0 = {z0}");
    }

    #[test]
    fn epoch_before_pretrain_is_rejected() {
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        assert!(matches!(state.run_epoch(), Err(TrainError::NotPretrained)));
    }

    #[test]
    fn epoch_partitions_unlabeled_rounds_exactly() {
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        state.pretrain().unwrap();
        let report = state.run_epoch().unwrap();
        assert_eq!(
            report.n_selected() + report.n_silent(),
            state.unlabeled().len()
        );
        let selected: BTreeSet<_> = report.selected.iter().collect();
        let silent: BTreeSet<_> = report.silent.iter().collect();
        assert!(selected.is_disjoint(&silent));
        let union: BTreeSet<_> = selected.union(&silent).copied().collect();
        let all: BTreeSet<_> = state.unlabeled().iter().collect();
        assert_eq!(union, all);
    }

    #[test]
    fn forced_silent_policy_skips_presenter_and_r_how_is_zero() {
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        state.pretrain().unwrap();
        state.policy_mut().set_constant_logit(-40.0);
        let report = state.run_epoch().unwrap();
        assert_eq!(report.n_silent(), state.unlabeled().len());
        assert!(report.presenter_refit_skipped);
        assert_eq!(report.r_how, 0.0);
    }

    #[test]
    fn forced_intervene_policy_skips_observer_and_r_when_is_zero() {
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        state.pretrain().unwrap();
        state.policy_mut().set_constant_logit(40.0);
        let report = state.run_epoch().unwrap();
        assert_eq!(report.n_selected(), state.unlabeled().len());
        assert!(report.observer_refit_skipped);
        assert_eq!(report.r_when, 0.0);
    }

    #[test]
    fn ledger_grows_one_entry_per_epoch() {
        let corpus = test_corpus();
        let artifacts = train(small_config(), &corpus, None, None).unwrap();
        let ledger = artifacts.state.ledger().unwrap();
        assert_eq!(ledger.z_history().len(), small_config().epochs + 1);
        assert_eq!(ledger.l_history().len(), small_config().epochs + 1);
    }

    #[test]
    fn zero_epochs_equals_pretrain_state() {
        let corpus = test_corpus();
        let config = TrainConfig {
            epochs: 0,
            ..small_config()
        };
        let artifacts = train(config, &corpus, None, None).unwrap();
        assert!(artifacts.reports.is_empty());
        assert_eq!(artifacts.state.metrics_log_lines().len(), 1);
    }

    #[test]
    fn identical_config_and_seed_reproduce_metrics_log_bytes() {
        let corpus = test_corpus();
        let a = train(small_config(), &corpus, None, None).unwrap();
        let b = train(small_config(), &corpus, None, None).unwrap();
        assert_eq!(a.state.metrics_log(), b.state.metrics_log());
    }

    #[test]
    fn lambda_one_update_ignores_content_reward_bitwise() {
        // with λ = 1 the mixed reward equals r_when exactly, so the parameter
        // delta cannot depend on r_how
        let corpus = test_corpus();
        let mut state = TrainState::new(small_config(), &corpus, None).unwrap();
        state.pretrain().unwrap();
        let policy_a = {
            let mut p = state.policy().clone();
            let trajectory = fixed_trajectory(&state);
            let reward = r_total(0.125, 0.999, 1.0).unwrap();
            p.reinforce_update(&trajectory, reward, 0.01).unwrap();
            p.params()
        };
        let policy_b = {
            let mut p = state.policy().clone();
            let trajectory = fixed_trajectory(&state);
            let reward = r_total(0.125, -0.75, 1.0).unwrap();
            p.reinforce_update(&trajectory, reward, 0.01).unwrap();
            p.params()
        };
        assert_eq!(policy_a, policy_b);
    }

    fn fixed_trajectory(state: &TrainState) -> Trajectory {
        let text = &state.unlabeled_texts[0];
        let observer_embed = state.observer().embed(text).unwrap();
        let presenter_embed = state.presenter().embed(text).unwrap();
        Trajectory {
            steps: vec![TrajectoryStep {
                observer_embed,
                presenter_embed,
                action: true,
                log_prob: 0.0,
            }],
        }
    }

    #[test]
    fn artifacts_round_trip_through_directory() {
        let corpus = test_corpus();
        let dir = std::env::temp_dir().join(format!("puli-train-{}", std::process::id()));
        let artifacts = train(small_config(), &corpus, None, Some(&dir)).unwrap();
        let loaded = load_artifacts(&dir).unwrap();
        assert_eq!(loaded.policy, *artifacts.state.policy());
        // same threshold decisions from the reloaded artifacts
        let fresh = artifacts.state.threshold_selection().unwrap();
        for row in fresh.iter().take(5) {
            let text_idx = artifacts
                .state
                .unlabeled()
                .iter()
                .position(|r| r == &row.round)
                .unwrap();
            let text = &artifacts.state.unlabeled_texts[text_idx];
            let h = loaded.observer.embed(text).unwrap();
            let g = loaded.presenter.embed(text).unwrap();
            let s = loaded.policy.encode_state(&h, &g).unwrap();
            assert_eq!(loaded.policy.prob(&s), row.prob);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn lambda_sweep_produces_one_point_per_value() {
        let corpus = test_corpus();
        let config = TrainConfig {
            epochs: 1,
            ..small_config()
        };
        let points = lambda_sweep(&config, &corpus, &[0.1, 0.6, 0.9], None).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[1].lambda, 0.6);
    }
}
