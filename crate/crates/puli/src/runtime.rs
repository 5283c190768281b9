//! Streaming inference gate: rounds arrive one at a time, a cheap decision is
//! taken per round, and the Presenter is invoked only when the gate fires.
//! Injected interventions join the session context as assistant turns so
//! later memories see them.
//!
//! A session is strictly serial; run one session per dialogue and as many
//! sessions as you like concurrently (backends are read-only at inference).
//! ASR/TTS integration is out of scope: rounds enter as text through
//! [`Session::push_round`] and interventions leave as text in the returned
//! events, which is where audio front-ends would attach.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordinator::CoordinatorPolicy;
use crate::corpus::{Dialogue, DialogueRound, ProjectProposal, RoundLabel};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};
use crate::learners::{ObserverBackend, PresenterBackend};
use crate::memory::{self, LongTermCache, MemoryError, Summarizer};
use crate::metrics;

pub const ASSISTANT_ROLE: &str = "assistant";

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("out-of-order round: expected t={expected}, got t={got}")]
    OutOfOrder { expected: usize, got: usize },
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("dialogue proposal {0} not found in corpus")]
    UnknownProposal(String),
}

/// How the per-round decision is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// The Observer's probability gates the Presenter (the deployment
    /// pipeline: the cheap model watches, the expensive one is invoked on
    /// demand).
    #[default]
    Observer,
    /// The coordinator policy thresholds the encoded state instead.
    Coordinator,
    /// Never intervene; replays the original dialogue untouched (the
    /// no-intervention baseline protocol).
    Silent,
}

/// One event in a session's stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamEvent {
    RoundArrived { t: usize, role: String },
    Decision { prob: f64, action: bool },
    Intervention { text: String },
    Latency { ms: u64 },
    Error { message: String },
}

impl StreamEvent {
    /// Latency is wall-clock measurement and excluded from the canonical
    /// transcript so replays are byte-reproducible.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, StreamEvent::Latency { .. })
    }
}

/// A live dialogue session feeding the gate.
pub struct Session {
    proposal: ProjectProposal,
    context: Vec<DialogueRound>,
    arrived: usize,
    summarizer: Box<dyn Summarizer>,
    cache: LongTermCache,
    observer: Arc<dyn ObserverBackend>,
    presenter: Arc<dyn PresenterBackend>,
    policy: Option<CoordinatorPolicy>,
    gate: GateMode,
    events: Vec<StreamEvent>,
    rendered_memories: Vec<String>,
    presenter_invocations: usize,
}

impl Session {
    pub fn new(
        proposal: ProjectProposal,
        summarizer: Box<dyn Summarizer>,
        observer: Arc<dyn ObserverBackend>,
        presenter: Arc<dyn PresenterBackend>,
        policy: Option<CoordinatorPolicy>,
        gate: GateMode,
    ) -> Self {
        Session {
            proposal,
            context: Vec::new(),
            arrived: 0,
            summarizer,
            cache: LongTermCache::new(),
            observer,
            presenter,
            policy,
            gate,
            events: Vec::new(),
            rendered_memories: Vec::new(),
            presenter_invocations: 0,
        }
    }

    pub fn proposal(&self) -> &ProjectProposal {
        &self.proposal
    }

    /// External rounds consumed so far; also the next expected `t`.
    pub fn arrived(&self) -> usize {
        self.arrived
    }

    /// Augmented dialogue so far: arrived rounds plus injected interventions,
    /// re-indexed consecutively.
    pub fn transcript(&self) -> &[DialogueRound] {
        &self.context
    }

    /// Full event log, latency events included.
    pub fn events(&self) -> &[StreamEvent] {
        &self.events
    }

    /// The rendered memory used for each arrived round's decision.
    pub fn rendered_memories(&self) -> &[String] {
        &self.rendered_memories
    }

    pub fn presenter_invocations(&self) -> usize {
        self.presenter_invocations
    }

    pub fn intervention_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, StreamEvent::Intervention { .. }))
            .count()
    }

    fn decide(&self, memory_text: &str) -> Result<f64, String> {
        match self.gate {
            GateMode::Silent => Ok(0.0),
            GateMode::Observer => self.observer.predict(memory_text).map_err(|e| e.to_string()),
            GateMode::Coordinator => {
                let policy = self
                    .policy
                    .as_ref()
                    .ok_or_else(|| "coordinator gate requires a policy".to_string())?;
                let h = self.observer.embed(memory_text).map_err(|e| e.to_string())?;
                let g = self.presenter.embed(memory_text).map_err(|e| e.to_string())?;
                let state = policy.encode_state(&h, &g).map_err(|e| e.to_string())?;
                Ok(policy.prob(&state))
            }
        }
    }

    /// Feeds the next external round through the gate. Returns the events
    /// this round produced (also appended to the session log). Backend
    /// failures record the decision as silent with an error event; the
    /// session stays consistent.
    pub fn push_round(&mut self, round: &DialogueRound) -> Result<Vec<StreamEvent>, RuntimeError> {
        if round.t != self.arrived {
            return Err(RuntimeError::OutOfOrder {
                expected: self.arrived,
                got: round.t,
            });
        }
        let start = Instant::now();
        let mut produced = Vec::new();

        let internal_t = self.context.len();
        self.context.push(DialogueRound {
            dialogue_id: round.dialogue_id.clone(),
            t: internal_t,
            role: round.role.clone(),
            text: round.text.clone(),
            label: RoundLabel::Unlabeled,
        });
        self.arrived += 1;
        produced.push(StreamEvent::RoundArrived {
            t: round.t,
            role: round.role.clone(),
        });

        let memory = memory::assemble(
            &self.proposal,
            &self.context,
            internal_t,
            self.summarizer.as_ref(),
            Some(&self.cache),
        )?;
        let memory_text = memory.render();
        self.rendered_memories.push(memory_text.clone());

        let (prob, mut action) = match self.decide(&memory_text) {
            Ok(prob) => (prob, prob >= 0.5),
            Err(message) => {
                produced.push(StreamEvent::Error { message });
                (0.0, false)
            }
        };

        let mut intervention = None;
        if action {
            self.presenter_invocations += 1;
            match self.presenter.generate(&memory_text) {
                Ok(text) => intervention = Some(text),
                Err(error) => {
                    produced.push(StreamEvent::Error {
                        message: error.to_string(),
                    });
                    action = false;
                }
            }
        }
        produced.push(StreamEvent::Decision { prob, action });
        if let Some(text) = intervention {
            self.context.push(DialogueRound {
                dialogue_id: round.dialogue_id.clone(),
                t: self.context.len(),
                role: ASSISTANT_ROLE.to_string(),
                text: text.clone(),
                label: RoundLabel::Unlabeled,
            });
            produced.push(StreamEvent::Intervention { text });
        }
        produced.push(StreamEvent::Latency {
            ms: start.elapsed().as_millis() as u64,
        });
        self.events.extend(produced.clone());
        Ok(produced)
    }
}

/// Result of streaming a full dialogue.
pub struct Replay {
    pub transcript: Vec<DialogueRound>,
    pub events: Vec<StreamEvent>,
    pub presenter_invocations: usize,
    pub rendered_memories: Vec<String>,
}

impl Replay {
    /// Canonical JSONL event stream, one deterministic event per line.
    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for event in self.events.iter().filter(|e| e.is_deterministic()) {
            out.push_str(&serde_json::to_string(event).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Latency sidecar: one line per measured round, in milliseconds.
    pub fn latency_report(&self) -> Vec<u64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                StreamEvent::Latency { ms } => Some(*ms),
                _ => None,
            })
            .collect()
    }
}

/// Streams every round of a corpus dialogue through a fresh session.
pub fn replay(
    proposal: &ProjectProposal,
    dialogue: &Dialogue,
    summarizer: Box<dyn Summarizer>,
    observer: Arc<dyn ObserverBackend>,
    presenter: Arc<dyn PresenterBackend>,
    policy: Option<CoordinatorPolicy>,
    gate: GateMode,
) -> Result<Replay, RuntimeError> {
    let mut session = Session::new(proposal.clone(), summarizer, observer, presenter, policy, gate);
    for round in &dialogue.rounds {
        session.push_round(round)?;
    }
    Ok(Replay {
        transcript: session.context,
        events: session.events,
        presenter_invocations: session.presenter_invocations,
        rendered_memories: session.rendered_memories,
    })
}

const CONCLUDE_SYSTEM: &str = "You are the scientific team's rapporteur. Given the project proposal and the full discussion transcript (including any assistant interventions), write the team's final conclusion: the agreed direction, key findings of the discussion, and concrete next steps. Be concise and specific.";

/// Regenerates a dialogue-level conclusion from the augmented context via the
/// gateway, for content-quality scoring against the golden conclusion.
pub fn regenerate_conclusion(
    gateway: &Gateway,
    proposal: &ProjectProposal,
    transcript: &[DialogueRound],
) -> Result<String, RuntimeError> {
    let mut body = format!(
        "Project goal: {}\nBackground: {}\nDatasets: {}\n\nDiscussion transcript:\n",
        proposal.goal, proposal.background, proposal.datasets_desc
    );
    for round in transcript {
        body.push_str(&format!("{}: {}\n", round.role, round.text));
    }
    let request = ChatRequest {
        model: gateway.config().models.presenter.clone(),
        messages: vec![ChatMessage::system(CONCLUDE_SYSTEM), ChatMessage::user(body)],
        temperature: gateway.config().temperature,
        max_tokens: gateway.config().max_tokens,
    };
    Ok(gateway.complete(&request)?)
}

/// ROUGE-1 and BLEU-1 of a generated conclusion against the golden one.
pub fn score_conclusion(generated: &str, golden: &str) -> (f64, f64) {
    let cand = metrics::tokenize(generated);
    let reference = metrics::tokenize(golden);
    (
        metrics::rouge1(&cand, &reference).unwrap_or(0.0),
        metrics::bleu1(&cand, &reference).unwrap_or(0.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{ContentExample, LearnerError};
    use crate::memory::ExtractiveSummarizer;

    fn proposal() -> ProjectProposal {
        ProjectProposal {
            id: "p0".to_string(),
            goal: "investigate kinase binding".to_string(),
            background: "background".to_string(),
            datasets_desc: "datasets".to_string(),
            golden_conclusion: Some("kinase binding validated by assay".to_string()),
            roles: vec!["A".to_string(), "B".to_string()],
        }
    }

    fn dialogue(n: usize) -> Dialogue {
        let rounds = (0..n)
            .map(|t| DialogueRound {
                dialogue_id: "d0".to_string(),
                t,
                role: if t % 2 == 0 { "A" } else { "B" }.to_string(),
                text: if t == 2 {
                    "blockchain lottery gossip".to_string()
                } else {
                    format!("kinase binding point {t}")
                },
                label: RoundLabel::Unlabeled,
            })
            .collect();
        Dialogue {
            id: "d0".to_string(),
            proposal_id: "p0".to_string(),
            split: crate::corpus::Split::Test,
            rounds,
        }
    }

    /// Observer that fires on drift vocabulary.
    struct DriftObserver;

    impl ObserverBackend for DriftObserver {
        fn dim(&self) -> usize {
            2
        }
        fn as_any(&self) -> &dyn std::any::Any {
            self
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, LearnerError> {
            Ok(vec![text.len() as f64, 0.0])
        }
        fn predict(&self, text: &str) -> Result<f64, LearnerError> {
            // keys on the newest turn only
            let last = text.lines().last().unwrap_or_default();
            Ok(if last.contains("blockchain") { 0.9 } else { 0.1 })
        }
        fn fit(&mut self, _: &[&str], _: &[&str]) -> Result<(), LearnerError> {
            Ok(())
        }
    }

    struct FixedPresenter;

    impl PresenterBackend for FixedPresenter {
        fn dim(&self) -> usize {
            2
        }
        fn as_any(&self) -> &dyn std::any::Any {
            self
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>, LearnerError> {
            Ok(vec![0.0, 0.0])
        }
        fn generate(&self, _: &str) -> Result<String, LearnerError> {
            Ok("please refocus on kinase binding".to_string())
        }
        fn fit(&mut self, _: &[ContentExample]) -> Result<(), LearnerError> {
            Ok(())
        }
    }

    struct FailingPresenter;

    impl PresenterBackend for FailingPresenter {
        fn dim(&self) -> usize {
            2
        }
        fn as_any(&self) -> &dyn std::any::Any {
            self
        }
        fn embed(&self, _: &str) -> Result<Vec<f64>, LearnerError> {
            Ok(vec![0.0, 0.0])
        }
        fn generate(&self, _: &str) -> Result<String, LearnerError> {
            Err(LearnerError::Remote("presenter down".to_string()))
        }
        fn fit(&mut self, _: &[ContentExample]) -> Result<(), LearnerError> {
            Ok(())
        }
    }

    fn run_replay(gate: GateMode) -> Replay {
        let p = proposal();
        replay(
            &p,
            &dialogue(6),
            Box::new(ExtractiveSummarizer::for_proposal(&p)),
            Arc::new(DriftObserver),
            Arc::new(FixedPresenter),
            None,
            gate,
        )
        .unwrap()
    }

    #[test]
    fn silent_gate_never_intervenes() {
        let replay = run_replay(GateMode::Silent);
        assert_eq!(replay.presenter_invocations, 0);
        assert!(replay
            .events
            .iter()
            .all(|e| !matches!(e, StreamEvent::Intervention { .. })));
        assert_eq!(replay.transcript.len(), 6);
    }

    #[test]
    fn drift_round_triggers_intervention_and_augments_context() {
        let replay = run_replay(GateMode::Observer);
        assert_eq!(replay.presenter_invocations, 1);
        // rounds + 1 injected intervention turn
        assert_eq!(replay.transcript.len(), 7);
        // the intervention sits right after the drift round and is visible
        // to later memories
        assert_eq!(replay.transcript[3].role, ASSISTANT_ROLE);
        assert!(replay.rendered_memories[3].contains("please refocus"));
        // context stays consecutively indexed
        for (i, round) in replay.transcript.iter().enumerate() {
            assert_eq!(round.t, i);
        }
    }

    #[test]
    fn one_decision_per_arrived_round() {
        let replay = run_replay(GateMode::Observer);
        let arrived = replay
            .events
            .iter()
            .filter(|e| matches!(e, StreamEvent::RoundArrived { .. }))
            .count();
        let decisions = replay
            .events
            .iter()
            .filter(|e| matches!(e, StreamEvent::Decision { .. }))
            .count();
        assert_eq!(arrived, 6);
        assert_eq!(decisions, 6);
    }

    #[test]
    fn presenter_invocations_equal_intervene_decisions() {
        let replay = run_replay(GateMode::Observer);
        let intervene_decisions = replay
            .events
            .iter()
            .filter(|e| matches!(e, StreamEvent::Decision { action: true, .. }))
            .count();
        assert_eq!(replay.presenter_invocations, intervene_decisions);
        assert_eq!(replay.presenter_invocations, 1);
    }

    #[test]
    fn out_of_order_round_is_rejected() {
        let p = proposal();
        let mut session = Session::new(
            p.clone(),
            Box::new(ExtractiveSummarizer::for_proposal(&p)),
            Arc::new(DriftObserver),
            Arc::new(FixedPresenter),
            None,
            GateMode::Observer,
        );
        let d = dialogue(3);
        session.push_round(&d.rounds[0]).unwrap();
        let err = session.push_round(&d.rounds[2]).unwrap_err();
        assert!(matches!(
            err,
            RuntimeError::OutOfOrder {
                expected: 1,
                got: 2
            }
        ));
    }

    #[test]
    fn generation_failure_records_silent_decision_with_error() {
        let p = proposal();
        let replay = replay(
            &p,
            &dialogue(6),
            Box::new(ExtractiveSummarizer::for_proposal(&p)),
            Arc::new(DriftObserver),
            Arc::new(FailingPresenter),
            None,
            GateMode::Observer,
        )
        .unwrap();
        assert!(replay
            .events
            .iter()
            .any(|e| matches!(e, StreamEvent::Error { .. })));
        // the failed round's decision is recorded as silent
        assert!(replay
            .events
            .iter()
            .all(|e| !matches!(e, StreamEvent::Decision { action: true, .. })));
        // no intervention entered the context
        assert_eq!(replay.transcript.len(), 6);
    }

    #[test]
    fn session_memory_equals_memory_module_oracle() {
        let replay = run_replay(GateMode::Observer);
        let p = proposal();
        // recompute memory over the augmented transcript prefix at each
        // arrived round position
        let summarizer = ExtractiveSummarizer::for_proposal(&p);
        let mut arrived_positions = Vec::new();
        for (i, round) in replay.transcript.iter().enumerate() {
            if round.role != ASSISTANT_ROLE {
                arrived_positions.push(i);
            }
        }
        for (k, &pos) in arrived_positions.iter().enumerate() {
            let oracle = memory::assemble(&p, &replay.transcript, pos, &summarizer, None).unwrap();
            assert_eq!(oracle.render(), replay.rendered_memories[k], "round {k}");
        }
    }

    #[test]
    fn replays_are_deterministic() {
        let a = run_replay(GateMode::Observer);
        let b = run_replay(GateMode::Observer);
        assert_eq!(a.transcript_jsonl(), b.transcript_jsonl());
        assert_eq!(a.transcript, b.transcript);
    }

    #[test]
    fn transcript_jsonl_excludes_latency_events() {
        let replay = run_replay(GateMode::Observer);
        assert!(!replay.latency_report().is_empty());
        assert!(!replay.transcript_jsonl().contains("latency"));
    }

    #[test]
    fn conclusion_scoring_uses_shared_metrics() {
        let (r, b) = score_conclusion(
            "kinase binding validated by assay",
            "kinase binding validated by assay",
        );
        assert_eq!(r, 1.0);
        assert_eq!(b, 1.0);
        let (r, _) = score_conclusion("different words entirely", "kinase binding validated");
        assert_eq!(r, 0.0);
    }
}
