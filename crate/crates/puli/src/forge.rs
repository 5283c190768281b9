//! Corpus production, two ways: a deterministic synthetic generator with
//! planted goal drift for offline testing, and an LLM-backed pipeline that
//! extracts proposals from paper texts, simulates multi-role discussions, and
//! labels intervention points.
//!
//! Synthetic dialogues speak an on-topic vocabulary except for planted drift
//! rounds drawn mostly from a disjoint drift vocabulary. One drift round per
//! dialogue is labeled positive; additional hidden drift rounds stay
//! unlabeled so the positive-unlabeled assumption (unlabeled data contains
//! undiscovered positives) actually holds in the synthetic world.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    Corpus, CorpusError, Dialogue, DialogueRound, InterventionPayload, IssueType, ProjectProposal,
    RoundLabel, Split,
};
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError};

pub const FORGE_ROLES: [&str; 4] = [
    "Pharmacologist",
    "Medicinal Chemist",
    "Bioinformatician",
    "Clinical Physician",
];

#[derive(Debug, Error)]
pub enum ForgeError {
    #[error("on-topic and drift vocabularies overlap (e.g. {token:?})")]
    VocabOverlap { token: String },
    #[error("vocabulary {which} is empty")]
    EmptyVocab { which: &'static str },
    #[error("drift position range [{lo}, {hi}] invalid for {rounds} rounds")]
    BadDriftRange { lo: usize, hi: usize, rounds: usize },
    #[error("drift mix range [{lo}, {hi}] invalid")]
    BadDriftMix { lo: f64, hi: f64 },
    #[error("dialogue needs at least {needed} rounds for the requested drift placement, got {rounds}")]
    TooFewRounds { needed: usize, rounds: usize },
    #[error("split fractions leave no training dialogues")]
    BadSplitFractions,
    #[error("template {name} is missing required slot {{{{{slot}}}}}")]
    MissingSlot { name: String, slot: &'static str },
    #[error("no role template for {0}")]
    MissingRoleTemplate(String),
    #[error("no papers supplied")]
    NoPapers,
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_dialogues: usize,
    pub rounds_per_dialogue: usize,
    pub on_topic_vocab: Vec<String>,
    pub drift_vocab: Vec<String>,
    /// Inclusive step-index range for the labeled drift round.
    pub drift_position_range: (usize, usize),
    /// Extra unlabeled drift rounds planted per dialogue.
    pub hidden_drift_rounds: usize,
    /// Per-round fraction of drift-vocabulary tokens is drawn uniformly from
    /// [drift_mix_low, drift_mix]; the remaining tokens stay on topic. The
    /// spread gives drift rounds a difficulty continuum instead of a single
    /// cliff, which keeps learning curves informative.
    pub drift_mix: f64,
    pub drift_mix_low: f64,
    pub tokens_per_round: usize,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

const ON_TOPIC_DEFAULT: [&str; 24] = [
    "kinase", "inhibitor", "assay", "binding", "affinity", "compound", "trial", "cohort",
    "biomarker", "pathway", "receptor", "dosage", "toxicity", "efficacy", "protein", "screening",
    "selectivity", "pharmacokinetics", "mutation", "expression", "synthesis", "scaffold",
    "candidate", "validation",
];

const DRIFT_DEFAULT: [&str; 24] = [
    "blockchain", "cryptocurrency", "football", "vacation", "celebrity", "gossip", "weather",
    "recipe", "gaming", "concert", "fashion", "lottery", "horoscope", "traffic", "barbecue",
    "sitcom", "karaoke", "souvenir", "skateboard", "fireworks", "paparazzi", "camping",
    "matinee", "arcade",
];

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_dialogues: 200,
            rounds_per_dialogue: 20,
            on_topic_vocab: ON_TOPIC_DEFAULT.iter().map(|s| s.to_string()).collect(),
            drift_vocab: DRIFT_DEFAULT.iter().map(|s| s.to_string()).collect(),
            drift_position_range: (4, 15),
            hidden_drift_rounds: 1,
            drift_mix: 0.9,
            drift_mix_low: 0.55,
            tokens_per_round: 14,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), ForgeError> {
        if self.on_topic_vocab.is_empty() {
            return Err(ForgeError::EmptyVocab { which: "on_topic" });
        }
        if self.drift_vocab.is_empty() {
            return Err(ForgeError::EmptyVocab { which: "drift" });
        }
        for token in &self.drift_vocab {
            if self.on_topic_vocab.contains(token) {
                return Err(ForgeError::VocabOverlap {
                    token: token.clone(),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.drift_mix_low)
            || !(0.0..=1.0).contains(&self.drift_mix)
            || self.drift_mix_low > self.drift_mix
        {
            return Err(ForgeError::BadDriftMix {
                lo: self.drift_mix_low,
                hi: self.drift_mix,
            });
        }
        let (lo, hi) = self.drift_position_range;
        if lo > hi || hi >= self.rounds_per_dialogue {
            return Err(ForgeError::BadDriftRange {
                lo,
                hi,
                rounds: self.rounds_per_dialogue,
            });
        }
        // labeled drift + hidden drift + one clean round for the negative
        let needed = 2 + self.hidden_drift_rounds;
        if self.rounds_per_dialogue < needed {
            return Err(ForgeError::TooFewRounds {
                needed,
                rounds: self.rounds_per_dialogue,
            });
        }
        let n_val = (self.n_dialogues as f64 * self.validation_fraction).round() as usize;
        let n_test = (self.n_dialogues as f64 * self.test_fraction).round() as usize;
        if n_val + n_test >= self.n_dialogues {
            return Err(ForgeError::BadSplitFractions);
        }
        Ok(())
    }

    fn split_counts(&self) -> (usize, usize, usize) {
        let n_val = (self.n_dialogues as f64 * self.validation_fraction).round() as usize;
        let n_test = (self.n_dialogues as f64 * self.test_fraction).round() as usize;
        (self.n_dialogues - n_val - n_test, n_val, n_test)
    }
}

fn sentence(rng: &mut ChaCha8Rng, vocab: &[String], n_tokens: usize) -> String {
    let mut words = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        words.push(vocab[rng.gen_range(0..vocab.len())].as_str());
    }
    let mut out = String::new();
    for (i, word) in words.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(word);
        if i % 6 == 5 {
            out.push('.');
        }
    }
    if !out.ends_with('.') {
        out.push('.');
    }
    out
}

fn mixed_sentence(
    rng: &mut ChaCha8Rng,
    drift: &[String],
    on_topic: &[String],
    mix: f64,
    n_tokens: usize,
) -> String {
    let mut words = Vec::with_capacity(n_tokens);
    for _ in 0..n_tokens {
        let vocab = if rng.gen::<f64>() < mix { drift } else { on_topic };
        words.push(vocab[rng.gen_range(0..vocab.len())].as_str());
    }
    let joined = words.join(" ");
    format!("{joined}.")
}

/// Generates a corpus with planted goal drift. Pure and deterministic under
/// the config seed.
pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus, ForgeError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (n_train, n_val, _) = config.split_counts();
    let width = config.n_dialogues.to_string().len().max(4);

    let mut proposals = Vec::with_capacity(config.n_dialogues);
    let mut dialogues = Vec::with_capacity(config.n_dialogues);
    for i in 0..config.n_dialogues {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
        let proposal_id = format!("p{i:0width$}");
        let dialogue_id = format!("d{i:0width$}");

        let mut goal_tokens: Vec<&String> = config
            .on_topic_vocab
            .choose_multiple(&mut rng, 6.min(config.on_topic_vocab.len()))
            .collect();
        goal_tokens.sort();
        let goal_phrase = goal_tokens
            .iter()
            .map(|s| s.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let proposal = ProjectProposal {
            id: proposal_id.clone(),
            goal: format!("investigate {goal_phrase}"),
            background: sentence(&mut rng, &config.on_topic_vocab, config.tokens_per_round),
            datasets_desc: sentence(&mut rng, &config.on_topic_vocab, config.tokens_per_round / 2),
            golden_conclusion: Some(format!(
                "the team converged on {goal_phrase} supported by {}",
                sentence(&mut rng, &config.on_topic_vocab, config.tokens_per_round / 2)
            )),
            roles: FORGE_ROLES.iter().map(|r| r.to_string()).collect(),
        };

        let (lo, hi) = config.drift_position_range;
        let labeled_drift = rng.gen_range(lo..=hi);
        let mut remaining: Vec<usize> = (0..config.rounds_per_dialogue)
            .filter(|&t| t != labeled_drift)
            .collect();
        remaining.shuffle(&mut rng);
        let hidden_drift: Vec<usize> = remaining
            .iter()
            .copied()
            .take(config.hidden_drift_rounds)
            .collect();
        // the negative stands for the least likely intervention point, so
        // prefer a round whose short-term window sees no drift at all
        let drift_free = |t: usize| {
            let lo = t.saturating_sub(2);
            (lo..=t).all(|w| w != labeled_drift && !hidden_drift.contains(&w))
        };
        let negative_round = remaining
            .iter()
            .copied()
            .find(|&t| drift_free(t))
            .or_else(|| remaining.iter().copied().find(|t| !hidden_drift.contains(t)))
            .expect("validated enough rounds");

        let mut rounds = Vec::with_capacity(config.rounds_per_dialogue);
        for t in 0..config.rounds_per_dialogue {
            let role = FORGE_ROLES[rng.gen_range(0..FORGE_ROLES.len())].to_string();
            let is_drift = t == labeled_drift || hidden_drift.contains(&t);
            let text = if is_drift {
                let mix = rng.gen_range(config.drift_mix_low..=config.drift_mix);
                mixed_sentence(
                    &mut rng,
                    &config.drift_vocab,
                    &config.on_topic_vocab,
                    mix,
                    config.tokens_per_round,
                )
            } else {
                sentence(&mut rng, &config.on_topic_vocab, config.tokens_per_round)
            };
            let label = if t == labeled_drift {
                RoundLabel::Positive {
                    intervention: InterventionPayload {
                        position: t,
                        issue_type: IssueType::ScopeDrift,
                        target_roles: vec![role.clone()],
                        content: format!(
                            "the discussion is drifting from the project goal; please refocus on {goal_phrase}"
                        ),
                        modified_dialog: None,
                    },
                }
            } else if split != Split::Train && t == negative_round {
                RoundLabel::Negative
            } else {
                RoundLabel::Unlabeled
            };
            rounds.push(DialogueRound {
                dialogue_id: dialogue_id.clone(),
                t,
                role,
                text,
                label,
            });
        }
        proposals.push(proposal);
        dialogues.push(Dialogue {
            id: dialogue_id,
            proposal_id,
            split,
            rounds,
        });
    }
    Ok(Corpus::from_parts(proposals, dialogues)?)
}

/// Test oracle companion to [`synth_corpus`]: the vocabularies are disjoint,
/// so a round is a planted drift round iff any of its tokens come from the
/// drift vocabulary.
pub fn is_drift_text(config: &SynthConfig, text: &str) -> bool {
    crate::metrics::tokenize(text)
        .tokens()
        .iter()
        .any(|t| config.drift_vocab.iter().any(|d| d == t))
}

/// Prompt templates for the LLM pipeline, with `{{slot}}` placeholders.
#[derive(Debug, Clone)]
pub struct ForgePrompts {
    pub proposal_extraction: String,
    pub role_templates: BTreeMap<String, String>,
    pub positive_labeling: String,
    pub negative_selection: String,
}

const PROPOSAL_EXTRACTION_TEMPLATE: &str = "You are an AI project initiator with a god-level perspective. A research paper is provided below. Establish a realistic and motivating starting point for a team about to begin this research: describe the clinical or biological challenge, early leads or prior failures, and known constraints. Do NOT disclose the paper's final conclusions, efficacy results, or drug identity.\n\nReturn strict JSON with keys \"goal\", \"background\", \"datasets_desc\" and nothing else.\n\nResearch paper:\n{{paper}}";

const ROLE_TEMPLATE: &str = "You are a {{role}}. You are part of an interdisciplinary drug discovery team that just received the project kickoff briefing, and you are now engaging in a live strategy meeting with your colleagues.\n\nYour responsibilities:\n- Contribute ideas and critiques from your domain perspective.\n- Engage with previous comments and develop them further.\n- Express uncertainty or enthusiasm naturally.\n\nGuidelines:\n- Do NOT begin every message with \"As a {{role}}...\".\n- Use first-person natural language.\n- Respond based on the meeting history so far; do not repeat what's already said.\n- Ask questions or challenge others when appropriate.\n- Use domain-specific terminology, but focus on clarity.\n\nYour goal is to make progress in the research planning through scientific reasoning and collaboration, not to summarize or finalize conclusions.\n\nProject proposal:\n{{proposal}}\n\nMeeting history:\n{{history}}\n\n{{role}}:";

const POSITIVE_LABELING_TEMPLATE: &str = "You are an AI moderator specializing in research coherence and integrity. Analyze the multi-turn scientific team discussion below and identify the single most critical point where an intervention should be made to help the team stay focused on the research goal.\n\nReturn strict JSON with these keys:\n- \"intervention position\": the round number the issue was observed after (starting from 0)\n- \"issue type\": one of [\"scientific error\", \"low collaboration\", \"scope drift\", \"missed opportunity\"]\n- \"target members\": role(s) that should be addressed\n- \"intervention content\": a short constructive redirection grounded in the actual dialogue\n- \"modified dialog\": a revised version of the identified turn\n\nProject proposal:\n{{proposal}}\n\nDialogue:\n{{dialogue}}";

const NEGATIVE_SELECTION_TEMPLATE: &str = "You are an AI moderator specializing in research coherence and integrity. Analyze the multi-turn scientific team discussion below and identify the single round that is LEAST likely to require any intervention: the point where the team is most on track. Respond with only that round number (starting from 0).\n\nProject proposal:\n{{proposal}}\n\nDialogue:\n{{dialogue}}";

impl Default for ForgePrompts {
    fn default() -> Self {
        let role_templates = FORGE_ROLES
            .iter()
            .map(|role| (role.to_string(), ROLE_TEMPLATE.replace("{{role}}", role)))
            .collect();
        ForgePrompts {
            proposal_extraction: PROPOSAL_EXTRACTION_TEMPLATE.to_string(),
            role_templates,
            positive_labeling: POSITIVE_LABELING_TEMPLATE.to_string(),
            negative_selection: NEGATIVE_SELECTION_TEMPLATE.to_string(),
        }
    }
}

impl ForgePrompts {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let checks: [(&str, &String, &[&'static str]); 3] = [
            ("proposal_extraction", &self.proposal_extraction, &["paper"]),
            ("positive_labeling", &self.positive_labeling, &["proposal", "dialogue"]),
            ("negative_selection", &self.negative_selection, &["proposal", "dialogue"]),
        ];
        for (name, template, slots) in checks {
            for slot in slots {
                if !template.contains(&format!("{{{{{slot}}}}}")) {
                    return Err(ForgeError::MissingSlot {
                        name: name.to_string(),
                        slot,
                    });
                }
            }
        }
        for (role, template) in &self.role_templates {
            for slot in ["proposal", "history"] {
                if !template.contains(&format!("{{{{{slot}}}}}")) {
                    return Err(ForgeError::MissingSlot {
                        name: format!("role template {role}"),
                        slot: if slot == "proposal" { "proposal" } else { "history" },
                    });
                }
            }
        }
        Ok(())
    }

    /// Loads templates from plain-text files in a directory:
    /// `proposal_extraction.txt`, `positive_labeling.txt`,
    /// `negative_selection.txt`, and one `role_<snake_name>.txt` per role.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, ForgeError> {
        let dir = dir.as_ref();
        let read = |name: String| -> Result<String, ForgeError> {
            let path = dir.join(&name);
            std::fs::read_to_string(&path).map_err(|source| ForgeError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let mut role_templates = BTreeMap::new();
        for role in FORGE_ROLES {
            let file = format!("role_{}.txt", role.to_lowercase().replace(' ', "_"));
            role_templates.insert(role.to_string(), read(file)?);
        }
        let prompts = ForgePrompts {
            proposal_extraction: read("proposal_extraction.txt".to_string())?,
            role_templates,
            positive_labeling: read("positive_labeling.txt".to_string())?,
            negative_selection: read("negative_selection.txt".to_string())?,
        };
        prompts.validate()?;
        Ok(prompts)
    }

    /// Writes the default templates into a directory for editing.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), ForgeError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|source| ForgeError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let write = |name: String, content: &str| -> Result<(), ForgeError> {
            let path = dir.join(&name);
            std::fs::write(&path, content).map_err(|source| ForgeError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        write("proposal_extraction.txt".to_string(), &self.proposal_extraction)?;
        write("positive_labeling.txt".to_string(), &self.positive_labeling)?;
        write("negative_selection.txt".to_string(), &self.negative_selection)?;
        for (role, template) in &self.role_templates {
            let file = format!("role_{}.txt", role.to_lowercase().replace(' ', "_"));
            write(file, template)?;
        }
        Ok(())
    }
}

/// One pre-extracted paper text.
#[derive(Debug, Clone)]
pub struct PaperText {
    pub id: String,
    pub text: String,
}

/// Reads `*.txt` files from a directory as paper texts, sorted by file name.
pub fn load_papers(dir: impl AsRef<Path>) -> Result<Vec<PaperText>, ForgeError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|source| ForgeError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut papers = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| ForgeError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("paper")
            .to_string();
        let text = std::fs::read_to_string(&path).map_err(|source| ForgeError::Io {
            path: path.display().to_string(),
            source,
        })?;
        papers.push(PaperText { id, text });
    }
    papers.sort_by(|a, b| a.id.cmp(&b.id));
    if papers.is_empty() {
        return Err(ForgeError::NoPapers);
    }
    Ok(papers)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmForgeConfig {
    pub rounds_per_dialogue: usize,
    /// Dialogues generated per paper (each from its own sub-seed), capped at 5.
    pub dialogues_per_paper: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    /// Worker threads across papers; per-dialogue generation is sequential.
    pub workers: usize,
}

impl Default for LlmForgeConfig {
    fn default() -> Self {
        LlmForgeConfig {
            rounds_per_dialogue: 20,
            dialogues_per_paper: 1,
            temperature: 0.7,
            max_tokens: 1024,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            workers: 4,
        }
    }
}

/// Non-fatal events from the LLM pipeline; affected dialogues are dropped
/// rather than guessed.
#[derive(Debug, Clone, PartialEq)]
pub enum ForgeWarning {
    ProposalParse { paper_id: String, reason: String },
    LabelParse { dialogue_id: String, reason: String },
    NegativeParse { dialogue_id: String, reason: String },
}

impl fmt::Display for ForgeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForgeWarning::ProposalParse { paper_id, reason } => {
                write!(f, "paper {paper_id}: proposal extraction unparseable ({reason}); paper dropped")
            }
            ForgeWarning::LabelParse { dialogue_id, reason } => {
                write!(f, "dialogue {dialogue_id}: labeling response unparseable ({reason}); dialogue dropped")
            }
            ForgeWarning::NegativeParse { dialogue_id, reason } => {
                write!(f, "dialogue {dialogue_id}: negative selection unparseable ({reason}); dialogue dropped")
            }
        }
    }
}

#[derive(Deserialize)]
struct ExtractedProposal {
    goal: String,
    background: String,
    datasets_desc: String,
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    let without_open = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .unwrap_or(trimmed);
    without_open.strip_suffix("```").unwrap_or(without_open).trim()
}

fn parse_payload_json(raw: &str, rounds: usize) -> Result<InterventionPayload, String> {
    let value: serde_json::Value =
        serde_json::from_str(strip_code_fence(raw)).map_err(|e| format!("not JSON: {e}"))?;
    let object = value.as_object().ok_or("not a JSON object")?;
    let lookup = |spaced: &str, snake: &str| -> Option<&serde_json::Value> {
        object.get(spaced).or_else(|| object.get(snake))
    };
    let position = lookup("intervention position", "intervention_position")
        .or_else(|| lookup("position", "position"))
        .and_then(|v| v.as_u64())
        .ok_or("missing intervention position")? as usize;
    if position >= rounds {
        return Err(format!("position {position} out of range ({rounds} rounds)"));
    }
    let issue_raw = lookup("issue type", "issue_type")
        .and_then(|v| v.as_str())
        .ok_or("missing issue type")?;
    let issue_type =
        IssueType::parse_lenient(issue_raw).ok_or_else(|| format!("unknown issue type {issue_raw:?}"))?;
    let target_roles = lookup("target members", "target_members")
        .or_else(|| lookup("target roles", "target_roles"))
        .and_then(|v| v.as_array())
        .map(|a| {
            a.iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    let content = lookup("intervention content", "intervention_content")
        .or_else(|| lookup("content", "content"))
        .and_then(|v| v.as_str())
        .ok_or("missing intervention content")?
        .to_string();
    if content.trim().is_empty() {
        return Err("empty intervention content".to_string());
    }
    let modified_dialog = lookup("modified dialog", "modified_dialog")
        .and_then(|v| v.as_str())
        .map(str::to_string);
    Ok(InterventionPayload {
        position,
        issue_type,
        target_roles,
        content,
        modified_dialog,
    })
}

fn first_integer(text: &str) -> Option<usize> {
    let mut current = String::new();
    for c in text.chars() {
        if c.is_ascii_digit() {
            current.push(c);
        } else if !current.is_empty() {
            break;
        }
    }
    current.parse().ok()
}

fn render_history(rounds: &[DialogueRound]) -> String {
    rounds
        .iter()
        .map(|r| format!("{}: {}", r.role, r.text))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_proposal(proposal: &ProjectProposal) -> String {
    format!(
        "Goal: {}\nBackground: {}\nDatasets: {}",
        proposal.goal, proposal.background, proposal.datasets_desc
    )
}

struct DialogueDraft {
    proposal: ProjectProposal,
    dialogue_id: String,
    rounds: Vec<DialogueRound>,
    payload: InterventionPayload,
}

/// Builds a corpus from paper texts through the gateway: proposal extraction,
/// multi-role dialogue simulation with uniformly sampled speakers, positive
/// labeling, and negative selection for evaluation dialogues.
///
/// Papers run concurrently; rounds within a dialogue are sequential because
/// each turn conditions on the history so far.
pub fn llm_forge(
    papers: &[PaperText],
    prompts: &ForgePrompts,
    gateway: &Gateway,
    config: &LlmForgeConfig,
    seed: u64,
) -> Result<(Corpus, Vec<ForgeWarning>), ForgeError> {
    if papers.is_empty() {
        return Err(ForgeError::NoPapers);
    }
    prompts.validate()?;
    let dialogues_per_paper = config.dialogues_per_paper.clamp(1, 5);

    let warnings = Mutex::new(Vec::new());
    let drafts = Mutex::new(Vec::<DialogueDraft>::new());
    let next_paper = std::sync::atomic::AtomicUsize::new(0);
    let workers = config.workers.clamp(1, papers.len());

    std::thread::scope(|scope| -> Result<(), ForgeError> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            handles.push(scope.spawn(|| -> Result<(), ForgeError> {
                loop {
                    let index = next_paper.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if index >= papers.len() {
                        return Ok(());
                    }
                    let paper = &papers[index];
                    let mut produced = forge_paper(
                        paper,
                        index,
                        prompts,
                        gateway,
                        config,
                        dialogues_per_paper,
                        seed,
                        &warnings,
                    )?;
                    drafts.lock().expect("drafts lock").append(&mut produced);
                }
            }));
        }
        for handle in handles {
            handle.join().expect("forge worker panicked")?;
        }
        Ok(())
    })?;

    let mut drafts = drafts.into_inner().expect("drafts lock");
    drafts.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));

    // split assignment over the deterministic dialogue order
    let total = drafts.len();
    let n_val = (total as f64 * config.validation_fraction).round() as usize;
    let n_test = (total as f64 * config.test_fraction).round() as usize;
    let n_train = total.saturating_sub(n_val + n_test);

    let mut proposals: BTreeMap<String, ProjectProposal> = BTreeMap::new();
    let mut dialogues = Vec::new();
    let mut final_warnings = warnings.into_inner().expect("warnings lock");
    for (index, mut draft) in drafts.into_iter().enumerate() {
        let split = if index < n_train {
            Split::Train
        } else if index < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
        let position = draft.payload.position;
        draft.rounds[position].label = RoundLabel::Positive {
            intervention: draft.payload.clone(),
        };
        if split != Split::Train {
            let proposal_text = render_proposal(&draft.proposal);
            let dialogue_text = render_history(&draft.rounds);
            let prompt = prompts
                .negative_selection
                .replace("{{proposal}}", &proposal_text)
                .replace("{{dialogue}}", &dialogue_text);
            let raw = gateway.complete(&ChatRequest {
                model: gateway.config().models.forge.clone(),
                messages: vec![ChatMessage::user(prompt)],
                temperature: 0.0,
                max_tokens: 16,
            })?;
            match first_integer(&raw) {
                Some(t) if t < draft.rounds.len() && t != position => {
                    draft.rounds[t].label = RoundLabel::Negative;
                }
                other => {
                    final_warnings.push(ForgeWarning::NegativeParse {
                        dialogue_id: draft.dialogue_id.clone(),
                        reason: format!("got {other:?} from {raw:?}"),
                    });
                    continue;
                }
            }
        }
        proposals
            .entry(draft.proposal.id.clone())
            .or_insert_with(|| draft.proposal.clone());
        dialogues.push(Dialogue {
            id: draft.dialogue_id,
            proposal_id: draft.proposal.id.clone(),
            split,
            rounds: draft.rounds,
        });
    }

    let corpus = Corpus::from_parts(proposals.into_values().collect(), dialogues)?;
    Ok((corpus, final_warnings))
}

#[allow(clippy::too_many_arguments)]
fn forge_paper(
    paper: &PaperText,
    paper_index: usize,
    prompts: &ForgePrompts,
    gateway: &Gateway,
    config: &LlmForgeConfig,
    dialogues_per_paper: usize,
    seed: u64,
    warnings: &Mutex<Vec<ForgeWarning>>,
) -> Result<Vec<DialogueDraft>, ForgeError> {
    let extraction = prompts
        .proposal_extraction
        .replace("{{paper}}", &paper.text);
    let raw = gateway.complete(&ChatRequest {
        model: gateway.config().models.forge.clone(),
        messages: vec![ChatMessage::user(extraction)],
        temperature: config.temperature,
        max_tokens: config.max_tokens,
    })?;
    let extracted: ExtractedProposal = match serde_json::from_str(strip_code_fence(&raw)) {
        Ok(p) => p,
        Err(e) => {
            warnings.lock().expect("warnings lock").push(ForgeWarning::ProposalParse {
                paper_id: paper.id.clone(),
                reason: e.to_string(),
            });
            return Ok(Vec::new());
        }
    };
    let proposal = ProjectProposal {
        id: format!("prop_{}", paper.id),
        goal: extracted.goal,
        background: extracted.background,
        datasets_desc: extracted.datasets_desc,
        golden_conclusion: None,
        roles: FORGE_ROLES.iter().map(|r| r.to_string()).collect(),
    };
    let proposal_text = render_proposal(&proposal);

    let mut drafts = Vec::new();
    for sub_seed in 0..dialogues_per_paper {
        let dialogue_id = format!("{}_s{}", paper.id, sub_seed);
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ ((paper_index as u64) << 20) ^ sub_seed as u64);
        let mut rounds: Vec<DialogueRound> = Vec::with_capacity(config.rounds_per_dialogue);
        for t in 0..config.rounds_per_dialogue {
            // speakers sampled uniformly along the timeline
            let role = FORGE_ROLES[rng.gen_range(0..FORGE_ROLES.len())];
            let template = prompts
                .role_templates
                .get(role)
                .ok_or_else(|| ForgeError::MissingRoleTemplate(role.to_string()))?;
            let prompt = template
                .replace("{{proposal}}", &proposal_text)
                .replace("{{history}}", &render_history(&rounds));
            let text = gateway.complete(&ChatRequest {
                model: gateway.config().models.forge.clone(),
                messages: vec![ChatMessage::user(prompt)],
                temperature: config.temperature,
                max_tokens: config.max_tokens,
            })?;
            rounds.push(DialogueRound {
                dialogue_id: dialogue_id.clone(),
                t,
                role: role.to_string(),
                text: text.trim().to_string(),
                label: RoundLabel::Unlabeled,
            });
        }

        let labeling = prompts
            .positive_labeling
            .replace("{{proposal}}", &proposal_text)
            .replace("{{dialogue}}", &render_history(&rounds));
        let raw = gateway.complete(&ChatRequest {
            model: gateway.config().models.forge.clone(),
            messages: vec![ChatMessage::user(labeling)],
            temperature: 0.0,
            max_tokens: config.max_tokens,
        })?;
        match parse_payload_json(&raw, rounds.len()) {
            Ok(payload) => drafts.push(DialogueDraft {
                proposal: proposal.clone(),
                dialogue_id,
                rounds,
                payload,
            }),
            Err(reason) => {
                warnings
                    .lock()
                    .expect("warnings lock")
                    .push(ForgeWarning::LabelParse {
                        dialogue_id,
                        reason,
                    });
            }
        }
    }
    Ok(drafts)
}
