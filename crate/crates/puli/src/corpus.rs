//! Data model, on-disk JSONL format, and positive-unlabeled assembly for
//! multi-round scientific dialogues.
//!
//! A corpus file is one record per line: a required versioned header, then
//! `proposal` records, then `dialogue` records embedding their ordered round
//! arrays. Corpora are immutable after load and safe to share across threads.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics;

pub const FORMAT_NAME: &str = "puli-corpus";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line 1: missing or invalid header, expected {{\"format\":\"puli-corpus\",\"version\":1}}")]
    BadHeader,
    #[error("line {line}: unsupported corpus format/version ({format} v{version})")]
    UnsupportedVersion {
        line: usize,
        format: String,
        version: u32,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate proposal id {id}")]
    DuplicateProposal { line: usize, id: String },
    #[error("line {line}: duplicate dialogue id {id}")]
    DuplicateDialogue { line: usize, id: String },
    #[error("line {line}: proposal {id} has an empty goal")]
    EmptyGoal { line: usize, id: String },
    #[error("line {line}: proposal {id} declares fewer than 2 roles")]
    TooFewRoles { line: usize, id: String },
    #[error("line {line}: dialogue {dialogue}: non-consecutive step, expected t={expected} found t={found}")]
    NonConsecutiveStep {
        line: usize,
        dialogue: String,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: dialogue {dialogue}: round {t} carries dialogue_id {found}")]
    RoundDialogueMismatch {
        line: usize,
        dialogue: String,
        t: usize,
        found: String,
    },
    #[error("line {line}: dialogue {dialogue}: intervention content is empty")]
    EmptyInterventionContent { line: usize, dialogue: String },
    #[error("line {line}: train dialogue {dialogue} carries a negative label")]
    NegativeInTrain { line: usize, dialogue: String },
    #[error("dialogue {dialogue} references unknown proposal {proposal}")]
    UnknownProposal { dialogue: String, proposal: String },
    #[error("dialogue {dialogue} has {found} positive rounds, expected exactly 1")]
    PositiveCount { dialogue: String, found: usize },
    #[error("{split} dialogue {dialogue} has {found} negative rounds, expected exactly 1")]
    NegativeCount {
        split: Split,
        dialogue: String,
        found: usize,
    },
    #[error("dialogue {dialogue} is too short to sample {requested} distinct unlabeled rounds ({available} available)")]
    TooShort {
        dialogue: String,
        requested: usize,
        available: usize,
    },
    #[error("cannot write corpus file {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

/// Closed set of intervention issue types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueType {
    ScientificError,
    LowCollaboration,
    ScopeDrift,
    MissedOpportunity,
}

impl IssueType {
    /// Parses both the snake_case wire form and the spaced form used by
    /// labeling models ("scope drift from project goal" → ScopeDrift).
    pub fn parse_lenient(raw: &str) -> Option<IssueType> {
        let norm: String = raw
            .to_lowercase()
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        let norm = norm.trim_matches('_');
        if norm.starts_with("scientific_error") {
            Some(IssueType::ScientificError)
        } else if norm.starts_with("low_collaboration") {
            Some(IssueType::LowCollaboration)
        } else if norm.starts_with("scope_drift") {
            Some(IssueType::ScopeDrift)
        } else if norm.starts_with("missed_opportunity") {
            Some(IssueType::MissedOpportunity)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPayload {
    /// Step index the intervention follows.
    pub position: usize,
    pub issue_type: IssueType,
    pub target_roles: Vec<String>,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified_dialog: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundLabel {
    Positive { intervention: InterventionPayload },
    Negative,
    Unlabeled,
}

impl RoundLabel {
    pub fn is_positive(&self) -> bool {
        matches!(self, RoundLabel::Positive { .. })
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, RoundLabel::Negative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueRound {
    pub dialogue_id: String,
    pub t: usize,
    pub role: String,
    pub text: String,
    pub label: RoundLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectProposal {
    pub id: String,
    pub goal: String,
    pub background: String,
    pub datasets_desc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_conclusion: Option<String>,
    pub roles: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Validation => write!(f, "validation"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub proposal_id: String,
    pub split: Split,
    pub rounds: Vec<DialogueRound>,
}

impl Dialogue {
    pub fn positive_rounds(&self) -> impl Iterator<Item = &DialogueRound> {
        self.rounds.iter().filter(|r| r.label.is_positive())
    }
}

/// Loaded corpus: proposals and dialogues, both keyed and iterable in id
/// order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    proposals: BTreeMap<String, ProjectProposal>,
    dialogues: BTreeMap<String, Dialogue>,
}

/// Reference to one round of one dialogue.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoundRef {
    pub dialogue_id: String,
    pub t: usize,
}

impl fmt::Display for RoundRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.dialogue_id, self.t)
    }
}

/// Positive-unlabeled dataset for one split. Validation/test carry evaluation
/// negatives instead of unlabeled rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PUDataset {
    pub split: Split,
    pub positives: Vec<RoundRef>,
    pub unlabeled: Vec<RoundRef>,
    pub negatives_eval: Vec<RoundRef>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitLabelCounts {
    pub dialogues: usize,
    pub positive: usize,
    pub negative: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub proposals: usize,
    pub dialogues: usize,
    pub rounds: usize,
    pub avg_rounds_per_dialogue: f64,
    pub avg_tokens_per_round: f64,
    pub per_split: BTreeMap<String, SplitLabelCounts>,
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# Proposals                {}", self.proposals)?;
        writeln!(f, "# Dialogues                {}", self.dialogues)?;
        writeln!(f, "# Rounds                   {}", self.rounds)?;
        writeln!(
            f,
            "# Avg. Rounds per Dialogue {:.1}",
            self.avg_rounds_per_dialogue
        )?;
        writeln!(
            f,
            "# Avg. Tokens per Round    {:.1}",
            self.avg_tokens_per_round
        )?;
        writeln!(f, "{:<12} {:>10} {:>10} {:>10} {:>10}", "Split", "Dialogues", "Positive", "Negative", "Unlabeled")?;
        for (split, counts) in &self.per_split {
            writeln!(
                f,
                "{:<12} {:>10} {:>10} {:>10} {:>10}",
                split, counts.dialogues, counts.positive, counts.negative, counts.unlabeled
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Proposal(ProjectProposal),
    Dialogue(Dialogue),
}

impl Corpus {
    pub fn new() -> Self {
        Corpus::default()
    }

    pub fn proposals(&self) -> impl Iterator<Item = &ProjectProposal> {
        self.proposals.values()
    }

    pub fn dialogues(&self) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.values()
    }

    pub fn dialogues_in(&self, split: Split) -> impl Iterator<Item = &Dialogue> {
        self.dialogues.values().filter(move |d| d.split == split)
    }

    pub fn proposal(&self, id: &str) -> Option<&ProjectProposal> {
        self.proposals.get(id)
    }

    pub fn dialogue(&self, id: &str) -> Option<&Dialogue> {
        self.dialogues.get(id)
    }

    pub fn proposal_for(&self, dialogue: &Dialogue) -> &ProjectProposal {
        // validated at construction
        &self.proposals[&dialogue.proposal_id]
    }

    pub fn round(&self, round_ref: &RoundRef) -> Option<&DialogueRound> {
        self.dialogues
            .get(&round_ref.dialogue_id)
            .and_then(|d| d.rounds.get(round_ref.t))
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty() && self.proposals.is_empty()
    }

    /// Assembles a corpus from parts, running the same referential checks as
    /// the loader.
    pub fn from_parts(
        proposals: Vec<ProjectProposal>,
        dialogues: Vec<Dialogue>,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for (i, p) in proposals.into_iter().enumerate() {
            corpus.insert_proposal(p, i + 1)?;
        }
        for (i, d) in dialogues.into_iter().enumerate() {
            corpus.insert_dialogue(d, i + 1)?;
        }
        corpus.check_references()?;
        Ok(corpus)
    }

    fn insert_proposal(&mut self, p: ProjectProposal, line: usize) -> Result<(), CorpusError> {
        if p.goal.trim().is_empty() {
            return Err(CorpusError::EmptyGoal { line, id: p.id });
        }
        if p.roles.len() < 2 {
            return Err(CorpusError::TooFewRoles { line, id: p.id });
        }
        if self.proposals.contains_key(&p.id) {
            return Err(CorpusError::DuplicateProposal { line, id: p.id });
        }
        self.proposals.insert(p.id.clone(), p);
        Ok(())
    }

    fn insert_dialogue(&mut self, d: Dialogue, line: usize) -> Result<(), CorpusError> {
        if self.dialogues.contains_key(&d.id) {
            return Err(CorpusError::DuplicateDialogue { line, id: d.id });
        }
        for (expected, round) in d.rounds.iter().enumerate() {
            if round.t != expected {
                return Err(CorpusError::NonConsecutiveStep {
                    line,
                    dialogue: d.id,
                    expected,
                    found: round.t,
                });
            }
            if round.dialogue_id != d.id {
                return Err(CorpusError::RoundDialogueMismatch {
                    line,
                    dialogue: d.id,
                    t: round.t,
                    found: round.dialogue_id.clone(),
                });
            }
            match &round.label {
                RoundLabel::Positive { intervention } => {
                    if intervention.content.trim().is_empty() {
                        return Err(CorpusError::EmptyInterventionContent {
                            line,
                            dialogue: d.id,
                        });
                    }
                }
                RoundLabel::Negative if d.split == Split::Train => {
                    return Err(CorpusError::NegativeInTrain { line, dialogue: d.id });
                }
                _ => {}
            }
        }
        self.dialogues.insert(d.id.clone(), d);
        Ok(())
    }

    fn check_references(&self) -> Result<(), CorpusError> {
        for d in self.dialogues.values() {
            if !self.proposals.contains_key(&d.proposal_id) {
                return Err(CorpusError::UnknownProposal {
                    dialogue: d.id.clone(),
                    proposal: d.proposal_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Loads a JSONL corpus file, rejecting structurally invalid records with
/// the offending line number. A zero-length file yields an empty corpus.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_corpus_str(&content)
}

/// Same as [`load_corpus`] but over an in-memory string.
pub fn load_corpus_str(content: &str) -> Result<Corpus, CorpusError> {
    if content.trim().is_empty() {
        return Ok(Corpus::new());
    }
    let mut lines = content.lines().enumerate();
    let (_, header_line) = lines.next().ok_or(CorpusError::BadHeader)?;
    let header: Header = serde_json::from_str(header_line).map_err(|_| CorpusError::BadHeader)?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(CorpusError::UnsupportedVersion {
            line: 1,
            format: header.format,
            version: header.version,
        });
    }
    let mut corpus = Corpus::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
            line,
            message: e.to_string(),
        })?;
        match record {
            Record::Proposal(p) => corpus.insert_proposal(p, line)?,
            Record::Dialogue(d) => corpus.insert_dialogue(d, line)?,
        }
    }
    corpus.check_references()?;
    Ok(corpus)
}

/// Serializes a corpus in canonical order: header, proposals sorted by id,
/// then dialogues sorted by id with rounds in step order.
pub fn corpus_to_string(corpus: &Corpus) -> String {
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&Header {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
    }).expect("header serializes"));
    out.push('\n');
    for p in corpus.proposals.values() {
        out.push_str(&serde_json::to_string(&Record::Proposal(p.clone())).expect("proposal serializes"));
        out.push('\n');
    }
    for d in corpus.dialogues.values() {
        out.push_str(&serde_json::to_string(&Record::Dialogue(d.clone())).expect("dialogue serializes"));
        out.push('\n');
    }
    out
}

/// Writes the canonical serialization to disk.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|source| CorpusError::Write {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(corpus_to_string(corpus).as_bytes())
        .map_err(|source| CorpusError::Write {
            path: path.display().to_string(),
            source,
        })
}

/// Assembles the positive-unlabeled dataset for a split.
///
/// Train dialogues contribute their single positive plus `k_unlabeled`
/// distinct non-positive rounds sampled without replacement under `seed`.
/// Validation/test dialogues contribute one positive and one negative and no
/// unlabeled rounds.
pub fn assemble_pu(
    corpus: &Corpus,
    split: Split,
    k_unlabeled: usize,
    seed: u64,
) -> Result<PUDataset, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = Vec::new();
    let mut unlabeled = Vec::new();
    let mut negatives_eval = Vec::new();

    for dialogue in corpus.dialogues_in(split) {
        let positive_ts: Vec<usize> = dialogue
            .rounds
            .iter()
            .filter(|r| r.label.is_positive())
            .map(|r| r.t)
            .collect();
        if positive_ts.len() != 1 {
            return Err(CorpusError::PositiveCount {
                dialogue: dialogue.id.clone(),
                found: positive_ts.len(),
            });
        }
        let positive_t = positive_ts[0];
        positives.push(RoundRef {
            dialogue_id: dialogue.id.clone(),
            t: positive_t,
        });

        match split {
            Split::Train => {
                let candidates: Vec<usize> = (0..dialogue.rounds.len())
                    .filter(|&t| t != positive_t)
                    .collect();
                if candidates.len() < k_unlabeled {
                    return Err(CorpusError::TooShort {
                        dialogue: dialogue.id.clone(),
                        requested: k_unlabeled,
                        available: candidates.len(),
                    });
                }
                let mut sampled: Vec<usize> = candidates
                    .choose_multiple(&mut rng, k_unlabeled)
                    .copied()
                    .collect();
                sampled.sort_unstable();
                unlabeled.extend(sampled.into_iter().map(|t| RoundRef {
                    dialogue_id: dialogue.id.clone(),
                    t,
                }));
            }
            Split::Validation | Split::Test => {
                let negative_ts: Vec<usize> = dialogue
                    .rounds
                    .iter()
                    .filter(|r| r.label.is_negative())
                    .map(|r| r.t)
                    .collect();
                if negative_ts.len() != 1 {
                    return Err(CorpusError::NegativeCount {
                        split,
                        dialogue: dialogue.id.clone(),
                        found: negative_ts.len(),
                    });
                }
                negatives_eval.push(RoundRef {
                    dialogue_id: dialogue.id.clone(),
                    t: negative_ts[0],
                });
            }
        }
    }

    Ok(PUDataset {
        split,
        positives,
        unlabeled,
        negatives_eval,
    })
}

/// Corpus-level statistics in the layout of the dataset summary table.
pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut rounds = 0usize;
    let mut tokens = 0usize;
    let mut per_split: BTreeMap<String, SplitLabelCounts> = BTreeMap::new();
    for split in [Split::Train, Split::Validation, Split::Test] {
        per_split.insert(
            split.to_string(),
            SplitLabelCounts {
                dialogues: 0,
                positive: 0,
                negative: 0,
                unlabeled: 0,
            },
        );
    }
    for dialogue in corpus.dialogues() {
        let counts = per_split
            .get_mut(&dialogue.split.to_string())
            .expect("all splits present");
        counts.dialogues += 1;
        for round in &dialogue.rounds {
            rounds += 1;
            tokens += metrics::token_count(&round.text);
            match round.label {
                RoundLabel::Positive { .. } => counts.positive += 1,
                RoundLabel::Negative => counts.negative += 1,
                RoundLabel::Unlabeled => counts.unlabeled += 1,
            }
        }
    }
    let dialogues = corpus.len();
    StatsReport {
        proposals: corpus.proposals.len(),
        dialogues,
        rounds,
        avg_rounds_per_dialogue: if dialogues == 0 {
            0.0
        } else {
            rounds as f64 / dialogues as f64
        },
        avg_tokens_per_round: if rounds == 0 {
            0.0
        } else {
            tokens as f64 / rounds as f64
        },
        per_split,
    }
}
