//! Run configuration: a plain key-value text format with sections, a
//! canonical renderer for manifests, and content hashing of inputs.
//!
//! Every field has a default; unknown sections or keys are rejected so a typo
//! cannot silently fall back to a default. The canonical rendering writes
//! every field explicitly, which makes run manifests diff-friendly and lets a
//! run be reproduced from its manifest alone.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::forge::{LlmForgeConfig, SynthConfig};
use crate::gateway::GatewayConfig;
use crate::runtime::GateMode;
use crate::trainloop::{BackendKind, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {got:?}")]
    BadLine { line: usize, got: String },
    #[error("line {line}: unknown section [{0}]", .section)]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key {key:?} in section [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: invalid value {value:?} for {key}: {message}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
    #[error("key {key} outside any section (line {line})")]
    NoSection { line: usize, key: String },
}

/// Union of all subcommand configuration.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub forge: LlmForgeConfig,
    pub gateway: GatewayConfig,
    pub stream_gate: GateMode,
}

fn parse_scalar<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        message: e.to_string(),
    })
}

fn parse_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_f64_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    parse_list(value)
        .iter()
        .map(|v| parse_scalar::<f64>(line, key, v))
        .collect()
}

impl RunConfig {
    /// Parses the sectioned key-value format. Unknown keys are errors.
    pub fn parse(content: &str) -> Result<RunConfig, ConfigError> {
        let mut config = RunConfig::default();
        let mut section: Option<String> = None;
        for (idx, raw) in content.lines().enumerate() {
            let line = idx + 1;
            let text = raw.split('#').next().unwrap_or("").trim();
            if text.is_empty() {
                continue;
            }
            if let Some(name) = text.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !["train", "synth", "forge", "gateway", "stream"].contains(&name.as_str()) {
                    return Err(ConfigError::UnknownSection {
                        line,
                        section: name,
                    });
                }
                section = Some(name);
                continue;
            }
            let (key, value) = text.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line,
                got: text.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let section = section.as_deref().ok_or_else(|| ConfigError::NoSection {
                line,
                key: key.to_string(),
            })?;
            config.apply(line, section, key, value)?;
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        RunConfig::parse(&content)
    }

    fn apply(&mut self, line: usize, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let unknown = || ConfigError::UnknownKey {
            line,
            section: section.to_string(),
            key: key.to_string(),
        };
        match section {
            "train" => match key {
                "epochs" => self.train.epochs = parse_scalar(line, key, value)?,
                "lambda" => self.train.lambda = parse_scalar(line, key, value)?,
                "eta" => self.train.eta = parse_scalar(line, key, value)?,
                "k_unlabeled" => self.train.k_unlabeled = parse_scalar(line, key, value)?,
                "seed" => self.train.seed = parse_scalar(line, key, value)?,
                "backend" => {
                    self.train.backend = match value {
                        "surrogate" => BackendKind::Surrogate,
                        "remote" => BackendKind::Remote,
                        other => {
                            return Err(ConfigError::BadValue {
                                line,
                                key: key.to_string(),
                                value: other.to_string(),
                                message: "expected surrogate or remote".to_string(),
                            })
                        }
                    }
                }
                "observer_dim" => self.train.observer_dim = parse_scalar(line, key, value)?,
                "presenter_dim" => self.train.presenter_dim = parse_scalar(line, key, value)?,
                "hidden_width" => self.train.hidden_width = parse_scalar(line, key, value)?,
                "observer_buckets" => self.train.observer_buckets = parse_scalar(line, key, value)?,
                "observer_lr" => self.train.observer_lr = parse_scalar(line, key, value)?,
                "observer_fit_epochs" => {
                    self.train.observer_fit_epochs = parse_scalar(line, key, value)?
                }
                "observer_class_balance" => {
                    self.train.observer_class_balance = parse_scalar(line, key, value)?
                }
                "max_summary_tokens" => {
                    self.train.max_summary_tokens = parse_scalar(line, key, value)?
                }
                "lambda_sweep" => {
                    self.train.lambda_sweep = Some(parse_f64_list(line, key, value)?)
                }
                _ => return Err(unknown()),
            },
            "synth" => match key {
                "n_dialogues" => self.synth.n_dialogues = parse_scalar(line, key, value)?,
                "rounds_per_dialogue" => {
                    self.synth.rounds_per_dialogue = parse_scalar(line, key, value)?
                }
                "on_topic_vocab" => self.synth.on_topic_vocab = parse_list(value),
                "drift_vocab" => self.synth.drift_vocab = parse_list(value),
                "drift_position_lo" => {
                    self.synth.drift_position_range.0 = parse_scalar(line, key, value)?
                }
                "drift_position_hi" => {
                    self.synth.drift_position_range.1 = parse_scalar(line, key, value)?
                }
                "hidden_drift_rounds" => {
                    self.synth.hidden_drift_rounds = parse_scalar(line, key, value)?
                }
                "drift_mix" => self.synth.drift_mix = parse_scalar(line, key, value)?,
                "drift_mix_low" => self.synth.drift_mix_low = parse_scalar(line, key, value)?,
                "tokens_per_round" => self.synth.tokens_per_round = parse_scalar(line, key, value)?,
                "validation_fraction" => {
                    self.synth.validation_fraction = parse_scalar(line, key, value)?
                }
                "test_fraction" => self.synth.test_fraction = parse_scalar(line, key, value)?,
                "seed" => self.synth.seed = parse_scalar(line, key, value)?,
                _ => return Err(unknown()),
            },
            "forge" => match key {
                "rounds_per_dialogue" => {
                    self.forge.rounds_per_dialogue = parse_scalar(line, key, value)?
                }
                "dialogues_per_paper" => {
                    self.forge.dialogues_per_paper = parse_scalar(line, key, value)?
                }
                "temperature" => self.forge.temperature = parse_scalar(line, key, value)?,
                "max_tokens" => self.forge.max_tokens = parse_scalar(line, key, value)?,
                "validation_fraction" => {
                    self.forge.validation_fraction = parse_scalar(line, key, value)?
                }
                "test_fraction" => self.forge.test_fraction = parse_scalar(line, key, value)?,
                "workers" => self.forge.workers = parse_scalar(line, key, value)?,
                _ => return Err(unknown()),
            },
            "gateway" => match key {
                "endpoint" => self.gateway.endpoint = value.to_string(),
                "embeddings_endpoint" => {
                    self.gateway.embeddings_endpoint = Some(value.to_string())
                }
                "api_key_env" => self.gateway.api_key_env = value.to_string(),
                "model.summarizer" => self.gateway.models.summarizer = value.to_string(),
                "model.forge" => self.gateway.models.forge = value.to_string(),
                "model.judge" => self.gateway.models.judge = value.to_string(),
                "model.presenter" => self.gateway.models.presenter = value.to_string(),
                "model.embeddings" => self.gateway.models.embeddings = value.to_string(),
                "temperature" => self.gateway.temperature = parse_scalar(line, key, value)?,
                "max_tokens" => self.gateway.max_tokens = parse_scalar(line, key, value)?,
                "max_attempts" => self.gateway.max_attempts = parse_scalar(line, key, value)?,
                "backoff_base_ms" => self.gateway.backoff_base_ms = parse_scalar(line, key, value)?,
                "in_flight_cap" => self.gateway.in_flight_cap = parse_scalar(line, key, value)?,
                _ => return Err(unknown()),
            },
            "stream" => match key {
                "gate" => {
                    self.stream_gate = match value {
                        "observer" => GateMode::Observer,
                        "coordinator" => GateMode::Coordinator,
                        "silent" => GateMode::Silent,
                        other => {
                            return Err(ConfigError::BadValue {
                                line,
                                key: key.to_string(),
                                value: other.to_string(),
                                message: "expected observer, coordinator, or silent".to_string(),
                            })
                        }
                    }
                }
                _ => return Err(unknown()),
            },
            _ => unreachable!("sections validated above"),
        }
        Ok(())
    }

    /// Canonical rendering: every field explicit, stable order. Parsing the
    /// rendering reproduces the config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let t = &self.train;
        let _ = writeln!(out, "[train]");
        let _ = writeln!(out, "epochs = {}", t.epochs);
        let _ = writeln!(out, "lambda = {}", t.lambda);
        let _ = writeln!(out, "eta = {}", t.eta);
        let _ = writeln!(out, "k_unlabeled = {}", t.k_unlabeled);
        let _ = writeln!(out, "seed = {}", t.seed);
        let _ = writeln!(
            out,
            "backend = {}",
            match t.backend {
                BackendKind::Surrogate => "surrogate",
                BackendKind::Remote => "remote",
            }
        );
        let _ = writeln!(out, "observer_dim = {}", t.observer_dim);
        let _ = writeln!(out, "presenter_dim = {}", t.presenter_dim);
        let _ = writeln!(out, "hidden_width = {}", t.hidden_width);
        let _ = writeln!(out, "observer_buckets = {}", t.observer_buckets);
        let _ = writeln!(out, "observer_lr = {}", t.observer_lr);
        let _ = writeln!(out, "observer_fit_epochs = {}", t.observer_fit_epochs);
        let _ = writeln!(out, "observer_class_balance = {}", t.observer_class_balance);
        let _ = writeln!(out, "max_summary_tokens = {}", t.max_summary_tokens);
        if let Some(sweep) = &t.lambda_sweep {
            let rendered: Vec<String> = sweep.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "lambda_sweep = {}", rendered.join(","));
        }
        let s = &self.synth;
        let _ = writeln!(out, "\n[synth]");
        let _ = writeln!(out, "n_dialogues = {}", s.n_dialogues);
        let _ = writeln!(out, "rounds_per_dialogue = {}", s.rounds_per_dialogue);
        let _ = writeln!(out, "on_topic_vocab = {}", s.on_topic_vocab.join(","));
        let _ = writeln!(out, "drift_vocab = {}", s.drift_vocab.join(","));
        let _ = writeln!(out, "drift_position_lo = {}", s.drift_position_range.0);
        let _ = writeln!(out, "drift_position_hi = {}", s.drift_position_range.1);
        let _ = writeln!(out, "hidden_drift_rounds = {}", s.hidden_drift_rounds);
        let _ = writeln!(out, "drift_mix = {}", s.drift_mix);
        let _ = writeln!(out, "drift_mix_low = {}", s.drift_mix_low);
        let _ = writeln!(out, "tokens_per_round = {}", s.tokens_per_round);
        let _ = writeln!(out, "validation_fraction = {}", s.validation_fraction);
        let _ = writeln!(out, "test_fraction = {}", s.test_fraction);
        let _ = writeln!(out, "seed = {}", s.seed);
        let f = &self.forge;
        let _ = writeln!(out, "\n[forge]");
        let _ = writeln!(out, "rounds_per_dialogue = {}", f.rounds_per_dialogue);
        let _ = writeln!(out, "dialogues_per_paper = {}", f.dialogues_per_paper);
        let _ = writeln!(out, "temperature = {}", f.temperature);
        let _ = writeln!(out, "max_tokens = {}", f.max_tokens);
        let _ = writeln!(out, "validation_fraction = {}", f.validation_fraction);
        let _ = writeln!(out, "test_fraction = {}", f.test_fraction);
        let _ = writeln!(out, "workers = {}", f.workers);
        let g = &self.gateway;
        let _ = writeln!(out, "\n[gateway]");
        let _ = writeln!(out, "endpoint = {}", g.endpoint);
        if let Some(embeddings) = &g.embeddings_endpoint {
            let _ = writeln!(out, "embeddings_endpoint = {embeddings}");
        }
        let _ = writeln!(out, "api_key_env = {}", g.api_key_env);
        let _ = writeln!(out, "model.summarizer = {}", g.models.summarizer);
        let _ = writeln!(out, "model.forge = {}", g.models.forge);
        let _ = writeln!(out, "model.judge = {}", g.models.judge);
        let _ = writeln!(out, "model.presenter = {}", g.models.presenter);
        let _ = writeln!(out, "model.embeddings = {}", g.models.embeddings);
        let _ = writeln!(out, "temperature = {}", g.temperature);
        let _ = writeln!(out, "max_tokens = {}", g.max_tokens);
        let _ = writeln!(out, "max_attempts = {}", g.max_attempts);
        let _ = writeln!(out, "backoff_base_ms = {}", g.backoff_base_ms);
        let _ = writeln!(out, "in_flight_cap = {}", g.in_flight_cap);
        let _ = writeln!(out, "\n[stream]");
        let _ = writeln!(
            out,
            "gate = {}",
            match self.stream_gate {
                GateMode::Observer => "observer",
                GateMode::Coordinator => "coordinator",
                GateMode::Silent => "silent",
            }
        );
        out
    }
}

/// SHA-256 of a byte slice, hex-encoded.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Content hash of a file, for run manifests.
pub fn hash_file(path: impl AsRef<Path>) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Run manifest: command, seed, config snapshot, and input hashes. A run is
/// reproducible from its manifest alone.
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let config_text = self.config.render();
        let mut out = String::from("puli-manifest v1\n");
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "config_sha256 = {}", sha256_hex(config_text.as_bytes()));
        for (name, hash) in &self.inputs {
            let _ = writeln!(out, "input.{name} = {hash}");
        }
        out.push_str("\n# config snapshot\n");
        out.push_str(&config_text);
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.as_ref())?;
        std::fs::write(dir.as_ref().join("manifest.txt"), self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_render_and_parse_back() {
        let config = RunConfig::default();
        let rendered = config.render();
        let parsed = RunConfig::parse(&rendered).unwrap();
        assert_eq!(parsed.render(), rendered);
    }

    #[test]
    fn values_are_applied_per_section() {
        let text = "\n[train]\nepochs = 7\nlambda = 0.4\nbackend = remote\n\n[synth]\nn_dialogues = 11\n\n[stream]\ngate = silent\n";
        let config = RunConfig::parse(text).unwrap();
        assert_eq!(config.train.epochs, 7);
        assert_eq!(config.train.lambda, 0.4);
        assert_eq!(config.train.backend, BackendKind::Remote);
        assert_eq!(config.synth.n_dialogues, 11);
        assert_eq!(config.stream_gate, GateMode::Silent);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse("[train]\nepocs = 7\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { .. }));
    }

    #[test]
    fn unknown_section_is_rejected() {
        let err = RunConfig::parse("[trainer]\nepochs = 7\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownSection { .. }));
    }

    #[test]
    fn key_outside_section_is_rejected() {
        let err = RunConfig::parse("epochs = 7\n").unwrap_err();
        assert!(matches!(err, ConfigError::NoSection { .. }));
    }

    #[test]
    fn bad_value_reports_line() {
        let err = RunConfig::parse("[train]\nepochs = banana\n").unwrap_err();
        match err {
            ConfigError::BadValue { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# top\n[train]\n# note\nepochs = 3  # trailing\n\n";
        let config = RunConfig::parse(text).unwrap();
        assert_eq!(config.train.epochs, 3);
    }

    #[test]
    fn manifest_contains_config_hash_and_inputs() {
        let manifest = Manifest {
            command: "train".to_string(),
            seed: 42,
            config: RunConfig::default(),
            inputs: vec![("corpus".to_string(), "abc123".to_string())],
        };
        let text = manifest.render();
        assert!(text.starts_with("puli-manifest v1\n"));
        assert!(text.contains("command = train"));
        assert!(text.contains("seed = 42"));
        assert!(text.contains("input.corpus = abc123"));
        assert!(text.contains("config_sha256 = "));
        assert!(text.contains("[train]"));
    }

    #[test]
    fn sha256_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
