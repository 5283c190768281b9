//! The intervention coordinator: state encoding over the two learner
//! embeddings, a 6-layer perceptron policy, and REINFORCE updates.
//!
//! The policy owns a linear projector that maps the presenter embedding into
//! the observer embedding's dimension; the state is the concatenation of the
//! observer embedding and the projected presenter embedding, so gradients
//! flow through the projector as part of the parameter vector.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LAYER_COUNT: usize = 6;

/// Sigmoid outputs are clamped into this open interval before taking logs.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("embedding dimension mismatch: expected {expected}, got {got} for {which}")]
    DimensionMismatch {
        which: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("total reward is not finite")]
    NonFiniteReward,
    #[error("non-finite gradient encountered; epoch aborted")]
    NonFiniteGradient,
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Observer embedding dimension d_o; the state has length 2·d_o.
    pub observer_dim: usize,
    /// Presenter embedding dimension d_p, projected down/up to d_o.
    pub presenter_dim: usize,
    /// Width of the five hidden layers.
    pub hidden_width: usize,
    /// REINFORCE learning rate η.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            observer_dim: 64,
            presenter_dim: 32,
            hidden_width: 128,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    input_dim: usize,
    output_dim: usize,
    // row-major output_dim x input_dim
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64], output: &mut Vec<f64>) {
        output.clear();
        for o in 0..self.output_dim {
            let row = &self.weights[o * self.input_dim..(o + 1) * self.input_dim];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.biases[o];
            output.push(z);
        }
    }
}

/// One (state, action) step of an epoch trajectory, carrying the raw learner
/// embeddings so the update can differentiate through the projector.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub observer_embed: Vec<f64>,
    pub presenter_embed: Vec<f64>,
    pub action: bool,
    pub log_prob: f64,
}

/// The per-epoch trajectory over all unlabeled rounds.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Gradient of log π with respect to every policy parameter.
#[derive(Debug, Clone)]
pub struct PolicyGradient {
    projector: Vec<f64>,
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl PolicyGradient {
    fn zeros_like(policy: &CoordinatorPolicy) -> Self {
        PolicyGradient {
            projector: vec![0.0; policy.projector.len()],
            layers: policy
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    fn add(&mut self, other: &PolicyGradient) {
        for (a, b) in self.projector.iter_mut().zip(&other.projector) {
            *a += b;
        }
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, g) in w.iter_mut().zip(ow) {
                *a += g;
            }
            for (a, g) in b.iter_mut().zip(ob) {
                *a += g;
            }
        }
    }

    fn is_finite(&self) -> bool {
        self.projector.iter().all(|v| v.is_finite())
            && self
                .layers
                .iter()
                .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
    }

    /// Flattened copy in canonical parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.projector.clone();
        for (w, b) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Projector plus 6-layer perceptron producing the intervention probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorPolicy {
    observer_dim: usize,
    presenter_dim: usize,
    hidden_width: usize,
    learning_rate: f64,
    // d_o x d_p, row-major
    projector: Vec<f64>,
    layers: Vec<Layer>,
}

// Kaiming-uniform bound: keeps activation variance roughly constant through
// the ReLU stack. A tighter ±sqrt(1/fan_in) bound attenuates signal variance
// by ~6x per layer, which leaves a 6-layer policy with no usable gradient.
fn init_uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl CoordinatorPolicy {
    pub fn new(config: PolicyConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d_o = config.observer_dim;
        let d_p = config.presenter_dim;
        let width = config.hidden_width;
        let projector = init_uniform(&mut rng, d_o * d_p, d_p);

        let mut dims = Vec::with_capacity(LAYER_COUNT);
        dims.push((2 * d_o, width));
        for _ in 1..LAYER_COUNT - 1 {
            dims.push((width, width));
        }
        dims.push((width, 1));

        let mut layers: Vec<Layer> = dims
            .into_iter()
            .map(|(input_dim, output_dim)| Layer {
                input_dim,
                output_dim,
                weights: init_uniform(&mut rng, input_dim * output_dim, input_dim),
                biases: vec![0.0; output_dim],
            })
            .collect();
        // prior toward silence: in positive-unlabeled dialogue data almost
        // every round should be left alone, so the untrained policy starts
        // below the intervention threshold instead of at a coin flip
        layers.last_mut().expect("six layers").biases[0] = -0.5;

        CoordinatorPolicy {
            observer_dim: d_o,
            presenter_dim: d_p,
            hidden_width: width,
            learning_rate: config.learning_rate,
            projector,
            layers,
        }
    }

    pub fn observer_dim(&self) -> usize {
        self.observer_dim
    }

    pub fn presenter_dim(&self) -> usize {
        self.presenter_dim
    }

    pub fn state_dim(&self) -> usize {
        2 * self.observer_dim
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// S = concat(Ψ_H, Ω·Ψ_G).
    pub fn encode_state(
        &self,
        observer_embed: &[f64],
        presenter_embed: &[f64],
    ) -> Result<Vec<f64>, CoordinatorError> {
        if observer_embed.len() != self.observer_dim {
            return Err(CoordinatorError::DimensionMismatch {
                which: "observer embedding",
                expected: self.observer_dim,
                got: observer_embed.len(),
            });
        }
        if presenter_embed.len() != self.presenter_dim {
            return Err(CoordinatorError::DimensionMismatch {
                which: "presenter embedding",
                expected: self.presenter_dim,
                got: presenter_embed.len(),
            });
        }
        let mut state = Vec::with_capacity(2 * self.observer_dim);
        state.extend_from_slice(observer_embed);
        for row in 0..self.observer_dim {
            let w = &self.projector[row * self.presenter_dim..(row + 1) * self.presenter_dim];
            state.push(w.iter().zip(presenter_embed).map(|(a, b)| a * b).sum());
        }
        Ok(state)
    }

    fn forward_cached(&self, state: &[f64]) -> (f64, Vec<Vec<f64>>) {
        // activations[i] is the post-activation input of layer i; the final
        // entry is the pre-sigmoid scalar
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(LAYER_COUNT + 1);
        activations.push(state.to_vec());
        let mut buffer = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(activations.last().expect("input"), &mut buffer);
            if i + 1 < self.layers.len() {
                for z in &mut buffer {
                    if *z < 0.0 {
                        *z = 0.0;
                    }
                }
            }
            activations.push(buffer.clone());
        }
        let z_out = activations.last().expect("output")[0];
        let prob = (1.0 / (1.0 + (-z_out).exp())).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        (prob, activations)
    }

    /// Intervention probability F_θ(S) ∈ (0, 1).
    pub fn prob(&self, state: &[f64]) -> f64 {
        self.forward_cached(state).0
    }

    /// π(S, a) = a·F + (1−a)·(1−F).
    pub fn policy_prob(&self, state: &[f64], action: bool) -> f64 {
        action_prob(self.prob(state), action)
    }

    /// Bernoulli draw from F_θ(S).
    pub fn act_sample(&self, state: &[f64], rng: &mut impl Rng) -> bool {
        sample_action(self.prob(state), rng)
    }

    /// Deployment decision: intervene iff F_θ(S) ≥ 0.5.
    pub fn act_threshold(&self, state: &[f64]) -> bool {
        self.prob(state) >= 0.5
    }

    /// log π plus its gradient with respect to every parameter, including the
    /// projector.
    pub fn grad_log_prob(
        &self,
        observer_embed: &[f64],
        presenter_embed: &[f64],
        action: bool,
    ) -> Result<(f64, PolicyGradient), CoordinatorError> {
        let state = self.encode_state(observer_embed, presenter_embed)?;
        let (prob, activations) = self.forward_cached(&state);
        let log_prob = action_prob(prob, action).ln();

        // d log π / d z_out for both actions collapses to (a − F)
        let mut delta = vec![if action { 1.0 - prob } else { -prob }];
        let mut grad = PolicyGradient::zeros_like(self);
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &activations[i];
            let (gw, gb) = &mut grad.layers[i];
            for (o, d) in delta.iter().enumerate() {
                gb[o] = *d;
                let row = &mut gw[o * layer.input_dim..(o + 1) * layer.input_dim];
                for (g, x) in row.iter_mut().zip(input) {
                    *g = d * x;
                }
            }
            let mut prev_delta = vec![0.0; layer.input_dim];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.input_dim..(o + 1) * layer.input_dim];
                for (pd, w) in prev_delta.iter_mut().zip(row) {
                    *pd += d * w;
                }
            }
            if i > 0 {
                // ReLU mask of the layer below: its post-activation is `input`
                for (pd, x) in prev_delta.iter_mut().zip(input) {
                    if *x <= 0.0 {
                        *pd = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
        // delta now holds d log π / d S; the second half flows through Ω
        for row in 0..self.observer_dim {
            let ds = delta[self.observer_dim + row];
            let grad_row =
                &mut grad.projector[row * self.presenter_dim..(row + 1) * self.presenter_dim];
            for (g, x) in grad_row.iter_mut().zip(presenter_embed) {
                *g = ds * x;
            }
        }
        Ok((log_prob, grad))
    }

    /// θ ← θ + η · Σ_n r_total · ∇_θ log π(S_n, a_n), one batched step over
    /// the whole trajectory.
    pub fn reinforce_update(
        &mut self,
        trajectory: &Trajectory,
        r_total: f64,
        eta: f64,
    ) -> Result<(), CoordinatorError> {
        if trajectory.is_empty() {
            return Err(CoordinatorError::EmptyTrajectory);
        }
        if !r_total.is_finite() {
            return Err(CoordinatorError::NonFiniteReward);
        }
        let mut total = PolicyGradient::zeros_like(self);
        for step in &trajectory.steps {
            let (_, grad) =
                self.grad_log_prob(&step.observer_embed, &step.presenter_embed, step.action)?;
            total.add(&grad);
        }
        if !total.is_finite() {
            return Err(CoordinatorError::NonFiniteGradient);
        }
        let scale = eta * r_total;
        for (w, g) in self.projector.iter_mut().zip(&total.projector) {
            *w += scale * g;
        }
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&total.layers) {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w += scale * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(gb) {
                *b += scale * g;
            }
        }
        Ok(())
    }

    /// Collapses the policy to a constant F = σ(logit) by zeroing the output
    /// layer's weights and pinning its bias. Used for forced-policy
    /// diagnostics of degenerate selections.
    pub fn set_constant_logit(&mut self, logit: f64) {
        let last = self.layers.last_mut().expect("six layers");
        for w in &mut last.weights {
            *w = 0.0;
        }
        last.biases[0] = logit;
    }

    pub fn n_params(&self) -> usize {
        self.projector.len()
            + self
                .layers
                .iter()
                .map(|l| l.weights.len() + l.biases.len())
                .sum::<usize>()
    }

    /// Flattened parameter copy in canonical order (projector, then each
    /// layer's weights and biases).
    pub fn params(&self) -> Vec<f64> {
        let mut out = self.projector.clone();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut idx = index;
        if idx < self.projector.len() {
            return &mut self.projector[idx];
        }
        idx -= self.projector.len();
        for layer in &mut self.layers {
            if idx < layer.weights.len() {
                return &mut layer.weights[idx];
            }
            idx -= layer.weights.len();
            if idx < layer.biases.len() {
                return &mut layer.biases[idx];
            }
            idx -= layer.biases.len();
        }
        panic!("parameter index {index} out of range");
    }
}

/// π(F, a) without re-running the network.
pub fn action_prob(prob: f64, action: bool) -> f64 {
    if action {
        prob
    } else {
        1.0 - prob
    }
}

/// Bernoulli sample of the intervene action.
pub fn sample_action(prob: f64, rng: &mut impl Rng) -> bool {
    rng.gen::<f64>() < prob
}

/// Elementwise max relative error between two gradient vectors.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let denom = a.abs().max(n.abs()).max(1e-8);
            (a - n).abs() / denom
        })
        .fold(0.0, f64::max)
}

/// Compares the analytic ∇_θ log π against central finite differences over
/// every parameter (projector included) and returns the max relative error.
pub fn gradcheck(
    policy: &CoordinatorPolicy,
    observer_embed: &[f64],
    presenter_embed: &[f64],
    action: bool,
    epsilon: f64,
) -> Result<f64, CoordinatorError> {
    let (_, analytic) = policy.grad_log_prob(observer_embed, presenter_embed, action)?;
    let analytic = analytic.flatten();
    let mut numeric = Vec::with_capacity(analytic.len());
    let mut perturbed = policy.clone();
    for i in 0..analytic.len() {
        let original = *perturbed.param_mut(i);
        *perturbed.param_mut(i) = original + epsilon;
        let plus = log_prob_of(&perturbed, observer_embed, presenter_embed, action)?;
        *perturbed.param_mut(i) = original - epsilon;
        let minus = log_prob_of(&perturbed, observer_embed, presenter_embed, action)?;
        *perturbed.param_mut(i) = original;
        numeric.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(max_relative_error(&analytic, &numeric))
}

fn log_prob_of(
    policy: &CoordinatorPolicy,
    observer_embed: &[f64],
    presenter_embed: &[f64],
    action: bool,
) -> Result<f64, CoordinatorError> {
    let state = policy.encode_state(observer_embed, presenter_embed)?;
    Ok(policy.policy_prob(&state, action).ln())
}

const CHECKPOINT_MAGIC: &str = "puli-policy v1";

/// Writes θ as a text dump with a dims header; floats use the shortest
/// round-trip decimal form, so load reproduces the parameters exactly.
pub fn save_checkpoint(
    policy: &CoordinatorPolicy,
    path: impl AsRef<Path>,
) -> Result<(), CoordinatorError> {
    let mut out = String::new();
    out.push_str(CHECKPOINT_MAGIC);
    out.push('\n');
    out.push_str(&format!(
        "dims observer={} presenter={} hidden={} layers={} lr={}\n",
        policy.observer_dim,
        policy.presenter_dim,
        policy.hidden_width,
        policy.layers.len(),
        policy.learning_rate,
    ));
    for value in policy.params() {
        out.push_str(&format!("{value}\n"));
    }
    fs::write(path.as_ref(), out).map_err(|e| CoordinatorError::Checkpoint(e.to_string()))
}

/// Loads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CoordinatorPolicy, CoordinatorError> {
    let content =
        fs::read_to_string(path.as_ref()).map_err(|e| CoordinatorError::Checkpoint(e.to_string()))?;
    let mut lines = content.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != CHECKPOINT_MAGIC {
        return Err(CoordinatorError::Checkpoint(format!(
            "bad magic line {magic:?}"
        )));
    }
    let header = lines
        .next()
        .ok_or_else(|| CoordinatorError::Checkpoint("missing dims header".to_string()))?;
    let mut observer_dim: Option<usize> = None;
    let mut presenter_dim: Option<usize> = None;
    let mut hidden_width: Option<usize> = None;
    let mut layer_count: Option<usize> = None;
    let mut learning_rate: Option<f64> = None;
    for field in header.trim_start_matches("dims ").split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| CoordinatorError::Checkpoint(format!("bad header field {field:?}")))?;
        match key {
            "observer" => observer_dim = value.parse().ok(),
            "presenter" => presenter_dim = value.parse().ok(),
            "hidden" => hidden_width = value.parse().ok(),
            "layers" => layer_count = value.parse().ok(),
            "lr" => learning_rate = value.parse().ok(),
            _ => {
                return Err(CoordinatorError::Checkpoint(format!(
                    "unknown header field {key:?}"
                )))
            }
        }
    }
    let (observer_dim, presenter_dim, hidden_width, layer_count, learning_rate) = match (
        observer_dim,
        presenter_dim,
        hidden_width,
        layer_count,
        learning_rate,
    ) {
        (Some(o), Some(p), Some(h), Some(l), Some(lr)) => (o, p, h, l, lr),
        _ => return Err(CoordinatorError::Checkpoint("incomplete dims header".to_string())),
    };
    if layer_count != LAYER_COUNT {
        return Err(CoordinatorError::Checkpoint(format!(
            "expected {LAYER_COUNT} layers, checkpoint has {layer_count}"
        )));
    }
    let mut template = CoordinatorPolicy::new(PolicyConfig {
        observer_dim,
        presenter_dim,
        hidden_width,
        learning_rate,
        seed: 0,
    });
    let expected = template.n_params();
    let values: Result<Vec<f64>, _> = lines.map(str::parse::<f64>).collect();
    let values = values.map_err(|e| CoordinatorError::Checkpoint(format!("bad float: {e}")))?;
    if values.len() != expected {
        return Err(CoordinatorError::Checkpoint(format!(
            "expected {expected} parameters, found {}",
            values.len()
        )));
    }
    for (i, value) in values.into_iter().enumerate() {
        *template.param_mut(i) = value;
    }
    Ok(template)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_policy(seed: u64) -> CoordinatorPolicy {
        CoordinatorPolicy::new(PolicyConfig {
            observer_dim: 4,
            presenter_dim: 3,
            hidden_width: 8,
            learning_rate: 1e-4,
            seed,
        })
    }

    fn embeds(seed: u64, d_o: usize, d_p: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = (0..d_o).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = (0..d_p).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (h, g)
    }

    #[test]
    fn state_is_concatenation_of_both_halves() {
        let policy = small_policy(1);
        let (h, g) = embeds(2, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        assert_eq!(state.len(), 8);
        assert_eq!(&state[..4], h.as_slice());
    }

    #[test]
    fn zero_projector_zeroes_second_half() {
        let mut policy = small_policy(1);
        for w in &mut policy.projector {
            *w = 0.0;
        }
        let (h, g) = embeds(2, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        assert!(state[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_state_is_deterministic() {
        let policy = small_policy(5);
        let (h, g) = embeds(6, 4, 3);
        assert_eq!(
            policy.encode_state(&h, &g).unwrap(),
            policy.encode_state(&h, &g).unwrap()
        );
    }

    #[test]
    fn encode_state_rejects_dim_mismatch() {
        let policy = small_policy(1);
        let err = policy.encode_state(&[0.0; 5], &[0.0; 3]).unwrap_err();
        assert!(matches!(err, CoordinatorError::DimensionMismatch { .. }));
    }

    #[test]
    fn layer_count_is_exactly_six() {
        assert_eq!(small_policy(0).layer_count(), LAYER_COUNT);
        assert_eq!(LAYER_COUNT, 6);
    }

    #[test]
    fn action_prob_complement() {
        assert_eq!(action_prob(0.7, true), 0.7);
        assert!((action_prob(0.7, false) - 0.3).abs() < 1e-15);
        assert_eq!(action_prob(0.5, true), action_prob(0.5, false));
    }

    #[test]
    fn policy_prob_sums_to_one() {
        let policy = small_policy(3);
        let (h, g) = embeds(4, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        let total = policy.policy_prob(&state, true) + policy.policy_prob(&state, false);
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prob_stays_in_open_interval() {
        let policy = small_policy(3);
        let (h, g) = embeds(4, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        let f = policy.prob(&state);
        assert!(f > 0.0 && f < 1.0);
    }

    #[test]
    fn threshold_intervenes_at_exactly_half() {
        // thresholding is ≥, so F = 0.5 must intervene; checked through the
        // shared helper since F is a network output
        assert!(action_prob(0.5, true) >= 0.5);
        let policy = small_policy(3);
        let (h, g) = embeds(4, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        assert_eq!(policy.act_threshold(&state), policy.prob(&state) >= 0.5);
    }

    #[test]
    fn constant_half_probability_thresholds_to_intervene() {
        let mut policy = small_policy(3);
        policy.set_constant_logit(0.0); // F = σ(0) = 0.5 exactly
        let (h, g) = embeds(4, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        assert_eq!(policy.prob(&state), 0.5);
        assert!(policy.act_threshold(&state));
    }

    #[test]
    fn sampling_frequency_tracks_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let hits = (0..draws)
            .filter(|_| sample_action(0.3, &mut rng))
            .count();
        let freq = hits as f64 / draws as f64;
        assert!((freq - 0.30).abs() <= 0.03, "frequency {freq}");
    }

    #[test]
    fn saturated_probability_always_samples_intervene() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!((0..1000).all(|_| sample_action(1.0 - PROB_FLOOR, &mut rng)));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let policy = small_policy(9);
        let (h, g) = embeds(10, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| policy.act_sample(&state, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    fn single_step_trajectory(policy: &CoordinatorPolicy, seed: u64, action: bool) -> Trajectory {
        let (h, g) = embeds(seed, policy.observer_dim(), policy.presenter_dim());
        let state = policy.encode_state(&h, &g).unwrap();
        let log_prob = policy.policy_prob(&state, action).ln();
        Trajectory {
            steps: vec![TrajectoryStep {
                observer_embed: h,
                presenter_embed: g,
                action,
                log_prob,
            }],
        }
    }

    #[test]
    fn zero_reward_leaves_parameters_unchanged() {
        let mut policy = small_policy(11);
        let before = policy.params();
        let trajectory = single_step_trajectory(&policy, 12, true);
        policy.reinforce_update(&trajectory, 0.0, 0.1).unwrap();
        assert_eq!(policy.params(), before);
    }

    #[test]
    fn positive_reward_for_intervene_raises_visited_probability() {
        let mut policy = small_policy(13);
        let (h, g) = embeds(14, 4, 3);
        let state = policy.encode_state(&h, &g).unwrap();
        let before = policy.prob(&state);
        let trajectory = single_step_trajectory(&policy, 14, true);
        policy.reinforce_update(&trajectory, 0.5, 0.05).unwrap();
        let state_after = policy.encode_state(&h, &g).unwrap();
        let after = policy.prob(&state_after);
        assert!(after >= before, "F should not decrease: {before} -> {after}");
    }

    #[test]
    fn update_is_linear_in_reward() {
        let base = small_policy(15);
        let trajectory = single_step_trajectory(&base, 16, false);
        let mut once = base.clone();
        once.reinforce_update(&trajectory, 0.2, 0.1).unwrap();
        let mut twice = base.clone();
        twice.reinforce_update(&trajectory, 0.4, 0.1).unwrap();
        let theta0 = base.params();
        let delta1: Vec<f64> = once.params().iter().zip(&theta0).map(|(a, b)| a - b).collect();
        let delta2: Vec<f64> = twice.params().iter().zip(&theta0).map(|(a, b)| a - b).collect();
        // the update scale is exactly doubled; the only slack allowed is the
        // rounding of θ + scale·g itself, which is at ulp(θ) ≈ 1e-16 scale
        for (d2, d1) in delta2.iter().zip(&delta1) {
            assert!((d2 - 2.0 * d1).abs() <= 1e-14, "{d2} vs 2*{d1}");
        }
    }

    #[test]
    fn empty_trajectory_is_rejected() {
        let mut policy = small_policy(1);
        let err = policy
            .reinforce_update(&Trajectory::default(), 1.0, 0.1)
            .unwrap_err();
        assert!(matches!(err, CoordinatorError::EmptyTrajectory));
    }

    #[test]
    fn non_finite_reward_is_rejected() {
        let mut policy = small_policy(1);
        let trajectory = single_step_trajectory(&policy, 2, true);
        let err = policy
            .reinforce_update(&trajectory, f64::NAN, 0.1)
            .unwrap_err();
        assert!(matches!(err, CoordinatorError::NonFiniteReward));
    }

    #[test]
    fn gradcheck_matches_finite_differences() {
        for seed in 0..3 {
            let policy = small_policy(20 + seed);
            let (h, g) = embeds(30 + seed, 4, 3);
            for action in [true, false] {
                let err = gradcheck(&policy, &h, &g, action, 1e-5).unwrap();
                assert!(err <= 1e-4, "seed {seed} action {action}: err {err}");
            }
        }
    }

    #[test]
    fn gradcheck_against_itself_is_zero() {
        let policy = small_policy(21);
        let (h, g) = embeds(22, 4, 3);
        let (_, grad) = policy.grad_log_prob(&h, &g, true).unwrap();
        let flat = grad.flatten();
        assert_eq!(max_relative_error(&flat, &flat), 0.0);
    }

    #[test]
    fn perturbed_analytic_gradient_reports_its_fault() {
        let policy = small_policy(23);
        let (h, g) = embeds(24, 4, 3);
        let (_, grad) = policy.grad_log_prob(&h, &g, true).unwrap();
        let flat = grad.flatten();
        let faulty: Vec<f64> = flat.iter().map(|v| v * 1.1).collect();
        let err = max_relative_error(&faulty, &flat);
        assert!((0.07..=0.13).contains(&err), "err {err}");
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let dir = std::env::temp_dir().join(format!("puli-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("policy.ckpt");
        let mut policy = small_policy(31);
        let trajectory = single_step_trajectory(&policy, 32, true);
        policy.reinforce_update(&trajectory, 0.3, 0.1).unwrap();
        save_checkpoint(&policy, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(policy, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = std::env::temp_dir().join(format!("puli-ckpt-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CoordinatorError::Checkpoint(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
