//! Learned RSA: a log-linear literal speaker `S0` with a pragmatic listener
//! `L1` and pragmatic speaker `S1` derived from it, at `λ = 1`, zero costs and
//! a uniform state prior.
//!
//! ```text
//! S0(m|t) ∝ exp(θ·φ(t,m))     L1(t|m) ∝ S0(m|t)     S1(m|t) ∝ L1(t|m)
//! ```
//!
//! Gradients of every layer's log-likelihood share one representation: a
//! coefficient table `W[t][m]` such that `∂J/∂θ = Σ W[t][m]·φ(t,m)`. Each
//! layer's table follows from the one below by the usual "observed minus
//! expected" step, so a single forward pass serves the values and gradients of
//! all three layers.

pub mod model;

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Message, Trial};
use crate::features::{FeatureVector, FeatureVocabulary};
use crate::rsa::{self, Distribution};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("parameter vector has {got} entries, vocabulary has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("message index {0} is outside the message space")]
    MessageOutOfRange(usize),
    #[error("entity index {0} is outside the context")]
    EntityOutOfRange(usize),
    #[error("invalid layer weights: {0}")]
    Weights(String),
    #[error(transparent)]
    Rsa(#[from] rsa::RsaError),
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub theta: Vec<f64>,
}

impl Params {
    pub fn zeros(dim: usize) -> Self {
        Params { theta: vec![0.0; dim] }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.theta.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// `J_S1` only.
    #[default]
    S1Only,
    /// Weighted sum of `J_S0`, `J_L1` and `J_S1`.
    JointLayers,
}

impl FromStr for ObjectiveMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "s1-only" => Ok(ObjectiveMode::S1Only),
            "joint-layers" => Ok(ObjectiveMode::JointLayers),
            other => Err(format!("unknown objective `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub s0: f64,
    pub l1: f64,
    pub s1: f64,
}

impl Default for LayerWeights {
    fn default() -> Self {
        LayerWeights {
            s0: 1.0 / 3.0,
            l1: 1.0 / 3.0,
            s1: 1.0 / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearnedChainConfig {
    pub mode: ObjectiveMode,
    pub weights: LayerWeights,
}

impl LearnedChainConfig {
    pub fn s1_only() -> Self {
        LearnedChainConfig::default()
    }

    pub fn joint_layers() -> Self {
        LearnedChainConfig {
            mode: ObjectiveMode::JointLayers,
            weights: LayerWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if [w.s0, w.l1, w.s1].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(AgentError::Weights("weights must be finite and non-negative".into()));
        }
        if (w.s0 + w.l1 + w.s1 - 1.0).abs() > 1e-9 {
            return Err(AgentError::Weights("weights must sum to 1".into()));
        }
        Ok(())
    }

    /// Per-layer weights actually applied to `(J_S0, J_L1, J_S1)`.
    pub fn effective_weights(&self) -> [f64; 3] {
        match self.mode {
            ObjectiveMode::S1Only => [0.0, 0.0, 1.0],
            ObjectiveMode::JointLayers => [self.weights.s0, self.weights.l1, self.weights.s1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Agent {
    S0,
    S1,
}

impl FromStr for Agent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "S0" => Ok(Agent::S0),
            "S1" => Ok(Agent::S1),
            other => Err(format!("unknown learned agent `{other}`")),
        }
    }
}

/// `φ(t, m)` for every entity and message of one context, with the observed
/// (target, message) pair.
#[derive(Clone, Debug)]
pub struct TrialFeatures {
    n_entities: usize,
    n_messages: usize,
    dim: usize,
    phi: Vec<FeatureVector>,
    target: usize,
    human: usize,
}

impl TrialFeatures {
    pub fn new(trial: &Trial, vocab: &FeatureVocabulary) -> Self {
        let phi = trial
            .entities()
            .iter()
            .flat_map(|e| trial.messages().iter().map(move |m| vocab.extract(e, m)))
            .collect();
        TrialFeatures {
            n_entities: trial.entities().len(),
            n_messages: trial.messages().len(),
            dim: vocab.len(),
            phi,
            target: trial.target_index(),
            human: trial.human_message_index(),
        }
    }

    /// Builds a context directly from feature vectors, `phi[t][m]`.
    pub fn from_vectors(phi: Vec<Vec<FeatureVector>>, dim: usize, target: usize, human: usize) -> Result<Self> {
        let n_entities = phi.len();
        let n_messages = phi.first().map_or(0, Vec::len);
        if target >= n_entities {
            return Err(AgentError::EntityOutOfRange(target));
        }
        if human >= n_messages || phi.iter().any(|row| row.len() != n_messages) {
            return Err(AgentError::MessageOutOfRange(human));
        }
        if phi.iter().flatten().any(|v| v.entries().iter().any(|(i, _)| *i >= dim)) {
            return Err(AgentError::Dimension { expected: dim, got: dim + 1 });
        }
        Ok(TrialFeatures {
            n_entities,
            n_messages,
            dim,
            phi: phi.into_iter().flatten().collect(),
            target,
            human,
        })
    }

    pub fn phi(&self, t: usize, m: usize) -> &FeatureVector {
        &self.phi[t * self.n_messages + m]
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_messages(&self) -> usize {
        self.n_messages
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn human(&self) -> usize {
        self.human
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim {
            return Err(AgentError::Dimension {
                expected: self.dim,
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn check_pair(&self, t: usize, m: usize) -> Result<()> {
        if t >= self.n_entities {
            return Err(AgentError::EntityOutOfRange(t));
        }
        if m >= self.n_messages {
            return Err(AgentError::MessageOutOfRange(m));
        }
        Ok(())
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-probabilities of all three layers, each stored as a `[t][m]` grid.
#[derive(Clone, Debug)]
pub struct Forward {
    n_messages: usize,
    /// `log S0(m|t)`
    pub log_s0: Vec<f64>,
    /// `log L1(t|m)`
    pub log_l1: Vec<f64>,
    /// `log S1(m|t)`
    pub log_s1: Vec<f64>,
}

impl Forward {
    pub fn run(theta: &[f64], ctx: &TrialFeatures) -> Result<Self> {
        ctx.check(theta)?;
        let (n_t, n_m) = (ctx.n_entities, ctx.n_messages);
        let at = |t: usize, m: usize| t * n_m + m;
        let scores: Vec<f64> = ctx.phi.iter().map(|f| f.dot(theta)).collect();

        let mut log_s0 = vec![0.0; n_t * n_m];
        for t in 0..n_t {
            let row = &scores[at(t, 0)..at(t, 0) + n_m];
            let z = log_sum_exp(row.iter().copied());
            for m in 0..n_m {
                log_s0[at(t, m)] = row[m] - z;
            }
        }
        let mut log_l1 = vec![0.0; n_t * n_m];
        for m in 0..n_m {
            let z = log_sum_exp((0..n_t).map(|t| log_s0[at(t, m)]));
            for t in 0..n_t {
                log_l1[at(t, m)] = log_s0[at(t, m)] - z;
            }
        }
        let mut log_s1 = vec![0.0; n_t * n_m];
        for t in 0..n_t {
            let z = log_sum_exp((0..n_m).map(|m| log_l1[at(t, m)]));
            for m in 0..n_m {
                log_s1[at(t, m)] = log_l1[at(t, m)] - z;
            }
        }
        Ok(Forward {
            n_messages: n_m,
            log_s0,
            log_l1,
            log_s1,
        })
    }

    fn at(&self, t: usize, m: usize) -> usize {
        t * self.n_messages + m
    }

    fn n_entities(&self) -> usize {
        self.log_s0.len() / self.n_messages.max(1)
    }

    pub fn s0(&self, t: usize) -> Distribution {
        let row = &self.log_s0[self.at(t, 0)..self.at(t, 0) + self.n_messages];
        Distribution::from_log_scores(row).expect("finite scores")
    }

    pub fn l1(&self, m: usize) -> Distribution {
        let column: Vec<f64> = (0..self.n_entities()).map(|t| self.log_l1[self.at(t, m)]).collect();
        Distribution::from_log_scores(&column).expect("finite scores")
    }

    pub fn s1(&self, t: usize) -> Distribution {
        let row = &self.log_s1[self.at(t, 0)..self.at(t, 0) + self.n_messages];
        Distribution::from_log_scores(row).expect("finite scores")
    }

    /// The three layers as a chain, named `S0`, `L1`, `S1`, for rendering
    /// alongside pure chains.
    pub fn layers(&self) -> rsa::ChainOutput {
        let speaker = |name: &str, f: &dyn Fn(usize) -> Distribution| rsa::Layer {
            name: name.to_string(),
            kind: rsa::LayerKind::Speaker,
            rows: (0..self.n_entities()).map(|t| Some(f(t))).collect(),
        };
        rsa::ChainOutput {
            layers: vec![
                speaker("S0", &|t| self.s0(t)),
                rsa::Layer {
                    name: "L1".to_string(),
                    kind: rsa::LayerKind::Listener,
                    rows: (0..self.n_messages).map(|m| Some(self.l1(m))).collect(),
                },
                speaker("S1", &|t| self.s1(t)),
            ],
        }
    }
}

/// A log-likelihood and its gradient with respect to `θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Coefficients `W[t][m]` on `φ(t,m)`.
type Coefficients = Vec<f64>;

impl Forward {
    /// Turns coefficients `A` on the literal-speaker gradients `∂J_S0(t,m)`
    /// into coefficients on raw features: `W[t][m] = A[t][m] − (Σ_m' A[t][m'])·S0(m|t)`.
    fn lower_to_features(&self, a: &mut Coefficients) {
        let n_m = self.n_messages;
        for t in 0..self.n_entities() {
            let row_sum: f64 = a[t * n_m..(t + 1) * n_m].iter().sum();
            if row_sum != 0.0 {
                for m in 0..n_m {
                    a[t * n_m + m] -= row_sum * self.log_s0[t * n_m + m].exp();
                }
            }
        }
    }

    fn s0_coefficients(&self, t: usize, m: usize) -> Coefficients {
        let mut a = vec![0.0; self.log_s0.len()];
        a[self.at(t, m)] = 1.0;
        self.lower_to_features(&mut a);
        a
    }

    /// `∂J_L1(t,m) = Σ_t' (δ(t',t) − L1(t'|m))·∂J_S0(t',m)`
    fn l1_coefficients(&self, t: usize, m: usize) -> Coefficients {
        let mut a = vec![0.0; self.log_s0.len()];
        for tp in 0..self.n_entities() {
            let delta = if tp == t { 1.0 } else { 0.0 };
            a[self.at(tp, m)] = delta - self.log_l1[self.at(tp, m)].exp();
        }
        self.lower_to_features(&mut a);
        a
    }

    /// `∂J_S1(t,m) = Σ_m' (δ(m',m) − S1(m'|t))·∂J_L1(t,m')`
    fn s1_coefficients(&self, t: usize, m: usize) -> Coefficients {
        let mut a = vec![0.0; self.log_s0.len()];
        for mp in 0..self.n_messages {
            let beta = if mp == m { 1.0 } else { 0.0 } - self.log_s1[self.at(t, mp)].exp();
            if beta == 0.0 {
                continue;
            }
            for tp in 0..self.n_entities() {
                let gamma = if tp == t { 1.0 } else { 0.0 } - self.log_l1[self.at(tp, mp)].exp();
                a[self.at(tp, mp)] += beta * gamma;
            }
        }
        self.lower_to_features(&mut a);
        a
    }
}

fn contract(ctx: &TrialFeatures, coefficients: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; ctx.dim];
    for (phi, w) in ctx.phi.iter().zip(coefficients) {
        if *w != 0.0 {
            phi.add_scaled_to(&mut grad, *w);
        }
    }
    grad
}

/// Literal speaker distribution over the context's messages.
pub fn s0_dist(theta: &[f64], ctx: &TrialFeatures, t: usize) -> Result<Distribution> {
    ctx.check_pair(t, 0)?;
    Ok(Forward::run(theta, ctx)?.s0(t))
}

/// Pragmatic listener distribution over the context's entities.
pub fn l1_dist(theta: &[f64], ctx: &TrialFeatures, m: usize) -> Result<Distribution> {
    ctx.check_pair(0, m)?;
    Ok(Forward::run(theta, ctx)?.l1(m))
}

/// Pragmatic speaker distribution over the context's messages.
pub fn s1_dist(theta: &[f64], ctx: &TrialFeatures, t: usize) -> Result<Distribution> {
    ctx.check_pair(t, 0)?;
    Ok(Forward::run(theta, ctx)?.s1(t))
}

/// `J_S0 = log S0(m|t)` and `φ(t,m) − E_{S0(·|t)}[φ(t,·)]`.
pub fn grad_s0(theta: &[f64], ctx: &TrialFeatures, t: usize, m: usize) -> Result<LayerGradient> {
    ctx.check_pair(t, m)?;
    let fw = Forward::run(theta, ctx)?;
    Ok(LayerGradient {
        value: fw.log_s0[fw.at(t, m)],
        grad: contract(ctx, &fw.s0_coefficients(t, m)),
    })
}

/// `J_L1 = log L1(t|m)` and `∂J_S0(t,m) − E_{L1(·|m)}[∂J_S0(·,m)]`.
pub fn grad_l1(theta: &[f64], ctx: &TrialFeatures, t: usize, m: usize) -> Result<LayerGradient> {
    ctx.check_pair(t, m)?;
    let fw = Forward::run(theta, ctx)?;
    Ok(LayerGradient {
        value: fw.log_l1[fw.at(t, m)],
        grad: contract(ctx, &fw.l1_coefficients(t, m)),
    })
}

/// `J_S1 = log S1(m|t)` and `∂J_L1(t,m) − E_{S1(·|t)}[∂J_L1(t,·)]`.
pub fn grad_s1(theta: &[f64], ctx: &TrialFeatures, t: usize, m: usize) -> Result<LayerGradient> {
    ctx.check_pair(t, m)?;
    let fw = Forward::run(theta, ctx)?;
    Ok(LayerGradient {
        value: fw.log_s1[fw.at(t, m)],
        grad: contract(ctx, &fw.s1_coefficients(t, m)),
    })
}

/// All three layers at `(t, m)` from one forward pass.
pub fn layer_gradients(theta: &[f64], ctx: &TrialFeatures, t: usize, m: usize) -> Result<[LayerGradient; 3]> {
    ctx.check_pair(t, m)?;
    let fw = Forward::run(theta, ctx)?;
    let i = fw.at(t, m);
    Ok([
        LayerGradient {
            value: fw.log_s0[i],
            grad: contract(ctx, &fw.s0_coefficients(t, m)),
        },
        LayerGradient {
            value: fw.log_l1[i],
            grad: contract(ctx, &fw.l1_coefficients(t, m)),
        },
        LayerGradient {
            value: fw.log_s1[i],
            grad: contract(ctx, &fw.s1_coefficients(t, m)),
        },
    ])
}

/// The per-example objective at the observed (target, human message): `J_S1`
/// in s1-only mode, the weighted layer sum in joint mode.
pub fn example_objective(theta: &[f64], ctx: &TrialFeatures, cfg: &LearnedChainConfig) -> Result<LayerGradient> {
    let fw = Forward::run(theta, ctx)?;
    let (t, m) = (ctx.target, ctx.human);
    let i = fw.at(t, m);
    let [w0, wl, w1] = cfg.effective_weights();
    let mut value = 0.0;
    let mut coefficients = vec![0.0; fw.log_s0.len()];
    for (w, log_p, coef) in [
        (w0, fw.log_s0[i], Forward::s0_coefficients as fn(&Forward, usize, usize) -> Coefficients),
        (wl, fw.log_l1[i], Forward::l1_coefficients),
        (w1, fw.log_s1[i], Forward::s1_coefficients),
    ] {
        if w == 0.0 {
            continue;
        }
        value += w * log_p;
        for (c, x) in coefficients.iter_mut().zip(coef(&fw, t, m)) {
            *c += w * x;
        }
    }
    Ok(LayerGradient {
        value,
        grad: contract(ctx, &coefficients),
    })
}

/// Argmax message of `S0(·|t)` or `S1(·|t)` with seeded tie-breaking.
pub fn predict_message(theta: &[f64], ctx: &TrialFeatures, agent: Agent, t: usize, seed: u64) -> Result<usize> {
    let fw = Forward::run(theta, ctx)?;
    ctx.check_pair(t, 0)?;
    let dist = match agent {
        Agent::S0 => fw.s0(t),
        Agent::S1 => fw.s1(t),
    };
    Ok(rsa::predict(&dist, seed)?)
}

/// The predicted message itself, for a loaded trial.
pub fn predict_trial(theta: &[f64], trial: &Trial, vocab: &FeatureVocabulary, agent: Agent, seed: u64) -> Result<Message> {
    let ctx = TrialFeatures::new(trial, vocab);
    let m = predict_message(theta, &ctx, agent, trial.target_index(), seed)?;
    Ok(trial.messages()[m].clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(entries: &[(usize, f64)]) -> FeatureVector {
        FeatureVector::from_entries(entries.to_vec())
    }

    /// M = {∅, {g}}, one feature (g,g) firing for entities that have g.
    fn two_message(entities_with_g: &[bool]) -> TrialFeatures {
        let phi = entities_with_g
            .iter()
            .map(|has| vec![fv(&[]), if *has { fv(&[(0, 1.0)]) } else { fv(&[]) }])
            .collect();
        TrialFeatures::from_vectors(phi, 1, 0, 1).unwrap()
    }

    #[test]
    fn zero_weights_are_uniform() {
        let ctx = two_message(&[true, false, true]);
        let theta = [0.0];
        assert_eq!(s0_dist(&theta, &ctx, 0).unwrap().probs(), &[0.5, 0.5]);
        for p in l1_dist(&theta, &ctx, 1).unwrap().probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(s1_dist(&theta, &ctx, 2).unwrap().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn literal_speaker_log_three() {
        let ctx = two_message(&[true]);
        let d = s0_dist(&[3f64.ln()], &ctx, 0).unwrap();
        assert!((d.prob(1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn listener_and_speaker_worked_example() {
        // S0({g}|t1) = .75 via θ = ln 3; t2 lacks g so S0({g}|t2) = .5.
        let ctx = two_message(&[true, false]);
        let theta = [3f64.ln()];
        let l1 = l1_dist(&theta, &ctx, 1).unwrap();
        assert!((l1.prob(0) - 0.6).abs() < 1e-12);
        let l1_empty = l1_dist(&theta, &ctx, 0).unwrap();
        assert!((l1_empty.prob(0) - 1.0 / 3.0).abs() < 1e-12);
        let s1 = s1_dist(&theta, &ctx, 0).unwrap();
        assert!((s1.prob(1) - 0.6 / (0.6 + 1.0 / 3.0)).abs() < 1e-12);
        assert!((s1.prob(1) - 0.643).abs() < 5e-4);
    }

    #[test]
    fn single_entity_listener_is_certain() {
        let ctx = two_message(&[true]);
        let theta = [0.7];
        assert_eq!(l1_dist(&theta, &ctx, 0).unwrap().probs(), &[1.0]);
        let g = grad_l1(&theta, &ctx, 0, 1).unwrap();
        assert_eq!(g.grad, vec![0.0]);
        assert_eq!(g.value, 0.0);
    }

    #[test]
    fn constant_feature_has_zero_gradient() {
        // Dimension 1 fires once on every message for each entity.
        let phi = vec![
            vec![fv(&[(1, 1.0)]), fv(&[(0, 1.0), (1, 1.0)])],
            vec![fv(&[(1, 2.0)]), fv(&[(1, 2.0)])],
        ];
        let ctx = TrialFeatures::from_vectors(phi, 2, 0, 1).unwrap();
        let theta = [0.3, -1.7];
        for g in layer_gradients(&theta, &ctx, 0, 1).unwrap() {
            assert!(g.grad[1].abs() < 1e-15);
        }
        let shifted = [0.3, 4.0];
        for t in 0..2 {
            let (a, b) = (s1_dist(&theta, &ctx, t).unwrap(), s1_dist(&shifted, &ctx, t).unwrap());
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let ctx = two_message(&[true]);
        assert_eq!(
            s0_dist(&[0.0, 0.0], &ctx, 0).unwrap_err(),
            AgentError::Dimension { expected: 1, got: 2 }
        );
        assert_eq!(grad_s1(&[0.0], &ctx, 0, 5).unwrap_err(), AgentError::MessageOutOfRange(5));
    }

    #[test]
    fn weights_validation() {
        let mut cfg = LearnedChainConfig::joint_layers();
        assert!(cfg.validate().is_ok());
        cfg.weights.s0 = 0.5;
        assert!(cfg.validate().is_err());
    }
}
