//! Training: the L2-regularized conditional log-likelihood and its
//! maximization by per-example stochastic gradient ascent.
//!
//! For `M` training examples the objective is
//! `J(θ) = −(M/2)·ℓ·‖θ‖² + Σ_i J_i(θ)`; each SGD step uses the single-example
//! estimate `−ℓθ + ∂J_i/∂θ`, scaled either by a fixed rate or per coordinate
//! by AdaGrad.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, AgentError, LayerGradient, LearnedChainConfig, Params, TrialFeatures};
use crate::corpus::Trial;
use crate::features::{FeatureVector, FeatureVocabulary};
use crate::seeds;

/// Training aborts once `‖θ‖` exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e6;

pub const DEFAULT_ADAGRAD_EPSILON: f64 = 1e-8;

/// Denominator floor for the relative error reported by the gradient checker.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-2;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("no training examples")]
    Empty,
    #[error("diverged at epoch {epoch}, example {example}: |theta| = {norm:e}")]
    Divergence { epoch: usize, example: usize, norm: f64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Per-coordinate `η / √(G_j + ε)`.
    Adagrad,
    /// Constant rate `α`.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleOrder {
    InOrder,
    ShuffledPerEpoch,
}

impl FromStr for ExampleOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "in-order" => Ok(ExampleOrder::InOrder),
            "shuffled" | "shuffled-per-epoch" => Ok(ExampleOrder::ShuffledPerEpoch),
            other => Err(format!("unknown example order `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub l2: f64,
    pub epochs: usize,
    pub step_rule: StepRule,
    pub adagrad_epsilon: f64,
    pub seed: u64,
    pub order: ExampleOrder,
    pub objective: LearnedChainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 0.01,
            l2: 0.01,
            epochs: 10,
            step_rule: StepRule::Adagrad,
            adagrad_epsilon: DEFAULT_ADAGRAD_EPSILON,
            seed: 0,
            order: ExampleOrder::ShuffledPerEpoch,
            objective: LearnedChainConfig::s1_only(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if !(self.adagrad_epsilon > 0.0) {
            return bad("adagrad epsilon must be positive");
        }
        if let StepRule::Fixed(alpha) = self.step_rule {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return bad("fixed step size must be positive");
            }
        }
        self.objective.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Full regularized objective after the epoch.
    pub objective: f64,
    /// Mean L2 norm of the per-example update directions during the epoch.
    pub mean_grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_objective: f64,
    pub epochs: Vec<EpochStats>,
    pub params: Params,
}

/// `J(θ) = −(M/2)·ℓ·‖θ‖² + Σ_i J_i(θ)`.
pub fn objective(theta: &[f64], contexts: &[TrialFeatures], l2: f64, cfg: &LearnedChainConfig) -> Result<f64, TrainError> {
    Ok(objective_gradient(theta, contexts, l2, cfg)?.value)
}

/// The objective with its exact gradient `−Mℓθ + Σ_i ∂J_i/∂θ`.
pub fn objective_gradient(
    theta: &[f64],
    contexts: &[TrialFeatures],
    l2: f64,
    cfg: &LearnedChainConfig,
) -> Result<LayerGradient, TrainError> {
    let m = contexts.len() as f64;
    let sq: f64 = theta.iter().map(|x| x * x).sum();
    let mut value = -0.5 * m * l2 * sq;
    let mut grad: Vec<f64> = theta.iter().map(|x| -m * l2 * x).collect();
    for ctx in contexts {
        let g = agents::example_objective(theta, ctx, cfg)?;
        value += g.value;
        grad.iter_mut().zip(&g.grad).for_each(|(a, b)| *a += b);
    }
    Ok(LayerGradient { value, grad })
}

pub fn contexts(trials: &[Trial], vocab: &FeatureVocabulary) -> Vec<TrialFeatures> {
    trials.iter().map(|t| TrialFeatures::new(t, vocab)).collect()
}

pub fn sgd_train(trials: &[Trial], vocab: &FeatureVocabulary, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    sgd_train_contexts(&contexts(trials, vocab), vocab.len(), cfg)
}

/// Sequential per-example updates `θ += step ⊙ (−ℓθ + ∂J_i/∂θ)`.
pub fn sgd_train_contexts(contexts: &[TrialFeatures], dim: usize, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if contexts.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut theta = vec![0.0; dim];
    let mut accum = vec![0.0; dim];
    let initial_objective = objective(&theta, contexts, cfg.l2, &cfg.objective)?;
    let mut order: Vec<usize> = (0..contexts.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.order == ExampleOrder::ShuffledPerEpoch {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed, &[epoch as u64]));
            order.shuffle(&mut rng);
        }
        let mut norm_sum = 0.0;
        for &i in &order {
            let mut g = agents::example_objective(&theta, &contexts[i], &cfg.objective)?.grad;
            for (gj, tj) in g.iter_mut().zip(&theta) {
                *gj -= cfg.l2 * tj;
            }
            norm_sum += g.iter().map(|x| x * x).sum::<f64>().sqrt();
            match cfg.step_rule {
                StepRule::Fixed(alpha) => {
                    for (tj, gj) in theta.iter_mut().zip(&g) {
                        *tj += alpha * gj;
                    }
                }
                StepRule::Adagrad => {
                    for ((tj, gj), acc) in theta.iter_mut().zip(&g).zip(accum.iter_mut()) {
                        *acc += gj * gj;
                        *tj += cfg.eta * gj / (*acc + cfg.adagrad_epsilon).sqrt();
                    }
                }
            }
            let norm = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(TrainError::Divergence { epoch, example: i, norm });
            }
        }
        epochs.push(EpochStats {
            epoch,
            objective: objective(&theta, contexts, cfg.l2, &cfg.objective)?,
            mean_grad_norm: norm_sum / contexts.len() as f64,
        });
    }
    Ok(TrainReport {
        initial_objective,
        epochs,
        params: Params { theta },
    })
}

/// Largest per-coordinate relative error between `analytic` and central
/// differences `(f(θ+h·e_j) − f(θ−h·e_j)) / 2h`, with relative error
/// `|a − n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn compare_gradient(analytic: &[f64], theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        probe[j] = theta[j] + h;
        let up = f(&probe);
        probe[j] = theta[j] - h;
        let down = f(&probe);
        probe[j] = theta[j];
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[j].abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        worst = worst.max((analytic[j] - numeric).abs() / scale);
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffReport {
    pub s0: f64,
    pub l1: f64,
    pub s1: f64,
    /// The regularized single-example objective (s1-only).
    pub objective: f64,
}

impl FiniteDiffReport {
    pub fn max(&self) -> f64 {
        self.s0.max(self.l1).max(self.s1).max(self.objective)
    }
}

/// Checks `∂J_S0`, `∂J_L1`, `∂J_S1` at the context's observed pair and the
/// regularized objective over that one example against central differences.
pub fn finite_diff_check(theta: &[f64], ctx: &TrialFeatures, h: f64, l2: f64) -> Result<FiniteDiffReport, TrainError> {
    finite_diff_check_with(theta, ctx, h, l2, |_| {})
}

/// [`finite_diff_check`] with a hook that may alter each analytic gradient
/// before comparison (used to confirm the checker catches a broken gradient).
pub fn finite_diff_check_with(
    theta: &[f64],
    ctx: &TrialFeatures,
    h: f64,
    l2: f64,
    mut tamper: impl FnMut(&mut Vec<f64>),
) -> Result<FiniteDiffReport, TrainError> {
    if !(h > 0.0) {
        return Err(TrainError::Config("finite-difference step must be positive".into()));
    }
    let (t, m) = (ctx.target(), ctx.human());
    let layers = agents::layer_gradients(theta, ctx, t, m)?;
    let mut errors = [0.0; 3];
    for (k, layer) in layers.into_iter().enumerate() {
        let mut analytic = layer.grad;
        tamper(&mut analytic);
        errors[k] = compare_gradient(&analytic, theta, h, |th| {
            agents::layer_gradients(th, ctx, t, m).expect("dimensions checked")[k].value
        });
    }
    let cfg = LearnedChainConfig::s1_only();
    let single = std::slice::from_ref(ctx);
    let mut analytic = objective_gradient(theta, single, l2, &cfg)?.grad;
    tamper(&mut analytic);
    let objective_err = compare_gradient(&analytic, theta, h, |th| {
        objective(th, single, l2, &cfg).expect("dimensions checked")
    });
    Ok(FiniteDiffReport {
        s0: errors[0],
        l1: errors[1],
        s1: errors[2],
        objective: objective_err,
    })
}

/// Size limits for random gradient-check instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceBounds {
    pub max_entities: usize,
    pub max_messages: usize,
    pub max_dim: usize,
}

impl Default for InstanceBounds {
    fn default() -> Self {
        InstanceBounds {
            max_entities: 4,
            max_messages: 8,
            max_dim: 20,
        }
    }
}

/// A random context and weight vector. Each feature fires with probability
/// 0.3 with a value uniform on [-2, 2); weights are standard normal.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, bounds: &InstanceBounds) -> (Vec<f64>, TrialFeatures) {
    let n_t = rng.random_range(1..=bounds.max_entities.max(1));
    let n_m = rng.random_range(1..=bounds.max_messages.max(1));
    let dim = rng.random_range(1..=bounds.max_dim.max(1));
    let mut phi = Vec::with_capacity(n_t);
    for _ in 0..n_t {
        let mut row = Vec::with_capacity(n_m);
        for _ in 0..n_m {
            let mut entries = Vec::new();
            for j in 0..dim {
                if rng.random_bool(0.3) {
                    entries.push((j, rng.random_range(-2.0..2.0)));
                }
            }
            row.push(FeatureVector::from_entries(entries));
        }
        phi.push(row);
    }
    let target = rng.random_range(0..n_t);
    let human = rng.random_range(0..n_m);
    let theta = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let ctx = TrialFeatures::from_vectors(phi, dim, target, human).expect("indices drawn in range");
    (theta, ctx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub instances: usize,
    pub tolerance: f64,
    /// Largest relative error seen per quantity.
    pub worst: FiniteDiffReport,
    /// Instances with any error above `tolerance`.
    pub failures: usize,
}

impl GradCheckSummary {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Runs [`finite_diff_check_with`] on `instances` seeded random instances.
pub fn gradient_check(
    seed: u64,
    instances: usize,
    bounds: &InstanceBounds,
    h: f64,
    l2: f64,
    tolerance: f64,
    mut tamper: impl FnMut(&mut Vec<f64>),
) -> Result<GradCheckSummary, TrainError> {
    if instances == 0 || bounds.max_entities == 0 || bounds.max_messages == 0 || bounds.max_dim == 0 {
        return Err(TrainError::Config("instance count and size bounds must be positive".into()));
    }
    if !(tolerance > 0.0) {
        return Err(TrainError::Config("tolerance must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = FiniteDiffReport {
        s0: 0.0,
        l1: 0.0,
        s1: 0.0,
        objective: 0.0,
    };
    let mut failures = 0;
    for _ in 0..instances {
        let (theta, ctx) = random_instance(&mut rng, bounds);
        let r = finite_diff_check_with(&theta, &ctx, h, l2, &mut tamper)?;
        if r.max() > tolerance {
            failures += 1;
        }
        worst.s0 = worst.s0.max(r.s0);
        worst.l1 = worst.l1.max(r.l1);
        worst.s1 = worst.s1.max(r.s1);
        worst.objective = worst.objective.max(r.objective);
    }
    Ok(GradCheckSummary {
        instances,
        tolerance,
        worst,
        failures,
    })
}
