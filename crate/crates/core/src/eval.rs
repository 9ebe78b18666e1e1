//! Scoring predicted descriptions against human ones, per-domain k-fold
//! cross-validation, grid search for pure chains, and the paired signed-rank
//! test.

mod wilcoxon;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult};

use crate::agents::{self, Agent, AgentError, TrialFeatures};
use crate::corpus::{Message, Trial};
use crate::features::{FeatureConfig, FeatureError, FeatureVocabulary};
use crate::optimize::{self, TrainConfig, TrainError};
use crate::rsa::{self, ChainConfig, Cost, Direction, Distribution, Lexicon, RsaError};
use crate::seeds;

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.5, 1.0, 2.0, 5.0, 10.0];

// Sub-seed streams.
const TIE_STREAM: u64 = 1;
const FOLD_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid fold count: {0}")]
    Folds(String),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("no trials to evaluate")]
    Empty,
    #[error("training diverged in domain `{domain}`, fold {fold}: {source}")]
    Training {
        domain: String,
        fold: usize,
        #[source]
        source: TrainError,
    },
    #[error("trial `{trial}`: {source}")]
    Rsa {
        trial: String,
        #[source]
        source: RsaError,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("signed-rank test: {0}")]
    Wilcoxon(String),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// `2·Σ_a min(count_x(a), count_y(a)) / (|x| + |y|)`. Two empty descriptions
/// score 1; see [`both_empty`].
pub fn multiset_dice(x: &Message, y: &Message) -> f64 {
    if x.is_empty() && y.is_empty() {
        return 1.0;
    }
    let cy = y.counts();
    let overlap: usize = x
        .counts()
        .into_iter()
        .map(|(a, n)| n.min(cy.get(a).copied().unwrap_or(0)))
        .sum();
    2.0 * overlap as f64 / (x.len() + y.len()) as f64
}

pub fn both_empty(x: &Message, y: &Message) -> bool {
    x.is_empty() && y.is_empty()
}

/// 1 when the multisets are equal, else 0.
pub fn accuracy(pred: &Message, gold: &Message) -> f64 {
    if pred == gold {
        1.0
    } else {
        0.0
    }
}

/// Fold id for every trial. Trials are shuffled and dealt round-robin within
/// each domain, so every domain contributes to every fold.
pub fn kfold(trials: &[Trial], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(EvalError::Folds(format!("need at least 2 folds, got {k}")));
    }
    let mut assignment = vec![0; trials.len()];
    for (d, (domain, mut members)) in by_domain(trials).into_iter().enumerate() {
        if members.len() < k {
            return Err(EvalError::Folds(format!(
                "domain `{domain}` has {} trials, fewer than {k} folds",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[FOLD_STREAM, d as u64]));
        members.shuffle(&mut rng);
        for (pos, i) in members.into_iter().enumerate() {
            assignment[i] = pos % k;
        }
    }
    Ok(assignment)
}

fn by_domain(trials: &[Trial]) -> BTreeMap<String, Vec<usize>> {
    let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        map.entry(t.domain().to_string()).or_default().push(i);
    }
    map
}

/// Candidate `(λ, cost)` pairs for a pure chain, searched in the order
/// lambdas-outer, costs-inner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsaGrid {
    pub direction: Direction,
    pub lambdas: Vec<f64>,
    pub costs: Vec<Cost>,
}

impl Default for RsaGrid {
    fn default() -> Self {
        RsaGrid {
            direction: Direction::SpeakerFirst,
            lambdas: DEFAULT_LAMBDA_GRID.to_vec(),
            costs: Cost::ALL.to_vec(),
        }
    }
}

impl RsaGrid {
    pub fn configs(&self) -> Vec<ChainConfig> {
        self.lambdas
            .iter()
            .flat_map(|&l| self.costs.iter().map(move |&c| ChainConfig::new(self.direction, l, c)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainChoice {
    Fixed(ChainConfig),
    Grid(RsaGrid),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// A truth-conditional chain; `S0` reads the literal speaker, `S1` the top
    /// pragmatic speaker.
    Pure { agent: Agent, chain: ChainChoice },
    Learned {
        agent: Agent,
        features: FeatureConfig,
        train: TrainConfig,
    },
}

impl ModelSpec {
    pub fn label(&self) -> String {
        match self {
            ModelSpec::Pure { agent, chain } => {
                let agent = match agent {
                    Agent::S0 => "s0",
                    Agent::S1 => "s1",
                };
                match chain {
                    ChainChoice::Fixed(c) => format!("RSA {agent} (lambda={}, cost={})", c.lambda, c.cost),
                    ChainChoice::Grid(_) => format!("RSA {agent} (best grid)"),
                }
            }
            ModelSpec::Learned { agent, features, .. } => format!("Learned {agent:?}, {} feats.", features.set),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub lambda: f64,
    pub cost: Cost,
    pub dice: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub config: ChainConfig,
    pub dice: f64,
    pub scores: Vec<GridScore>,
}

/// Picks the `(λ, cost)` with the highest mean Dice on `trials`, earliest grid
/// entry winning ties. Pure chains have no fitted parameters, so scoring each
/// candidate on all of `trials` is the inner cross-validation estimate.
pub fn grid_search_rsa(trials: &[Trial], agent: Agent, grid: &RsaGrid, seed: u64) -> Result<GridChoice> {
    let configs = grid.configs();
    if configs.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if trials.is_empty() {
        return Err(EvalError::Empty);
    }
    let scores = configs
        .par_iter()
        .map(|cfg| {
            let mut total = 0.0;
            for (i, trial) in trials.iter().enumerate() {
                let pred = predict_pure(trial, agent, cfg, tie_seed(seed, i))?;
                total += multiset_dice(&pred, trial.human_message());
            }
            Ok(total / trials.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] + 1e-12 {
            best = i;
        }
    }
    Ok(GridChoice {
        config: configs[best].clone(),
        dice: scores[best],
        scores: configs
            .iter()
            .zip(&scores)
            .map(|(c, &dice)| GridScore {
                lambda: c.lambda,
                cost: c.cost,
                dice,
            })
            .collect(),
    })
}

fn tie_seed(seed: u64, trial: usize) -> u64 {
    seeds::derive(seed, &[TIE_STREAM, trial as u64])
}

/// Distribution of the chosen pure agent over the trial's messages for its
/// target.
pub fn pure_distribution(trial: &Trial, agent: Agent, cfg: &ChainConfig) -> std::result::Result<Distribution, RsaError> {
    match agent {
        Agent::S0 => rsa::literal_speaker(&Lexicon::from_trial(trial), cfg, trial.target_index()),
        Agent::S1 => rsa::run_trial_chain(trial, cfg)?.final_speaker().rows[trial.target_index()]
            .clone()
            .ok_or(RsaError::EmptySupport),
    }
}

pub fn predict_pure(trial: &Trial, agent: Agent, cfg: &ChainConfig, seed: u64) -> Result<Message> {
    let wrap = |source| EvalError::Rsa {
        trial: trial.id().to_string(),
        source,
    };
    let dist = pure_distribution(trial, agent, cfg).map_err(wrap)?;
    let m = rsa::predict(&dist, seed).map_err(wrap)?;
    Ok(trial.messages()[m].clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub trial: String,
    pub domain: String,
    pub fold: usize,
    pub predicted: String,
    pub human: String,
    pub dice: f64,
    pub accuracy: f64,
    /// Both descriptions empty; Dice is defined as 1.
    pub both_empty: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub domain: String,
    pub trials: usize,
    pub accuracy: f64,
    pub dice: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSelection {
    pub domain: String,
    pub fold: usize,
    pub choice: GridChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub spec: ModelSpec,
    pub folds: usize,
    pub seed: u64,
    pub domains: Vec<ScoreSummary>,
    /// Micro-average over all trials.
    pub pooled: ScoreSummary,
    pub rows: Vec<TrialScore>,
    pub selections: Vec<FoldSelection>,
}

impl EvalReport {
    pub fn dice_scores(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dice).collect()
    }
}

struct FoldOutput {
    selection: Option<FoldSelection>,
    scored: Vec<(usize, TrialScore)>,
}

/// Trains on the complement of each fold within each domain and scores the
/// fold. (domain, fold) jobs run in parallel.
pub fn cross_validate(trials: &[Trial], spec: &ModelSpec, k: usize, seed: u64) -> Result<EvalReport> {
    if trials.is_empty() {
        return Err(EvalError::Empty);
    }
    let assignment = kfold(trials, k, seed)?;
    let domains = by_domain(trials);
    let jobs: Vec<(usize, &String, usize)> = domains
        .keys()
        .enumerate()
        .flat_map(|(d, name)| (0..k).map(move |f| (d, name, f)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|&(d, name, fold)| {
            let members = &domains[name];
            let (test, train): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&i| assignment[i] == fold);
            assert!(test.iter().all(|i| !train.contains(i)), "fold leaks into its training set");
            run_fold(trials, spec, seed, d, name, fold, &train, &test)
        })
        .collect::<Result<Vec<FoldOutput>>>()?;

    let mut selections = Vec::new();
    let mut scored = Vec::with_capacity(trials.len());
    for out in outputs {
        selections.extend(out.selection);
        scored.extend(out.scored);
    }
    scored.sort_by_key(|(i, _)| *i);
    let rows: Vec<TrialScore> = scored.into_iter().map(|(_, r)| r).collect();
    let summary = |domain: &str, rows: &[&TrialScore]| ScoreSummary {
        domain: domain.to_string(),
        trials: rows.len(),
        accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / rows.len() as f64,
        dice: rows.iter().map(|r| r.dice).sum::<f64>() / rows.len() as f64,
    };
    let domain_rows = domains
        .keys()
        .map(|name| {
            let in_domain: Vec<&TrialScore> = rows.iter().filter(|r| &r.domain == name).collect();
            summary(name, &in_domain)
        })
        .collect();
    let all: Vec<&TrialScore> = rows.iter().collect();
    Ok(EvalReport {
        model: spec.label(),
        spec: spec.clone(),
        folds: k,
        seed,
        domains: domain_rows,
        pooled: summary("All", &all),
        rows,
        selections,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    trials: &[Trial],
    spec: &ModelSpec,
    seed: u64,
    d: usize,
    domain: &str,
    fold: usize,
    train: &[usize],
    test: &[usize],
) -> Result<FoldOutput> {
    let train_trials: Vec<Trial> = train.iter().map(|&i| trials[i].clone()).collect();
    let mut selection = None;
    let predictions: Vec<(usize, Message)> = match spec {
        ModelSpec::Pure { agent, chain } => {
            let cfg = match chain {
                ChainChoice::Fixed(c) => c.clone(),
                ChainChoice::Grid(grid) => {
                    let inner_seed = seeds::derive(seed, &[TRAIN_STREAM, d as u64, fold as u64]);
                    let choice = grid_search_rsa(&train_trials, *agent, grid, inner_seed)?;
                    let cfg = choice.config.clone();
                    selection = Some(FoldSelection {
                        domain: domain.to_string(),
                        fold,
                        choice,
                    });
                    cfg
                }
            };
            test.iter()
                .map(|&i| Ok((i, predict_pure(&trials[i], *agent, &cfg, tie_seed(seed, i))?)))
                .collect::<Result<_>>()?
        }
        ModelSpec::Learned { agent, features, train } => {
            let vocab = FeatureVocabulary::build(&train_trials, *features)?;
            let cfg = TrainConfig {
                seed: seeds::derive(train.seed, &[TRAIN_STREAM, d as u64, fold as u64]),
                ..train.clone()
            };
            let report = optimize::sgd_train(&train_trials, &vocab, &cfg).map_err(|source| EvalError::Training {
                domain: domain.to_string(),
                fold,
                source,
            })?;
            test.iter()
                .map(|&i| {
                    let trial = &trials[i];
                    let ctx = TrialFeatures::new(trial, &vocab);
                    let m = agents::predict_message(
                        &report.params.theta,
                        &ctx,
                        *agent,
                        trial.target_index(),
                        tie_seed(seed, i),
                    )?;
                    Ok((i, trial.messages()[m].clone()))
                })
                .collect::<Result<_>>()?
        }
    };
    let scored = predictions
        .into_iter()
        .map(|(i, pred)| {
            let trial = &trials[i];
            let gold = trial.human_message();
            let row = TrialScore {
                trial: trial.id().to_string(),
                domain: domain.to_string(),
                fold,
                predicted: pred.to_string(),
                human: gold.to_string(),
                dice: multiset_dice(&pred, gold),
                accuracy: accuracy(&pred, gold),
                both_empty: both_empty(&pred, gold),
            };
            (i, row)
        })
        .collect();
    Ok(FoldOutput { selection, scored })
}

/// Rows are models; each domain (then "All") gets an accuracy (%) and a Dice
/// column.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut domains: Vec<&str> = Vec::new();
    for r in reports {
        for d in &r.domains {
            if !domains.contains(&d.domain.as_str()) {
                domains.push(&d.domain);
            }
        }
    }
    let model_width = reports.iter().map(|r| r.model.chars().count()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<model_width$}", "Model");
    for d in domains.iter().copied().chain(["All"]) {
        let _ = write!(out, "  {:>15}", d);
    }
    out.push('\n');
    let _ = write!(out, "{:<model_width$}", "");
    for _ in 0..=domains.len() {
        let _ = write!(out, "  {:>6} {:>8}", "Acc.", "Dice");
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<model_width$}", r.model);
        for d in &domains {
            match r.domains.iter().find(|s| &s.domain == d) {
                Some(s) => {
                    let _ = write!(out, "  {:>5.1}% {:>8.3}", 100.0 * s.accuracy, s.dice);
                }
                None => {
                    let _ = write!(out, "  {:>6} {:>8}", "-", "-");
                }
            }
        }
        let _ = write!(out, "  {:>5.1}% {:>8.3}", 100.0 * r.pooled.accuracy, r.pooled.dice);
        out.push('\n');
    }
    out
}
