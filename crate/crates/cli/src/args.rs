use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use learned_rsa::agents::{Agent, LayerWeights, LearnedChainConfig, ObjectiveMode};
use learned_rsa::corpus::{self, tuna::TunaMapping, Format, LoadOptions, Trial, DEFAULT_MESSAGE_CAP};
use learned_rsa::features::{CrossValue, FeatureConfig, FeatureSet};
use learned_rsa::optimize::{ExampleOrder, StepRule, TrainConfig, DEFAULT_ADAGRAD_EPSILON};
use learned_rsa::rsa::{ChainConfig, Cost, Direction};
use serde::{Serialize, Serializer};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lrsa", version, about = "Pure and learned RSA models for attribute selection")]
pub struct Cli {
    /// TOML file whose keys are long flag names of the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the probability tables of a chain for every trial in a file.
    Demo(DemoArgs),
    /// Train a learned agent and write a model file.
    Train(TrainArgs),
    /// Cross-validate one or more agents and write a report.
    Evaluate(EvaluateArgs),
    /// Compare analytic gradients with finite differences on random instances.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic corpus with a planted lexicon.
    Synth(SynthArgs),
    /// Convert TUNA XML files to the native format.
    ImportTuna(ImportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    #[arg(long, default_value = "native")]
    pub format: Format,
    /// Comma-separated keys eligible for negation; empty disables negation.
    /// Defaults to keys with at most two observed values.
    #[arg(long, value_name = "KEYS")]
    pub negatable_keys: Option<String>,
    /// Largest description (in attribute slots) whose sub-multisets are enumerated.
    #[arg(long, default_value_t = DEFAULT_MESSAGE_CAP)]
    pub message_cap: usize,
    /// TOML file overriding the TUNA element and attribute names.
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
}

impl CorpusArgs {
    pub fn load_options(&self) -> Result<LoadOptions, CliError> {
        let negatable_keys = self.negatable_keys.as_ref().map(|s| {
            s.split(',')
                .map(str::trim)
                .filter(|k| !k.is_empty())
                .map(String::from)
                .collect::<BTreeSet<_>>()
        });
        Ok(LoadOptions {
            negatable_keys,
            message_cap: self.message_cap,
            tuna: load_mapping(self.mapping.as_deref())?,
        })
    }

    pub fn load(&self, path: &Path) -> Result<Vec<Trial>, CliError> {
        let trials = corpus::load_trials_with(path, self.format, &self.load_options()?)?;
        if trials.is_empty() {
            return Err(CliError::Validation(format!("{}: no trials", path.display())));
        }
        Ok(trials)
    }
}

pub fn load_mapping(path: Option<&Path>) -> Result<TunaMapping, CliError> {
    let Some(path) = path else {
        return Ok(TunaMapping::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainArgs {
    #[arg(long, default_value = "speaker-first")]
    pub direction: Direction,
    /// Speaker rationality.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value = "zero")]
    pub cost: Cost,
    /// Number of pragmatic speaker layers.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
}

impl ChainArgs {
    pub fn chain(&self) -> ChainConfig {
        ChainConfig {
            depth: self.depth,
            ..ChainConfig::new(self.direction, self.lambda, self.cost)
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FeatureArgs {
    #[arg(long, default_value = "basic+gen")]
    pub features: FeatureSet,
    /// Value of cross-product features: attribute count or 0/1 indicator.
    #[arg(long, default_value = "indicator")]
    pub cross_value: CrossValue,
}

impl FeatureArgs {
    pub fn config(&self) -> FeatureConfig {
        FeatureConfig::new(self.features, self.cross_value)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainFlags {
    #[arg(long, default_value = "s1-only")]
    pub objective: ObjectiveMode,
    /// Layer weights for joint-layers, as `s0,l1,s1`.
    #[arg(long, value_name = "W0,W1,W2")]
    pub layer_weights: Option<String>,
    /// AdaGrad initial step size.
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    /// L2 penalty strength.
    #[arg(long, default_value_t = 0.01)]
    pub l2: f64,
    /// Fixed step size; replaces AdaGrad when given.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// `in-order` or `shuffled` (reshuffled every epoch).
    #[arg(long, default_value = "shuffled")]
    pub order: ExampleOrder,
    #[arg(long, default_value_t = DEFAULT_ADAGRAD_EPSILON)]
    pub adagrad_epsilon: f64,
}

impl TrainFlags {
    pub fn config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let weights = match &self.layer_weights {
            None => LayerWeights::default(),
            Some(s) => {
                let w: Vec<f64> = s
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Usage(format!("--layer-weights: {e}")))?;
                let [s0, l1, s1] = w[..] else {
                    return Err(CliError::Usage("--layer-weights takes three values".into()));
                };
                LayerWeights { s0, l1, s1 }
            }
        };
        let cfg = TrainConfig {
            eta: self.eta,
            l2: self.l2,
            epochs: self.epochs,
            step_rule: self.alpha.map_or(StepRule::Adagrad, StepRule::Fixed),
            adagrad_epsilon: self.adagrad_epsilon,
            seed,
            order: self.order,
            objective: LearnedChainConfig {
                mode: self.objective,
                weights,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    /// Context file: one or more trials.
    pub context: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Show the S0/L1/S1 tables of a trained model instead of the pure chain.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Also write every table cell as JSON records.
    #[arg(long, value_name = "FILE")]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    pub corpus_path: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Training report (JSON) to write.
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

/// `s0`/`s1` select a pure chain, `S0`/`S1` a learned agent. A learned agent
/// may name its own feature set, as in `S0:basic`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentChoice {
    pub agent: Agent,
    pub learned: bool,
    pub features: Option<FeatureSet>,
}

impl FromStr for AgentChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, features) = match s.split_once(':') {
            Some((n, f)) => (n, Some(f.parse::<FeatureSet>()?)),
            None => (s, None),
        };
        let (agent, learned) = match name {
            "s0" => (Agent::S0, false),
            "s1" => (Agent::S1, false),
            "S0" => (Agent::S0, true),
            "S1" => (Agent::S1, true),
            other => return Err(format!("unknown agent `{other}`: expected s0, s1, S0 or S1")),
        };
        if features.is_some() && !learned {
            return Err(format!("pure agent `{name}` takes no feature set"));
        }
        Ok(AgentChoice { agent, learned, features })
    }
}

impl fmt::Display for AgentChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.agent, self.learned) {
            (Agent::S0, false) => "s0",
            (Agent::S1, false) => "s1",
            (Agent::S0, true) => "S0",
            (Agent::S1, true) => "S1",
        };
        match self.features {
            Some(set) => write!(f, "{name}:{set}"),
            None => f.write_str(name),
        }
    }
}

impl Serialize for AgentChoice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    pub corpus_path: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Repeatable: s0, s1 (pure chain), S0, S1 (learned, optionally `S0:basic`).
    #[arg(long, required = true)]
    pub agent: Vec<AgentChoice>,
    /// Chain direction for pure agents.
    #[arg(long)]
    pub direction: Direction,
    /// Fixed λ for pure agents; without it λ and cost are chosen per fold
    /// from --lambdas x --costs.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Fixed cost for pure agents, used with --lambda.
    #[arg(long, default_value = "zero")]
    pub cost: Cost,
    #[arg(long, value_delimiter = ',', default_values_t = learned_rsa::eval::DEFAULT_LAMBDA_GRID)]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = Cost::ALL)]
    pub costs: Vec<Cost>,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub seed: u64,
    /// Report (JSON) to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also write the aligned-text table to this file.
    #[arg(long, value_name = "FILE")]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 4)]
    pub max_entities: usize,
    #[arg(long, default_value_t = 8)]
    pub max_messages: usize,
    #[arg(long, default_value_t = 20)]
    pub max_dim: usize,
    /// L2 strength used in the regularized objective.
    #[arg(long, default_value_t = 0.01)]
    pub l2: f64,
    /// Summary (JSON) to write.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Test hook: add this amount to the first coordinate of every analytic gradient.
    #[arg(long, hide = true)]
    pub corrupt_gradient: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub min_distractors: usize,
    #[arg(long, default_value_t = 4)]
    pub max_distractors: usize,
    /// Keys a near-miss distractor may differ in; 0 draws distractors independently.
    #[arg(long, default_value_t = 1)]
    pub max_changed_keys: usize,
    /// Chance of one redundant attribute in a description.
    #[arg(long, default_value_t = 0.1)]
    pub overspecify: f64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportArgs {
    /// XML file or directory searched recursively.
    pub path: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MESSAGE_CAP)]
    pub message_cap: usize,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
