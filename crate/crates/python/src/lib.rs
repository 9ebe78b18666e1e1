//! Python module `learned_rsa`. Structured results (chain tables, evaluation
//! reports, gradient checks) are returned as plain dicts and lists.

use std::collections::BTreeSet;
use std::path::Path;

use learned_rsa::agents::model::{Model as ModelFile, ModelError};
use learned_rsa::agents::{self, Agent, Forward, LayerWeights, LearnedChainConfig, TrialFeatures};
use learned_rsa::corpus::{self, CorpusError, Format, LoadOptions, Message, Trial, DEFAULT_MESSAGE_CAP};
use learned_rsa::eval::{self, ChainChoice, ModelSpec, RsaGrid};
use learned_rsa::features::{CrossValue, FeatureConfig, FeatureSet, FeatureVocabulary};
use learned_rsa::optimize::{self, ExampleOrder, InstanceBounds, StepRule, TrainConfig, TrainError};
use learned_rsa::rsa::{self, ChainConfig, ChainOutput, Cost, Direction, Lexicon};
use learned_rsa::synthetic::{self, SyntheticConfig};
use pyo3::exceptions::{PyIndexError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::{json, Value};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn corpus_err(e: CorpusError) -> PyErr {
    match e {
        CorpusError::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn model_err(e: ModelError) -> PyErr {
    match e {
        ModelError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn train_err(e: TrainError) -> PyErr {
    match e {
        TrainError::Divergence { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn message(items: Vec<String>) -> PyResult<Message> {
    let attrs = items.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>().map_err(corpus_err)?;
    Message::new(attrs).map_err(corpus_err)
}

fn tables_json(trial: &Trial, out: &ChainOutput) -> Value {
    let lex = Lexicon::from_trial(trial);
    let layers: Vec<Value> = out
        .layers
        .iter()
        .map(|l| {
            let rows: Vec<Value> = l
                .rows
                .iter()
                .map(|r| r.as_ref().map_or(Value::Null, |d| json!(d.probs())))
                .collect();
            json!({ "name": l.name, "kind": l.kind, "rows": rows })
        })
        .collect();
    json!({
        "trial": trial.id(),
        "messages": lex.messages().iter().map(ToString::to_string).collect::<Vec<_>>(),
        "entities": lex.entities().iter().map(|e| e.id()).collect::<Vec<_>>(),
        "layers": layers,
        "text": rsa::render_tables(&lex, out),
    })
}

/// A loaded, validated and negation-closed set of trials.
#[pyclass(frozen)]
struct Corpus {
    trials: Vec<Trial>,
}

impl Corpus {
    fn trial(&self, index: usize) -> PyResult<&Trial> {
        self.trials
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("trial {index} of {}", self.trials.len())))
    }
}

#[pymethods]
impl Corpus {
    #[staticmethod]
    #[pyo3(signature = (path, format="native", negatable_keys=None, message_cap=DEFAULT_MESSAGE_CAP))]
    fn load(path: &str, format: &str, negatable_keys: Option<Vec<String>>, message_cap: usize) -> PyResult<Self> {
        let options = LoadOptions {
            negatable_keys: negatable_keys.map(|k| k.into_iter().collect::<BTreeSet<_>>()),
            message_cap,
            ..LoadOptions::default()
        };
        let format: Format = parse(format)?;
        let trials = corpus::load_trials_with(Path::new(path), format, &options).map_err(corpus_err)?;
        Ok(Corpus { trials })
    }

    /// Corpus with a planted word lexicon and an always-mentioned type.
    #[staticmethod]
    #[pyo3(signature = (seed, trials=200))]
    fn synthetic(seed: u64, trials: usize) -> PyResult<Self> {
        let cfg = SyntheticConfig {
            seed,
            trials,
            ..SyntheticConfig::default()
        };
        Ok(Corpus {
            trials: synthetic::generate(&cfg).map_err(corpus_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.trials.len()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.trials.iter().map(|t| t.id().to_string()).collect()
    }

    #[getter]
    fn domains(&self) -> Vec<String> {
        self.trials.iter().map(|t| t.domain().to_string()).collect()
    }

    /// Human description of trial `index`.
    fn description(&self, index: usize) -> PyResult<Vec<String>> {
        Ok(self.trial(index)?.human_message().attrs().iter().map(ToString::to_string).collect())
    }

    /// The corpus in the native line format.
    fn to_native(&self) -> String {
        corpus::write_native(&self.trials)
    }

    /// Every layer of a pure chain on trial `index`.
    #[pyo3(signature = (index, direction="speaker-first", lam=1.0, cost="zero", depth=1))]
    fn chain<'py>(
        &self,
        py: Python<'py>,
        index: usize,
        direction: &str,
        lam: f64,
        cost: &str,
        depth: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let trial = self.trial(index)?;
        let cfg = ChainConfig {
            depth,
            ..ChainConfig::new(parse::<Direction>(direction)?, lam, parse::<Cost>(cost)?)
        };
        let out = rsa::run_trial_chain(trial, &cfg).map_err(value_err)?;
        to_py(py, &tables_json(trial, &out))
    }

    fn __repr__(&self) -> String {
        format!("Corpus({} trials)", self.trials.len())
    }
}

/// A trained feature vocabulary and weight vector.
#[pyclass(frozen)]
struct Model {
    inner: ModelFile,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            inner: ModelFile::load(Path::new(path)).map_err(model_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(Path::new(path)).map_err(model_err)
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.params.theta.clone()
    }

    #[getter]
    fn features(&self) -> Vec<String> {
        self.inner.vocab.descriptors().iter().map(ToString::to_string).collect()
    }

    /// The model's S0, L1 and S1 layers on a trial.
    fn tables<'py>(&self, py: Python<'py>, corpus: &Corpus, index: usize) -> PyResult<Bound<'py, PyAny>> {
        let trial = corpus.trial(index)?;
        let ctx = TrialFeatures::new(trial, &self.inner.vocab);
        let fw = Forward::run(&self.inner.params.theta, &ctx).map_err(value_err)?;
        to_py(py, &tables_json(trial, &fw.layers()))
    }

    /// The argmax message for the trial's target, ties broken by `seed`.
    #[pyo3(signature = (corpus, index, agent="S1", seed=0))]
    fn predict(&self, corpus: &Corpus, index: usize, agent: &str, seed: u64) -> PyResult<Vec<String>> {
        let m = agents::predict_trial(
            &self.inner.params.theta,
            corpus.trial(index)?,
            &self.inner.vocab,
            parse::<Agent>(agent)?,
            seed,
        )
        .map_err(value_err)?;
        Ok(m.attrs().iter().map(ToString::to_string).collect())
    }

    fn __repr__(&self) -> String {
        format!("Model({} features)", self.inner.vocab.len())
    }
}

#[allow(clippy::too_many_arguments)]
fn train_config(
    seed: u64,
    objective: &str,
    eta: f64,
    l2: f64,
    alpha: Option<f64>,
    epochs: usize,
    order: &str,
    layer_weights: Option<(f64, f64, f64)>,
) -> PyResult<TrainConfig> {
    let weights = layer_weights.map_or_else(LayerWeights::default, |(s0, l1, s1)| LayerWeights { s0, l1, s1 });
    let cfg = TrainConfig {
        eta,
        l2,
        epochs,
        step_rule: alpha.map_or(StepRule::Adagrad, StepRule::Fixed),
        seed,
        order: parse::<ExampleOrder>(order)?,
        objective: LearnedChainConfig {
            mode: parse(objective)?,
            weights,
        },
        ..TrainConfig::default()
    };
    cfg.validate().map_err(train_err)?;
    Ok(cfg)
}

/// Trains a learned agent on the whole corpus.
#[pyfunction]
#[pyo3(signature = (corpus, seed, features="basic+gen", cross_value="indicator", objective="s1-only",
    eta=0.01, l2=0.01, alpha=None, epochs=10, order="shuffled", layer_weights=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    corpus: &Corpus,
    seed: u64,
    features: &str,
    cross_value: &str,
    objective: &str,
    eta: f64,
    l2: f64,
    alpha: Option<f64>,
    epochs: usize,
    order: &str,
    layer_weights: Option<(f64, f64, f64)>,
) -> PyResult<Model> {
    let cfg = train_config(seed, objective, eta, l2, alpha, epochs, order, layer_weights)?;
    let feature_cfg = FeatureConfig::new(parse::<FeatureSet>(features)?, parse::<CrossValue>(cross_value)?);
    let vocab = FeatureVocabulary::build(&corpus.trials, feature_cfg).map_err(value_err)?;
    let report = optimize::sgd_train(&corpus.trials, &vocab, &cfg).map_err(train_err)?;
    Ok(Model {
        inner: ModelFile {
            vocab,
            params: report.params,
            config: json!({ "source": "python", "features": feature_cfg, "train": cfg }),
        },
    })
}

/// Cross-validates each agent: `s0`/`s1` are pure chains (λ and cost chosen
/// per fold unless `lam` is given), `S0`/`S1` learned agents.
#[pyfunction]
#[pyo3(signature = (corpus, agents, direction, seed, folds=5, lam=None, cost="zero",
    features="basic+gen", cross_value="indicator", objective="s1-only", eta=0.01, l2=0.01,
    alpha=None, epochs=10, order="shuffled"))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    corpus: &Corpus,
    agents: Vec<String>,
    direction: &str,
    seed: u64,
    folds: usize,
    lam: Option<f64>,
    cost: &str,
    features: &str,
    cross_value: &str,
    objective: &str,
    eta: f64,
    l2: f64,
    alpha: Option<f64>,
    epochs: usize,
    order: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let direction: Direction = parse(direction)?;
    let train = train_config(seed, objective, eta, l2, alpha, epochs, order, None)?;
    let feature_cfg = FeatureConfig::new(parse::<FeatureSet>(features)?, parse::<CrossValue>(cross_value)?);
    let chain = match lam {
        Some(l) => ChainChoice::Fixed(ChainConfig::new(direction, l, parse(cost)?)),
        None => ChainChoice::Grid(RsaGrid {
            direction,
            ..RsaGrid::default()
        }),
    };
    let specs = agents
        .iter()
        .map(|a| match a.as_str() {
            "s0" | "s1" => Ok(ModelSpec::Pure {
                agent: if a == "s0" { Agent::S0 } else { Agent::S1 },
                chain: chain.clone(),
            }),
            "S0" | "S1" => Ok(ModelSpec::Learned {
                agent: parse(a)?,
                features: feature_cfg,
                train: train.clone(),
            }),
            other => Err(PyValueError::new_err(format!("unknown agent `{other}`"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let trials = &corpus.trials;
    let reports = py
        .detach(|| {
            specs
                .iter()
                .map(|s| eval::cross_validate(trials, s, folds, seed))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(value_err)?;
    let table = eval::render_table(&reports);
    to_py(py, &json!({ "reports": reports, "table": table }))
}

/// Multiset Dice between two attribute lists of `key:value` strings.
#[pyfunction]
fn dice(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    Ok(eval::multiset_dice(&message(a)?, &message(b)?))
}

/// Finite-difference check of every gradient on seeded random instances.
#[pyfunction]
#[pyo3(signature = (seed, instances=100, h=1e-4, l2=0.01, tolerance=1e-6))]
fn gradcheck<'py>(
    py: Python<'py>,
    seed: u64,
    instances: usize,
    h: f64,
    l2: f64,
    tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let summary = optimize::gradient_check(seed, instances, &InstanceBounds::default(), h, l2, tolerance, |_| {})
        .map_err(train_err)?;
    let mut value = serde_json::to_value(&summary).map_err(value_err)?;
    value["passed"] = json!(summary.passed());
    to_py(py, &value)
}

#[pymodule]
#[pyo3(name = "learned_rsa")]
fn learned_rsa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
