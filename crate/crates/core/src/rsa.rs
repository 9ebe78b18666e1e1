//! Pure (untrained) RSA agents over a Boolean lexicon.
//!
//! Speakers score true messages by `λ·(log L − C(m))` with false messages
//! masked out before exponentiation, so `λ = 0` yields a uniform choice among
//! true messages. Listeners invert the layer below by Bayes' rule against the
//! state prior. All normalization happens in log space.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Entity, Message, Trial};

/// Probabilities within this distance of the maximum count as ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RsaError {
    #[error("no message is true of entity {0}")]
    NoTrueMessage(usize),
    #[error("message {0} has no supporting entity")]
    UnusableMessage(usize),
    #[error("distribution has empty support")]
    EmptySupport,
    #[error("invalid chain configuration: {0}")]
    Config(String),
}

pub type Result<T, E = RsaError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// s0 → l1 → s1
    SpeakerFirst,
    /// l0 → s1
    ListenerFirst,
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "speaker-first" => Ok(Direction::SpeakerFirst),
            "listener-first" => Ok(Direction::ListenerFirst),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Message cost as a function of message length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cost {
    Zero,
    Length,
    NegLength,
}

impl Cost {
    pub fn of(self, message: &Message) -> f64 {
        match self {
            Cost::Zero => 0.0,
            Cost::Length => message.len() as f64,
            Cost::NegLength => -(message.len() as f64),
        }
    }

    pub const ALL: [Cost; 3] = [Cost::Zero, Cost::Length, Cost::NegLength];
}

impl FromStr for Cost {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(Cost::Zero),
            "length" => Ok(Cost::Length),
            "neg-length" => Ok(Cost::NegLength),
            other => Err(format!("unknown cost `{other}`")),
        }
    }
}

impl std::fmt::Display for Cost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cost::Zero => "zero",
            Cost::Length => "length",
            Cost::NegLength => "neg-length",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub direction: Direction,
    pub lambda: f64,
    pub cost: Cost,
    /// State prior; `None` takes the trial's prior (uniform unless given).
    pub prior: Option<Vec<f64>>,
    /// Number of pragmatic speaker layers above the literal agent.
    pub depth: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            direction: Direction::SpeakerFirst,
            lambda: 1.0,
            cost: Cost::Zero,
            prior: None,
            depth: 1,
        }
    }
}

impl ChainConfig {
    pub fn new(direction: Direction, lambda: f64, cost: Cost) -> Self {
        ChainConfig {
            direction,
            lambda,
            cost,
            ..ChainConfig::default()
        }
    }

    fn validate(&self, n_entities: usize) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(RsaError::Config(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.depth == 0 {
            return Err(RsaError::Config("depth must be at least 1".into()));
        }
        if let Some(p) = &self.prior {
            if p.len() != n_entities {
                return Err(RsaError::Config(format!("prior has {} entries for {n_entities} entities", p.len())));
            }
            let total: f64 = p.iter().sum();
            if p.iter().any(|x| *x < 0.0 || !x.is_finite()) || (total - 1.0).abs() > 1e-9 {
                return Err(RsaError::Config("prior must be a probability vector".into()));
            }
        }
        Ok(())
    }
}

/// A finite distribution stored densely; indices with zero mass are outside
/// the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Normalizes log-scores; `-inf` entries get exactly zero mass.
    pub fn from_log_scores(scores: &[f64]) -> Result<Self> {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(RsaError::EmptySupport);
        }
        let mut probs: Vec<f64> = scores
            .iter()
            .map(|s| if *s == f64::NEG_INFINITY { 0.0 } else { (s - max).exp() })
            .collect();
        let z: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= z);
        Ok(Distribution { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let z: f64 = weights.iter().sum();
        if !(z > 0.0) || !z.is_finite() {
            return Err(RsaError::EmptySupport);
        }
        Ok(Distribution {
            probs: weights.iter().map(|w| w / z).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Indices within [`TIE_TOLERANCE`] of the maximum.
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..self.probs.len())
            .filter(|&i| self.probs[i] >= max - TIE_TOLERANCE)
            .collect()
    }
}

/// Truth relation between messages (rows) and entities (columns).
#[derive(Clone, Debug)]
pub struct Lexicon {
    truth: Vec<Vec<bool>>,
    messages: Vec<Message>,
    entities: Vec<Entity>,
}

impl Lexicon {
    /// `m` is true of `t` when every distinct attribute of `m` is a positive
    /// attribute of `t`; multiplicity is ignored.
    pub fn new(messages: Vec<Message>, entities: Vec<Entity>) -> Self {
        let truth = messages
            .iter()
            .map(|m| {
                entities
                    .iter()
                    .map(|e| m.distinct().all(|a| e.positives().contains(a)))
                    .collect()
            })
            .collect();
        Lexicon {
            truth,
            messages,
            entities,
        }
    }

    pub fn from_trial(trial: &Trial) -> Self {
        Lexicon::new(trial.messages().to_vec(), trial.entities().to_vec())
    }

    pub fn is_true(&self, message: usize, entity: usize) -> bool {
        self.truth[message][entity]
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn n_messages(&self) -> usize {
        self.messages.len()
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn speaker_scores(weights: impl Iterator<Item = f64>, costs: &[f64], lambda: f64) -> Vec<f64> {
    weights
        .zip(costs)
        .map(|(w, c)| {
            if w > 0.0 {
                lambda * (w.ln() - c)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn costs(lex: &Lexicon, cost: Cost) -> Vec<f64> {
    lex.messages.iter().map(|m| cost.of(m)).collect()
}

/// `s0(m|t) ∝ exp(λ(log L(m,t) − C(m)))`, false messages masked to zero.
pub fn literal_speaker(lex: &Lexicon, cfg: &ChainConfig, t: usize) -> Result<Distribution> {
    cfg.validate(lex.n_entities())?;
    let truth = (0..lex.n_messages()).map(|m| if lex.truth[m][t] { 1.0 } else { 0.0 });
    Distribution::from_log_scores(&speaker_scores(truth, &costs(lex, cfg.cost), cfg.lambda))
        .map_err(|_| RsaError::NoTrueMessage(t))
}

/// `l(t|m) ∝ s(m|t)·P(t)` for a single message, given the speaker's column
/// `s(m|·)` over entities.
pub fn pragmatic_listener(speaker_column: &[f64], prior: &[f64]) -> Result<Distribution> {
    let weights: Vec<f64> = speaker_column.iter().zip(prior).map(|(s, p)| s * p).collect();
    Distribution::from_weights(&weights)
}

/// `s(m|t) ∝ exp(λ(log l(t|m) − C(m)))` given the listener row `l(t|·)` over
/// messages; messages with zero listener mass get zero.
pub fn pragmatic_speaker(listener_row: &[f64], costs: &[f64], lambda: f64) -> Result<Distribution> {
    Distribution::from_log_scores(&speaker_scores(listener_row.iter().copied(), costs, lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Rows are entities, distributions over messages.
    Speaker,
    /// Rows are messages, distributions over entities.
    Listener,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    /// `None` marks a listener row for a message no entity supports.
    pub rows: Vec<Option<Distribution>>,
}

impl Layer {
    /// Probability of `message` given `entity` (speakers) or `entity` given
    /// `message` (listeners).
    pub fn prob(&self, message: usize, entity: usize) -> f64 {
        let (row, col) = match self.kind {
            LayerKind::Speaker => (entity, message),
            LayerKind::Listener => (message, entity),
        };
        self.rows[row].as_ref().map_or(0.0, |d| d.prob(col))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub layers: Vec<Layer>,
}

impl ChainOutput {
    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// The top speaker layer.
    pub fn final_speaker(&self) -> &Layer {
        self.layers
            .iter()
            .rev()
            .find(|l| l.kind == LayerKind::Speaker)
            .expect("every chain ends in a speaker")
    }
}

/// Runs the full chain and keeps every layer. Listener rows for messages no
/// entity supports are left undefined and such messages get zero speaker mass
/// above; a speaker row with empty support is an error.
pub fn run_chain(lex: &Lexicon, cfg: &ChainConfig) -> Result<ChainOutput> {
    cfg.validate(lex.n_entities())?;
    let prior = cfg.prior.clone().unwrap_or_else(|| uniform(lex.n_entities()));
    run_chain_with_prior(lex, cfg, &prior)
}

/// [`run_chain`] using the trial's own prior unless the config overrides it.
pub fn run_trial_chain(trial: &Trial, cfg: &ChainConfig) -> Result<ChainOutput> {
    let lex = Lexicon::from_trial(trial);
    cfg.validate(lex.n_entities())?;
    let prior = cfg.prior.clone().unwrap_or_else(|| trial.prior().to_vec());
    run_chain_with_prior(&lex, cfg, &prior)
}

fn run_chain_with_prior(lex: &Lexicon, cfg: &ChainConfig, prior: &[f64]) -> Result<ChainOutput> {
    let (n_m, n_t) = (lex.n_messages(), lex.n_entities());
    let costs = costs(lex, cfg.cost);
    let mut layers = Vec::new();

    let listen = |speaker: &Layer, name: String| -> Layer {
        let rows = (0..n_m)
            .map(|m| {
                let column: Vec<f64> = (0..n_t).map(|t| speaker.prob(m, t)).collect();
                pragmatic_listener(&column, prior).ok()
            })
            .collect();
        Layer {
            name,
            kind: LayerKind::Listener,
            rows,
        }
    };
    let speak = |listener: &Layer, name: String| -> Result<Layer> {
        let rows = (0..n_t)
            .map(|t| {
                let row: Vec<f64> = (0..n_m).map(|m| listener.prob(m, t)).collect();
                pragmatic_speaker(&row, &costs, cfg.lambda)
                    .map(Some)
                    .map_err(|_| RsaError::NoTrueMessage(t))
            })
            .collect::<Result<_>>()?;
        Ok(Layer {
            name,
            kind: LayerKind::Speaker,
            rows,
        })
    };

    let mut first_pragmatic = 1;
    match cfg.direction {
        Direction::SpeakerFirst => {
            let rows = (0..n_t)
                .map(|t| literal_speaker(lex, cfg, t).map(Some))
                .collect::<Result<_>>()?;
            layers.push(Layer {
                name: "s0".into(),
                kind: LayerKind::Speaker,
                rows,
            });
        }
        Direction::ListenerFirst => {
            let rows = (0..n_m)
                .map(|m| {
                    let truth: Vec<f64> = (0..n_t).map(|t| if lex.truth[m][t] { 1.0 } else { 0.0 }).collect();
                    pragmatic_listener(&truth, prior).ok()
                })
                .collect();
            let l0 = Layer {
                name: "l0".into(),
                kind: LayerKind::Listener,
                rows,
            };
            let s1 = speak(&l0, "s1".into())?;
            layers.push(l0);
            layers.push(s1);
            first_pragmatic = 2;
        }
    }
    for k in first_pragmatic..=cfg.depth {
        let speaker = layers.last().expect("chain has a speaker layer");
        let listener = listen(speaker, format!("l{k}"));
        let next = speak(&listener, format!("s{k}"))?;
        layers.push(listener);
        layers.push(next);
    }
    Ok(ChainOutput { layers })
}

/// Argmax with ties broken by a uniform draw seeded from `seed`.
pub fn predict(dist: &Distribution, seed: u64) -> Result<usize> {
    predict_with_rng(dist, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn predict_with_rng<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R) -> Result<usize> {
    if dist.is_empty() || dist.support().is_empty() {
        return Err(RsaError::EmptySupport);
    }
    let best = dist.argmax_set();
    Ok(if best.len() == 1 {
        best[0]
    } else {
        best[rng.random_range(0..best.len())]
    })
}

/// Aligned text rendering of every layer, probabilities to six decimals.
pub fn render_tables(lex: &Lexicon, out: &ChainOutput) -> String {
    let m_labels: Vec<String> = lex.messages.iter().map(ToString::to_string).collect();
    let t_labels: Vec<String> = lex.entities.iter().map(|e| e.id().to_string()).collect();
    let mut s = String::new();
    for layer in &out.layers {
        let (rows, cols) = match layer.kind {
            LayerKind::Speaker => (&t_labels, &m_labels),
            LayerKind::Listener => (&m_labels, &t_labels),
        };
        let head_w = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0).max(layer.name.len());
        let col_w: Vec<usize> = cols.iter().map(|c| c.chars().count().max(8)).collect();
        let _ = write!(s, "{:<head_w$}", layer.name);
        for (c, w) in cols.iter().zip(&col_w) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.push('\n');
        for (i, r) in rows.iter().enumerate() {
            let _ = write!(s, "{r:<head_w$}");
            for (j, w) in col_w.iter().enumerate() {
                match &layer.rows[i] {
                    Some(d) => {
                        let _ = write!(s, "  {:>w$.6}", d.prob(j));
                    }
                    None => {
                        let _ = write!(s, "  {:>w$}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

/// One cell of a layer table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord {
    pub layer: String,
    pub message: String,
    pub entity: String,
    pub prob: f64,
}

/// Every defined cell of every layer, probabilities rounded to six decimals.
pub fn table_records(lex: &Lexicon, out: &ChainOutput) -> Vec<ProbRecord> {
    let mut records = Vec::new();
    for layer in &out.layers {
        for (t, e) in lex.entities.iter().enumerate() {
            for (m, msg) in lex.messages.iter().enumerate() {
                let defined = match layer.kind {
                    LayerKind::Speaker => layer.rows[t].is_some(),
                    LayerKind::Listener => layer.rows[m].is_some(),
                };
                if defined {
                    records.push(ProbRecord {
                        layer: layer.name.clone(),
                        message: msg.to_string(),
                        entity: e.id().to_string(),
                        prob: (layer.prob(m, t) * 1e6).round() / 1e6,
                    });
                }
            }
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Attribute;

    fn entity(id: &str, attrs: &[&str]) -> Entity {
        Entity::new(id, attrs.iter().map(|a| a.parse::<Attribute>().unwrap())).unwrap()
    }

    fn msg(items: &[&str]) -> Message {
        Message::parse(items).unwrap()
    }

    fn fig1() -> Lexicon {
        Lexicon::new(
            vec![msg(&["f:beard"]), msg(&["f:glasses"]), msg(&["f:tie"])],
            vec![
                entity("r1", &["f:beard", "f:glasses"]),
                entity("r2", &["f:glasses", "f:tie"]),
                entity("r3", &["f:tie"]),
            ],
        )
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn literal_speaker_fig1() {
        let d = literal_speaker(&fig1(), &ChainConfig::default(), 0).unwrap();
        assert!(close(d.probs(), &[0.5, 0.5, 0.0], 1e-12));
    }

    #[test]
    fn literal_speaker_length_cost() {
        let lex = Lexicon::new(vec![msg(&["a:x"]), msg(&["a:x", "b:y"])], vec![entity("t", &["a:x", "b:y"])]);
        let cfg = ChainConfig::new(Direction::SpeakerFirst, 1.0, Cost::Length);
        let d = literal_speaker(&lex, &cfg, 0).unwrap();
        let (e1, e2) = ((-1.0f64).exp(), (-2.0f64).exp());
        assert!(close(d.probs(), &[e1 / (e1 + e2), e2 / (e1 + e2)], 1e-12));
        assert!((d.prob(0) - 0.7311).abs() < 5e-5);
    }

    #[test]
    fn zero_temperature_is_uniform_over_true_messages() {
        let cfg = ChainConfig::new(Direction::SpeakerFirst, 0.0, Cost::Length);
        let d = literal_speaker(&fig1(), &cfg, 1).unwrap();
        assert!(close(d.probs(), &[0.0, 0.5, 0.5], 1e-12));
    }

    #[test]
    fn no_true_message_is_an_error() {
        let lex = Lexicon::new(vec![msg(&["a:x"])], vec![entity("t", &["b:y"])]);
        assert_eq!(literal_speaker(&lex, &ChainConfig::default(), 0), Err(RsaError::NoTrueMessage(0)));
    }

    #[test]
    fn listener_examples() {
        let d = pragmatic_listener(&[0.0, 0.5, 1.0], &[1.0 / 3.0; 3]).unwrap();
        assert!(close(d.probs(), &[0.0, 1.0 / 3.0, 2.0 / 3.0], 1e-12));
        let d = pragmatic_listener(&[0.5, 0.5, 0.0], &[0.5, 0.25, 0.25]).unwrap();
        assert!(close(d.probs(), &[2.0 / 3.0, 1.0 / 3.0, 0.0], 1e-12));
        let d = pragmatic_listener(&[0.25; 4], &[0.25; 4]).unwrap();
        assert!(close(d.probs(), &[0.25; 4], 1e-12));
        assert_eq!(pragmatic_listener(&[0.0, 0.0], &[0.5, 0.5]), Err(RsaError::EmptySupport));
    }

    #[test]
    fn speaker_examples() {
        let d = pragmatic_speaker(&[0.5, 1.0 / 3.0], &[0.0, 0.0], 10.0).unwrap();
        let (a, b) = (0.5f64.powi(10), (1.0f64 / 3.0).powi(10));
        assert!(close(d.probs(), &[a / (a + b), b / (a + b)], 1e-12));
        assert!((d.prob(0) - 0.983).abs() < 5e-4);
        let d = pragmatic_speaker(&[0.0, 0.7, 0.0], &[0.0; 3], 1.0).unwrap();
        assert_eq!(d.probs(), &[0.0, 1.0, 0.0]);
        assert_eq!(pragmatic_speaker(&[0.0, 0.0], &[0.0; 2], 1.0), Err(RsaError::EmptySupport));
    }

    #[test]
    fn fig1_chain() {
        let out = run_chain(&fig1(), &ChainConfig::default()).unwrap();
        let s1 = out.layer("s1").unwrap();
        let rows: Vec<&[f64]> = s1.rows.iter().map(|r| r.as_ref().unwrap().probs()).collect();
        assert!(close(rows[0], &[2.0 / 3.0, 1.0 / 3.0, 0.0], 1e-12));
        assert!(close(rows[1], &[0.0, 0.6, 0.4], 1e-12));
        assert!(close(rows[2], &[0.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn degenerate_game() {
        let lex = Lexicon::new(vec![msg(&["a:x"])], vec![entity("t", &["a:x"])]);
        for direction in [Direction::SpeakerFirst, Direction::ListenerFirst] {
            let out = run_chain(&lex, &ChainConfig::new(direction, 1.0, Cost::Zero)).unwrap();
            for layer in out.layers.iter().filter(|l| l.kind == LayerKind::Speaker) {
                assert_eq!(layer.prob(0, 0), 1.0);
            }
        }
    }

    #[test]
    fn deeper_chains_have_more_layers() {
        let cfg = ChainConfig {
            depth: 3,
            ..ChainConfig::default()
        };
        let out = run_chain(&fig1(), &cfg).unwrap();
        let names: Vec<_> = out.layers.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["s0", "l1", "s1", "l2", "s2", "l3", "s3"]);
        let cfg = ChainConfig {
            direction: Direction::ListenerFirst,
            depth: 2,
            ..ChainConfig::default()
        };
        let names: Vec<_> = run_chain(&fig1(), &cfg).unwrap().layers.iter().map(|l| l.name.clone()).collect();
        assert_eq!(names, ["l0", "s1", "l2", "s2"]);
    }

    #[test]
    fn invalid_config() {
        let cfg = ChainConfig::new(Direction::SpeakerFirst, -1.0, Cost::Zero);
        assert!(matches!(run_chain(&fig1(), &cfg), Err(RsaError::Config(_))));
        let cfg = ChainConfig {
            prior: Some(vec![0.5, 0.5]),
            ..ChainConfig::default()
        };
        assert!(matches!(run_chain(&fig1(), &cfg), Err(RsaError::Config(_))));
    }

    #[test]
    fn unusable_messages_get_no_speaker_mass() {
        let lex = Lexicon::new(
            vec![msg(&["a:x"]), msg(&["z:z"])],
            vec![entity("t", &["a:x"]), entity("u", &["a:x", "b:y"])],
        );
        let out = run_chain(&lex, &ChainConfig::new(Direction::ListenerFirst, 1.0, Cost::Zero)).unwrap();
        assert!(out.layer("l0").unwrap().rows[1].is_none());
        assert_eq!(out.final_speaker().prob(1, 0), 0.0);
    }

    #[test]
    fn predict_unique_and_seeded() {
        let d = Distribution::from_weights(&[0.0, 0.6, 0.4]).unwrap();
        assert_eq!(predict(&d, 7).unwrap(), 1);
        let tie = Distribution::from_weights(&[0.5, 0.5]).unwrap();
        assert_eq!(predict(&tie, 42).unwrap(), predict(&tie, 42).unwrap());
        let empty = Distribution { probs: vec![] };
        assert_eq!(predict(&empty, 0), Err(RsaError::EmptySupport));
    }

    #[test]
    fn predict_tie_frequencies() {
        let k = 4;
        let d = Distribution::from_weights(&vec![1.0; k]).unwrap();
        let draws = 10_000;
        let mut counts = vec![0usize; k];
        for seed in 0..draws {
            counts[predict(&d, seed).unwrap()] += 1;
        }
        let p = 1.0 / k as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn records_round_to_six_decimals() {
        let lex = fig1();
        let out = run_chain(&lex, &ChainConfig::default()).unwrap();
        let recs = table_records(&lex, &out);
        assert_eq!(recs.len(), 27);
        let tie = recs.iter().find(|r| r.layer == "l1" && r.message == "f:tie" && r.entity == "r2").unwrap();
        assert_eq!(tie.prob, 0.333333);
        let text = render_tables(&lex, &out);
        assert!(text.contains("0.600000"));
    }
}
