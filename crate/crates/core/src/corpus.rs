//! Trial data model and corpus ingestion.
//!
//! A [`Trial`] is one reference game: a set of entities, one of which is the
//! target, the attribute multiset a human used to describe it, and the space
//! of candidate messages the agents choose from. Entities carry their positive
//! attributes plus a corpus-level negation closure (see [`negation_closure`]).
//!
//! Two input formats are supported: the native line-delimited JSON records
//! (one trial per line, see [`TrialRecord`]) and TUNA-style XML trial files
//! (see [`tuna`]).

pub mod tuna;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on the number of attribute slots a message space is built from.
pub const DEFAULT_MESSAGE_CAP: usize = 12;

/// Keys with at most this many distinct observed values are negatable by default.
pub const DEFAULT_NEGATABLE_MAX_VALUES: usize = 2;

const PRIOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid attribute `{0}`: expected `key:value`")]
    Attribute(String),
    #[error("trial `{trial}`: {message}")]
    Validation { trial: String, message: String },
    #[error("message space over {slots} attribute slots exceeds the cap of {cap}")]
    MessageSpaceTooLarge { slots: usize, cap: usize },
    #[error("{path}: {message}")]
    Xml { path: PathBuf, message: String },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

/// A `key:value` pair. Negation only ever appears on the entity side.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Attribute {
    key: String,
    value: String,
    negated: bool,
}

impl Attribute {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Result<Self> {
        let (key, value) = (key.into(), value.into());
        if !valid_token(&key) || !valid_token(&value) {
            return Err(CorpusError::Attribute(format!("{key}:{value}")));
        }
        Ok(Attribute {
            key,
            value,
            negated: false,
        })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    /// The absence marker for this attribute.
    pub fn negate(&self) -> Attribute {
        Attribute {
            negated: true,
            ..self.clone()
        }
    }

    /// The attribute with any negation mark removed.
    pub fn positive(&self) -> Attribute {
        Attribute {
            negated: false,
            ..self.clone()
        }
    }
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c == ',' || c == '|')
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            f.write_str("!")?;
        }
        write!(f, "{}:{}", self.key, self.value)
    }
}

impl FromStr for Attribute {
    type Err = CorpusError;

    /// Parses `key:value`, or `!key:value` / `¬key:value` for a negated attribute.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (negated, body) = match s.strip_prefix('!').or_else(|| s.strip_prefix('¬')) {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (key, value) = body
            .split_once(':')
            .ok_or_else(|| CorpusError::Attribute(s.to_string()))?;
        let mut attr = Attribute::new(key, value).map_err(|_| CorpusError::Attribute(s.to_string()))?;
        attr.negated = negated;
        Ok(attr)
    }
}

impl Serialize for Attribute {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Attribute {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A multiset of non-negated attributes, stored sorted so that equality is
/// multiset equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Message {
    attrs: Vec<Attribute>,
}

impl Message {
    pub fn new(mut attrs: Vec<Attribute>) -> Result<Self> {
        if let Some(neg) = attrs.iter().find(|a| a.negated) {
            return Err(CorpusError::Attribute(format!(
                "{neg}: messages cannot contain negated attributes"
            )));
        }
        attrs.sort();
        Ok(Message { attrs })
    }

    pub fn empty() -> Self {
        Message::default()
    }

    pub fn parse(items: &[&str]) -> Result<Self> {
        Message::new(items.iter().map(|s| s.parse()).collect::<Result<_>>()?)
    }

    /// Attributes in sorted order, duplicates included.
    pub fn attrs(&self) -> &[Attribute] {
        &self.attrs
    }

    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<&Attribute, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.attrs {
            *counts.entry(a).or_insert(0) += 1;
        }
        counts
    }

    pub fn count(&self, attr: &Attribute) -> usize {
        self.attrs.iter().filter(|a| *a == attr).count()
    }

    /// Distinct attributes, ignoring multiplicity.
    pub fn distinct(&self) -> impl Iterator<Item = &Attribute> {
        let mut prev: Option<&Attribute> = None;
        self.attrs.iter().filter(move |a| {
            let fresh = prev != Some(*a);
            prev = Some(*a);
            fresh
        })
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.attrs.iter().any(|a| a.key == key)
    }

    /// Multiset union.
    pub fn union(&self, other: &Message) -> Message {
        let mut attrs = self.attrs.clone();
        attrs.extend(other.attrs.iter().cloned());
        attrs.sort();
        Message { attrs }
    }

    pub fn is_sub_multiset_of(&self, other: &Message) -> bool {
        let theirs = other.counts();
        self.counts()
            .into_iter()
            .all(|(a, n)| theirs.get(a).copied().unwrap_or(0) >= n)
    }

    fn order_key(&self) -> (Vec<String>, usize) {
        (self.attrs.iter().map(ToString::to_string).collect(), self.attrs.len())
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.attrs.is_empty() {
            return f.write_str("∅");
        }
        for (i, a) in self.attrs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entity {
    id: String,
    positives: BTreeSet<Attribute>,
    full_attrs: BTreeSet<Attribute>,
}

impl Entity {
    /// An entity with no negation closure applied yet.
    pub fn new(id: impl Into<String>, positives: impl IntoIterator<Item = Attribute>) -> Result<Self> {
        let id = id.into();
        let positives: BTreeSet<Attribute> = positives.into_iter().collect();
        if let Some(neg) = positives.iter().find(|a| a.negated) {
            return Err(CorpusError::Validation {
                trial: String::new(),
                message: format!("entity `{id}` lists negated attribute {neg}"),
            });
        }
        Ok(Entity {
            id,
            full_attrs: positives.clone(),
            positives,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn positives(&self) -> &BTreeSet<Attribute> {
        &self.positives
    }

    /// Positive attributes plus negation markers from the closure.
    pub fn full_attrs(&self) -> &BTreeSet<Attribute> {
        &self.full_attrs
    }

    pub fn has(&self, attr: &Attribute) -> bool {
        self.full_attrs.contains(attr)
    }

    fn close_over(&mut self, vocabulary: &BTreeSet<Attribute>) {
        self.full_attrs = self.positives.clone();
        for a in vocabulary {
            if !self.positives.contains(a) {
                self.full_attrs.insert(a.negate());
            }
        }
    }
}

/// One reference game with its observed human description.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    id: String,
    domain: String,
    entities: Vec<Entity>,
    target: usize,
    human_message: Message,
    alternatives: Message,
    messages: Vec<Message>,
    prior: Vec<f64>,
    annotation: Option<String>,
}

impl Trial {
    /// Builds a trial whose message space is every sub-multiset of the human
    /// description, with a uniform prior.
    pub fn new(
        id: impl Into<String>,
        domain: impl Into<String>,
        entities: Vec<Entity>,
        target: usize,
        human_message: Message,
    ) -> Result<Self> {
        let alternatives = human_message.clone();
        Trial::assemble(
            id.into(),
            domain.into(),
            entities,
            target,
            human_message,
            alternatives,
            None,
            None,
            DEFAULT_MESSAGE_CAP,
        )
    }

    /// Replaces the message space with every sub-multiset of `alternatives`,
    /// which must contain the human message.
    pub fn with_alternatives(self, alternatives: Message) -> Result<Self> {
        self.with_alternatives_capped(alternatives, DEFAULT_MESSAGE_CAP)
    }

    pub fn with_alternatives_capped(mut self, alternatives: Message, cap: usize) -> Result<Self> {
        if !self.human_message.is_sub_multiset_of(&alternatives) {
            return Err(self.invalid("human message is not contained in the alternatives"));
        }
        self.messages = build_message_space_from(&alternatives, cap)?;
        self.alternatives = alternatives;
        Ok(self)
    }

    /// Replaces the message space with an explicit list of messages.
    pub fn with_messages(mut self, messages: Vec<Message>) -> Result<Self> {
        let distinct: BTreeSet<_> = messages.iter().map(Message::order_key).collect();
        if distinct.len() != messages.len() {
            return Err(self.invalid("message space contains duplicates"));
        }
        if !messages.contains(&self.human_message) {
            return Err(self.invalid("human message is not in the message space"));
        }
        self.messages = messages;
        Ok(self)
    }

    pub fn with_prior(mut self, prior: Vec<f64>) -> Result<Self> {
        validate_prior(&prior, self.entities.len()).map_err(|m| self.invalid(&m))?;
        self.prior = prior;
        Ok(self)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        id: String,
        domain: String,
        entities: Vec<Entity>,
        target: usize,
        human_message: Message,
        alternatives: Message,
        messages: Option<Vec<Message>>,
        prior: Option<Vec<f64>>,
        cap: usize,
    ) -> Result<Self> {
        let invalid = |message: &str| CorpusError::Validation {
            trial: id.clone(),
            message: message.to_string(),
        };
        if entities.is_empty() {
            return Err(invalid("no entities"));
        }
        if target >= entities.len() {
            return Err(invalid("target index out of range"));
        }
        let ids: BTreeSet<_> = entities.iter().map(|e| e.id.as_str()).collect();
        if ids.len() != entities.len() {
            return Err(invalid("duplicate entity ids"));
        }
        let n = entities.len();
        let mut trial = Trial {
            id: id.clone(),
            domain,
            entities,
            target,
            messages: Vec::new(),
            alternatives: alternatives.clone(),
            human_message,
            prior: vec![1.0 / n as f64; n],
            annotation: None,
        };
        trial = match messages {
            Some(list) => trial.with_messages(list)?,
            None => trial.with_alternatives_capped(alternatives, cap)?,
        };
        if let Some(p) = prior {
            trial = trial.with_prior(p)?;
        }
        Ok(trial)
    }

    fn invalid(&self, message: &str) -> CorpusError {
        CorpusError::Validation {
            trial: self.id.clone(),
            message: message.to_string(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self) -> &Entity {
        &self.entities[self.target]
    }

    pub fn human_message(&self) -> &Message {
        &self.human_message
    }

    /// Index of the human message within [`Trial::messages`].
    pub fn human_message_index(&self) -> usize {
        self.messages
            .iter()
            .position(|m| *m == self.human_message)
            .expect("validated trial contains its human message")
    }

    /// The message space.
    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn annotation(&self) -> Option<&str> {
        self.annotation.as_deref()
    }

    pub fn to_record(&self) -> TrialRecord {
        let explicit = build_message_space_from(&self.alternatives, usize::MAX)
            .map(|space| space != self.messages)
            .unwrap_or(true);
        let uniform = self.prior.iter().all(|p| (p - self.prior[0]).abs() == 0.0);
        TrialRecord {
            id: self.id.clone(),
            domain: self.domain.clone(),
            entities: self
                .entities
                .iter()
                .enumerate()
                .map(|(i, e)| EntityRecord {
                    id: e.id.clone(),
                    attributes: e.positives.iter().cloned().collect(),
                    target: i == self.target,
                })
                .collect(),
            description: self.human_message.attrs.clone(),
            alternatives: (self.alternatives != self.human_message && !explicit)
                .then(|| self.alternatives.attrs.clone()),
            messages: explicit.then(|| self.messages.iter().map(|m| m.attrs.clone()).collect()),
            prior: (!uniform).then(|| self.prior.clone()),
            annotation: self.annotation.clone(),
        }
    }
}

fn validate_prior(prior: &[f64], n: usize) -> std::result::Result<(), String> {
    if prior.len() != n {
        return Err(format!("prior has {} entries for {n} entities", prior.len()));
    }
    if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("prior entries must be finite and non-negative".into());
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOLERANCE {
        return Err(format!("prior sums to {total}, not 1"));
    }
    Ok(())
}

/// One line of the native corpus format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub id: String,
    pub domain: String,
    pub entities: Vec<EntityRecord>,
    pub description: Vec<Attribute>,
    /// Attribute multiset whose sub-multisets form the message space; defaults
    /// to the description.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternatives: Option<Vec<Attribute>>,
    /// Explicit message space, overriding `alternatives`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<Vec<Attribute>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityRecord {
    pub id: String,
    pub attributes: Vec<Attribute>,
    #[serde(default)]
    pub target: bool,
}

impl TrialRecord {
    /// Validates the record and builds its message space. The negation closure
    /// is not applied; it needs the whole corpus.
    pub fn into_trial(self, cap: usize) -> Result<Trial> {
        let invalid = |message: String| CorpusError::Validation {
            trial: self.id.clone(),
            message,
        };
        if self.entities.is_empty() {
            return Err(invalid("no entities".into()));
        }
        let targets: Vec<usize> = self
            .entities
            .iter()
            .enumerate()
            .filter(|(_, e)| e.target)
            .map(|(i, _)| i)
            .collect();
        let target = match targets.as_slice() {
            [t] => *t,
            [] => return Err(invalid("no target entity".into())),
            _ => return Err(invalid(format!("{} target entities, expected one", targets.len()))),
        };
        if self.description.is_empty() {
            return Err(invalid("empty description".into()));
        }
        let entities = self
            .entities
            .iter()
            .map(|e| Entity::new(e.id.clone(), e.attributes.iter().cloned()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                CorpusError::Validation { message, .. } => invalid(message),
                other => other,
            })?;
        let human = Message::new(self.description.clone()).map_err(|e| invalid(e.to_string()))?;
        let alternatives = match &self.alternatives {
            Some(a) => Message::new(a.clone()).map_err(|e| invalid(e.to_string()))?,
            None => human.clone(),
        };
        let messages = match &self.messages {
            Some(list) => Some(
                list.iter()
                    .map(|m| Message::new(m.clone()))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| invalid(e.to_string()))?,
            ),
            None => None,
        };
        let mut trial = Trial::assemble(
            self.id.clone(),
            self.domain.clone(),
            entities,
            target,
            human,
            alternatives,
            messages,
            self.prior.clone(),
            cap,
        )?;
        trial.annotation = self.annotation.clone();
        Ok(trial)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Native,
    TunaXml,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "native" => Ok(Format::Native),
            "tuna-xml" => Ok(Format::TunaXml),
            other => Err(format!("unknown corpus format `{other}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Keys eligible for negation closure; `None` selects keys with at most
    /// [`DEFAULT_NEGATABLE_MAX_VALUES`] observed values.
    pub negatable_keys: Option<BTreeSet<String>>,
    pub message_cap: usize,
    pub tuna: tuna::TunaMapping,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            negatable_keys: None,
            message_cap: DEFAULT_MESSAGE_CAP,
            tuna: tuna::TunaMapping::default(),
        }
    }
}

pub fn load_trials(path: &Path, format: Format) -> Result<Vec<Trial>> {
    load_trials_with(path, format, &LoadOptions::default())
}

/// Loads, validates and closes a corpus. Skipped TUNA files are dropped
/// silently here; use [`tuna::import_tuna`] directly to inspect them.
pub fn load_trials_with(path: &Path, format: Format, options: &LoadOptions) -> Result<Vec<Trial>> {
    let trials = match format {
        Format::Native => {
            let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            parse_native(&text, options.message_cap)?
        }
        Format::TunaXml => {
            let mapping = tuna::TunaMapping {
                message_cap: options.message_cap,
                ..options.tuna.clone()
            };
            tuna::import_tuna(path, &mapping)?.trials
        }
    };
    Ok(close_with_options(trials, options))
}

fn close_with_options(trials: Vec<Trial>, options: &LoadOptions) -> Vec<Trial> {
    let keys = options
        .negatable_keys
        .clone()
        .unwrap_or_else(|| default_negatable_keys(&trials));
    negation_closure(trials, &keys)
}

/// Parses native records without applying the negation closure.
pub fn parse_native(text: &str, cap: usize) -> Result<Vec<Trial>> {
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record: TrialRecord = serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        trials.push(record.into_trial(cap)?);
    }
    Ok(trials)
}

/// Serializes trials in the native format, one record per line.
pub fn write_native(trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        out.push_str(&serde_json::to_string(&t.to_record()).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// Keys whose positive values across all entities number at most
/// [`DEFAULT_NEGATABLE_MAX_VALUES`].
pub fn default_negatable_keys(trials: &[Trial]) -> BTreeSet<String> {
    let mut values: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in trials.iter().flat_map(|t| &t.entities) {
        for a in &e.positives {
            values.entry(&a.key).or_default().insert(&a.value);
        }
    }
    values
        .into_iter()
        .filter(|(_, v)| v.len() <= DEFAULT_NEGATABLE_MAX_VALUES)
        .map(|(k, _)| k.to_string())
        .collect()
}

/// Adds `¬a` to every entity lacking a vocabulary attribute `a`, where the
/// vocabulary is the corpus-wide set of positive attributes whose key is
/// negatable. Recomputed from positives, so applying it twice is a no-op.
pub fn negation_closure(mut trials: Vec<Trial>, negatable_keys: &BTreeSet<String>) -> Vec<Trial> {
    let vocabulary: BTreeSet<Attribute> = trials
        .iter()
        .flat_map(|t| &t.entities)
        .flat_map(|e| &e.positives)
        .filter(|a| negatable_keys.contains(&a.key))
        .cloned()
        .collect();
    for e in trials.iter_mut().flat_map(|t| t.entities.iter_mut()) {
        e.close_over(&vocabulary);
    }
    trials
}

/// Every sub-multiset of the trial's alternatives (its description unless
/// overridden), in canonical order.
pub fn build_message_space(trial: &Trial, cap: usize) -> Result<Vec<Message>> {
    build_message_space_from(&trial.alternatives, cap)
}

/// All sub-multisets of `source` including the empty one, ordered by their
/// sorted attribute strings. There are ∏(count_i + 1) of them.
pub fn build_message_space_from(source: &Message, cap: usize) -> Result<Vec<Message>> {
    if source.len() > cap {
        return Err(CorpusError::MessageSpaceTooLarge {
            slots: source.len(),
            cap,
        });
    }
    let counts: Vec<(&Attribute, usize)> = source.counts().into_iter().collect();
    let mut out = vec![Vec::new()];
    for (attr, n) in counts {
        let mut next = Vec::with_capacity(out.len() * (n + 1));
        for partial in &out {
            for k in 0..=n {
                let mut m: Vec<Attribute> = Vec::clone(partial);
                m.extend(std::iter::repeat_n(attr.clone(), k));
                next.push(m);
            }
        }
        out = next;
    }
    let mut messages: Vec<Message> = out
        .into_iter()
        .map(|mut attrs| {
            attrs.sort();
            Message { attrs }
        })
        .collect();
    messages.sort_by_cached_key(Message::order_key);
    Ok(messages)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attr(s: &str) -> Attribute {
        s.parse().unwrap()
    }

    fn msg(items: &[&str]) -> Message {
        Message::parse(items).unwrap()
    }

    const FAN: &str = r#"{"id":"t1","domain":"furniture","entities":[{"id":"e1","attributes":["colour:blue","size:small","type:fan"],"target":true},{"id":"e2","attributes":["colour:blue","size:large","type:fan"]}],"description":["colour:blue","size:small","type:fan"],"annotation":"blue fan small"}"#;

    #[test]
    fn attribute_parsing() {
        let a = attr("colour:blue");
        assert_eq!((a.key(), a.value(), a.is_negated()), ("colour", "blue", false));
        assert!(attr("!hasBeard:1").is_negated());
        assert!(attr("¬hasBeard:1").is_negated());
        assert_eq!(attr("x-dimension:1").key(), "x-dimension");
        assert!("colour".parse::<Attribute>().is_err());
        assert!(":blue".parse::<Attribute>().is_err());
        assert!("colour:".parse::<Attribute>().is_err());
        assert_ne!(attr("a:b"), attr("!a:b"));
    }

    #[test]
    fn messages_reject_negation() {
        assert!(Message::parse(&["!colour:blue"]).is_err());
    }

    #[test]
    fn native_record_loads_description() {
        let trials = parse_native(FAN, DEFAULT_MESSAGE_CAP).unwrap();
        assert_eq!(trials.len(), 1);
        let t = &trials[0];
        assert_eq!(t.human_message().len(), 3);
        assert_eq!(*t.human_message(), msg(&["colour:blue", "size:small", "type:fan"]));
        assert_eq!(t.messages().len(), 8);
        assert_eq!(t.annotation(), Some("blue fan small"));
        assert_eq!(t.target().id(), "e1");
        assert!((t.prior().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let no_entities = r#"{"id":"x","domain":"d","entities":[],"description":["a:b"]}"#;
        assert!(matches!(
            parse_native(no_entities, 12),
            Err(CorpusError::Validation { .. })
        ));
        let no_target = r#"{"id":"x","domain":"d","entities":[{"id":"e","attributes":["a:b"]}],"description":["a:b"]}"#;
        assert!(matches!(parse_native(no_target, 12), Err(CorpusError::Validation { .. })));
        let empty_desc =
            r#"{"id":"x","domain":"d","entities":[{"id":"e","attributes":["a:b"],"target":true}],"description":[]}"#;
        assert!(matches!(parse_native(empty_desc, 12), Err(CorpusError::Validation { .. })));
        let bad_prior = r#"{"id":"x","domain":"d","entities":[{"id":"e","attributes":["a:b"],"target":true}],"description":["a:b"],"prior":[0.5]}"#;
        assert!(matches!(parse_native(bad_prior, 12), Err(CorpusError::Validation { .. })));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = format!("{FAN}\n\n{{\"id\": broken\n");
        match parse_native(&text, 12) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn message_space_sizes() {
        assert_eq!(build_message_space_from(&msg(&["c:blue", "s:small", "t:fan"]), 12).unwrap().len(), 8);
        let dup = build_message_space_from(&msg(&["c:blue", "c:blue"]), 12).unwrap();
        assert_eq!(dup, vec![msg(&[]), msg(&["c:blue"]), msg(&["c:blue", "c:blue"])]);
        assert_eq!(build_message_space_from(&Message::empty(), 12).unwrap(), vec![Message::empty()]);
    }

    #[test]
    fn message_space_cap() {
        let big: Vec<String> = (0..13).map(|i| format!("k{i}:v")).collect();
        let refs: Vec<&str> = big.iter().map(String::as_str).collect();
        assert!(matches!(
            build_message_space_from(&Message::parse(&refs).unwrap(), 12),
            Err(CorpusError::MessageSpaceTooLarge { slots: 13, cap: 12 })
        ));
    }

    fn toy_trials() -> Vec<Trial> {
        let ent = |id: &str, attrs: &[&str]| Entity::new(id, attrs.iter().map(|a| attr(a))).unwrap();
        let r2 = ent("r2", &["type:person", "hasGlasses:1"]);
        let r3 = ent("r3", &["type:person"]);
        let r4 = ent("r4", &["type:person", "hasBeard:1"]);
        vec![
            Trial::new("ex1", "toy", vec![r2, r3.clone()], 0, msg(&["type:person", "hasGlasses:1"])).unwrap(),
            Trial::new("ex2", "toy", vec![r3, r4], 1, msg(&["type:person", "hasBeard:1"])).unwrap(),
        ]
    }

    #[test]
    fn negation_closure_is_corpus_level() {
        let trials = toy_trials();
        let keys = default_negatable_keys(&trials);
        let closed = negation_closure(trials, &keys);
        // Example 1 contains no bearded entity, yet its target still gets !hasBeard.
        let r2 = &closed[0].entities()[0];
        let expected: BTreeSet<_> = ["type:person", "hasGlasses:1", "!hasBeard:1"].iter().map(|s| attr(s)).collect();
        assert_eq!(*r2.full_attrs(), expected);
        let rows: BTreeSet<_> = closed.iter().flat_map(|t| t.entities()).flat_map(|e| e.full_attrs()).cloned().collect();
        assert_eq!(rows.len(), 5);
        assert!(!rows.contains(&attr("!type:person")));
    }

    #[test]
    fn negation_closure_edge_cases() {
        let trials = toy_trials();
        let keys = default_negatable_keys(&trials);
        let closed = negation_closure(trials.clone(), &BTreeSet::new());
        for e in closed.iter().flat_map(|t| t.entities()) {
            assert_eq!(e.full_attrs(), e.positives());
        }
        let once = negation_closure(trials, &keys);
        let twice = negation_closure(once.clone(), &keys);
        assert_eq!(once, twice);
    }

    #[test]
    fn entity_with_every_attribute_has_empty_closure() {
        let full = Entity::new("r1", ["type:person", "hasGlasses:1", "hasBeard:1"].iter().map(|a| attr(a))).unwrap();
        let mut trials = toy_trials();
        trials.push(Trial::new("test", "toy", vec![full], 0, msg(&["type:person"])).unwrap());
        let keys = default_negatable_keys(&trials);
        let closed = negation_closure(trials, &keys);
        let e = &closed[2].entities()[0];
        assert_eq!(e.full_attrs(), e.positives());
    }

    #[test]
    fn record_roundtrip() {
        let trials = parse_native(FAN, 12).unwrap();
        let again = parse_native(&write_native(&trials), 12).unwrap();
        assert_eq!(trials, again);
    }
}
