//! Feature vocabulary and sparse feature extraction `φ(t, m, c)`.
//!
//! Two families are available:
//!
//! * **basic** cross-product features, one per (entity attribute, utterance
//!   attribute) pair. Entity attributes include negation markers. The value is
//!   either the number of times the utterance attribute occurs in the message
//!   (count mode) or 1 when it occurs at all (indicator mode).
//! * **gen** generation features over the message alone: presence of each
//!   attribute key, ordered key pairs `k1 ∧ k2` / `k1 ∧ ¬k2`, and one
//!   indicator per message size.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Attribute, Entity, Message, Trial};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("malformed feature descriptor `{0}`")]
    Descriptor(String),
    #[error("duplicate feature descriptor `{0}`")]
    Duplicate(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Basic,
    Gen,
    #[serde(rename = "basic+gen")]
    BasicGen,
}

impl FeatureSet {
    pub fn basic(self) -> bool {
        matches!(self, FeatureSet::Basic | FeatureSet::BasicGen)
    }

    pub fn gen(self) -> bool {
        matches!(self, FeatureSet::Gen | FeatureSet::BasicGen)
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "basic" => Ok(FeatureSet::Basic),
            "gen" => Ok(FeatureSet::Gen),
            "basic+gen" => Ok(FeatureSet::BasicGen),
            other => Err(format!("unknown feature set `{other}`")),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Basic => "basic",
            FeatureSet::Gen => "gen",
            FeatureSet::BasicGen => "basic+gen",
        })
    }
}

/// How cross-product features are valued.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossValue {
    Count,
    #[default]
    Indicator,
}

impl FromStr for CrossValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "count" => Ok(CrossValue::Count),
            "indicator" => Ok(CrossValue::Indicator),
            other => Err(format!("unknown cross-product value mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub set: FeatureSet,
    pub cross_value: CrossValue,
}

impl FeatureConfig {
    pub fn new(set: FeatureSet, cross_value: CrossValue) -> Self {
        FeatureConfig { set, cross_value }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Descriptor {
    Pair { entity: Attribute, utterance: Attribute },
    KeyPresent(String),
    /// `first` present, and `second` present or absent.
    KeyPair { first: String, second: String, second_present: bool },
    Size(usize),
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Descriptor::Pair { entity, utterance } => write!(f, "pair:{entity}|{utterance}"),
            Descriptor::KeyPresent(k) => write!(f, "key:{k}"),
            Descriptor::KeyPair {
                first,
                second,
                second_present,
            } => write!(f, "keys:{first},{}{second}", if *second_present { '+' } else { '-' }),
            Descriptor::Size(n) => write!(f, "size:{n}"),
        }
    }
}

impl FromStr for Descriptor {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let bad = || FeatureError::Descriptor(s.to_string());
        let (kind, body) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "pair" => {
                let (e, u) = body.split_once('|').ok_or_else(bad)?;
                Ok(Descriptor::Pair {
                    entity: e.parse().map_err(|_| bad())?,
                    utterance: u.parse().map_err(|_| bad())?,
                })
            }
            "key" if !body.is_empty() => Ok(Descriptor::KeyPresent(body.to_string())),
            "keys" => {
                let (first, rest) = body.split_once(',').ok_or_else(bad)?;
                let (second_present, second) = match rest.chars().next() {
                    Some('+') => (true, &rest[1..]),
                    Some('-') => (false, &rest[1..]),
                    _ => return Err(bad()),
                };
                if first.is_empty() || second.is_empty() {
                    return Err(bad());
                }
                Ok(Descriptor::KeyPair {
                    first: first.to_string(),
                    second: second.to_string(),
                    second_present,
                })
            }
            "size" => body.parse().map(Descriptor::Size).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Sparse, non-negative feature values sorted by dimension, without zeros.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> Self {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        FeatureVector { entries: merged }
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, dim: usize) -> f64 {
        self.entries
            .binary_search_by_key(&dim, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn dot(&self, theta: &[f64]) -> f64 {
        self.entries.iter().map(|(i, v)| theta[*i] * v).sum()
    }

    /// `out += scale · self`
    pub fn add_scaled_to(&self, out: &mut [f64], scale: f64) {
        for (i, v) in &self.entries {
            out[*i] += scale * v;
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.add_scaled_to(&mut out, 1.0);
        out
    }
}

#[derive(Clone, Debug)]
pub struct FeatureVocabulary {
    config: FeatureConfig,
    descriptors: Vec<Descriptor>,
    index: HashMap<Descriptor, usize>,
    /// Keys with a presence feature, in order.
    keys: Vec<String>,
}

impl PartialEq for FeatureVocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.descriptors == other.descriptors
    }
}

impl FeatureVocabulary {
    /// Enumerates the configured families over everything observed in the
    /// corpus: all entity attributes (negations included) crossed with all
    /// attributes appearing in any message space, plus generation features
    /// over the utterance keys and message sizes `0..=max`.
    pub fn build(trials: &[Trial], config: FeatureConfig) -> Result<Self, FeatureError> {
        if trials.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let entity_attrs: BTreeSet<&Attribute> = trials
            .iter()
            .flat_map(|t| t.entities())
            .flat_map(|e| e.full_attrs())
            .collect();
        let messages = || trials.iter().flat_map(|t| t.messages());
        let utterance_attrs: BTreeSet<&Attribute> = messages().flat_map(|m| m.attrs()).collect();

        let mut descriptors = Vec::new();
        if config.set.basic() {
            for e in &entity_attrs {
                for u in &utterance_attrs {
                    descriptors.push(Descriptor::Pair {
                        entity: (*e).clone(),
                        utterance: (*u).clone(),
                    });
                }
            }
        }
        if config.set.gen() {
            let keys: BTreeSet<&str> = utterance_attrs.iter().map(|a| a.key()).collect();
            for k in &keys {
                descriptors.push(Descriptor::KeyPresent(k.to_string()));
            }
            for first in &keys {
                for second in keys.iter().filter(|k| *k != first) {
                    for second_present in [true, false] {
                        descriptors.push(Descriptor::KeyPair {
                            first: first.to_string(),
                            second: second.to_string(),
                            second_present,
                        });
                    }
                }
            }
            let max_size = messages().map(Message::len).max().unwrap_or(0);
            descriptors.extend((0..=max_size).map(Descriptor::Size));
        }
        Self::from_descriptors(config, descriptors)
    }

    pub fn from_descriptors(config: FeatureConfig, descriptors: Vec<Descriptor>) -> Result<Self, FeatureError> {
        let mut index = HashMap::with_capacity(descriptors.len());
        for (i, d) in descriptors.iter().enumerate() {
            if index.insert(d.clone(), i).is_some() {
                return Err(FeatureError::Duplicate(d.to_string()));
            }
        }
        let keys = descriptors
            .iter()
            .filter_map(|d| match d {
                Descriptor::KeyPresent(k) => Some(k.clone()),
                _ => None,
            })
            .collect();
        Ok(FeatureVocabulary {
            config,
            descriptors,
            index,
            keys,
        })
    }

    pub fn config(&self) -> FeatureConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn index_of(&self, d: &Descriptor) -> Option<usize> {
        self.index.get(d).copied()
    }

    /// `φ(t, m, c)`. Depends only on the entity and message; the context
    /// enters through the vocabulary. Pairs and keys outside the vocabulary
    /// are dropped.
    pub fn extract(&self, entity: &Entity, message: &Message) -> FeatureVector {
        let mut entries = Vec::new();
        if self.config.set.basic() {
            let counts = message.counts();
            for e in entity.full_attrs() {
                for (u, n) in &counts {
                    let pair = Descriptor::Pair {
                        entity: e.clone(),
                        utterance: (*u).clone(),
                    };
                    if let Some(i) = self.index.get(&pair) {
                        let v = match self.config.cross_value {
                            CrossValue::Count => *n as f64,
                            CrossValue::Indicator => 1.0,
                        };
                        entries.push((*i, v));
                    }
                }
            }
        }
        if self.config.set.gen() {
            let present: Vec<bool> = self.keys.iter().map(|k| message.contains_key(k)).collect();
            for (a, first) in self.keys.iter().enumerate() {
                if !present[a] {
                    continue;
                }
                entries.push((self.index[&Descriptor::KeyPresent(first.clone())], 1.0));
                for (b, second) in self.keys.iter().enumerate().filter(|(b, _)| *b != a) {
                    let d = Descriptor::KeyPair {
                        first: first.clone(),
                        second: second.clone(),
                        second_present: present[b],
                    };
                    if let Some(i) = self.index.get(&d) {
                        entries.push((*i, 1.0));
                    }
                }
            }
            if let Some(i) = self.index.get(&Descriptor::Size(message.len())) {
                entries.push((*i, 1.0));
            }
        }
        FeatureVector::from_entries(entries)
    }

    /// One line per dimension: `index<TAB>descriptor`.
    pub fn dump(&self) -> String {
        self.descriptors
            .iter()
            .enumerate()
            .map(|(i, d)| format!("{i}\t{d}\n"))
            .collect()
    }

    /// Inverse of [`FeatureVocabulary::dump`]; indices must be dense and in order.
    pub fn parse_dump(config: FeatureConfig, text: &str) -> Result<Self, FeatureError> {
        let mut descriptors = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (idx, d) = line
                .split_once('\t')
                .ok_or_else(|| FeatureError::Descriptor(line.to_string()))?;
            if idx.parse::<usize>().ok() != Some(descriptors.len()) {
                return Err(FeatureError::Descriptor(line.to_string()));
            }
            descriptors.push(d.parse()?);
        }
        Self::from_descriptors(config, descriptors)
    }
}
