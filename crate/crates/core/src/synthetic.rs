//! Generated reference games with a known speaker.
//!
//! Entities draw one value for each of `type`, `colour`, `size` and
//! `orientation`. Descriptions use a private vocabulary: every entity value
//! except the type maps one-to-one to a word (`colour:red` is said as
//! `colour:w-red`), so only a model that learns the mapping can tell what a
//! description is true of. The simulated speaker always names the type, then
//! adds attributes that rule out the most remaining distractors until the
//! target is unique, and occasionally adds one redundant attribute.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Attribute, CorpusError, Entity, Message, Trial};

pub const DOMAIN: &str = "synthetic";

const TYPES: [&str; 4] = ["chair", "desk", "fan", "sofa"];
const COLOURS: [&str; 4] = ["red", "green", "blue", "grey"];
const SIZES: [&str; 2] = ["large", "small"];
const ORIENTATIONS: [&str; 4] = ["front", "back", "left", "right"];

/// The always-mentioned key.
pub const MANDATORY_KEY: &str = "type";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub trials: usize,
    pub min_distractors: usize,
    pub max_distractors: usize,
    /// Each distractor copies the target and redraws between one and this
    /// many of its keys; 0 draws distractors independently.
    pub max_changed_keys: usize,
    /// Chance of one redundant attribute on top of a distinguishing
    /// description.
    pub overspecify: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            trials: 200,
            min_distractors: 2,
            max_distractors: 4,
            max_changed_keys: 1,
            overspecify: 0.1,
            seed: 0,
        }
    }
}

fn keys() -> [(&'static str, &'static [&'static str]); 4] {
    [
        ("type", &TYPES),
        ("colour", &COLOURS),
        ("size", &SIZES),
        ("orientation", &ORIENTATIONS),
    ]
}

/// The planted word for an entity attribute.
pub fn word_for(attr: &Attribute) -> Attribute {
    if attr.key() == MANDATORY_KEY {
        return attr.positive();
    }
    Attribute::new(attr.key(), format!("w-{}", attr.value())).expect("generated tokens are valid")
}

fn random_entity(rng: &mut impl Rng, id: usize) -> Entity {
    let attrs = keys()
        .into_iter()
        .map(|(k, values)| Attribute::new(k, *values.choose(rng).expect("non-empty")).expect("valid"));
    Entity::new(format!("e{id}"), attrs).expect("valid entity")
}

/// A copy of `target` with `changes` distinct keys set to different values.
fn near_miss(rng: &mut impl Rng, target: &Entity, changes: usize, id: usize) -> Entity {
    let all = keys();
    let picked: Vec<usize> = rand::seq::index::sample(rng, all.len(), changes).into_vec();
    let attrs = all.iter().enumerate().map(|(i, (k, values))| {
        let current = target.positives().iter().find(|a| a.key() == *k).expect("every key present");
        let value = if picked.contains(&i) {
            *values
                .iter()
                .filter(|v| **v != current.value())
                .collect::<Vec<_>>()
                .choose(rng)
                .expect("at least two values")
        } else {
            current.value()
        };
        Attribute::new(*k, value).expect("valid")
    });
    Entity::new(format!("e{id}"), attrs.collect::<Vec<_>>()).expect("valid entity")
}

/// The simulated human description of `target` among `distractors`.
fn describe(target: &Entity, distractors: &[&Entity], rng: &mut impl Rng, overspecify: f64) -> Vec<Attribute> {
    let attrs: Vec<Attribute> = target.positives().iter().cloned().collect();
    let ty = attrs.iter().find(|a| a.key() == MANDATORY_KEY).expect("type").clone();
    let mut chosen = vec![ty.clone()];
    let mut remaining: Vec<&Entity> = distractors.iter().copied().filter(|d| d.has(&ty)).collect();
    let order = ["colour", "size", "orientation"];
    while !remaining.is_empty() {
        let mut best: Option<(usize, &Attribute)> = None;
        for a in order.iter().filter_map(|k| attrs.iter().find(|a| a.key() == *k)) {
            let ruled_out = remaining.iter().filter(|d| !d.has(a)).count();
            if !chosen.contains(a) && ruled_out > best.map_or(0, |(n, _)| n) {
                best = Some((ruled_out, a));
            }
        }
        let Some((_, a)) = best else { break };
        remaining.retain(|d| d.has(a));
        chosen.push(a.clone());
    }
    if rng.random_bool(overspecify) {
        let unused: Vec<&Attribute> = attrs.iter().filter(|a| !chosen.contains(a)).collect();
        if let Some(extra) = unused.choose(rng) {
            chosen.push((*extra).clone());
        }
    }
    chosen
}

/// Generates the corpus, negation closure applied.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<Trial>, CorpusError> {
    if cfg.min_distractors == 0 || cfg.min_distractors > cfg.max_distractors {
        return Err(CorpusError::Attribute("distractor range must be 1 <= min <= max".into()));
    }
    if !(0.0..=1.0).contains(&cfg.overspecify) {
        return Err(CorpusError::Attribute("overspecify must be a probability".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::with_capacity(cfg.trials);
    for i in 0..cfg.trials {
        let n = 1 + rng.random_range(cfg.min_distractors..=cfg.max_distractors);
        let mut entities: Vec<Entity> = vec![random_entity(&mut rng, 1)];
        while entities.len() < n {
            let e = if cfg.max_changed_keys == 0 {
                random_entity(&mut rng, entities.len() + 1)
            } else {
                let changes = rng.random_range(1..=cfg.max_changed_keys.min(keys().len()));
                near_miss(&mut rng, &entities[0], changes, entities.len() + 1)
            };
            if entities.iter().all(|o| o.positives() != e.positives()) {
                entities.push(e);
            }
        }
        entities.shuffle(&mut rng);
        let target = entities.iter().position(|e| e.id() == "e1").expect("target generated first");
        let distractors: Vec<&Entity> = entities.iter().enumerate().filter(|(j, _)| *j != target).map(|(_, e)| e).collect();
        let said = describe(&entities[target], &distractors, &mut rng, cfg.overspecify);
        let human = Message::new(said.iter().map(word_for).collect())?;
        let alternatives = Message::new(entities[target].positives().iter().map(word_for).collect())?;
        let trial = Trial::new(format!("syn{i:04}"), DOMAIN, entities, target, human)?.with_alternatives(alternatives)?;
        trials.push(trial);
    }
    let negatable = corpus::default_negatable_keys(&trials);
    Ok(corpus::negation_closure(trials, &negatable))
}
