use learned_rsa::corpus::{Attribute, Entity, Message};
use learned_rsa::rsa::{self, ChainConfig, Cost, Direction, Lexicon};
use proptest::prelude::*;

const ATTRS: usize = 6;

fn attr(j: usize) -> Attribute {
    Attribute::new("f", format!("a{j}")).unwrap()
}

/// Entities as attribute subsets, messages as distinct attribute subsets.
/// Every entity verifies at least the empty message.
fn arb_lexicon() -> impl Strategy<Value = Lexicon> {
    (
        prop::collection::vec(prop::collection::btree_set(0..ATTRS, 0..4), 1..5),
        prop::collection::btree_set(prop::collection::btree_set(0..ATTRS, 0..3), 1..7),
    )
        .prop_map(|(entities, messages)| {
            let entities = entities
                .into_iter()
                .enumerate()
                .map(|(i, s)| Entity::new(format!("e{i}"), s.into_iter().map(attr)).unwrap())
                .collect();
            let mut messages: Vec<Message> = messages
                .into_iter()
                .map(|s| Message::new(s.into_iter().map(attr).collect()).unwrap())
                .collect();
            if !messages.contains(&Message::empty()) {
                messages.push(Message::empty());
            }
            Lexicon::new(messages, entities)
        })
}

fn arb_direction() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::SpeakerFirst), Just(Direction::ListenerFirst)]
}

fn arb_cost() -> impl Strategy<Value = Cost> {
    prop::sample::select(Cost::ALL.to_vec())
}

fn permuted(lex: &Lexicon, ent: &[usize], msg: &[usize]) -> Lexicon {
    Lexicon::new(
        msg.iter().map(|&m| lex.messages()[m].clone()).collect(),
        ent.iter().map(|&t| lex.entities()[t].clone()).collect(),
    )
}

proptest! {
    #[test]
    fn distributions_normalize_and_respect_truth(
        lex in arb_lexicon(),
        dir in arb_direction(),
        cost in arb_cost(),
        lambda in 0.0f64..8.0,
        depth in 1usize..3,
    ) {
        let cfg = ChainConfig { depth, ..ChainConfig::new(dir, lambda, cost) };
        let out = rsa::run_chain(&lex, &cfg).unwrap();
        for layer in &out.layers {
            for row in layer.rows.iter().flatten() {
                let total: f64 = row.probs().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
            if layer.kind == rsa::LayerKind::Speaker {
                for t in 0..lex.n_entities() {
                    for m in 0..lex.n_messages() {
                        if !lex.is_true(m, t) {
                            prop_assert_eq!(layer.prob(m, t), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn final_temperature_keeps_argmax(lex in arb_lexicon(), cost in arb_cost(), l1 in 0.1f64..10.0, l2 in 0.1f64..10.0) {
        let cfg = ChainConfig::new(Direction::SpeakerFirst, 1.0, cost);
        let out = rsa::run_chain(&lex, &cfg).unwrap();
        let listener = out.layer("l1").unwrap();
        let costs: Vec<f64> = lex.messages().iter().map(|m| cost.of(m)).collect();
        for t in 0..lex.n_entities() {
            let row: Vec<f64> = (0..lex.n_messages()).map(|m| listener.prob(m, t)).collect();
            let a = rsa::pragmatic_speaker(&row, &costs, l1).unwrap();
            let b = rsa::pragmatic_speaker(&row, &costs, l2).unwrap();
            prop_assert_eq!(a.argmax_set(), b.argmax_set());
        }
    }

    #[test]
    fn permutation_equivariance(
        lex in arb_lexicon(),
        dir in arb_direction(),
        cost in arb_cost(),
        lambda in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut ent: Vec<usize> = (0..lex.n_entities()).collect();
        let mut msg: Vec<usize> = (0..lex.n_messages()).collect();
        ent.shuffle(&mut rng);
        msg.shuffle(&mut rng);
        let cfg = ChainConfig::new(dir, lambda, cost);
        let base = rsa::run_chain(&lex, &cfg).unwrap();
        let perm = rsa::run_chain(&permuted(&lex, &ent, &msg), &cfg).unwrap();
        for (a, b) in base.layers.iter().zip(&perm.layers) {
            for (ti, &t) in ent.iter().enumerate() {
                for (mi, &m) in msg.iter().enumerate() {
                    prop_assert!((a.prob(m, t) - b.prob(mi, ti)).abs() < 1e-12);
                }
            }
        }
    }

    /// Every entity verifies exactly `k` singleton messages.
    #[test]
    fn directions_agree_on_equal_row_sums(
        n_messages in 2usize..6,
        picks in prop::collection::vec(any::<u64>(), 1..5),
        k_seed in any::<u64>(),
        lambda in 0.1f64..6.0,
    ) {
        use rand::seq::index::sample;
        use rand::SeedableRng;
        let k = 1 + (k_seed as usize % n_messages);
        let entities: Vec<Entity> = picks
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*s);
                let chosen = sample(&mut rng, n_messages, k).into_vec();
                Entity::new(format!("e{i}"), chosen.into_iter().map(attr)).unwrap()
            })
            .collect();
        let messages: Vec<Message> = (0..n_messages).map(|j| Message::new(vec![attr(j)]).unwrap()).collect();
        let lex = Lexicon::new(messages, entities);
        let a = rsa::run_chain(&lex, &ChainConfig::new(Direction::SpeakerFirst, lambda, Cost::Zero)).unwrap();
        let b = rsa::run_chain(&lex, &ChainConfig::new(Direction::ListenerFirst, lambda, Cost::Zero)).unwrap();
        let (sa, sb) = (a.final_speaker(), b.final_speaker());
        for t in 0..lex.n_entities() {
            for m in 0..lex.n_messages() {
                prop_assert!((sa.prob(m, t) - sb.prob(m, t)).abs() < 1e-12);
            }
        }
    }
}
