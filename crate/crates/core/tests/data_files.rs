use std::path::PathBuf;

use learned_rsa::corpus::{load_trials, Format};
use learned_rsa::rsa::{run_trial_chain, ChainConfig};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn shipped_files_load() {
    let three = load_trials(&data("glasses_tie.jsonl"), Format::Native).unwrap();
    assert_eq!(three[0].messages().len(), 3);
    let train = load_trials(&data("toy_train.jsonl"), Format::Native).unwrap();
    assert_eq!(train.len(), 2);
    assert!(train.iter().all(|t| t.messages().len() == 8));
    let test = load_trials(&data("toy_test.jsonl"), Format::Native).unwrap();
    assert_eq!(test[0].target().id(), "r1");
    let out = run_trial_chain(&three[0], &ChainConfig::default()).unwrap();
    assert!((out.final_speaker().prob(1, 1) - 0.6).abs() < 1e-12);
}
