use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use learned_rsa::agents::model::Model;
use learned_rsa::agents::{Forward, TrialFeatures};
use learned_rsa::corpus::{self, tuna};
use learned_rsa::eval::{self, ChainChoice, EvalReport, ModelSpec, RsaGrid};
use learned_rsa::features::{FeatureConfig, FeatureVocabulary};
use learned_rsa::optimize::{self, InstanceBounds};
use learned_rsa::rsa::{self, ChainConfig, Lexicon};
use learned_rsa::synthetic::{self, SyntheticConfig};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{DemoArgs, EvaluateArgs, GradcheckArgs, ImportArgs, SynthArgs, TrainArgs};
use crate::error::CliError;

/// The fully resolved flags of a run, embedded in everything it writes.
pub fn resolved<T: Serialize>(command: &str, args: &T) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn demo(a: &DemoArgs) -> Result<(), CliError> {
    let config = resolved("demo", a);
    let trials = a.corpus.load(&a.context)?;
    let model = a.model.as_deref().map(Model::load).transpose()?;
    let chain = a.chain.chain();
    let mut out = format!("# config {config}\n");
    let mut records = Vec::new();
    for trial in &trials {
        let lex = Lexicon::from_trial(trial);
        let layers = match &model {
            Some(m) => Forward::run(&m.params.theta, &TrialFeatures::new(trial, &m.vocab))?.layers(),
            None => rsa::run_trial_chain(trial, &chain)
                .map_err(|e| CliError::Validation(format!("trial `{}`: {e}", trial.id())))?,
        };
        let _ = writeln!(out, "# trial {}", trial.id());
        out.push_str(&rsa::render_tables(&lex, &layers));
        records.push(json!({ "trial": trial.id(), "cells": rsa::table_records(&lex, &layers) }));
    }
    print!("{out}");
    if let Some(path) = &a.records {
        write_json(path, &json!({ "config": config, "trials": records }))?;
    }
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let config = resolved("train", a);
    let cfg = a.train.config(a.seed)?;
    let trials = a.corpus.load(&a.corpus_path)?;
    let vocab = FeatureVocabulary::build(&trials, a.features.config())?;
    let report = optimize::sgd_train(&trials, &vocab, &cfg)?;
    let model = Model {
        vocab,
        params: report.params.clone(),
        config: config.clone(),
    };
    write_text(&a.out, &model.to_text())?;
    if let Some(path) = &a.report {
        write_json(path, &json!({ "config": config, "report": report }))?;
    }
    println!("# config {config}");
    println!("epoch\tobjective\tmean_grad_norm");
    println!("0\t{:.6}\t-", report.initial_objective);
    for e in &report.epochs {
        println!("{}\t{:.6}\t{:.6}", e.epoch + 1, e.objective, e.mean_grad_norm);
    }
    println!(
        "wrote {} ({} trials, {} features, |theta| = {:.6})",
        a.out.display(),
        trials.len(),
        model.vocab.len(),
        model.params.norm()
    );
    Ok(())
}

fn model_specs(a: &EvaluateArgs) -> Result<Vec<ModelSpec>, CliError> {
    let train = a.train.config(a.seed)?;
    a.agent
        .iter()
        .map(|choice| {
            if choice.learned {
                let set = choice.features.unwrap_or(a.features.features);
                return Ok(ModelSpec::Learned {
                    agent: choice.agent,
                    features: FeatureConfig::new(set, a.features.cross_value),
                    train: train.clone(),
                });
            }
            let chain = match a.lambda {
                Some(lambda) => ChainChoice::Fixed(ChainConfig::new(a.direction, lambda, a.cost)),
                None => ChainChoice::Grid(RsaGrid {
                    direction: a.direction,
                    lambdas: a.lambdas.clone(),
                    costs: a.costs.clone(),
                }),
            };
            Ok(ModelSpec::Pure {
                agent: choice.agent,
                chain,
            })
        })
        .collect()
}

/// Signed-rank tests between every pair of models on per-trial Dice.
fn comparisons(reports: &[EvalReport]) -> Vec<Value> {
    let mut out = Vec::new();
    for (i, a) in reports.iter().enumerate() {
        for b in &reports[i + 1..] {
            let result = eval::wilcoxon_signed_rank(&a.dice_scores(), &b.dice_scores());
            out.push(match result {
                Ok(r) => json!({ "a": a.model, "b": b.model, "wilcoxon": r }),
                Err(e) => json!({ "a": a.model, "b": b.model, "error": e.to_string() }),
            });
        }
    }
    out
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    let config = resolved("evaluate", a);
    let specs = model_specs(a)?;
    let trials = a.corpus.load(&a.corpus_path)?;
    let reports = specs
        .iter()
        .map(|spec| eval::cross_validate(&trials, spec, a.folds, a.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let table = eval::render_table(&reports);
    let tests = comparisons(&reports);
    write_json(
        &a.out,
        &json!({ "config": config, "reports": reports, "comparisons": tests }),
    )?;
    if let Some(path) = &a.table {
        write_text(path, &table)?;
    }
    println!("# config {config}");
    print!("{table}");
    for t in &tests {
        match t.get("wilcoxon") {
            Some(w) => println!("{} vs {}: p = {:.4}", t["a"], t["b"], w["p_value"].as_f64().unwrap_or(f64::NAN)),
            None => println!("{} vs {}: {}", t["a"], t["b"], t["error"]),
        }
    }
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let config = resolved("gradcheck", a);
    let bounds = InstanceBounds {
        max_entities: a.max_entities,
        max_messages: a.max_messages,
        max_dim: a.max_dim,
    };
    let summary = optimize::gradient_check(a.seed, a.instances, &bounds, a.h, a.l2, a.tolerance, |g| {
        if let (Some(delta), Some(first)) = (a.corrupt_gradient, g.first_mut()) {
            *first += delta;
        }
    })?;
    let w = &summary.worst;
    println!("# config {config}");
    println!("instances\t{}", summary.instances);
    println!("max_rel_error_s0\t{:e}", w.s0);
    println!("max_rel_error_l1\t{:e}", w.l1);
    println!("max_rel_error_s1\t{:e}", w.s1);
    println!("max_rel_error_objective\t{:e}", w.objective);
    println!("failures\t{}", summary.failures);
    println!("result\t{}", if summary.passed() { "PASS" } else { "FAIL" });
    if let Some(path) = &a.out {
        write_json(path, &json!({ "config": config, "summary": summary }))?;
    }
    if summary.passed() {
        Ok(())
    } else {
        Err(CliError::GradCheck(format!(
            "{} of {} instances exceed relative error {:e}",
            summary.failures, a.instances, a.tolerance
        )))
    }
}

fn with_header(config: &Value, body: &str) -> String {
    format!("# config {config}\n{body}")
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let config = resolved("synth", a);
    let cfg = SyntheticConfig {
        trials: a.trials,
        min_distractors: a.min_distractors,
        max_distractors: a.max_distractors,
        max_changed_keys: a.max_changed_keys,
        overspecify: a.overspecify,
        seed: a.seed,
    };
    let trials = synthetic::generate(&cfg)?;
    write_text(&a.out, &with_header(&config, &corpus::write_native(&trials)))?;
    println!("wrote {} trials to {}", trials.len(), a.out.display());
    Ok(())
}

pub fn import_tuna(a: &ImportArgs) -> Result<(), CliError> {
    let config = resolved("import-tuna", a);
    let mapping = tuna::TunaMapping {
        message_cap: a.message_cap,
        ..crate::args::load_mapping(a.mapping.as_deref())?
    };
    let import = tuna::import_tuna(&a.path, &mapping)?;
    for (path, reason) in &import.skipped {
        eprintln!("skipped {}: {reason}", path.display());
    }
    for w in &import.warnings {
        eprintln!("warning: {w}");
    }
    if import.trials.is_empty() {
        return Err(CliError::Validation(format!("no trials imported from {}", a.path.display())));
    }
    write_text(&a.out, &with_header(&config, &corpus::write_native(&import.trials)))?;
    println!(
        "wrote {} trials to {} ({} files skipped)",
        import.trials.len(),
        a.out.display(),
        import.skipped.len()
    );
    Ok(())
}
