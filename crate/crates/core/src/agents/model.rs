//! Plain-text model files.
//!
//! ```text
//! learned-rsa-model 1
//! features<TAB>{"set":"basic","cross_value":"count"}
//! config<TAB>{...resolved run configuration...}
//! vocabulary<TAB>15
//! 0<TAB>pair:!hasBeard:1|hasBeard:1
//! ...
//! theta<TAB>15
//! 0.25
//! ...
//! ```
//!
//! Weights are written in shortest round-trip decimal form, so a saved model
//! reloads bit-exactly.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::Params;
use crate::features::{FeatureConfig, FeatureError, FeatureVocabulary};

pub const MODEL_HEADER: &str = "learned-rsa-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported model version {0}")]
    Version(u32),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub vocab: FeatureVocabulary,
    pub params: Params,
    /// Resolved configuration of the run that produced the model.
    pub config: serde_json::Value,
}

impl Model {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MODEL_HEADER} {MODEL_VERSION}\n");
        out.push_str(&format!(
            "features\t{}\n",
            serde_json::to_string(&self.vocab.config()).expect("feature config serializes")
        ));
        out.push_str(&format!("config\t{}\n", self.config));
        out.push_str(&format!("vocabulary\t{}\n", self.vocab.len()));
        out.push_str(&self.vocab.dump());
        out.push_str(&format!("theta\t{}\n", self.params.len()));
        for w in &self.params.theta {
            out.push_str(&format!("{w:?}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, message: &str| ModelError::Format {
            line: line + 1,
            message: message.to_string(),
        };
        let header = lines.first().ok_or_else(|| err(0, "empty file"))?;
        let version = header
            .strip_prefix(MODEL_HEADER)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| err(0, "missing model header"))?;
        if version != MODEL_VERSION {
            return Err(ModelError::Version(version));
        }
        let field = |i: usize, name: &str| -> Result<&str, ModelError> {
            lines
                .get(i)
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix('\t'))
                .ok_or_else(|| err(i, &format!("expected `{name}`")))
        };
        let features: FeatureConfig =
            serde_json::from_str(field(1, "features")?).map_err(|e| err(1, &e.to_string()))?;
        let config: serde_json::Value = serde_json::from_str(field(2, "config")?).map_err(|e| err(2, &e.to_string()))?;
        let n_vocab: usize = field(3, "vocabulary")?.parse().map_err(|_| err(3, "bad vocabulary size"))?;
        let vocab_end = 4 + n_vocab;
        if lines.len() < vocab_end + 1 {
            return Err(err(lines.len(), "truncated vocabulary"));
        }
        let vocab = FeatureVocabulary::parse_dump(features, &lines[4..vocab_end].join("\n"))?;
        let n_theta: usize = field(vocab_end, "theta")?
            .parse()
            .map_err(|_| err(vocab_end, "bad theta size"))?;
        if n_theta != n_vocab {
            return Err(err(vocab_end, "theta and vocabulary sizes differ"));
        }
        let mut theta = Vec::with_capacity(n_theta);
        for i in 0..n_theta {
            let line = vocab_end + 1 + i;
            let w: f64 = lines
                .get(line)
                .ok_or_else(|| err(line, "truncated theta"))?
                .trim()
                .parse()
                .map_err(|_| err(line, "bad weight"))?;
            if !w.is_finite() {
                return Err(err(line, "non-finite weight"));
            }
            theta.push(w);
        }
        Ok(Model {
            vocab,
            params: Params { theta },
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Model::parse(&fs::read_to_string(path)?)
    }
}
