//! Best-effort importer for TUNA-style XML trial files.
//!
//! The default [`TunaMapping`] expects one trial per file:
//!
//! ```text
//! <TRIAL ID="s81t5" CONDITION="-LOC">
//!   <DOMAIN>
//!     <ENTITY ID="f1" TYPE="target">
//!       <ATTRIBUTE NAME="colour" VALUE="blue"/> ...
//!     </ENTITY>
//!     <ENTITY ID="f2" TYPE="distractor"> ... </ENTITY>
//!   </DOMAIN>
//!   <WORD-STRING>blue fan small</WORD-STRING>
//!   <ATTRIBUTE-SET>
//!     <ATTRIBUTE NAME="colour" VALUE="blue"/> ...
//!   </ATTRIBUTE-SET>
//! </TRIAL>
//! ```
//!
//! Every element and attribute name is configurable. Files that cannot be
//! mapped (plural targets, empty descriptions, unknown layout) are skipped and
//! reported in [`TunaImport::skipped`] rather than aborting the import.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Attribute, CorpusError, Entity, Message, Result, Trial, DEFAULT_MESSAGE_CAP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunaMapping {
    pub trial_element: String,
    pub trial_id_attr: String,
    pub entity_element: String,
    pub entity_id_attr: String,
    pub role_attr: String,
    pub target_role: String,
    pub attribute_element: String,
    pub name_attr: String,
    pub value_attr: String,
    /// Element whose `attribute_element` children form the description multiset.
    pub description_element: String,
    /// Element holding the raw utterance, kept as the trial annotation.
    pub utterance_element: String,
    pub domain: DomainSource,
    /// Entity attributes whose key starts with this prefix and whose value is
    /// listed in `absence_values` are treated as absent (e.g. `hasBeard="0"`),
    /// leaving the negation closure to mark them.
    pub absence_key_prefix: String,
    pub absence_values: Vec<String>,
    /// Entity attribute keys to ignore entirely.
    pub ignore_keys: Vec<String>,
    pub message_cap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainSource {
    /// Name of the directory containing the file.
    ParentDir,
    /// `people` if any entity has `type:person`, otherwise `furniture`.
    InferFromTypes,
    Fixed(String),
}

impl Default for TunaMapping {
    fn default() -> Self {
        TunaMapping {
            trial_element: "TRIAL".into(),
            trial_id_attr: "ID".into(),
            entity_element: "ENTITY".into(),
            entity_id_attr: "ID".into(),
            role_attr: "TYPE".into(),
            target_role: "target".into(),
            attribute_element: "ATTRIBUTE".into(),
            name_attr: "NAME".into(),
            value_attr: "VALUE".into(),
            description_element: "ATTRIBUTE-SET".into(),
            utterance_element: "WORD-STRING".into(),
            domain: DomainSource::InferFromTypes,
            absence_key_prefix: "has".into(),
            absence_values: vec!["0".into()],
            ignore_keys: Vec::new(),
            message_cap: DEFAULT_MESSAGE_CAP,
        }
    }
}

#[derive(Debug, Default)]
pub struct TunaImport {
    pub trials: Vec<Trial>,
    /// Files that could not be mapped, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

/// Imports every `.xml` file under `path` (recursively, in sorted order), or
/// the single file `path`. No negation closure is applied.
pub fn import_tuna(path: &Path, mapping: &TunaMapping) -> Result<TunaImport> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let files = if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        let mut files = Vec::new();
        collect_xml(path, &mut files).map_err(io_err)?;
        files.sort();
        files
    };
    let mut out = TunaImport::default();
    if files.is_empty() {
        out.warnings.push(format!("{}: no XML trial files found", path.display()));
    }
    for file in files {
        let text = match fs::read_to_string(&file) {
            Ok(t) => t,
            Err(e) => {
                out.skipped.push((file, e.to_string()));
                continue;
            }
        };
        match parse_trial(&text, &file, mapping) {
            Ok(trial) => out.trials.push(trial),
            Err(e) => out.skipped.push((file, e.to_string())),
        }
    }
    Ok(out)
}

fn collect_xml(dir: &Path, files: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_xml(&path, files)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
            files.push(path);
        }
    }
    Ok(())
}

/// Maps one XML document onto a [`Trial`].
pub fn parse_trial(text: &str, path: &Path, mapping: &TunaMapping) -> Result<Trial> {
    let xml_err = |message: String| CorpusError::Xml {
        path: path.to_path_buf(),
        message,
    };
    let doc = roxmltree::Document::parse(text).map_err(|e| xml_err(e.to_string()))?;
    let trial = doc
        .descendants()
        .find(|n| n.has_tag_name(mapping.trial_element.as_str()))
        .ok_or_else(|| xml_err(format!("no <{}> element", mapping.trial_element)))?;
    let id = trial
        .attribute(mapping.trial_id_attr.as_str())
        .map(str::to_string)
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());

    let read_attr = |node: roxmltree::Node| -> Result<Option<Attribute>> {
        let name = node.attribute(mapping.name_attr.as_str());
        let value = node.attribute(mapping.value_attr.as_str());
        match (name, value) {
            (Some(n), Some(v)) => Ok(Some(
                Attribute::new(n.trim(), v.trim().replace(char::is_whitespace, "_"))
                    .map_err(|e| xml_err(e.to_string()))?,
            )),
            _ => Ok(None),
        }
    };

    let mut entities = Vec::new();
    let mut targets = Vec::new();
    for (i, node) in trial
        .descendants()
        .filter(|n| n.has_tag_name(mapping.entity_element.as_str()))
        .enumerate()
    {
        let eid = node
            .attribute(mapping.entity_id_attr.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("e{i}"));
        if node.attribute(mapping.role_attr.as_str()) == Some(mapping.target_role.as_str()) {
            targets.push(i);
        }
        let mut attrs = Vec::new();
        for child in node.children().filter(|c| c.has_tag_name(mapping.attribute_element.as_str())) {
            let Some(a) = read_attr(child)? else { continue };
            if mapping.ignore_keys.iter().any(|k| k == a.key()) {
                continue;
            }
            if a.key().starts_with(mapping.absence_key_prefix.as_str())
                && !mapping.absence_key_prefix.is_empty()
                && mapping.absence_values.iter().any(|v| v == a.value())
            {
                continue;
            }
            attrs.push(a);
        }
        entities.push(Entity::new(eid, attrs)?);
    }
    let target = match targets.as_slice() {
        [t] => *t,
        [] => return Err(xml_err("no target entity".into())),
        _ => return Err(xml_err(format!("{} targets (plural trial)", targets.len()))),
    };

    let description = trial
        .descendants()
        .find(|n| n.has_tag_name(mapping.description_element.as_str()))
        .ok_or_else(|| xml_err(format!("no <{}> element", mapping.description_element)))?;
    let mut attrs = Vec::new();
    for node in description
        .descendants()
        .filter(|n| n.has_tag_name(mapping.attribute_element.as_str()))
    {
        if let Some(a) = read_attr(node)? {
            attrs.push(a);
        }
    }
    if attrs.is_empty() {
        return Err(xml_err("empty description".into()));
    }
    let human = Message::new(attrs)?;

    let domain = match &mapping.domain {
        DomainSource::Fixed(d) => d.clone(),
        DomainSource::ParentDir => path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "unknown".into()),
        DomainSource::InferFromTypes => {
            let person = Attribute::new("type", "person").expect("valid attribute");
            if entities.iter().any(|e| e.positives().contains(&person)) {
                "people".into()
            } else {
                "furniture".into()
            }
        }
    };
    let annotation = trial
        .descendants()
        .find(|n| n.has_tag_name(mapping.utterance_element.as_str()))
        .and_then(|n| n.text())
        .map(|s| s.trim().to_string());

    let mut record = Trial::new(id, domain, entities, target, human.clone())?;
    record = record.with_alternatives_capped(human, mapping.message_cap)?;
    record.annotation = annotation;
    Ok(record)
}
