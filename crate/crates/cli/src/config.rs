//! Config files are TOML tables whose keys are long flag names of the chosen
//! subcommand. They are expanded into flags ahead of the command line, and a
//! flag given explicitly on the command line wins over its config entry.

use std::fs;
use std::path::Path;

use crate::error::CliError;

const CONFIG_FLAG: &str = "--config";

/// Returns `argv` with the entries of any `--config` file spliced in after
/// the subcommand name.
pub fn expand(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut config_path = None;
    let mut subcommand = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = &argv[i];
        if arg == CONFIG_FLAG {
            config_path = argv.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        } else if subcommand.is_none() && !arg.starts_with('-') {
            subcommand = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config_path, subcommand) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(Path::new(&path), e))?;
    let extra = flags_from_toml(&text, &argv)?;
    let mut out = argv;
    out.splice(at + 1..at + 1, extra);
    Ok(out)
}

fn given(argv: &[String], flag: &str) -> bool {
    argv.iter()
        .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
}

/// Converts a config table to flags, skipping keys already given in `argv`.
pub fn flags_from_toml(text: &str, argv: &[String]) -> Result<Vec<String>, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(format!("config file: {e}")))?;
    let mut out = Vec::new();
    for (key, value) in table {
        let flag = format!("--{key}");
        if key == "config" {
            return Err(CliError::Validation("config files cannot include other config files".into()));
        }
        if given(argv, &flag) {
            continue;
        }
        match value {
            toml::Value::Boolean(true) => out.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                for item in items {
                    out.push(flag.clone());
                    out.push(scalar(&key, item)?);
                }
            }
            other => {
                out.push(flag);
                out.push(scalar(&key, other)?);
            }
        }
    }
    Ok(out)
}

fn scalar(key: &str, value: toml::Value) -> Result<String, CliError> {
    match value {
        toml::Value::String(s) => Ok(s),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        _ => Err(CliError::Parse(format!("config key `{key}`: expected a string, number or list of them"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn command_line_flags_win() {
        let flags = flags_from_toml("lambda = 2.5\nseed = 3\n", &argv("lrsa demo --seed=9 x")).unwrap();
        assert_eq!(flags, argv("--lambda 2.5"));
    }

    #[test]
    fn lists_repeat_and_booleans_toggle() {
        let flags = flags_from_toml("agent = [\"S1\", \"s1\"]\ngrid = true\nquiet = false\n", &argv("lrsa evaluate")).unwrap();
        assert_eq!(flags, argv("--agent S1 --agent s1 --grid"));
    }

    #[test]
    fn nested_tables_are_rejected() {
        assert!(matches!(flags_from_toml("[x]\na = 1\n", &[]), Err(CliError::Parse(_))));
    }
}
