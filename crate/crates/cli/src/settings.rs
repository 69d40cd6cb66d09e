//! Command settings: a flat TOML file overlaid with command-line flags.
//!
//! Precedence, highest first: flags given on the command line, keys in the
//! `--config` file, built-in defaults. Every run writes the fully resolved
//! settings to `config.resolved.toml` in its output directory; passing that
//! file back with `--config` repeats the run.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::failure::{io_err, CliResult, Failure};

pub const RESOLVED_FILE: &str = "config.resolved.toml";

/// Merges `flags` over the optional config file and fills the rest from
/// `S::default()`.
pub fn resolve<F: Serialize, S: DeserializeOwned>(config: Option<&Path>, flags: &F) -> CliResult<S> {
    let mut table = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    let overrides = toml::Table::try_from(flags).map_err(|e| Failure::Config(e.to_string()))?;
    table.extend(overrides);
    S::deserialize(toml::Value::Table(table)).map_err(|e| Failure::Config(e.to_string()))
}

pub fn write_resolved<S: Serialize>(dir: &Path, settings: &S) -> CliResult<()> {
    let text = toml::to_string(settings).map_err(|e| Failure::Config(e.to_string()))?;
    let path = dir.join(RESOLVED_FILE);
    fs::write(&path, text).map_err(io_err(format!("writing {}", path.display())))
}

pub fn is_false(b: &bool) -> bool {
    !*b
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Default)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        a: Option<u32>,
        #[serde(skip_serializing_if = "Option::is_none")]
        b: Option<String>,
    }

    #[derive(Deserialize, Debug, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Resolved {
        a: u32,
        b: String,
        c: f64,
    }

    impl Default for Resolved {
        fn default() -> Self {
            Self { a: 1, b: "x".into(), c: 0.5 }
        }
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "a = 7\nb = \"file\"\n").unwrap();
        let flags = Flags { a: None, b: Some("flag".into()) };
        let r: Resolved = resolve(Some(&path), &flags).unwrap();
        assert_eq!(r, Resolved { a: 7, b: "flag".into(), c: 0.5 });
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "zzz = 1\n").unwrap();
        let r: CliResult<Resolved> = resolve(Some(&path), &Flags::default());
        assert!(matches!(r, Err(Failure::Config(_))));
    }
}
