//! Flat key-value configuration files.
//!
//! Grammar, line by line: `section.key = value`, UTF-8. `#` starts a
//! comment (whole-line or trailing), blank lines are skipped, and keys must
//! contain at least one dot so every entry names its section. Values are
//! kept as raw strings and parsed where they are used, which lets one file
//! carry settings for several subcommands; when a key repeats, the last
//! occurrence wins. Command-line flags always override config entries.

use std::path::Path;
use std::str::FromStr;

use dtr_engine::{EngineError, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    /// (key, value, 1-based line), in file order.
    entries: Vec<(String, String, usize)>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EngineError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| {
                EngineError::Config(format!("config line {line}: expected `section.key = value`"))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || !key.contains('.') || key.starts_with('.') || key.ends_with('.') {
                return Err(EngineError::Config(format!(
                    "config line {line}: key '{key}' must look like `section.key`"
                )));
            }
            entries.push((key.to_string(), value.to_string(), line));
        }
        Ok(Config { entries })
    }

    /// Raw value of `key`, last occurrence winning.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().rev().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str())
    }

    /// Parsed value of `key`; a present-but-unparseable value is an error
    /// naming the key and line rather than a silent fallback.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some((_, value, line)) =
            self.entries.iter().rev().find(|(k, _, _)| k == key)
        else {
            return Ok(None);
        };
        value.parse::<T>().map(Some).map_err(|_| {
            EngineError::Config(format!(
                "config line {line}: cannot parse {key} = '{value}' as {}",
                std::any::type_name::<T>()
            ))
        })
    }

    /// Whether any key under `section.` is present.
    pub fn has_section(&self, section: &str) -> bool {
        let prefix = format!("{section}.");
        self.entries.iter().any(|(k, _, _)| k.starts_with(&prefix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_comments_and_blanks() {
        let cfg = Config::parse(
            "# study settings\n\
             study.scenario = sim1\n\
             \n\
             run.seed = 42   # fixed for the report\n\
             study.scenario = sim2\n",
        )
        .unwrap();
        // Later occurrences shadow earlier ones.
        assert_eq!(cfg.get("study.scenario"), Some("sim2"));
        assert_eq!(cfg.get_parsed::<u64>("run.seed").unwrap(), Some(42));
        assert_eq!(cfg.get("missing.key"), None);
        assert!(cfg.has_section("run"));
        assert!(!cfg.has_section("ingest"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("just words\n").is_err());
        assert!(Config::parse("noselector = 5\n").is_err());
        assert!(Config::parse(".key = 5\n").is_err());
    }

    #[test]
    fn bad_typed_value_names_key_and_line() {
        let cfg = Config::parse("run.seed = soon\n").unwrap();
        let err = cfg.get_parsed::<u64>("run.seed").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("run.seed"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }
}
