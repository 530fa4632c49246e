//! Flat `key = value` configuration files. Blank lines and lines starting
//! with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {detail}")]
    Io { path: String, detail: String },
    #[error("line {line}: expected `key = value`, got `{content}`")]
    Syntax { line: usize, content: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown key `{0}`")]
    Unknown(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    Value {
        key: String,
        value: String,
        expected: &'static str,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    content: raw.to_string(),
                });
            };
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    content: raw.to_string(),
                });
            }
            if entries
                .insert(key.to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(ConfigError::Duplicate {
                    line: n + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn parsed<T: FromStr>(
        &self,
        key: &str,
        expected: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    expected,
                })
            })
            .transpose()
    }

    pub fn check_known(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(ConfigError::Unknown(k.to_string())),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let c = ConfigFile::parse(
            "# models\nforest = out/forest.json\n\n  k=19  \nurl = http://a/?x=1\n",
        )
        .unwrap();
        assert_eq!(c.get("forest"), Some("out/forest.json"));
        assert_eq!(c.parsed::<usize>("k", "integer").unwrap(), Some(19));
        assert_eq!(c.get("url"), Some("http://a/?x=1"));
        assert_eq!(c.get("missing"), None);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            ConfigFile::parse("just words"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            ConfigFile::parse("a=1\na=2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        let c = ConfigFile::parse("k = many").unwrap();
        assert!(c.parsed::<usize>("k", "integer").is_err());
        assert_eq!(
            c.check_known(&["seed"]),
            Err(ConfigError::Unknown("k".into()))
        );
    }
}
