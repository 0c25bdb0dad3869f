//! Flat key=value config files and option resolution.
//!
//! Precedence is command line > config file > defaults. Unknown keys are
//! rejected, never ignored.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};

/// An error in how the program was invoked (bad flag value, unknown
/// config key); mapped to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parsed config file with the keys one subcommand is allowed to use.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: HashMap<String, String>,
}

/// Keys every subcommand accepts.
const GLOBAL_KEYS: [&str; 4] = ["seed", "outdir", "scale", "jobs"];

impl ConfigFile {
    pub fn load(path: &Path, allowed: &[&str]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(UsageError(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
                .into());
            };
            let key = key.trim().to_string();
            if !GLOBAL_KEYS.contains(&key.as_str()) && !allowed.contains(&key.as_str()) {
                return Err(UsageError(format!(
                    "{}:{}: unknown config key {key:?}",
                    path.display(),
                    lineno + 1
                ))
                .into());
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parse a config value; flag values win over config values.
    pub fn get<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                UsageError(format!("config key {key}: bad value {raw:?}: {e}")).into()
            }),
        }
    }

    /// Comma-separated list value.
    pub fn get_list<T>(&self, key: &str, flag: Option<Vec<T>>) -> Result<Option<Vec<T>>>
    where
        T: std::str::FromStr,
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|t| {
                    t.trim().parse::<T>().map_err(|e| {
                        UsageError(format!("config key {key}: bad element {t:?}: {e}")).into()
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_and_resolves_precedence() {
        let f = write_temp("# comment\nseed=9\nsamples = 500\n");
        let cfg = ConfigFile::load(f.path(), &["samples"]).unwrap();
        // flag wins
        assert_eq!(cfg.get("samples", Some(7usize)).unwrap(), Some(7));
        // config fills in
        assert_eq!(cfg.get::<usize>("samples", None).unwrap(), Some(500));
        // absent key falls through
        assert_eq!(cfg.get::<usize>("repetitions", None).unwrap(), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        let f = write_temp("bogus=1\n");
        let err = ConfigFile::load(f.path(), &["samples"]).unwrap_err();
        assert!(err.is::<UsageError>());

        let f = write_temp("no equals sign\n");
        let err = ConfigFile::load(f.path(), &["samples"]).unwrap_err();
        assert!(err.is::<UsageError>());
    }

    #[test]
    fn parses_lists() {
        let f = write_temp("depths=3, 5,7\n");
        let cfg = ConfigFile::load(f.path(), &["depths"]).unwrap();
        assert_eq!(
            cfg.get_list::<usize>("depths", None).unwrap(),
            Some(vec![3, 5, 7])
        );
    }
}
