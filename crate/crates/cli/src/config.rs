//! Layered option resolution: built-in defaults, then a `key=value` file,
//! then command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

/// Values read from a `key=value` file. Blank lines and `#` comments are
/// skipped; keys use the long flag names without dashes.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected key=value, got `{raw}`",
                    i + 1
                ))
            })?;
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            values.insert(key, value.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    /// Fails on keys that the running subcommand does not understand.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), CliError> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(CliError::Usage(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    /// Flag if given, else file value, else `default`.
    pub fn resolve<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.resolve_opt(key, flag)?.unwrap_or(default))
    }

    pub fn resolve_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_layers() {
        let cfg = ConfigFile::parse("# market\ns0 = 110\n\nk=90 # strike\n--sigma=0.3\n").unwrap();
        assert_eq!(cfg.resolve("s0", None, 100.0).unwrap(), 110.0);
        assert_eq!(cfg.resolve("s0", Some(120.0), 100.0).unwrap(), 120.0);
        assert_eq!(cfg.resolve("sigma", None, 0.2).unwrap(), 0.3);
        assert_eq!(cfg.resolve("theta", None, 1.0).unwrap(), 1.0);
        assert!(cfg.check_keys(&["s0", "k", "sigma"]).is_ok());
        assert!(cfg.check_keys(&["s0", "k"]).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(ConfigFile::parse("s0 110").is_err());
        let cfg = ConfigFile::parse("s0=abc").unwrap();
        assert!(cfg.resolve::<f64>("s0", None, 1.0).is_err());
    }
}
