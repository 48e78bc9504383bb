//! Layered settings: command-line flags over a `key = value` file over
//! built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key a config file or `--set` may name.
pub const KEYS: &[&str] = &[
    "manifest",
    "features",
    "embeddings",
    "models",
    "out",
    "log",
    "seed",
    "dimension",
    "corpus",
    "positive",
    "negative",
    "test",
    "ingest.min_duration",
    "ingest.max_duration",
    "window.length",
    "window.hop",
    "window.head_trim",
    "window.tail_trim",
    "eval.repeats",
    "eval.test_fraction",
    "svr.c",
    "svr.gamma",
    "svr.epsilon",
    "svr.folds",
    "train.epochs",
    "train.learning_rate",
    "train.batch_size",
    "train.val_fraction",
    "train.hidden",
    "classify.heldout_fraction",
    "service.addr",
    "service.snapshot_every",
];

fn check_key(key: &str) -> Result<()> {
    if KEYS.contains(&key) {
        Ok(())
    } else {
        bail!("unknown setting {key:?}")
    }
}

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// skipped; unknown and repeated keys are errors.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        let key = key.trim();
        check_key(key).with_context(|| format!("line {}", n + 1))?;
        if out
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            bail!("line {}: {key} is set twice", n + 1);
        }
    }
    Ok(out)
}

#[derive(Debug, Default, Clone)]
pub struct Settings {
    flags: BTreeMap<String, String>,
    file: BTreeMap<String, String>,
}

impl Settings {
    /// Reads the optional config file and the `--set key=value` overrides.
    pub fn load(config: Option<&Path>, sets: &[String]) -> Result<Self> {
        let file = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_config(&text).with_context(|| format!("in {}", path.display()))?
            }
            None => BTreeMap::new(),
        };
        let mut settings = Self {
            flags: BTreeMap::new(),
            file,
        };
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got {s:?}"))?;
            settings.flag(k.trim(), Some(v.trim()))?;
        }
        Ok(settings)
    }

    /// Records a flag value; `None` leaves lower layers in charge.
    pub fn flag(&mut self, key: &str, value: Option<impl ToString>) -> Result<()> {
        check_key(key)?;
        if let Some(v) = value {
            self.flags.insert(key.to_string(), v.to_string());
        }
        Ok(())
    }

    pub fn flag_list<T: ToString>(&mut self, key: &str, values: &[T]) -> Result<()> {
        if values.is_empty() {
            return Ok(());
        }
        let joined = values
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        self.flag(key, Some(joined))
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.flags
            .get(key)
            .or_else(|| self.file.get(key))
            .map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("{key} = {v:?}: {e}")))
            .transpose()
    }

    pub fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| anyhow!("missing --{key} (or `{key} = ...` in the config file)"))
    }

    /// Comma-separated values.
    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| anyhow!("{key}: {s:?}: {e}")))
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.require(key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_syntax() {
        let cfg =
            parse_config("# comment\n\nseed = 7\nwindow.hop=40\n  out =  reports dir \n").unwrap();
        assert_eq!(cfg["seed"], "7");
        assert_eq!(cfg["window.hop"], "40");
        assert_eq!(cfg["out"], "reports dir");
        assert!(parse_config("bogus = 1")
            .unwrap_err()
            .to_string()
            .contains("line 1"));
        assert!(parse_config("seed 1").is_err());
        assert!(parse_config("seed = 1\nseed = 2").is_err());
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "seed = 3\neval.repeats = 4\nsvr.c = 1, 2,4\n").unwrap();
        let mut s = Settings::load(Some(&path), &["eval.repeats=6".into()]).unwrap();
        s.flag("seed", Some(9)).unwrap();
        s.flag("dimension", None::<String>).unwrap();
        assert_eq!(s.require::<u64>("seed").unwrap(), 9);
        assert_eq!(s.get::<usize>("eval.repeats").unwrap(), Some(6));
        assert_eq!(s.get_or("train.epochs", 100usize).unwrap(), 100);
        assert_eq!(s.list::<f64>("svr.c").unwrap(), Some(vec![1.0, 2.0, 4.0]));
        assert!(s.get::<String>("dimension").unwrap().is_none());
        assert!(s
            .require::<String>("manifest")
            .unwrap_err()
            .to_string()
            .contains("--manifest"));
        assert!(s.flag("nope", Some(1)).is_err());
        assert!(Settings::load(None, &["window.size=3".into()]).is_err());
        s.flag("seed", Some("x")).unwrap();
        assert!(s.get::<u64>("seed").is_err());
    }
}
