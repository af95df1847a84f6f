//! Flag / config-file merging. A flag wins over the file; every resolved
//! value is recorded so the run manifest can replay it.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::hash::{BuildHasher, Hasher};
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use qmetrix::report::{normalize_key, KeyValueConfig};

pub struct Settings {
    file: KeyValueConfig,
    pub resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => KeyValueConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
            None => KeyValueConfig::default(),
        };
        Ok(Settings {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config key `{key}` = `{v}`: {e}")))
            .transpose()
    }

    /// Flag value, else file value, else `None`.
    pub fn opt<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(normalize_key(key), v.to_string());
        }
        Ok(v)
    }

    pub fn get<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.resolved.insert(normalize_key(key), v.to_string());
        Ok(v)
    }

    pub fn require<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| anyhow!("missing required setting `--{}`", normalize_key(key)))
    }

    /// Explicit seed, or a fresh one that is printed so the run can be repeated.
    pub fn seed(&mut self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = self.opt("seed", flag)? {
            return Ok(s);
        }
        let mut h = std::collections::hash_map::RandomState::new().build_hasher();
        h.write_u128(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0),
        );
        let s = h.finish();
        eprintln!("no seed given, using --seed {s}");
        self.resolved.insert("seed".into(), s.to_string());
        Ok(s)
    }

    /// Rejects file keys that no setting of the command consumed.
    pub fn check_unused(&self, known: &[&str]) -> Result<()> {
        for k in self.file.keys() {
            if !known.iter().any(|n| normalize_key(n) == k) && !self.resolved.contains_key(k) {
                return Err(anyhow!("unknown config key `{k}`"));
            }
        }
        Ok(())
    }
}

/// `from:step:to` grid syntax.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| anyhow!("grid `{s}`: {e}"));
    match parts.as_slice() {
        [from, step, to] => Ok(qmetrix::optimizer::target_grid(num(from)?, num(to)?, num(step)?)?),
        _ => Err(anyhow!("grid `{s}` must be from:step:to")),
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("list `{s}`: {e}")))
        .collect()
}
