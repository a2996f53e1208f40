//! Flat `key = value` configuration files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use ladderwalk::analytic::critical_bias;

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
    /// Every value an experiment read, defaults included.
    resolved: Mutex<BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                bail!("line {}: empty key or value", i + 1);
            }
            if !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                bail!("line {}: key `{k}` may only contain letters, digits and underscores", i + 1);
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                bail!("line {}: duplicate key `{k}`", i + 1);
            }
        }
        Ok(Config { entries, ..Config::default() })
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    pub fn resolved(&self) -> BTreeMap<String, String> {
        self.resolved.lock().unwrap().clone()
    }

    fn note(&self, key: &str, value: String) {
        self.resolved.lock().unwrap().insert(key.to_string(), value);
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, experiment: &str, allowed: &[&str]) -> Result<()> {
        let allowed: BTreeSet<&str> = allowed.iter().chain(COMMON_KEYS).copied().collect();
        let unknown: Vec<&str> = self.entries.keys().map(String::as_str).filter(|k| !allowed.contains(k)).collect();
        if !unknown.is_empty() {
            bail!("unknown key(s) for `{experiment}`: {}; allowed: {}", unknown.join(", "), allowed.into_iter().collect::<Vec<_>>().join(", "));
        }
        Ok(())
    }

    pub fn get<T: FromStr + Display>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let v = match self.entries.get(key) {
            None => default,
            Some(v) => parse_value(key, v)?,
        };
        self.note(key, v.to_string());
        Ok(v)
    }

    pub fn get_opt<T: FromStr + Display>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let v = self.entries.get(key).map(|v| parse_value::<T>(key, v)).transpose()?;
        if let Some(v) = &v {
            self.note(key, v.to_string());
        }
        Ok(v)
    }

    pub fn get_list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: FromStr + Clone + Display,
        T::Err: Display,
    {
        let v = match self.entries.get(key) {
            None => default.to_vec(),
            Some(v) => v.split(',').map(|s| parse_value(key, s.trim())).collect::<Result<_>>()?,
        };
        self.note(key, v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        Ok(v)
    }

    pub fn get_bool(&self, key: &str, default: bool) -> Result<bool> {
        let v = match self.entries.get(key).map(String::as_str) {
            None => default,
            Some("true" | "yes" | "1") => true,
            Some("false" | "no" | "0") => false,
            Some(v) => bail!("`{key}`: expected a boolean, got `{v}`"),
        };
        self.note(key, v.to_string());
        Ok(v)
    }

    pub fn p(&self) -> Result<f64> {
        let p = self.get("p", 0.5)?;
        if !(p > 0.0 && p < 1.0) {
            bail!("`p` must lie in (0, 1), got {p}");
        }
        Ok(p)
    }

    /// The bias from `lambda`, `lambda_over_critical` or `alpha` (at most one may be given).
    pub fn lambda(&self, default_alpha: f64) -> Result<f64> {
        let p = self.p()?;
        let given: Vec<&str> = ["lambda", "lambda_over_critical", "alpha"].into_iter().filter(|k| self.entries.contains_key(*k)).collect();
        if given.len() > 1 {
            bail!("give only one of {}", given.join(", "));
        }
        let lc = critical_bias(p)?;
        let lambda = if let Some(l) = self.get_opt::<f64>("lambda")? {
            l
        } else if let Some(c) = self.get_opt::<f64>("lambda_over_critical")? {
            c * lc
        } else {
            lc / self.get("alpha", default_alpha)?
        };
        if !(lambda > 0.0 && lambda.is_finite()) {
            bail!("bias must be positive and finite, got {lambda}");
        }
        Ok(lambda)
    }
}

pub const COMMON_KEYS: &[&str] = &["p", "seed", "out", "workers"];

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    // allow 1e5-style integers
    if let Ok(t) = v.parse::<T>() {
        return Ok(t);
    }
    if let Ok(f) = v.parse::<f64>() {
        if f.fract() == 0.0 && f.abs() < 9.0e15 {
            if let Ok(t) = format!("{}", f as i64).parse::<T>() {
                return Ok(t);
            }
        }
    }
    v.parse::<T>().map_err(|e| anyhow!("{e}")).with_context(|| format!("bad value `{v}` for `{key}`"))
}
