use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key a config file or flag may set.
pub const KNOWN_KEYS: &[&str] = &[
    "mesh",
    "generator",
    "f",
    "pull",
    "direction",
    "eta",
    "method",
    "tol_final",
    "tol_intermediate",
    "max_is_iters",
    "max_newton",
    "max_newton_per_step",
    "min_increment",
    "line_search",
    "indefinite",
    "young",
    "poisson",
    "r_inner",
    "r_outer",
    "nodes",
    "lengths",
    "cells",
    "jitter",
    "seed",
    "sliver_flatness",
    "sliver_direction",
    "f_values",
    "eta_values",
    "pulls",
    "out_dir",
    "trace",
];

/// Layered `key = value` settings. Later layers win, so callers push
/// defaults, then the config file, then command-line flags.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = key.trim().replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            bail!("unknown config key '{key}'");
        }
        self.values.insert(key, value.into().trim().to_string());
        Ok(())
    }

    pub fn set_opt(&mut self, key: &str, value: &Option<String>) -> Result<()> {
        match value {
            Some(v) => self.set(key, v.clone()),
            None => Ok(()),
        }
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn merge_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected key = value", lineno + 1))?;
            self.set(k, v).with_context(|| format!("{origin}:{}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.merge_text(&text, &path.display().to_string())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.raw(key).ok_or_else(|| anyhow!("missing config key '{key}'"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| anyhow!("invalid value for key '{key}': {raw:?} ({e})"))
    }

    /// Real number; also accepts a fraction such as `1/3`.
    pub fn real(&self, key: &str) -> Result<f64> {
        let raw = self.require(key)?;
        parse_real(raw).ok_or_else(|| anyhow!("invalid value for key '{key}': {raw:?}"))
    }

    pub fn real_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None | Some("") | Some("none") => Ok(None),
            Some(_) => self.real(key).map(Some),
        }
    }

    /// Comma-separated reals.
    pub fn reals(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|t| parse_real(t.trim()))
            .collect::<Option<Vec<_>>>()
            .filter(|v| !v.is_empty())
            .ok_or_else(|| anyhow!("invalid value for key '{key}': {raw:?}"))
    }

    pub fn triple(&self, key: &str) -> Result<[f64; 3]> {
        let v = self.reals(key)?;
        <[f64; 3]>::try_from(v).map_err(|_| anyhow!("key '{key}' needs three comma-separated values"))
    }

    pub fn usize_triple(&self, key: &str) -> Result<[usize; 3]> {
        let raw = self.require(key)?;
        let v: Vec<usize> = raw
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| anyhow!("invalid value for key '{key}': {raw:?} ({e})"))?;
        <[usize; 3]>::try_from(v).map_err(|_| anyhow!("key '{key}' needs three comma-separated values"))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some("1" | "true" | "yes" | "on") => Ok(true),
            Some("0" | "false" | "no" | "off") => Ok(false),
            Some(other) => bail!("invalid value for key '{key}': {other:?}"),
        }
    }
}

fn parse_real(s: &str) -> Option<f64> {
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse().ok()?,
    };
    v.is_finite().then_some(v)
}
