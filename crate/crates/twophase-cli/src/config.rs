//! Layered settings: config file, then `TWOPHASE_*` environment variables, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex;
use twophase::spectral_core::DensityPair;

pub const ENV_PREFIX: &str = "TWOPHASE_";

/// Parses `key = value` lines; `[section]` prefixes later keys with `section.`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        if let Some(s) = line.strip_prefix('[') {
            let name = s.strip_suffix(']').ok_or_else(|| anyhow!("line {}: unterminated section", n + 1))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        let k = k.trim();
        if k.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        let full = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        out.insert(full, v.trim().to_string());
    }
    Ok(out)
}

/// `TWOPHASE_FOO__BAR=1` sets `foo.bar`.
pub fn env_overrides<I: IntoIterator<Item = (String, String)>>(vars: I) -> BTreeMap<String, String> {
    vars.into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_lowercase().replace("__", "."), v)))
        .collect()
}

pub fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| anyhow!("grid {s:?} is not NxM"))?;
    Ok((a.trim().parse().context("grid N")?, b.trim().parse().context("grid M")?))
}

pub fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| anyhow!("{what} {s:?} is not A,B"))?;
    let a: f64 = a.trim().parse().with_context(|| format!("{what} first entry"))?;
    let b: f64 = b.trim().parse().with_context(|| format!("{what} second entry"))?;
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
    pub out: PathBuf,
}

impl Settings {
    #[cfg(test)]
    pub fn new(values: BTreeMap<String, String>, out: PathBuf) -> Self {
        Self { values, out }
    }

    pub fn load(
        config: Option<&Path>,
        env: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
        out: PathBuf,
    ) -> Result<Self> {
        let mut values = match config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        values.extend(env);
        values.extend(flags);
        Ok(Self { values, out })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn text(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).to_string()
    }

    pub fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.raw(key) {
            Some(v) => v.parse().with_context(|| format!("{key} = {v:?} is not a number")),
            None => Ok(default),
        }
    }

    pub fn int(&self, key: &str, default: usize) -> Result<usize> {
        match self.raw(key) {
            Some(v) => v.parse().with_context(|| format!("{key} = {v:?} is not an integer")),
            None => Ok(default),
        }
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(v) => bail!("{key} = {v:?} is not a boolean"),
            None => Ok(default),
        }
    }

    pub fn grid(&self, default: (usize, usize)) -> Result<(usize, usize)> {
        self.raw("grid").map_or(Ok(default), parse_grid)
    }

    pub fn lambda(&self) -> Result<Option<Complex<f64>>> {
        self.raw("lambda").map(|s| parse_pair(s, "lambda").map(|(a, b)| Complex::new(a, b))).transpose()
    }

    pub fn rho(&self) -> Result<DensityPair<f64>> {
        let (a, b) = self.raw("rho").map_or(Ok((1.0, 3.0)), |s| parse_pair(s, "rho"))?;
        Ok(DensityPair::new(a, b)?)
    }

    pub fn seed(&self) -> Result<u64> {
        match self.raw("seed") {
            Some(v) => v.parse().with_context(|| format!("seed = {v:?}")),
            None => Ok(1),
        }
    }
}
