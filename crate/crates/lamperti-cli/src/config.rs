//! Flat `key = value` configuration with section headers.
//!
//! The effective configuration of a run is the file contents overlaid by
//! command-line flags and filled with defaults for everything the subcommand
//! reads; its canonical text (sections and keys sorted) is hashed into every
//! artifact, so a run is reproducible from its recorded configuration alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::from("common");
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .with_context(|| format!("line {}: unterminated section header", i + 1))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key = value", i + 1))?;
            cfg.set(&section, k.trim(), v.trim());
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    /// Canonical round-trippable text: sections and keys in sorted order.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (name, keys) in &self.sections {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in keys {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    /// Hex digest of the canonical text, truncated to 16 characters.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }
}

/// Resolves one subcommand's parameters with the precedence
/// flag > config file > default, recording every resolved value into the
/// effective configuration.
pub struct Resolver<'a> {
    file: &'a Config,
    section: String,
    pub effective: Config,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a Config, section: &str) -> Self {
        Resolver { file, section: section.to_string(), effective: Config::default() }
    }

    fn raw(&mut self, key: &str, flag: Option<String>, default: &str) -> String {
        let v = flag
            .or_else(|| self.file.get(&self.section, key).map(str::to_string))
            .or_else(|| self.file.get("common", key).map(str::to_string))
            .unwrap_or_else(|| default.to_string());
        self.effective.set(&self.section, key, &v);
        v
    }

    pub fn string(&mut self, key: &str, flag: Option<String>, default: &str) -> String {
        self.raw(key, flag, default)
    }

    pub fn f64(&mut self, key: &str, flag: Option<f64>, default: f64) -> Result<f64> {
        let v = self.raw(key, flag.map(|x| format!("{x}")), &format!("{default}"));
        v.parse().with_context(|| format!("parameter {key} = {v} is not a number"))
    }

    pub fn u64(&mut self, key: &str, flag: Option<u64>, default: u64) -> Result<u64> {
        let v = self.raw(key, flag.map(|x| format!("{x}")), &format!("{default}"));
        v.parse().with_context(|| format!("parameter {key} = {v} is not an integer"))
    }

    pub fn bool(&mut self, key: &str, flag: bool, default: bool) -> Result<bool> {
        let flagged = if flag { Some("true".to_string()) } else { None };
        let v = self.raw(key, flagged, if default { "true" } else { "false" });
        match v.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => bail!("parameter {key} = {other} is not a boolean"),
        }
    }

    /// Comma-separated u64 list.
    pub fn u64_list(&mut self, key: &str, flag: Option<String>, default: &str) -> Result<Vec<u64>> {
        let v = self.raw(key, flag, default);
        v.split(',')
            .map(|s| s.trim().parse().with_context(|| format!("bad list entry in {key}: {s}")))
            .collect()
    }

    /// Comma-separated f64 list.
    pub fn f64_list(&mut self, key: &str, flag: Option<String>, default: &str) -> Result<Vec<f64>> {
        let v = self.raw(key, flag, default);
        v.split(',')
            .map(|s| s.trim().parse().with_context(|| format!("bad list entry in {key}: {s}")))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash_stability() {
        let text = "[solver]\nradius = 1000\nc = 2.0\n\n[common]\nseed = 7\n";
        let cfg = Config::parse(text).unwrap();
        let canon = cfg.canonical();
        let again = Config::parse(&canon).unwrap();
        assert_eq!(canon, again.canonical());
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(cfg.get("solver", "radius"), Some("1000"));
    }

    #[test]
    fn resolver_precedence() {
        let mut file = Config::default();
        file.set("sim", "c", "1.5");
        file.set("common", "seed", "9");
        let mut r = Resolver::new(&file, "sim");
        assert_eq!(r.f64("c", None, 2.0).unwrap(), 1.5); // file beats default
        assert_eq!(r.f64("c2", Some(3.0), 2.0).unwrap(), 3.0); // flag beats all
        assert_eq!(r.u64("seed", None, 1).unwrap(), 9); // common fallback
        assert_eq!(r.u64("n", None, 4).unwrap(), 4); // default
        // every resolved key lands in the effective config
        for key in ["c", "c2", "seed", "n"] {
            assert!(r.effective.get("sim", key).is_some(), "{key}");
        }
    }
}
