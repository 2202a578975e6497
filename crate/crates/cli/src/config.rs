//! Experiment configuration: a TOML file (sections are only grouping, keys
//! are flattened) overlaid with command-line flags.

use crate::exit::CliError;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use toml::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scenario {
    Solve,
    Scan,
    Bifurcate,
    Evolution,
    CenterManifold,
    MeasureSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Solve,
        Scenario::Scan,
        Scenario::Bifurcate,
        Scenario::Evolution,
        Scenario::CenterManifold,
        Scenario::MeasureSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Solve => "solve",
            Scenario::Scan => "scan",
            Scenario::Bifurcate => "bifurcate",
            Scenario::Evolution => "evolution",
            Scenario::CenterManifold => "center-manifold",
            Scenario::MeasureSweep => "measure-sweep",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::validation(format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub verbose: bool,
    pub params: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) -> Result<(), CliError> {
    for (k, v) in table {
        match v {
            Value::Table(t) => flatten(&k, t, out)?,
            v => {
                if out.insert(k.clone(), v).is_some() {
                    let at = if prefix.is_empty() { String::new() } else { format!(" (in [{prefix}])") };
                    return Err(CliError::validation(format!("key `{k}` given twice{at}")));
                }
            }
        }
    }
    Ok(())
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, Value>, CliError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::validation(format!("config is not valid TOML: {e}")))?;
    let mut out = BTreeMap::new();
    flatten("", table, &mut out)?;
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse_config_text(&text)
}

impl ExperimentConfig {
    /// File keys first, then flag overrides. `scenario`, `seed` and `out_dir`
    /// may come from either place; a file scenario must match the subcommand.
    pub fn resolve(
        scenario: Scenario,
        file: BTreeMap<String, Value>,
        flags: Vec<(&str, Option<String>)>,
        seed: Option<u64>,
        out_dir: Option<PathBuf>,
        verbose: bool,
    ) -> Result<Self, CliError> {
        let mut params = file;
        if let Some(v) = params.remove("scenario") {
            let named = v.as_str().ok_or_else(|| CliError::validation("`scenario` must be a string"))?;
            if named.parse::<Scenario>()? != scenario {
                return Err(CliError::validation(format!(
                    "config is for scenario `{named}` but the subcommand is `{scenario}`"
                )));
            }
        }
        let file_seed = match params.remove("seed") {
            Some(Value::Integer(i)) if i >= 0 => Some(i as u64),
            Some(v) => return Err(CliError::validation(format!("`seed` must be a non-negative integer, got {v}"))),
            None => None,
        };
        let file_out = match params.remove("out_dir") {
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(v) => return Err(CliError::validation(format!("`out_dir` must be a string, got {v}"))),
            None => None,
        };
        for (k, v) in flags {
            if let Some(v) = v {
                params.insert(k.to_string(), Value::String(v));
            }
        }
        Ok(ExperimentConfig {
            scenario,
            seed: seed.or(file_seed).unwrap_or(0),
            out_dir: out_dir.or(file_out).unwrap_or_else(|| PathBuf::from(".")),
            verbose,
            params,
        })
    }

    pub fn path(&self, p: &str) -> PathBuf {
        self.out_dir.join(p)
    }
}

/// Typed access to the parameter map. Problems are collected so that one
/// validation error can list every missing or malformed key. Every value read
/// (defaults included) lands in `resolved`.
pub struct Reader<'a> {
    params: &'a BTreeMap<String, Value>,
    missing: Vec<String>,
    bad: Vec<String>,
    used: Vec<String>,
    pub resolved: BTreeMap<String, Value>,
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn as_list(v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::Array(a) => a.iter().map(as_f64).collect(),
        Value::String(s) => s.split(',').map(|x| x.trim().parse().ok()).collect(),
        v => as_f64(v).map(|x| vec![x]),
    }
}

fn float_list(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| Value::Float(x)).collect())
}

impl<'a> Reader<'a> {
    pub fn new(params: &'a BTreeMap<String, Value>) -> Self {
        Reader { params, missing: vec![], bad: vec![], used: vec![], resolved: BTreeMap::new() }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.used.push(key.to_string());
        self.params.get(key)
    }

    fn typed<T>(&mut self, key: &str, what: &str, conv: impl Fn(&Value) -> Option<T>) -> Option<T> {
        let v = self.raw(key)?;
        let out = conv(v);
        if out.is_none() {
            self.bad.push(format!("`{key}` must be {what}, got {v}"));
        }
        out
    }

    fn need<T>(&mut self, key: &str, v: Option<T>, fallback: T) -> T {
        if v.is_none() && !self.params.contains_key(key) {
            self.missing.push(key.to_string());
        }
        v.unwrap_or(fallback)
    }

    pub fn f64(&mut self, key: &str) -> f64 {
        let v = self.typed(key, "a number", as_f64);
        let x = self.need(key, v, f64::NAN);
        self.resolved.insert(key.into(), Value::Float(x));
        x
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        let x = self.typed(key, "a number", as_f64).unwrap_or(default);
        self.resolved.insert(key.into(), Value::Float(x));
        x
    }

    pub fn opt_f64(&mut self, key: &str) -> Option<f64> {
        let x = self.typed(key, "a number", as_f64);
        if let Some(x) = x {
            self.resolved.insert(key.into(), Value::Float(x));
        }
        x
    }

    pub fn list(&mut self, key: &str) -> Vec<f64> {
        let v = self.typed(key, "a list of numbers", as_list);
        let x = self.need(key, v, vec![]);
        self.resolved.insert(key.into(), float_list(&x));
        x
    }

    pub fn list_or(&mut self, key: &str, default: &[f64]) -> Vec<f64> {
        let x = self.typed(key, "a list of numbers", as_list).unwrap_or_else(|| default.to_vec());
        self.resolved.insert(key.into(), float_list(&x));
        x
    }

    pub fn opt_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let x = self.typed(key, "a list of numbers", as_list);
        if let Some(x) = &x {
            self.resolved.insert(key.into(), float_list(x));
        }
        x
    }

    fn as_usize(v: &Value) -> Option<usize> {
        match v {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    pub fn usize(&mut self, key: &str) -> usize {
        let v = self.typed(key, "a non-negative integer", Self::as_usize);
        let x = self.need(key, v, 0);
        self.resolved.insert(key.into(), Value::Integer(x as i64));
        x
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> usize {
        let x = self.typed(key, "a non-negative integer", Self::as_usize).unwrap_or(default);
        self.resolved.insert(key.into(), Value::Integer(x as i64));
        x
    }

    pub fn opt_usize(&mut self, key: &str) -> Option<usize> {
        let x = self.typed(key, "a non-negative integer", Self::as_usize);
        if let Some(x) = x {
            self.resolved.insert(key.into(), Value::Integer(x as i64));
        }
        x
    }

    pub fn string(&mut self, key: &str) -> String {
        let v = self.typed(key, "a string", |v| v.as_str().map(str::to_string));
        let x = self.need(key, v, String::new());
        self.resolved.insert(key.into(), Value::String(x.clone()));
        x
    }

    pub fn string_or(&mut self, key: &str, default: &str) -> String {
        let x = self.typed(key, "a string", |v| v.as_str().map(str::to_string)).unwrap_or_else(|| default.into());
        self.resolved.insert(key.into(), Value::String(x.clone()));
        x
    }

    pub fn opt_string(&mut self, key: &str) -> Option<String> {
        let x = self.typed(key, "a string", |v| v.as_str().map(str::to_string));
        if let Some(x) = &x {
            self.resolved.insert(key.into(), Value::String(x.clone()));
        }
        x
    }

    pub fn bool_or(&mut self, key: &str, default: bool) -> bool {
        let conv = |v: &Value| match v {
            Value::Boolean(b) => Some(*b),
            Value::String(s) => s.parse().ok(),
            _ => None,
        };
        let x = self.typed(key, "true or false", conv).unwrap_or(default);
        self.resolved.insert(key.into(), Value::Boolean(x));
        x
    }

    pub fn invalid(&mut self, msg: impl Into<String>) {
        self.bad.push(msg.into());
    }

    /// Fails on missing keys, malformed values, recorded constraint
    /// violations, and keys no parameter read.
    pub fn finish(mut self) -> Result<BTreeMap<String, Value>, CliError> {
        let unknown: Vec<&String> = self.params.keys().filter(|k| !self.used.contains(k)).collect();
        if !unknown.is_empty() {
            self.bad.push(format!(
                "unknown keys: {}",
                unknown.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
            ));
        }
        let mut lines = Vec::new();
        if !self.missing.is_empty() {
            lines.push(format!("missing keys: {}", self.missing.join(", ")));
        }
        lines.extend(self.bad);
        if lines.is_empty() {
            Ok(self.resolved)
        } else {
            Err(CliError::validation(lines.join("; ")))
        }
    }
}

/// `lo:hi:n` (inclusive linear grid) or a comma list.
pub fn parse_range(s: &str) -> Option<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, n] => {
            let (lo, hi, n): (f64, f64, usize) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?, n.trim().parse().ok()?);
            match n {
                0 => Some(vec![]),
                1 => Some(vec![lo]),
                _ => Some((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
            }
        }
        [_] => s.split(',').map(|x| x.trim().parse().ok()).collect(),
        _ => None,
    }
}

/// The resolved configuration as TOML, for embedding in summaries.
pub fn resolved_toml(cfg: &ExperimentConfig, resolved: &BTreeMap<String, Value>) -> String {
    let mut t = toml::Table::new();
    t.insert("scenario".into(), Value::String(cfg.scenario.name().into()));
    t.insert("seed".into(), Value::Integer(cfg.seed as i64));
    let mut p = toml::Table::new();
    for (k, v) in resolved {
        p.insert(k.clone(), v.clone());
    }
    t.insert("params".into(), Value::Table(p));
    toml::to_string(&t).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_flatten_and_flags_override() {
        let file = parse_config_text("seed = 3\n[operator]\nnu = [1.3]\nm = 1.0\n[solver]\nepsilon = 0.01\n").unwrap();
        let cfg = ExperimentConfig::resolve(Scenario::Solve, file, vec![("m", Some("2".into()))], None, None, false).unwrap();
        assert_eq!(cfg.seed, 3);
        let mut r = Reader::new(&cfg.params);
        assert_eq!(r.f64("m"), 2.0);
        assert_eq!(r.list("nu"), vec![1.3]);
        assert_eq!(r.f64("epsilon"), 0.01);
        assert!(r.finish().is_ok());
    }

    #[test]
    fn reader_lists_all_missing_keys() {
        let empty = BTreeMap::new();
        let mut r = Reader::new(&empty);
        r.f64("m");
        r.list("nu");
        let err = r.finish().unwrap_err();
        assert!(err.message.contains("missing keys: m, nu"));
    }

    #[test]
    fn duplicate_and_mismatched_scenario() {
        assert!(parse_config_text("m = 1\n[a]\nm = 2\n").is_err());
        let file = parse_config_text("scenario = \"scan\"\n").unwrap();
        assert!(ExperimentConfig::resolve(Scenario::Solve, file, vec![], None, None, false).is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("-1:1:3"), Some(vec![-1.0, 0.0, 1.0]));
        assert_eq!(parse_range("1e-3, 2e-3"), Some(vec![1e-3, 2e-3]));
        assert_eq!(parse_range("a:b"), None);
    }
}
