//! Experiment configuration: flat `key = value` text or JSON.

use std::fmt::Write as _;
use std::path::Path;

use choquard::constants::SharpConstants;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Constants,
    Spectrum,
    Energy,
    BubbleScan,
    Solve,
    Linking,
    Nonexist,
    BenchRiesz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Box,
    Ball,
}

/// Starting field of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// First Dirichlet eigenfunction.
    Eigen,
    /// Truncated bubble at the centre, scale from `eps[0]`.
    Bubble,
    /// Seeded white noise.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Experiment,
    pub dim: u32,
    pub mu: f64,
    /// Empty means the command's own default.
    pub lambda: Vec<f64>,
    pub shape: ShapeKind,
    /// Nodes per axis.
    pub n: usize,
    /// Box `[-L, L]^N`; a ball has radius `L`.
    pub half_width: f64,
    pub delta: f64,
    pub eps: Vec<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub starts: usize,
    pub j: usize,
    pub k: usize,
    pub init: InitKind,
    /// Snapshot read by `energy`.
    pub field: String,
    /// Interior sizes for `bench-riesz`.
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    pub threads: usize,
    /// Empty: print the primary artifact instead of writing files.
    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Experiment::Constants,
            dim: 3,
            mu: 1.0,
            lambda: Vec::new(),
            shape: ShapeKind::Box,
            n: 17,
            half_width: 1.0,
            delta: 0.5,
            eps: Vec::new(),
            tol: 1e-6,
            max_iters: 500,
            starts: 10,
            j: 1,
            k: 5,
            init: InitKind::Eigen,
            field: String::new(),
            sizes: vec![8, 16, 32],
            repeats: 3,
            seed: 1,
            threads: 1,
            out_dir: String::new(),
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn for_command(command: Experiment) -> Self {
        Self {
            command,
            ..Default::default()
        }
    }

    /// Check every range a module precondition would reject, before any
    /// compute starts.
    pub fn validate(&self) -> Result<(), CliError> {
        SharpConstants::compute(self.dim, self.mu).map_err(|e| CliError::Config(e.to_string()))?;
        if self.command == Experiment::Constants {
            return Ok(());
        }
        if self.lambda.iter().any(|l| !l.is_finite()) {
            return config_err("lambda must be finite");
        }
        if self.n < 8 {
            return config_err(format!("n = {} leaves no interior", self.n));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return config_err("half_width must be positive");
        }
        if self.threads == 0 {
            return config_err("threads must be at least 1");
        }
        match self.command {
            Experiment::Constants => {}
            Experiment::Spectrum => {
                if self.k == 0 {
                    return config_err("k must be at least 1");
                }
            }
            Experiment::Energy => {
                if self.field.is_empty() {
                    return config_err("energy needs a field snapshot");
                }
                if self.lambda.len() > 1 {
                    return config_err("energy takes a single lambda");
                }
            }
            Experiment::BubbleScan => {
                if self.eps.is_empty() {
                    return config_err("empty eps grid");
                }
                if self.lambda.len() > 1 {
                    return config_err("bubble-scan takes a single lambda");
                }
                self.check_bubble_geometry()?;
            }
            Experiment::Solve => {
                self.check_solver()?;
                if self.init == InitKind::Bubble {
                    if self.eps.is_empty() {
                        return config_err("a bubble start needs eps");
                    }
                    self.check_bubble_geometry()?;
                }
            }
            Experiment::Linking => {
                if self.j == 0 {
                    return config_err("j must be at least 1");
                }
                if self.eps.len() != 1 {
                    return config_err("linking takes exactly one eps");
                }
                self.check_bubble_geometry()?;
            }
            Experiment::Nonexist => {
                self.check_solver()?;
                if self.starts == 0 {
                    return config_err("starts must be at least 1");
                }
            }
            Experiment::BenchRiesz => {
                if self.sizes.is_empty() || self.sizes.iter().any(|&s| s < 6) {
                    return config_err("sizes must be a nonempty list of interior sizes >= 6");
                }
                if self.repeats == 0 {
                    return config_err("repeats must be at least 1");
                }
            }
        }
        Ok(())
    }

    fn check_solver(&self) -> Result<(), CliError> {
        if self.lambda.len() > 1 {
            return config_err("a solve takes a single lambda");
        }
        if !(self.tol > 0.0) {
            return config_err("tol must be positive");
        }
        if self.max_iters == 0 {
            return config_err("max_iters must be at least 1");
        }
        Ok(())
    }

    fn check_bubble_geometry(&self) -> Result<(), CliError> {
        let h = 2.0 * self.half_width / (self.n - 1) as f64;
        if !(self.delta > 0.0) || 2.0 * self.delta > self.half_width {
            return config_err(format!("delta = {} must lie in (0, L/2]", self.delta));
        }
        if let Some(e) = self.eps.iter().find(|&&e| !(e >= 2.0 * h) || !e.is_finite()) {
            return config_err(format!("eps = {e} is below 2h = {}", 2.0 * h));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// One `key = value` line per field, keys sorted; lists comma-separated.
    pub fn to_kv(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!()
        };
        let mut out = String::new();
        for (k, v) in &map {
            let text = match v {
                Value::Array(items) => items.iter().map(scalar_text).collect::<Vec<_>>().join(","),
                other => scalar_text(other),
            };
            let _ = writeln!(out, "{k} = {text}");
        }
        out
    }

    /// Lines are `key = value`; `#` starts a comment. Missing keys keep
    /// their defaults, unknown keys are rejected.
    pub fn from_kv(text: &str) -> Result<Self, CliError> {
        let Value::Object(template) = serde_json::to_value(Self::default()).expect("config serializes") else {
            unreachable!()
        };
        let mut map = Map::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return config_err(format!("line {}: expected key = value", lineno + 1));
            };
            let key = key.trim();
            let value = value.trim();
            let Some(kind) = template.get(key) else {
                return config_err(format!("line {}: unknown key {key:?}", lineno + 1));
            };
            let parsed = match kind {
                Value::Array(_) => Value::Array(
                    value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_number(key, s))
                        .collect::<Result<_, _>>()?,
                ),
                Value::Number(_) => parse_number(key, value)?,
                _ => Value::String(value.to_string()),
            };
            if map.insert(key.to_string(), parsed).is_some() {
                return config_err(format!("line {}: duplicate key {key:?}", lineno + 1));
            }
        }
        serde_json::from_value(Value::Object(map)).map_err(|e| CliError::Config(e.to_string()))
    }

    /// JSON if the file starts with `{`, key = value otherwise.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_kv(&text)
        }
    }

    /// `λ` for single-value commands.
    pub fn lambda_or(&self, default: f64) -> f64 {
        self.lambda.first().copied().unwrap_or(default)
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_number(key: &str, s: &str) -> Result<Value, CliError> {
    if let Ok(i) = s.parse::<u64>() {
        return Ok(Value::from(i));
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Value::from(x)),
        _ => config_err(format!("{key}: {s:?} is not a finite number")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            command: Experiment::BubbleScan,
            dim: 4,
            mu: 2.0,
            lambda: vec![1.0],
            shape: ShapeKind::Ball,
            n: 20,
            eps: vec![0.25, 0.3, 1.0 / 3.0],
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn kv_round_trip() {
        let c = sample();
        let text = c.to_kv();
        assert!(text.contains("command = bubble-scan"));
        assert!(text.contains("eps = 0.25,0.3,0.3333333333333333"));
        assert_eq!(ExperimentConfig::from_kv(&text).unwrap(), c);
    }

    #[test]
    fn json_round_trip() {
        let c = sample();
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn kv_rejects_unknown_and_bad_numbers() {
        assert!(matches!(ExperimentConfig::from_kv("colour = red"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::from_kv("mu = one"), Err(CliError::Config(_))));
        assert!(matches!(ExperimentConfig::from_kv("mu = 1\nmu = 2"), Err(CliError::Config(_))));
        let c = ExperimentConfig::from_kv("# comment\ndim = 4 # trailing\nmu = 2\nlambda =\n").unwrap();
        assert_eq!((c.dim, c.mu, c.lambda.len()), (4, 2.0, 0));
    }

    #[test]
    fn validation() {
        let mut c = sample();
        c.validate().unwrap();
        c.eps.clear();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let mut c = sample();
        c.eps = vec![0.05];
        assert!(c.validate().is_err());
        let mut c = sample();
        c.mu = 4.0;
        assert!(c.validate().is_err());
        c.command = Experiment::Constants;
        assert!(c.validate().is_err());
    }
}
