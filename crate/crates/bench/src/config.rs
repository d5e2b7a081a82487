//! Flat dotted-key experiment configuration.
//!
//! Configs are TOML documents. Keys may be written either dotted
//! (`loss.kind = "quadratic"`) or under section headers; both flatten to the
//! same dotted name. Every key must be consumed by the parser, so a typo is a
//! hard error rather than a silently ignored setting.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sural_core::{LossKind, ThresholdVariant};
use thiserror::Error;
use toml::Value;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`{hint}")]
    UnknownKey { key: String, line: usize, hint: String },

    #[error("{}`{key}`: {message}", line_prefix(*.line))]
    Invalid { key: String, line: Option<usize>, message: String },

    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

/// Which learner(s) a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Active,
    Passive,
    Both,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Active => "active",
            Method::Passive => "passive",
            Method::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassSpec {
    /// Explicit member list over `atoms` points.
    Finite { atoms: usize, members: Vec<Vec<f64>> },
    /// Every combination of per-atom values.
    FiniteProduct { atom_values: Vec<Vec<f64>> },
    /// Sign thresholds over `atoms` ordered points.
    ThresholdGrid { atoms: usize },
    MonotoneGrid { cells: usize },
    LinearBall { dimension: usize, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EtaKind {
    Linear,
    Knots(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    TwoPoint { z: f64, eps0: f64, eta_x0: f64 },
    Threshold { t: f64, alpha: f64, z: f64 },
    Monotone { eta: EtaKind },
    /// Uniform over `atoms` ordered points, `eta = 1/2 -+ z` around atom `t * atoms`.
    DiscreteThreshold { atoms: usize, t: f64, z: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSpec {
    pub variant: ThresholdVariant,
    pub c0: f64,
    pub scale: f64,
    pub delta: f64,
    pub vc: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub eps: Vec<f64>,
    pub active_u: u64,
    pub max_n: u64,
    pub max_m: u64,
    /// Rebuild a two-point problem with `eps0 = eps` for every target.
    pub bind_eps0: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub loss_kind: LossKind,
    /// `None` means the class bound.
    pub f_bar: Option<f64>,
    pub class: ClassSpec,
    pub problem: ProblemSpec,
    pub threshold: ThresholdSpec,
    pub u: u64,
    pub n: u64,
    pub m: u64,
    pub method: Method,
    pub trials: u64,
    pub seed: u64,
    pub eps: Option<f64>,
    pub dis_mass_samples: usize,
    pub sweep: Option<SweepSpec>,
    pub theta_r0: f64,
    pub oracle_m: usize,
    pub oracle_eps: Vec<f64>,
    pub output: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub timing: bool,
    /// Every resolved setting, in reading order, as written to outputs.
    pub provenance: Vec<(String, String)>,
    lines: HashMap<String, usize>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        text.parse()
    }

    /// A validation error for `key`, located in the source when possible.
    pub fn invalid(&self, key: &str, message: impl fmt::Display) -> ConfigError {
        ConfigError::Invalid {
            key: key.to_string(),
            line: self.lines.get(key).copied(),
            message: message.to_string(),
        }
    }

    /// Replaces a provenance entry, so overrides stay visible in outputs.
    fn record(&mut self, key: &str, value: String) {
        match self.provenance.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.provenance.push((key.to_string(), value)),
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.record("run.seed", seed.to_string());
    }

    pub fn set_trials(&mut self, trials: u64) -> Result<(), ConfigError> {
        if trials == 0 {
            return Err(ConfigError::Invalid {
                key: "run.trials".into(),
                line: None,
                message: "must be at least 1".into(),
            });
        }
        self.trials = trials;
        self.record("run.trials", trials.to_string());
        Ok(())
    }

    pub fn set_output(&mut self, path: PathBuf) {
        self.record("output.path", path.display().to_string());
        self.output = Some(path);
    }

    /// Copy with a different two-point `eps0`; other problems are unchanged.
    pub fn with_eps0(&self, eps0: f64) -> Self {
        let mut next = self.clone();
        if let ProblemSpec::TwoPoint { eps0: e, .. } = &mut next.problem {
            *e = eps0;
            next.record("problem.two_point.eps0", eps0.to_string());
        }
        next
    }
}

impl FromStr for ExperimentConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let doc = Doc::parse(text)?;
        let config = build(&doc)?;
        doc.finish()?;
        Ok(config)
    }
}

/// A flattened document that tracks which keys were read.
struct Doc {
    values: BTreeMap<String, Value>,
    lines: HashMap<String, usize>,
    used: RefCell<BTreeSet<String>>,
    provenance: RefCell<Vec<(String, String)>>,
}

impl Doc {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax {
            line: e.span().map_or(1, |s| line_at(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values);
        Ok(Self {
            values,
            lines: key_lines(text),
            used: RefCell::default(),
            provenance: RefCell::default(),
        })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.lines.get(key).copied()
    }

    fn invalid(&self, key: &str, message: impl fmt::Display) -> ConfigError {
        ConfigError::Invalid {
            key: key.to_string(),
            line: self.line(key),
            message: message.to_string(),
        }
    }

    fn raw(&self, key: &str) -> Option<&Value> {
        self.used.borrow_mut().insert(key.to_string());
        self.values.get(key)
    }

    fn echo(&self, key: &str, value: impl fmt::Display) {
        self.provenance.borrow_mut().push((key.to_string(), value.to_string()));
    }

    fn get<T: FromValue + fmt::Display>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        let Some(value) = self.raw(key) else {
            return Ok(None);
        };
        let parsed = T::from_value(value).map_err(|m| self.invalid(key, m))?;
        self.echo(key, &parsed);
        Ok(Some(parsed))
    }

    fn or<T: FromValue + fmt::Display + Clone>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.echo(key, &default);
                Ok(default)
            }
        }
    }

    fn required<T: FromValue + fmt::Display>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?.ok_or_else(|| self.invalid(key, "missing required key"))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(value) = self.raw(key) else {
            return Ok(None);
        };
        let list = float_list(value).map_err(|m| self.invalid(key, m))?;
        self.echo(key, format_list(&list));
        Ok(Some(list))
    }

    fn matrix(&self, key: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
        let value = self.raw(key).ok_or_else(|| self.invalid(key, "missing required key"))?;
        let rows = value
            .as_array()
            .ok_or_else(|| self.invalid(key, "expected an array of arrays"))?
            .iter()
            .map(float_list)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|m| self.invalid(key, m))?;
        self.echo(key, format!("[{}]", rows.iter().map(|r| format_list(r)).collect::<Vec<_>>().join(", ")));
        Ok(rows)
    }

    /// Errors on the first key that no getter asked for.
    fn finish(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.values.keys().find(|k| !used.contains(*k)) {
            None => Ok(()),
            Some(key) => {
                let section = key.rsplit_once('.').map(|(s, _)| s).unwrap_or("");
                let siblings: Vec<&str> = used
                    .iter()
                    .filter(|u| u.rsplit_once('.').map(|(s, _)| s) == Some(section))
                    .map(|u| u.as_str())
                    .collect();
                let hint = if siblings.is_empty() {
                    String::new()
                } else {
                    format!(" (known here: {})", siblings.join(", "))
                };
                Err(ConfigError::UnknownKey {
                    key: key.clone(),
                    line: self.line(key).unwrap_or(1),
                    hint,
                })
            }
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(inner) => flatten(&key, inner, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of every `key = value` assignment, resolved against section headers.
fn key_lines(text: &str) -> HashMap<String, usize> {
    let mut section = String::new();
    let mut lines = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            section = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        if line.starts_with('#') {
            continue;
        }
        let lhs: String = lhs.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
        let key = if section.is_empty() { lhs } else { format!("{section}.{lhs}") };
        lines.entry(key).or_insert(i + 1);
    }
    lines
}

trait FromValue: Sized {
    fn from_value(v: &Value) -> Result<Self, String>;
}

impl FromValue for f64 {
    fn from_value(v: &Value) -> Result<Self, String> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            other => Err(format!("expected a number, got {}", other.type_str())),
        }
    }
}

impl FromValue for u64 {
    fn from_value(v: &Value) -> Result<Self, String> {
        match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            other => Err(format!("expected a nonnegative integer, got {other}")),
        }
    }
}

impl FromValue for bool {
    fn from_value(v: &Value) -> Result<Self, String> {
        v.as_bool().ok_or_else(|| format!("expected true or false, got {v}"))
    }
}

impl FromValue for String {
    fn from_value(v: &Value) -> Result<Self, String> {
        v.as_str().map(str::to_string).ok_or_else(|| format!("expected a string, got {v}"))
    }
}

fn float_list(v: &Value) -> Result<Vec<f64>, String> {
    v.as_array()
        .ok_or_else(|| format!("expected an array, got {}", v.type_str()))?
        .iter()
        .map(f64::from_value)
        .collect()
}

fn format_list(values: &[f64]) -> String {
    format!("[{}]", values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))
}

fn count(doc: &Doc, key: &str, default: u64) -> Result<usize, ConfigError> {
    let v = doc.or(key, default)?;
    usize::try_from(v).map_err(|_| doc.invalid(key, "too large"))
}

fn parse_enum<T: FromStr<Err = sural_core::Error>>(doc: &Doc, key: &str, default: &str) -> Result<T, ConfigError> {
    let raw: String = doc.or(key, default.to_string())?;
    raw.parse().map_err(|e| match e {
        sural_core::Error::InvalidParameter { reason, .. } => doc.invalid(key, reason),
        other => doc.invalid(key, other),
    })
}

fn build(doc: &Doc) -> Result<ExperimentConfig, ConfigError> {
    let loss_kind: LossKind = parse_enum(doc, "loss.kind", "quadratic")?;
    let f_bar = doc.get::<f64>("loss.f_bar")?;
    if let Some(f) = f_bar {
        if !(f > 0.0 && f.is_finite()) {
            return Err(doc.invalid("loss.f_bar", "must be positive"));
        }
    }

    let class_kind: String = doc.required("class.kind")?;
    let class = match class_kind.as_str() {
        "finite" => ClassSpec::Finite {
            atoms: count(doc, "class.atoms", 0)?,
            members: doc.matrix("class.members")?,
        },
        "finite_product" => ClassSpec::FiniteProduct {
            atom_values: doc.matrix("class.atom_values")?,
        },
        "threshold_grid" => ClassSpec::ThresholdGrid {
            atoms: count(doc, "class.atoms", 100)?,
        },
        "monotone_grid" => ClassSpec::MonotoneGrid {
            cells: count(doc, "class.cells", 64)?,
        },
        "linear_ball" => ClassSpec::LinearBall {
            dimension: count(doc, "class.dimension", 2)?,
            radius: doc.or("class.radius", 1.0)?,
        },
        other => {
            return Err(doc.invalid(
                "class.kind",
                format!("unknown class `{other}` (finite, finite_product, threshold_grid, monotone_grid, linear_ball)"),
            ))
        }
    };

    let problem_kind: String = doc.required("problem.kind")?;
    let problem = match problem_kind.as_str() {
        "two_point" => ProblemSpec::TwoPoint {
            z: doc.or("problem.two_point.z", 0.25)?,
            eps0: doc.or("problem.two_point.eps0", 0.1)?,
            eta_x0: doc.or("problem.two_point.eta_x0", 0.75)?,
        },
        "threshold" => ProblemSpec::Threshold {
            t: doc.or("problem.threshold.t", 0.5)?,
            alpha: doc.or("problem.threshold.alpha", 1.0)?,
            z: doc.or("problem.threshold.z", 0.25)?,
        },
        "monotone" => {
            let eta = match doc.raw("problem.monotone.eta") {
                None => {
                    doc.echo("problem.monotone.eta", "linear");
                    EtaKind::Linear
                }
                Some(Value::String(s)) if s == "linear" => {
                    doc.echo("problem.monotone.eta", "linear");
                    EtaKind::Linear
                }
                Some(v @ Value::Array(_)) => {
                    let knots = float_list(v).map_err(|m| doc.invalid("problem.monotone.eta", m))?;
                    doc.echo("problem.monotone.eta", format_list(&knots));
                    EtaKind::Knots(knots)
                }
                Some(other) => {
                    return Err(doc.invalid(
                        "problem.monotone.eta",
                        format!("expected \"linear\" or an array of knots, got {other}"),
                    ))
                }
            };
            ProblemSpec::Monotone { eta }
        }
        "discrete_threshold" => ProblemSpec::DiscreteThreshold {
            atoms: count(doc, "problem.discrete_threshold.atoms", 100)?,
            t: doc.or("problem.discrete_threshold.t", 0.5)?,
            z: doc.or("problem.discrete_threshold.z", 0.25)?,
        },
        other => {
            return Err(doc.invalid(
                "problem.kind",
                format!("unknown problem `{other}` (two_point, threshold, monotone, discrete_threshold)"),
            ))
        }
    };

    let threshold = ThresholdSpec {
        variant: parse_enum(doc, "threshold.variant", "rademacher")?,
        c0: doc.or("threshold.c0", 1.0)?,
        scale: doc.or("threshold.scale", 1.0)?,
        delta: doc.or("threshold.delta", 0.1)?,
        vc: match doc.get::<u64>("threshold.vc")? {
            None => None,
            Some(v) => Some(u32::try_from(v).map_err(|_| doc.invalid("threshold.vc", "too large"))?),
        },
    };
    if !(threshold.delta > 0.0 && threshold.delta < 0.25) {
        return Err(doc.invalid("threshold.delta", "must lie in (0, 1/4)"));
    }
    if !(threshold.c0 > 0.0) {
        return Err(doc.invalid("threshold.c0", "must be positive"));
    }
    if !(threshold.scale >= 0.0) {
        return Err(doc.invalid("threshold.scale", "must be nonnegative"));
    }

    let u = doc.or("budget.u", 4096u64)?;
    let n = doc.or("budget.n", 256u64)?;
    let m = doc.or("budget.m", 256u64)?;

    let method_name: String = doc.or("run.method", "active".to_string())?;
    let method = match method_name.as_str() {
        "active" => Method::Active,
        "passive" => Method::Passive,
        "both" => Method::Both,
        other => return Err(doc.invalid("run.method", format!("unknown method `{other}` (active, passive, both)"))),
    };
    let trials = doc.or("run.trials", 1u64)?;
    if trials == 0 {
        return Err(doc.invalid("run.trials", "must be at least 1"));
    }
    let seed = doc.or("run.seed", 0u64)?;
    let eps = doc.get::<f64>("run.eps")?;
    if let Some(e) = eps {
        if !(e > 0.0 && e < 1.0) {
            return Err(doc.invalid("run.eps", "must lie in (0, 1)"));
        }
    }
    let dis_mass_samples = count(doc, "run.dis_mass_samples", 10_000)?;

    let sweep = match doc.list("sweep.eps")? {
        None => None,
        Some(list) => {
            if list.is_empty() {
                return Err(doc.invalid("sweep.eps", "needs at least one target"));
            }
            if list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
                return Err(doc.invalid("sweep.eps", "targets must lie in (0, 1)"));
            }
            if list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(doc.invalid("sweep.eps", "targets must be strictly decreasing"));
            }
            Some(SweepSpec {
                eps: list,
                active_u: doc.or("sweep.active_u", 1u64 << 16)?,
                max_n: doc.or("sweep.max_n", 1u64 << 12)?,
                max_m: doc.or("sweep.max_m", 1u64 << 14)?,
                bind_eps0: doc.or("sweep.bind_eps0", true)?,
            })
        }
    };

    let theta_r0 = doc.or("theta.r0", 0.01)?;
    if !(theta_r0 > 0.0) {
        return Err(doc.invalid("theta.r0", "must be positive"));
    }
    let oracle_m = count(doc, "oracle.m", 3)?;
    let oracle_eps = doc.list("oracle.eps")?.unwrap_or_else(|| vec![0.05]);

    let output = doc.get::<String>("output.path")?.map(PathBuf::from);
    let svg = doc.get::<String>("output.svg")?.map(PathBuf::from);
    let timing = doc.or("output.timing", false)?;

    Ok(ExperimentConfig {
        loss_kind,
        f_bar,
        class,
        problem,
        threshold,
        u,
        n,
        m,
        method,
        trials,
        seed,
        eps,
        dis_mass_samples,
        sweep,
        theta_r0,
        oracle_m,
        oracle_eps,
        output,
        svg,
        timing,
        provenance: doc.provenance.take(),
        lines: doc.lines.clone(),
    })
}
