//! Experiment configuration.
//!
//! Two input syntaxes map onto the same tree:
//!
//! ```text
//! # flat key-value text, nested keys dotted
//! regime = XDC
//! k = 16
//! schedule.total_epochs = 30
//! eval.fc_lrs = [0.001, 0.01, 0.04]
//! ```
//!
//! or the equivalent JSON object. Keys not set keep the defaults listed on
//! [`ExperimentConfig::default`]; unknown keys are rejected.
//!
//! | key | default |
//! |-----|---------|
//! | `regime` | `XDC` |
//! | `k` | 16 |
//! | `run_seed` | 0 |
//! | `max_dc_iterations` | 6 |
//! | `agreement_stop` | 0.95 |
//! | `val_fraction` | 0.1 |
//! | `output_dir` | `runs/default` |
//! | `data.path` | unset (generate) |
//! | `data.generator.*` | 10 classes × 200, d_visual 32, d_audio 24, latent 8, shared 1.0, privates 0.5, σ 0.3 |
//! | `encoder.visual_hidden`, `encoder.audio_hidden` | `[64, 32]` |
//! | `schedule.*` | es 2048, bs 32, lr 0.01, we/se/te 10/10/30, γ 0.01, wd 1e-4, momentum 0.9, early stop after 3 rises |
//! | `clustering.*` | max_iters 100, tol 1e-6, n_init 3, normalize_all false, pca_dim 0 |
//! | `eval.schedule.*` | es 1600, bs 32, we/se/te 2/2/8, γ 0.01, wd 0.005, no early stop |
//! | `eval.full_lrs` | 0.001, 0.002, 0.004, 0.006, 0.008, 0.01 |
//! | `eval.fc_lrs` | `full_lrs` plus 0.02, 0.04 |
//! | `eval.test_fraction` | 0.2 |
//! | `eval.split_seed` | 0 |
//! | `eval.exemplars` | 10 |

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::clustering::ClusteringOptions;
use crate::error::{Error, Result};
use crate::nn::TrainingSchedule;
use crate::regime::Regime;
use crate::synthdata::GeneratorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// Dataset file; when unset the generator runs.
    pub path: Option<String>,
    pub generator: GeneratorSpec,
}

/// Hidden widths of each body after the raw input width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderShapes {
    pub visual_hidden: Vec<usize>,
    pub audio_hidden: Vec<usize>,
}

impl EncoderShapes {
    pub fn hidden(&self, modality: crate::nn::Modality) -> &[usize] {
        match modality {
            crate::nn::Modality::Visual => &self.visual_hidden,
            crate::nn::Modality::Audio => &self.audio_hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub schedule: TrainingSchedule,
    /// Base rates cross-validated for full finetuning.
    pub full_lrs: Vec<f64>,
    /// Base rates cross-validated for the linear probe.
    pub fc_lrs: Vec<f64>,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Nearest-to-centroid samples listed per cluster.
    pub exemplars: usize,
}

pub const FULL_FINETUNE_LRS: [f64; 6] = [0.001, 0.002, 0.004, 0.006, 0.008, 0.01];
pub const FC_ONLY_LRS: [f64; 8] = [0.001, 0.002, 0.004, 0.006, 0.008, 0.01, 0.02, 0.04];

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            schedule: TrainingSchedule::finetune(),
            full_lrs: FULL_FINETUNE_LRS.to_vec(),
            fc_lrs: FC_ONLY_LRS.to_vec(),
            test_fraction: 0.2,
            split_seed: 0,
            exemplars: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub k: usize,
    pub run_seed: u64,
    pub max_dc_iterations: usize,
    /// Stop once every encoder's permutation-matched label agreement with the
    /// previous iteration reaches this value.
    pub agreement_stop: f64,
    /// Holdout share for the validation loss that drives early stopping.
    pub val_fraction: f64,
    pub output_dir: String,
    pub data: DataSource,
    pub encoder: EncoderShapes,
    pub schedule: TrainingSchedule,
    pub clustering: ClusteringOptions,
    pub eval: EvalSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regime: Regime::Xdc,
            k: 16,
            run_seed: 0,
            max_dc_iterations: 6,
            agreement_stop: 0.95,
            val_fraction: 0.1,
            output_dir: "runs/default".into(),
            data: DataSource {
                path: None,
                generator: GeneratorSpec {
                    samples_per_class: 200,
                    ..GeneratorSpec::default()
                },
            },
            encoder: EncoderShapes {
                visual_hidden: vec![64, 32],
                audio_hidden: vec![64, 32],
            },
            schedule: TrainingSchedule::default(),
            clustering: ClusteringOptions::default(),
            eval: EvalSettings::default(),
        }
    }
}

fn check_lrs(field: &str, lrs: &[f64]) -> Result<()> {
    if lrs.is_empty() {
        return Err(Error::field(field, "needs at least one learning rate"));
    }
    if lrs.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
        return Err(Error::field(field, "learning rates must be positive"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::field("k", "must be at least 2"));
        }
        if self.max_dc_iterations == 0 {
            return Err(Error::field("max_dc_iterations", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.agreement_stop) {
            return Err(Error::field("agreement_stop", "must lie in [0, 1]"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::field("val_fraction", "must lie in (0, 1)"));
        }
        if self.output_dir.is_empty() {
            return Err(Error::field("output_dir", "must not be empty"));
        }
        if self.data.path.as_deref() == Some("") {
            return Err(Error::field("data.path", "must not be empty when set"));
        }
        self.data.generator.validate("data.generator.")?;
        for (name, hidden) in [
            ("encoder.visual_hidden", &self.encoder.visual_hidden),
            ("encoder.audio_hidden", &self.encoder.audio_hidden),
        ] {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(Error::field(name, "needs at least one positive layer width"));
            }
        }
        self.schedule.validate("schedule.")?;
        self.clustering.kmeans.validate("clustering.")?;
        self.eval.schedule.validate("eval.schedule.")?;
        check_lrs("eval.full_lrs", &self.eval.full_lrs)?;
        check_lrs("eval.fc_lrs", &self.eval.fc_lrs)?;
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return Err(Error::field("eval.test_fraction", "must lie in (0, 1)"));
        }
        if self.eval.exemplars == 0 {
            return Err(Error::field("eval.exemplars", "must be at least 1"));
        }
        Ok(())
    }

    /// Parses key-value text or JSON (detected by a leading `{`), fills defaults and validates.
    pub fn parse_str(text: &str) -> Result<Self> {
        let overrides = if text.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(text)
                .map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
            if !v.is_object() {
                return Err(Error::parse("line 1", "top level must be an object"));
            }
            v
        } else {
            parse_key_values(text)?
        };
        Self::from_overrides(overrides)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Applies a tree of overrides on top of the defaults.
    pub fn from_overrides(overrides: Value) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default())?;
        merge(&mut tree, overrides, "")?;
        let config: Self = serde_path_to_error::deserialize(tree).map_err(|e| {
            let field = e.path().to_string();
            Error::field(field, e.into_inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Applies `dotted.key = value` overrides, e.g. from command-line flags.
    pub fn with_overrides<'a>(&self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut tree = Value::Object(Map::new());
        for (key, value) in pairs {
            insert_dotted(&mut tree, key, parse_scalar(value), key)?;
        }
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, tree, "")?;
        let config: Self = serde_path_to_error::deserialize(base)
            .map_err(|e| Error::field(e.path().to_string(), e.into_inner().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Canonical key-value rendering; parsing it yields an equal config.
    pub fn to_key_values(&self) -> String {
        let tree = serde_json::to_value(self).expect("config serialises");
        let mut lines = Vec::new();
        flatten(&tree, String::new(), &mut lines);
        let mut out = String::new();
        for (k, v) in lines {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (key, value) in o {
                let child = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                match b.get_mut(&key) {
                    Some(slot) => merge(slot, value, &child)?,
                    None => return Err(Error::field(child, "unknown key")),
                }
            }
            Ok(())
        }
        (Value::Object(_), other) => Err(Error::field(
            path,
            format!("expected a table, found {}", kind(&other)),
        )),
        (slot, value) => {
            *slot = value;
            Ok(())
        }
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "a list",
        Value::Object(_) => "a table",
    }
}

fn insert_dotted(tree: &mut Value, key: &str, value: Value, location: &str) -> Result<()> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::parse(location, format!("malformed key `{key}`")));
    }
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::parse(location, format!("`{}` is both a value and a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if map.insert((*part).to_string(), value).is_some() {
                return Err(Error::parse(location, format!("duplicate key `{key}`")));
            }
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    if let Some(inner) = raw.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
        let items: Vec<Value> = inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_scalar)
            .collect();
        return Value::Array(items);
    }
    if let Some(s) = raw
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
    {
        return Value::String(s.to_string());
    }
    match raw {
        "true" => return Value::Bool(true),
        "false" => return Value::Bool(false),
        "null" | "none" => return Value::Null,
        _ => {}
    }
    if let Ok(i) = raw.parse::<u64>() {
        return Value::from(i);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        if let Some(n) = serde_json::Number::from_f64(f) {
            return Value::Number(n);
        }
    }
    Value::String(raw.to_string())
}

fn parse_key_values(text: &str) -> Result<Value> {
    let mut tree = Value::Object(Map::new());
    for (i, line) in text.lines().enumerate() {
        let loc = format!("line {}", i + 1);
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| Error::parse(&loc, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::parse(&loc, "empty key"));
        }
        insert_dotted(&mut tree, key, parse_scalar(value), &loc)?;
    }
    Ok(tree)
}

fn render_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => format!("\"{s}\""),
        Value::Null => "null".into(),
        Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(render_scalar).collect();
            format!("[{}]", inner.join(", "))
        }
        other => other.to_string(),
    }
}

fn flatten(v: &Value, prefix: String, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(child, key, out);
            }
        }
        other => out.push((prefix, render_scalar(other))),
    }
}
