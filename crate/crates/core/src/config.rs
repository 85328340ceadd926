//! TOML experiment files.
//!
//! ```toml
//! [experiment]
//! opt_c = "prox"          # sgd | prox | scaf | nova
//! opt_s = "yogi"          # sgd | adam | adagrad | yogi
//! num_clients = 100
//! sample_ratio = 0.1
//! rounds = 2000
//! eval_every = 100
//!
//! [data]
//! source = "synthetic"    # or "csv" with path / label_column
//! alpha = 0.1
//!
//! [grid]                  # optional: turns the file into a grid run
//! opt_c = ["sgd", "prox"]
//! opt_s = ["sgd", "yogi"]
//! seeds = [0, 1, 2]
//! checkpoints = [100, 200]
//! ```
//!
//! Unset hyperparameters take the reference values: `E = 1`, `B = 32`,
//! `lr = 0.01`, momentum `0.9`, weight decay `1e-4`, `mu = 0.005`,
//! `beta1 = 0.9`, `beta2 = 0.99`, and a server learning rate of `1` for sgd
//! or `0.005` for the adaptive optimizers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::client::{ClientConfig, ClientOpt, ScafOption};
use crate::data::{BatchSize, ColumnRef, CsvSchema};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{Activation, ModelKind};
use crate::orchestrator::{DataConfig, DataSource, ExperimentConfig, ModelConfig};
use crate::server::{ServerConfig, ServerOpt};

pub const DEFAULT_NUM_CLIENTS: usize = 100;
pub const DEFAULT_SAMPLE_RATIO: f64 = 0.1;
pub const DEFAULT_ROUNDS: usize = 2000;
pub const DEFAULT_EVAL_EVERY: usize = 100;
pub const DEFAULT_LOCAL_EPOCHS: usize = 1;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LR: f64 = 0.01;
pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-4;
pub const DEFAULT_PROX_MU: f64 = 0.005;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.99;
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_c: Option<ClientOpt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_s: Option<ServerOpt>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_clients: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_wall_time: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<BatchSize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prox_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaf_option: Option<ScafOption>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server_lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal_eq1: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ModelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: SourceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_class: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_column: Option<ColumnRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<ColumnRef>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub has_header: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_c: Option<Vec<ClientOpt>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_s: Option<Vec<ServerOpt>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
}

/// Raw file contents, before defaults and validation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub client: ClientSection,
    #[serde(default)]
    pub server: ServerSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedConfig {
    Experiment(ExperimentConfig),
    Grid(GridSpec),
}

/// Source position lookup for validation messages.
struct Locator<'a> {
    path: &'a Path,
    text: &'a str,
}

impl Locator<'_> {
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = "";
        for (i, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim();
                if key.is_empty() && current == section {
                    return Some(i + 1);
                }
                continue;
            }
            if current == section && !key.is_empty() {
                if let Some((k, _)) = line.split_once('=') {
                    if k.trim() == key {
                        return Some(i + 1);
                    }
                }
            }
        }
        None
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> Error {
        let what = if key.is_empty() { section.to_string() } else { format!("{section}.{key}") };
        Error::Config {
            path: self.path.to_path_buf(),
            line: self.line_of(section, key).or_else(|| self.line_of(section, "")),
            message: format!("{what}: {}", message.into()),
        }
    }
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses a config from text; `path` is used for diagnostics and to resolve
/// relative CSV paths.
pub fn parse_config_str(text: &str, path: &Path) -> Result<ParsedConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_at(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    resolve(&file, &Locator { path, text })
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ParsedConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    parse_config_str(&text, path)
}

fn positive(loc: &Locator<'_>, section: &str, key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(loc.err(section, key, format!("must be positive, got {v}")))
    }
}

fn non_negative(loc: &Locator<'_>, section: &str, key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(loc.err(section, key, format!("must be >= 0, got {v}")))
    }
}

fn at_least_one(loc: &Locator<'_>, section: &str, key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(loc.err(section, key, "must be >= 1"))
    }
}

fn unit_interval(loc: &Locator<'_>, section: &str, key: &str, v: f64) -> Result<f64> {
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(loc.err(section, key, format!("must lie in [0, 1), got {v}")))
    }
}

fn resolve_data(data: &DataSection, loc: &Locator<'_>) -> Result<DataConfig> {
    let source = match data.source {
        SourceKind::Synthetic => {
            for (key, set) in [
                ("path", data.path.is_some()),
                ("label_column", data.label_column.is_some()),
                ("feature_columns", data.feature_columns.is_some()),
                ("has_header", data.has_header.is_some()),
            ] {
                if set {
                    return Err(loc.err("data", key, "only valid with source = \"csv\""));
                }
            }
            let num_classes = data.num_classes.unwrap_or(10);
            if num_classes < 2 {
                return Err(loc.err("data", "num_classes", "must be >= 2"));
            }
            DataSource::Synthetic {
                num_classes,
                dim: at_least_one(loc, "data", "dim", data.dim.unwrap_or(20))?,
                samples_per_class: at_least_one(
                    loc,
                    "data",
                    "samples_per_class",
                    data.samples_per_class.unwrap_or(200),
                )?,
                spread: positive(loc, "data", "spread", data.spread.unwrap_or(1.0))?,
            }
        }
        SourceKind::Csv => {
            for (key, set) in [
                ("num_classes", data.num_classes.is_some()),
                ("dim", data.dim.is_some()),
                ("samples_per_class", data.samples_per_class.is_some()),
                ("spread", data.spread.is_some()),
            ] {
                if set {
                    return Err(loc.err("data", key, "only valid with source = \"synthetic\""));
                }
            }
            let rel = data.path.clone().ok_or_else(|| loc.err("data", "path", "required for csv data"))?;
            let path = match loc.path.parent() {
                Some(dir) if rel.is_relative() && !dir.as_os_str().is_empty() => dir.join(rel),
                _ => rel,
            };
            let label =
                data.label_column.clone().ok_or_else(|| loc.err("data", "label_column", "required for csv data"))?;
            DataSource::Csv {
                path,
                schema: CsvSchema {
                    label,
                    features: data.feature_columns.clone(),
                    has_header: data.has_header.unwrap_or(false),
                },
            }
        }
    };
    Ok(DataConfig {
        source,
        alpha: positive(loc, "data", "alpha", data.alpha.unwrap_or(DEFAULT_ALPHA))?,
        test_fraction: unit_interval(
            loc,
            "data",
            "test_fraction",
            data.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION),
        )?,
        seed: data.seed,
    })
}

fn resolve(file: &ConfigFile, loc: &Locator<'_>) -> Result<ParsedConfig> {
    let ex = &file.experiment;
    let is_grid = file.grid.is_some();
    let opt_c = match ex.opt_c {
        Some(c) => c,
        None if is_grid => ClientOpt::Sgd,
        None => return Err(loc.err("experiment", "opt_c", "missing required field")),
    };
    let opt_s = match ex.opt_s {
        Some(s) => s,
        None if is_grid => ServerOpt::Sgd,
        None => return Err(loc.err("experiment", "opt_s", "missing required field")),
    };
    let data = file.data.as_ref().ok_or_else(|| Error::Config {
        path: loc.path.to_path_buf(),
        line: None,
        message: "missing required section [data]".into(),
    })?;

    let num_clients = at_least_one(loc, "experiment", "num_clients", ex.num_clients.unwrap_or(DEFAULT_NUM_CLIENTS))?;
    let sample_ratio = ex.sample_ratio.unwrap_or(DEFAULT_SAMPLE_RATIO);
    if !(sample_ratio > 0.0 && sample_ratio <= 1.0) {
        return Err(loc.err("experiment", "sample_ratio", format!("must lie in (0, 1], got {sample_ratio}")));
    }
    if sample_ratio * (num_clients as f64) < 1.0 {
        return Err(loc.err(
            "experiment",
            "sample_ratio",
            format!("selects no client: floor({sample_ratio} * {num_clients}) = 0"),
        ));
    }

    let c = &file.client;
    let client = ClientConfig {
        opt_c,
        local_epochs: at_least_one(loc, "client", "local_epochs", c.local_epochs.unwrap_or(DEFAULT_LOCAL_EPOCHS))?,
        batch_size: match c.batch_size.unwrap_or(BatchSize::Fixed(DEFAULT_BATCH_SIZE)) {
            BatchSize::Fixed(0) => return Err(loc.err("client", "batch_size", "must be >= 1 or \"full\"")),
            b => b,
        },
        lr: positive(loc, "client", "lr", c.lr.unwrap_or(DEFAULT_LR))?,
        momentum: unit_interval(loc, "client", "momentum", c.momentum.unwrap_or(DEFAULT_MOMENTUM))?,
        weight_decay: non_negative(loc, "client", "weight_decay", c.weight_decay.unwrap_or(DEFAULT_WEIGHT_DECAY))?,
        prox_mu: non_negative(loc, "client", "prox_mu", c.prox_mu.unwrap_or(DEFAULT_PROX_MU))?,
        scaf_option: c.scaf_option.unwrap_or_default(),
    };

    let s = &file.server;
    let server_lr = s.server_lr.map(|v| positive(loc, "server", "server_lr", v)).transpose()?;
    let server = ServerConfig {
        opt_s,
        server_lr: server_lr.unwrap_or(opt_s.default_lr()),
        beta1: unit_interval(loc, "server", "beta1", s.beta1.unwrap_or(DEFAULT_BETA1))?,
        beta2: unit_interval(loc, "server", "beta2", s.beta2.unwrap_or(DEFAULT_BETA2))?,
        eps: positive(loc, "server", "eps", s.eps.unwrap_or(DEFAULT_EPS))?,
        literal_eq1: s.literal_eq1.unwrap_or(false),
    };

    let m = &file.model;
    let kind = m.kind.unwrap_or(ModelKind::Logistic);
    if kind == ModelKind::Logistic && (m.hidden_dim.is_some() || m.activation.is_some()) {
        return Err(loc.err("model", "", "hidden_dim and activation only apply to kind = \"mlp1\""));
    }
    let model = ModelConfig {
        kind,
        hidden_dim: match kind {
            ModelKind::Logistic => 0,
            ModelKind::Mlp1 => at_least_one(loc, "model", "hidden_dim", m.hidden_dim.unwrap_or(32))?,
        },
        activation: m.activation.unwrap_or(Activation::Relu),
    };

    let rounds = ex.rounds.unwrap_or(DEFAULT_ROUNDS);
    let cfg = ExperimentConfig {
        num_clients,
        sample_ratio,
        rounds,
        eval_every: at_least_one(loc, "experiment", "eval_every", ex.eval_every.unwrap_or(DEFAULT_EVAL_EVERY))?,
        seed: ex.seed.unwrap_or(0),
        client,
        server,
        model,
        data: resolve_data(data, loc)?,
        threads: at_least_one(loc, "experiment", "threads", ex.threads.unwrap_or(1))?,
        record_wall_time: ex.record_wall_time.unwrap_or(false),
    };
    cfg.validate().map_err(|e| loc.err("experiment", "", e.to_string()))?;

    let Some(g) = &file.grid else {
        return Ok(ParsedConfig::Experiment(cfg));
    };
    let opt_c_set = g.opt_c.clone().unwrap_or_else(|| ClientOpt::ALL.to_vec());
    let opt_s_set = g.opt_s.clone().unwrap_or_else(|| ServerOpt::ALL.to_vec());
    let seeds = g.seeds.clone().unwrap_or_else(|| vec![cfg.seed]);
    let checkpoints =
        g.checkpoints.clone().unwrap_or_else(|| (1..=rounds / cfg.eval_every).map(|k| k * cfg.eval_every).collect());
    for (key, empty) in [("opt_c", opt_c_set.is_empty()), ("opt_s", opt_s_set.is_empty()), ("seeds", seeds.is_empty())]
    {
        if empty {
            return Err(loc.err("grid", key, "must not be empty"));
        }
    }
    let spec = GridSpec { base: cfg, opt_c_set, opt_s_set, seeds, checkpoints, server_lr };
    spec.validate().map_err(|e| loc.err("grid", "checkpoints", e.to_string()))?;
    Ok(ParsedConfig::Grid(spec))
}

fn data_section(d: &DataConfig) -> DataSection {
    let mut out = DataSection {
        source: SourceKind::Synthetic,
        num_classes: None,
        dim: None,
        samples_per_class: None,
        spread: None,
        path: None,
        label_column: None,
        feature_columns: None,
        has_header: None,
        alpha: Some(d.alpha),
        test_fraction: Some(d.test_fraction),
        seed: d.seed,
    };
    match &d.source {
        DataSource::Synthetic { num_classes, dim, samples_per_class, spread } => {
            out.num_classes = Some(*num_classes);
            out.dim = Some(*dim);
            out.samples_per_class = Some(*samples_per_class);
            out.spread = Some(*spread);
        }
        DataSource::Csv { path, schema } => {
            out.source = SourceKind::Csv;
            out.path = Some(path.clone());
            out.label_column = Some(schema.label.clone());
            out.feature_columns = schema.features.clone();
            out.has_header = Some(schema.has_header);
        }
    }
    out
}

impl ConfigFile {
    /// Fully explicit file for a resolved experiment. CSV paths are written
    /// as resolved, so re-parse from the same directory or use absolute paths.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: ExperimentSection {
                opt_c: Some(cfg.client.opt_c),
                opt_s: Some(cfg.server.opt_s),
                num_clients: Some(cfg.num_clients),
                sample_ratio: Some(cfg.sample_ratio),
                rounds: Some(cfg.rounds),
                eval_every: Some(cfg.eval_every),
                seed: Some(cfg.seed),
                threads: Some(cfg.threads),
                record_wall_time: Some(cfg.record_wall_time),
            },
            client: ClientSection {
                local_epochs: Some(cfg.client.local_epochs),
                batch_size: Some(cfg.client.batch_size),
                lr: Some(cfg.client.lr),
                momentum: Some(cfg.client.momentum),
                weight_decay: Some(cfg.client.weight_decay),
                prox_mu: Some(cfg.client.prox_mu),
                scaf_option: Some(cfg.client.scaf_option),
            },
            server: ServerSection {
                server_lr: Some(cfg.server.server_lr),
                beta1: Some(cfg.server.beta1),
                beta2: Some(cfg.server.beta2),
                eps: Some(cfg.server.eps),
                literal_eq1: Some(cfg.server.literal_eq1),
            },
            model: ModelSection {
                kind: Some(cfg.model.kind),
                hidden_dim: (cfg.model.kind == ModelKind::Mlp1).then_some(cfg.model.hidden_dim),
                activation: (cfg.model.kind == ModelKind::Mlp1).then_some(cfg.model.activation),
            },
            data: Some(data_section(&cfg.data)),
            grid: None,
        }
    }

    pub fn from_grid(spec: &GridSpec) -> Self {
        let mut file = Self::from_experiment(&spec.base);
        file.server.server_lr = spec.server_lr;
        file.grid = Some(GridSection {
            opt_c: Some(spec.opt_c_set.clone()),
            opt_s: Some(spec.opt_s_set.clone()),
            seeds: Some(spec.seeds.clone()),
            checkpoints: Some(spec.checkpoints.clone()),
        });
        file
    }

    pub fn from_parsed(parsed: &ParsedConfig) -> Self {
        match parsed {
            ParsedConfig::Experiment(cfg) => Self::from_experiment(cfg),
            ParsedConfig::Grid(spec) => Self::from_grid(spec),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config sections serialize to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedConfig> {
        parse_config_str(text, Path::new("test.toml"))
    }

    fn experiment(text: &str) -> ExperimentConfig {
        match parse(text).unwrap() {
            ParsedConfig::Experiment(cfg) => cfg,
            ParsedConfig::Grid(_) => panic!("expected a single experiment"),
        }
    }

    const MINIMAL: &str = "[experiment]\nopt_c = \"prox\"\nopt_s = \"yogi\"\n\n[data]\nsource = \"synthetic\"\n";

    #[test]
    fn minimal_file_gets_reference_defaults() {
        let cfg = experiment(MINIMAL);
        assert_eq!(cfg.client.opt_c, ClientOpt::Prox);
        assert_eq!(cfg.server.opt_s, ServerOpt::Yogi);
        assert_eq!(cfg.num_clients, 100);
        assert_eq!(cfg.sample_ratio, 0.1);
        assert_eq!(cfg.rounds, 2000);
        assert_eq!(cfg.client.local_epochs, 1);
        assert_eq!(cfg.client.batch_size, BatchSize::Fixed(32));
        assert_eq!(cfg.client.lr, 0.01);
        assert_eq!(cfg.client.momentum, 0.9);
        assert_eq!(cfg.client.weight_decay, 1e-4);
        assert_eq!(cfg.client.prox_mu, 0.005);
        assert_eq!(cfg.server.server_lr, 0.005);
        assert_eq!(cfg.server.beta1, 0.9);
        assert_eq!(cfg.server.beta2, 0.99);
        assert_eq!(cfg.client.scaf_option, ScafOption::I);
        assert_eq!(cfg.data.alpha, 0.1);
    }

    #[test]
    fn sgd_server_defaults_to_unit_lr() {
        let cfg = experiment(&MINIMAL.replace("yogi", "sgd"));
        assert_eq!(cfg.server.server_lr, 1.0);
    }

    #[test]
    fn zero_sample_ratio_rejected_with_line() {
        let text = MINIMAL.replace("[data]", "sample_ratio = 0.0\n\n[data]");
        match parse(&text).unwrap_err() {
            Error::Config { line, message, .. } => {
                assert_eq!(line, Some(5));
                assert!(message.contains("sample_ratio"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wrong_token_lists_valid_ones() {
        let err = parse(&MINIMAL.replace("\"prox\"", "\"scaffold\"")).unwrap_err().to_string();
        for token in ["sgd", "prox", "scaf", "nova"] {
            assert!(err.contains(token), "{err}");
        }
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse(&MINIMAL.replace("[data]", "learning_rate = 3\n[data]")).unwrap_err().to_string();
        assert!(err.contains("learning_rate") && err.contains("line 5"), "{err}");
    }

    #[test]
    fn missing_fields_rejected() {
        assert!(parse("[data]\nsource = \"synthetic\"\n").unwrap_err().to_string().contains("opt_c"));
        assert!(parse("[experiment]\nopt_c = \"sgd\"\nopt_s = \"sgd\"\n").unwrap_err().to_string().contains("[data]"));
        let csv = MINIMAL.replace("synthetic", "csv");
        assert!(parse(&csv).unwrap_err().to_string().contains("path"));
    }

    #[test]
    fn ratio_that_selects_nobody_rejected() {
        let text = MINIMAL.replace("[data]", "num_clients = 5\nsample_ratio = 0.1\n[data]");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn full_batch_token() {
        let cfg = experiment(&format!("{MINIMAL}\n[client]\nbatch_size = \"full\"\n"));
        assert_eq!(cfg.client.batch_size, BatchSize::FULL);
        assert!(parse(&format!("{MINIMAL}\n[client]\nbatch_size = 0\n")).is_err());
        assert!(parse(&format!("{MINIMAL}\n[client]\nbatch_size = \"half\"\n")).is_err());
    }

    #[test]
    fn csv_paths_resolve_next_to_config() {
        let text = "[experiment]\nopt_c = \"sgd\"\nopt_s = \"sgd\"\n[data]\nsource = \"csv\"\npath = \"d.csv\"\nlabel_column = \"y\"\nhas_header = true\n";
        match parse_config_str(text, Path::new("/tmp/cfg/x.toml")).unwrap() {
            ParsedConfig::Experiment(cfg) => match cfg.data.source {
                DataSource::Csv { path, schema } => {
                    assert_eq!(path, Path::new("/tmp/cfg/d.csv"));
                    assert_eq!(schema.label, ColumnRef::Name("y".into()));
                }
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_defaults_and_validation() {
        let text =
            "[experiment]\nrounds = 10\neval_every = 5\n[data]\nsource = \"synthetic\"\n[grid]\nseeds = [1, 2]\n";
        match parse(text).unwrap() {
            ParsedConfig::Grid(g) => {
                assert_eq!(g.opt_c_set.len() * g.opt_s_set.len(), 16);
                assert_eq!(g.checkpoints, vec![5, 10]);
                assert_eq!(g.seeds, vec![1, 2]);
                assert_eq!(g.server_lr, None);
            }
            other => panic!("{other:?}"),
        }
        let bad = text.replace("seeds = [1, 2]", "checkpoints = [7]");
        assert!(parse(&bad).unwrap_err().to_string().contains("checkpoints"));
        let empty = text.replace("seeds = [1, 2]", "opt_c = []");
        assert!(parse(&empty).is_err());
    }

    #[test]
    fn serialize_parse_fixpoint() {
        let texts = [
            MINIMAL.to_string(),
            format!("{MINIMAL}[model]\nkind = \"mlp1\"\nhidden_dim = 8\nactivation = \"tanh\"\n[client]\nbatch_size = \"full\"\nscaf_option = \"II\"\n"),
            "[experiment]\nrounds = 10\neval_every = 5\n[data]\nsource = \"synthetic\"\nseed = 4\n[grid]\nopt_s = [\"yogi\"]\n".to_string(),
        ];
        for text in texts {
            let first = parse(&text).unwrap();
            let again = parse(&ConfigFile::from_parsed(&first).to_toml()).unwrap();
            assert_eq!(first, again);
        }
    }
}
