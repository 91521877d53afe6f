//! Resolved run configuration and the flag > env > file > default
//! resolution. Env handling is done by clap (flags beat env vars); a JSON
//! config file fills anything still unset before the built-in defaults
//! apply.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use graphfed::{ModelConfig, ModelKind, TrainConfig};
use serde::{Deserialize, Serialize};

/// Where the training loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    DistInproc,
    DistTcp,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Mode::Single),
            "dist-inproc" => Ok(Mode::DistInproc),
            "dist-tcp" => Ok(Mode::DistTcp),
            other => bail!("unknown mode `{other}` (single | dist-inproc | dist-tcp)"),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Single => "single",
            Mode::DistInproc => "dist-inproc",
            Mode::DistTcp => "dist-tcp",
        }
    }
}

/// Fully resolved configuration of one training run; serialized as
/// `config.json` into the run directory, and accepted back via
/// `--config` for exact re-runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub output: PathBuf,
    pub mode: Mode,
    pub model: ModelConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub include_approx_in_loss: bool,
    pub workers: usize,
    pub overlap: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub partition_file: Option<PathBuf>,
    /// Run in-process workers inline in id order (determinism reference).
    #[serde(default)]
    pub sequential: bool,
    /// Master bind address for dist-tcp.
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Wait for externally started `graphfed worker` processes instead of
    /// spawning loopback workers.
    #[serde(default)]
    pub external_workers: bool,
}

pub fn default_bind() -> String {
    "127.0.0.1:0".to_string()
}

impl RunConfig {
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            max_epochs: self.max_epochs,
            patience: self.patience,
            eval_every: self.eval_every,
            seed: self.seed,
            include_approx_in_loss: self.include_approx_in_loss,
            record_param_history: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// The model-related flag bundle shared by train / sweep / resilience.
#[derive(Debug, Clone, clap::Args)]
pub struct ModelArgs {
    /// Model kind: kw-gcn | graphsage
    #[arg(long, env = "GRAPHFED_MODEL")]
    pub model: Option<String>,
    /// Number of GCN layers (1 or 2)
    #[arg(long, env = "GRAPHFED_LAYERS")]
    pub layers: Option<usize>,
    #[arg(long, env = "GRAPHFED_HIDDEN_DIM")]
    pub hidden_dim: Option<usize>,
    #[arg(long, env = "GRAPHFED_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    /// GraphSAGE minibatch size
    #[arg(long, env = "GRAPHFED_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    /// GraphSAGE per-layer neighbor sample counts, e.g. `10,10`
    #[arg(long, env = "GRAPHFED_NEIGHBOR_SAMPLES")]
    pub neighbor_samples: Option<String>,
    #[arg(long, env = "GRAPHFED_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,
    /// Early stop after this many evaluations without val-F1 improvement
    #[arg(long, env = "GRAPHFED_PATIENCE")]
    pub patience: Option<usize>,
    #[arg(long, env = "GRAPHFED_EVAL_EVERY")]
    pub eval_every: Option<usize>,
    /// Count approximated vertices into the local loss (true | false)
    #[arg(long, env = "GRAPHFED_INCLUDE_APPROX")]
    pub include_approx_in_loss: Option<bool>,
}

impl ModelArgs {
    /// Overlay these flags on a base model configuration.
    pub fn apply_model(&self, base: Option<ModelConfig>) -> Result<ModelConfig> {
        let mut model = match (&self.model, base) {
            (Some(kind), _) => match ModelKind::parse(kind)? {
                ModelKind::KwGcn => ModelConfig::kw_gcn(),
                ModelKind::GraphSage => ModelConfig::graphsage(),
            },
            (None, Some(base)) => base,
            (None, None) => ModelConfig::kw_gcn(),
        };
        if let Some(layers) = self.layers {
            model.num_layers = layers;
        }
        if let Some(h) = self.hidden_dim {
            model.hidden_dim = h;
        }
        if let Some(lr) = self.learning_rate {
            model.learning_rate = lr;
        }
        if let Some(b) = self.batch_size {
            model.batch_size = b;
        }
        if let Some(ns) = &self.neighbor_samples {
            model.neighbor_samples = parse_list_usize(ns)?;
        }
        if model.neighbor_samples.len() < model.num_layers {
            let fill = *model.neighbor_samples.last().unwrap_or(&10);
            model.neighbor_samples.resize(model.num_layers, fill);
        }
        model.validate()?;
        Ok(model)
    }
}

pub fn parse_list_usize(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse().with_context(|| format!("bad count `{t}`")))
        .collect()
}

pub fn parse_list_f64(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse().with_context(|| format!("bad number `{t}`")))
        .collect()
}

pub fn parse_list_u64(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| t.trim().parse().with_context(|| format!("bad seed `{t}`")))
        .collect()
}

/// Sample standard deviation (n-1); zero for a single observation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
