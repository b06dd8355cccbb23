use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigName {
    C1,
    C2,
    C3,
    #[serde(rename = "custom")]
    Custom,
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfigName::C1 => "C1",
            ConfigName::C2 => "C2",
            ConfigName::C3 => "C3",
            ConfigName::Custom => "custom",
        })
    }
}

impl FromStr for ConfigName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C1" | "c1" => Ok(ConfigName::C1),
            "C2" | "c2" => Ok(ConfigName::C2),
            "C3" | "c3" => Ok(ConfigName::C3),
            "custom" => Ok(ConfigName::Custom),
            other => Err(Error::Config(format!(
                "unknown config name {other:?}; valid names are C1, C2, C3"
            ))),
        }
    }
}

/// Training hyperparameters.
///
/// `lstm_cells` is the decoder hidden size `h`; `bidir_cells` is the
/// encoder's concatenated output width, `h` per direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub config_name: ConfigName,
    pub lstm_cells: usize,
    pub bidir_cells: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub embed_dim: usize,
    pub max_len: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub min_count: usize,
    pub trainable_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::preset(ConfigName::C2).with_name(ConfigName::Custom)
    }
}

impl TrainConfig {
    /// The three published hyperparameter configurations; every other field
    /// takes its default.
    pub fn preset(name: ConfigName) -> TrainConfig {
        let (lstm, bidir, batch, epochs, lr) = match name {
            ConfigName::C1 => (256, 512, 8, 10, 1e-3),
            ConfigName::C2 | ConfigName::Custom => (512, 1024, 8, 20, 1e-3),
            ConfigName::C3 => (512, 1024, 16, 50, 1e-4),
        };
        TrainConfig {
            config_name: name,
            lstm_cells: lstm,
            bidir_cells: bidir,
            batch_size: batch,
            epochs,
            learning_rate: lr,
            embed_dim: 100,
            max_len: 24,
            seed: 42,
            clip_norm: 5.0,
            min_count: 1,
            trainable_embeddings: true,
        }
    }

    /// Resolve `C1`/`C2`/`C3` or a path to a key=value config file.
    pub fn resolve(name_or_path: &str) -> Result<TrainConfig> {
        if let Ok(name) = name_or_path.parse::<ConfigName>() {
            if name != ConfigName::Custom {
                return Ok(TrainConfig::preset(name));
            }
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return TrainConfig::load(path);
        }
        Err(Error::Config(format!(
            "unknown config {name_or_path:?}; valid names are C1, C2, C3, or a path to a config file"
        )))
    }

    fn with_name(mut self, name: ConfigName) -> Self {
        self.config_name = name;
        self
    }

    pub fn hidden(&self) -> usize {
        self.lstm_cells
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.lstm_cells == 0 {
            return fail("lstm_cells must be positive".into());
        }
        if self.bidir_cells != 2 * self.lstm_cells {
            return fail(format!(
                "bidir_cells ({}) must be twice lstm_cells ({})",
                self.bidir_cells, self.lstm_cells
            ));
        }
        if self.batch_size == 0 || self.embed_dim == 0 || self.min_count == 0 {
            return fail("batch_size, embed_dim and min_count must be positive".into());
        }
        if self.max_len < 2 {
            return fail("max_len must be at least 2".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return fail(format!(
                "clip_norm must be positive, got {}",
                self.clip_norm
            ));
        }
        if self.config_name != ConfigName::Custom {
            let p = TrainConfig::preset(self.config_name);
            let table = (
                p.lstm_cells,
                p.bidir_cells,
                p.batch_size,
                p.epochs,
                p.learning_rate,
            );
            let mine = (
                self.lstm_cells,
                self.bidir_cells,
                self.batch_size,
                self.epochs,
                self.learning_rate,
            );
            if table != mine {
                return fail(format!(
                    "config named {} must use lstm_cells/bidir_cells/batch_size/epochs/learning_rate = {:?}",
                    self.config_name, table
                ));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::parse(&text)
    }

    /// Parse `key = value` lines. `#` starts a comment. Keys not given keep
    /// their defaults; `name` selects a preset label and must then agree
    /// with that preset's values.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Config(format!("line {}: {m}", idx + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
                v.parse().map_err(|_| format!("invalid value {v:?}"))
            }
            let r: std::result::Result<(), String> = (|| {
                match key {
                    "name" => cfg.config_name = value.parse().map_err(|e: Error| e.to_string())?,
                    "lstm_cells" => cfg.lstm_cells = num(value)?,
                    "bidir_cells" => cfg.bidir_cells = num(value)?,
                    "batch_size" => cfg.batch_size = num(value)?,
                    "epochs" => cfg.epochs = num(value)?,
                    "learning_rate" => cfg.learning_rate = num(value)?,
                    "embed_dim" => cfg.embed_dim = num(value)?,
                    "max_len" => cfg.max_len = num(value)?,
                    "seed" => cfg.seed = num(value)?,
                    "clip_norm" => cfg.clip_norm = num(value)?,
                    "min_count" => cfg.min_count = num(value)?,
                    "trainable_embeddings" => cfg.trainable_embeddings = num(value)?,
                    other => return Err(format!("unknown key {other:?}")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_config_text(&self) -> String {
        format!(
            "name = {}\nlstm_cells = {}\nbidir_cells = {}\nbatch_size = {}\nepochs = {}\nlearning_rate = {:e}\nembed_dim = {}\nmax_len = {}\nseed = {}\nclip_norm = {}\nmin_count = {}\ntrainable_embeddings = {}\n",
            self.config_name,
            self.lstm_cells,
            self.bidir_cells,
            self.batch_size,
            self.epochs,
            self.learning_rate,
            self.embed_dim,
            self.max_len,
            self.seed,
            self.clip_norm,
            self.min_count,
            self.trainable_embeddings
        )
    }
}
