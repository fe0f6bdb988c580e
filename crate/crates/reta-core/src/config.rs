//! Run configuration: a flat INI-style file with one section per subsystem,
//! merged with command-line overrides (flags win). The single root seed
//! feeds every seeded component through named sub-streams.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datagen::CorpusSpec;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};
use crate::nn::OptimizerKind;
use crate::signal::LfccConfig;

pub const DEFAULT_TAUS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub corpus: CorpusSpec,
    pub lfcc: LfccConfig,
    pub embedding_channels: usize,
    pub activation_cap: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: bool,
    pub optimizer: OptimizerKind,
    pub taus: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = RunConfig {
            seed: 7,
            out_dir: PathBuf::from("runs/default"),
            corpus: CorpusSpec::default(),
            lfcc: LfccConfig::default(),
            embedding_channels: 32,
            activation_cap: 1.0,
            alpha: 1.0,
            batch_size: 32,
            epochs: 20,
            learning_rate: 1e-3,
            lr_decay: true,
            optimizer: OptimizerKind::Adam,
            taus: DEFAULT_TAUS.to_vec(),
        };
        cfg.corpus.seed = cfg.seed;
        cfg
    }
}

impl RunConfig {
    /// Derived architecture settings.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            n_known_classes: self.corpus.n_known(),
            input_frames: self.lfcc.target_frames,
            input_coeffs: self.lfcc.n_coeffs,
            embedding_channels: self.embedding_channels,
            activation_cap: self.activation_cap,
            alpha: self.alpha,
        }
    }

    /// Derived training settings.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            seed: self.seed,
            alpha: self.alpha,
            optimizer: self.optimizer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.lfcc.validate(self.corpus.sample_rate)?;
        self.model_config().validate()?;
        self.train_config().validate()?;
        for &tau in &self.taus {
            if !(0.0..=1.0).contains(&tau) {
                return Err(Error::Config(format!("tau {tau} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            cfg.set(&section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", line_no + 1)))?;
        }
        cfg.corpus.seed = cfg.seed;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match (section, key) {
            ("run", "seed") => self.seed = parse(key, value)?,
            ("run", "out_dir") => self.out_dir = PathBuf::from(value),
            ("corpus", "clips_train") => self.corpus.clips_train = parse(key, value)?,
            ("corpus", "clips_dev") => self.corpus.clips_dev = parse(key, value)?,
            ("corpus", "clips_test") => self.corpus.clips_test = parse(key, value)?,
            ("corpus", "clip_seconds") => self.corpus.clip_seconds = parse(key, value)?,
            ("corpus", "sample_rate") => self.corpus.sample_rate = parse(key, value)?,
            ("corpus", "compressed") => self.corpus.compressed = parse(key, value)?,
            ("lfcc", "frame_len_ms") => self.lfcc.frame_len_ms = parse(key, value)?,
            ("lfcc", "hop_ms") => self.lfcc.hop_ms = parse(key, value)?,
            ("lfcc", "fft_size") => self.lfcc.fft_size = parse(key, value)?,
            ("lfcc", "n_filters") => self.lfcc.n_filters = parse(key, value)?,
            ("lfcc", "n_coeffs") => self.lfcc.n_coeffs = parse(key, value)?,
            ("lfcc", "log_floor") => self.lfcc.log_floor = parse(key, value)?,
            ("lfcc", "target_frames") => self.lfcc.target_frames = parse(key, value)?,
            ("model", "embedding_channels") => self.embedding_channels = parse(key, value)?,
            ("model", "activation_cap") => self.activation_cap = parse(key, value)?,
            ("model", "alpha") => self.alpha = parse(key, value)?,
            ("train", "batch_size") => self.batch_size = parse(key, value)?,
            ("train", "epochs") => self.epochs = parse(key, value)?,
            ("train", "learning_rate") => self.learning_rate = parse(key, value)?,
            ("train", "lr_decay") => self.lr_decay = parse(key, value)?,
            ("train", "optimizer") => {
                self.optimizer = match value {
                    "adam" => OptimizerKind::Adam,
                    "sgd" => OptimizerKind::Sgd,
                    other => {
                        return Err(Error::Config(format!(
                            "optimizer must be adam or sgd, got {other:?}"
                        )))
                    }
                }
            }
            ("eval", "taus") => self.taus = parse_taus(value)?,
            (section, key) => {
                return Err(Error::Config(format!("unknown key [{section}] {key}")));
            }
        }
        Ok(())
    }

    /// Canonical snapshot with every effective setting.
    pub fn to_ini_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "\n[corpus]");
        let _ = writeln!(s, "clips_train = {}", self.corpus.clips_train);
        let _ = writeln!(s, "clips_dev = {}", self.corpus.clips_dev);
        let _ = writeln!(s, "clips_test = {}", self.corpus.clips_test);
        let _ = writeln!(s, "clip_seconds = {}", self.corpus.clip_seconds);
        let _ = writeln!(s, "sample_rate = {}", self.corpus.sample_rate);
        let _ = writeln!(s, "compressed = {}", self.corpus.compressed);
        let _ = writeln!(s, "\n[lfcc]");
        let _ = writeln!(s, "frame_len_ms = {}", self.lfcc.frame_len_ms);
        let _ = writeln!(s, "hop_ms = {}", self.lfcc.hop_ms);
        let _ = writeln!(s, "fft_size = {}", self.lfcc.fft_size);
        let _ = writeln!(s, "n_filters = {}", self.lfcc.n_filters);
        let _ = writeln!(s, "n_coeffs = {}", self.lfcc.n_coeffs);
        let _ = writeln!(s, "log_floor = {}", self.lfcc.log_floor);
        let _ = writeln!(s, "target_frames = {}", self.lfcc.target_frames);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "embedding_channels = {}", self.embedding_channels);
        let _ = writeln!(s, "activation_cap = {}", self.activation_cap);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "lr_decay = {}", self.lr_decay);
        let _ = writeln!(
            s,
            "optimizer = {}",
            match self.optimizer {
                OptimizerKind::Adam => "adam",
                OptimizerKind::Sgd => "sgd",
            }
        );
        let _ = writeln!(s, "\n[eval]");
        let _ = writeln!(
            s,
            "taus = {}",
            self.taus
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",")
        );
        s
    }
}

/// Comma-separated tau list, e.g. `0.5,0.9`.
pub fn parse_taus(value: &str) -> Result<Vec<f64>> {
    let taus: Vec<f64> = value
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad tau {t:?}")))
        })
        .collect::<Result<_>>()?;
    if taus.is_empty() {
        return Err(Error::Config("empty tau list".into()));
    }
    Ok(taus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn ini_roundtrip_preserves_settings() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.epochs = 5;
        cfg.corpus.compressed = true;
        cfg.corpus.seed = 99;
        cfg.taus = vec![0.5, 0.9];
        let text = cfg.to_ini_string();
        let back = RunConfig::from_ini_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn seed_propagates_to_corpus() {
        let cfg = RunConfig::from_ini_str("[run]\nseed = 1234\n").unwrap();
        assert_eq!(cfg.corpus.seed, 1234);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# comment\n[train]\nepochs = 3 ; trailing\n\n[run]\nseed=2\n";
        let cfg = RunConfig::from_ini_str(text).unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.seed, 2);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(
            RunConfig::from_ini_str("[train]\nnope = 1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_ini_str("[train]\nepochs = banana\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_ini_str("[train]\nepochs\n"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tau_list_parsing() {
        assert_eq!(parse_taus("0.5, 0.9").unwrap(), vec![0.5, 0.9]);
        assert!(parse_taus("0.5,x").is_err());
    }
}
