use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cloud_io::read_file;
use crate::net::NetworkConfig;
use crate::nn::WidthPadding;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[default]
    #[serde(rename = "ce")]
    CrossEntropy,
    #[serde(rename = "dice")]
    Dice,
    #[serde(rename = "ce+dice")]
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam {
        #[serde(default = "default_lr")]
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
    },
    Sgd {
        #[serde(default = "default_lr")]
        lr: f64,
    },
}

fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl OptimizerConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Adam { lr, .. } | OptimizerConfig::Sgd { lr } => lr,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    #[default]
    Unfold,
    Ego,
}

/// Synthetic scene set. Scan `i` uses scene seed `seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub scans: usize,
    pub height: usize,
    pub width: usize,
    pub classes: u16,
    pub ego_velocity: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            scans: 40,
            height: 64,
            width: 512,
            classes: 3,
            ego_velocity: 10.0,
            seed: 0,
        }
    }
}

/// Training run, stored as TOML:
///
/// ```toml
/// loss = "ce"                   # "ce", "dice" or "ce+dice"
/// steps = 200
/// batch_size = 2
/// seed = 0
/// projection = "unfold"         # or "ego"
/// padding = "cyclic"            # overrides network.padding
///
/// [optimizer]
/// kind = "adam"                 # or "sgd" (lr only)
/// lr = 1e-3
/// beta1 = 0.9
/// beta2 = 0.999
/// eps = 1e-8
///
/// [network]                     # see NetworkConfig
/// filters = "A"
/// num_classes = 4
///
/// [data]
/// scans = 40
/// height = 64
/// width = 512
/// classes = 3
/// ego_velocity = 10.0
/// seed = 0
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub projection: ProjectionMode,
    pub padding: WidthPadding,
    pub network: NetworkConfig,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let data = DataConfig::default();
        let network = NetworkConfig {
            num_classes: usize::from(data.classes) + 1,
            ..NetworkConfig::default()
        };
        Self {
            loss: LossKind::default(),
            optimizer: OptimizerConfig::default(),
            steps: 200,
            batch_size: 2,
            seed: 0,
            projection: ProjectionMode::default(),
            padding: WidthPadding::Cyclic,
            network,
            data,
        }
    }
}

impl TrainConfig {
    /// The network actually built: `network` with the run's padding mode.
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            padding: self.padding,
            ..self.network.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::config(format!(
                "learning rate must be finite and non-negative, got {lr}"
            )));
        }
        if let OptimizerConfig::Adam { beta1, beta2, eps, .. } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps.is_finite() && eps > 0.0) {
                return Err(Error::config("adam needs beta1, beta2 in [0, 1) and eps > 0"));
            }
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::config("steps and batch_size must be at least 1"));
        }
        if self.data.height == 0 || self.data.width == 0 {
            return Err(Error::config("data height and width must be positive"));
        }
        self.network_config().validate()
    }
}

pub fn parse_train_config(text: &str) -> Result<TrainConfig> {
    let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::config(format!("train config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_train_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::config(format!("{} is not UTF-8", path.display())))?;
    parse_train_config(text).map_err(|e| match e {
        Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_train_config("").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.network.num_classes, 4);
        assert_eq!(cfg.optimizer.lr(), 1e-3);
    }

    #[test]
    fn parses_every_switch() {
        let cfg = parse_train_config(
            r#"
            loss = "ce+dice"
            steps = 5
            projection = "ego"
            padding = "zeros"
            [optimizer]
            kind = "sgd"
            lr = 0.5
            [network]
            filters = "B"
            [data]
            classes = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.loss, LossKind::Both);
        assert_eq!(cfg.optimizer, OptimizerConfig::Sgd { lr: 0.5 });
        assert_eq!(cfg.projection, ProjectionMode::Ego);
        assert_eq!(cfg.network_config().padding, WidthPadding::Zeros);
        assert_eq!(cfg.data.classes, 5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse_train_config("steps = 0").is_err());
        assert!(parse_train_config("[optimizer]\nkind = \"adam\"\nlr = -1.0").is_err());
        assert!(parse_train_config("[optimizer]\nkind = \"adam\"\nbeta1 = 1.0").is_err());
        assert!(parse_train_config("loss = \"hinge\"").is_err());
        assert!(parse_train_config("bogus = 1").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = TrainConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(parse_train_config(&text).unwrap(), cfg);
    }
}
