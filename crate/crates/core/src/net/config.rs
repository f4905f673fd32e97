use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::WidthPadding;
use crate::{Error, Result};

pub const STAGES: usize = 6;

/// Named encoder widths.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
    #[serde(rename = "R*", alias = "RStar", alias = "R")]
    RStar,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::A, Preset::B, Preset::C, Preset::D, Preset::RStar];

    pub fn filters(self) -> [usize; STAGES] {
        match self {
            Preset::A => [32, 32, 32, 32, 32, 32],
            Preset::B => [32, 48, 64, 64, 64, 64],
            Preset::C => [32, 48, 64, 96, 128, 256],
            Preset::D => [32, 48, 64, 128, 256, 512],
            Preset::RStar => [32, 64, 128, 256, 512, 1024],
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
            Preset::D => "D",
            Preset::RStar => "R*",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Preset::A),
            "B" | "b" => Ok(Preset::B),
            "C" | "c" => Ok(Preset::C),
            "D" | "d" => Ok(Preset::D),
            "R*" | "r*" | "R" | "RStar" | "rstar" => Ok(Preset::RStar),
            other => Err(Error::config(format!("unknown network preset {other:?}"))),
        }
    }
}

/// Encoder widths, either a preset name or six explicit channel counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterSpec {
    Preset(Preset),
    Explicit([usize; STAGES]),
}

/// Backbone configuration, stored as TOML:
///
/// ```toml
/// filters = "A"                 # or [32, 48, 64, 128, 256, 512]
/// blocks = [1, 1, 2, 2, 2, 2]
/// default_alpha = 1
/// padding = "cyclic"            # or "zeros"
/// in_channels = 3
/// num_classes = 20
/// width_stride = 2              # 1 keeps full width everywhere
/// seed = 0
///
/// [alpha]                       # per-layer overrides
/// head = 2
/// ```
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub filters: FilterSpec,
    pub blocks: [usize; STAGES],
    pub default_alpha: usize,
    pub alpha: BTreeMap<String, usize>,
    pub padding: WidthPadding,
    pub in_channels: usize,
    pub num_classes: usize,
    pub width_stride: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::preset(Preset::A)
    }
}

impl NetworkConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            filters: FilterSpec::Preset(preset),
            blocks: [1, 1, 2, 2, 2, 2],
            default_alpha: 1,
            alpha: BTreeMap::new(),
            padding: WidthPadding::Cyclic,
            in_channels: 3,
            num_classes: 20,
            width_stride: 2,
            seed: 0,
        }
    }

    pub fn filter_sizes(&self) -> [usize; STAGES] {
        match self.filters {
            FilterSpec::Preset(p) => p.filters(),
            FilterSpec::Explicit(f) => f,
        }
    }

    pub fn alpha_for(&self, layer: &str) -> usize {
        self.alpha.get(layer).copied().unwrap_or(self.default_alpha)
    }

    /// Width reduction between the input and the deepest stage.
    pub fn total_stride(&self) -> usize {
        self.width_stride.pow(STAGES as u32 - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.filter_sizes().contains(&0) {
            return Err(Error::config("filter sizes must be positive"));
        }
        if self.in_channels == 0 || self.num_classes == 0 {
            return Err(Error::config("in_channels and num_classes must be positive"));
        }
        if self.width_stride == 0 {
            return Err(Error::config("width_stride must be at least 1"));
        }
        if self.default_alpha == 0 || self.alpha.values().any(|&a| a == 0) {
            return Err(Error::config("alpha must be at least 1"));
        }
        Ok(())
    }

    /// Checks that an `height x width` input survives the encoder strides
    /// and that every alpha fits the height.
    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let stride = self.total_stride();
        if height == 0 || width == 0 || !width.is_multiple_of(stride) {
            return Err(Error::config(format!(
                "input {height}x{width} needs positive height and a width divisible by {stride}"
            )));
        }
        let max_alpha = self
            .alpha
            .values()
            .copied()
            .chain([self.default_alpha])
            .max()
            .unwrap_or(1);
        if max_alpha > height {
            return Err(Error::config(format!(
                "alpha {max_alpha} exceeds input height {height}"
            )));
        }
        Ok(())
    }
}

pub fn parse_network_config(text: &str) -> Result<NetworkConfig> {
    let cfg: NetworkConfig = toml::from_str(text).map_err(|e| Error::config(format!("network config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
