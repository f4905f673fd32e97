use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SceneConfig, SensorModel};
use crate::cloud_io::read_file;
use crate::{Error, Result};

/// Sensor and scene description, stored as TOML:
///
/// ```toml
/// [sensor]
/// n_beams = 64
/// fov_up = 3.0
/// fov_down = -25.0
/// azimuth_step = 0.17578125     # degrees per firing
/// revolution_time = 0.1         # optional, seconds
/// max_range = 1000.0            # optional, meters
/// elevations = []               # optional, defaults to bin centres
///
/// [scene]
/// ground_z = -1.73
/// seed = 7
/// noise_deg = 0.0
/// ego_velocity = 10.0
/// num_classes = 20
///
/// [[scene.primitives]]
/// kind = "box"
/// class = 3
/// min = [5.0, -1.0, -1.73]
/// max = [9.0, 1.0, -0.2]
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub scene: SceneConfig,
}

pub fn parse_scan_config(text: &str) -> Result<ScanConfig> {
    let mut cfg: ScanConfig = toml::from_str(text).map_err(|e| Error::config(format!("scan config: {e}")))?;
    cfg.sensor.fill_default_elevations();
    cfg.sensor.validate()?;
    cfg.scene.validate()?;
    Ok(cfg)
}

pub fn load_scan_config(path: impl AsRef<Path>) -> Result<ScanConfig> {
    let bytes = read_file(path.as_ref())?;
    let text =
        std::str::from_utf8(&bytes).map_err(|_| Error::config(format!("{} is not UTF-8", path.as_ref().display())))?;
    parse_scan_config(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Primitive;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            [sensor]
            n_beams = 64
            fov_up = 3.0
            fov_down = -25.0
            azimuth_step = 0.17578125

            [scene]
            ground_z = -1.73
            seed = 7
            ego_velocity = 10.0

            [[scene.primitives]]
            kind = "box"
            class = 3
            min = [5.0, -1.0, -1.73]
            max = [9.0, 1.0, -0.2]

            [[scene.primitives]]
            kind = "cylinder"
            class = 4
            center = [3.0, 4.0]
            radius = 0.2
            z_min = -1.73
            z_max = 2.0
        "#;
        let cfg = parse_scan_config(text).unwrap();
        assert_eq!(cfg.sensor, SensorModel::default());
        assert_eq!(cfg.scene.primitives.len(), 2);
        assert!(matches!(cfg.scene.primitives[1], Primitive::Cylinder { class: 4, .. }));
        assert_eq!(cfg.scene.ego_velocity, 10.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ScanConfig {
            sensor: SensorModel::default(),
            scene: SceneConfig::random(4, 6, 12.0),
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(parse_scan_config(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(parse_scan_config("[scene]\nground_z = 0\nbogus = 1").is_err());
        assert!(parse_scan_config("[sensor]\nn_beams = 0\nfov_up = 1\nfov_down = 0\nazimuth_step = 1").is_err());
        assert!(parse_scan_config("[scene\n").is_err());
    }
}
