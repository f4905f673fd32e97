//! Deterministic rotating-LiDAR simulator.
//!
//! Rays are cast beam-major: beam 0 sweeps a full revolution, then beam 1,
//! and so on. Each revolution starts and ends at the rear cut (azimuth
//! +/-pi) and sweeps toward decreasing azimuth, so firing `k` points at
//! `pi - (k + 0.5) * step` and lands in column `k` of the unfolded image.
//!
//! With a non-zero ego velocity the sensor translates along +x during the
//! revolution. `SynthScan::cloud` keeps every point in the frame of its own
//! firing (the raw scanner output); `SynthScan::cloud_ego_corrected`
//! re-expresses all points in the frame of the last firing.

mod config;
mod scene;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use config::{load_scan_config, parse_scan_config, ScanConfig};
pub use scene::{Primitive, SceneConfig};

use crate::cloud_io::{LabelArray, PointCloud};
use crate::{Error, Result};

/// Vertical stack of emitters revolving around the z axis. Angles in degrees.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorModel {
    pub n_beams: usize,
    pub fov_up: f64,
    pub fov_down: f64,
    /// Azimuth advance between firings.
    pub azimuth_step: f64,
    /// Beam elevations, top beam first. Empty means bin centres of the FOV.
    #[serde(default)]
    pub elevations: Vec<f64>,
    /// Seconds per revolution.
    #[serde(default = "default_revolution_time")]
    pub revolution_time: f64,
    /// Returns beyond this range (meters) are dropped.
    #[serde(default = "default_max_range")]
    pub max_range: f64,
}

fn default_revolution_time() -> f64 {
    0.1
}

fn default_max_range() -> f64 {
    1000.0
}

impl Default for SensorModel {
    /// 64 beams over +3..-25 degrees, 2048 firings per revolution at 10 Hz.
    fn default() -> Self {
        Self::uniform(64, 3.0, -25.0, 360.0 / 2048.0)
    }
}

impl SensorModel {
    /// Beams at the centres of `n_beams` equal elevation bins.
    pub fn uniform(n_beams: usize, fov_up: f64, fov_down: f64, azimuth_step: f64) -> Self {
        let mut s = Self {
            n_beams,
            fov_up,
            fov_down,
            azimuth_step,
            elevations: Vec::new(),
            revolution_time: default_revolution_time(),
            max_range: default_max_range(),
        };
        s.fill_default_elevations();
        s
    }

    pub(crate) fn fill_default_elevations(&mut self) {
        if self.elevations.is_empty() && self.n_beams > 0 {
            let bin = (self.fov_up - self.fov_down) / self.n_beams as f64;
            self.elevations = (0..self.n_beams)
                .map(|k| self.fov_up - (k as f64 + 0.5) * bin)
                .collect();
        }
    }

    pub fn firings_per_rev(&self) -> usize {
        (360.0 / self.azimuth_step).round() as usize
    }

    /// Azimuth of firing `k` in radians, before noise.
    pub fn firing_azimuth(&self, k: usize) -> f64 {
        PI - (k as f64 + 0.5) * self.azimuth_step.to_radians()
    }

    /// Time of firing `k` relative to the first firing. The last firing of
    /// the revolution happens at `revolution_time`.
    pub fn firing_time(&self, k: usize) -> f64 {
        let f = self.firings_per_rev();
        if f <= 1 {
            0.0
        } else {
            self.revolution_time * k as f64 / (f - 1) as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_beams == 0 {
            return Err(Error::config("sensor needs at least one beam"));
        }
        if !(self.fov_down.is_finite() && self.fov_up.is_finite() && self.fov_down < self.fov_up) {
            return Err(Error::config("sensor fov_down must be below fov_up"));
        }
        if !(self.azimuth_step > 0.0 && self.azimuth_step <= 360.0) {
            return Err(Error::config("azimuth_step must be in (0, 360]"));
        }
        let per_rev = 360.0 / self.azimuth_step;
        if (per_rev - per_rev.round()).abs() > 1e-6 {
            return Err(Error::config("azimuth_step must divide 360 degrees"));
        }
        if self.elevations.len() != self.n_beams {
            return Err(Error::config(format!(
                "{} beam elevations for {} beams",
                self.elevations.len(),
                self.n_beams
            )));
        }
        if !(self.revolution_time >= 0.0 && self.max_range > 0.0) {
            return Err(Error::config("revolution_time and max_range must be positive"));
        }
        Ok(())
    }
}

/// One simulated sweep with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthScan {
    /// Raw scanner output, each point relative to its firing's origin.
    pub cloud: PointCloud,
    /// The same points relative to the sensor pose at the last firing.
    pub cloud_ego_corrected: PointCloud,
    /// Beam index per point.
    pub true_rows: Vec<usize>,
    /// Firing index per point.
    pub true_cols: Vec<usize>,
    pub labels: LabelArray,
    pub firings_per_rev: usize,
}

impl SynthScan {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

/// Casts every (beam, firing) ray against the scene.
pub fn generate_scan(sensor: &SensorModel, scene: &SceneConfig) -> Result<SynthScan> {
    sensor.validate()?;
    scene.validate()?;

    let firings = sensor.firings_per_rev();
    let end_x = scene.ego_velocity * sensor.firing_time(firings.saturating_sub(1));
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let noise = if scene.noise_deg > 0.0 {
        Some(Normal::new(0.0, scene.noise_deg.to_radians()).expect("positive stddev"))
    } else {
        None
    };

    let mut scan = SynthScan {
        cloud: PointCloud::default(),
        cloud_ego_corrected: PointCloud::default(),
        true_rows: Vec::new(),
        true_cols: Vec::new(),
        labels: LabelArray::default(),
        firings_per_rev: firings,
    };
    for (beam, elevation) in sensor.elevations.iter().enumerate() {
        for k in 0..firings {
            let (mut az, mut el) = (sensor.firing_azimuth(k), elevation.to_radians());
            if let Some(n) = &noise {
                az += n.sample(&mut rng);
                el += n.sample(&mut rng);
            }
            let origin = [scene.ego_velocity * sensor.firing_time(k), 0.0, 0.0];
            let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            let Some(hit) = scene.cast(origin, dir, sensor.max_range) else {
                continue;
            };
            let world = [0, 1, 2].map(|a| origin[a] + hit.t * dir[a]);
            let raw = [0, 1, 2].map(|a| (world[a] - origin[a]) as f32);
            let corrected = [world[0] - end_x, world[1], world[2]].map(|v| v as f32);
            if raw == [0.0; 3] || corrected == [0.0; 3] {
                continue;
            }
            let refl = scene::reflectance(hit.class, hit.t);
            scan.cloud.push(raw, refl);
            scan.cloud_ego_corrected.push(corrected, refl);
            scan.true_rows.push(beam);
            scan.true_cols.push(k);
            scan.labels.semantic.push(hit.class);
            scan.labels.instance.push(hit.instance);
        }
    }
    Ok(scan)
}

/// Azimuth of every raw point in `(-pi, pi]`.
pub fn azimuth_trace(scan: &SynthScan) -> Result<Vec<f64>> {
    scan.cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| azimuth_of(p).ok_or_else(|| Error::Geometry(format!("point {i} is at the origin"))))
        .collect()
}

pub(crate) fn azimuth_of(p: &[f32; 3]) -> Option<f64> {
    if p[0] == 0.0 && p[1] == 0.0 {
        return None;
    }
    let phi = f64::from(p[1]).atan2(f64::from(p[0]));
    // atan2(-0.0, x < 0) gives -pi; the half-open range wants +pi.
    Some(if phi == -PI { PI } else { phi })
}
