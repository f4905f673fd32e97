use super::config::{DataConfig, ProjectionMode};
use crate::cloud_io::{LabelArray, PointCloud};
use crate::nn::Tensor;
use crate::projection::{
    project_ego_corrected, unfold_scan, IndexMap, RangeImage, RowMode, SphericalParams, UnfoldParams,
    DEFAULT_THRESHOLD_DEG,
};
use crate::synth::{generate_scan, SceneConfig, SensorModel};
use crate::{Error, Result};

const FOV_UP: f64 = 3.0;
const FOV_DOWN: f64 = -25.0;

/// One projected scan with the bookkeeping needed for per-point scoring.
#[derive(Clone, Debug)]
pub struct Sample {
    /// Scene seed, or the caller's id for user data.
    pub seed: u64,
    pub image: RangeImage,
    pub index: IndexMap,
    pub point_labels: Vec<u16>,
}

impl Sample {
    /// Projects a labeled cloud. Unfolding uses a jump threshold of at
    /// least 1.5 azimuth columns so coarse grids still see one row per line.
    pub fn project(
        seed: u64,
        cloud: &PointCloud,
        labels: &LabelArray,
        mode: ProjectionMode,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        let (image, index) = match mode {
            ProjectionMode::Unfold => {
                let threshold = DEFAULT_THRESHOLD_DEG.max(1.5 * 360.0 / width as f64).to_radians();
                unfold_scan(
                    cloud,
                    Some(labels),
                    &UnfoldParams {
                        height,
                        width,
                        threshold,
                        mode: RowMode::Literal,
                    },
                )?
            }
            ProjectionMode::Ego => project_ego_corrected(
                cloud,
                Some(labels),
                &SphericalParams {
                    height,
                    width,
                    fov_up: FOV_UP,
                    fov_down: FOV_DOWN,
                },
            )?,
        };
        Ok(Self {
            seed,
            image,
            index,
            point_labels: labels.semantic.clone(),
        })
    }

    /// Per-pixel targets; empty pixels carry 0.
    pub fn targets(&self) -> &[u16] {
        self.image.label()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.image.height(), self.image.width())
    }
}

/// Network input `[B, H, W, 3]`: depth, reflectance, validity mask.
pub fn input_tensor(images: &[&RangeImage]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::shape("empty batch"));
    };
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::shape(format!(
                "batch mixes {h}x{w} and {}x{} images",
                img.height(),
                img.width()
            )));
        }
        for ((&d, &r), &m) in img.depth().iter().zip(img.reflectance()).zip(img.mask()) {
            data.extend_from_slice(&[d, r, if m { 1.0 } else { 0.0 }]);
        }
    }
    Tensor::from_vec([images.len(), h, w, 3], data)
}

/// Generated scans with `height` beams and `width` firings per revolution.
pub fn synthetic_dataset(cfg: &DataConfig, mode: ProjectionMode) -> Result<Vec<Sample>> {
    if cfg.height == 0 || cfg.width == 0 {
        return Err(Error::config("data height and width must be positive"));
    }
    let sensor = SensorModel::uniform(cfg.height, FOV_UP, FOV_DOWN, 360.0 / cfg.width as f64);
    (0..cfg.scans as u64)
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let scene = SceneConfig::random(seed, cfg.classes, cfg.ego_velocity);
            let scan = generate_scan(&sensor, &scene)?;
            let cloud = match mode {
                ProjectionMode::Unfold => &scan.cloud,
                ProjectionMode::Ego => &scan.cloud_ego_corrected,
            };
            Sample::project(seed, cloud, &scan.labels, mode, cfg.height, cfg.width)
        })
        .collect()
}

/// Even scene seeds train, odd ones validate.
pub fn split_by_parity(samples: Vec<Sample>) -> (Vec<Sample>, Vec<Sample>) {
    samples.into_iter().partition(|s| s.seed % 2 == 0)
}
