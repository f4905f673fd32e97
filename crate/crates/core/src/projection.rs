//! Point list to range image.
//!
//! Two projections are provided:
//!
//! - [`unfold_scan`] recovers the scanner's native grid from acquisition
//!   order: rows come from azimuth jumps at the line crossovers
//!   ([`get_rows`]), columns from the azimuth itself ([`get_columns`]).
//! - [`project_ego_corrected`] is the spherical proxy on motion-compensated
//!   points, where rows come from elevation inside a fixed field of view.
//!
//! Both scatter points in decreasing-depth order so the nearest point wins
//! each pixel; points that lose their pixel are recorded in
//! [`IndexMap::occluded`].

use std::f64::consts::PI;

use crate::cloud_io::{LabelArray, PointCloud};
use crate::{Error, Result};

/// Default azimuth-jump threshold for KITTI-style scanners, degrees.
pub const DEFAULT_THRESHOLD_DEG: f64 = 0.3;
pub const DEFAULT_HEIGHT: usize = 64;
pub const DEFAULT_WIDTH: usize = 2048;

/// H x W grid of depth, reflectance, class id and validity.
///
/// Empty pixels hold depth 0, reflectance 0 and label 0.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    depth: Vec<f32>,
    reflectance: Vec<f32>,
    label: Vec<u16>,
    mask: Vec<bool>,
}

impl RangeImage {
    pub fn empty(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            depth: vec![0.0; n],
            reflectance: vec![0.0; n],
            label: vec![0; n],
            mask: vec![false; n],
        }
    }

    /// Builds an image from raw planes, checking the pixel invariants.
    pub fn from_planes(
        height: usize,
        width: usize,
        depth: Vec<f32>,
        reflectance: Vec<f32>,
        label: Vec<u16>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| Error::shape("range image size overflows"))?;
        if [depth.len(), reflectance.len(), label.len(), mask.len()]
            .iter()
            .any(|&len| len != n)
        {
            return Err(Error::shape(format!("planes must hold {height}x{width} values")));
        }
        for i in 0..n {
            let ok = if mask[i] {
                depth[i] > 0.0 && depth[i].is_finite() && reflectance[i].is_finite()
            } else {
                depth[i] == 0.0 && reflectance[i] == 0.0 && label[i] == 0
            };
            if !ok {
                return Err(Error::shape(format!("pixel {i} violates the mask invariant")));
            }
        }
        Ok(Self {
            height,
            width,
            depth,
            reflectance,
            label,
            mask,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn reflectance(&self) -> &[f32] {
        &self.reflectance
    }

    pub fn label(&self) -> &[u16] {
        &self.label
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn valid_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Marks `(row, col)` as holding a point.
    ///
    /// # Panics
    /// If `depth` is not strictly positive or the pixel is out of bounds.
    pub fn set_pixel(&mut self, row: usize, col: usize, depth: f32, reflectance: f32, label: u16) {
        assert!(depth > 0.0, "pixel depth must be positive");
        let i = row * self.width + col;
        self.depth[i] = depth;
        self.reflectance[i] = reflectance;
        self.label[i] = label;
        self.mask[i] = true;
    }
}

/// Bookkeeping between points and pixels for one projection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexMap {
    pub height: usize,
    pub width: usize,
    /// Winning point per pixel, row-major.
    pub pixel_to_point: Vec<Option<usize>>,
    /// Target pixel per point, also set for occluded points.
    pub point_to_pixel: Vec<Option<(usize, usize)>>,
    /// Points whose pixel was taken by a nearer point, ascending.
    pub occluded: Vec<usize>,
    /// Points whose row fell outside the grid, ascending.
    pub out_of_range: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OcclusionStats {
    pub n_points: usize,
    pub n_projected: usize,
    pub n_occluded: usize,
    pub n_out_of_range: usize,
}

/// How [`get_rows`] decides that a new scan line has started.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RowMode {
    /// Any azimuth step larger than the threshold starts a new row.
    #[default]
    Literal,
    /// Only a step that wraps around the rear cut (|delta| > pi) starts a
    /// new row, and only once the current row has swept at least half a
    /// revolution. Gaps from dropped returns and noisy points flickering
    /// across the cut are tolerated.
    Robust,
}

pub(crate) fn azimuth(p: &[f32; 3]) -> f64 {
    f64::from(p[1]).atan2(f64::from(p[0]))
}

pub(crate) fn point_depth(p: &[f32; 3]) -> f64 {
    let [x, y, z] = p.map(f64::from);
    (x * x + y * y + z * z).sqrt()
}

fn check_not_origin(i: usize, p: &[f32; 3]) -> Result<()> {
    if p[0] == 0.0 && p[1] == 0.0 {
        return Err(Error::Geometry(format!(
            "point {i} lies on the sensor axis, azimuth undefined"
        )));
    }
    Ok(())
}

fn column_of(phi: f64, width: usize) -> usize {
    let raw = (width as f64 * (PI - phi) / (2.0 * PI)).floor();
    // phi == -pi lands exactly on `width`; the cylinder is closed.
    (raw as i64).rem_euclid(width as i64) as usize
}

/// Column per point: `floor(W * (pi - atan2(y, x)) / 2pi) mod W`.
pub fn get_columns(cloud: &PointCloud, width: usize) -> Result<Vec<usize>> {
    if width == 0 {
        return Err(Error::config("width must be positive"));
    }
    cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            check_not_origin(i, p)?;
            Ok(column_of(azimuth(p), width))
        })
        .collect()
}

/// Scan-line index per point, recovered from azimuth jumps in acquisition
/// order. `threshold` is in radians.
pub fn get_rows(cloud: &PointCloud, threshold: f64, mode: RowMode) -> Vec<usize> {
    let phi: Vec<f64> = cloud.points().iter().map(azimuth).collect();
    rows_from_azimuths(&phi, threshold, mode)
}

pub fn rows_from_azimuths(phi: &[f64], threshold: f64, mode: RowMode) -> Vec<usize> {
    let mut rows = Vec::with_capacity(phi.len());
    let mut row = 0usize;
    let mut swept = 0.0;
    for (k, &p) in phi.iter().enumerate() {
        if k > 0 {
            let delta = (p - phi[k - 1]).abs();
            let jump = match mode {
                RowMode::Literal => delta > threshold,
                RowMode::Robust => delta > PI && swept >= PI,
            };
            swept += if delta > PI { 2.0 * PI - delta } else { delta };
            if jump {
                row += 1;
                swept = 0.0;
            }
        }
        rows.push(row);
    }
    rows
}

/// Parameters of [`unfold_scan`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnfoldParams {
    pub height: usize,
    pub width: usize,
    /// Radians.
    pub threshold: f64,
    pub mode: RowMode,
}

impl Default for UnfoldParams {
    fn default() -> Self {
        Self {
            height: DEFAULT_HEIGHT,
            width: DEFAULT_WIDTH,
            threshold: DEFAULT_THRESHOLD_DEG.to_radians(),
            mode: RowMode::Literal,
        }
    }
}

/// Reconstructs the sensor grid from a cloud in acquisition order.
pub fn unfold_scan(
    cloud: &PointCloud,
    labels: Option<&LabelArray>,
    params: &UnfoldParams,
) -> Result<(RangeImage, IndexMap)> {
    check_grid(params.height, params.width)?;
    check_labels(cloud, labels)?;
    let cols = get_columns(cloud, params.width)?;
    let rows = get_rows(cloud, params.threshold, params.mode);
    let targets = rows
        .into_iter()
        .zip(cols)
        .map(|(r, c)| (r < params.height).then_some((r, c)))
        .collect::<Vec<_>>();
    Ok(scatter(cloud, labels, params.height, params.width, &targets))
}

/// Parameters of [`project_ego_corrected`]. Field of view in degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalParams {
    pub height: usize,
    pub width: usize,
    pub fov_up: f64,
    pub fov_down: f64,
}

impl Default for SphericalParams {
    fn default() -> Self {
        Self {
            height: DEFAULT_HEIGHT,
            width: DEFAULT_WIDTH,
            fov_up: 3.0,
            fov_down: -25.0,
        }
    }
}

/// Row from elevation: `floor(H * (1 - (el - down) / (up - down)))`,
/// clamped into the grid. Angles in radians.
pub fn elevation_row(elevation: f64, height: usize, fov_up: f64, fov_down: f64) -> usize {
    let r = (height as f64 * (1.0 - (elevation - fov_down) / (fov_up - fov_down))).floor();
    r.clamp(0.0, (height - 1) as f64) as usize
}

/// Spherical projection of (ego-motion corrected) points.
pub fn project_ego_corrected(
    cloud: &PointCloud,
    labels: Option<&LabelArray>,
    params: &SphericalParams,
) -> Result<(RangeImage, IndexMap)> {
    check_grid(params.height, params.width)?;
    check_labels(cloud, labels)?;
    if !(params.fov_down.is_finite() && params.fov_up.is_finite() && params.fov_down < params.fov_up) {
        return Err(Error::config(format!(
            "fov_down ({}) must be below fov_up ({})",
            params.fov_down, params.fov_up
        )));
    }
    let (up, down) = (params.fov_up.to_radians(), params.fov_down.to_radians());
    let cols = get_columns(cloud, params.width)?;
    let targets = cloud
        .points()
        .iter()
        .zip(cols)
        .map(|(p, c)| {
            let [x, y, z] = p.map(f64::from);
            let elevation = z.atan2(x.hypot(y));
            Some((elevation_row(elevation, params.height, up, down), c))
        })
        .collect::<Vec<_>>();
    Ok(scatter(cloud, labels, params.height, params.width, &targets))
}

fn check_grid(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::config("range image dimensions must be positive"));
    }
    height
        .checked_mul(width)
        .map(|_| ())
        .ok_or_else(|| Error::config("range image dimensions overflow"))
}

fn check_labels(cloud: &PointCloud, labels: Option<&LabelArray>) -> Result<()> {
    match labels {
        Some(l) if l.len() != cloud.len() => {
            Err(Error::shape(format!("{} labels for {} points", l.len(), cloud.len())))
        }
        _ => Ok(()),
    }
}

/// Nearest-wins scatter. Points are visited by decreasing depth (ties by
/// index), so each later write is at most as far as the one it displaces.
fn scatter(
    cloud: &PointCloud,
    labels: Option<&LabelArray>,
    height: usize,
    width: usize,
    targets: &[Option<(usize, usize)>],
) -> (RangeImage, IndexMap) {
    let n = cloud.len();
    let depth: Vec<f64> = cloud.points().iter().map(point_depth).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| depth[b].total_cmp(&depth[a]));

    let mut map = IndexMap {
        height,
        width,
        pixel_to_point: vec![None; height * width],
        point_to_pixel: targets.to_vec(),
        occluded: Vec::new(),
        out_of_range: Vec::new(),
    };
    for i in order {
        let Some((r, c)) = targets[i] else {
            map.out_of_range.push(i);
            continue;
        };
        if let Some(prev) = map.pixel_to_point[r * width + c].replace(i) {
            map.occluded.push(prev);
        }
    }
    map.occluded.sort_unstable();
    map.out_of_range.sort_unstable();

    let mut img = RangeImage::empty(height, width);
    for (pix, winner) in map.pixel_to_point.iter().enumerate() {
        if let Some(i) = *winner {
            // Sub-normal coordinates can round the f32 depth to zero.
            let d = (depth[i] as f32).max(f32::MIN_POSITIVE);
            let label = labels.map_or(0, |l| l.semantic[i]);
            img.set_pixel(pix / width, pix % width, d, cloud.reflectance()[i], label);
        }
    }
    (img, map)
}

pub fn occlusion_stats(map: &IndexMap) -> OcclusionStats {
    OcclusionStats {
        n_points: map.point_to_pixel.len(),
        n_projected: map.pixel_to_point.iter().filter(|p| p.is_some()).count(),
        n_occluded: map.occluded.len(),
        n_out_of_range: map.out_of_range.len(),
    }
}

/// Per-point labels read back from a per-pixel label image. Occluded points
/// take the label of the pixel they fell into; out-of-range points get 0.
pub fn backproject_labels(map: &IndexMap, label_image: &[u16], n_points: usize) -> Result<Vec<u16>> {
    if n_points != map.point_to_pixel.len() {
        return Err(Error::shape(format!(
            "index map covers {} points, asked for {n_points}",
            map.point_to_pixel.len()
        )));
    }
    if label_image.len() != map.height * map.width {
        return Err(Error::shape(format!(
            "label image has {} pixels, index map {}x{}",
            label_image.len(),
            map.height,
            map.width
        )));
    }
    Ok(map
        .point_to_pixel
        .iter()
        .map(|px| px.map_or(0, |(r, c)| label_image[r * map.width + c]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: &[[f32; 3]]) -> PointCloud {
        PointCloud::new(points.to_vec(), vec![0.5; points.len()]).unwrap()
    }

    #[test]
    fn columns_at_cardinal_directions() {
        let c = cloud(&[[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        assert_eq!(get_columns(&c, 2048).unwrap(), vec![0, 512, 1024]);
    }

    #[test]
    fn column_at_minus_pi_wraps_to_zero() {
        assert_eq!(column_of(-PI, 2048), 0);
        assert_eq!(column_of(PI, 2048), 0);
        // Just below the rear cut on the negative side lands in the last column.
        assert_eq!(column_of(-PI + 1e-9, 2048), 2047);
    }

    #[test]
    fn origin_point_has_no_column() {
        let c = cloud(&[[1.0, 0.0, 0.0], [0.0, 0.0, 2.0]]);
        assert!(matches!(get_columns(&c, 16), Err(Error::Geometry(_))));
    }

    #[test]
    fn literal_rows_hand_trace() {
        let phi: Vec<f64> = [170.0f64, 169.8, 169.6, 170.0, 169.8, 169.6]
            .iter()
            .map(|d| d.to_radians())
            .collect();
        let rows = rows_from_azimuths(&phi, 0.3f64.to_radians(), RowMode::Literal);
        assert_eq!(rows, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn single_and_empty_rows() {
        assert_eq!(get_rows(&cloud(&[[1.0, 1.0, 0.0]]), 0.01, RowMode::Literal), vec![0]);
        assert!(get_rows(&PointCloud::default(), 0.01, RowMode::Literal).is_empty());
    }

    #[test]
    fn robust_mode_ignores_gaps_inside_a_line() {
        let deg = [10.0f64, 9.8, 5.0, 4.8, -170.0, -179.9, 179.9, 179.7];
        let phi: Vec<f64> = deg.iter().map(|d| d.to_radians()).collect();
        let thr = 0.3f64.to_radians();
        assert_eq!(
            rows_from_azimuths(&phi, thr, RowMode::Robust),
            vec![0, 0, 0, 0, 0, 0, 1, 1]
        );
        assert_eq!(
            rows_from_azimuths(&phi, thr, RowMode::Literal),
            vec![0, 0, 1, 1, 2, 3, 4, 4]
        );
    }

    #[test]
    fn nearest_point_wins_a_shared_pixel() {
        // Same direction, depths 10 then 5.
        let c = cloud(&[[10.0, 0.0, 0.0], [5.0, 0.0, 0.0]]);
        let labels = LabelArray::from_semantic(vec![3, 4]);
        let params = UnfoldParams {
            height: 4,
            width: 8,
            ..Default::default()
        };
        let (img, map) = unfold_scan(&c, Some(&labels), &params).unwrap();
        let pix = map.point_to_pixel[1].unwrap();
        assert_eq!(map.point_to_pixel[0], Some(pix));
        assert_eq!(img.depth()[pix.0 * 8 + pix.1], 5.0);
        assert_eq!(img.label()[pix.0 * 8 + pix.1], 4);
        assert_eq!(map.occluded, vec![0]);
        assert_eq!(
            occlusion_stats(&map),
            OcclusionStats {
                n_points: 2,
                n_projected: 1,
                n_occluded: 1,
                n_out_of_range: 0
            }
        );
        // The occluded point inherits its occluder's label.
        assert_eq!(backproject_labels(&map, img.label(), 2).unwrap(), vec![4, 4]);
    }

    #[test]
    fn equal_depths_resolve_by_index() {
        let c = cloud(&[[0.0, 3.0, 0.0], [0.0, 3.0, 0.0]]);
        let (_, map) = unfold_scan(&c, None, &UnfoldParams::default()).unwrap();
        assert_eq!(map.occluded, vec![0]);
    }

    #[test]
    fn empty_cloud_gives_empty_image() {
        let (img, map) = unfold_scan(&PointCloud::default(), None, &UnfoldParams::default()).unwrap();
        assert_eq!(img.valid_pixels(), 0);
        assert_eq!(occlusion_stats(&map), OcclusionStats::default());
        let (img, _) = project_ego_corrected(&PointCloud::default(), None, &SphericalParams::default()).unwrap();
        assert!(img.mask().iter().all(|m| !m));
    }

    #[test]
    fn rows_past_the_grid_are_out_of_range() {
        // Three crossovers produce rows 0..=3; a 2-row grid keeps only rows 0 and 1.
        let c = cloud(&[[-1.0, 0.1, 0.0], [-1.0, -0.1, 0.0], [-1.0, 0.1, 0.0], [-1.0, -0.1, 0.0]]);
        let params = UnfoldParams {
            height: 2,
            width: 16,
            ..Default::default()
        };
        let (img, map) = unfold_scan(&c, Some(&LabelArray::from_semantic(vec![1; 4])), &params).unwrap();
        assert_eq!(map.out_of_range, vec![2, 3]);
        assert_eq!(map.point_to_pixel[3], None);
        assert_eq!(img.valid_pixels(), 2);
        let back = backproject_labels(&map, img.label(), 4).unwrap();
        assert_eq!(back, vec![1, 1, 0, 0]);
    }

    #[test]
    fn elevation_rows_at_fov_edges() {
        let (up, down) = (3f64.to_radians(), (-25f64).to_radians());
        assert_eq!(elevation_row(up, 64, up, down), 0);
        assert_eq!(elevation_row(down, 64, up, down), 63);
        assert_eq!(elevation_row(up + 0.5, 64, up, down), 0);
        assert_eq!(elevation_row(down - 0.5, 64, up, down), 63);
    }

    #[test]
    fn inverted_fov_is_rejected() {
        let params = SphericalParams {
            fov_up: -30.0,
            ..Default::default()
        };
        assert!(project_ego_corrected(&cloud(&[[1.0, 0.0, 0.0]]), None, &params).is_err());
    }

    #[test]
    fn backprojection_checks_lengths() {
        let c = cloud(&[[1.0, 0.0, 0.0]]);
        let (img, map) = unfold_scan(&c, None, &UnfoldParams::default()).unwrap();
        assert!(backproject_labels(&map, img.label(), 2).is_err());
        assert!(backproject_labels(&map, &img.label()[1..], 1).is_err());
    }
}
