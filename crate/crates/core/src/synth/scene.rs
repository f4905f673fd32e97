use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const HIT_EPS: f64 = 1e-6;
pub const GROUND_CLASS: u16 = 1;

/// A labeled solid. Boxes are axis aligned, cylinders vertical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Primitive {
    Box {
        class: u16,
        min: [f64; 3],
        max: [f64; 3],
    },
    Cylinder {
        class: u16,
        center: [f64; 2],
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
    Sphere {
        class: u16,
        center: [f64; 3],
        radius: f64,
    },
}

impl Primitive {
    pub fn class(&self) -> u16 {
        match *self {
            Primitive::Box { class, .. } | Primitive::Cylinder { class, .. } | Primitive::Sphere { class, .. } => class,
        }
    }

    fn has_positive_extent(&self) -> bool {
        match *self {
            Primitive::Box { min, max, .. } => (0..3).all(|a| max[a] > min[a]),
            Primitive::Cylinder {
                radius, z_min, z_max, ..
            } => radius > 0.0 && z_max > z_min,
            Primitive::Sphere { radius, .. } => radius > 0.0,
        }
    }

    /// Nearest ray parameter `t > 0` where `origin + t * dir` meets the surface.
    fn intersect(&self, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
        match *self {
            Primitive::Box { min, max, .. } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if d[a].abs() < 1e-15 {
                        if o[a] < min[a] || o[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let (mut near, mut far) = ((min[a] - o[a]) / d[a], (max[a] - o[a]) / d[a]);
                    if near > far {
                        std::mem::swap(&mut near, &mut far);
                    }
                    t0 = t0.max(near);
                    t1 = t1.min(far);
                }
                if t0 > t1 {
                    None
                } else {
                    nearest_positive([t0, t1])
                }
            }
            Primitive::Cylinder {
                center,
                radius,
                z_min,
                z_max,
                ..
            } => {
                let (px, py) = (o[0] - center[0], o[1] - center[1]);
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > HIT_EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d[0] * d[0] + d[1] * d[1];
                if a > 1e-15 {
                    let b = 2.0 * (px * d[0] + py * d[1]);
                    let c = px * px + py * py - radius * radius;
                    let disc = b * b - 4.0 * a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                            let z = o[2] + t * d[2];
                            if (z_min..=z_max).contains(&z) {
                                consider(t);
                            }
                        }
                    }
                }
                if d[2].abs() > 1e-15 {
                    for zc in [z_min, z_max] {
                        let t = (zc - o[2]) / d[2];
                        let (x, y) = (px + t * d[0], py + t * d[1]);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
            Primitive::Sphere { center, radius, .. } => {
                let p = [0, 1, 2].map(|a| o[a] - center[a]);
                let b = p[0] * d[0] + p[1] * d[1] + p[2] * d[2];
                let c = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                nearest_positive([-b - sq, -b + sq])
            }
        }
    }
}

fn nearest_positive(ts: [f64; 2]) -> Option<f64> {
    ts.into_iter().filter(|&t| t > HIT_EPS).reduce(f64::min)
}

/// Static world: a ground plane plus labeled primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub ground_z: f64,
    #[serde(default = "default_ground_class")]
    pub ground_class: u16,
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub seed: u64,
    /// Standard deviation of azimuth and elevation jitter, degrees.
    #[serde(default)]
    pub noise_deg: f64,
    /// Forward (+x) speed in m/s.
    #[serde(default)]
    pub ego_velocity: f64,
    /// Class ids must lie in `[1, num_classes)`.
    #[serde(default = "default_num_classes")]
    pub num_classes: u16,
}

fn default_ground_class() -> u16 {
    GROUND_CLASS
}

fn default_num_classes() -> u16 {
    20
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            ground_z: -1.73,
            ground_class: GROUND_CLASS,
            primitives: Vec::new(),
            seed: 0,
            noise_deg: 0.0,
            ego_velocity: 0.0,
            num_classes: default_num_classes(),
        }
    }
}

pub(crate) struct Hit {
    pub t: f64,
    pub class: u16,
    /// 0 for the ground, primitive index + 1 otherwise.
    pub instance: u16,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let class_ok = |c: u16| c >= 1 && c < self.num_classes;
        if !class_ok(self.ground_class) {
            return Err(Error::config(format!(
                "ground class {} outside [1, {})",
                self.ground_class, self.num_classes
            )));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if !class_ok(p.class()) {
                return Err(Error::config(format!(
                    "primitive {i} has class {} outside [1, {})",
                    p.class(),
                    self.num_classes
                )));
            }
            if !p.has_positive_extent() {
                return Err(Error::config(format!("primitive {i} has a non-positive extent")));
            }
        }
        if !(self.noise_deg >= 0.0 && self.noise_deg.is_finite()) {
            return Err(Error::config("noise_deg must be finite and >= 0"));
        }
        if !self.ego_velocity.is_finite() || !self.ground_z.is_finite() {
            return Err(Error::config("ego_velocity and ground_z must be finite"));
        }
        Ok(())
    }

    pub(crate) fn cast(&self, origin: [f64; 3], dir: [f64; 3], max_range: f64) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        if dir[2] < -1e-15 {
            let t = (self.ground_z - origin[2]) / dir[2];
            if t > HIT_EPS {
                best = Some(Hit {
                    t,
                    class: self.ground_class,
                    instance: 0,
                });
            }
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(t) = p.intersect(origin, dir) {
                if best.as_ref().is_none_or(|b| t < b.t) {
                    best = Some(Hit {
                        t,
                        class: p.class(),
                        instance: u16::try_from(i + 1).unwrap_or(u16::MAX),
                    });
                }
            }
        }
        best.filter(|h| h.t <= max_range)
    }

    /// A street-like scene drawn from `seed` with `n_classes` labeled
    /// classes (ids `1..=n_classes`, clamped to 3..=6):
    ///
    /// 1 ground, 2 enclosing wall, 3 cars, 4 poles, 5 bushes, 6 trucks.
    ///
    /// The wall closes the scene so every ray of a +3..-25 degree sensor
    /// returns, and one car always sits just behind the vehicle near the
    /// rear cut.
    pub fn random(seed: u64, n_classes: u16, ego_velocity: f64) -> Self {
        let n_classes = n_classes.clamp(3, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE7_E5EE_D000_0000);
        let ground_z = -1.73;
        let mut primitives = vec![Primitive::Cylinder {
            class: 2,
            center: [0.0, 0.0],
            radius: rng.random_range(25.0..40.0),
            z_min: ground_z - 1.0,
            z_max: 8.0,
        }];

        let place = |rng: &mut ChaCha8Rng, r: std::ops::Range<f64>| {
            let (dist, ang) = (rng.random_range(r), rng.random_range(-PI..PI));
            (dist * ang.cos(), dist * ang.sin())
        };
        let aabb = |cx: f64, cy: f64, half: [f64; 2], h: f64| Primitive::Box {
            class: 0,
            min: [cx - half[0], cy - half[1], ground_z],
            max: [cx + half[0], cy + half[1], ground_z + h],
        };
        let with_class = |p: Primitive, class: u16| match p {
            Primitive::Box { min, max, .. } => Primitive::Box { class, min, max },
            other => other,
        };

        // One car right behind the vehicle, across the rear cut.
        let rear_x = -rng.random_range(6.0..9.0);
        primitives.push(with_class(
            aabb(rear_x, rng.random_range(-1.0..1.0), [2.2, 0.9], 1.5),
            3,
        ));
        for _ in 0..rng.random_range(5..10) {
            let (cx, cy) = place(&mut rng, 6.0..18.0);
            let half = [rng.random_range(1.8..2.5), rng.random_range(0.8..1.0)];
            let h = rng.random_range(1.3..1.8);
            primitives.push(with_class(aabb(cx, cy, half, h), 3));
        }
        if n_classes >= 4 {
            for _ in 0..rng.random_range(3..8) {
                let (cx, cy) = place(&mut rng, 4.0..20.0);
                primitives.push(Primitive::Cylinder {
                    class: 4,
                    center: [cx, cy],
                    radius: rng.random_range(0.1..0.25),
                    z_min: ground_z,
                    z_max: ground_z + rng.random_range(3.0..5.0),
                });
            }
        }
        if n_classes >= 5 {
            for _ in 0..rng.random_range(3..7) {
                let (cx, cy) = place(&mut rng, 6.0..20.0);
                let r = rng.random_range(0.6..1.5);
                primitives.push(Primitive::Sphere {
                    class: 5,
                    center: [cx, cy, ground_z + 0.6 * r],
                    radius: r,
                });
            }
        }
        if n_classes >= 6 {
            for _ in 0..rng.random_range(1..4) {
                let (cx, cy) = place(&mut rng, 10.0..20.0);
                let half = [rng.random_range(3.0..4.5), rng.random_range(1.15..1.3)];
                let h = rng.random_range(3.0..3.8);
                primitives.push(with_class(aabb(cx, cy, half, h), 6));
            }
        }

        Self {
            ground_z,
            ground_class: GROUND_CLASS,
            primitives,
            seed,
            noise_deg: 0.0,
            ego_velocity,
            num_classes: n_classes + 1,
        }
    }
}

/// Material reflectance with range falloff, in [0, 1].
pub(crate) fn reflectance(class: u16, range: f64) -> f32 {
    let base = 0.25 + 0.6 * (f64::from(class) * 0.618_034).fract();
    (base * (-range / 200.0).exp()).clamp(0.0, 1.0) as f32
}
