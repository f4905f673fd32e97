use rand::Rng;

/// Uniform in `+/- sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng>(rng: &mut R, values: &mut [f32], fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    for v in values {
        *v = rng.random_range(-limit..=limit);
    }
}
