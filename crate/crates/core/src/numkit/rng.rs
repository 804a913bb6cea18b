use super::matrix::{Matrix, NumError};

/// Identifier of the generator pipeline, recorded in checkpoint headers so a
/// stored model documents exactly how its initialization was drawn.
pub const RNG_ALGORITHM: &str = "splitmix64-seed/xoshiro256++/box-muller";

/// Deterministic pseudo-random generator: xoshiro256++ seeded via SplitMix64,
/// with Box-Muller for Gaussian draws. Pure u64 arithmetic in the core stream,
/// so the same seed yields the same sequence on every platform.
#[derive(Clone, Debug)]
pub struct RngState {
    s: [u64; 4],
    cached_normal: Option<f64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl RngState {
    pub fn seed_from(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { s, cached_normal: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[0]
            .wrapping_add(s[3])
            .rotate_left(23)
            .wrapping_add(s[0]);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n) without modulo bias (Lemire multiply-shift,
    /// unbounded-rejection variant collapsed to a single widening multiply).
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let n = n as u64;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            let low = m as u64;
            if low >= n.wrapping_neg() % n {
                return (m >> 64) as usize;
            }
        }
    }

    /// Standard normal draw (Box-Muller, second variate cached).
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.below(i + 1);
            slice.swap(i, j);
        }
    }
}

/// Matrix of i.i.d. Gaussian draws, advancing the generator state.
pub fn sample_normal(
    rng: &mut RngState,
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
) -> Result<Matrix, NumError> {
    if std < 0.0 || !std.is_finite() || !mean.is_finite() {
        return Err(NumError::InvalidParameter(format!(
            "sample_normal requires finite mean and std >= 0, got mean={mean}, std={std}"
        )));
    }
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = mean + std * rng.normal();
    }
    Ok(m)
}
