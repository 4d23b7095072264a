//! Counter-based random number generation for reproducible parallel simulation.
//!
//! Brownian increments are a pure function of `(seed, step_index, coordinate)`,
//! so a sample path never depends on how many worker threads are running or on
//! which checkpoints are stored. Refining the checkpoint set replays the exact
//! same noise, and per-path seeds derived from a master seed give independent
//! streams without shared state.
//!
//! The mixer is splitmix64; normals come from Box-Muller on two hashed
//! uniforms:
//!
//! ```text
//! z = sqrt(-2 ln u1) * cos(2 pi u2),   u1, u2 ~ Uniform(0,1)
//! ```

/// splitmix64 finalizer; bijective on u64.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key pair into the seed. Each argument passes through its own
/// full splitmix round so nearby counters decorrelate.
#[inline]
fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
    z = splitmix64(z ^ a.wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(z ^ b.wrapping_mul(0x9FB2_1C65_1E98_DF25))
}

/// Uniform in the open interval (0, 1); never returns 0 or 1, so logs are safe.
#[inline]
fn to_unit(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal draw keyed by `(seed, step, coord)`.
#[inline]
pub fn standard_normal(seed: u64, step: u64, coord: u64) -> f64 {
    let u1 = to_unit(mix3(seed, step, 2 * coord));
    let u2 = to_unit(mix3(seed, step, 2 * coord + 1));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Seed for path `index` in an ensemble keyed by `master`.
#[inline]
pub fn path_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Small sequential generator for sampling test points; not used on the
/// simulation noise path.
#[derive(Debug, Clone)]
pub struct SeqRng {
    state: u64,
}

impl SeqRng {
    pub fn new(seed: u64) -> Self {
        Self {
            state: splitmix64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        splitmix64(self.state)
    }

    /// Uniform in (0, 1).
    pub fn uniform(&mut self) -> f64 {
        to_unit(self.next_u64())
    }

    /// Uniform in (lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
