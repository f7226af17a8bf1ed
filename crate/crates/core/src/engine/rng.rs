/// Additive constant of the splitmix64 generator (golden ratio in 64 bits).
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Advances `state` by one splitmix64 step and returns `(value, new_state)`.
pub fn splitmix64_next(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31), state)
}

/// Stateful wrapper around [`splitmix64_next`].
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        let (value, state) = splitmix64_next(self.state);
        self.state = state;
        value
    }

    /// Uniform draw `value / 2^64`. The conversion rounds to nearest, so the
    /// result lies in `[0, 1]` (1.0 is reachable for values near `u64::MAX`).
    pub fn next_unit(&mut self) -> f64 {
        self.next_u64() as f64 / 18_446_744_073_709_551_616.0
    }

    /// Uniform draw in `[-1, 1)` from the top 53 bits. Used to fill generated
    /// model weights.
    pub fn next_signed_unit(&mut self) -> f64 {
        let mantissa = (self.next_u64() >> 11) as f64;
        mantissa * (2.0 / 9_007_199_254_740_992.0) - 1.0
    }
}
