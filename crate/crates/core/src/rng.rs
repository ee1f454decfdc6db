//! Deterministic randomness.
//!
//! Every random choice in the crate (oversampling, batch shuffling, dropout
//! masks, parameter init) draws from [`SplitMix64`], so a seed reproduces the
//! exact same run on any platform. Shuffling is Fisher-Yates from the top
//! index downward.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 generator (Steele, Lea & Flood's mixer).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)`. `n` must be nonzero.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// In-place Fisher-Yates shuffle, walking indices from high to low.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        if xs.len() < 2 {
            return;
        }
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }

    /// Standard normal deviate via Box-Muller (one draw per call).
    pub fn next_normal(&mut self) -> f64 {
        // u1 in (0, 1] keeps the log finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Derive an independent stream seed from a base seed and a purpose tag.
///
/// Used by the training loop so per-epoch shuffles and per-batch dropout
/// masks depend only on (seed, epoch, batch), never on execution history;
/// that is what makes resumed runs line up with uninterrupted ones.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    SplitMix64::new(base ^ tag.wrapping_mul(GOLDEN_GAMMA)).next_u64()
}
