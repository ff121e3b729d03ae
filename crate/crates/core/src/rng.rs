//! Counter-based deterministic random numbers.
//!
//! Every word is a pure function of `(seed, stream, index, lane)`. There is no
//! hidden state, so an operator regenerated during a backward replay sees the
//! same draws as it did the first time, regardless of evaluation order.
//!
//! The mixing function is the SplitMix64 finalizer (Steele, Lea & Flood):
//!
//! ```text
//! mix(z) = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!          z ^= z >> 27; z *= 0x94D049BB133111EB;
//!          z ^= z >> 31
//! ```
//!
//! and a word is
//!
//! ```text
//! k1   = mix(seed + GOLDEN)
//! k2   = mix(k1 ^ (stream * STREAM_MUL))
//! k3   = mix(k2 ^ (index * GOLDEN))
//! word = mix(k3 + (lane + 1) * LANE_MUL)
//! ```
//!
//! with `GOLDEN = 0x9E3779B97F4A7C15`, `STREAM_MUL = 0xD1B54A32D192ED03` and
//! `LANE_MUL = 0xD6E8FEB86659FD93`, all arithmetic wrapping mod 2^64.
//!
//! Variates use fixed transforms:
//! * uniform on [0, 1): `(word >> 11) * 2^-53`
//! * uniform on (0, 1): `((word >> 11) + 0.5) * 2^-53`
//! * standard normal: Box–Muller cosine branch on lanes `2j` and `2j + 1`,
//!   `sqrt(-2 ln u1) * cos(2π u2)` with both uniforms on (0, 1).

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const STREAM_MUL: u64 = 0xD1B5_4A32_D192_ED03;
const LANE_MUL: u64 = 0xD6E8_FEB8_6659_FD93;

/// Named stream identifiers so independent consumers never share draws.
pub mod stream {
    pub const NOISE: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const COIN: u64 = 3;
    pub const INIT: u64 = 4;
    pub const PAIRS: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const DATA: u64 = 7;
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The word at `(seed, stream, index, lane)`.
#[inline]
pub fn counter_word(seed: u64, stream: u64, index: u64, lane: u64) -> u64 {
    let k1 = mix(seed.wrapping_add(GOLDEN));
    let k2 = mix(k1 ^ stream.wrapping_mul(STREAM_MUL));
    let k3 = mix(k2 ^ index.wrapping_mul(GOLDEN));
    mix(k3.wrapping_add(lane.wrapping_add(1).wrapping_mul(LANE_MUL)))
}

/// Lane 0 of [`counter_word`].
#[inline]
pub fn seeded_rng(seed: u64, stream: u64, index: u64) -> u64 {
    counter_word(seed, stream, index, 0)
}

#[inline]
pub fn to_unit(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[inline]
pub fn to_open_unit(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// A cursor over the lanes of one `(seed, stream, index)` cell.
///
/// `Draws` is a convenience for consumers that need several variates per
/// index (a noise vector, a batch of coordinates). It is cheap to construct
/// and restarting it at lane 0 reproduces the same values.
#[derive(Debug, Clone)]
pub struct Draws {
    seed: u64,
    stream: u64,
    index: u64,
    lane: u64,
}

impl Draws {
    pub fn new(seed: u64, stream: u64, index: u64) -> Self {
        Self {
            seed,
            stream,
            index,
            lane: 0,
        }
    }

    #[inline]
    pub fn next_word(&mut self) -> u64 {
        let w = counter_word(self.seed, self.stream, self.index, self.lane);
        self.lane += 1;
        w
    }

    pub fn uniform(&mut self) -> f64 {
        to_unit(self.next_word())
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via the Box–Muller cosine branch. Consumes two lanes.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = to_open_unit(self.next_word());
        let u2 = to_open_unit(self.next_word());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[0, bound)` by 128-bit multiply-shift.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        ((self.next_word() as u128 * bound as u128) >> 64) as u64
    }

    pub fn coin(&mut self) -> bool {
        self.next_word() >> 63 == 1
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
