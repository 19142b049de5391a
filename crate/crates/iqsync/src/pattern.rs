//! Synchronization pattern generation.
//!
//! The pattern is built from `N_ℓ = l_max + 1` levels. Level `ℓ ≥ 1` encodes
//! bit `ℓ - 1` of the symbol index; level 0 transmits the constant symbol 0 and
//! exists only to resolve sub-symbol (timebin) alignment. Levels are interleaved
//! in groups of `d_i`: within a group, each symbol picks one of the group's
//! levels uniformly at random and transmits that level's bit.
//!
//! Generation is streaming with O(1) state, so paper-scale patterns
//! (`l_max = 28`, ~1.5e10 symbols) can be walked without materializing them.

use thiserror::Error;

/// Largest supported maximum level. Keeps every timebin index (two per symbol,
/// plus offset margin) inside `u64`.
pub const MAX_LEVEL_CAP: u32 = 56;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatternError {
    #[error("l_max must be in 1..={MAX_LEVEL_CAP}, got {0}")]
    InvalidMaxLevel(u32),
    #[error("d_i must be in 1..={n_levels}, got {d_i}")]
    InvalidInterleaving { d_i: u32, n_levels: u32 },
    #[error("symbol duration must be positive")]
    InvalidSymbolDuration,
    #[error("symbol index {k_s} out of range (total symbols {n_s})")]
    SymbolIndexOutOfRange { k_s: u64, n_s: u64 },
    #[error("packed pattern truncated or malformed")]
    MalformedPacked,
}

/// Protocol parameters plus the seed of the level selector.
///
/// `t_s_ps` is the symbol duration in picoseconds; a symbol spans two timebins
/// (binary PPM), so the timebin duration is `t_s_ps / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncConfig {
    l_max: u32,
    d_i: u32,
    seed: u64,
    t_s_ps: u64,
}

/// The four counts derived from `(l_max, d_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    /// Number of levels, `l_max + 1`.
    pub n_levels: u32,
    /// Number of groups, `ceil(n_levels / d_i)`.
    pub n_groups: u32,
    /// Symbols per group, `2^(l_max + 1)`.
    pub symbols_per_group: u64,
    /// Total pattern length in symbols.
    pub total_symbols: u64,
}

/// Maximum recoverable clock offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxOffset {
    /// `2^(l_max - 1)` symbols.
    pub symbols: u64,
    /// The same offset expressed in picoseconds.
    pub picoseconds: u128,
}

impl MaxOffset {
    pub fn seconds(&self) -> f64 {
        self.picoseconds as f64 * 1e-12
    }
}

impl SyncConfig {
    pub fn new(l_max: u32, d_i: u32, seed: u64, t_s_ps: u64) -> Result<Self, PatternError> {
        if !(1..=MAX_LEVEL_CAP).contains(&l_max) {
            return Err(PatternError::InvalidMaxLevel(l_max));
        }
        let n_levels = l_max + 1;
        if d_i < 1 || d_i > n_levels {
            return Err(PatternError::InvalidInterleaving { d_i, n_levels });
        }
        if t_s_ps == 0 {
            return Err(PatternError::InvalidSymbolDuration);
        }
        Ok(SyncConfig {
            l_max,
            d_i,
            seed,
            t_s_ps,
        })
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn d_i(&self) -> u32 {
        self.d_i
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn t_s_ps(&self) -> u64 {
        self.t_s_ps
    }

    /// Timebin duration in picoseconds (two timebins per symbol).
    pub fn timebin_ps(&self) -> f64 {
        self.t_s_ps as f64 / 2.0
    }

    pub fn counts(&self) -> Counts {
        let n_levels = self.l_max + 1;
        let n_groups = n_levels.div_ceil(self.d_i);
        let symbols_per_group = 1u64 << (self.l_max + 1);
        Counts {
            n_levels,
            n_groups,
            symbols_per_group,
            total_symbols: symbols_per_group * n_groups as u64,
        }
    }

    /// Maximum recoverable offset, in symbols and picoseconds.
    pub fn max_offset(&self) -> MaxOffset {
        let symbols = 1u64 << (self.l_max - 1);
        MaxOffset {
            symbols,
            picoseconds: symbols as u128 * self.t_s_ps as u128,
        }
    }

    /// Total pattern duration `N_s * t_s` in seconds.
    pub fn pattern_duration_secs(&self) -> f64 {
        self.counts().total_symbols as f64 * self.t_s_ps as f64 * 1e-12
    }

    /// Inclusive level range `[lo, hi]` of the group containing symbol `k_s`.
    fn level_range(&self, k_s: u64) -> (u32, u32) {
        let n_levels = self.l_max + 1;
        let k_g = (k_s >> n_levels) as u32;
        let lo = k_g * self.d_i;
        let hi = (lo + self.d_i - 1).min(self.l_max);
        (lo, hi)
    }

    /// The symbol transmitted at index `k_s`, with the level chosen by `levels`.
    pub fn symbol_at<S: LevelSource>(
        &self,
        levels: &S,
        k_s: u64,
    ) -> Result<SymbolRecord, PatternError> {
        let counts = self.counts();
        if k_s >= counts.total_symbols {
            return Err(PatternError::SymbolIndexOutOfRange {
                k_s,
                n_s: counts.total_symbols,
            });
        }
        Ok(self.symbol_at_unchecked(levels, k_s))
    }

    #[inline]
    fn symbol_at_unchecked<S: LevelSource>(&self, levels: &S, k_s: u64) -> SymbolRecord {
        let (lo, hi) = self.level_range(k_s);
        let level = levels.choose(k_s, lo, hi);
        debug_assert!((lo..=hi).contains(&level));
        // s = LSB((k_s << 1) >> level); level 0 always yields 0.
        let symbol = (((k_s << 1) >> level) & 1) as u8;
        SymbolRecord {
            k_s,
            k_g: k_s >> (self.l_max + 1),
            level,
            symbol,
        }
    }

    /// Streaming pattern iterator using the config's own seeded selector.
    pub fn pattern(&self) -> PatternIter<LevelSelector> {
        self.pattern_with(LevelSelector::new(self.seed))
    }

    /// Streaming pattern iterator with a caller-provided level source.
    pub fn pattern_with<S: LevelSource>(&self, levels: S) -> PatternIter<S> {
        PatternIter {
            config: *self,
            levels,
            next: 0,
            total: self.counts().total_symbols,
        }
    }
}

/// One generated symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolRecord {
    /// Symbol index within the pattern.
    pub k_s: u64,
    /// Group index, `k_s >> n_levels`.
    pub k_g: u64,
    /// Level the symbol was taken from.
    pub level: u32,
    /// Transmitted bit.
    pub symbol: u8,
}

/// Source of per-symbol level choices.
///
/// Implementations must be deterministic in `k_s` so that the pattern can be
/// addressed randomly (the channel simulator skips over undetected symbols).
pub trait LevelSource {
    /// Level for symbol `k_s`, drawn from the inclusive range `[lo, hi]`.
    fn choose(&self, k_s: u64, lo: u32, hi: u32) -> u32;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; full 64-bit avalanche.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-mode pseudorandom level selector.
///
/// Each symbol index maps to an independent 64-bit word via a SplitMix-style
/// mix of `(seed, k_s)`, so the stream is both sequentially iterable and
/// randomly addressable. Non-power-of-two spans use rejection sampling on the
/// masked low bits, which keeps every draw unbiased.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelSelector {
    seed: u64,
}

impl LevelSelector {
    pub fn new(seed: u64) -> Self {
        LevelSelector { seed }
    }
}

impl LevelSource for LevelSelector {
    fn choose(&self, k_s: u64, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        let span = (hi - lo + 1) as u64;
        if span == 1 {
            return lo;
        }
        let mask = span.next_power_of_two() - 1;
        let mut word = mix64(self.seed ^ mix64(k_s.wrapping_add(GOLDEN)));
        loop {
            let candidate = word & mask;
            if candidate < span {
                return lo + candidate as u32;
            }
            word = mix64(word.wrapping_add(GOLDEN));
        }
    }
}

/// Fixed per-symbol level choices, used to reproduce published example
/// patterns and to pin levels in tests.
#[derive(Debug, Clone)]
pub struct FixedLevels(pub Vec<u32>);

impl LevelSource for FixedLevels {
    fn choose(&self, k_s: u64, lo: u32, hi: u32) -> u32 {
        let level = self.0[k_s as usize];
        debug_assert!(
            (lo..=hi).contains(&level),
            "fixed level {level} outside group range [{lo}, {hi}] at k_s={k_s}"
        );
        level
    }
}

/// Streaming iterator over the full pattern, O(1) state.
#[derive(Debug, Clone)]
pub struct PatternIter<S: LevelSource> {
    config: SyncConfig,
    levels: S,
    next: u64,
    total: u64,
}

impl<S: LevelSource> Iterator for PatternIter<S> {
    type Item = SymbolRecord;

    fn next(&mut self) -> Option<SymbolRecord> {
        if self.next >= self.total {
            return None;
        }
        let record = self.config.symbol_at_unchecked(&self.levels, self.next);
        self.next += 1;
        Some(record)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining = (self.total - self.next) as usize;
        (remaining, Some(remaining))
    }
}

impl<S: LevelSource> ExactSizeIterator for PatternIter<S> {}

/// Packs symbol bits little-endian within bytes, prefixed with the symbol
/// count as a little-endian `u64`. Intended for small golden exports only.
pub fn pack_symbols<I: IntoIterator<Item = u8>>(symbols: I) -> Vec<u8> {
    let mut bits = Vec::new();
    let mut count: u64 = 0;
    for s in symbols {
        let bit_index = (count % 8) as u32;
        if bit_index == 0 {
            bits.push(0u8);
        }
        if s & 1 == 1 {
            *bits.last_mut().unwrap() |= 1 << bit_index;
        }
        count += 1;
    }
    let mut out = Vec::with_capacity(8 + bits.len());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&bits);
    out
}

/// Inverse of [`pack_symbols`].
pub fn unpack_symbols(packed: &[u8]) -> Result<Vec<u8>, PatternError> {
    if packed.len() < 8 {
        return Err(PatternError::MalformedPacked);
    }
    let count = u64::from_le_bytes(packed[..8].try_into().unwrap());
    let n_bytes = count.div_ceil(8) as usize;
    if packed.len() != 8 + n_bytes {
        return Err(PatternError::MalformedPacked);
    }
    let mut symbols = Vec::with_capacity(count as usize);
    for k in 0..count {
        let byte = packed[8 + (k / 8) as usize];
        symbols.push((byte >> (k % 8)) & 1);
    }
    Ok(symbols)
}
