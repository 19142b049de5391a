//! Integer-only dichotomic clock-offset recovery.
//!
//! The receiver reconstructs the clock offset bit by bit, least significant
//! first. For each level it tallies a counter `C` of matching minus
//! mismatching detections inside the acceptance window (the middle half of
//! each group); `C < 0` sets the corresponding offset bit. Only integer
//! additions, comparisons, and bit-shifts are used.

use thiserror::Error;

use crate::channel::DetectionSet;
use crate::pattern::MAX_LEVEL_CAP;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecoveryError {
    #[error("l_max must be in 1..={MAX_LEVEL_CAP}, got {0}")]
    InvalidMaxLevel(u32),
    #[error("d_i must be in 1..={n_levels}, got {d_i}")]
    InvalidInterleaving { d_i: u32, n_levels: u32 },
}

/// Outcome of one offset recovery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryResult {
    /// Recovered offset in timebins; positive when the receiver clock runs
    /// ahead of the transmitter.
    pub delta_timebins: i64,
    /// Offset in symbols, `delta_timebins / 2` rounded toward zero.
    pub delta_symbols: i64,
    /// Final counter value per level, index 0 to `l_max`.
    pub level_counters: Vec<i64>,
    /// Inner-loop iterations executed, the time-complexity observable.
    pub loop_iterations: u64,
    /// True when the detection set was empty; the offset is then 0 by default.
    pub no_data: bool,
}

/// Recovers the clock offset from sorted detection timebin indices.
///
/// Per level `l` the expected bit of a detection shifted by the running offset
/// is `LSB(((D + delta) >> 1 << 1) >> l)`, compared against `LSB(D + delta)`.
/// The acceptance window `[2^(l_max-1), N_s_g - 2^(l_max-1))` discards the
/// first and last quarter of each group so that, for in-range offsets, the
/// remaining detections are guaranteed to belong to the assumed level. A
/// resume index remembers where the current group's detections start, so each
/// detection is scanned once per level sharing its group.
pub fn recover_offset(
    l_max: u32,
    d_i: u32,
    detections: &DetectionSet,
) -> Result<RecoveryResult, RecoveryError> {
    if !(1..=MAX_LEVEL_CAP).contains(&l_max) {
        return Err(RecoveryError::InvalidMaxLevel(l_max));
    }
    let n_levels = l_max + 1;
    if d_i < 1 || d_i > n_levels {
        return Err(RecoveryError::InvalidInterleaving { d_i, n_levels });
    }

    let data = detections.timebins();
    let n_s_g: u64 = 1 << (l_max + 1);
    let window_lo: u64 = 1 << (l_max - 1);
    let window_hi: u64 = n_s_g - window_lo;

    let mut delta: u64 = 0; // accumulated offset, negated at the end
    let mut group_start: usize = 0; // resume index of the current group
    let mut level_counters = vec![0i64; n_levels as usize];
    let mut loop_iterations: u64 = 0;

    for level in 0..=l_max {
        let mut counter: i64 = 0;
        let g_req = (level / d_i) as u64;
        let mut k = group_start;
        while k < data.len() {
            loop_iterations += 1;
            let tb = data[k];
            let k_s = tb >> 1;
            let g = k_s >> n_levels;
            if g > g_req {
                let g_req_next = ((level + 1) / d_i) as u64;
                if g_req_next > g_req {
                    group_start = k;
                }
                break;
            }
            let k_s_g = k_s & (n_s_g - 1);
            if k_s_g >= window_lo && k_s_g < window_hi {
                let shifted = tb + delta;
                let expected = ((shifted >> 1) << 1) >> level & 1;
                let s = shifted & 1;
                if s == expected {
                    counter += 1;
                } else {
                    counter -= 1;
                }
            }
            k += 1;
        }
        level_counters[level as usize] = counter;
        if counter < 0 {
            delta += 1 << level;
        }
    }

    // Map the accumulated value into [-2^l_max, 2^l_max] and flip the sign so
    // that a receiver clock running ahead yields a positive offset.
    let mut signed = delta as i64;
    if signed > 1i64 << l_max {
        signed -= 1i64 << (l_max + 1);
    }
    let delta_timebins = -signed;

    Ok(RecoveryResult {
        delta_timebins,
        delta_symbols: delta_timebins / 2,
        level_counters,
        loop_iterations,
        no_data: data.is_empty(),
    })
}

/// True when `delta` (in timebins) lies inside the recoverable symbol-offset
/// range `[-2^(l_max-1), 2^(l_max-1) - 1]`.
///
/// The published bound excludes the upper symbol offset `2^(l_max-1) - 1`,
/// yet the worked example recovers exactly that value; the inclusive upper
/// bound reflects the observed behavior.
pub fn verify_range(delta_timebins: i64, l_max: u32) -> bool {
    if !(1..=MAX_LEVEL_CAP).contains(&l_max) {
        return false;
    }
    let max_symbols = 1i64 << (l_max - 1);
    let symbols = delta_timebins / 2;
    (-max_symbols..=max_symbols - 1).contains(&symbols)
}
