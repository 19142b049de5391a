//! Quantum-channel and single-photon-detector simulation.
//!
//! Symbols are binary PPM: bit 0 is the early pulse, bit 1 the late pulse, so
//! symbol `k_s` with bit `s` occupies timebin `2*k_s + s`. The simulator
//! injects a clock offset, Bernoulli signal loss, and per-timebin noise, and
//! produces the sorted, deduplicated detection record the recovery algorithm
//! consumes.
//!
//! Signal and noise are sampled by geometric gap-skipping, which draws only the
//! detected positions. This is distribution-exact for a Bernoulli process and
//! keeps simulation cost proportional to the number of detections rather than
//! the pattern length.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::pattern::{LevelSelector, LevelSource, PatternError, SyncConfig};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("probability {name} = {value} outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("fractional offset {0} outside [0, 1)")]
    InvalidFracOffset(f64),
    #[error("jitter sigma {0} must be finite and >= 0")]
    InvalidJitter(f64),
    #[error("timebin index space overflow (total symbols {n_s}, offset {offset})")]
    TimebinOverflow { n_s: u64, offset: i64 },
    #[error("detections not strictly ascending at position {position}")]
    Unsorted { position: usize },
    #[error("no timestamps to align")]
    EmptyTimestamps,
    #[error("timestamp {0} is negative or not finite")]
    InvalidTimestamp(f64),
    #[error("timebin duration must be positive, got {0}")]
    InvalidTimebinDuration(f64),
    #[error("histogram needs at least 8 bins, got {0}")]
    TooFewBins(usize),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Per-symbol link statistics and the injected clock offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Probability of a signal detection per transmitted symbol.
    pub p_sig: f64,
    /// Probability of a noise detection per symbol (split evenly across the
    /// symbol's two timebins).
    pub p_noise: f64,
    /// Injected clock offset in timebins; positive means the receiver clock
    /// runs ahead (detections appear late).
    pub offset_timebins: i64,
    /// Sub-timebin offset as a fraction of one timebin, applied to raw
    /// timestamps only.
    pub frac_offset: f64,
    /// Gaussian timestamp jitter in units of one timebin.
    pub jitter_sigma: f64,
    /// Seed of the detection-process generator.
    pub rng_seed: u64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        for (name, value) in [("p_sig", self.p_sig), ("p_noise", self.p_noise)] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(ChannelError::InvalidProbability { name, value });
            }
        }
        if !(0.0..1.0).contains(&self.frac_offset) {
            return Err(ChannelError::InvalidFracOffset(self.frac_offset));
        }
        if !self.jitter_sigma.is_finite() || self.jitter_sigma < 0.0 {
            return Err(ChannelError::InvalidJitter(self.jitter_sigma));
        }
        Ok(())
    }

    /// Signal probability for a channel attenuation in dB, with a mean photon
    /// number of 1 per symbol: `p_sig = 10^(-eta/10)`.
    pub fn p_sig_from_attenuation_db(eta_db: f64) -> f64 {
        10f64.powf(-eta_db / 10.0)
    }

    /// Attenuation in dB corresponding to `p_sig` (mean photon number 1).
    pub fn attenuation_db(&self) -> f64 {
        -10.0 * self.p_sig.log10()
    }
}

/// Sorted, deduplicated timebin indices observed by the receiver.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectionSet {
    timebins: Vec<u64>,
}

impl DetectionSet {
    /// Wraps an already strictly ascending list; rejects anything else.
    pub fn from_sorted(timebins: Vec<u64>) -> Result<Self, ChannelError> {
        for (i, pair) in timebins.windows(2).enumerate() {
            if pair[0] >= pair[1] {
                return Err(ChannelError::Unsorted { position: i + 1 });
            }
        }
        Ok(DetectionSet { timebins })
    }

    /// Sorts and deduplicates arbitrary input.
    pub fn from_unsorted(mut timebins: Vec<u64>) -> Self {
        timebins.sort_unstable();
        timebins.dedup();
        DetectionSet { timebins }
    }

    pub fn timebins(&self) -> &[u64] {
        &self.timebins
    }

    pub fn len(&self) -> usize {
        self.timebins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timebins.is_empty()
    }

    /// Text form: one decimal timebin index per line, ascending.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), ChannelError> {
        for tb in &self.timebins {
            writeln!(w, "{tb}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, ChannelError> {
        let mut timebins = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let tb: u64 = trimmed.parse().map_err(|e| ChannelError::Parse {
                line: i + 1,
                message: format!("{e}"),
            })?;
            timebins.push(tb);
        }
        Self::from_sorted(timebins)
    }

    /// Binary form: little-endian unsigned 64-bit integers, ascending.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), ChannelError> {
        for tb in &self.timebins {
            w.write_all(&tb.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(bytes: &[u8]) -> Result<Self, ChannelError> {
        if !bytes.len().is_multiple_of(8) {
            return Err(ChannelError::Parse {
                line: 0,
                message: format!("binary length {} is not a multiple of 8", bytes.len()),
            });
        }
        let timebins = bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_sorted(timebins)
    }
}

/// Timebin occupied by symbol `k_s` carrying bit `s` (late pulse encodes 1).
#[inline]
pub fn ppm_timebin(k_s: u64, s: u8) -> u64 {
    2 * k_s + (s & 1) as u64
}

/// Combined per-symbol detection probability `1 - (1 - p_sig)(1 - p_noise)`.
pub fn p_det(p_sig: f64, p_noise: f64) -> f64 {
    1.0 - (1.0 - p_sig) * (1.0 - p_noise)
}

/// Visits the success positions of a Bernoulli(`p`) process over `0..limit`
/// by sampling geometric gaps; exact and O(successes).
fn bernoulli_positions<R: Rng, F: FnMut(u64)>(rng: &mut R, p: f64, limit: u64, mut visit: F) {
    if p <= 0.0 || limit == 0 {
        return;
    }
    if p >= 1.0 {
        for k in 0..limit {
            visit(k);
        }
        return;
    }
    let ln_q = (-p).ln_1p();
    let mut k: u64 = 0;
    loop {
        let u = 1.0 - rng.random::<f64>(); // (0, 1]
        let gap = (u.ln() / ln_q).floor();
        // NaN or oversized gaps both mean no further success in range.
        if gap.is_nan() || gap >= (limit - k) as f64 {
            return;
        }
        k += gap as u64;
        visit(k);
        k += 1;
        if k >= limit {
            return;
        }
    }
}

/// Simulates the detection record at timebin granularity using the config's
/// own seeded level selector.
pub fn simulate_detections(
    config: &SyncConfig,
    link: &LinkParams,
) -> Result<DetectionSet, ChannelError> {
    simulate_detections_with(config, link, &LevelSelector::new(config.seed()))
}

/// Simulation with caller-provided level choices (e.g. pinned example rows).
///
/// For each transmitted symbol a signal detection lands on `2*k_s + s + offset`
/// with probability `p_sig`; independently every timebin of the receiver
/// window `[0, 2*N_s)` records a noise detection with probability `p_noise/2`.
/// Coincidences collapse to a single detection and indices shifted below zero
/// are dropped (the receiver starts recording at the start signal).
pub fn simulate_detections_with<S: LevelSource>(
    config: &SyncConfig,
    link: &LinkParams,
    levels: &S,
) -> Result<DetectionSet, ChannelError> {
    link.validate()?;
    let counts = config.counts();
    let n_s = counts.total_symbols;
    let offset = link.offset_timebins;
    // All produced indices must stay below 2^63 so the i128 -> u64 cast is safe.
    if 2 * (n_s as i128) + (offset.unsigned_abs() as i128) >= (1i128 << 63) {
        return Err(ChannelError::TimebinOverflow { n_s, offset });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(link.rng_seed);
    let mut hits: Vec<u64> = Vec::new();

    bernoulli_positions(&mut rng, link.p_sig, n_s, |k_s| {
        let record = config
            .symbol_at(levels, k_s)
            .expect("k_s < total symbols by construction");
        let tb = ppm_timebin(k_s, record.symbol) as i128 + offset as i128;
        if tb >= 0 {
            hits.push(tb as u64);
        }
    });

    // Noise is uniform in the receiver frame; one Bernoulli per timebin.
    bernoulli_positions(&mut rng, link.p_noise / 2.0, 2 * n_s, |tb| {
        hits.push(tb);
    });

    Ok(DetectionSet::from_unsorted(hits))
}

/// Raw detection timestamps in picoseconds, before timebin alignment.
///
/// Pulses sit at timebin centers, displaced by `frac_offset` timebins and
/// Gaussian jitter. Negative timestamps are dropped.
pub fn simulate_timestamps(
    config: &SyncConfig,
    link: &LinkParams,
) -> Result<Vec<f64>, ChannelError> {
    let detections = simulate_detections(config, link)?;
    let tau = config.timebin_ps();
    let mut rng = ChaCha8Rng::seed_from_u64(link.rng_seed ^ 0x7431_77eb_90d1_c6a5);
    let jitter = if link.jitter_sigma > 0.0 {
        Some(Normal::new(0.0, link.jitter_sigma * tau).expect("validated sigma"))
    } else {
        None
    };
    let mut out: Vec<f64> = detections
        .timebins()
        .iter()
        .map(|&tb| {
            let mut t = (tb as f64 + 0.5 + link.frac_offset) * tau;
            if let Some(normal) = &jitter {
                t += normal.sample(&mut rng);
            }
            t
        })
        .filter(|&t| t >= 0.0)
        .collect();
    out.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}

/// Result of histogram-based sub-timebin alignment.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Shift subtracted from every timestamp, in picoseconds, in
    /// `[-timebin/2, timebin/2)`.
    pub shift_ps: f64,
    /// Aligned, deduplicated timebin indices.
    pub detections: DetectionSet,
    /// False when the residue histogram shows no significant peak; the shift
    /// is then zero and callers should treat the alignment as unreliable.
    pub peak_significant: bool,
}

/// Recovers the sub-timebin shift from raw timestamps and converts them to
/// timebin indices.
///
/// The residues `t mod timebin` are histogrammed into `n_bins` bins; the
/// circular mean of the residues in the peak bin and its two neighbours
/// estimates the pulse position, and the shift that recenters pulses onto
/// timebin centers is applied before remainder-free division.
pub fn align_timebins(
    timestamps_ps: &[f64],
    timebin_ps: f64,
    n_bins: usize,
) -> Result<Alignment, ChannelError> {
    if timestamps_ps.is_empty() {
        return Err(ChannelError::EmptyTimestamps);
    }
    if n_bins < 8 {
        return Err(ChannelError::TooFewBins(n_bins));
    }
    if !timebin_ps.is_finite() || timebin_ps <= 0.0 {
        return Err(ChannelError::InvalidTimebinDuration(timebin_ps));
    }
    for &t in timestamps_ps {
        if !t.is_finite() || t < 0.0 {
            return Err(ChannelError::InvalidTimestamp(t));
        }
    }

    let residue = |t: f64| t - (t / timebin_ps).floor() * timebin_ps;
    let bin_of = |r: f64| (((r / timebin_ps) * n_bins as f64) as usize).min(n_bins - 1);

    let mut hist = vec![0u64; n_bins];
    for &t in timestamps_ps {
        hist[bin_of(residue(t))] += 1;
    }
    let peak = hist
        .iter()
        .enumerate()
        .max_by_key(|&(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap();

    // Under a flat residue distribution each bin is B(n, 1/n_bins); call the
    // peak significant only when it clears the uniform expectation by 4 sigma.
    let n = timestamps_ps.len() as f64;
    let uniform_mean = n / n_bins as f64;
    let uniform_sd = (n * (1.0 / n_bins as f64) * (1.0 - 1.0 / n_bins as f64)).sqrt();
    let peak_significant = hist[peak] as f64 > uniform_mean + 4.0 * uniform_sd;

    let shift_ps = if peak_significant {
        let prev = (peak + n_bins - 1) % n_bins;
        let next = (peak + 1) % n_bins;
        let mut sin_sum = 0.0;
        let mut cos_sum = 0.0;
        for &t in timestamps_ps {
            let r = residue(t);
            let b = bin_of(r);
            if b == peak || b == prev || b == next {
                let theta = 2.0 * std::f64::consts::PI * r / timebin_ps;
                sin_sum += theta.sin();
                cos_sum += theta.cos();
            }
        }
        let mean_angle = sin_sum.atan2(cos_sum);
        let mut mean_residue = mean_angle / (2.0 * std::f64::consts::PI) * timebin_ps;
        if mean_residue < 0.0 {
            mean_residue += timebin_ps;
        }
        // Center pulses on timebin midpoints; wrap into [-tau/2, tau/2).
        let mut shift = mean_residue - timebin_ps / 2.0;
        if shift >= timebin_ps / 2.0 {
            shift -= timebin_ps;
        } else if shift < -timebin_ps / 2.0 {
            shift += timebin_ps;
        }
        shift
    } else {
        0.0
    };

    let mut indices: Vec<u64> = timestamps_ps
        .iter()
        .map(|&t| t - shift_ps)
        .filter(|&t| t >= 0.0)
        .map(|t| (t / timebin_ps).floor() as u64)
        .collect();
    indices.sort_unstable();
    indices.dedup();

    Ok(Alignment {
        shift_ps,
        detections: DetectionSet { timebins: indices },
        peak_significant,
    })
}
