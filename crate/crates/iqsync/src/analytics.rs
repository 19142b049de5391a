//! Closed-form model of the synchronization success probability and the
//! expected recovery cost.
//!
//! Per level, the counter is modeled as a sum of three binomials: the signal
//! contribution `B(N_s_g/2, p_sig/d_i)` plus a symmetric pair
//! `B(N_s_g/2, p_rand/2)` of random match/mismatch counts (noise and the other
//! interleaved levels). Normal approximation of the three gives the per-level
//! success probability `Phi(mu_tot / sigma_tot)`, and the whole synchronization
//! succeeds with probability `P_success_1 ^ n_levels`.

use std::ops::RangeInclusive;

use thiserror::Error;

use crate::channel::p_det;
use crate::pattern::{SyncConfig, MAX_LEVEL_CAP};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("l_max must be in 1..={MAX_LEVEL_CAP}, got {0}")]
    InvalidMaxLevel(u32),
    #[error("d_i must be in 1..={n_levels}, got {d_i}")]
    InvalidInterleaving { d_i: u32, n_levels: u32 },
    #[error("probability {name} = {value} outside [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("no detection statistics: p_sig and p_noise are both zero")]
    NoDetectionStatistics,
    #[error("target {p_target} unreachable: success probability stays in ({floor}, {ceiling}]")]
    NoSolution {
        p_target: f64,
        floor: f64,
        ceiling: f64,
    },
    #[error("success probability not monotone over the bracket near eta = {eta_db} dB")]
    NonMonotone { eta_db: f64 },
    #[error("poly-log fit needs >= 3 points with n >= 2 and y > 0")]
    InvalidFitInput,
    #[error("poly-log fit degenerate: all abscissae equal")]
    DegenerateFit,
    #[error("delta_max {0} is not a power of two")]
    NotPowerOfTwo(u64),
    #[error("{0}")]
    InvalidInput(&'static str),
}

/// Standard normal CDF via the complementary error function.
pub fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ModelError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(ModelError::InvalidProbability { name, value });
    }
    Ok(())
}

fn check_config(l_max: u32, d_i: u32) -> Result<(), ModelError> {
    if !(1..=MAX_LEVEL_CAP).contains(&l_max) {
        return Err(ModelError::InvalidMaxLevel(l_max));
    }
    let n_levels = l_max + 1;
    if d_i < 1 || d_i > n_levels {
        return Err(ModelError::InvalidInterleaving { d_i, n_levels });
    }
    Ok(())
}

/// Probability that a detection contributes randomly to a level's counter:
/// noise, plus signals of the other levels interleaved in the same group.
/// This is the exact expression, not its small-probability approximation.
pub fn p_rand_exact(p_sig: f64, p_noise: f64, d_i: u32) -> f64 {
    let foreign = p_sig * (1.0 - 1.0 / d_i as f64);
    1.0 - (1.0 - p_noise) * (1.0 - foreign)
}

/// Success-probability model output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelResult {
    /// Per-level success probability `P(C > 0)`.
    pub p_success_1: f64,
    /// Probability that every level succeeds, `p_success_1 ^ n_levels`.
    pub p_success: f64,
    /// Mean of the per-level counter.
    pub mu_tot: f64,
    /// Standard deviation of the per-level counter.
    pub sigma_tot: f64,
    /// Exact random-contribution probability.
    pub p_rand: f64,
    /// True when `9(1-p)/(np) < 1` holds for each non-degenerate constituent
    /// binomial, i.e. the normal approximation's 3-sigma band stays in range.
    pub normal_approx_valid: bool,
}

/// Evaluates the analytical success probability for one configuration.
pub fn success_probability(
    l_max: u32,
    d_i: u32,
    p_sig: f64,
    p_noise: f64,
) -> Result<ModelResult, ModelError> {
    check_config(l_max, d_i)?;
    check_probability("p_sig", p_sig)?;
    check_probability("p_noise", p_noise)?;

    let n = (1u64 << l_max) as f64; // N_s_g / 2: acceptance window per group
    let n_levels = l_max + 1;
    let p_signal = p_sig / d_i as f64;
    let p_rand = p_rand_exact(p_sig, p_noise, d_i);
    let p_half_rand = p_rand / 2.0;

    let mu_tot = n * p_signal;
    let var_sig = n * p_signal * (1.0 - p_signal);
    let var_rand = n * p_half_rand * (1.0 - p_half_rand);
    let var_tot = var_sig + 2.0 * var_rand;
    let sigma_tot = var_tot.sqrt();

    let p_success_1 = if var_tot > 0.0 {
        phi(mu_tot / sigma_tot)
    } else if mu_tot > 0.0 {
        // Degenerate but certain: every window symbol carries a matching
        // signal detection.
        1.0
    } else {
        return Err(ModelError::NoDetectionStatistics);
    };

    let footnote_ok = |p: f64| -> bool {
        if p <= 0.0 || p >= 1.0 {
            return true; // degenerate binomial is exact, nothing to approximate
        }
        9.0 * (1.0 - p) / (n * p) < 1.0
    };
    let normal_approx_valid = footnote_ok(p_signal) && footnote_ok(p_half_rand);

    Ok(ModelResult {
        p_success_1,
        p_success: p_success_1.powi(n_levels as i32),
        mu_tot,
        sigma_tot,
        p_rand,
        normal_approx_valid,
    })
}

/// Expected inner-loop iterations of the recovery algorithm,
/// `p_det * N_s_g * n_levels`.
pub fn expected_loop_iterations(
    l_max: u32,
    d_i: u32,
    p_sig: f64,
    p_noise: f64,
) -> Result<f64, ModelError> {
    check_config(l_max, d_i)?;
    check_probability("p_sig", p_sig)?;
    check_probability("p_noise", p_noise)?;
    let n_s_g = (1u128 << (l_max + 1)) as f64;
    let n_levels = (l_max + 1) as f64;
    Ok(p_det(p_sig, p_noise) * n_s_g * n_levels)
}

/// Expected number of detections over the whole pattern, `N_s * p_det`.
pub fn expected_detections(
    l_max: u32,
    d_i: u32,
    p_sig: f64,
    p_noise: f64,
) -> Result<f64, ModelError> {
    check_config(l_max, d_i)?;
    check_probability("p_sig", p_sig)?;
    check_probability("p_noise", p_noise)?;
    let config = SyncConfig::new(l_max, d_i, 0, 2).expect("checked");
    Ok(config.counts().total_symbols as f64 * p_det(p_sig, p_noise))
}

/// Quantum bit error rate implied by the two detection probabilities,
/// `p_noise / (2 * p_sig)`.
pub fn qber_estimate(p_sig: f64, p_noise: f64) -> Result<f64, ModelError> {
    check_probability("p_noise", p_noise)?;
    if p_sig.is_nan() || p_sig <= 0.0 || p_sig > 1.0 {
        return Err(ModelError::InvalidInput("qber requires p_sig > 0"));
    }
    Ok(p_noise / (2.0 * p_sig))
}

/// How `p_noise` follows `p_sig` along a solver sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoisePolicy {
    /// No noise detections.
    Zero,
    /// Constant noise probability per symbol (e.g. detector dark counts).
    Fixed(f64),
    /// Noise proportional to signal; 0.22 corresponds to an 11% QBER.
    SignalRatio(f64),
}

impl NoisePolicy {
    pub fn p_noise(&self, p_sig: f64) -> f64 {
        match self {
            NoisePolicy::Zero => 0.0,
            NoisePolicy::Fixed(q) => *q,
            NoisePolicy::SignalRatio(c) => (c * p_sig).min(1.0),
        }
    }
}

/// Solution of the tolerable-attenuation equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationSolution {
    /// Channel attenuation in dB at which the target success probability is
    /// reached (mean photon number 1 per symbol).
    pub eta_db: f64,
    /// Signal probability at the solution, `10^(-eta/10)`.
    pub p_sig: f64,
    /// Success probability at the solution.
    pub p_success: f64,
}

const ETA_MAX_DB: f64 = 250.0;
const ETA_TOLERANCE_DB: f64 = 1e-6;
const MAX_BISECTIONS: u32 = 200;

/// Solves `success_probability(l_max, d_i, 10^(-eta/10), noise(eta)) = p_target`
/// for the channel attenuation by bisection.
///
/// The success probability decreases from its `eta = 0` value toward the
/// zero-signal floor `0.5^n_levels`; targets outside that interval are
/// reported as unsolvable. The bracket is validated for monotonicity before
/// bisecting.
pub fn tolerable_attenuation(
    l_max: u32,
    d_i: u32,
    noise: NoisePolicy,
    p_target: f64,
) -> Result<AttenuationSolution, ModelError> {
    check_config(l_max, d_i)?;
    if !(0.0..1.0).contains(&p_target) || p_target <= 0.0 {
        return Err(ModelError::InvalidInput("p_target must be in (0, 1)"));
    }

    let eval = |eta_db: f64| -> Result<f64, ModelError> {
        let p_sig = 10f64.powf(-eta_db / 10.0);
        let p_noise = noise.p_noise(p_sig);
        Ok(success_probability(l_max, d_i, p_sig, p_noise)?.p_success)
    };

    let n_levels = l_max + 1;
    let floor = 0.5f64.powi(n_levels as i32);
    let ceiling = eval(0.0)?;
    if p_target <= floor || p_target > ceiling {
        return Err(ModelError::NoSolution {
            p_target,
            floor,
            ceiling,
        });
    }

    // Spot-check that the curve is non-increasing in eta across the bracket.
    let probes = 32;
    let mut previous = ceiling;
    for i in 1..=probes {
        let eta = ETA_MAX_DB * i as f64 / probes as f64;
        let value = eval(eta)?;
        if value > previous + 1e-9 {
            return Err(ModelError::NonMonotone { eta_db: eta });
        }
        previous = value;
    }

    let mut lo = 0.0; // P(lo) >= p_target
    let mut hi = ETA_MAX_DB; // P(hi) < p_target
    let mut iterations = 0;
    while hi - lo > ETA_TOLERANCE_DB && iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? >= p_target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let eta_db = 0.5 * (lo + hi);
    let p_sig = 10f64.powf(-eta_db / 10.0);
    Ok(AttenuationSolution {
        eta_db,
        p_sig,
        p_success: eval(eta_db)?,
    })
}

/// Interleaving policy for complexity curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleaving {
    /// `d_i = 1`.
    None,
    /// `d_i = n_levels`.
    Max,
}

impl Interleaving {
    pub fn d_i(&self, l_max: u32) -> u32 {
        match self {
            Interleaving::None => 1,
            Interleaving::Max => l_max + 1,
        }
    }
}

/// One point of the time-complexity curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityPoint {
    pub l_max: u32,
    pub d_i: u32,
    /// Maximum recoverable offset in symbols, `2^(l_max - 1)`.
    pub delta_max: u64,
    /// Attenuation at the target success probability; NaN when unsolved.
    pub eta_db: f64,
    pub p_sig: f64,
    pub p_noise: f64,
    /// Expected inner-loop iterations at the solution; NaN when unsolved.
    pub n_loop: f64,
    /// False when the solver reported the target unreachable for this size.
    pub solved: bool,
}

/// Evaluates the expected recovery cost along the constant-success-probability
/// line. Unsolvable sizes are emitted with `solved = false` rather than
/// dropped.
pub fn complexity_curve(
    l_max_range: RangeInclusive<u32>,
    interleaving: Interleaving,
    noise: NoisePolicy,
    p_target: f64,
) -> Result<Vec<ComplexityPoint>, ModelError> {
    let mut points = Vec::new();
    for l_max in l_max_range {
        check_config(l_max, 1)?;
        let d_i = interleaving.d_i(l_max);
        let delta_max = 1u64 << (l_max - 1);
        match tolerable_attenuation(l_max, d_i, noise, p_target) {
            Ok(solution) => {
                let p_noise = noise.p_noise(solution.p_sig);
                let n_loop = expected_loop_iterations(l_max, d_i, solution.p_sig, p_noise)?;
                points.push(ComplexityPoint {
                    l_max,
                    d_i,
                    delta_max,
                    eta_db: solution.eta_db,
                    p_sig: solution.p_sig,
                    p_noise,
                    n_loop,
                    solved: true,
                });
            }
            Err(ModelError::NoSolution { .. }) => {
                points.push(ComplexityPoint {
                    l_max,
                    d_i,
                    delta_max,
                    eta_db: f64::NAN,
                    p_sig: f64::NAN,
                    p_noise: f64::NAN,
                    n_loop: f64::NAN,
                    solved: false,
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(points)
}

/// Least-squares fit of `f(n) = a * (log2 n)^b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyLogFit {
    pub a: f64,
    pub b: f64,
    /// Largest relative deviation `|f(n) - y| / y` over the input points.
    pub max_rel_dev: f64,
}

impl PolyLogFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.a * n.log2().powf(self.b)
    }
}

/// Fits `log y = log a + b * log(log2 n)` by least squares.
pub fn polylog_fit(points: &[(f64, f64)]) -> Result<PolyLogFit, ModelError> {
    if points.len() < 3 {
        return Err(ModelError::InvalidFitInput);
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(n, y) in points {
        if !n.is_finite() || !y.is_finite() || n < 2.0 || y <= 0.0 {
            return Err(ModelError::InvalidFitInput);
        }
        xs.push(n.log2().ln());
        ys.push(y.ln());
    }
    let len = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / len;
    let y_mean = ys.iter().sum::<f64>() / len;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx <= 0.0 {
        return Err(ModelError::DegenerateFit);
    }
    let b = sxy / sxx;
    let a = (y_mean - b * x_mean).exp();
    let fit = PolyLogFit {
        a,
        b,
        max_rel_dev: 0.0,
    };
    let max_rel_dev = points
        .iter()
        .map(|&(n, y)| ((fit.eval(n) - y) / y).abs())
        .fold(0.0, f64::max);
    Ok(PolyLogFit { a, b, max_rel_dev })
}

/// Pattern lengths required to cover a given maximum offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceDurations {
    pub delta_max: u64,
    pub l_max: u32,
    /// Total symbols for `d_i = 1`.
    pub no_interleave_symbols: u64,
    /// Total symbols for `d_i = n_levels`.
    pub max_interleave_symbols: u64,
    /// Correlation-based reference: a pattern of the order of the search
    /// window, `2 * delta_max` symbols.
    pub crosscorr_symbols: u64,
}

/// Pattern-duration comparison for a maximum offset `delta_max = 2^(l_max-1)`.
pub fn reference_durations(delta_max: u64) -> Result<ReferenceDurations, ModelError> {
    if delta_max == 0 || !delta_max.is_power_of_two() {
        return Err(ModelError::NotPowerOfTwo(delta_max));
    }
    let l_max = delta_max.trailing_zeros() + 1;
    check_config(l_max, 1)?;
    let no_interleave = SyncConfig::new(l_max, 1, 0, 2)
        .expect("checked")
        .counts()
        .total_symbols;
    let max_interleave = SyncConfig::new(l_max, l_max + 1, 0, 2)
        .expect("checked")
        .counts()
        .total_symbols;
    Ok(ReferenceDurations {
        delta_max,
        l_max,
        no_interleave_symbols: no_interleave,
        max_interleave_symbols: max_interleave,
        crosscorr_symbols: 2 * delta_max,
    })
}
