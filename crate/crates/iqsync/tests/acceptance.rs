//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p iqsync --test acceptance -- --nocapture` to see the
//! per-criterion report ordered by number.

use std::time::{Duration, Instant};

use iqsync::analytics::{
    complexity_curve, expected_detections, polylog_fit, success_probability,
    tolerable_attenuation, Interleaving, NoisePolicy,
};
use iqsync::channel::{simulate_detections, simulate_detections_with, LinkParams};
use iqsync::pattern::{FixedLevels, SyncConfig};
use iqsync::recovery::recover_offset;

const TABLE_I_SYMBOLS: [u8; 24] = [
    0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 1, 1,
];
const TABLE_II_LEVELS: [u32; 32] = [
    0, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 3, 2, 2, 3, 2, 2, 2, 2, 3, 2, 3, 2, 2, 3, 3,
    2,
];
const TABLE_II_SYMBOLS: [u8; 32] = [
    0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 1, 1,
    1,
];

fn report(criterion: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("acceptance {criterion}: {verdict} — {name}: {detail}");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn lossless(offset: i64) -> LinkParams {
    LinkParams {
        p_sig: 1.0,
        p_noise: 0.0,
        offset_timebins: offset,
        frac_offset: 0.0,
        jitter_sigma: 0.0,
        rng_seed: 0,
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Wilson 95% score interval for `successes` out of `trials`.
fn wilson_ci(successes: u32, trials: u32) -> (f64, f64) {
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let margin = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (((center - margin) / denom).max(0.0), ((center + margin) / denom).min(1.0))
}

#[test]
fn criterion_1_golden_table_i() {
    let cfg = SyncConfig::new(2, 1, 42, 1600).unwrap();
    let start = Instant::now();
    let symbols: Vec<u8> = cfg.pattern().map(|r| r.symbol).collect();
    let elapsed = start.elapsed();
    let pass = symbols == TABLE_I_SYMBOLS && elapsed < Duration::from_millis(1);
    report(
        1,
        "golden 24-symbol pattern (l_max=2, d_i=1)",
        pass,
        format!("pattern match {}, runtime {elapsed:?}", symbols == TABLE_I_SYMBOLS),
    );
}

#[test]
fn criterion_2_golden_table_ii() {
    let cfg = SyncConfig::new(3, 2, 0, 1600).unwrap();
    let start = Instant::now();
    let symbols: Vec<u8> = cfg
        .pattern_with(FixedLevels(TABLE_II_LEVELS.to_vec()))
        .map(|r| r.symbol)
        .collect();
    let levels = FixedLevels(TABLE_II_LEVELS.to_vec());
    let detections = simulate_detections_with(&cfg, &lossless(6), &levels).unwrap();
    let result = recover_offset(3, 2, &detections).unwrap();
    let elapsed = start.elapsed();

    let symbols_ok = symbols == TABLE_II_SYMBOLS;
    let delta_ok = result.delta_timebins == 6 && result.delta_symbols == 3;
    let counters_ok = result.level_counters[1..] == [-4, 6, -2];
    let pass = symbols_ok && delta_ok && counters_ok && elapsed < Duration::from_millis(1);
    report(
        2,
        "golden interleaved pattern and 3-symbol recovery (l_max=3, d_i=2)",
        pass,
        format!(
            "symbols {symbols_ok}, delta={} counters={:?}, runtime {elapsed:?}",
            result.delta_timebins, result.level_counters
        ),
    );
}

#[test]
fn criterion_3_exhaustive_exactness() {
    // Sweep every integer timebin offset inside the guaranteed window
    // [-2*d_max, 2*d_max - 3] (whole-symbol offsets plus both sub-timebin
    // offsets; the -1 sub-offset below the lowest symbol offset would leave
    // the guaranteed range and is therefore the one excluded combination).
    let start = Instant::now();
    let mut cases = 0u64;
    let mut failures_no_interleave = 0u64;
    let mut failures_interleaved = 0u64;
    let mut first_failures = Vec::new();
    for l_max in 1..=6u32 {
        let d_max = 1i64 << (l_max - 1);
        for d_i in 1..=(l_max + 1) {
            let seed = mix(((l_max as u64) << 8) ^ d_i as u64);
            let cfg = SyncConfig::new(l_max, d_i, seed, 1600).unwrap();
            for tb in -2 * d_max..=2 * d_max - 3 {
                cases += 1;
                let d = simulate_detections(&cfg, &lossless(tb)).unwrap();
                let r = recover_offset(l_max, d_i, &d).unwrap();
                if r.delta_timebins != tb {
                    if d_i == 1 {
                        failures_no_interleave += 1;
                    } else {
                        failures_interleaved += 1;
                    }
                    if first_failures.len() < 6 {
                        first_failures.push((l_max, d_i, tb, r.delta_timebins));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();

    // Boundary behavior at the excluded symbol offset d_max - 1 (observed to
    // recover in the published example); reported, not asserted.
    for l_max in 1..=6u32 {
        let d_max = 1i64 << (l_max - 1);
        let cfg = SyncConfig::new(l_max, 1, 7, 1600).unwrap();
        for tb in [2 * d_max - 2, 2 * d_max - 1] {
            let d = simulate_detections(&cfg, &lossless(tb)).unwrap();
            let r = recover_offset(l_max, 1, &d).unwrap();
            println!(
                "  note: boundary offset {tb} tb (l_max={l_max}, d_i=1) recovered as {}",
                r.delta_timebins
            );
        }
    }

    let failures = failures_no_interleave + failures_interleaved;
    let pass = failures == 0 && elapsed < Duration::from_secs(60);
    report(
        3,
        "exhaustive lossless noiseless exactness (l_max 1..=6, every d_i)",
        pass,
        format!(
            "{failures}/{cases} cases wrong (d_i=1: {failures_no_interleave}, d_i>1: \
             {failures_interleaved}; interleaved recovery is stochastic at these sizes — the \
             model itself predicts e.g. P_success≈{:.2} for l_max=2, d_i=3 even lossless; \
             first failures {first_failures:?}), runtime {elapsed:?}",
            success_probability(2, 3, 1.0, 0.0).unwrap().p_success,
        ),
    );
}

#[test]
fn criterion_4_duration_and_offset_anchors() {
    let no_interleave = SyncConfig::new(28, 1, 0, 1600).unwrap();
    let interleaved = SyncConfig::new(28, 4, 0, 1600).unwrap();
    let d1 = no_interleave.pattern_duration_secs();
    let d4 = interleaved.pattern_duration_secs();
    let offset_ms = no_interleave.max_offset().seconds() * 1e3;
    let ok1 = (d1 - 24.9).abs() / 24.9 < 0.005;
    let ok4 = (d4 - 6.9).abs() / 6.9 < 0.005;
    let ok_off = (offset_ms - 214.7).abs() / 214.7 < 0.005 && (offset_ms - 215.0).abs() / 215.0 < 0.005;
    report(
        4,
        "pattern duration and max-offset anchors (l_max=28, t_s=1600 ps)",
        ok1 && ok4 && ok_off,
        format!("durations {d1:.4} s / {d4:.4} s, max offset {offset_ms:.2} ms"),
    );
}

#[test]
fn criterion_5_model_vs_monte_carlo() {
    let start = Instant::now();
    let trials = 1000u32;
    let mut cells = 0u32;
    let mut outliers = Vec::new();
    for l_max in [8u32, 10, 12] {
        for d_i in [1u32, 2, l_max + 1] {
            for p_sig in [1e-1, 1e-2, 1e-3] {
                for noise_ratio in [0.0, 0.05, 0.22] {
                    let p_noise = noise_ratio * p_sig;
                    let model = success_probability(l_max, d_i, p_sig, p_noise).unwrap();
                    let analytic_fail = 1.0 - model.p_success;
                    let mut state = mix(
                        0x0C05 ^ ((l_max as u64) << 40)
                            ^ ((d_i as u64) << 24)
                            ^ p_sig.to_bits()
                            ^ p_noise.to_bits().rotate_left(17),
                    );
                    let mut failures = 0u32;
                    for _ in 0..trials {
                        state = mix(state);
                        let offset = sample_offset(&mut state, l_max);
                        let cfg = SyncConfig::new(l_max, d_i, mix(state ^ 1), 1600).unwrap();
                        let lp = LinkParams {
                            p_sig,
                            p_noise,
                            offset_timebins: offset,
                            frac_offset: 0.0,
                            jitter_sigma: 0.0,
                            rng_seed: mix(state ^ 2),
                        };
                        let d = simulate_detections(&cfg, &lp).unwrap();
                        let r = recover_offset(l_max, d_i, &d).unwrap();
                        if r.delta_timebins != offset {
                            failures += 1;
                        }
                    }
                    let empirical_fail = failures as f64 / trials as f64;
                    let se = (analytic_fail * (1.0 - analytic_fail) / trials as f64)
                        .sqrt()
                        .max(1e-12);
                    cells += 1;
                    let dev_se = (empirical_fail - analytic_fail).abs() / se;
                    if dev_se > 3.0 {
                        outliers.push(format!(
                            "l_max={l_max} d_i={d_i} p_sig={p_sig:.0e} p_noise={noise_ratio}*p_sig: \
                             analytic {analytic_fail:.4} vs empirical {empirical_fail:.4} \
                             ({dev_se:.1} SE, normal approx valid: {})",
                            model.normal_approx_valid
                        ));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    for line in &outliers {
        println!("  outlier: {line}");
    }
    let allowed = (cells as f64 * 0.05).floor() as usize;
    let pass = outliers.len() <= allowed && elapsed < Duration::from_secs(600);
    report(
        5,
        "analytic failure probability vs 1000-trial Monte Carlo over the 81-cell grid",
        pass,
        format!(
            "{} of {cells} cells beyond 3 binomial SE (allowed {allowed}); deviations concentrate \
             where the normal-approximation validity check fails, runtime {elapsed:?}",
            outliers.len()
        ),
    );
}

fn sample_offset(state: &mut u64, l_max: u32) -> i64 {
    let d_max = 1i64 << (l_max - 1);
    let span = (2 * d_max - 1) as u64;
    *state = mix(*state);
    let symbols = -d_max + (*state % span) as i64;
    let mut tb = 2 * symbols;
    *state = mix(*state);
    if *state & 1 == 1 {
        *state = mix(*state);
        let candidate = tb + if *state & 1 == 1 { 1 } else { -1 };
        if candidate >= -2 * d_max && candidate <= 2 * d_max - 3 {
            tb = candidate;
        }
    }
    tb
}

#[test]
fn criterion_6_polylog_complexity_fit() {
    let start = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for (interleaving, a_ref, b_ref) in [
        (Interleaving::None, 2.9, 1.3),
        (Interleaving::Max, 4.9, 3.2),
    ] {
        // delta_max from 2^4 to 2^30, i.e. l_max from 5 to 31.
        let curve = complexity_curve(5..=31, interleaving, NoisePolicy::Zero, 0.5).unwrap();
        let points: Vec<(f64, f64)> = curve
            .iter()
            .filter(|p| p.solved)
            .map(|p| (p.delta_max as f64, p.n_loop))
            .collect();
        let skipped = curve.len() - points.len();
        let fit = polylog_fit(&points).unwrap();
        let a_ok = (fit.a - a_ref).abs() / a_ref <= 0.25;
        let b_ok = (fit.b - b_ref).abs() / b_ref <= 0.25;
        let dev_ok = fit.max_rel_dev <= 0.10;
        pass &= a_ok && b_ok && dev_ok;
        detail.push_str(&format!(
            "{interleaving:?}: a={:.3} (ref {a_ref}), b={:.3} (ref {b_ref}), max_rel_dev={:.3}, \
             unsolved points skipped: {skipped}; ",
            fit.a, fit.b, fit.max_rel_dev
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    detail.push_str(&format!("runtime {elapsed:?}"));
    report(6, "poly-log time-complexity fit over delta_max in [2^4, 2^30]", pass, detail);
}

#[test]
fn criterion_7_high_attenuation_consistency() {
    // Expected detection counts and analytic success at the two published
    // operating points; dead time and detector-efficiency roll-off are not
    // modeled, hence the 20% tolerance on counts.
    let p_noise = 1.1e-7;

    let p_sig_interleaved = 10f64.powf(-61.0 / 10.0);
    let counts_interleaved = expected_detections(28, 4, p_sig_interleaved, p_noise).unwrap();
    let ok_counts_interleaved = (counts_interleaved - 4372.0).abs() / 4372.0 <= 0.20;

    let p_sig_plain = 10f64.powf(-71.2 / 10.0);
    let counts_plain = expected_detections(28, 1, p_sig_plain, p_noise).unwrap();
    let ok_counts_plain = (counts_plain - 3056.0).abs() / 3056.0 <= 0.20;

    let p_interleaved = success_probability(28, 4, p_sig_interleaved, p_noise)
        .unwrap()
        .p_success;
    let (lo_49, hi_49) = wilson_ci(49, 50);
    let ok_p_interleaved = p_interleaved >= lo_49 && p_interleaved <= hi_49;

    let p_plain = success_probability(28, 1, p_sig_plain, p_noise).unwrap().p_success;
    let (lo_47, hi_47) = wilson_ci(47, 50);
    let ok_p_plain = p_plain >= lo_47 && p_plain <= hi_47;

    let pass = ok_counts_interleaved && ok_counts_plain && ok_p_interleaved && ok_p_plain;
    report(
        7,
        "expected detections and success probability at the 61.0/71.2 dB operating points",
        pass,
        format!(
            "counts {counts_interleaved:.0} vs 4372 and {counts_plain:.0} vs 3056; \
             P_success {p_interleaved:.4} in [{lo_49:.4}, {hi_49:.4}] and {p_plain:.4} in \
             [{lo_47:.4}, {hi_47:.4}]"
        ),
    );
}

#[test]
fn criterion_8_attenuation_curve_kink() {
    // The tolerable-attenuation curve changes slope where the channel
    // transmission equals p_noise. Locate the kink as the intersection of the
    // two asymptotic lines (signal-dominated below, noise-dominated above).
    let start = Instant::now();
    let p_noise = 1e-7;
    let mut etas = Vec::new();
    for l_max in 2..=40u32 {
        let s = tolerable_attenuation(l_max, 1, NoisePolicy::Fixed(p_noise), 0.5).unwrap();
        etas.push((l_max as f64, s.eta_db));
    }
    let fit_line = |points: &[(f64, f64)]| {
        let n = points.len() as f64;
        let xm = points.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        let slope = sxy / sxx;
        (slope, ym - slope * xm)
    };
    let low: Vec<_> = etas.iter().filter(|p| p.0 >= 8.0 && p.0 <= 16.0).cloned().collect();
    let high: Vec<_> = etas.iter().filter(|p| p.0 >= 34.0).cloned().collect();
    let (slope_low, intercept_low) = fit_line(&low);
    let (slope_high, intercept_high) = fit_line(&high);
    let kink_eta = slope_low * (intercept_high - intercept_low) / (slope_low - slope_high)
        + intercept_low;
    let target_eta = -10.0 * p_noise.log10(); // transmission equals p_noise
    let elapsed = start.elapsed();

    let slope_changes = slope_low - slope_high > 1.0;
    let pass = slope_changes && (kink_eta - target_eta).abs() <= 1.0
        && elapsed < Duration::from_secs(30);
    report(
        8,
        "slope change of the tolerable-attenuation curve at transmission = p_noise",
        pass,
        format!(
            "asymptotic slopes {slope_low:.2} -> {slope_high:.2} dB/level, kink at \
             {kink_eta:.2} dB vs {target_eta:.0} dB, runtime {elapsed:?}"
        ),
    );
}

#[test]
fn criterion_9_interleaving_tradeoff() {
    let start = Instant::now();
    let l_max = 12u32;
    let shorter = SyncConfig::new(l_max, 4, 0, 1600).unwrap().counts().total_symbols;
    let longer = SyncConfig::new(l_max, 1, 0, 1600).unwrap().counts().total_symbols;
    let mut pass = shorter < longer;
    let mut worst_gap = f64::INFINITY;
    for i in 0..10 {
        let p_sig = 10f64.powf(-4.0 + 3.0 * i as f64 / 9.0);
        for p_noise in [0.0, 0.05 * p_sig] {
            let fail_interleaved =
                1.0 - success_probability(l_max, 4, p_sig, p_noise).unwrap().p_success;
            let fail_plain =
                1.0 - success_probability(l_max, 1, p_sig, p_noise).unwrap().p_success;
            worst_gap = worst_gap.min(fail_interleaved - fail_plain);
            pass &= fail_interleaved >= fail_plain;
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(5);
    report(
        9,
        "interleaving shortens the pattern but cannot lower the failure probability",
        pass,
        format!(
            "N_s {shorter} < {longer}; min(P_fail(d_i=4) - P_fail(d_i=1)) = {worst_gap:.2e} \
             over the grid, runtime {elapsed:?}"
        ),
    );
}
