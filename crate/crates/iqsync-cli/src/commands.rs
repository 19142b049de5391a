//! Subcommand implementations.

use std::fs;
use std::io::{BufReader, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iqsync::analytics::{
    expected_loop_iterations, polylog_fit, qber_estimate, reference_durations,
    success_probability, tolerable_attenuation, ModelError,
};
use iqsync::channel::{
    align_timebins, p_det, simulate_detections, simulate_timestamps, DetectionSet, LinkParams,
};
use iqsync::pattern::{pack_symbols, SyncConfig};
use iqsync::recovery::{recover_offset, verify_range};

use crate::util::{
    fmt_f64, parse_di, parse_noise_policy, parse_range, wilson_ci95, CsvSink,
};
use crate::{
    AttenuationArgs, CliError, DurationsArgs, FitArgs, ModelGridArgs, PatternArgs, QberArgs,
    RecoverArgs, SimulateArgs, SweepArgs, SYMBOL_BUDGET,
};

fn check_budget(config: &SyncConfig, force: bool) -> Result<(), CliError> {
    let total = config.counts().total_symbols;
    if total > SYMBOL_BUDGET && !force {
        return Err(CliError::Data(format!(
            "pattern of {total} symbols exceeds the desk-scale budget of {SYMBOL_BUDGET}; \
             pass --force to proceed"
        )));
    }
    Ok(())
}

pub fn pattern(args: PatternArgs) -> Result<(), CliError> {
    let config = SyncConfig::new(args.lmax, args.di, args.seed, args.ts_ps)?;
    check_budget(&config, args.force)?;
    let counts = config.counts();
    if args.text {
        let mut text = String::with_capacity(counts.total_symbols as usize + 1);
        for record in config.pattern() {
            text.push(if record.symbol == 1 { '1' } else { '0' });
        }
        text.push('\n');
        fs::write(&args.out, text)?;
    } else {
        let packed = pack_symbols(config.pattern().map(|r| r.symbol));
        fs::write(&args.out, packed)?;
    }
    println!(
        "pattern: {} symbols in {} groups ({} levels), duration {} s -> {}",
        counts.total_symbols,
        counts.n_groups,
        counts.n_levels,
        fmt_f64(config.pattern_duration_secs()),
        args.out.display()
    );
    Ok(())
}

fn resolve_psig(psig: Option<f64>, eta_db: Option<f64>) -> Result<f64, CliError> {
    match (psig, eta_db) {
        (Some(p), None) => Ok(p),
        (None, Some(eta)) => Ok(LinkParams::p_sig_from_attenuation_db(eta)),
        (None, None) => Err(CliError::Usage(
            "one of --psig or --eta-db is required".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflict"),
    }
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let config = SyncConfig::new(args.lmax, args.di, args.seed, args.ts_ps)?;
    check_budget(&config, args.force)?;
    let link = LinkParams {
        p_sig: resolve_psig(args.psig, args.eta_db)?,
        p_noise: args.pnoise,
        offset_timebins: args.offset_tb,
        frac_offset: args.frac_offset,
        jitter_sigma: args.jitter_sigma,
        rng_seed: args.rng_seed,
    };
    link.validate()?;

    let detections = if link.frac_offset > 0.0 || link.jitter_sigma > 0.0 {
        // Full receiver pipeline: raw timestamps, histogram alignment, then
        // timebin conversion.
        let timestamps = simulate_timestamps(&config, &link)?;
        let alignment = align_timebins(&timestamps, config.timebin_ps(), args.nbins)?;
        if !alignment.peak_significant {
            eprintln!("warning: no significant histogram peak; zero shift applied");
        }
        println!(
            "alignment shift: {} ps ({} of a timebin)",
            fmt_f64(alignment.shift_ps),
            fmt_f64(alignment.shift_ps / config.timebin_ps())
        );
        alignment.detections
    } else {
        simulate_detections(&config, &link)?
    };

    let expected = config.counts().total_symbols as f64 * p_det(link.p_sig, link.p_noise);
    println!(
        "detections: {} (expected {})",
        detections.len(),
        fmt_f64(expected)
    );

    let file = fs::File::create(&args.out)?;
    let mut writer = std::io::BufWriter::new(file);
    if args.binary {
        detections.write_binary(&mut writer)?;
    } else {
        detections.write_text(&mut writer)?;
    }
    writer.flush()?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn read_detections(args: &RecoverArgs) -> Result<DetectionSet, CliError> {
    if args.binary {
        let bytes = fs::read(&args.detections)?;
        Ok(DetectionSet::read_binary(&bytes)?)
    } else {
        let file = fs::File::open(&args.detections)?;
        Ok(DetectionSet::read_text(BufReader::new(file))?)
    }
}

pub fn recover(args: RecoverArgs) -> Result<(), CliError> {
    let detections = read_detections(&args)?;
    let result = recover_offset(args.lmax, args.di, &detections)?;
    if result.no_data {
        eprintln!("warning: no detections in input; offset defaults to 0");
    }
    println!("delta_timebins={}", result.delta_timebins);
    println!("delta_symbols={}", result.delta_symbols);
    println!(
        "level_counters={}",
        result
            .level_counters
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    println!("loop_iterations={}", result.loop_iterations);
    println!(
        "in_range={}",
        verify_range(result.delta_timebins, args.lmax)
    );
    Ok(())
}

struct ModelGrid {
    cells: Vec<(u32, u32, f64, f64)>, // (l_max, d_i, p_sig, p_noise)
}

fn expand_grid(args: &ModelGridArgs) -> Result<ModelGrid, CliError> {
    if args.lmax.is_empty() {
        return Err(CliError::Usage("--lmax requires at least one value".into()));
    }
    let psig: Vec<f64> = if !args.psig.is_empty() {
        args.psig.clone()
    } else if !args.eta_db.is_empty() {
        args.eta_db
            .iter()
            .map(|&eta| LinkParams::p_sig_from_attenuation_db(eta))
            .collect()
    } else {
        return Err(CliError::Usage(
            "one of --psig or --eta-db is required".into(),
        ));
    };
    let mut cells = Vec::new();
    for &l_max in &args.lmax {
        for di_spec in &args.di {
            let d_i = parse_di(di_spec, l_max)?;
            for &p_sig in &psig {
                for &p_noise in &args.pnoise {
                    cells.push((l_max, d_i, p_sig, p_noise));
                }
            }
        }
    }
    Ok(ModelGrid { cells })
}

pub fn model_success(args: ModelGridArgs) -> Result<(), CliError> {
    let grid = expand_grid(&args)?;
    let mut sink = CsvSink::create(args.out.as_ref())?;
    sink.row([
        "l_max",
        "d_i",
        "p_sig",
        "p_noise",
        "p_rand",
        "mu_tot",
        "sigma_tot",
        "p_success_1",
        "p_success",
        "normal_approx_valid",
    ])?;
    for (l_max, d_i, p_sig, p_noise) in grid.cells {
        let m = success_probability(l_max, d_i, p_sig, p_noise)?;
        sink.row([
            l_max.to_string(),
            d_i.to_string(),
            fmt_f64(p_sig),
            fmt_f64(p_noise),
            fmt_f64(m.p_rand),
            fmt_f64(m.mu_tot),
            fmt_f64(m.sigma_tot),
            fmt_f64(m.p_success_1),
            fmt_f64(m.p_success),
            m.normal_approx_valid.to_string(),
        ])?;
    }
    Ok(())
}

pub fn model_loops(args: ModelGridArgs) -> Result<(), CliError> {
    let grid = expand_grid(&args)?;
    let mut sink = CsvSink::create(args.out.as_ref())?;
    sink.row(["l_max", "d_i", "p_sig", "p_noise", "p_det", "n_loop"])?;
    for (l_max, d_i, p_sig, p_noise) in grid.cells {
        let n_loop = expected_loop_iterations(l_max, d_i, p_sig, p_noise)?;
        sink.row([
            l_max.to_string(),
            d_i.to_string(),
            fmt_f64(p_sig),
            fmt_f64(p_noise),
            fmt_f64(p_det(p_sig, p_noise)),
            fmt_f64(n_loop),
        ])?;
    }
    Ok(())
}

pub fn model_attenuation(args: AttenuationArgs) -> Result<(), CliError> {
    let range = parse_range(&args.lmax_range)?;
    let policy = parse_noise_policy(&args.pnoise_policy)?;
    let mut sink = CsvSink::create(args.out.as_ref())?;
    sink.row([
        "l_max",
        "delta_max",
        "d_i",
        "p_target",
        "solved",
        "eta_db",
        "p_sig",
        "p_noise",
        "n_loop",
    ])?;
    let mut solved_points = 0usize;
    let mut total_points = 0usize;
    for l_max in range {
        let d_i = parse_di(&args.di, l_max)?;
        let delta_max = 1u64 << (l_max - 1);
        total_points += 1;
        match tolerable_attenuation(l_max, d_i, policy, args.ptarget) {
            Ok(solution) => {
                solved_points += 1;
                let p_noise = policy.p_noise(solution.p_sig);
                let n_loop = expected_loop_iterations(l_max, d_i, solution.p_sig, p_noise)?;
                sink.row([
                    l_max.to_string(),
                    delta_max.to_string(),
                    d_i.to_string(),
                    fmt_f64(args.ptarget),
                    "true".to_string(),
                    fmt_f64(solution.eta_db),
                    fmt_f64(solution.p_sig),
                    fmt_f64(p_noise),
                    fmt_f64(n_loop),
                ])?;
            }
            Err(ModelError::NoSolution { .. }) => {
                sink.row([
                    l_max.to_string(),
                    delta_max.to_string(),
                    d_i.to_string(),
                    fmt_f64(args.ptarget),
                    "false".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                    "nan".to_string(),
                ])?;
            }
            Err(other) => return Err(other.into()),
        }
    }
    if solved_points == 0 {
        return Err(CliError::NoSolution(format!(
            "target success probability {} unreachable for every requested size",
            args.ptarget
        )));
    }
    eprintln!("solved {solved_points}/{total_points} points");
    Ok(())
}

pub fn model_qber(args: QberArgs) -> Result<(), CliError> {
    if args.psig.is_empty() || args.pnoise.is_empty() {
        return Err(CliError::Usage("--psig and --pnoise are required".into()));
    }
    let mut sink = CsvSink::create(args.out.as_ref())?;
    sink.row(["p_sig", "p_noise", "qber"])?;
    for &p_sig in &args.psig {
        for &p_noise in &args.pnoise {
            let qber = qber_estimate(p_sig, p_noise)?;
            sink.row([fmt_f64(p_sig), fmt_f64(p_noise), fmt_f64(qber)])?;
        }
    }
    Ok(())
}

pub fn model_durations(args: DurationsArgs) -> Result<(), CliError> {
    let range = parse_range(&args.lmax_range)?;
    let mut sink = CsvSink::create(args.out.as_ref())?;
    sink.row([
        "l_max",
        "delta_max",
        "delta_max_s",
        "n_s_no_interleave",
        "duration_s_no_interleave",
        "n_s_max_interleave",
        "duration_s_max_interleave",
        "crosscorr_symbols",
    ])?;
    let seconds_per_symbol = args.ts_ps as f64 * 1e-12;
    for l_max in range {
        let r = reference_durations(1u64 << (l_max - 1))?;
        sink.row([
            l_max.to_string(),
            r.delta_max.to_string(),
            fmt_f64(r.delta_max as f64 * seconds_per_symbol),
            r.no_interleave_symbols.to_string(),
            fmt_f64(r.no_interleave_symbols as f64 * seconds_per_symbol),
            r.max_interleave_symbols.to_string(),
            fmt_f64(r.max_interleave_symbols as f64 * seconds_per_symbol),
            r.crosscorr_symbols.to_string(),
        ])?;
    }
    Ok(())
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform symbol offset in the guaranteed range plus an occasional one-timebin
/// sub-offset; candidates leaving the guaranteed window keep the whole-symbol
/// value.
fn sample_offset_timebins<R: Rng>(rng: &mut R, l_max: u32) -> i64 {
    let d_max = 1i64 << (l_max - 1);
    let symbols = rng.random_range(-d_max..=d_max - 2);
    let mut timebins = 2 * symbols;
    if rng.random_bool(0.5) {
        let candidate = timebins + if rng.random_bool(0.5) { 1 } else { -1 };
        if candidate >= -2 * d_max && candidate <= 2 * d_max - 3 {
            timebins = candidate;
        }
    }
    timebins
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.lmax.is_empty() {
        return Err(CliError::Usage("--lmax requires at least one value".into()));
    }
    if args.trials < 1 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let psig: Vec<f64> = if !args.psig.is_empty() {
        args.psig.clone()
    } else if !args.eta_db.is_empty() {
        args.eta_db
            .iter()
            .map(|&eta| LinkParams::p_sig_from_attenuation_db(eta))
            .collect()
    } else {
        return Err(CliError::Usage(
            "one of --psig or --eta-db is required".into(),
        ));
    };

    let mut sink = CsvSink::create(args.out.as_ref())?;
    sink.row([
        "l_max",
        "d_i",
        "p_sig",
        "p_noise",
        "trials",
        "failures",
        "p_fail_empirical",
        "ci95_low",
        "ci95_high",
        "p_fail_analytic",
        "skipped",
    ])?;
    let mut trial_sink = match &args.per_trial {
        Some(path) => {
            let mut sink = CsvSink::create(Some(path))?;
            sink.row([
                "l_max",
                "d_i",
                "p_sig",
                "p_noise",
                "trial",
                "offset_tb",
                "recovered_tb",
                "success",
                "detections",
                "loop_iterations",
            ])?;
            Some(sink)
        }
        None => None,
    };

    let mut cell_index: u64 = 0;
    for &l_max in &args.lmax {
        for di_spec in &args.di {
            let d_i = parse_di(di_spec, l_max)?;
            for &p_sig in &psig {
                let noises: Vec<f64> = match args.pnoise_ratio {
                    Some(ratio) => vec![(ratio * p_sig).min(1.0)],
                    None if args.pnoise.is_empty() => vec![0.0],
                    None => args.pnoise.clone(),
                };
                for &p_noise in &noises {
                    cell_index += 1;
                    let config = SyncConfig::new(l_max, d_i, 0, 1600)?;
                    let oversize = config.counts().total_symbols > SYMBOL_BUDGET && !args.force;
                    let analytic = success_probability(l_max, d_i, p_sig, p_noise)
                        .map(|m| 1.0 - m.p_success)
                        .unwrap_or(f64::NAN);

                    if oversize {
                        sink.row([
                            l_max.to_string(),
                            d_i.to_string(),
                            fmt_f64(p_sig),
                            fmt_f64(p_noise),
                            "0".to_string(),
                            "0".to_string(),
                            "nan".to_string(),
                            "nan".to_string(),
                            "nan".to_string(),
                            fmt_f64(analytic),
                            "true".to_string(),
                        ])?;
                        continue;
                    }

                    let mut failures: u32 = 0;
                    for trial in 0..args.trials {
                        let trial_seed = args.base_seed.wrapping_add(trial as u64);
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(mix(trial_seed ^ mix(cell_index)));
                        let offset = sample_offset_timebins(&mut rng, l_max);
                        let config =
                            SyncConfig::new(l_max, d_i, rng.random::<u64>(), 1600)?;
                        let link = LinkParams {
                            p_sig,
                            p_noise,
                            offset_timebins: offset,
                            frac_offset: 0.0,
                            jitter_sigma: 0.0,
                            rng_seed: rng.random::<u64>(),
                        };
                        let detections = simulate_detections(&config, &link)?;
                        let result = recover_offset(l_max, d_i, &detections)?;
                        let success = result.delta_timebins == offset;
                        failures += !success as u32;
                        if let Some(ts) = trial_sink.as_mut() {
                            ts.row([
                                l_max.to_string(),
                                d_i.to_string(),
                                fmt_f64(p_sig),
                                fmt_f64(p_noise),
                                trial.to_string(),
                                offset.to_string(),
                                result.delta_timebins.to_string(),
                                success.to_string(),
                                detections.len().to_string(),
                                result.loop_iterations.to_string(),
                            ])?;
                        }
                    }
                    let (ci_low, ci_high) = wilson_ci95(failures, args.trials);
                    sink.row([
                        l_max.to_string(),
                        d_i.to_string(),
                        fmt_f64(p_sig),
                        fmt_f64(p_noise),
                        args.trials.to_string(),
                        failures.to_string(),
                        fmt_f64(failures as f64 / args.trials as f64),
                        fmt_f64(ci_low),
                        fmt_f64(ci_high),
                        fmt_f64(analytic),
                        "false".to_string(),
                    ])?;
                }
            }
        }
    }
    Ok(())
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.points)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data("points file is empty".into()))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Data(format!("column '{name}' not found in header")))
    };
    let x_col = find(&args.x_col)?;
    let y_col = find(&args.y_col)?;
    let solved_col = columns.iter().position(|c| *c == "solved");

    let mut points = Vec::new();
    for (number, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if let Some(sc) = solved_col {
            if fields.get(sc).is_some_and(|v| *v == "false") {
                continue;
            }
        }
        let parse = |col: usize, name: &str| -> Result<f64, CliError> {
            fields
                .get(col)
                .ok_or_else(|| {
                    CliError::Data(format!("row {}: missing column {name}", number + 2))
                })?
                .parse::<f64>()
                .map_err(|e| CliError::Data(format!("row {}: {name}: {e}", number + 2)))
        };
        points.push((parse(x_col, &args.x_col)?, parse(y_col, &args.y_col)?));
    }
    let fit = polylog_fit(&points)?;
    println!("points={}", points.len());
    println!("a={}", fmt_f64(fit.a));
    println!("b={}", fmt_f64(fit.b));
    println!("max_rel_dev={}", fmt_f64(fit.max_rel_dev));
    Ok(())
}
