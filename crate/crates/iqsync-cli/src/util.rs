//! CSV output, number formatting, and config-file preprocessing.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use crate::CliError;

/// Formats a float with 9 significant digits, locale-independent.
pub fn fmt_f64(value: f64) -> String {
    if value.is_nan() {
        "nan".to_string()
    } else {
        format!("{value:.8e}")
    }
}

/// Writes CSV rows to a file or stdout.
pub struct CsvSink {
    out: Box<dyn Write>,
}

impl CsvSink {
    pub fn create(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(fs::File::create(p)?),
            None => Box::new(std::io::stdout()),
        };
        Ok(CsvSink { out })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let line = fields
            .into_iter()
            .map(|f| f.as_ref().to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(self.out, "{line}")?;
        Ok(())
    }
}

/// Parses "lo:hi" (inclusive) or a single value.
pub fn parse_range(spec: &str) -> Result<std::ops::RangeInclusive<u32>, CliError> {
    let parse = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|e| CliError::Usage(format!("bad range bound '{s}': {e}")))
    };
    match spec.split_once(':') {
        Some((lo, hi)) => {
            let (lo, hi) = (parse(lo)?, parse(hi)?);
            if lo > hi {
                return Err(CliError::Usage(format!("empty range '{spec}'")));
            }
            Ok(lo..=hi)
        }
        None => {
            let v = parse(spec)?;
            Ok(v..=v)
        }
    }
}

/// Parses an interleaving flag value: a number or "max" (n_levels for the
/// config's maximum level).
pub fn parse_di(spec: &str, l_max: u32) -> Result<u32, CliError> {
    if spec.trim().eq_ignore_ascii_case("max") {
        Ok(l_max + 1)
    } else {
        spec.trim()
            .parse::<u32>()
            .map_err(|e| CliError::Usage(format!("bad interleaving '{spec}': {e}")))
    }
}

/// Parses "zero", "fixed=Q", or "ratio=R".
pub fn parse_noise_policy(spec: &str) -> Result<iqsync::analytics::NoisePolicy, CliError> {
    use iqsync::analytics::NoisePolicy;
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("zero") {
        return Ok(NoisePolicy::Zero);
    }
    if let Some((kind, value)) = spec.split_once('=') {
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("bad noise policy value '{value}': {e}")))?;
        return match kind.trim().to_ascii_lowercase().as_str() {
            "fixed" => Ok(NoisePolicy::Fixed(value)),
            "ratio" => Ok(NoisePolicy::SignalRatio(value)),
            other => Err(CliError::Usage(format!("unknown noise policy '{other}'"))),
        };
    }
    Err(CliError::Usage(format!(
        "noise policy '{spec}' is not zero, fixed=Q, or ratio=R"
    )))
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_ci95(successes: u32, trials: u32) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let margin = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        ((center - margin) / denom).max(0.0),
        ((center + margin) / denom).min(1.0),
    )
}

/// Expands `--config FILE` into long flags inserted right after the
/// subcommand, so explicitly passed flags (which come later) win on conflict.
///
/// The file holds `key = value` lines mirroring the subcommand's long flags,
/// with `#` comments; a bare `key` or `key = true` becomes a switch.
pub fn apply_config_file(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let equals_form = argv
        .iter()
        .position(|a| a.to_string_lossy().starts_with("--config="));
    let flag_form = argv.iter().position(|a| a == "--config");
    let (flag_index, consumed, path) = match (equals_form, flag_form) {
        (Some(i), _) => {
            let value = argv[i].to_string_lossy()["--config=".len()..].to_string();
            (i, 1, OsString::from(value))
        }
        (None, Some(i)) => {
            let value = argv
                .get(i + 1)
                .ok_or_else(|| CliError::Usage("--config requires a file path".into()))?
                .clone();
            (i, 2, value)
        }
        (None, None) => return Ok(argv),
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("config file {}: {e}", path.to_string_lossy())))?;

    let mut injected: Vec<OsString> = Vec::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => (line, "true"),
        };
        if key.is_empty() {
            return Err(CliError::Data(format!(
                "config file line {}: missing key",
                number + 1
            )));
        }
        injected.push(format!("--{key}").into());
        match value {
            "true" => {}
            "false" => {
                injected.pop();
            }
            other => injected.push(other.into()),
        }
    }

    // Remove the --config tokens and insert the expansion after the
    // subcommand tokens (the leading non-flag arguments).
    let mut rest: Vec<OsString> = argv
        .iter()
        .enumerate()
        .filter(|(i, _)| *i < flag_index || *i >= flag_index + consumed)
        .map(|(_, a)| a.clone())
        .collect();
    let mut insert_at = 1; // after the program name
    while insert_at < rest.len()
        && !rest[insert_at]
            .to_string_lossy()
            .starts_with('-')
    {
        insert_at += 1;
    }
    rest.splice(insert_at..insert_at, injected);
    Ok(rest)
}
