//! Simulation config files (`key = value` lines) and real-valued gain
//! matrices for the `simulate` subcommand.
//!
//! Config keys:
//!
//! | key           | required | default | meaning                                  |
//! |---------------|----------|---------|------------------------------------------|
//! | `matrix_file` | yes      |         | gain matrix, resolved next to the config |
//! | `mode`        | no       | `auto`  | `auto`, `integer`, or `dithered`         |
//! | `p`           | no       | `1`     | per-user transmit power                  |
//! | `snr_db`      | (*)      |         | sweep points as `10*log10(P/Z)`          |
//! | `z`           | (*)      |         | sweep points as raw noise variances      |
//! | `n`           | yes      |         | lattice dimension                        |
//! | `l`           | no       | `auto`  | stacking depth, `auto` or `1..=64`       |
//! | `trials`      | yes      |         | Monte-Carlo trials per sweep point       |
//! | `seed`        | no       | `0`     | base RNG seed                            |
//! | `r_max`       | no       | `12`    | equivalence-search column-factor bound   |
//! | `s_cap`       | no       | `10000` | equivalence-search set-size cap          |
//! | `out`         | no       | stdout  | CSV destination                          |
//!
//! (*) exactly one of `snr_db` / `z` must appear; both take a list of one
//! or more values separated by spaces or commas. `#` starts a comment.

use std::fmt;
use std::path::{Path, PathBuf};

/// Config or matrix syntax error with its 1-based source line when known.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError { line: Some(line), message: message.into() }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError { line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {}: {}", line, self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Channel treatment requested by the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeChoice {
    /// Pick by matrix integrality.
    Auto,
    /// Force the exact integer path.
    Integer,
    /// Force the dithered real path.
    Dithered,
}

/// One sweep point: the CSV label for the `snr_db` column and the noise
/// variance passed to the simulator.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub z: f64,
}

/// Parsed and validated simulation config.
#[derive(Debug, Clone)]
pub struct SimFileConfig {
    pub matrix_path: PathBuf,
    pub mode: ModeChoice,
    pub p: f64,
    pub sweep: Vec<SweepPoint>,
    pub n: usize,
    pub l: Option<u32>,
    pub trials: u64,
    pub seed: u64,
    pub r_max: u64,
    pub s_cap: u64,
    pub out: Option<PathBuf>,
}

/// Raw `key = value` pair with its source line.
struct RawEntry {
    line: usize,
    key: String,
    value: String,
}

fn split_entries(text: &str) -> Result<Vec<RawEntry>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(ConfigError::at(line, format!("expected `key = value`, got `{content}`")));
        };
        let key = content[..eq].trim().to_string();
        let value = content[eq + 1..].trim().to_string();
        if key.is_empty() {
            return Err(ConfigError::at(line, "missing key before `=`"));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line, format!("missing value for `{key}`")));
        }
        entries.push(RawEntry { line, key, value });
    }
    Ok(entries)
}

fn parse_f64(entry: &RawEntry) -> Result<f64, ConfigError> {
    entry.value.parse::<f64>().map_err(|_| {
        ConfigError::at(entry.line, format!("`{}` is not a number for `{}`", entry.value, entry.key))
    })
}

fn parse_u64(entry: &RawEntry) -> Result<u64, ConfigError> {
    entry.value.parse::<u64>().map_err(|_| {
        ConfigError::at(
            entry.line,
            format!("`{}` is not a non-negative integer for `{}`", entry.value, entry.key),
        )
    })
}

fn list_tokens(value: &str) -> Vec<&str> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Parses a simulation config. Relative `matrix_file` and `out` paths are
/// resolved against `base`, the directory containing the config file.
pub fn parse_sim_config(text: &str, base: &Path) -> Result<SimFileConfig, ConfigError> {
    let entries = split_entries(text)?;

    let mut matrix_path: Option<PathBuf> = None;
    let mut mode = ModeChoice::Auto;
    let mut p: Option<f64> = None;
    let mut snr_db: Option<(usize, Vec<String>)> = None;
    let mut z_list: Option<(usize, Vec<(String, f64)>)> = None;
    let mut n: Option<usize> = None;
    let mut l: Option<Option<u32>> = None;
    let mut trials: Option<u64> = None;
    let mut seed: Option<u64> = None;
    let mut r_max: Option<u64> = None;
    let mut s_cap: Option<u64> = None;
    let mut out: Option<PathBuf> = None;

    let mut seen: Vec<String> = Vec::new();
    for entry in &entries {
        if seen.contains(&entry.key) {
            return Err(ConfigError::at(entry.line, format!("duplicate key `{}`", entry.key)));
        }
        seen.push(entry.key.clone());

        match entry.key.as_str() {
            "matrix_file" => {
                let path = PathBuf::from(&entry.value);
                matrix_path = Some(if path.is_absolute() { path } else { base.join(path) });
            }
            "mode" => {
                mode = match entry.value.as_str() {
                    "auto" => ModeChoice::Auto,
                    "integer" => ModeChoice::Integer,
                    "dithered" => ModeChoice::Dithered,
                    other => {
                        return Err(ConfigError::at(
                            entry.line,
                            format!("unknown mode `{other}` (expected auto, integer, or dithered)"),
                        ))
                    }
                };
            }
            "p" => {
                let v = parse_f64(entry)?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(ConfigError::at(entry.line, "`p` must be a positive finite number"));
                }
                p = Some(v);
            }
            "snr_db" => {
                let mut labels = Vec::new();
                for tok in list_tokens(&entry.value) {
                    let v = tok.parse::<f64>().map_err(|_| {
                        ConfigError::at(entry.line, format!("`{tok}` is not a number in `snr_db`"))
                    })?;
                    if !v.is_finite() {
                        return Err(ConfigError::at(entry.line, "`snr_db` values must be finite"));
                    }
                    labels.push(tok.to_string());
                }
                if labels.is_empty() {
                    return Err(ConfigError::at(entry.line, "`snr_db` needs at least one value"));
                }
                snr_db = Some((entry.line, labels));
            }
            "z" => {
                let mut points = Vec::new();
                for tok in list_tokens(&entry.value) {
                    let v = tok.parse::<f64>().map_err(|_| {
                        ConfigError::at(entry.line, format!("`{tok}` is not a number in `z`"))
                    })?;
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(ConfigError::at(
                            entry.line,
                            "`z` values must be finite and non-negative",
                        ));
                    }
                    points.push((tok.to_string(), v));
                }
                if points.is_empty() {
                    return Err(ConfigError::at(entry.line, "`z` needs at least one value"));
                }
                z_list = Some((entry.line, points));
            }
            "n" => {
                let v = parse_u64(entry)?;
                if v < 1 {
                    return Err(ConfigError::at(entry.line, "`n` must be at least 1"));
                }
                n = Some(v as usize);
            }
            "l" => {
                if entry.value == "auto" {
                    l = Some(None);
                } else {
                    let v = parse_u64(entry)?;
                    if !(1..=64).contains(&v) {
                        return Err(ConfigError::at(entry.line, "`l` must be `auto` or in 1..=64"));
                    }
                    l = Some(Some(v as u32));
                }
            }
            "trials" => {
                let v = parse_u64(entry)?;
                if v < 1 {
                    return Err(ConfigError::at(entry.line, "`trials` must be at least 1"));
                }
                trials = Some(v);
            }
            "seed" => seed = Some(parse_u64(entry)?),
            "r_max" => {
                let v = parse_u64(entry)?;
                if v < 1 {
                    return Err(ConfigError::at(entry.line, "`r_max` must be at least 1"));
                }
                r_max = Some(v);
            }
            "s_cap" => {
                let v = parse_u64(entry)?;
                if v < 1 {
                    return Err(ConfigError::at(entry.line, "`s_cap` must be at least 1"));
                }
                s_cap = Some(v);
            }
            "out" => {
                let path = PathBuf::from(&entry.value);
                out = Some(if path.is_absolute() { path } else { base.join(path) });
            }
            other => return Err(ConfigError::at(entry.line, format!("unknown key `{other}`"))),
        }
    }

    let matrix_path =
        matrix_path.ok_or_else(|| ConfigError::general("missing required key `matrix_file`"))?;
    let n = n.ok_or_else(|| ConfigError::general("missing required key `n`"))?;
    let trials = trials.ok_or_else(|| ConfigError::general("missing required key `trials`"))?;
    let p = p.unwrap_or(1.0);

    let sweep = match (snr_db, z_list) {
        (Some(_), Some((line, _))) => {
            return Err(ConfigError::at(line, "give either `snr_db` or `z`, not both"));
        }
        (None, None) => {
            return Err(ConfigError::general("one of `snr_db` or `z` is required"));
        }
        (Some((_, labels)), None) => labels
            .into_iter()
            .map(|label| {
                let db: f64 = label.parse().expect("validated above");
                SweepPoint { z: p / 10f64.powf(db / 10.0), label }
            })
            .collect(),
        (None, Some((_, points))) => points
            .into_iter()
            .map(|(_, z)| {
                let label = if z == 0.0 {
                    "inf".to_string()
                } else {
                    format!("{}", 10.0 * (p / z).log10())
                };
                SweepPoint { label, z }
            })
            .collect(),
    };

    Ok(SimFileConfig {
        matrix_path,
        mode,
        p,
        sweep,
        n,
        l: l.unwrap_or(None),
        trials,
        seed: seed.unwrap_or(0),
        r_max: r_max.unwrap_or(12),
        s_cap: s_cap.unwrap_or(10_000),
        out,
    })
}

/// Parses a real-valued gain matrix: one line with the user count `K`,
/// then `K` lines of `K` whitespace-separated entries. Blank lines and
/// `#` comments are ignored. Entries must be finite and non-negative.
pub fn parse_real_matrix(text: &str) -> Result<Vec<Vec<f64>>, ConfigError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (kline, ktext) =
        lines.next().ok_or_else(|| ConfigError::general("empty matrix file"))?;
    let k: usize = ktext
        .parse()
        .map_err(|_| ConfigError::at(kline, format!("expected the user count, got `{ktext}`")))?;
    if k < 1 {
        return Err(ConfigError::at(kline, "the user count must be at least 1"));
    }

    let mut rows = Vec::with_capacity(k);
    for i in 0..k {
        let (line, text) = lines
            .next()
            .ok_or_else(|| ConfigError::general(format!("expected {k} rows, found {i}")))?;
        let mut row = Vec::with_capacity(k);
        for tok in text.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| ConfigError::at(line, format!("`{tok}` is not a number")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::at(line, "entries must be finite and non-negative"));
            }
            row.push(v);
        }
        if row.len() != k {
            return Err(ConfigError::at(
                line,
                format!("expected {k} entries in row {}, found {}", i + 1, row.len()),
            ));
        }
        rows.push(row);
    }
    if let Some((line, _)) = lines.next() {
        return Err(ConfigError::at(line, format!("unexpected content after {k} rows")));
    }
    Ok(rows)
}

/// True when every entry is an integer of magnitude small enough for the
/// exact path, so `auto` mode can take it.
pub fn matrix_is_integral(rows: &[Vec<f64>]) -> bool {
    rows.iter().flatten().all(|&v| v.fract() == 0.0 && v.abs() <= 1e12)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# channel sweep
matrix_file = chan.txt
n = 4
l = 2
trials = 1000
snr_db = 40, 50 60
seed = 7
";

    #[test]
    fn parses_full_config() {
        let cfg = parse_sim_config(GOOD, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.matrix_path, PathBuf::from("/cfg/chan.txt"));
        assert_eq!(cfg.mode, ModeChoice::Auto);
        assert_eq!(cfg.p, 1.0);
        assert_eq!(cfg.n, 4);
        assert_eq!(cfg.l, Some(2));
        assert_eq!(cfg.trials, 1000);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.r_max, 12);
        assert_eq!(cfg.s_cap, 10_000);
        assert!(cfg.out.is_none());
        let labels: Vec<&str> = cfg.sweep.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["40", "50", "60"]);
        assert!((cfg.sweep[0].z - 1e-4).abs() < 1e-18);
        assert!((cfg.sweep[2].z - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn z_list_builds_labels() {
        let text = "matrix_file = m\nn = 1\ntrials = 10\nz = 0.01, 0\n";
        let cfg = parse_sim_config(text, Path::new(".")).unwrap();
        assert_eq!(cfg.sweep.len(), 2);
        assert_eq!(cfg.sweep[0].label, "20");
        assert_eq!(cfg.sweep[0].z, 0.01);
        assert_eq!(cfg.sweep[1].label, "inf");
        assert_eq!(cfg.sweep[1].z, 0.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        for (text, needle) in [
            ("n = 1\ntrials = 10\nsnr_db = 40\n", "matrix_file"),
            ("matrix_file = m\ntrials = 10\nsnr_db = 40\n", "`n`"),
            ("matrix_file = m\nn = 1\nsnr_db = 40\n", "`trials`"),
            ("matrix_file = m\nn = 1\ntrials = 10\n", "snr_db"),
            ("matrix_file = m\nn = 1\ntrials = 10\nsnr_db = 40\nz = 1\n", "not both"),
            ("matrix_file = m\nn = 1\ntrials = 10\nsnr_db = 40\nn = 2\n", "duplicate"),
            ("matrix_file = m\nn = 1\ntrials = 10\nsnr_db = 40\nwhat = 1\n", "unknown key"),
            ("matrix_file = m\nn = 1\ntrials = 10\nsnr_db = forty\n", "not a number"),
            ("matrix_file = m\nn = 1\ntrials = 10\nz = -1\n", "non-negative"),
            ("matrix_file = m\nn = 1\ntrials = 10\nsnr_db = 40\nl = 65\n", "1..=64"),
            ("matrix_file = m\nn = 1\ntrials = 0\nsnr_db = 40\n", "at least 1"),
            ("matrix_file = m\nn = 1\ntrials = 10\nsnr_db = 40\nmode = fast\n", "unknown mode"),
            ("just words\n", "key = value"),
        ] {
            let err = parse_sim_config(text, base).unwrap_err();
            assert!(
                err.to_string().contains(needle),
                "expected `{needle}` in `{err}` for config `{text}`"
            );
        }
    }

    #[test]
    fn duplicate_error_reports_line() {
        let text = "matrix_file = m\nn = 1\ntrials = 10\nsnr_db = 40\nn = 2\n";
        let err = parse_sim_config(text, Path::new(".")).unwrap_err();
        assert_eq!(err.line, Some(5));
    }

    #[test]
    fn parses_real_matrix_with_comments() {
        let text = "# gains\n2\n1 0.5\n0.3 1 # row two\n";
        let rows = parse_real_matrix(text).unwrap();
        assert_eq!(rows, vec![vec![1.0, 0.5], vec![0.3, 1.0]]);
        assert!(!matrix_is_integral(&rows));
        assert!(matrix_is_integral(&[vec![1.0, 36.0], vec![0.0, 2.0]]));
    }

    #[test]
    fn rejects_bad_matrices() {
        for (text, needle) in [
            ("", "empty"),
            ("two\n1 1\n1 1\n", "user count"),
            ("2\n1 1\n", "expected 2 rows"),
            ("2\n1 1 1\n1 1\n", "expected 2 entries"),
            ("2\n1 x\n1 1\n", "not a number"),
            ("2\n1 -1\n1 1\n", "non-negative"),
            ("1\n1\n2\n", "unexpected content"),
        ] {
            let err = parse_real_matrix(text).unwrap_err();
            assert!(err.to_string().contains(needle), "expected `{needle}` in `{err}`");
        }
    }
}
