//! `ifc`: command-line tools for deterministic interference channel
//! codes.
//!
//! Subcommands:
//!
//! - `analyze`: check a codebook against a channel matrix, print the
//!   verdict, `W_max`, and the efficiency.
//! - `design`: derive the arithmetic-progression codebook for a matrix
//!   and write it next to the input.
//! - `search`: scan the equivalence class of a matrix for the most
//!   efficient unit-step design and emit a re-verifiable JSON
//!   certificate, or re-verify an existing certificate with `--verify`.
//! - `simulate`: run lattice Monte-Carlo sweeps from a config file and
//!   emit CSV.
//!
//! Exit codes: 0 on success (and "decodable" for `analyze`), 1 for a
//! negative domain verdict (not decodable, isolated row, empty search,
//! failed verification), 2 for parse, config, and I/O errors.
//!
//! The environment variable `IFC_THREADS` caps worker threads; all
//! orchestration here is single-threaded and parallelism lives in the
//! library.

mod certificate;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use ifc_core::apcodes::{ap_design, ap_design_with_fallback};
use ifc_core::ddifc::{efficiency, is_decodable, ChannelMatrix, Codebook};
use ifc_core::equiv::{class_search, SearchBounds};
use ifc_core::gauss::{simulate, GaussError, GaussSimConfig, SimMode};

use certificate::Certificate;
use config::ModeChoice;

#[derive(Parser)]
#[command(name = "ifc", version, about = "Deterministic interference channel code tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a codebook against a channel matrix and report efficiency
    Analyze {
        /// Channel matrix file
        matrix: PathBuf,
        /// Codebook file with one comma-separated set per user
        codebook: PathBuf,
    },
    /// Derive the arithmetic-progression codebook for a channel matrix
    Design {
        /// Channel matrix file
        matrix: PathBuf,
        /// Codebook output path (default: matrix path with `.codebook`)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Give isolated rows a singleton-free set of this size instead
        /// of failing
        #[arg(long)]
        isolated_t: Option<u64>,
    },
    /// Search the equivalence class for the best unit-step design
    Search {
        /// Channel matrix file (required unless --verify is given)
        matrix: Option<PathBuf>,
        /// Largest column factor in the search grid
        #[arg(long, default_value_t = 12)]
        r_max: u64,
        /// Skip candidates whose step counts exceed this cap
        #[arg(long, default_value_t = 10_000)]
        s_cap: u64,
        /// Wall-clock budget; exceeding it truncates the scan
        #[arg(long)]
        time_budget_secs: Option<u64>,
        /// Certificate output path (default: matrix path with
        /// `.certificate.json`)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Re-verify an existing certificate instead of searching
        #[arg(long, value_name = "CERT")]
        verify: Option<PathBuf>,
    },
    /// Run Monte-Carlo simulations from a config file and emit CSV
    Simulate {
        /// Config file with `key = value` lines
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Analyze { matrix, codebook } => cmd_analyze(&matrix, &codebook),
        Command::Design { matrix, out, isolated_t } => cmd_design(&matrix, out, isolated_t),
        Command::Search { matrix, r_max, s_cap, time_budget_secs, out, verify } => {
            cmd_search(matrix, r_max, s_cap, time_budget_secs, out, verify)
        }
        Command::Simulate { config } => cmd_simulate(&config),
    };
    ExitCode::from(code)
}

/// Applies `IFC_THREADS` to the global worker pool before any parallel
/// work runs.
fn init_threads() {
    if let Ok(raw) = std::env::var("IFC_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(t) if t >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => eprintln!("warning: ignoring IFC_THREADS=`{raw}` (want a positive integer)"),
        }
    }
}

fn read_text(path: &Path) -> Result<String, u8> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        2
    })
}

fn load_matrix(path: &Path) -> Result<ChannelMatrix, u8> {
    let text = read_text(path)?;
    ChannelMatrix::parse(&text).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        2
    })
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn cmd_analyze(matrix: &Path, codebook: &Path) -> u8 {
    let h = match load_matrix(matrix) {
        Ok(h) => h,
        Err(code) => return code,
    };
    let ctext = match read_text(codebook) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let c = match Codebook::parse(&ctext, h.k()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", codebook.display());
            return 2;
        }
    };
    let report = match is_decodable(&h, &c) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if !report.decodable {
        match &report.witness {
            Some(w) => println!("not decodable: {w}"),
            None => println!("not decodable"),
        }
        return 1;
    }
    match efficiency(&h, &c) {
        Ok(eff) => {
            println!("decodable, W_max={}, eff={:.12}", eff.w_max, eff.efficiency);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_design(matrix: &Path, out: Option<PathBuf>, isolated_t: Option<u64>) -> u8 {
    let h = match load_matrix(matrix) {
        Ok(h) => h,
        Err(code) => return code,
    };
    let code = match isolated_t {
        Some(0) => {
            eprintln!("error: --isolated-t must be at least 1");
            return 2;
        }
        Some(t) => ap_design_with_fallback(&h, t),
        None => match ap_design(&h) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        },
    };
    let report = match efficiency(&h, code.codebook()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let out_path = out.unwrap_or_else(|| matrix.with_extension("codebook"));
    if let Err(e) = fs::write(&out_path, code.codebook().to_text()) {
        eprintln!("error: cannot write {}: {e}", out_path.display());
        return 2;
    }
    println!("s=({}), eff={:.12}", join(code.set_sizes()), report.efficiency);
    println!("wrote {}", out_path.display());
    0
}

fn cmd_search(
    matrix: Option<PathBuf>,
    r_max: u64,
    s_cap: u64,
    time_budget_secs: Option<u64>,
    out: Option<PathBuf>,
    verify: Option<PathBuf>,
) -> u8 {
    if let Some(cert_path) = verify {
        return cmd_verify(&cert_path);
    }
    let Some(matrix) = matrix else {
        eprintln!("error: give a matrix file or --verify CERT");
        return 2;
    };
    let h = match load_matrix(&matrix) {
        Ok(h) => h,
        Err(code) => return code,
    };
    let bounds = SearchBounds {
        r_max,
        s_cap,
        time_budget: time_budget_secs.map(Duration::from_secs),
    };
    let result = match class_search(&h, &bounds) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cert = Certificate::from_search(&h, &result);
    let mut json = serde_json::to_string_pretty(&cert).expect("certificate serializes");
    json.push('\n');
    let out_path = out.unwrap_or_else(|| matrix.with_extension("certificate.json"));
    if let Err(e) = fs::write(&out_path, json) {
        eprintln!("error: cannot write {}: {e}", out_path.display());
        return 2;
    }
    println!(
        "eff={:.12}, r=({}), d=({}), candidates={}, truncated={}",
        result.efficiency,
        join(result.transform.r()),
        join(result.transform.d()),
        result.candidates_examined,
        result.truncated
    );
    println!("wrote {}", out_path.display());
    0
}

fn cmd_verify(path: &Path) -> u8 {
    let text = match read_text(path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let cert: Certificate = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return 2;
        }
    };
    match cert.verify() {
        Ok(()) => {
            println!("certificate ok: k={}, eff={:.12}", cert.k, cert.efficiency);
            0
        }
        Err(reason) => {
            println!("certificate invalid: {reason}");
            1
        }
    }
}

fn cmd_simulate(config_path: &Path) -> u8 {
    let text = match read_text(config_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    let cfg = match config::parse_sim_config(&text, base) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config_path.display());
            return 2;
        }
    };
    let mtext = match read_text(&cfg.matrix_path) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let rows = match config::parse_real_matrix(&mtext) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", cfg.matrix_path.display());
            return 2;
        }
    };
    let mode = match cfg.mode {
        ModeChoice::Integer => SimMode::Integer,
        ModeChoice::Dithered => SimMode::DitheredReal,
        ModeChoice::Auto => {
            if config::matrix_is_integral(&rows) {
                SimMode::Integer
            } else {
                SimMode::DitheredReal
            }
        }
    };
    let k = rows.len();

    let mut csv = String::from("snr_db,n,l,q,eff,rate_theoretical,rate_empirical");
    for i in 1..=k {
        csv.push_str(&format!(",err_u{i}"));
    }
    csv.push_str(",trials,seed\n");

    for point in &cfg.sweep {
        let sim = GaussSimConfig {
            h: rows.clone(),
            p: cfg.p,
            z: point.z,
            n: cfg.n,
            l: cfg.l,
            trials: cfg.trials,
            mode,
            seed: cfg.seed,
            bounds: SearchBounds {
                r_max: cfg.r_max,
                s_cap: cfg.s_cap,
                time_budget: None,
            },
        };
        let mut fields: Vec<String> = vec![point.label.clone()];
        match simulate(&sim) {
            Ok(res) => {
                fields.push(res.n.to_string());
                fields.push(res.l.to_string());
                fields.push(res.q.to_string());
                fields.push(res.efficiency.to_string());
                fields.push(res.rate_theoretical.to_string());
                fields.push(res.rate_empirical.to_string());
                fields.extend(res.error_rates.iter().map(f64::to_string));
                fields.push(res.trials.to_string());
                fields.push(res.seed.to_string());
            }
            Err(GaussError::InfeasibleDepth { .. }) => {
                fields.push(cfg.n.to_string());
                fields.extend(std::iter::repeat(String::new()).take(5 + k));
                fields.push(cfg.trials.to_string());
                fields.push(cfg.seed.to_string());
            }
            Err(GaussError::InvalidConfig(msg)) => {
                eprintln!("error: {msg}");
                return 2;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return 1;
            }
        }
        csv.push_str(&fields.join(","));
        csv.push('\n');
    }

    match &cfg.out {
        Some(path) => {
            if let Err(e) = fs::write(path, csv) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return 2;
            }
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    0
}
