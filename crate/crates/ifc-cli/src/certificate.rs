//! Search certificates: human-readable JSON records of an
//! equivalence-class search outcome that can be re-verified from scratch,
//! without trusting the tool that wrote them.
//!
//! A certificate stores the source matrix, the best equivalent matrix,
//! the transform factors `r` and `d`, the codebook, and the claimed
//! efficiency. Verification re-applies the transform, re-proves
//! decodability by exhaustive enumeration, and recomputes the efficiency.

use std::str::FromStr;

use ifc_core::ddifc::{efficiency, is_decodable, ChannelMatrix, Codebook};
use ifc_core::equiv::{apply_transform, ClassSearchResult, EquivalenceTransform};
use ifc_core::exactmath::{BigInt, Rational};
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Claimed efficiency must recompute to within this absolute tolerance.
pub const EFFICIENCY_TOLERANCE: f64 = 1e-12;

/// Re-verifiable record of a class-search result. Exact values are kept
/// as decimal strings (`"36"`, `"1/6"`) so the JSON stays lossless and
/// readable for arbitrary magnitudes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    /// Number of users.
    pub k: usize,
    /// Matrix the search started from.
    pub source_matrix: Vec<Vec<String>>,
    /// Most efficient equivalent matrix found.
    pub best_matrix: Vec<Vec<String>>,
    /// Column factors of the transform.
    pub r: Vec<String>,
    /// Row divisors of the transform.
    pub d: Vec<String>,
    /// Codebook on `best_matrix`, one sorted list per user.
    pub codebook: Vec<Vec<String>>,
    /// Claimed efficiency of `codebook` on `best_matrix`.
    pub efficiency: f64,
    /// Grid points the search enumerated.
    pub candidates_examined: u64,
    /// True when a time budget cut the search short.
    pub truncated: bool,
}

impl Certificate {
    /// Builds the certificate for a finished search on `source`.
    pub fn from_search(source: &ChannelMatrix, result: &ClassSearchResult) -> Self {
        let matrix_strings = |m: &ChannelMatrix| -> Vec<Vec<String>> {
            m.rows().iter().map(|row| row.iter().map(BigInt::to_string).collect()).collect()
        };
        Certificate {
            k: source.k(),
            source_matrix: matrix_strings(source),
            best_matrix: matrix_strings(&result.best_matrix),
            r: result.transform.r().iter().map(BigInt::to_string).collect(),
            d: result.transform.d().iter().map(Rational::to_string).collect(),
            codebook: result
                .code
                .codebook()
                .sets()
                .iter()
                .map(|s| s.iter().map(BigInt::to_string).collect())
                .collect(),
            efficiency: result.efficiency,
            candidates_examined: result.candidates_examined,
            truncated: result.truncated,
        }
    }

    /// Re-derives every claim in the certificate and reports the first
    /// discrepancy. Passing means: the matrices and factors parse, the
    /// transform maps `source_matrix` onto `best_matrix`, the codebook is
    /// decodable on `best_matrix` by exhaustive check, and the efficiency
    /// recomputes to the stated value within [`EFFICIENCY_TOLERANCE`].
    pub fn verify(&self) -> Result<(), String> {
        let source = parse_matrix(&self.source_matrix, "source_matrix")?;
        let best = parse_matrix(&self.best_matrix, "best_matrix")?;
        if source.k() != self.k {
            return Err(format!("k is {} but source_matrix has {} rows", self.k, source.k()));
        }
        if best.k() != self.k {
            return Err(format!("k is {} but best_matrix has {} rows", self.k, best.k()));
        }

        let transform = parse_transform(&self.r, &self.d, self.k)?;
        let mapped = apply_transform(&source, &transform)
            .map_err(|e| format!("the transform does not apply to source_matrix: {e}"))?;
        if mapped != best {
            return Err("applying (r, d) to source_matrix does not give best_matrix".to_string());
        }

        let codebook = parse_codebook(&self.codebook, self.k)?;
        let report = is_decodable(&best, &codebook)
            .map_err(|e| format!("decodability check failed to run: {e}"))?;
        if !report.decodable {
            let detail = report
                .witness
                .map(|w| w.to_string())
                .unwrap_or_else(|| "collision found".to_string());
            return Err(format!("codebook is not decodable on best_matrix: {detail}"));
        }

        let recomputed = efficiency(&best, &codebook)
            .map_err(|e| format!("efficiency recomputation failed: {e}"))?;
        let delta = (recomputed.efficiency - self.efficiency).abs();
        if delta > EFFICIENCY_TOLERANCE {
            return Err(format!(
                "stated efficiency {} differs from recomputed {} by {delta:e}",
                self.efficiency, recomputed.efficiency
            ));
        }
        Ok(())
    }
}

fn parse_bigint(text: &str, what: &str) -> Result<BigInt, String> {
    BigInt::from_str(text).map_err(|_| format!("{what}: `{text}` is not an integer"))
}

fn parse_matrix(rows: &[Vec<String>], what: &str) -> Result<ChannelMatrix, String> {
    let mut parsed = Vec::with_capacity(rows.len());
    for row in rows {
        let mut cells = Vec::with_capacity(row.len());
        for cell in row {
            cells.push(parse_bigint(cell, what)?);
        }
        parsed.push(cells);
    }
    ChannelMatrix::new(parsed).map_err(|e| format!("{what}: {e}"))
}

fn parse_transform(r: &[String], d: &[String], k: usize) -> Result<EquivalenceTransform, String> {
    if r.len() != k || d.len() != k {
        return Err(format!(
            "transform has {} column factors and {} row divisors for k = {k}",
            r.len(),
            d.len()
        ));
    }
    let mut r_parsed = Vec::with_capacity(k);
    for text in r {
        let v = parse_bigint(text, "r")?;
        if v < BigInt::one() {
            return Err(format!("r: `{text}` is not a positive integer"));
        }
        r_parsed.push(v);
    }
    let mut d_parsed = Vec::with_capacity(k);
    for text in d {
        let v = Rational::from_str(text)
            .map_err(|_| format!("d: `{text}` is not a rational number"))?;
        if !v.is_positive() {
            return Err(format!("d: `{text}` is not positive"));
        }
        d_parsed.push(v);
    }
    Ok(EquivalenceTransform::new(r_parsed, d_parsed))
}

fn parse_codebook(sets: &[Vec<String>], k: usize) -> Result<Codebook, String> {
    if sets.len() != k {
        return Err(format!("codebook has {} sets for k = {k}", sets.len()));
    }
    let mut parsed = Vec::with_capacity(k);
    for (i, set) in sets.iter().enumerate() {
        let mut points = BTreeSet::new();
        for cell in set {
            let v = parse_bigint(cell, "codebook")?;
            if !points.insert(v) {
                return Err(format!("codebook set {} repeats `{cell}`", i + 1));
            }
        }
        parsed.push(points);
    }
    Codebook::new(parsed).map_err(|e| format!("codebook: {e}"))
}
