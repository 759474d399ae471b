//! Channel equivalence `H' = D(1/d) H D(r)`, code transfer between
//! equivalent channels, and bounded search over the class for the most
//! efficient arithmetic-progression design.
//!
//! Scaling transmitter `j` by a positive integer `r_j` and receiver `i` by
//! a positive rational `1/d_i` maps `H(i,j)` to `H(i,j) r_j / d_i`. When
//! the image is integral again the two channels carry each other's codes:
//! a codebook for the target becomes one for the source by scaling user
//! `j`'s codewords by `r_j`, and a source output turns back into a target
//! output by dividing by `d_i`. Efficiency is not invariant under the
//! relation, which is the point: [`class_search`] scans transforms with
//! `r_i <= R_max` to find a more efficient equivalent channel.
//!
//! The search enumerates only the column scalings. For a fixed `r` the
//! step counts do not depend on `d`, and each receiver's largest output
//! shrinks exactly by its own `d_i`, so the efficiency-optimal row
//! divisors are computed in closed form instead of being enumerated.

use crate::apcodes::{self, ApCode};
use crate::ddifc::{self, ChannelMatrix, Codebook};
use crate::exactmath::{gcd_all, log2_bigint, BigInt, Rational};
use crate::exec::{self, Exec};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive};
use std::fmt;
use std::time::{Duration, Instant};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from transform application and class search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EquivError {
    /// Entry `(row, col)` of the transformed matrix is not an integer.
    NonIntegerResult { row: usize, col: usize },
    /// A source-side output is not divisible by the receiver's `d_i`.
    NonIntegerOutput { receiver: usize },
    /// Row `receiver` has no interference, so no equivalent channel admits
    /// the gcd-driven design.
    IsolatedRow { receiver: usize },
    /// The bounds rejected every candidate, including the identity.
    EmptySearch,
}

impl fmt::Display for EquivError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquivError::NonIntegerResult { row, col } => {
                write!(f, "transformed entry ({},{}) is not an integer", row + 1, col + 1)
            }
            EquivError::NonIntegerOutput { receiver } => {
                write!(f, "output at receiver {} does not descale to an integer", receiver + 1)
            }
            EquivError::IsolatedRow { receiver } => write!(
                f,
                "receiver {} hears no interference; the class has no gcd-driven design",
                receiver + 1
            ),
            EquivError::EmptySearch => write!(f, "search bounds exclude every candidate"),
        }
    }
}

impl std::error::Error for EquivError {}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// A member of the scaling group: positive integer column factors `r` and
/// positive rational row divisors `d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EquivalenceTransform {
    r: Vec<BigInt>,
    d: Vec<Rational>,
}

impl EquivalenceTransform {
    /// Wraps the factor vectors.
    ///
    /// # Panics
    ///
    /// Panics when the lengths differ, some `r_i < 1`, or some `d_i <= 0`.
    pub fn new(r: Vec<BigInt>, d: Vec<Rational>) -> Self {
        assert_eq!(r.len(), d.len(), "factor vectors must have equal length");
        assert!(!r.is_empty(), "no users");
        assert!(r.iter().all(|x| x >= &BigInt::one()), "r factors must be positive integers");
        assert!(d.iter().all(|x| x.is_positive()), "d factors must be positive");
        EquivalenceTransform { r, d }
    }

    /// The do-nothing transform on `k` users.
    pub fn identity(k: usize) -> Self {
        EquivalenceTransform::new(
            vec![BigInt::one(); k],
            vec![Rational::from_integer(BigInt::one()); k],
        )
    }

    /// Column factors `r`.
    pub fn r(&self) -> &[BigInt] {
        &self.r
    }

    /// Row divisors `d`.
    pub fn d(&self) -> &[Rational] {
        &self.d
    }

    /// Number of users.
    pub fn k(&self) -> usize {
        self.r.len()
    }

    /// The transform applying `self` first and `next` second.
    pub fn compose(&self, next: &EquivalenceTransform) -> EquivalenceTransform {
        assert_eq!(self.k(), next.k(), "user-count mismatch");
        let r = self.r.iter().zip(&next.r).map(|(a, b)| a * b).collect();
        let d = self.d.iter().zip(&next.d).map(|(a, b)| a * b).collect();
        EquivalenceTransform::new(r, d)
    }

    /// Maps receiver `i`'s output under the source matrix to the
    /// corresponding output under the target matrix (divides by `d_i`).
    ///
    /// # Errors
    ///
    /// [`EquivError::NonIntegerOutput`] when `d_i` does not divide `y`,
    /// which cannot happen for outputs of a transferred codebook.
    pub fn descale_output(&self, i: usize, y: &BigInt) -> Result<BigInt, EquivError> {
        let v = Rational::from_integer(y.clone()) / &self.d[i];
        if !v.is_integer() {
            return Err(EquivError::NonIntegerOutput { receiver: i });
        }
        Ok(v.to_integer())
    }
}

/// Applies `H(i,j) -> H(i,j) r_j / d_i`, requiring an all-integer image.
///
/// # Errors
///
/// [`EquivError::NonIntegerResult`] at the first (row-major) entry that
/// fails integrality.
pub fn apply_transform(
    h: &ChannelMatrix,
    t: &EquivalenceTransform,
) -> Result<ChannelMatrix, EquivError> {
    assert_eq!(h.k(), t.k(), "user-count mismatch");
    let k = h.k();
    let mut entries = Vec::with_capacity(k);
    for i in 0..k {
        let mut row = Vec::with_capacity(k);
        for j in 0..k {
            let v = Rational::from_integer(h.entry(i, j) * &t.r[j]) / &t.d[i];
            if !v.is_integer() {
                return Err(EquivError::NonIntegerResult { row: i, col: j });
            }
            row.push(v.to_integer());
        }
        entries.push(row);
    }
    Ok(ChannelMatrix::new(entries).expect("positive scalings preserve matrix invariants"))
}

/// The transform mapping the target back to the source: with `R = prod r`,
/// `r'_i = R / r_i` and `d'_i = R / d_i`.
pub fn invert_transform(t: &EquivalenceTransform) -> EquivalenceTransform {
    let total: BigInt = t.r.iter().product();
    let r = t.r.iter().map(|ri| &total / ri).collect();
    let d = t
        .d
        .iter()
        .map(|di| Rational::from_integer(total.clone()) / di)
        .collect();
    EquivalenceTransform::new(r, d)
}

/// Scales a codebook for the target matrix into one for the source:
/// `C~_i = r_i C_i`.
pub fn transfer_code(c: &Codebook, t: &EquivalenceTransform) -> Codebook {
    assert_eq!(c.k(), t.k(), "user-count mismatch");
    let sets = c
        .sets()
        .iter()
        .zip(&t.r)
        .map(|(set, r)| ddifc::scale_set(r, set))
        .collect();
    Codebook::new(sets).expect("positive scaling preserves codebook invariants")
}

// ---------------------------------------------------------------------------
// Class search
// ---------------------------------------------------------------------------

/// Limits on the class enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchBounds {
    /// Largest column factor; the grid is `r in [1, r_max]^K`.
    pub r_max: u64,
    /// Candidates with any step count above this are skipped.
    pub s_cap: u64,
    /// Optional wall-clock budget; exceeding it truncates the scan after
    /// the current chunk (the result then depends on machine speed).
    pub time_budget: Option<Duration>,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            r_max: 12,
            s_cap: 10_000,
            time_budget: None,
        }
    }
}

/// The winning candidate of a class search.
#[derive(Debug, Clone)]
pub struct ClassSearchResult {
    /// The most efficient equivalent matrix found.
    pub best_matrix: ChannelMatrix,
    /// The transform mapping the source matrix to `best_matrix`.
    pub transform: EquivalenceTransform,
    /// The unit-step design on `best_matrix`.
    pub code: ApCode,
    /// Efficiency of `code` on `best_matrix`.
    pub efficiency: f64,
    /// Number of grid points enumerated (including skipped ones).
    pub candidates_examined: u64,
    /// True when the time budget cut the scan short.
    pub truncated: bool,
}

/// One evaluated grid point; `d` entries are integers by construction.
struct Candidate {
    r: Vec<u64>,
    d: Vec<BigInt>,
    eff: f64,
}

/// Total preference order: higher efficiency, then lexicographically
/// smaller `(r, d)`. Associative, so reduction order never matters.
fn prefer(a: Candidate, b: Candidate) -> Candidate {
    if a.eff != b.eff {
        return if a.eff > b.eff { a } else { b };
    }
    match a.r.cmp(&b.r) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.d <= b.d {
                a
            } else {
                b
            }
        }
    }
}

/// Decodes grid index `t` into the column factors, `r_1` most significant,
/// so ascending `t` is ascending lexicographic `r`.
fn r_point(mut t: u128, k: usize, r_max: u64) -> Vec<u64> {
    let mut r = vec![1u64; k];
    for j in (0..k).rev() {
        r[j] = 1 + (t % r_max as u128) as u64;
        t /= r_max as u128;
    }
    r
}

/// Ascending divisors of `g`, or `None` when `g` is too large to factor
/// by trial division in reasonable time.
fn divisors_ascending(g: &BigInt) -> Option<Vec<u64>> {
    let g = g.to_u64()?;
    if g > 1_000_000_000_000 {
        return None;
    }
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut i = 1u64;
    while i * i <= g {
        if g % i == 0 {
            small.push(i);
            if i != g / i {
                large.push(g / i);
            }
        }
        i += 1;
    }
    large.reverse();
    small.extend(large);
    Some(small)
}

/// Evaluates one column scaling `M = H D(r)`.
///
/// Step counts are invariant under row divisors, and receiver `i`'s
/// largest output is `A_i / d_i`, so the best reachable alphabet bound is
/// `W* = max_i A_i / G_i` with `G_i` the full row gcd. The reported `d`
/// is the lexicographically smallest divisor vector attaining `W*`:
/// per row, the smallest divisor of `G_i` with `d_i W* >= A_i`.
fn eval_point(h: &ChannelMatrix, r: &[u64], s_cap: u64) -> Option<Candidate> {
    let k = h.k();
    let m: Vec<Vec<BigInt>> = (0..k)
        .map(|i| (0..k).map(|j| h.entry(i, j) * BigInt::from(r[j])).collect())
        .collect();
    let cap = BigInt::from(s_cap);
    let mut s = Vec::with_capacity(k);
    let mut g_full = Vec::with_capacity(k);
    for i in 0..k {
        let off: Vec<BigInt> = m[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, e)| e.clone())
            .collect();
        let ghat = gcd_all(&off);
        let g = ghat.gcd(&m[i][i]);
        let si = &ghat / &g;
        if si > cap {
            return None;
        }
        s.push(si);
        g_full.push(g);
    }
    let a: Vec<BigInt> = (0..k)
        .map(|i| (0..k).map(|j| &m[i][j] * (&s[j] - BigInt::one())).sum())
        .collect();
    let w_star = (0..k)
        .map(|i| &a[i] / &g_full[i])
        .max()
        .expect("K >= 1");
    let sum_log: f64 = s.iter().map(log2_bigint).sum();
    let eff = if sum_log == 0.0 {
        0.0
    } else {
        sum_log / log2_bigint(&(&w_star + BigInt::one()))
    };
    let d = (0..k)
        .map(|i| match divisors_ascending(&g_full[i]) {
            Some(divs) => {
                let di = divs
                    .into_iter()
                    .find(|&x| BigInt::from(x) * &w_star >= a[i])
                    .expect("the full gcd always attains W*");
                BigInt::from(di)
            }
            None => g_full[i].clone(),
        })
        .collect();
    Some(Candidate { r: r.to_vec(), d, eff })
}

/// Searches the equivalence class for the most efficient unit-step design,
/// with the default execution mode.
pub fn class_search(
    h: &ChannelMatrix,
    bounds: &SearchBounds,
) -> Result<ClassSearchResult, EquivError> {
    class_search_exec(h, bounds, Exec::default())
}

/// [`class_search`] with an explicit execution mode.
///
/// The scan covers `r in [1, r_max]^K`; for each point the optimal row
/// divisors are closed-form (see [`eval_point`]'s reduction), so the grid
/// is the whole search space. The winner's code is re-verified through
/// [`apcodes::ap_design`], including its decodability oracle.
///
/// # Errors
///
/// [`EquivError::IsolatedRow`] when some receiver hears no interference
/// (no member of the class supports the design);
/// [`EquivError::EmptySearch`] when the bounds reject every grid point.
pub fn class_search_exec(
    h: &ChannelMatrix,
    bounds: &SearchBounds,
    exec: Exec,
) -> Result<ClassSearchResult, EquivError> {
    let k = h.k();
    if let Some(&i) = apcodes::isolated_rows(h).first() {
        return Err(EquivError::IsolatedRow { receiver: i });
    }
    if bounds.r_max < 1 {
        return Err(EquivError::EmptySearch);
    }
    let total = (bounds.r_max as u128).pow(k as u32);
    let start = Instant::now();
    let chunk = 2048u128;
    let mut best: Option<Candidate> = None;
    let mut examined = 0u64;
    let mut truncated = false;
    let mut t0 = 0u128;
    while t0 < total {
        let len = chunk.min(total - t0) as usize;
        let evaluated = exec::map_collect(exec, len, |off| {
            eval_point(h, &r_point(t0 + off as u128, k, bounds.r_max), bounds.s_cap)
        });
        examined += len as u64;
        for c in evaluated.into_iter().flatten() {
            best = Some(match best.take() {
                None => c,
                Some(b) => prefer(b, c),
            });
        }
        t0 += len as u128;
        if let Some(budget) = bounds.time_budget {
            if start.elapsed() > budget && t0 < total {
                truncated = true;
                break;
            }
        }
    }
    let win = best.ok_or(EquivError::EmptySearch)?;
    let transform = EquivalenceTransform::new(
        win.r.iter().map(|&x| BigInt::from(x)).collect(),
        win.d.iter().cloned().map(Rational::from_integer).collect(),
    );
    let best_matrix = apply_transform(h, &transform).expect("search candidates are integral");
    let code = apcodes::ap_design(&best_matrix).expect("isolation was excluded up front");
    let report = ddifc::efficiency_unchecked(&best_matrix, code.codebook());
    debug_assert!(
        (report.efficiency - win.eff).abs() < 1e-12,
        "winner efficiency mismatch: {} vs {}",
        report.efficiency,
        win.eff
    );
    Ok(ClassSearchResult {
        best_matrix,
        transform,
        code,
        efficiency: report.efficiency,
        candidates_examined: examined,
        truncated,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
