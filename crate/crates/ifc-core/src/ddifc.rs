//! The scalar discrete deterministic interference channel `Y = H X`.
//!
//! A [`ChannelMatrix`] `H` maps a tuple of transmitted codewords
//! `X = (X_1, ..., X_K)`, one from each user's [`Codebook`] set, to the
//! noiseless receiver outputs `Y_i = sum_j H(i,j) X_j`. Receiver `i` must
//! recover `X_i` from `Y_i` alone. This module provides the Minkowski-sum
//! machinery behind that condition, exhaustive decodability verification
//! with collision witnesses, table-based decoding, the output-alphabet bound
//! `W_max`, and the efficiency figure of merit
//! `Eff(C) = sum_i log2|C_i| / log2(W_max)`.
//!
//! Decodability here is a proof, not an estimate: verification enumerates
//! the full message space and refuses (with a capacity error) when the
//! space exceeds [`ENUMERATION_CAP`].

use crate::exactmath::{log2_bigint, BigInt};
use crate::exec::{self, Exec};
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeSet, HashMap};
use std::fmt;

/// Largest admissible product of codebook sizes for exhaustive checks.
pub const ENUMERATION_CAP: u64 = 10_000_000;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from channel/codebook construction and the exact-verification ops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DdifcError {
    /// Construction of a [`ChannelMatrix`] violated an invariant.
    InvalidMatrix(String),
    /// Construction of a [`Codebook`] violated an invariant.
    InvalidCodebook(String),
    /// The message space is too large for an exhaustive proof.
    EnumerationCapExceeded { product: BigInt, cap: u64 },
    /// `y` is not a possible output at this receiver.
    NotInImage { receiver: usize, y: BigInt },
    /// The codebook is not decodable for the channel.
    NotDecodable { witness: Option<CollisionWitness> },
}

impl fmt::Display for DdifcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DdifcError::InvalidMatrix(msg) => write!(f, "invalid channel matrix: {msg}"),
            DdifcError::InvalidCodebook(msg) => write!(f, "invalid codebook: {msg}"),
            DdifcError::EnumerationCapExceeded { product, cap } => write!(
                f,
                "message space of size {product} exceeds the exhaustive-check cap {cap}"
            ),
            DdifcError::NotInImage { receiver, y } => {
                write!(f, "{y} is not a channel output at receiver {}", receiver + 1)
            }
            DdifcError::NotDecodable { witness } => match witness {
                Some(w) => write!(f, "codebook not decodable: {w}"),
                None => write!(f, "codebook not decodable"),
            },
        }
    }
}

impl std::error::Error for DdifcError {}

/// A parse failure in one of the text formats, with a 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

fn perr(line: usize, column: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        column,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Channel matrix
// ---------------------------------------------------------------------------

/// A K x K matrix of non-negative integer channel gains.
///
/// Diagonal entries must be at least 1 (a receiver with zero direct gain can
/// never decode). Interference channels have `K >= 2`; `K = 1` is accepted
/// for degenerate single-user analysis, but the `Eff < K/2` bound only
/// applies from `K = 2` upward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMatrix {
    k: usize,
    entries: Vec<Vec<BigInt>>,
}

impl ChannelMatrix {
    /// Validates and wraps a square matrix of non-negative gains.
    pub fn new(entries: Vec<Vec<BigInt>>) -> Result<Self, DdifcError> {
        let k = entries.len();
        if k == 0 {
            return Err(DdifcError::InvalidMatrix("matrix has no rows".into()));
        }
        for (i, row) in entries.iter().enumerate() {
            if row.len() != k {
                return Err(DdifcError::InvalidMatrix(format!(
                    "row {} has {} entries, expected {k}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, e) in row.iter().enumerate() {
                if e.is_negative() {
                    return Err(DdifcError::InvalidMatrix(format!(
                        "entry ({},{}) is negative",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if entries[i][i].is_zero() {
                return Err(DdifcError::InvalidMatrix(format!(
                    "diagonal entry ({0},{0}) must be >= 1",
                    i + 1
                )));
            }
        }
        Ok(ChannelMatrix { k, entries })
    }

    /// Convenience constructor from machine integers; panics on invalid input.
    pub fn from_i64(rows: &[&[i64]]) -> Self {
        let entries = rows
            .iter()
            .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
            .collect();
        ChannelMatrix::new(entries).expect("valid matrix literal")
    }

    /// Number of users K.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Gain from transmitter `j` to receiver `i` (0-based).
    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i][j]
    }

    /// Row `i` of gains (0-based receiver index).
    pub fn row(&self, i: usize) -> &[BigInt] {
        &self.entries[i]
    }

    /// All rows.
    pub fn rows(&self) -> &[Vec<BigInt>] {
        &self.entries
    }

    /// Parses the text format: first line `K`, then `K` whitespace-separated
    /// rows of non-negative integers. Blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = meaningful_lines(text);
        let (lno, header) = lines
            .next()
            .ok_or_else(|| perr(1, 1, "empty input, expected user count K"))?;
        let mut toks = tokens_with_cols(header);
        let (col, ktok) = toks
            .next()
            .ok_or_else(|| perr(lno, 1, "expected user count K"))?;
        let k: usize = ktok
            .parse()
            .map_err(|_| perr(lno, col, format!("invalid user count '{ktok}'")))?;
        if k == 0 {
            return Err(perr(lno, col, "user count K must be at least 1"));
        }
        if let Some((col, tok)) = toks.next() {
            return Err(perr(lno, col, format!("unexpected token '{tok}' after K")));
        }
        let mut entries: Vec<Vec<BigInt>> = Vec::with_capacity(k);
        let mut last_line = lno;
        for i in 0..k {
            let (lno, line) = lines
                .next()
                .ok_or_else(|| perr(last_line + 1, 1, format!("expected matrix row {}", i + 1)))?;
            last_line = lno;
            let mut row = Vec::with_capacity(k);
            let mut toks = tokens_with_cols(line);
            for j in 0..k {
                let (col, tok) = toks.next().ok_or_else(|| {
                    perr(
                        lno,
                        line.len() + 1,
                        format!("row {} has {j} entries, expected {k}", i + 1),
                    )
                })?;
                let v: BigInt = tok
                    .parse()
                    .map_err(|_| perr(lno, col, format!("invalid integer '{tok}'")))?;
                if v.is_negative() {
                    return Err(perr(lno, col, "channel gains must be non-negative"));
                }
                if i == j && v.is_zero() {
                    return Err(perr(lno, col, "diagonal entries must be >= 1"));
                }
                row.push(v);
            }
            if let Some((col, tok)) = toks.next() {
                return Err(perr(lno, col, format!("unexpected token '{tok}' in row {}", i + 1)));
            }
            entries.push(row);
        }
        if let Some((lno, line)) = lines.next() {
            let (col, _) = tokens_with_cols(line).next().expect("non-blank line");
            return Err(perr(lno, col, "unexpected extra line after matrix rows"));
        }
        ChannelMatrix::new(entries).map_err(|e| perr(last_line, 1, e.to_string()))
    }

    /// Renders the text format parsed by [`ChannelMatrix::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.k);
        for row in &self.entries {
            let cells: Vec<String> = row.iter().map(|e| e.to_string()).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ChannelMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

/// K finite transmit alphabets of non-negative integers, one per user.
///
/// Every set must contain 0: translating a codebook never affects
/// decodability, so the normalization loses no generality and keeps the
/// `W_max` accounting simple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    sets: Vec<BTreeSet<BigInt>>,
}

impl Codebook {
    /// Validates and wraps per-user codeword sets.
    pub fn new(sets: Vec<BTreeSet<BigInt>>) -> Result<Self, DdifcError> {
        if sets.is_empty() {
            return Err(DdifcError::InvalidCodebook("no per-user sets".into()));
        }
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(DdifcError::InvalidCodebook(format!("set {} is empty", i + 1)));
            }
            if !set.contains(&BigInt::zero()) {
                return Err(DdifcError::InvalidCodebook(format!(
                    "set {} does not contain 0",
                    i + 1
                )));
            }
            if set.iter().next().expect("non-empty").is_negative() {
                return Err(DdifcError::InvalidCodebook(format!(
                    "set {} contains a negative codeword",
                    i + 1
                )));
            }
        }
        Ok(Codebook { sets })
    }

    /// Convenience constructor from machine integers; panics on invalid input.
    pub fn from_i64(sets: &[&[i64]]) -> Self {
        let sets = sets
            .iter()
            .map(|s| s.iter().map(|&x| BigInt::from(x)).collect())
            .collect();
        Codebook::new(sets).expect("valid codebook literal")
    }

    /// Number of users K.
    pub fn k(&self) -> usize {
        self.sets.len()
    }

    /// User `i`'s codeword set (0-based).
    pub fn set(&self, i: usize) -> &BTreeSet<BigInt> {
        &self.sets[i]
    }

    /// All per-user sets.
    pub fn sets(&self) -> &[BTreeSet<BigInt>] {
        &self.sets
    }

    /// Per-user set sizes.
    pub fn sizes(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.len()).collect()
    }

    /// Product of the per-user set sizes (the message-space size).
    pub fn size_product(&self) -> BigInt {
        self.sets
            .iter()
            .fold(BigInt::one(), |acc, s| acc * BigInt::from(s.len()))
    }

    /// Largest codeword of user `i`.
    pub fn max(&self, i: usize) -> &BigInt {
        self.sets[i].iter().next_back().expect("non-empty set")
    }

    /// Parses the text format: `K` lines, each a comma-separated strictly
    /// ascending list of non-negative integers containing 0.
    pub fn parse(text: &str, k: usize) -> Result<Self, ParseError> {
        let mut lines = meaningful_lines(text);
        let mut sets = Vec::with_capacity(k);
        let mut last_line = 0;
        for i in 0..k {
            let (lno, line) = lines.next().ok_or_else(|| {
                perr(last_line + 1, 1, format!("expected codebook line {}", i + 1))
            })?;
            last_line = lno;
            let mut set = BTreeSet::new();
            let mut prev: Option<BigInt> = None;
            let mut offset = 0usize;
            for piece in line.split(',') {
                let trimmed = piece.trim();
                let col = offset + (piece.len() - piece.trim_start().len()) + 1;
                if trimmed.is_empty() {
                    return Err(perr(lno, col, "empty codebook entry"));
                }
                let v: BigInt = trimmed
                    .parse()
                    .map_err(|_| perr(lno, col, format!("invalid integer '{trimmed}'")))?;
                if v.is_negative() {
                    return Err(perr(lno, col, "codewords must be non-negative"));
                }
                if let Some(p) = &prev {
                    if &v <= p {
                        return Err(perr(lno, col, "codewords must be strictly ascending"));
                    }
                }
                prev = Some(v.clone());
                set.insert(v);
                offset += piece.len() + 1;
            }
            if !set.contains(&BigInt::zero()) {
                return Err(perr(lno, 1, format!("codebook line {} must contain 0", i + 1)));
            }
            sets.push(set);
        }
        if let Some((lno, line)) = lines.next() {
            let (col, _) = tokens_with_cols(line).next().expect("non-blank line");
            return Err(perr(lno, col, "unexpected extra line after codebook rows"));
        }
        Codebook::new(sets).map_err(|e| perr(last_line, 1, e.to_string()))
    }

    /// Renders the text format parsed by [`Codebook::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for set in &self.sets {
            let cells: Vec<String> = set.iter().map(|e| e.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Codebook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Non-blank lines with their 1-based line numbers.
fn meaningful_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Whitespace-separated tokens with their 1-based starting columns.
fn tokens_with_cols(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_whitespace().map(move |tok| {
        let col = tok.as_ptr() as usize - line.as_ptr() as usize + 1;
        (col, tok)
    })
}

// ---------------------------------------------------------------------------
// Set operations
// ---------------------------------------------------------------------------

/// Minkowski sum `{ x + y : x in a, y in b }`.
///
/// # Examples
///
/// ```
/// use ifc_core::ddifc::minkowski_sum;
/// use ifc_core::exactmath::BigInt;
/// use std::collections::BTreeSet;
///
/// let a: BTreeSet<BigInt> = [0, 1].iter().map(|&x| BigInt::from(x)).collect();
/// let b: BTreeSet<BigInt> = [0, 2].iter().map(|&x| BigInt::from(x)).collect();
/// let expect: BTreeSet<BigInt> = [0, 1, 2, 3].iter().map(|&x| BigInt::from(x)).collect();
/// assert_eq!(minkowski_sum(&a, &b), expect);
/// ```
pub fn minkowski_sum(a: &BTreeSet<BigInt>, b: &BTreeSet<BigInt>) -> BTreeSet<BigInt> {
    assert!(!a.is_empty() && !b.is_empty(), "minkowski_sum: empty operand");
    let mut out = BTreeSet::new();
    for x in a {
        for y in b {
            out.insert(x + y);
        }
    }
    out
}

/// Pointwise scaling `{ k x : x in s }`; scaling by 0 collapses to `{0}`.
pub fn scale_set(k: &BigInt, s: &BTreeSet<BigInt>) -> BTreeSet<BigInt> {
    s.iter().map(|x| k * x).collect()
}

/// The interference sumset `S_i = (+)_{j != i} H(i,j) C_j` at receiver `i`.
///
/// Zero-gain interferers contribute the neutral set `{0}`.
pub fn interference_set(h: &ChannelMatrix, c: &Codebook, i: usize) -> BTreeSet<BigInt> {
    assert_eq!(h.k(), c.k(), "user-count mismatch");
    let mut s: BTreeSet<BigInt> = [BigInt::zero()].into_iter().collect();
    for j in 0..h.k() {
        if j == i || h.entry(i, j).is_zero() {
            continue;
        }
        s = minkowski_sum(&s, &scale_set(h.entry(i, j), c.set(j)));
    }
    s
}

/// Largest possible output at receiver `i`: `sum_j H(i,j) max(C_j)`.
pub fn receiver_max_output(h: &ChannelMatrix, c: &Codebook, i: usize) -> BigInt {
    (0..h.k()).map(|j| h.entry(i, j) * c.max(j)).sum()
}

/// The output-alphabet bound `W_max`: one plus the largest channel output
/// over all receivers and message tuples.
///
/// All gains and codewords are non-negative, so the maximum output at
/// receiver `i` is exactly `sum_j H(i,j) max(C_j)`.
pub fn w_max(h: &ChannelMatrix, c: &Codebook) -> BigInt {
    assert_eq!(h.k(), c.k(), "user-count mismatch");
    let row_max = (0..h.k())
        .map(|i| receiver_max_output(h, c, i))
        .max()
        .expect("K >= 1");
    row_max + 1
}

// ---------------------------------------------------------------------------
// Decodability
// ---------------------------------------------------------------------------

/// Two message tuples that a receiver cannot distinguish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionWitness {
    /// Receiver that sees the collision (0-based).
    pub receiver: usize,
    /// First colliding message tuple (in row-major enumeration order).
    pub x1: Vec<BigInt>,
    /// Second colliding tuple; differs from `x1` in coordinate `receiver`.
    pub x2: Vec<BigInt>,
    /// The shared output `Y_receiver`.
    pub y: BigInt,
}

impl fmt::Display for CollisionWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fmt_tuple = |xs: &[BigInt]| {
            let cells: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
            format!("({})", cells.join(","))
        };
        write!(
            f,
            "receiver {} confuses X{} with X{} at Y={}",
            self.receiver + 1,
            fmt_tuple(&self.x1),
            fmt_tuple(&self.x2),
            self.y
        )
    }
}

/// Outcome of a decodability proof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodabilityReport {
    pub decodable: bool,
    /// Present exactly when `decodable` is false: the first collision in
    /// row-major enumeration order at the lowest-indexed failing receiver.
    pub witness: Option<CollisionWitness>,
}

/// Exhaustive decodability proof via the sumset-cardinality criterion.
///
/// The codebook is decodable iff for every receiver `i`
/// `|H(i,i) C_i (+) S_i| = |C_i| * |S_i|`. On failure the report carries a
/// deterministic collision witness. Runs with the default execution mode;
/// see [`is_decodable_exec`].
///
/// # Errors
///
/// [`DdifcError::EnumerationCapExceeded`] when the message space exceeds
/// [`ENUMERATION_CAP`]: a proof must enumerate, never sample.
pub fn is_decodable(h: &ChannelMatrix, c: &Codebook) -> Result<DecodabilityReport, DdifcError> {
    is_decodable_exec(h, c, Exec::default())
}

/// [`is_decodable`] with an explicit execution mode.
pub fn is_decodable_exec(
    h: &ChannelMatrix,
    c: &Codebook,
    exec: Exec,
) -> Result<DecodabilityReport, DdifcError> {
    assert_eq!(h.k(), c.k(), "user-count mismatch");
    check_cap(c)?;
    match to_u64_instance(h, c) {
        Some(inst) => Ok(decodable_impl(&inst.h, &inst.c, exec)),
        None => {
            let (hb, cb) = to_bigint_instance(h, c);
            Ok(decodable_impl(&hb, &cb, exec))
        }
    }
}

fn check_cap(c: &Codebook) -> Result<(), DdifcError> {
    let product = c.size_product();
    if product > BigInt::from(ENUMERATION_CAP) {
        return Err(DdifcError::EnumerationCapExceeded {
            product,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// Channel and codebook as u64, valid when every output fits.
struct U64Instance {
    h: Vec<Vec<u64>>,
    c: Vec<Vec<u64>>,
}

fn to_u64_instance(h: &ChannelMatrix, c: &Codebook) -> Option<U64Instance> {
    // Every value manipulated is bounded by the largest receiver output,
    // so fitting w_max in 63 bits makes the whole enumeration overflow-free.
    if w_max(h, c).bits() > 63 {
        return None;
    }
    let hh = h
        .rows()
        .iter()
        .map(|row| row.iter().map(|e| e.to_u64().expect("bounded by w_max")).collect())
        .collect();
    let cc = c
        .sets()
        .iter()
        .map(|s| s.iter().map(|e| e.to_u64().expect("bounded by w_max")).collect())
        .collect();
    Some(U64Instance { h: hh, c: cc })
}

fn to_bigint_instance(h: &ChannelMatrix, c: &Codebook) -> (Vec<Vec<BigInt>>, Vec<Vec<BigInt>>) {
    let hb = h.rows().to_vec();
    let cb = c.sets().iter().map(|s| s.iter().cloned().collect()).collect();
    (hb, cb)
}

/// Value type for enumeration internals: u64 fast path, BigInt fallback.
trait Val: Clone + Ord + std::hash::Hash + Send + Sync {
    fn add_val(&self, o: &Self) -> Self;
    fn mul_val(&self, o: &Self) -> Self;
    fn is_zero_val(&self) -> bool;
    fn to_bigint(&self) -> BigInt;
}

impl Val for u64 {
    fn add_val(&self, o: &Self) -> Self {
        self + o
    }
    fn mul_val(&self, o: &Self) -> Self {
        self * o
    }
    fn is_zero_val(&self) -> bool {
        *self == 0
    }
    fn to_bigint(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl Val for BigInt {
    fn add_val(&self, o: &Self) -> Self {
        self + o
    }
    fn mul_val(&self, o: &Self) -> Self {
        self * o
    }
    fn is_zero_val(&self) -> bool {
        self.is_zero()
    }
    fn to_bigint(&self) -> BigInt {
        self.clone()
    }
}

/// Sorted deduplicated sumset of two sorted slices.
fn sorted_sumset<T: Val>(a: &[T], b: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x.add_val(y));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// The interference sumset `S_i` over sorted slices.
fn interference_sorted<T: Val>(h: &[Vec<T>], c: &[Vec<T>], i: usize, zero: T) -> Vec<T> {
    let mut s = vec![zero];
    for (j, cset) in c.iter().enumerate() {
        if j == i || h[i][j].is_zero_val() {
            continue;
        }
        let scaled: Vec<T> = cset.iter().map(|x| h[i][j].mul_val(x)).collect();
        s = sorted_sumset(&s, &scaled);
    }
    s
}

fn decodable_impl<T: Val>(hv: &[Vec<T>], cv: &[Vec<T>], exec: Exec) -> DecodabilityReport {
    let k = hv.len();
    // Sets are sorted ascending and contain 0, so cv[i][0] is the zero value.
    let zero = cv[0][0].clone();
    for i in 0..k {
        let s_i = interference_sorted(hv, cv, i, zero.clone());
        let c_i = &cv[i];
        let expected = c_i.len() as u64 * s_i.len() as u64;
        // Each shifted copy H(i,i) x + S_i is itself sorted; the distinct
        // count over the concatenation is the sumset cardinality.
        let mut all: Vec<T> = exec::map_collect(exec, c_i.len(), |ci| {
            let shift = hv[i][i].mul_val(&c_i[ci]);
            s_i.iter().map(|s| shift.add_val(s)).collect::<Vec<T>>()
        })
        .into_iter()
        .flatten()
        .collect();
        exec::sort_unstable(exec, &mut all);
        all.dedup();
        if (all.len() as u64) < expected {
            let witness = find_witness(hv, cv, i).map(|w| w.into_witness(i));
            debug_assert!(witness.is_some(), "cardinality drop implies a collision");
            return DecodabilityReport {
                decodable: false,
                witness,
            };
        }
    }
    DecodabilityReport {
        decodable: true,
        witness: None,
    }
}

/// Raw collision from the tuple scan, still in enumeration value type.
struct RawCollision<T> {
    x1: Vec<T>,
    x2: Vec<T>,
    y: T,
}

impl<T: Val> RawCollision<T> {
    fn into_witness(self, receiver: usize) -> CollisionWitness {
        CollisionWitness {
            receiver,
            x1: self.x1.iter().map(Val::to_bigint).collect(),
            x2: self.x2.iter().map(Val::to_bigint).collect(),
            y: self.y.to_bigint(),
        }
    }
}

/// Deterministic collision search at receiver `i`: scan message tuples in
/// row-major order (last user fastest), remember the first tuple per output,
/// and report the first later tuple whose `X_i` coordinate differs.
fn find_witness<T: Val>(hv: &[Vec<T>], cv: &[Vec<T>], i: usize) -> Option<RawCollision<T>> {
    let k = hv.len();
    let sizes: Vec<usize> = cv.iter().map(|s| s.len()).collect();
    let total: usize = sizes.iter().product();
    let mut first_seen: HashMap<T, usize> = HashMap::with_capacity(total.min(1 << 20));
    let decompose = |mut t: usize| -> Vec<usize> {
        let mut idx = vec![0usize; k];
        for j in (0..k).rev() {
            idx[j] = t % sizes[j];
            t /= sizes[j];
        }
        idx
    };
    let mut idx = vec![0usize; k];
    for t in 0..total {
        if t > 0 {
            let mut j = k - 1;
            loop {
                idx[j] += 1;
                if idx[j] < sizes[j] {
                    break;
                }
                idx[j] = 0;
                debug_assert!(j > 0, "odometer overflow");
                j -= 1;
            }
        }
        let mut y = hv[i][0].mul_val(&cv[0][idx[0]]);
        for j in 1..k {
            y = y.add_val(&hv[i][j].mul_val(&cv[j][idx[j]]));
        }
        match first_seen.get(&y) {
            None => {
                first_seen.insert(y, t);
            }
            Some(&t0) => {
                let idx0 = decompose(t0);
                if cv[i][idx0[i]] != cv[i][idx[i]] {
                    let tuple = |idx: &[usize]| -> Vec<T> {
                        idx.iter().enumerate().map(|(j, &m)| cv[j][m].clone()).collect()
                    };
                    return Some(RawCollision {
                        x1: tuple(&idx0),
                        x2: tuple(&idx),
                        y,
                    });
                }
            }
        }
    }
    None
}

/// Independent decodability oracle: a direct injectivity scan over every
/// message tuple at every receiver, with no sumset-cardinality shortcut.
///
/// Exists as a second implementation route so the fast path in
/// [`is_decodable`] can be cross-validated; the two must always agree,
/// witness included.
pub fn is_decodable_exhaustive(
    h: &ChannelMatrix,
    c: &Codebook,
) -> Result<DecodabilityReport, DdifcError> {
    assert_eq!(h.k(), c.k(), "user-count mismatch");
    check_cap(c)?;
    let found = match to_u64_instance(h, c) {
        Some(inst) => (0..h.k())
            .find_map(|i| find_witness(&inst.h, &inst.c, i).map(|w| w.into_witness(i))),
        None => {
            let (hb, cb) = to_bigint_instance(h, c);
            (0..h.k()).find_map(|i| find_witness(&hb, &cb, i).map(|w| w.into_witness(i)))
        }
    };
    Ok(DecodabilityReport {
        decodable: found.is_none(),
        witness: found,
    })
}

// ---------------------------------------------------------------------------
// Table decoding
// ---------------------------------------------------------------------------

/// Receiver-side lookup table mapping every possible output `Y_i` to the
/// unique consistent codeword `X_i`.
#[derive(Debug, Clone)]
pub struct DecodeTable {
    receiver: usize,
    map: HashMap<BigInt, BigInt>,
}

impl DecodeTable {
    /// Builds the table for receiver `i` by enumerating `H(i,i) C_i (+) S_i`.
    ///
    /// # Errors
    ///
    /// [`DdifcError::NotDecodable`] if two codewords share an output (the
    /// codebook is not decodable at this receiver);
    /// [`DdifcError::EnumerationCapExceeded`] as in [`is_decodable`].
    pub fn build(h: &ChannelMatrix, c: &Codebook, i: usize) -> Result<Self, DdifcError> {
        assert_eq!(h.k(), c.k(), "user-count mismatch");
        check_cap(c)?;
        let s_i = interference_set(h, c, i);
        let h_ii = h.entry(i, i);
        let mut map = HashMap::with_capacity(c.set(i).len() * s_i.len());
        for x in c.set(i) {
            let shift = h_ii * x;
            for s in &s_i {
                let y = &shift + s;
                if let Some(prev) = map.insert(y, x.clone()) {
                    if &prev != x {
                        return Err(DdifcError::NotDecodable { witness: None });
                    }
                }
            }
        }
        Ok(DecodeTable { receiver: i, map })
    }

    /// Decodes one output value.
    pub fn decode(&self, y: &BigInt) -> Result<BigInt, DdifcError> {
        self.map.get(y).cloned().ok_or_else(|| DdifcError::NotInImage {
            receiver: self.receiver,
            y: y.clone(),
        })
    }

    /// Number of distinct outputs at this receiver.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    /// True when the table is empty (cannot happen for valid inputs).
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One-shot table decode of output `y` at receiver `i`.
///
/// Builds the receiver's table and looks up `y`; construct a [`DecodeTable`]
/// directly when decoding many outputs.
pub fn decode_by_table(
    h: &ChannelMatrix,
    c: &Codebook,
    i: usize,
    y: &BigInt,
) -> Result<BigInt, DdifcError> {
    DecodeTable::build(h, c, i)?.decode(y)
}

// ---------------------------------------------------------------------------
// Efficiency
// ---------------------------------------------------------------------------

/// Efficiency accounting for a decodable codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    /// `sum_i log2 |C_i|` in bits.
    pub sum_log_sizes: f64,
    /// Exact message-space size `prod_i |C_i|` (the integer argument behind
    /// `sum_log_sizes`, kept for exact cross-checks).
    pub size_product: BigInt,
    /// The output-alphabet bound of [`w_max`].
    pub w_max: BigInt,
    /// `sum_log_sizes / log2(w_max)`.
    pub efficiency: f64,
}

/// Efficiency of a verified-decodable codebook.
///
/// Decodable codebooks always satisfy `Eff <= K/2`. The inequality is
/// strict for `K >= 3`; at `K = 2` it is tight, attained by perfect
/// packings such as `H = [[1,b],[c,1]]` with `C = ({0..b-1}, {0..c-1})`,
/// whose receiver outputs fill `[0, bc)` exactly.
///
/// # Errors
///
/// [`DdifcError::NotDecodable`] (with a collision witness) when the
/// decodability proof fails; capacity errors as in [`is_decodable`].
///
/// # Panics
///
/// Panics if a decodable codebook exceeds efficiency `K/2`, which is
/// impossible for correct inputs; the assertion guards the implementation
/// itself.
pub fn efficiency(h: &ChannelMatrix, c: &Codebook) -> Result<EfficiencyReport, DdifcError> {
    efficiency_exec(h, c, Exec::default())
}

/// [`efficiency`] with an explicit execution mode.
pub fn efficiency_exec(
    h: &ChannelMatrix,
    c: &Codebook,
    exec: Exec,
) -> Result<EfficiencyReport, DdifcError> {
    let report = is_decodable_exec(h, c, exec)?;
    if !report.decodable {
        return Err(DdifcError::NotDecodable {
            witness: report.witness,
        });
    }
    let eff = efficiency_unchecked(h, c);
    if h.k() >= 2 {
        // Tiny headroom: the K = 2 equality family evaluates to 1.0 only
        // up to floating-point rounding of the two log ratios.
        assert!(
            eff.efficiency <= h.k() as f64 / 2.0 + 1e-9,
            "efficiency {} violates the K/2 bound",
            eff.efficiency
        );
    }
    Ok(eff)
}

/// Efficiency figures without the decodability proof.
///
/// Callers must know the codebook is decodable by other means (for example
/// layered codes built from a verified primary, whose message spaces outgrow
/// the enumeration cap while staying decodable by construction).
pub fn efficiency_unchecked(h: &ChannelMatrix, c: &Codebook) -> EfficiencyReport {
    let sum_log_sizes: f64 = c.sets().iter().map(|s| (s.len() as f64).log2()).sum();
    let size_product = c.size_product();
    let w = w_max(h, c);
    let efficiency = if sum_log_sizes == 0.0 {
        0.0
    } else {
        sum_log_sizes / log2_bigint(&w)
    };
    EfficiencyReport {
        sum_log_sizes,
        size_product,
        w_max: w,
        efficiency,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_a() -> ChannelMatrix {
        ChannelMatrix::from_i64(&[&[1, 4, 3], &[2, 1, 3], &[6, 2, 1]])
    }

    fn code_a() -> Codebook {
        Codebook::from_i64(&[&[0, 1, 2, 3, 4, 5], &[0, 3], &[0, 2, 4]])
    }

    fn channel_b() -> ChannelMatrix {
        ChannelMatrix::from_i64(&[&[1, 12, 6], &[2, 3, 6], &[3, 3, 1]])
    }

    fn code_b() -> Codebook {
        Codebook::from_i64(&[&[0, 1, 2, 3, 4, 5], &[0, 1], &[0, 1, 2]])
    }

    fn set(vals: &[i64]) -> BTreeSet<BigInt> {
        vals.iter().map(|&v| BigInt::from(v)).collect()
    }

    #[test]
    fn matrix_constructor_rejects_invalid_shapes() {
        assert!(ChannelMatrix::new(vec![]).is_err());
        let bad_diag = vec![
            vec![BigInt::from(0), BigInt::from(1)],
            vec![BigInt::from(1), BigInt::from(1)],
        ];
        assert!(matches!(
            ChannelMatrix::new(bad_diag),
            Err(DdifcError::InvalidMatrix(_))
        ));
        let negative = vec![
            vec![BigInt::from(1), BigInt::from(-1)],
            vec![BigInt::from(1), BigInt::from(1)],
        ];
        assert!(ChannelMatrix::new(negative).is_err());
        let ragged = vec![vec![BigInt::from(1)], vec![BigInt::from(1), BigInt::from(1)]];
        assert!(ChannelMatrix::new(ragged).is_err());
    }

    #[test]
    fn codebook_constructor_enforces_zero_membership() {
        assert!(Codebook::new(vec![set(&[1, 2])]).is_err());
        assert!(Codebook::new(vec![BTreeSet::new()]).is_err());
        assert!(Codebook::new(vec![set(&[0, 2])]).is_ok());
    }

    #[test]
    fn minkowski_sum_matches_pinned_values() {
        assert_eq!(minkowski_sum(&set(&[0, 1]), &set(&[0, 2])), set(&[0, 1, 2, 3]));
        let s = set(&[0, 5, 9]);
        assert_eq!(minkowski_sum(&set(&[0]), &s), s);
        let four_c2 = scale_set(&BigInt::from(4), &set(&[0, 3]));
        let three_c3 = scale_set(&BigInt::from(3), &set(&[0, 2, 4]));
        assert_eq!(minkowski_sum(&four_c2, &three_c3), set(&[0, 6, 12, 18, 24]));
    }

    #[test]
    fn interference_set_matches_pinned_values() {
        assert_eq!(interference_set(&channel_a(), &code_a(), 0), set(&[0, 6, 12, 18, 24]));
        let singletons = Codebook::from_i64(&[&[0, 1], &[0], &[0]]);
        assert_eq!(interference_set(&channel_a(), &singletons, 0), set(&[0]));
        assert_eq!(
            interference_set(&channel_b(), &code_b(), 2),
            set(&[0, 3, 6, 9, 12, 15, 18])
        );
    }

    #[test]
    fn w_max_matches_pinned_values() {
        assert_eq!(w_max(&channel_a(), &code_a()), BigInt::from(41));
        assert_eq!(w_max(&channel_b(), &code_b()), BigInt::from(30));
        let single = ChannelMatrix::from_i64(&[&[2]]);
        let c = Codebook::from_i64(&[&[0, 1, 2, 3, 4, 5]]);
        assert_eq!(w_max(&single, &c), BigInt::from(11));
    }

    #[test]
    fn decodability_verdicts_match_pinned_values() {
        assert!(is_decodable(&channel_a(), &code_a()).unwrap().decodable);
        assert!(is_decodable(&channel_b(), &code_b()).unwrap().decodable);

        let h = ChannelMatrix::from_i64(&[&[1, 1], &[1, 1]]);
        let c = Codebook::from_i64(&[&[0, 1], &[0, 1]]);
        let report = is_decodable(&h, &c).unwrap();
        assert!(!report.decodable);
        let w = report.witness.expect("failure carries a witness");
        assert_eq!(w.receiver, 0);
        // Row-major scan: first collision is Y=1 from (0,1) then (1,0).
        assert_eq!(w.x1, vec![BigInt::from(0), BigInt::from(1)]);
        assert_eq!(w.x2, vec![BigInt::from(1), BigInt::from(0)]);
        assert_eq!(w.y, BigInt::from(1));
    }

    #[test]
    fn both_decodability_routes_agree_on_examples() {
        for (h, c) in [
            (channel_a(), code_a()),
            (channel_b(), code_b()),
            (
                ChannelMatrix::from_i64(&[&[1, 1], &[1, 1]]),
                Codebook::from_i64(&[&[0, 1], &[0, 1]]),
            ),
        ] {
            let fast = is_decodable(&h, &c).unwrap();
            let scan = is_decodable_exhaustive(&h, &c).unwrap();
            assert_eq!(fast.decodable, scan.decodable);
            assert_eq!(fast.witness, scan.witness);
        }
    }

    #[test]
    fn sequential_and_parallel_modes_agree() {
        let seq = is_decodable_exec(&channel_a(), &code_a(), Exec::Sequential).unwrap();
        let par = is_decodable_exec(&channel_a(), &code_a(), Exec::Parallel).unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let h = ChannelMatrix::from_i64(&[&[1, 1], &[1, 1]]);
        let big_set: Vec<i64> = (0..4000).collect();
        let c = Codebook::from_i64(&[&big_set, &big_set]);
        assert!(matches!(
            is_decodable(&h, &c),
            Err(DdifcError::EnumerationCapExceeded { .. })
        ));
    }

    #[test]
    fn decode_by_table_matches_pinned_values() {
        let h = channel_a();
        let c = code_a();
        assert_eq!(decode_by_table(&h, &c, 0, &BigInt::from(0)).unwrap(), BigInt::from(0));
        // X = (5, 3, 4): Y_1 = 5 + 4*3 + 3*4 = 29.
        assert_eq!(decode_by_table(&h, &c, 0, &BigInt::from(29)).unwrap(), BigInt::from(5));
        assert!(matches!(
            decode_by_table(&h, &c, 0, &BigInt::from(1_000_000_000)),
            Err(DdifcError::NotInImage { .. })
        ));
    }

    #[test]
    fn decode_table_inverts_the_channel_everywhere() {
        let h = channel_a();
        let c = code_a();
        for i in 0..3 {
            let table = DecodeTable::build(&h, &c, i).unwrap();
            for x1 in c.set(0) {
                for x2 in c.set(1) {
                    for x3 in c.set(2) {
                        let xs = [x1, x2, x3];
                        let y: BigInt = (0..3).map(|j| h.entry(i, j) * xs[j]).sum();
                        assert_eq!(&table.decode(&y).unwrap(), xs[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn efficiency_matches_pinned_values() {
        let report = efficiency(&channel_b(), &code_b()).unwrap();
        let expect = 36f64.log2() / 30f64.log2();
        assert!((report.efficiency - expect).abs() < 1e-12);
        assert_eq!(report.w_max, BigInt::from(30));
        assert_eq!(report.size_product, BigInt::from(36));

        // Single active user with direct gain 1 and cross gain 3 into the
        // silent user's receiver: W_max = 3 * 9 + 1.
        let h = ChannelMatrix::from_i64(&[&[1, 7], &[3, 1]]);
        let c = Codebook::from_i64(&[&(0..=9).collect::<Vec<_>>(), &[0]]);
        let report = efficiency(&h, &c).unwrap();
        let expect = 10f64.log2() / 28f64.log2();
        assert!((report.efficiency - expect).abs() < 1e-12);

        let singleton = Codebook::from_i64(&[&[0], &[0]]);
        assert_eq!(efficiency(&h, &singleton).unwrap().efficiency, 0.0);
    }

    #[test]
    fn efficiency_reports_not_decodable_with_witness() {
        let h = ChannelMatrix::from_i64(&[&[1, 1], &[1, 1]]);
        let c = Codebook::from_i64(&[&[0, 1], &[0, 1]]);
        match efficiency(&h, &c) {
            Err(DdifcError::NotDecodable { witness: Some(_) }) => {}
            other => panic!("expected NotDecodable with witness, got {other:?}"),
        }
    }

    #[test]
    fn matrix_text_round_trips() {
        let h = channel_a();
        let parsed = ChannelMatrix::parse(&h.to_text()).unwrap();
        assert_eq!(parsed, h);
    }

    #[test]
    fn codebook_text_round_trips() {
        let c = code_a();
        let parsed = Codebook::parse(&c.to_text(), 3).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = ChannelMatrix::parse("2\n1 x\n0 1\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
        let err = ChannelMatrix::parse("2\n0 1\n1 1\n").unwrap_err();
        assert_eq!((err.line, err.column), (2, 1));
        let err = Codebook::parse("0,1\n1,2\n", 2).unwrap_err();
        assert_eq!(err.line, 2);
        let err = Codebook::parse("0,1\n0,zz\n", 2).unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
    }
}
