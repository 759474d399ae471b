//! Arithmetic-progression codes driven by the row gcd structure of the
//! channel, with their closed-form modular decoder.
//!
//! For each receiver `i` let `g_i` be the gcd of the whole row `H(i, .)`
//! and `ghat_i` the gcd of its off-diagonal entries. The ratio
//! `s_i = ghat_i / g_i` is an integer, and the unit-step code
//! `C_i = {0, 1, ..., s_i - 1}` is always decodable: dividing `Y_i` by
//! `g_i` makes every interference term a multiple of `s_i`, so reducing
//! mod `s_i` leaves `(H(i,i)/g_i) m_i`, and `H(i,i)/g_i` is invertible
//! mod `s_i`. [`ap_design`] builds that code, [`ap_decode`] inverts it
//! arithmetically without tables, and [`symmetric_efficiency`] evaluates
//! the closed form for fully symmetric channels.
//!
//! Rows without any interference (`ghat_i` undefined) have no gcd bound on
//! the user's set; [`ap_design`] reports them as [`ApError::IsolatedRow`]
//! and [`ap_design_with_fallback`] gives such users a plain range
//! `{0, ..., T}` instead.

use crate::ddifc::{self, ChannelMatrix, Codebook, DdifcError};
use crate::exactmath::{gcd_all, log2_bigint, mod_inverse, BigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::BTreeSet;
use std::fmt;

/// Fallback range bound for interference-free users: they get `{0, ..., T}`.
pub const DEFAULT_ISOLATED_T: u64 = 2;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from arithmetic-progression design and decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApError {
    /// Row `receiver` has no non-zero off-diagonal entry, so the
    /// interference gcd (and with it the step count) is undefined.
    IsolatedRow { receiver: usize },
    /// `y` is not divisible by the row gcd, so it cannot be a channel output.
    NotDivisible { receiver: usize, y: BigInt },
    /// The symmetric closed form requires coprime direct and cross gains.
    NotCoprime { a: BigInt, h: BigInt },
}

impl fmt::Display for ApError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApError::IsolatedRow { receiver } => write!(
                f,
                "receiver {} hears no interference; its step count is unbounded",
                receiver + 1
            ),
            ApError::NotDivisible { receiver, y } => write!(
                f,
                "{y} is not divisible by the row gcd of receiver {}",
                receiver + 1
            ),
            ApError::NotCoprime { a, h } => {
                write!(f, "direct gain {a} and cross gain {h} are not coprime")
            }
        }
    }
}

impl std::error::Error for ApError {}

// ---------------------------------------------------------------------------
// Row gcd profile
// ---------------------------------------------------------------------------

/// The gcd structure of a channel matrix, row by row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowGcdProfile {
    full: Vec<BigInt>,
    interference: Vec<BigInt>,
    steps: Vec<BigInt>,
}

impl RowGcdProfile {
    /// Computes `g_i`, `ghat_i`, and `s_i = ghat_i / g_i` for every row.
    ///
    /// # Errors
    ///
    /// [`ApError::IsolatedRow`] for the first row whose off-diagonal
    /// entries are all zero.
    pub fn new(h: &ChannelMatrix) -> Result<Self, ApError> {
        let k = h.k();
        let mut full = Vec::with_capacity(k);
        let mut interference = Vec::with_capacity(k);
        let mut steps = Vec::with_capacity(k);
        for i in 0..k {
            let (g, ghat) = row_gcds(h.row(i), i);
            let ghat = ghat.ok_or(ApError::IsolatedRow { receiver: i })?;
            steps.push(&ghat / &g);
            full.push(g);
            interference.push(ghat);
        }
        Ok(RowGcdProfile {
            full,
            interference,
            steps,
        })
    }

    /// The full-row gcd `g_i`.
    pub fn full_gcd(&self, i: usize) -> &BigInt {
        &self.full[i]
    }

    /// The off-diagonal gcd `ghat_i`.
    pub fn interference_gcd(&self, i: usize) -> &BigInt {
        &self.interference[i]
    }

    /// The step count `s_i = ghat_i / g_i`.
    pub fn step_count(&self, i: usize) -> &BigInt {
        &self.steps[i]
    }

    /// All step counts.
    pub fn step_counts(&self) -> &[BigInt] {
        &self.steps
    }
}

/// Full and off-diagonal gcds of one row; `None` when the row is isolated.
fn row_gcds(row: &[BigInt], i: usize) -> (BigInt, Option<BigInt>) {
    let off: Vec<BigInt> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, e)| e.clone())
        .collect();
    if off.iter().all(|e| e.is_zero()) {
        return (row[i].clone(), None);
    }
    let ghat = gcd_all(&off);
    let g = ghat.gcd(&row[i]);
    (g, Some(ghat))
}

// ---------------------------------------------------------------------------
// AP codes
// ---------------------------------------------------------------------------

/// An arithmetic-progression codebook `C_i = r_i {0, 1, ..., s_i - 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApCode {
    step_sizes: Vec<BigInt>,
    set_sizes: Vec<BigInt>,
    codebook: Codebook,
    oracle_verified: bool,
}

impl ApCode {
    /// Materializes the progression code with steps `r` and sizes `s`.
    ///
    /// # Panics
    ///
    /// Panics when any `r_i < 1` or `s_i < 1`, or when a set is too large
    /// to materialize.
    pub fn new(step_sizes: Vec<BigInt>, set_sizes: Vec<BigInt>) -> Self {
        assert_eq!(step_sizes.len(), set_sizes.len(), "user-count mismatch");
        assert!(!step_sizes.is_empty(), "no users");
        let mut sets = Vec::with_capacity(set_sizes.len());
        for (r, s) in step_sizes.iter().zip(&set_sizes) {
            assert!(r >= &BigInt::one(), "step sizes must be positive");
            assert!(s >= &BigInt::one(), "set sizes must be positive");
            let n = s.to_usize().expect("set size must fit in memory");
            let set: BTreeSet<BigInt> = (0..n).map(|m| r * BigInt::from(m)).collect();
            sets.push(set);
        }
        let codebook = Codebook::new(sets).expect("progression sets are valid");
        ApCode {
            step_sizes,
            set_sizes,
            codebook,
            oracle_verified: false,
        }
    }

    /// A unit-step code with the given set sizes.
    pub fn with_unit_steps(set_sizes: Vec<BigInt>) -> Self {
        let steps = vec![BigInt::one(); set_sizes.len()];
        ApCode::new(steps, set_sizes)
    }

    /// Per-user steps `r_i`.
    pub fn step_sizes(&self) -> &[BigInt] {
        &self.step_sizes
    }

    /// Per-user set sizes `s_i`.
    pub fn set_sizes(&self) -> &[BigInt] {
        &self.set_sizes
    }

    /// The induced codebook.
    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    /// True when decodability was proven by exhaustive enumeration; false
    /// when the message space exceeded the cap and the construction is
    /// trusted on its own guarantee.
    pub fn oracle_verified(&self) -> bool {
        self.oracle_verified
    }
}

/// Runs the exhaustive decodability oracle on a freshly designed code.
///
/// The construction guarantees decodability, so a failed proof can only
/// mean an implementation bug; it panics rather than returning an error.
fn oracle_check(h: &ChannelMatrix, code: &mut ApCode) {
    match ddifc::is_decodable(h, code.codebook()) {
        Ok(report) => {
            assert!(
                report.decodable,
                "designed code failed its decodability proof: {}",
                report.witness.expect("failure carries a witness")
            );
            code.oracle_verified = true;
        }
        Err(DdifcError::EnumerationCapExceeded { .. }) => {
            code.oracle_verified = false;
        }
        Err(e) => panic!("unexpected oracle error: {e}"),
    }
}

/// Designs the unit-step progression code `C_i = {0, ..., s_i - 1}`.
///
/// The result is proven decodable by exhaustive enumeration whenever the
/// message space is within [`ddifc::ENUMERATION_CAP`]; check
/// [`ApCode::oracle_verified`].
///
/// # Errors
///
/// [`ApError::IsolatedRow`] when some receiver hears no interference;
/// use [`ap_design_with_fallback`] to handle such rows.
pub fn ap_design(h: &ChannelMatrix) -> Result<ApCode, ApError> {
    let profile = RowGcdProfile::new(h)?;
    let mut code = ApCode::with_unit_steps(profile.steps.clone());
    oracle_check(h, &mut code);
    Ok(code)
}

/// [`ap_design`] that gives each interference-free user the plain range
/// `{0, ..., t}` instead of failing.
///
/// Interference cancellation at the other receivers is modular, so an
/// isolated user's enlarged set never disturbs them, and its own receiver
/// hears a clean multiple of its codeword.
pub fn ap_design_with_fallback(h: &ChannelMatrix, t: u64) -> ApCode {
    let k = h.k();
    let mut sizes = Vec::with_capacity(k);
    for i in 0..k {
        let (g, ghat) = row_gcds(h.row(i), i);
        match ghat {
            Some(ghat) => sizes.push(ghat / g),
            None => sizes.push(BigInt::from(t + 1)),
        }
    }
    let mut code = ApCode::with_unit_steps(sizes);
    oracle_check(h, &mut code);
    code
}

/// Receivers whose rows have no non-zero off-diagonal entry.
pub fn isolated_rows(h: &ChannelMatrix) -> Vec<usize> {
    (0..h.k())
        .filter(|&i| row_gcds(h.row(i), i).1.is_none())
        .collect()
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// Decodes receiver `i`'s output of the unit-step design arithmetically.
///
/// Computes `m_i = (hinv_i * (y / g_i)) mod s_i` where `hinv_i` is the
/// inverse of `H(i,i)/g_i` mod `s_i`. When `s_i = 1` the user is silenced
/// and the only message is 0.
///
/// # Errors
///
/// [`ApError::NotDivisible`] when `g_i` does not divide `y` (not a valid
/// output); [`ApError::IsolatedRow`] when the step count is undefined.
pub fn ap_decode(h: &ChannelMatrix, i: usize, y: &BigInt) -> Result<BigInt, ApError> {
    let (g, ghat) = row_gcds(h.row(i), i);
    let ghat = ghat.ok_or(ApError::IsolatedRow { receiver: i })?;
    let s = &ghat / &g;
    let (q, rem) = y.div_mod_floor(&g);
    if !rem.is_zero() {
        return Err(ApError::NotDivisible {
            receiver: i,
            y: y.clone(),
        });
    }
    if s.is_one() {
        return Ok(BigInt::zero());
    }
    let direct = h.entry(i, i) / &g;
    let hinv = mod_inverse(&direct, &s).expect("H(i,i)/g_i is coprime to s_i");
    Ok((q * hinv).mod_floor(&s))
}

// ---------------------------------------------------------------------------
// Symmetric channels
// ---------------------------------------------------------------------------

/// The K-user symmetric matrix with direct gain `a` and cross gain `h`.
pub fn symmetric_matrix(k: usize, a: &BigInt, h: &BigInt) -> ChannelMatrix {
    assert!(k >= 2, "symmetric channels need K >= 2");
    let entries = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| if i == j { a.clone() } else { h.clone() })
                .collect()
        })
        .collect();
    ChannelMatrix::new(entries).expect("valid symmetric matrix")
}

/// Efficiency of the unit-step design on the symmetric channel:
/// `K log2(h) / log2(h(a + (K-1)(h-1)) + 1 - a)`.
///
/// # Errors
///
/// [`ApError::NotCoprime`] when `gcd(a, h) != 1` (the step counts would
/// not equal `h` and the closed form would not apply).
///
/// # Panics
///
/// Panics when `k < 2`, `a < 1`, or `h < 2`.
pub fn symmetric_efficiency(k: usize, a: &BigInt, h: &BigInt) -> Result<f64, ApError> {
    assert!(k >= 2, "symmetric channels need K >= 2");
    assert!(a >= &BigInt::one(), "direct gain must be positive");
    assert!(h >= &BigInt::from(2), "cross gain must be at least 2");
    if !a.gcd(h).is_one() {
        return Err(ApError::NotCoprime {
            a: a.clone(),
            h: h.clone(),
        });
    }
    let w = symmetric_w_max(k, a, h);
    Ok(k as f64 * log2_bigint(h) / log2_bigint(&w))
}

/// The exact output-alphabet bound behind [`symmetric_efficiency`]:
/// `h(a + (K-1)(h-1)) + 1 - a`.
pub fn symmetric_w_max(k: usize, a: &BigInt, h: &BigInt) -> BigInt {
    let km1 = BigInt::from(k as u64 - 1);
    h * (a + km1 * (h - BigInt::one())) + BigInt::one() - a
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_b() -> ChannelMatrix {
        ChannelMatrix::from_i64(&[&[1, 12, 6], &[2, 3, 6], &[3, 3, 1]])
    }

    #[test]
    fn profile_matches_pinned_values() {
        let p = RowGcdProfile::new(&channel_b()).unwrap();
        let expect: Vec<BigInt> = [6, 2, 3].iter().map(|&x| BigInt::from(x)).collect();
        assert_eq!(p.step_counts(), expect.as_slice());
        for i in 0..3 {
            assert_eq!(p.full_gcd(i), &BigInt::one());
            assert!((p.interference_gcd(i) % p.full_gcd(i)).is_zero());
        }
        assert_eq!(p.interference_gcd(0), &BigInt::from(6));
    }

    #[test]
    fn design_matches_pinned_values() {
        let code = ap_design(&channel_b()).unwrap();
        let sizes: Vec<BigInt> = [6, 2, 3].iter().map(|&x| BigInt::from(x)).collect();
        assert_eq!(code.set_sizes(), sizes.as_slice());
        assert!(code.step_sizes().iter().all(|r| r.is_one()));
        assert!(code.oracle_verified());
        let expect = Codebook::from_i64(&[&[0, 1, 2, 3, 4, 5], &[0, 1], &[0, 1, 2]]);
        assert_eq!(code.codebook(), &expect);
    }

    #[test]
    fn design_on_symmetric_channel_matches_cross_gain() {
        let h = symmetric_matrix(3, &BigInt::one(), &BigInt::from(2));
        let code = ap_design(&h).unwrap();
        let sizes: Vec<BigInt> = vec![BigInt::from(2); 3];
        assert_eq!(code.set_sizes(), sizes.as_slice());
    }

    #[test]
    fn design_reports_isolated_rows() {
        let h = ChannelMatrix::from_i64(&[&[1, 0], &[0, 1]]);
        assert_eq!(ap_design(&h).unwrap_err(), ApError::IsolatedRow { receiver: 0 });
        let h = ChannelMatrix::from_i64(&[&[1, 2], &[0, 1]]);
        assert_eq!(ap_design(&h).unwrap_err(), ApError::IsolatedRow { receiver: 1 });
        assert_eq!(isolated_rows(&h), vec![1]);
    }

    #[test]
    fn fallback_design_keeps_isolated_users_active() {
        let h = ChannelMatrix::from_i64(&[&[1, 0], &[2, 1]]);
        let code = ap_design_with_fallback(&h, 2);
        let sizes: Vec<BigInt> = [3, 2].iter().map(|&x| BigInt::from(x)).collect();
        assert_eq!(code.set_sizes(), sizes.as_slice());
        assert!(code.oracle_verified());
    }

    #[test]
    fn decode_matches_pinned_values() {
        let h = channel_b();
        // Message tuple (5, 1, 2).
        assert_eq!(ap_decode(&h, 0, &BigInt::from(29)).unwrap(), BigInt::from(5));
        assert_eq!(ap_decode(&h, 1, &BigInt::from(25)).unwrap(), BigInt::from(1));
        assert_eq!(ap_decode(&h, 2, &BigInt::from(20)).unwrap(), BigInt::from(2));
        for i in 0..3 {
            assert_eq!(ap_decode(&h, i, &BigInt::zero()).unwrap(), BigInt::zero());
        }
    }

    #[test]
    fn decode_rejects_outputs_off_the_row_gcd_grid() {
        let h = ChannelMatrix::from_i64(&[&[2, 4], &[4, 2]]);
        assert!(matches!(
            ap_decode(&h, 0, &BigInt::from(3)),
            Err(ApError::NotDivisible { receiver: 0, .. })
        ));
        assert_eq!(ap_decode(&h, 0, &BigInt::from(4)).unwrap(), BigInt::zero());
    }

    #[test]
    fn silenced_users_decode_to_zero() {
        let h = ChannelMatrix::from_i64(&[&[3, 3], &[3, 3]]);
        let code = ap_design(&h).unwrap();
        assert_eq!(code.set_sizes(), vec![BigInt::one(); 2].as_slice());
        assert_eq!(ap_decode(&h, 0, &BigInt::zero()).unwrap(), BigInt::zero());
    }

    #[test]
    fn decode_agrees_with_table_decoding_everywhere() {
        let h = channel_b();
        let code = ap_design(&h).unwrap();
        let c = code.codebook();
        for i in 0..3 {
            let table = ddifc::DecodeTable::build(&h, c, i).unwrap();
            for x1 in c.set(0) {
                for x2 in c.set(1) {
                    for x3 in c.set(2) {
                        let xs = [x1, x2, x3];
                        let y: BigInt = (0..3).map(|j| h.entry(i, j) * xs[j]).sum();
                        assert_eq!(&ap_decode(&h, i, &y).unwrap(), xs[i]);
                        assert_eq!(table.decode(&y).unwrap(), ap_decode(&h, i, &y).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn symmetric_efficiency_matches_pinned_values() {
        let one = BigInt::one();
        let two = BigInt::from(2);
        let eff = symmetric_efficiency(3, &one, &two).unwrap();
        assert!((eff - 3.0 / 6f64.log2()).abs() < 1e-12);
        assert!((eff - 1.1606).abs() < 5e-4);
        let eff = symmetric_efficiency(2, &one, &two).unwrap();
        assert!((eff - 1.0).abs() < 1e-12);
        assert_eq!(
            symmetric_efficiency(3, &two, &two).unwrap_err(),
            ApError::NotCoprime {
                a: two.clone(),
                h: two.clone()
            }
        );
    }

    #[test]
    fn symmetric_closed_form_matches_enumeration_exactly() {
        for (k, a, h) in [(2, 1, 2), (3, 1, 2), (3, 2, 3), (4, 3, 5), (2, 5, 3)] {
            let a = BigInt::from(a);
            let hh = BigInt::from(h);
            let m = symmetric_matrix(k, &a, &hh);
            let code = ap_design(&m).unwrap();
            let report = ddifc::efficiency(&m, code.codebook()).unwrap();
            // Same integer log arguments on both sides makes the float
            // comparison exact up to evaluation order.
            assert_eq!(report.w_max, symmetric_w_max(k, &a, &hh));
            assert!(code.set_sizes().iter().all(|s| s == &hh));
            let eff = symmetric_efficiency(k, &a, &hh).unwrap();
            assert!((eff - report.efficiency).abs() < 1e-12);
        }
    }
}
