//! Layered codebooks: base-W digit expansions that stack `l` copies of a
//! scalar codebook into one integer symbol per user.
//!
//! Given a codebook `C` decodable on a channel `H'` with alphabet bound
//! `w_max`, choose a bin size `W >= w_max`. The layered code
//! `C_i^l = { sum_v W^v m_v : m_v in C_i }` has `|C_i|^l` codewords, and a
//! receiver output splits into independent base-W digits because every
//! per-layer scalar output is below `W`. Efficiency converges to the
//! asymptotic value `sum_i log2|C_i| / log2(W)` as `l` grows.
//!
//! A layered code may carry a transfer context: the scalar code was
//! designed on `H'` but the layered symbols are sent over an equivalent
//! channel, with codewords scaled per user by `r_i` and receiver outputs
//! descaled by `f_i` before digit peeling. This is how a low-`w_max`
//! member of an equivalence class lends its bin size to the original
//! channel.

use crate::ddifc::{self, ChannelMatrix, Codebook, DdifcError, DecodeTable};
use crate::equiv::EquivalenceTransform;
use crate::exactmath::{log2_bigint, BigInt, Rational};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeSet;
use std::fmt;

/// Largest supported stacking depth.
pub const MAX_DEPTH: u32 = 64;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from layered construction and decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayeredError {
    /// The bin size is below the source pair's alphabet bound, so digit
    /// separation is not guaranteed.
    BinTooSmall { w: BigInt, w_max: BigInt },
    /// The receiver output is not divisible by its descale factor.
    NonIntegralAfterScaling { receiver: usize },
    /// After peeling `l` digits the output has a non-zero remainder (or
    /// was negative): not a valid layered output.
    DigitOutOfRange { receiver: usize, y: BigInt },
    /// A peeled digit failed scalar decoding.
    Scalar(DdifcError),
}

impl fmt::Display for LayeredError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayeredError::BinTooSmall { w, w_max } => {
                write!(f, "bin size {w} is below the required alphabet bound {w_max}")
            }
            LayeredError::NonIntegralAfterScaling { receiver } => write!(
                f,
                "output at receiver {} does not descale to an integer",
                receiver + 1
            ),
            LayeredError::DigitOutOfRange { receiver, y } => write!(
                f,
                "{y} is not an l-digit output at receiver {}",
                receiver + 1
            ),
            LayeredError::Scalar(e) => write!(f, "digit decoding failed: {e}"),
        }
    }
}

impl std::error::Error for LayeredError {}

impl From<DdifcError> for LayeredError {
    fn from(e: DdifcError) -> Self {
        LayeredError::Scalar(e)
    }
}

// ---------------------------------------------------------------------------
// Layered code
// ---------------------------------------------------------------------------

/// Per-user scaling carried over from an equivalence transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferContext {
    /// Codeword scales `r_i` (codewords on the wire are `r_i` times the
    /// design codewords).
    pub r: Vec<BigInt>,
    /// Output descale factors `f_i` (receiver outputs divide by `f_i`
    /// before digit peeling).
    pub f: Vec<Rational>,
}

/// A base-W stacking of a scalar codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredCode {
    source_matrix: ChannelMatrix,
    primary: Codebook,
    w: BigInt,
    l: u32,
    transfer: Option<TransferContext>,
}

impl LayeredCode {
    /// The channel the primary codebook decodes on.
    pub fn source_matrix(&self) -> &ChannelMatrix {
        &self.source_matrix
    }

    /// The scalar codebook being stacked.
    pub fn primary(&self) -> &Codebook {
        &self.primary
    }

    /// The bin size W.
    pub fn w(&self) -> &BigInt {
        &self.w
    }

    /// The stacking depth l.
    pub fn depth(&self) -> u32 {
        self.l
    }

    /// The transfer scaling, when the code rides an equivalent channel.
    pub fn transfer(&self) -> Option<&TransferContext> {
        self.transfer.as_ref()
    }

    /// User `i`'s codeword scale `r_i` (1 without a transfer).
    pub fn scale(&self, i: usize) -> BigInt {
        match &self.transfer {
            Some(t) => t.r[i].clone(),
            None => BigInt::one(),
        }
    }

    /// Receiver `i`'s output descale factor `f_i` (1 without a transfer).
    pub fn descale_factor(&self, i: usize) -> Rational {
        match &self.transfer {
            Some(t) => t.f[i].clone(),
            None => Rational::from_integer(BigInt::one()),
        }
    }

    /// Number of users.
    pub fn k(&self) -> usize {
        self.primary.k()
    }

    /// `|C_i|^l`, the layered codebook size of user `i`.
    pub fn user_size(&self, i: usize) -> BigInt {
        BigInt::from(self.primary.set(i).len()).pow(self.l)
    }

    /// Largest layered codeword of user `i` in closed form:
    /// `max(r_i C_i) (W^l - 1)/(W - 1)`, or `l max(C_i)` when `W = 1`.
    pub fn max_codeword(&self, i: usize) -> BigInt {
        let base = self.scale(i) * self.primary.max(i);
        if self.w.is_one() {
            return base * BigInt::from(self.l);
        }
        let geo = (self.w.pow(self.l) - BigInt::one()) / (&self.w - BigInt::one());
        base * geo
    }

    /// Stacks digit messages into user `i`'s layered codeword. Digits are
    /// wire-scale codewords (elements of `r_i C_i`), least significant
    /// layer first.
    ///
    /// # Panics
    ///
    /// Panics when the digit count is not `l` or a digit is not a
    /// codeword of user `i`.
    pub fn encode_user(&self, i: usize, digits: &[BigInt]) -> BigInt {
        assert_eq!(digits.len(), self.l as usize, "expected {} layers", self.l);
        let r = self.scale(i);
        let mut x = BigInt::zero();
        for m in digits.iter().rev() {
            let (q, rem) = m.div_mod_floor(&r);
            assert!(
                rem.is_zero() && self.primary.set(i).contains(&q),
                "{m} is not a codeword of user {}",
                i + 1
            );
            x = &x * &self.w + m;
        }
        x
    }

    /// Materializes the full layered codebook.
    ///
    /// # Panics
    ///
    /// Panics when some `|C_i|^l` does not fit in memory; callers working
    /// at large depth should stay with the closed-form accessors.
    pub fn layered_codebook(&self) -> Codebook {
        let sets = (0..self.k())
            .map(|i| {
                let scaled: Vec<BigInt> = self
                    .primary
                    .set(i)
                    .iter()
                    .map(|m| m * self.scale(i))
                    .collect();
                let mut acc: Vec<BigInt> = vec![BigInt::zero()];
                for _ in 0..self.l {
                    let mut next =
                        Vec::with_capacity(acc.len().checked_mul(scaled.len()).expect("set size"));
                    for hi in &acc {
                        let shifted = hi * &self.w;
                        for m in &scaled {
                            next.push(&shifted + m);
                        }
                    }
                    acc = next;
                }
                acc.into_iter().collect::<BTreeSet<BigInt>>()
            })
            .collect();
        Codebook::new(sets).expect("layered sets inherit validity")
    }
}

/// Builds the depth-`l` layered code of `c` on its own channel.
///
/// # Errors
///
/// [`LayeredError::BinTooSmall`] when `w` is below `w_max(h_source, c)`.
///
/// # Panics
///
/// Panics when `l` is outside `1..=`[`MAX_DEPTH`].
pub fn build_layered(
    h_source: &ChannelMatrix,
    c: &Codebook,
    w: &BigInt,
    l: u32,
) -> Result<LayeredCode, LayeredError> {
    assert!((1..=MAX_DEPTH).contains(&l), "depth must be in 1..={MAX_DEPTH}");
    assert_eq!(h_source.k(), c.k(), "user-count mismatch");
    let w_max = ddifc::w_max(h_source, c);
    if w < &w_max {
        return Err(LayeredError::BinTooSmall {
            w: w.clone(),
            w_max,
        });
    }
    Ok(LayeredCode {
        source_matrix: h_source.clone(),
        primary: c.clone(),
        w: w.clone(),
        l,
        transfer: None,
    })
}

/// Builds a layered code whose scalar design lives on `h_source` but whose
/// symbols ride the equivalent channel `h_use`, with `t` mapping `h_use`
/// to `h_source`.
///
/// # Errors
///
/// [`LayeredError::BinTooSmall`] as in [`build_layered`].
///
/// # Panics
///
/// Panics when `t` does not actually map `h_use` to `h_source`.
pub fn build_layered_transferred(
    h_use: &ChannelMatrix,
    h_source: &ChannelMatrix,
    c: &Codebook,
    t: &EquivalenceTransform,
    w: &BigInt,
    l: u32,
) -> Result<LayeredCode, LayeredError> {
    let image = crate::equiv::apply_transform(h_use, t)
        .expect("transform must map the use channel to the source channel");
    assert_eq!(
        &image, h_source,
        "transform does not map the use channel to the source channel"
    );
    let mut code = build_layered(h_source, c, w, l)?;
    code.transfer = Some(TransferContext {
        r: t.r().to_vec(),
        f: t.d().to_vec(),
    });
    Ok(code)
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// A layered code bundled with per-receiver scalar decode tables, for
/// decoding many outputs without rebuilding the tables.
#[derive(Debug, Clone)]
pub struct LayeredDecoder {
    code: LayeredCode,
    tables: Vec<DecodeTable>,
}

impl LayeredDecoder {
    /// Builds the scalar decode table of every receiver.
    ///
    /// # Errors
    ///
    /// [`LayeredError::Scalar`] when the primary codebook is not
    /// decodable on its source channel.
    pub fn new(code: LayeredCode) -> Result<Self, LayeredError> {
        let tables = (0..code.k())
            .map(|i| DecodeTable::build(&code.source_matrix, &code.primary, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LayeredDecoder { code, tables })
    }

    /// The wrapped layered code.
    pub fn code(&self) -> &LayeredCode {
        &self.code
    }

    /// Decodes receiver `i`'s layered output into its `l` wire-scale
    /// layer messages, least significant layer first.
    ///
    /// Descales by `f_i`, peels base-W digits, table-decodes each digit
    /// on the source channel, and rescales the results by `r_i`.
    ///
    /// # Errors
    ///
    /// [`LayeredError::NonIntegralAfterScaling`] when `f_i` does not
    /// divide the output; [`LayeredError::DigitOutOfRange`] when the
    /// output is negative or has more than `l` digits;
    /// [`LayeredError::Scalar`] when a digit is not a valid scalar
    /// output.
    pub fn decode(&self, i: usize, y_tilde: &BigInt) -> Result<Vec<BigInt>, LayeredError> {
        decode_with_table(&self.code, &self.tables[i], i, y_tilde)
    }
}

fn decode_with_table(
    code: &LayeredCode,
    table: &DecodeTable,
    i: usize,
    y_tilde: &BigInt,
) -> Result<Vec<BigInt>, LayeredError> {
    let scaled = Rational::from_integer(y_tilde.clone()) / code.descale_factor(i);
    if !scaled.is_integer() {
        return Err(LayeredError::NonIntegralAfterScaling { receiver: i });
    }
    let mut y = scaled.to_integer();
    if y.is_negative() {
        return Err(LayeredError::DigitOutOfRange {
            receiver: i,
            y: y_tilde.clone(),
        });
    }
    let r = code.scale(i);
    let mut out = Vec::with_capacity(code.l as usize);
    for _ in 0..code.l {
        let (q, digit) = y.div_mod_floor(&code.w);
        out.push(table.decode(&digit)? * &r);
        y = q;
    }
    if !y.is_zero() {
        return Err(LayeredError::DigitOutOfRange {
            receiver: i,
            y: y_tilde.clone(),
        });
    }
    Ok(out)
}

/// One-shot variant of [`LayeredDecoder::decode`] that builds receiver
/// `i`'s table, decodes, and discards the table.
///
/// # Errors
///
/// As [`LayeredDecoder::decode`].
pub fn layered_decode(
    code: &LayeredCode,
    i: usize,
    y_tilde: &BigInt,
) -> Result<Vec<BigInt>, LayeredError> {
    let table = DecodeTable::build(&code.source_matrix, &code.primary, i)?;
    decode_with_table(code, &table, i, y_tilde)
}

// ---------------------------------------------------------------------------
// Asymptotic efficiency
// ---------------------------------------------------------------------------

/// The depth limit of layered efficiency: `sum_i log2|C_i| / log2(W)`.
///
/// # Errors
///
/// [`LayeredError::BinTooSmall`] when `w` is below `w_max(h_source, c)`.
pub fn asymptotic_efficiency(
    h_source: &ChannelMatrix,
    c: &Codebook,
    w: &BigInt,
) -> Result<f64, LayeredError> {
    let w_max = ddifc::w_max(h_source, c);
    if w < &w_max {
        return Err(LayeredError::BinTooSmall {
            w: w.clone(),
            w_max,
        });
    }
    let sum_log: f64 = c.sets().iter().map(|s| (s.len() as f64).log2()).sum();
    if sum_log == 0.0 {
        return Ok(0.0);
    }
    Ok(sum_log / log2_bigint(w))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
