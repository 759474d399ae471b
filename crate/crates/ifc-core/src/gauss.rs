//! Nested-lattice transmission over the Gaussian interference channel.
//!
//! A Construction-A pair turns the noisy real channel into the integer
//! channel the rest of the library analyzes: the coarse lattice is a
//! scaled cube meeting the power constraint, the fine lattice refines it
//! by a prime factor `q`, and each transmit point carries one digit of
//! Z_q. After lattice decoding removes the additive noise, receiver
//! outputs live on the fine grid and the first coordinate reproduces the
//! integer-channel output modulo `q`. Layered codebooks found by the
//! equivalence-class search then carry `l` scalar messages per point.
//!
//! The simulators run the full chain under Monte-Carlo noise: integer
//! gain matrices directly, and real gain matrices via floor quantization
//! plus a shared dither, whose quantization residue acts as bounded extra
//! noise on the quantized channel.
//!
//! Arithmetic discipline: the cubic lattice makes every noiseless
//! quantity an exact integer in units of the grid step, so simulations
//! track lattice points as integers and only the noise is floating
//! point. A noiseless run is therefore exact end to end, and every error
//! observed under noise is attributable to the noise itself.

use crate::ddifc::ChannelMatrix;
use crate::equiv::{self, ClassSearchResult, EquivError, SearchBounds};
use crate::exactmath::{self, log2_bigint, BigInt};
use crate::exec::{self, Exec};
use crate::layered::{self, LayeredCode, LayeredDecoder};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::fmt;

/// Largest allowed modulus width in bits; keeps grid coordinates exact in
/// 128-bit integers and modulus ratios exact in doubles.
pub const MAX_MODULUS_BITS: u64 = 48;

/// Integrality tolerance when mapping a real vector back to grid units.
pub const LATTICE_TOLERANCE: f64 = 1e-6;

/// RNG stream reserved for lattice construction; trial streams count up
/// from zero.
const SETUP_STREAM: u64 = u64::MAX;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from lattice construction and simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum GaussError {
    /// The requested modulus is not prime.
    NotPrime { q: BigInt },
    /// A vector handed to digit recovery is not on the fine grid.
    NotLatticePoint { value: f64 },
    /// No depth `l >= 1` fits the noise budget.
    InfeasibleDepth { w_tilde_1: BigInt },
    /// The depth policy produced a modulus too wide for exact arithmetic.
    ModulusTooLarge { q: BigInt },
    /// A configuration field violates a precondition.
    InvalidConfig(String),
    /// The equivalence-class search failed.
    Search(EquivError),
}

impl fmt::Display for GaussError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaussError::NotPrime { q } => write!(f, "{q} is not prime"),
            GaussError::NotLatticePoint { value } => {
                write!(f, "coordinate {value} is not on the fine grid")
            }
            GaussError::InfeasibleDepth { w_tilde_1 } => write!(
                f,
                "no depth fits the noise budget (single-layer alphabet needs {w_tilde_1})"
            ),
            GaussError::ModulusTooLarge { q } => {
                write!(f, "modulus {q} exceeds {MAX_MODULUS_BITS} bits")
            }
            GaussError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            GaussError::Search(e) => write!(f, "code search failed: {e}"),
        }
    }
}

impl std::error::Error for GaussError {}

impl From<EquivError> for GaussError {
    fn from(e: EquivError) -> Self {
        GaussError::Search(e)
    }
}

// ---------------------------------------------------------------------------
// Nested lattice pair
// ---------------------------------------------------------------------------

/// Experimentation-mode data for a non-cubic generator.
#[derive(Debug, Clone)]
struct GeneralBasis {
    g1: Vec<Vec<f64>>,
    g1_inv: Vec<Vec<f64>>,
    /// Columns of a fine-lattice basis, for nearest-plane decoding.
    fine_cols: Vec<Vec<f64>>,
    /// Gram-Schmidt vectors of `fine_cols` with their squared norms.
    gs: Vec<(Vec<f64>, f64)>,
}

/// A coarse/fine Construction-A lattice pair.
///
/// Coarse lattice: `G1 Z^n`. Fine lattice: `G1 ((1/q) G2 Z_q + Z^n)`.
/// The default generator is the cube `G1 = beta I` with `beta =
/// sqrt(12 P)`, whose Voronoi region has second moment per dimension
/// exactly `beta^2 / 12 = P`; on it, every lattice operation reduces to
/// per-coordinate integer arithmetic on the `beta/q` grid. A general
/// generator can be supplied for experimentation, at the price of
/// approximate (nearest-plane) decoding.
#[derive(Debug, Clone)]
pub struct NestedLatticePair {
    n: usize,
    q: BigInt,
    q_i: i128,
    p: f64,
    beta: f64,
    g2: Vec<i128>,
    general: Option<GeneralBasis>,
}

impl NestedLatticePair {
    /// Lattice dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The prime modulus.
    pub fn q(&self) -> &BigInt {
        &self.q
    }

    /// Transmit power (cube second moment).
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Cube side length `sqrt(12 P)`.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The fine-grid spacing `beta / q`.
    pub fn grid_step(&self) -> f64 {
        self.beta / self.q_i as f64
    }

    /// The fine-lattice digit vector; first entry is always 1.
    pub fn g2(&self) -> &[i128] {
        &self.g2
    }

    /// True for the default cubic generator, whose decoding is exact.
    pub fn decoding_exact(&self) -> bool {
        self.general.is_none()
    }

    /// Second moment per dimension of the coarse Voronoi region; known in
    /// closed form only for the cubic generator.
    pub fn second_moment(&self) -> Option<f64> {
        if self.general.is_none() {
            Some(self.beta * self.beta / 12.0)
        } else {
            None
        }
    }

    /// Whether `q^(2/n) <= P/Z`, the precondition for asymptotically
    /// vanishing lattice-decoding error.
    pub fn goodness(&self, z: f64) -> bool {
        if z == 0.0 {
            return true;
        }
        (2.0 / self.n as f64) * log2_bigint(&self.q) <= (self.p / z).log2()
    }
}

/// Builds the default cubic pair. `G2` is drawn uniformly from `Z_q^n`
/// with its first entry forced to 1.
///
/// # Errors
///
/// [`GaussError::NotPrime`] when `q` is not prime;
/// [`GaussError::ModulusTooLarge`] beyond [`MAX_MODULUS_BITS`];
/// [`GaussError::InvalidConfig`] when `n < 1` or `P <= 0`.
pub fn build_nested_pair(
    n: usize,
    q: &BigInt,
    p: f64,
    rng: &mut impl Rng,
) -> Result<NestedLatticePair, GaussError> {
    if n < 1 {
        return Err(GaussError::InvalidConfig("dimension must be >= 1".into()));
    }
    if !(p > 0.0) {
        return Err(GaussError::InvalidConfig("power must be positive".into()));
    }
    if !exactmath::is_prime(q) {
        return Err(GaussError::NotPrime { q: q.clone() });
    }
    if q.bits() > MAX_MODULUS_BITS {
        return Err(GaussError::ModulusTooLarge { q: q.clone() });
    }
    let q_i = q.to_i128().expect("fits by bit count");
    let mut g2 = Vec::with_capacity(n);
    g2.push(1);
    for _ in 1..n {
        g2.push(rng.gen_range(0..q_i));
    }
    Ok(NestedLatticePair {
        n,
        q: q.clone(),
        q_i,
        p,
        beta: (12.0 * p).sqrt(),
        g2,
        general: None,
    })
}

/// Builds a pair with an arbitrary full-rank generator; decoding falls
/// back to the nearest-plane approximation and Voronoi operations to the
/// fundamental parallelepiped. Experimentation only; the simulators use
/// the cubic default.
///
/// # Errors
///
/// As [`build_nested_pair`], plus `InvalidConfig` for a singular or
/// wrongly shaped generator.
pub fn build_nested_pair_general(
    n: usize,
    q: &BigInt,
    p: f64,
    g1: Vec<Vec<f64>>,
    rng: &mut impl Rng,
) -> Result<NestedLatticePair, GaussError> {
    let mut pair = build_nested_pair(n, q, p, rng)?;
    if g1.len() != n || g1.iter().any(|row| row.len() != n) {
        return Err(GaussError::InvalidConfig("generator must be n x n".into()));
    }
    let g1_inv = mat_inv(&g1)
        .ok_or_else(|| GaussError::InvalidConfig("generator must be invertible".into()))?;
    // Fine-lattice basis columns: (1/q) G1 [G2 | q e_2 | ... | q e_n].
    // Any fine point is v = t G2 + q z over the integers, and with
    // G2[0] = 1 the residue t is determined by the first coordinate.
    let q_f = pair.q_i as f64;
    let mut fine_cols = Vec::with_capacity(n);
    let g2_real: Vec<f64> = pair.g2.iter().map(|&x| x as f64).collect();
    fine_cols.push(scale_vec(&mat_vec(&g1, &g2_real), 1.0 / q_f));
    for k in 1..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        fine_cols.push(mat_vec(&g1, &e));
    }
    let gs = gram_schmidt(&fine_cols)
        .ok_or_else(|| GaussError::InvalidConfig("generator must be invertible".into()))?;
    pair.general = Some(GeneralBasis {
        g1,
        g1_inv,
        fine_cols,
        gs,
    });
    Ok(pair)
}

// ---------------------------------------------------------------------------
// Small dense linear algebra (experimentation mode only)
// ---------------------------------------------------------------------------

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn scale_vec(v: &[f64], c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_inv(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut ext = row.clone();
            ext.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            ext
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        let d = a[col][col];
        for x in a[col].iter_mut() {
            *x /= d;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                for k in 0..2 * n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    Some(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

fn gram_schmidt(cols: &[Vec<f64>]) -> Option<Vec<(Vec<f64>, f64)>> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cols.len());
    for col in cols {
        let mut b = col.clone();
        for (star, norm_sq) in &out {
            let c = dot(col, star) / norm_sq;
            for (x, s) in b.iter_mut().zip(star) {
                *x -= c * s;
            }
        }
        let norm_sq = dot(&b, &b);
        if norm_sq < 1e-18 {
            return None;
        }
        out.push((b, norm_sq));
    }
    Some(out)
}

/// Babai nearest-plane: a lattice point near `y` in the span of `cols`.
fn nearest_plane(cols: &[Vec<f64>], gs: &[(Vec<f64>, f64)], y: &[f64]) -> Vec<f64> {
    let mut residual = y.to_vec();
    let mut point = vec![0.0; y.len()];
    for k in (0..cols.len()).rev() {
        let (star, norm_sq) = &gs[k];
        let c = round_lower(dot(&residual, star) / norm_sq);
        for i in 0..y.len() {
            residual[i] -= c * cols[k][i];
            point[i] += c * cols[k][i];
        }
    }
    point
}

/// Rounds to the nearest integer; exact half-step ties resolve downward,
/// matching the half-open cell convention.
fn round_lower(x: f64) -> f64 {
    (x - 0.5).ceil()
}

/// Reduces `m in [0, q)` into the centered range `[-q/2, q/2)`.
fn center(m: i128, q: i128) -> i128 {
    if 2 * m >= q {
        m - q
    } else {
        m
    }
}

// ---------------------------------------------------------------------------
// Point operations
// ---------------------------------------------------------------------------

/// The grid-unit transmit vector for digit `e`: `G2 e mod q`, centered
/// into the cube. Cubic generator only.
///
/// # Panics
///
/// Panics when `e` is outside `[0, q)` or the pair is non-cubic.
pub fn encode_grid(pair: &NestedLatticePair, e: &BigInt) -> Vec<i128> {
    assert!(
        pair.general.is_none(),
        "grid encoding requires the cubic generator"
    );
    assert!(
        !e.is_negative() && e < &pair.q,
        "digit {e} outside [0, {})",
        pair.q
    );
    let e_i = e.to_i128().expect("fits by modulus bound");
    pair.g2
        .iter()
        .map(|&g| center((g * e_i).rem_euclid(pair.q_i), pair.q_i))
        .collect()
}

/// The transmit point for digit `e`: `[(1/q) G1 G2 e] mod` the coarse
/// lattice, landing in the Voronoi cell of the origin.
///
/// # Panics
///
/// Panics when `e` is outside `[0, q)`.
pub fn encode_point(pair: &NestedLatticePair, e: &BigInt) -> Vec<f64> {
    match &pair.general {
        None => {
            let step = pair.grid_step();
            encode_grid(pair, e)
                .into_iter()
                .map(|v| v as f64 * step)
                .collect()
        }
        Some(gen) => {
            assert!(
                !e.is_negative() && e < &pair.q,
                "digit {e} outside [0, {})",
                pair.q
            );
            let e_i = e.to_i128().expect("fits by modulus bound");
            let frac: Vec<f64> = pair
                .g2
                .iter()
                .map(|&g| (g * e_i).rem_euclid(pair.q_i) as f64 / pair.q_i as f64)
                .collect();
            let w = mat_vec(&gen.g1, &frac);
            // Parallelepiped reduction: subtract G1 round(G1^-1 w). Ties
            // round up so residues stay in the half-open cell.
            let coeffs = mat_vec(&gen.g1_inv, &w);
            let mut out = w;
            for (k, c) in coeffs.iter().enumerate() {
                let r = (c + 0.5).floor();
                for i in 0..pair.n {
                    out[i] -= r * gen.g1[i][k];
                }
            }
            out
        }
    }
}

/// The fine-lattice point nearest to `y`: exact per-coordinate rounding
/// on the cubic grid, nearest-plane approximation otherwise.
pub fn remove_noise(pair: &NestedLatticePair, y: &[f64]) -> Vec<f64> {
    assert_eq!(y.len(), pair.n, "dimension mismatch");
    match &pair.general {
        None => {
            let step = pair.grid_step();
            y.iter().map(|&c| round_lower(c / step) * step).collect()
        }
        Some(gen) => nearest_plane(&gen.fine_cols, &gen.gs, y),
    }
}

/// Recovers the digit of a noise-free fine-lattice point: the first
/// coordinate of `q G1^-1 y`, rounded and reduced mod `q` (the `G2`
/// leading entry is 1, so its inverse drops out).
///
/// # Errors
///
/// [`GaussError::NotLatticePoint`] when that coordinate is farther than
/// [`LATTICE_TOLERANCE`] from an integer.
pub fn recover_digit(pair: &NestedLatticePair, y_clean: &[f64]) -> Result<BigInt, GaussError> {
    assert_eq!(y_clean.len(), pair.n, "dimension mismatch");
    let coord = match &pair.general {
        None => y_clean[0] / pair.grid_step(),
        Some(gen) => pair.q_i as f64 * dot(&gen.g1_inv[0], y_clean),
    };
    let rounded = round_lower(coord);
    if (coord - rounded).abs() > LATTICE_TOLERANCE {
        return Err(GaussError::NotLatticePoint { value: coord });
    }
    Ok(BigInt::from(rounded as i128).mod_floor(&pair.q))
}

// ---------------------------------------------------------------------------
// Simulation configuration and results
// ---------------------------------------------------------------------------

/// Channel treatment selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    /// Integer gain matrix used as-is.
    Integer,
    /// Real gain matrix, floor-quantized, with a shared dither.
    DitheredReal,
}

/// Full description of one Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct GaussSimConfig {
    /// Gain matrix; must be entrywise non-negative.
    pub h: Vec<Vec<f64>>,
    /// Transmit power per user.
    pub p: f64,
    /// Noise variance per dimension.
    pub z: f64,
    /// Lattice dimension.
    pub n: usize,
    /// Stacking depth; `None` applies the noise-budget policy.
    pub l: Option<u32>,
    /// Number of Monte-Carlo trials.
    pub trials: u64,
    /// Channel treatment.
    pub mode: SimMode,
    /// Base RNG seed; each trial uses its own derived stream.
    pub seed: u64,
    /// Bounds for the equivalence-class code search.
    pub bounds: SearchBounds,
}

/// Outcome of a Monte-Carlo run.
#[derive(Debug, Clone)]
pub struct SimResult {
    /// Per-user fraction of trials with a wrong or failed decode.
    pub error_rates: Vec<f64>,
    /// Per-user error counts behind the rates.
    pub error_counts: Vec<u64>,
    /// Trials run.
    pub trials: u64,
    /// Lattice dimension used.
    pub n: usize,
    /// Stacking depth used.
    pub l: u32,
    /// Prime modulus used.
    pub q: BigInt,
    /// Largest possible layered channel output.
    pub w_tilde: BigInt,
    /// Efficiency of the scalar code the run is built on.
    pub efficiency: f64,
    /// Half the log signal-to-noise ratio times the efficiency; infinite
    /// when the effective noise is zero.
    pub rate_theoretical: f64,
    /// Sum rate carried by the lattice symbols: `(l/n) sum_i log2|C_i|`.
    pub rate_empirical: f64,
    /// Whether `q^(2/n) <= P/Z_eff` held.
    pub goodness: bool,
    /// Whether the modulus landed strictly inside its target window
    /// `(W~, 2 W~)`.
    pub cond_q_ok: bool,
    /// Noise variance the depth policy saw: `Z`, or `Z_add` when
    /// dithered.
    pub z_effective: f64,
    /// Quantization-inflated noise budget, dithered mode only.
    pub z_add: Option<f64>,
    /// Measured variance of the effective noise, dithered mode only.
    pub effective_noise_var: Option<f64>,
    /// Seed the run used.
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Scheme preparation
// ---------------------------------------------------------------------------

/// A code and modulus choice ready to simulate on an integer channel.
#[derive(Debug, Clone)]
pub struct IntegerScheme {
    /// The integer channel in use.
    pub h: ChannelMatrix,
    /// The equivalence-class search outcome backing the code.
    pub search: ClassSearchResult,
    /// The transferred layered code riding `h`.
    pub layered: LayeredCode,
    /// Table decoder for `layered`.
    pub decoder: LayeredDecoder,
    /// Largest possible channel output under `layered`.
    pub w_tilde: BigInt,
    /// The prime modulus.
    pub q: BigInt,
    /// Whether `q` sits strictly inside `(W~, 2 W~)`.
    pub cond_q_ok: bool,
}

/// Largest channel output of `code` on `h`, in closed form.
pub fn max_layered_output(h: &ChannelMatrix, code: &LayeredCode) -> BigInt {
    (0..h.k())
        .map(|i| {
            (0..h.k())
                .map(|j| h.entry(i, j) * code.max_codeword(j))
                .sum::<BigInt>()
        })
        .max()
        .expect("at least one receiver")
}

/// Picks the largest depth `1 <= l <= 64` whose doubled alphabet still
/// fits the noise budget: `2 W~_l < (P/Z)^(n/2)`.
fn choose_depth(
    a: &BigInt,
    w: &BigInt,
    p: f64,
    z: f64,
    n: usize,
    forced: Option<u32>,
) -> Result<u32, GaussError> {
    if let Some(l) = forced {
        if !(1..=layered::MAX_DEPTH).contains(&l) {
            return Err(GaussError::InvalidConfig(format!(
                "depth {l} outside 1..={}",
                layered::MAX_DEPTH
            )));
        }
        return Ok(l);
    }
    if z <= 0.0 {
        return Err(GaussError::InvalidConfig(
            "the depth policy needs positive noise; set the depth explicitly for Z = 0".into(),
        ));
    }
    let budget = (n as f64 / 2.0) * (p / z).log2();
    let mut best = None;
    for l in 1..=layered::MAX_DEPTH {
        let w_tilde = w_tilde_at(a, w, l);
        if w_tilde.is_zero() || log2_bigint(&w_tilde) + 1.0 < budget {
            best = Some(l);
        } else {
            break;
        }
    }
    best.ok_or_else(|| GaussError::InfeasibleDepth {
        w_tilde_1: a.clone(),
    })
}

/// `W~_l = A (W^l - 1) / (W - 1)`: the largest depth-`l` output, from the
/// largest single-layer output `A`.
fn w_tilde_at(a: &BigInt, w: &BigInt, l: u32) -> BigInt {
    if w.is_one() {
        return a * BigInt::from(l);
    }
    a * ((w.pow(l) - BigInt::one()) / (w - BigInt::one()))
}

/// Runs the class search on `h` and assembles the layered scheme at the
/// forced or policy-chosen depth, with `q` the first prime past the
/// alphabet bound.
///
/// # Errors
///
/// [`GaussError::Search`] when the class search fails;
/// [`GaussError::InfeasibleDepth`], [`GaussError::ModulusTooLarge`], and
/// [`GaussError::InvalidConfig`] as described on each condition.
pub fn prepare_integer_scheme(
    h: &ChannelMatrix,
    p: f64,
    z_eff: f64,
    n: usize,
    l: Option<u32>,
    bounds: &SearchBounds,
) -> Result<IntegerScheme, GaussError> {
    let search = equiv::class_search(h, bounds)?;
    let w = crate::ddifc::w_max(&search.best_matrix, search.code.codebook());
    // Largest single-layer output on h, via the transferred code.
    let probe = layered::build_layered_transferred(
        h,
        &search.best_matrix,
        search.code.codebook(),
        &search.transform,
        &w,
        1,
    )
    .expect("bin size equals the source alphabet bound");
    let a = max_layered_output(h, &probe);
    let l = choose_depth(&a, &w, p, z_eff, n, l)?;
    let layered_code = layered::build_layered_transferred(
        h,
        &search.best_matrix,
        search.code.codebook(),
        &search.transform,
        &w,
        l,
    )
    .expect("bin size equals the source alphabet bound");
    let w_tilde = w_tilde_at(&a, &w, l);
    let two = BigInt::from(2);
    let q = if w_tilde < two {
        two.clone()
    } else {
        exactmath::next_prime(&w_tilde)
    };
    // Digit containment u_i <= W~ < q holds by construction; the upper
    // window edge is only a flag.
    let cond_q_ok = q > w_tilde && q < &w_tilde * &two;
    if q.bits() > MAX_MODULUS_BITS {
        return Err(GaussError::ModulusTooLarge { q });
    }
    let decoder = LayeredDecoder::new(layered_code.clone())
        .expect("search-verified codes are decodable");
    Ok(IntegerScheme {
        h: h.clone(),
        search,
        layered: layered_code,
        decoder,
        w_tilde,
        q,
        cond_q_ok,
    })
}

// ---------------------------------------------------------------------------
// Monte-Carlo simulation
// ---------------------------------------------------------------------------

struct TrialOutcome {
    errs: Vec<bool>,
    noise_sq_sum: f64,
}

struct TrialPlan {
    k: usize,
    n: usize,
    l: u32,
    q: i128,
    /// Per-user wire codeword values, sorted.
    wire: Vec<Vec<i128>>,
    /// Base-W weights in grid arithmetic.
    w: i128,
    /// Integer channel entries.
    hh: Vec<Vec<i128>>,
    /// Fractional channel remainder (dithered mode), else empty.
    h_diff: Vec<Vec<f64>>,
    g2: Vec<i128>,
    /// Noise standard deviation in grid units.
    sigma_grid: f64,
    /// Grid step, for reporting effective noise in real units.
    step: f64,
    dithered: bool,
    seed: u64,
}

impl TrialPlan {
    /// One independent trial; all randomness comes from the trial's own
    /// RNG stream, so outcomes do not depend on execution order.
    ///
    /// Draw order: per-user layer digits, then the shared dither when
    /// dithered, then per-receiver noise vectors.
    fn run(&self, decoder: &LayeredDecoder, trial: u64) -> TrialOutcome {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        let k = self.k;
        let l = self.l as usize;

        let mut sent: Vec<Vec<i128>> = Vec::with_capacity(k);
        let mut codewords: Vec<i128> = Vec::with_capacity(k);
        for j in 0..k {
            let digits: Vec<i128> = (0..l)
                .map(|_| self.wire[j][rng.gen_range(0..self.wire[j].len())])
                .collect();
            let mut e = 0i128;
            for &d in digits.iter().rev() {
                e = e * self.w + d;
            }
            sent.push(digits);
            codewords.push(e);
        }

        // Grid-unit transmit vectors, centered into the cube.
        let grids: Vec<Vec<i128>> = codewords
            .iter()
            .map(|&e| {
                self.g2
                    .iter()
                    .map(|&g| center((g * e).rem_euclid(self.q), self.q))
                    .collect()
            })
            .collect();

        let dither: Vec<f64> = if self.dithered {
            (0..self.n)
                .map(|_| (rng.gen::<f64>() - 0.5) * self.q as f64)
                .collect()
        } else {
            Vec::new()
        };
        // Dithered transmit vectors x_j = (X_j - U) mod the coarse cube,
        // in grid units; these feed the quantization-residue noise term.
        let dithered_x: Vec<Vec<f64>> = if self.dithered {
            grids
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&dither)
                        .map(|(&g, &u)| {
                            let mut x = g as f64 - u;
                            let half = self.q as f64 / 2.0;
                            if x < -half {
                                x += self.q as f64;
                            } else if x >= half {
                                x -= self.q as f64;
                            }
                            x
                        })
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };

        let mut errs = vec![false; k];
        let mut noise_sq_sum = 0.0;
        for i in 0..k {
            let mut decoded_first = 0i128;
            for coord in 0..self.n {
                let exact: i128 = (0..k).map(|j| self.hh[i][j] * grids[j][coord]).sum();
                let mut nu: f64 = rng.sample::<f64, _>(StandardNormal) * self.sigma_grid;
                if self.dithered {
                    nu += (0..k)
                        .map(|j| self.h_diff[i][j] * dithered_x[j][coord])
                        .sum::<f64>();
                    let real_nu = nu * self.step;
                    noise_sq_sum += real_nu * real_nu;
                }
                let decoded = exact + round_lower(nu) as i128;
                if coord == 0 {
                    decoded_first = decoded;
                }
            }
            let u = BigInt::from(decoded_first.rem_euclid(self.q));
            match decoder.decode(i, &u) {
                Ok(layers) => {
                    let ok = layers.len() == l
                        && layers
                            .iter()
                            .zip(&sent[i])
                            .all(|(got, &want)| got == &BigInt::from(want));
                    errs[i] = !ok;
                }
                Err(_) => errs[i] = true,
            }
        }
        TrialOutcome { errs, noise_sq_sum }
    }
}

fn validate_common(cfg: &GaussSimConfig) -> Result<(), GaussError> {
    if !(cfg.p > 0.0) {
        return Err(GaussError::InvalidConfig("power must be positive".into()));
    }
    if !(cfg.z >= 0.0) {
        return Err(GaussError::InvalidConfig(
            "noise variance must be non-negative".into(),
        ));
    }
    if cfg.trials < 1 {
        return Err(GaussError::InvalidConfig("trials must be >= 1".into()));
    }
    if cfg.n < 1 {
        return Err(GaussError::InvalidConfig("dimension must be >= 1".into()));
    }
    let k = cfg.h.len();
    if k == 0 || cfg.h.iter().any(|row| row.len() != k) {
        return Err(GaussError::InvalidConfig(
            "gain matrix must be square and non-empty".into(),
        ));
    }
    if cfg.h.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(GaussError::InvalidConfig(
            "gain entries must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn integer_matrix(h: &[Vec<f64>]) -> Result<ChannelMatrix, GaussError> {
    let mut rows = Vec::with_capacity(h.len());
    for row in h {
        let mut out = Vec::with_capacity(row.len());
        for &x in row {
            if x.fract() != 0.0 || x > 1e12 {
                return Err(GaussError::InvalidConfig(format!(
                    "integer mode needs integer gains; found {x}"
                )));
            }
            out.push(BigInt::from(x as i64));
        }
        rows.push(out);
    }
    ChannelMatrix::new(rows).map_err(|e| GaussError::InvalidConfig(e.to_string()))
}

fn run_trials(
    cfg: &GaussSimConfig,
    scheme: &IntegerScheme,
    h_diff: Option<Vec<Vec<f64>>>,
    z_eff: f64,
    exec: Exec,
) -> Result<SimResult, GaussError> {
    let k = scheme.h.k();
    let hh: Vec<Vec<i128>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    scheme.h.entry(i, j).to_i128().ok_or_else(|| {
                        GaussError::InvalidConfig("gain entry too large".into())
                    })
                })
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    // Overflow guard: outputs stay far inside 128 bits.
    let max_row_sum: i128 = (0..k)
        .map(|i| hh[i].iter().map(|&x| x.abs()).sum())
        .max()
        .unwrap_or(0);
    let q_i = scheme
        .q
        .to_i128()
        .expect("modulus width checked at preparation");
    if max_row_sum.checked_mul(q_i).is_none() {
        return Err(GaussError::InvalidConfig("gain entries too large".into()));
    }

    let mut setup_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    setup_rng.set_stream(SETUP_STREAM);
    let pair = build_nested_pair(cfg.n, &scheme.q, cfg.p, &mut setup_rng)?;

    let code = &scheme.layered;
    let wire: Vec<Vec<i128>> = (0..k)
        .map(|j| {
            code.primary()
                .set(j)
                .iter()
                .map(|m| {
                    (m * code.scale(j))
                        .to_i128()
                        .expect("wire codewords fit by modulus bound")
                })
                .collect()
        })
        .collect();

    let dithered = h_diff.is_some();
    let plan = TrialPlan {
        k,
        n: cfg.n,
        l: code.depth(),
        q: q_i,
        wire,
        w: code.w().to_i128().expect("bin size below modulus"),
        hh,
        h_diff: h_diff.unwrap_or_default(),
        g2: pair.g2().to_vec(),
        sigma_grid: cfg.z.sqrt() / pair.grid_step(),
        step: pair.grid_step(),
        dithered,
        seed: cfg.seed,
    };

    let outcomes = exec::map_collect(
        exec,
        cfg.trials as usize,
        |t| plan.run(&scheme.decoder, t as u64),
    );
    let mut error_counts = vec![0u64; k];
    let mut noise_sq_total = 0.0;
    for o in &outcomes {
        for (c, &e) in error_counts.iter_mut().zip(&o.errs) {
            *c += u64::from(e);
        }
        noise_sq_total += o.noise_sq_sum;
    }
    let error_rates = error_counts
        .iter()
        .map(|&c| c as f64 / cfg.trials as f64)
        .collect();

    let sizes_log2: f64 = code
        .primary()
        .sets()
        .iter()
        .map(|s| (s.len() as f64).log2())
        .sum();
    let rate_empirical = code.depth() as f64 / cfg.n as f64 * sizes_log2;
    let rate_theoretical = if z_eff == 0.0 {
        f64::INFINITY
    } else {
        0.5 * (cfg.p / z_eff).log2() * scheme.search.efficiency
    };

    Ok(SimResult {
        error_rates,
        error_counts,
        trials: cfg.trials,
        n: cfg.n,
        l: code.depth(),
        q: scheme.q.clone(),
        w_tilde: scheme.w_tilde.clone(),
        efficiency: scheme.search.efficiency,
        rate_theoretical,
        rate_empirical,
        goodness: pair.goodness(z_eff),
        cond_q_ok: scheme.cond_q_ok,
        z_effective: z_eff,
        z_add: if dithered { Some(z_eff) } else { None },
        effective_noise_var: if dithered {
            Some(noise_sq_total / (cfg.trials as f64 * cfg.n as f64 * k as f64))
        } else {
            None
        },
        seed: cfg.seed,
    })
}

/// Simulates an integer-gain channel end to end: class search, layered
/// code, lattice encoding, Gaussian noise, lattice decoding, digit
/// recovery, layered decoding.
///
/// # Errors
///
/// [`GaussError::InvalidConfig`] for precondition violations (including
/// non-integer gains and a zero-noise run without an explicit depth),
/// [`GaussError::Search`], [`GaussError::InfeasibleDepth`],
/// [`GaussError::ModulusTooLarge`].
pub fn simulate_integer(cfg: &GaussSimConfig) -> Result<SimResult, GaussError> {
    simulate_integer_exec(cfg, Exec::default())
}

/// [`simulate_integer`] with an explicit execution mode.
pub fn simulate_integer_exec(cfg: &GaussSimConfig, exec: Exec) -> Result<SimResult, GaussError> {
    validate_common(cfg)?;
    let h = integer_matrix(&cfg.h)?;
    let scheme = prepare_integer_scheme(&h, cfg.p, cfg.z, cfg.n, cfg.l, &cfg.bounds)?;
    simulate_integer_prepared(cfg, &scheme, exec)
}

/// Runs the Monte-Carlo trials against an already prepared scheme,
/// reusing its code search across SNR points.
///
/// # Errors
///
/// As [`simulate_integer`].
pub fn simulate_integer_prepared(
    cfg: &GaussSimConfig,
    scheme: &IntegerScheme,
    exec: Exec,
) -> Result<SimResult, GaussError> {
    validate_common(cfg)?;
    run_trials(cfg, scheme, None, cfg.z, exec)
}

/// Simulates a real-gain channel: quantizes `H` to `floor(H)`, budgets
/// the quantization residue as extra noise (`Z_add = P H_dmax + Z`), and
/// runs the integer scheme against the quantized matrix with a shared
/// dither randomizing the residue.
///
/// # Errors
///
/// As [`simulate_integer`], with integer-mode preconditions applying to
/// the quantized matrix.
pub fn simulate_dithered(cfg: &GaussSimConfig) -> Result<SimResult, GaussError> {
    simulate_dithered_exec(cfg, Exec::default())
}

/// [`simulate_dithered`] with an explicit execution mode.
pub fn simulate_dithered_exec(cfg: &GaussSimConfig, exec: Exec) -> Result<SimResult, GaussError> {
    validate_common(cfg)?;
    let k = cfg.h.len();
    let mut floor_rows = Vec::with_capacity(k);
    let mut h_diff = vec![vec![0.0; k]; k];
    for (i, row) in cfg.h.iter().enumerate() {
        let mut out = Vec::with_capacity(k);
        for (j, &x) in row.iter().enumerate() {
            let f = x.floor();
            h_diff[i][j] = x - f;
            out.push(BigInt::from(f as i64));
        }
        floor_rows.push(out);
    }
    let h_hat =
        ChannelMatrix::new(floor_rows).map_err(|e| GaussError::InvalidConfig(e.to_string()))?;
    let h_dmax = h_diff
        .iter()
        .map(|row| row.iter().map(|d| d * d).sum::<f64>())
        .fold(0.0, f64::max);
    let z_add = cfg.p * h_dmax + cfg.z;
    let scheme = prepare_integer_scheme(&h_hat, cfg.p, z_add, cfg.n, cfg.l, &cfg.bounds)?;
    run_trials(cfg, &scheme, Some(h_diff), z_add, exec)
}

/// Dispatches on `cfg.mode`.
///
/// # Errors
///
/// As the mode's entry point.
pub fn simulate(cfg: &GaussSimConfig) -> Result<SimResult, GaussError> {
    match cfg.mode {
        SimMode::Integer => simulate_integer(cfg),
        SimMode::DitheredReal => simulate_dithered(cfg),
    }
}

// ---------------------------------------------------------------------------
// Channel normalization
// ---------------------------------------------------------------------------

/// Rescales a channel with per-user powers and per-receiver noise levels
/// into the equivalent equal-power equal-noise matrix:
/// entry `(i, j)` becomes `H(i,j) sqrt(P/P_j) / sqrt(N_i/N)`.
///
/// # Panics
///
/// Panics when any power or variance is not positive or the shapes
/// disagree.
pub fn normalize_channel(
    h: &[Vec<f64>],
    p_vec: &[f64],
    n_vec: &[f64],
    p: f64,
    n: f64,
) -> Vec<Vec<f64>> {
    let k = h.len();
    assert!(p > 0.0 && n > 0.0, "reference power and noise must be positive");
    assert_eq!(p_vec.len(), k, "power vector length");
    assert_eq!(n_vec.len(), k, "noise vector length");
    assert!(
        p_vec.iter().chain(n_vec).all(|&x| x > 0.0),
        "powers and variances must be positive"
    );
    (0..k)
        .map(|i| {
            assert_eq!(h[i].len(), k, "matrix must be square");
            let d1 = (n_vec[i] / n).sqrt();
            (0..k)
                .map(|j| h[i][j] * (p / p_vec[j]).sqrt() / d1)
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
