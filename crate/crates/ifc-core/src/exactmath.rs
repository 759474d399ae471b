//! Exact arbitrary-precision arithmetic shared by every other module.
//!
//! [`BigInt`] and [`Rational`] are re-exported from the `num` family:
//! `Rational` (a reduced `BigRational`) always stores a positive denominator
//! and gcd-reduced terms, so equality is structural. On top of those this
//! module provides the gcd, modular-inverse, and prime-generation routines
//! the code constructions need.

use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use std::fmt;

pub use num_bigint::BigInt;
pub use num_rational::BigRational as Rational;

/// Errors from exact-arithmetic operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MathError {
    /// `mod_inverse(a, m)` was called with `gcd(a, m) != 1`.
    NotInvertible { a: BigInt, m: BigInt },
}

impl fmt::Display for MathError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MathError::NotInvertible { a, m } => {
                write!(f, "{a} has no inverse modulo {m}: gcd != 1")
            }
        }
    }
}

impl std::error::Error for MathError {}

/// Greatest common divisor of a non-empty list of non-negative integers.
///
/// Follows the convention `gcd(0, x) = x`; the gcd of an all-zero list is 0.
///
/// # Examples
///
/// ```
/// use ifc_core::exactmath::{gcd_all, BigInt};
///
/// let v: Vec<BigInt> = [12, 6].iter().map(|&x| BigInt::from(x)).collect();
/// assert_eq!(gcd_all(&v), BigInt::from(6));
/// ```
///
/// # Panics
///
/// Panics if `values` is empty or contains a negative integer.
pub fn gcd_all(values: &[BigInt]) -> BigInt {
    assert!(!values.is_empty(), "gcd_all: empty list");
    let mut g = BigInt::zero();
    for v in values {
        assert!(!v.is_negative(), "gcd_all: negative value {v}");
        g = g.gcd(v);
        if g.is_one() {
            break;
        }
    }
    g
}

/// Modular inverse: the unique `h` in `[1, m)` with `(a * h) mod m = 1`.
///
/// `a` may be any integer; it is reduced into `[0, m)` first.
///
/// # Examples
///
/// ```
/// use ifc_core::exactmath::{mod_inverse, BigInt};
///
/// let inv = mod_inverse(&BigInt::from(5), &BigInt::from(6)).unwrap();
/// assert_eq!(inv, BigInt::from(5));
/// assert!(mod_inverse(&BigInt::from(2), &BigInt::from(6)).is_err());
/// ```
///
/// # Panics
///
/// Panics if `m < 2`.
pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Result<BigInt, MathError> {
    assert!(m >= &BigInt::from(2), "mod_inverse: modulus {m} < 2");
    let a_red = a.mod_floor(m);
    // Extended Euclid on (a_red, m): maintain r = a_red * s (mod m).
    let (mut r0, mut r1) = (a_red.clone(), m.clone());
    let (mut s0, mut s1) = (BigInt::one(), BigInt::zero());
    while !r1.is_zero() {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let s2 = &s0 - &q * &s1;
        r0 = r1;
        r1 = r2;
        s0 = s1;
        s1 = s2;
    }
    if !r0.is_one() {
        return Err(MathError::NotInvertible {
            a: a.clone(),
            m: m.clone(),
        });
    }
    Ok(s0.mod_floor(m))
}

/// Smallest prime strictly greater than `lower`.
///
/// The primality check is deterministic for every input this crate produces:
/// below 3.3e24 a proven Miller-Rabin base set decides exactly, and larger
/// candidates must additionally pass a strong Lucas test (the combined check
/// has no known pseudoprimes at any size, and none exist below 2^64).
///
/// # Examples
///
/// ```
/// use ifc_core::exactmath::{next_prime, BigInt};
///
/// assert_eq!(next_prime(&BigInt::from(40)), BigInt::from(41));
/// assert_eq!(next_prime(&BigInt::from(2)), BigInt::from(3));
/// ```
///
/// # Panics
///
/// Panics if `lower < 2`.
pub fn next_prime(lower: &BigInt) -> BigInt {
    assert!(lower >= &BigInt::from(2), "next_prime: lower {lower} < 2");
    let mut candidate = lower + 1u32;
    if candidate.is_even() && candidate > BigInt::from(2) {
        candidate += 1u32;
    }
    while !is_prime(&candidate) {
        candidate += 2u32;
    }
    candidate
}

/// Deterministic primality test (see [`next_prime`] for the guarantees).
pub fn is_prime(n: &BigInt) -> bool {
    let two = BigInt::from(2);
    if n < &two {
        return false;
    }
    const SMALL_PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in SMALL_PRIMES.iter() {
        let p = BigInt::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // Miller-Rabin with the fixed base set above is a proven exact test for
    // n < 3_317_044_064_679_887_385_961_981.
    let proven_limit: BigInt = "3317044064679887385961981".parse().unwrap();
    for &b in SMALL_PRIMES.iter() {
        if !miller_rabin(n, &BigInt::from(b)) {
            return false;
        }
    }
    if n < &proven_limit {
        return true;
    }
    strong_lucas_prp(n)
}

/// One Miller-Rabin round: is `n` a strong probable prime to base `b`?
fn miller_rabin(n: &BigInt, b: &BigInt) -> bool {
    let one = BigInt::one();
    let n_minus_1 = n - &one;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut x = b.modpow(&d, n);
    if x.is_one() || x == n_minus_1 {
        return true;
    }
    for _ in 1..s {
        x = (&x * &x) % n;
        if x == n_minus_1 {
            return true;
        }
    }
    false
}

/// Strong Lucas probable-prime test with Selfridge's method A parameters.
fn strong_lucas_prp(n: &BigInt) -> bool {
    // Find D in 5, -7, 9, -11, ... with Jacobi(D, n) = -1.
    let mut d = BigInt::from(5);
    loop {
        match jacobi(&d, n) {
            0 => return &d.abs() == n, // shares a factor with n otherwise
            -1 => break,
            _ => {}
        }
        d = if d.is_positive() {
            -(&d + 2u32)
        } else {
            -(&d - 2u32)
        };
    }
    let p = BigInt::one();
    let q: BigInt = (BigInt::one() - &d) / 4;

    // n + 1 = delta * 2^s with delta odd.
    let n_plus_1 = n + 1u32;
    let s = n_plus_1.trailing_zeros().unwrap_or(0);
    let delta = &n_plus_1 >> s;

    // Compute U_delta, V_delta by binary expansion of delta.
    let mut u = BigInt::one();
    let mut v = p.clone();
    let mut qk = q.mod_floor(n);
    let bits = delta.bits();
    let inv2 = mod_inverse(&BigInt::from(2), n).expect("n odd");
    for i in (0..bits - 1).rev() {
        // Double: (U, V, Q^k) -> (U V, V^2 - 2 Q^k, Q^2k).
        u = (&u * &v).mod_floor(n);
        v = (&v * &v - (&qk << 1u32)).mod_floor(n);
        qk = (&qk * &qk).mod_floor(n);
        if delta.bit(i) {
            // Increment: U' = (P U + V)/2, V' = (D U + P V)/2.
            let u_next = ((&p * &u + &v) * &inv2).mod_floor(n);
            let v_next = ((&d * &u + &p * &v) * &inv2).mod_floor(n);
            u = u_next;
            v = v_next;
            qk = (&qk * q.mod_floor(n)).mod_floor(n);
        }
    }
    if u.is_zero() || v.is_zero() {
        return true;
    }
    for _ in 1..s {
        v = (&v * &v - (&qk << 1u32)).mod_floor(n);
        qk = (&qk * &qk).mod_floor(n);
        if v.is_zero() {
            return true;
        }
    }
    false
}

/// Jacobi symbol (a/n) for odd positive n.
fn jacobi(a: &BigInt, n: &BigInt) -> i32 {
    debug_assert!(n.is_positive() && n.is_odd());
    let mut a = a.mod_floor(n);
    let mut n = n.clone();
    let mut result = 1i32;
    while !a.is_zero() {
        while a.is_even() {
            a >>= 1;
            let r = &n % 8u32;
            if r == BigInt::from(3) || r == BigInt::from(5) {
                result = -result;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if &a % 4u32 == BigInt::from(3) && &n % 4u32 == BigInt::from(3) {
            result = -result;
        }
        a = a.mod_floor(&n);
    }
    if n.is_one() {
        result
    } else {
        0
    }
}

/// Base-2 logarithm of a positive integer, accurate to f64 precision at any
/// magnitude (values like W^64 overflow a direct f64 conversion).
pub fn log2_bigint(x: &BigInt) -> f64 {
    assert!(x.is_positive(), "log2_bigint: non-positive argument {x}");
    let bits = x.bits();
    if bits <= 53 {
        let v: u64 = x.try_into().expect("fits by bit count");
        return (v as f64).log2();
    }
    // Keep the top 53 bits as the mantissa and account for the shift.
    let shift = bits - 53;
    let top: u64 = (x >> shift).try_into().expect("53 bits");
    (top as f64).log2() + shift as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(x: i64) -> BigInt {
        BigInt::from(x)
    }

    #[test]
    fn gcd_all_matches_pinned_values() {
        assert_eq!(gcd_all(&[big(12), big(6)]), big(6));
        assert_eq!(gcd_all(&[big(0), big(5)]), big(5));
        assert_eq!(gcd_all(&[big(2), big(3), big(6)]), big(1));
        assert_eq!(gcd_all(&[big(0), big(0)]), big(0));
        assert_eq!(gcd_all(&[big(7)]), big(7));
    }

    #[test]
    fn mod_inverse_matches_pinned_values() {
        assert_eq!(mod_inverse(&big(1), &big(6)).unwrap(), big(1));
        assert_eq!(mod_inverse(&big(5), &big(6)).unwrap(), big(5));
        assert!(matches!(
            mod_inverse(&big(2), &big(6)),
            Err(MathError::NotInvertible { .. })
        ));
    }

    #[test]
    fn mod_inverse_accepts_unreduced_and_negative_inputs() {
        assert_eq!(mod_inverse(&big(11), &big(6)).unwrap(), big(5));
        assert_eq!(mod_inverse(&big(-1), &big(6)).unwrap(), big(5));
    }

    #[test]
    fn next_prime_matches_pinned_values() {
        assert_eq!(next_prime(&big(40)), big(41));
        assert_eq!(next_prime(&big(2)), big(3));
        assert_eq!(next_prime(&big(30)), big(31));
        assert_eq!(next_prime(&big(1240)), big(1249));
    }

    #[test]
    fn rational_is_reduced_with_positive_denominator() {
        let r = Rational::new(big(4), big(-6));
        assert_eq!(r.numer(), &big(-2));
        assert_eq!(r.denom(), &big(3));
    }

    #[test]
    fn log2_bigint_matches_f64_and_survives_huge_values() {
        assert_eq!(log2_bigint(&big(1)), 0.0);
        assert!((log2_bigint(&big(36)) - 36f64.log2()).abs() < 1e-12);
        let huge = BigInt::from(30u32).pow(300);
        let expect = 300.0 * 30f64.log2();
        assert!((log2_bigint(&huge) - expect).abs() < 1e-9 * expect);
    }
}
