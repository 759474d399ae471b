//! Algebraic interference-alignment codes for K-user interference channels.
//!
//! The crate models the noiseless discrete deterministic interference channel
//! `Y = H X` obtained from a Gaussian interference channel after lattice noise
//! removal, and provides:
//!
//! - exact decodability verification and efficiency accounting for scalar
//!   codebooks ([`ddifc`]),
//! - arithmetic-progression code synthesis with a closed-form modular decoder
//!   ([`apcodes`]),
//! - the matrix equivalence relation `D(d^-1) H D(r) = H'`, code transfer
//!   across equivalent channels, and bounded search over the equivalence
//!   class for maximum efficiency ([`equiv`]),
//! - layered (base-W digit) codebooks and their asymptotic efficiency
//!   ([`layered`]),
//! - a Construction-A nested-lattice Monte-Carlo simulator for the Gaussian
//!   channel at finite dimension, with integer-gain and dithered real-gain
//!   modes ([`gauss`]).
//!
//! All combinatorial verification is exact: decodability is established by
//! exhaustive enumeration over message tuples, never by sampling. Arithmetic
//! on codewords, channel outputs, and moduli uses arbitrary-precision
//! integers ([`exactmath`]).
//!
//! # Parallelism
//!
//! Enumeration, class search, and Monte-Carlo trials are data-parallel via
//! rayon when the default `parallel` feature is enabled, and fall back to
//! sequential loops without it. Every parallel reduction is deterministic:
//! results are bit-identical across thread counts and execution modes (see
//! [`exec::Exec`]).

pub mod apcodes;
pub mod ddifc;
pub mod equiv;
pub mod exactmath;
pub mod exec;
pub mod gauss;
pub mod layered;
