//! Exact and numerical machinery for complete exponential sums modulo `q`.
//!
//! The crate is organised bottom-up:
//!
//! * [`modcore`]: factorization, CRT, inverses and modular square roots
//!   (including the 2-adic square root of units `≡ 1 mod 8`).
//! * [`kloosterman`]: normalized Kloosterman sums by direct summation, by
//!   twisted multiplicativity, and by the closed form for powers of two.
//! * [`prodsums`]: complete sums of products of shifted Kloosterman sums and
//!   their multiplicative splittings.
//! * [`variety`]: point counts on the eleven-variable variety attached to the
//!   `p²` sums, sign-product polynomials and exact coefficient identities.
//! * [`bilinear`]: bilinear forms with Kloosterman kernels, bound envelopes and
//!   exponent scans.
//! * [`moments`]: Dirichlet characters, Hecke eigenvalues of `Δ`, Euler
//!   products, off-diagonal sums and a Voronoi summation check.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. All reductions
//! are ordered so results do not depend on the thread count.

pub mod bilinear;
pub mod error;
pub mod exec;
pub mod kloosterman;
pub mod modcore;
pub mod moments;
pub mod prodsums;
pub mod rng;
pub mod stats;
pub mod variety;

pub use error::{Error, Result};
pub use kloosterman::ExpSum;
pub use modcore::Modulus;
