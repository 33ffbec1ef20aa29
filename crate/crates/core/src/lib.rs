//! Exact stochastic simulation and analytical machinery for SIRS-type contact
//! processes on star graphs.
//!
//! The model: a graph whose vertices are `S`usceptible, `I`nfected or
//! `R`ecovered (temporarily immune).  An infected vertex infects each
//! susceptible neighbour at rate `lambda`, recovers at rate `1`, and a
//! recovered vertex becomes susceptible again at rate `alpha`.  Three variants
//! are supported:
//!
//! * [`Variant::X`] — the full process, every vertex gains immunity,
//! * [`Variant::Y`] — only the star's root gains immunity; leaves drop
//!   straight back to susceptible,
//! * [`Variant::Sis`] — no immunity anywhere.
//!
//! On the star with `n` leaves, started from an infected root, the process
//! dies out almost surely; the library provides two exact samplers for the
//! survival time (a lumped Gillespie engine exploiting leaf exchangeability
//! and a per-vertex graphical engine driven by explicit Poisson clocks),
//! round-structure extraction, monotone couplings, and closed-form analytics
//! (round survival laws, series evaluation, exact mean survival via linear
//! solves) against which the samplers are validated.
//!
//! The crate is `no_std` (with `alloc`): all floating-point transcendentals
//! go through `libm`, so results are bit-identical across platforms and
//! embeddings.  Everything is deterministic given a master seed; parallel
//! drivers live in the companion CLI crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analytics;
pub mod coupling;
pub mod experiment;
pub mod process;
pub mod rng;
pub mod rounds;
pub mod stats;

use core::fmt;

/// Unified error type for the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    InvalidParameter(&'static str),
    /// A structural input (graph, configuration, trajectory) is malformed.
    InvalidInput(&'static str),
    /// The request exceeds a documented capacity limit.
    Capacity(&'static str),
    /// Not enough usable data to carry out the requested estimate.
    InsufficientData(&'static str),
    /// An internal consistency check failed; indicates a bug, not bad input.
    Internal(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(m) => write!(f, "invalid parameter: {m}"),
            Error::InvalidInput(m) => write!(f, "invalid input: {m}"),
            Error::Capacity(m) => write!(f, "capacity exceeded: {m}"),
            Error::InsufficientData(m) => write!(f, "insufficient data: {m}"),
            Error::Internal(m) => write!(f, "internal inconsistency: {m}"),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Internal math shims: `f64` transcendentals live in `std`, which this crate
/// does not link, so everything routes through `libm`.
pub(crate) mod math {
    #[inline]
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
    #[inline]
    pub fn ln_1p(x: f64) -> f64 {
        libm::log1p(x)
    }
    #[inline]
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    #[inline]
    pub fn exp_m1(x: f64) -> f64 {
        libm::expm1(x)
    }
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn pow(x: f64, y: f64) -> f64 {
        libm::pow(x, y)
    }
    #[inline]
    pub fn abs(x: f64) -> f64 {
        libm::fabs(x)
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
}
