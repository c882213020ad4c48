//! Moments, covariances and moment generating functions of the present
//! values of several insurance contracts driven by one multi-state Markov
//! jump process.
//!
//! The main entry points are [`partial_moments`] (backward ODEs),
//! [`block_partial_moments`] (a single block product integral),
//! [`covariance_hattendorff`], [`mgf`] and the Monte Carlo engine in
//! [`montecarlo`].

pub mod cli;
pub mod config;
mod error;
pub mod grid;
pub mod markov;
pub mod moments;
pub mod montecarlo;
mod ode;
pub mod payments;
pub mod timefun;

pub use error::{Error, Result};
pub use markov::{transition_probabilities, ModelSpec, Numerics, Scheme};
pub use moments::{
    block_partial_moments, covariance_hattendorff, mgf, partial_moments, MultiIndex,
};
pub use nalgebra;
pub use payments::{Contract, PaymentSet};
pub use timefun::{parse_timefun, Side, TimeFunction};
