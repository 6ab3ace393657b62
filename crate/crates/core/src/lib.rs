//! Conservative Kawasaki spin-exchange dynamics with a long-range Kac
//! interaction, its coarse-grained field, and the limiting one-dimensional
//! conservative Cahn-Hilliard equation.
//!
//! The crate has three layers:
//!
//! * microscopic: exact event-driven simulation of the exchange chain
//!   ([`kmc`]) over the lattice model ([`kernel`], [`lattice`]), plus exact
//!   small-system statistical mechanics by enumeration ([`gibbs`]);
//! * analysis: coarse-grained fields and block estimators ([`coarse`]),
//!   lattice Fourier calculus ([`spectral`]), and the drift/martingale
//!   decomposition along trajectories ([`drift`]);
//! * macroscopic: a dealiased spectral integrator for the conservative
//!   stochastic Cahn-Hilliard equation ([`sch`]) and the experiment harness
//!   that compares the two sides ([`harness`]).

pub mod coarse;
pub mod drift;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod kernel;
pub mod kmc;
pub mod lattice;
pub mod ratetree;
pub mod scaling;
pub mod sch;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
