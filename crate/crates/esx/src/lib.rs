//! Dither-based extremum seeking at desk scale.
//!
//! The crate implements the classic extremum-seeking scheme
//! `dx = -gamma h(x + delta sin(2 pi t)) sin(2 pi t)`, its high-pass-filter
//! variant, and the systems obtained by period-averaging both: the Fourier
//! field driven by `b_{1,delta}/2` and the first-order Taylor field driven by
//! `delta h'/2`. Around those sit the tools needed to check what the theory
//! claims on concrete costs:
//!
//! - [`cost`]: cost models, the piecewise benchmark family, quasi-convexity
//!   envelope checks, and the local constants `L_r` / `M_r`;
//! - [`fourier`]: trapezoid quadrature of the dither-harmonic coefficients,
//!   the `delta_star` threshold, and equilibria of the averaged field;
//! - [`dynamics`]: the right-hand sides of every scheme, plus the solar-panel
//!   plant driven by either seeking law;
//! - [`sim`]: fixed-step RK4 with trajectory recording and metric extraction;
//! - [`analysis`]: closeness, containment, escape, uniformity, and tracking
//!   studies that turn the claims into measured verdicts;
//! - [`config`]: declarative scenario files, CSV/gnuplot emission, and the
//!   pass/fail summary behind the `esx` binary.
//!
//! Start with the runnable examples (`cargo run --release --example
//! classic_convergence`) or a bundled scenario (`esx run specs/fig4.toml`).

// `!(x > 0.0)` rejects NaN along with nonpositive values; `x <= 0.0` does not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod fourier;
pub mod sim;

pub use error::{Error, Result};
