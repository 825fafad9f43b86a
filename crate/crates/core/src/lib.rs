//! Modeling and data-analysis toolkit for mechanical dissipation in
//! chip-scale optomechanical resonators.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod clamping_loss;
pub mod cli;
pub mod coupled_modes;
pub mod fem;
pub mod intrinsic_loss;
pub mod noise_spectra;
pub mod optim;
pub mod quadrature;
pub mod quantum_budget;
pub mod units;
