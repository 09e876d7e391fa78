//! Stochastic state reduction driven by probability currents.
//!
//! A [`model::Superposition`] holds square-modulus components. Interactions
//! open current edges into zero-modulus ready components; a stochastic hit
//! realizes one of them and drops everything else. [`scenarios`] builds the
//! detector/mechanism/cat/observer configurations, [`montecarlo`] runs trials
//! and batches, and [`experience`] checks that no agent ever experiences two
//! states at once.

pub mod cli;
pub mod dynamics;
pub mod experience;
pub mod model;
pub mod montecarlo;
pub mod scenarios;
