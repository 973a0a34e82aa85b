//! Gain-scheduled LPV lane keeping for a roll-coupled single-track vehicle.
//!
//! The pipeline runs: drive scenarios and record the scheduling vector
//! ([`scheduling::collect_trajectories`]), reduce it with PCA
//! ([`scheduling::pca_reduce`]), pick a simplex of box corners around the
//! reduced data ([`polytope::select_simplex`]), synthesise one gain per vertex
//! ([`controller::synthesize_vertex_gains`]) and check the robust-stability
//! certificate ([`controller::verify_certificate`]). [`sim::run`] closes the
//! loop on the interchange road.

pub mod artifacts;
pub mod config;
pub mod controller;
pub mod error;
pub mod lmi;
pub mod pipeline;
pub mod polytope;
pub mod scheduling;
pub mod sim;
pub mod vehicle;

pub use error::{Error, Result};
