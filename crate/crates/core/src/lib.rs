//! Analysis, simulation and co-design of differentially private formation
//! control networks.
//!
//! Agents run a Laplacian formation protocol over a weighted undirected
//! graph, privatizing their states with the Gaussian mechanism before each
//! broadcast. The crate
//!
//! * calibrates the privacy noise ([`privacy`]),
//! * computes Laplacian spectra ([`graph`]),
//! * simulates the protocol ([`formation`]),
//! * computes the exact steady-state error and a scalar bound ([`analysis`]),
//! * co-designs edge weights and privacy levels ([`codesign`]),
//! * reads and writes the file formats used by the command-line tool ([`io`]).

pub mod analysis;
pub mod codesign;
pub mod eigen;
pub mod error;
pub mod formation;
pub mod graph;
pub mod io;
pub mod lyapunov;
pub mod privacy;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
