//! Constructive colorings of spheres `S^n_R` and balls `B^{n+1}_R` in which no
//! two points at Euclidean distance 1 share a color.
//!
//! The pipeline: solve the packing angle and critical shrink for `R`
//! ([`params`]), build a saturated cap packing and shrink its Voronoi cells
//! into a set with no unit distances ([`forbidden`]), cover the sphere with
//! rotated copies of that set via a greedy hypergraph cover ([`covering`]),
//! and extend sphere colorings to nested shells of a ball ([`ball`]).

pub mod ball;
pub mod covering;
pub mod error;
pub mod forbidden;
pub mod io;
pub mod params;
pub mod quadrature;
pub mod rng;
pub mod spatial;
pub mod sphere;

pub use error::{ChromaError, Result};
