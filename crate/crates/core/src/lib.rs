//! Cluster-expansion engine for classical fluids at low activity.
//!
//! The crate enumerates the labeled-graph families behind the Mayer
//! expansion, evaluates truncated series for distribution and Ursell
//! functions, implements Ruelle's recursion with its derivative, builds
//! the radial Fourier majorant G, and evaluates the Fréchet derivatives
//! of ρ^(1) and ρ^(2) with respect to the pair potential. Every quantity
//! can be checked against a brute-force grand-canonical oracle.

pub mod cli;
pub mod config;
pub mod derivative;
pub mod error;
pub mod estimate;
pub mod graphs;
pub mod lambert;
pub mod majorant;
pub mod oracle;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod ruelle;
pub mod series;

pub use error::{Error, Result};
pub use estimate::SeriesEstimate;
pub use potential::{EnsembleParams, Interaction, PairPotential, Perturbation};

/// A point in R³.
pub type Vec3 = [f64; 3];

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Ordered particle coordinates inside the box [-L/2, L/2]³.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParticleConfig {
    pub coords: Vec<Vec3>,
}

impl ParticleConfig {
    pub fn new(coords: Vec<Vec3>, box_side: f64) -> Result<Self> {
        let half = 0.5 * box_side;
        for (i, p) in coords.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite() || c.abs() > half) {
                return Err(Error::Domain(format!(
                    "particle {i} at {p:?} lies outside the box of side {box_side}"
                )));
            }
        }
        Ok(Self { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}
