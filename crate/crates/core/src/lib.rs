//! Numerical toolkit for anisotropic geometric variational problems.
//!
//! The crate provides exterior algebra on ℝⁿ, geometric / classical /
//! Q-integrands, polyhedral chains with their Gaussian images, Q-valued
//! piecewise-affine graphs, and executable checks for uniform polyconvexity,
//! Almgren-type ellipticity gaps and uniform quasiconvexity gaps.

pub mod currents;
pub mod error;
pub mod exterior;
pub mod integrands;
pub mod linalg;
pub mod lp;
pub mod polyconvexity;
pub mod qvalued;
pub mod rational_approx;
pub mod sampling;
pub mod scalar;
pub mod suite;

pub use error::{Error, Result};
pub use exterior::{KVector, MultiIndex, OrientedPlane};
pub use integrands::{ClassicalIntegrand, GeometricIntegrand, IntegrandSpec, QIntegrand};
pub use currents::{Cell, DiscreteGrassMeasure, PolyhedralChain};
pub use polyconvexity::{Decomposition, OrientationMode, UpcReport};
pub use qvalued::{AffineMultigraph, PiecewiseAffineQ, QPoint};
pub use rational_approx::{RationalDecomposition, RationalSimpleKVector};
pub use scalar::{Rational, Scalar};
