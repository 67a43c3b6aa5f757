//! Numerical toolkit for Kolmogorov-type operators
//! `L_A = tr(A(z) D^2) + <x, B grad> - d/dt` on homogeneous Lie groups:
//! group calculus, Gaussian kernels, barrier potentials, the chain of
//! structural constants behind the invariant Harnack inequality, and an
//! explicit monotone solver used to test those inequalities empirically.

pub mod error;
pub mod par;
pub mod group;
pub mod covariance;
pub mod geometry;
pub mod fields;
pub mod kernels;
pub mod quadrature;
pub mod potentials;
pub mod constants;
pub mod solver;
pub mod experiments;
pub mod verify;

pub use error::{Error, Result};
pub use group::{BlockStructure, Point, SigmaBounds, StructureSpec};
pub use covariance::{CovariancePoly, EigenBounds};
pub use par::Exec;
