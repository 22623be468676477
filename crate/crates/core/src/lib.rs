//! Planar patch extraction from stereo-derived point clouds.
//!
//! Patches are seeded from corresponding 2D ellipse segments, grown by a
//! Bayesian classifier that scores each candidate point with a Gamma
//! likelihood of its joint plane/boundary distance, a Weibull prior on its
//! triangulation uncertainty and a bivariate-Gaussian intensity prior, and
//! finally merged or discarded during refinement.
//!
//! The stages live in separate modules:
//!
//! 1. [`stereo`] – projection, triangulation, reconstruction uncertainty and
//!    ellipse priors.
//! 2. [`seeding`] – seed points from segment pairs, initial patch fits.
//! 3. [`growing`] – the inlier queue and the classifier/estimator loop.
//! 4. [`refinement`] – merging of coplanar neighbours, degenerate-patch removal.
//!
//! [`geometry3d`] and [`probability`] hold the numerical kernels, [`synth`]
//! generates benchmark scenes with ground truth, and [`formats`] reads and
//! writes the on-disk documents used by the command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod formats;
pub mod geometry3d;
pub mod growing;
pub mod pipeline;
pub mod probability;
pub mod refinement;
pub mod seeding;
pub mod stereo;
pub mod synth;

pub use error::{Error, Result};
pub use geometry3d::{PlanarHull, Plane, PlaneType, Vec3};
pub use growing::{GrowConfig, Patch};
pub use probability::{GammaParams, WeibullParams};
pub use seeding::SegmentPair;
pub use stereo::{EllipsePrior, ScenePoint, StereoRig};

/// Lower bound applied to squared distances before they enter a logarithm.
pub const DIST_FLOOR: f64 = 1e-12;
