// SPDX-License-Identifier: Apache-2.0

//! Multi-surface 3D reconstruction from single-photon lidar histograms.
//!
//! A scene is a set of points, each with a world position and an
//! intensity, plus a per-pixel background level. The photon counts of a
//! time-of-flight histogram cube are modelled as Poisson with a rate that
//! mixes the instrumental response placed at every point's depth with the
//! background. [`reconstruct::reconstruct`] estimates all three unknowns by
//! alternating gradient steps on the negative log-likelihood with
//! point-cloud denoisers.
//!
//! ```
//! use photon_recon::data::{Irf, SensorModel};
//! use photon_recon::reconstruct::{reconstruct, ReconConfig};
//! use photon_recon::simulate::{simulate_cube, SceneSpec, Shape, Surface};
//!
//! let sensor = SensorModel::new(16, 16, 200, Irf::gaussian(2.0, 0.5, 4.0)?, 0.01, 0.01)?;
//! let wall = Surface::new(Shape::Plane { depth: 1.2, slope_x: 0.2, slope_y: 0.0 }, 1.0);
//! let scene = SceneSpec::new(sensor, 0.0, vec![wall])?.calibrated(20.0, 10.0)?;
//! let (cube, _) = simulate_cube(&scene, 7)?;
//! let out = reconstruct(&cube, &scene.sensor, &ReconConfig::default())?;
//! assert!(!out.cloud.is_empty());
//! # Ok::<(), photon_recon::Error>(())
//! ```

pub mod data;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod kv;
pub mod likelihood;
pub mod reconstruct;
pub mod simulate;

pub use error::{Error, Result};

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/likelihood.md")]
    mod likelihood {}
    #[doc = include_str!("../../../book/src/denoisers.md")]
    mod denoisers {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
