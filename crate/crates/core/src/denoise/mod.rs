// SPDX-License-Identifier: Apache-2.0

//! Denoisers used as proximal surrogates inside the solver.

mod apss;
mod background;
mod index;
mod knn;

pub use apss::{apss_project, apss_project_positions, fit_local, ApssParams, Fit, Projection};
pub use background::{fft_background_denoise, fft_lowpass, identity_background, raised_cosine_mask};
pub use index::SpatialIndex;
pub use knn::{knn_intensity_filter, prune};
