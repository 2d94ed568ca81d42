// SPDX-License-Identifier: Apache-2.0

//! Data model: photon cubes, point clouds, background images and the sensor
//! model that ties world coordinates to the cube.

mod cloud;
mod cube;
mod irf;
mod sensor;

pub use cloud::{read_ply_rows, BackgroundImage, Point, PointCloud};
pub use cube::{CubeBuilder, Histogram, PhotonCube};
pub use irf::Irf;
pub use sensor::{bin_width_to_metres, metres_to_bin_width, LidarCoord, SensorModel, SPEED_OF_LIGHT};
