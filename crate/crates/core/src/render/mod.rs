//! Software rendering: multi-view unlit renders with geometry buffers, plus
//! an optional shaded preview.

mod camera;
mod preview;
mod raster;

use thiserror::Error;

use crate::mesh_io::Role;

pub use camera::{bounding_sphere, make_camera_ring, make_top_camera, Camera, RingSpec, ViewFrame};
pub use preview::{shade_preview, MapSource, PreviewImage, PreviewOptions};
pub use raster::{rasterize, rasterize_gbuffer, GBuffer, RenderOutput, BACKGROUND, BACKGROUND_COLOR};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("mesh bounding sphere has zero radius")]
    DegenerateMesh,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("missing {0} map")]
    MissingChannel(Role),
}
