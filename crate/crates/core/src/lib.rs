//! Material identification and SVBRDF map synthesis for UV-mapped meshes that
//! carry only a diffuse texture.

pub mod estimator;
pub mod fixtures;
pub mod library;
pub mod matcher;
pub mod math;
pub mod mesh_io;
pub mod mllm;
pub mod partition;
pub mod pipeline;
pub mod render;
pub mod seg;
