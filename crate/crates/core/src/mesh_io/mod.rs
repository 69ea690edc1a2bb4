//! Mesh and texture ingestion, and export of the final asset bundle.

mod bundle;
mod obj;
mod texture;

pub use bundle::{export_bundle, BundleError, BundleManifest};
pub use obj::{parse_obj, wrap_uv, write_obj, Corner, Mesh, ObjError};
pub use texture::{
    decode_png, load_texture, quantize16, quantize8, texel_center_uv, uv_to_texel, BitDepth, Role,
    TextureError, TextureMap,
};
