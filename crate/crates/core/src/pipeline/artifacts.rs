//! On-disk layout of stage outputs and the readers later stages use.
//!
//! ```text
//! render/    view<k>.png (16-bit color), view<k>.gbuf, cameras.json
//! masks/     view<k>_region<j>.png, regions.json
//! annotated/ view<k>.png, view<k>.marks.json
//! match/     matches.json, report.json, object_hint.txt, session.jsonl
//! uv/        view<k>_region<j>.uvm
//! partition/ merged.{png,json}, partition.{png,json}
//! estimate/  <role>.exr
//! export/    <stem>.obj, <stem>.mtl, <stem>_<role>.png, <stem>.manifest.json
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::PipelineError;
use crate::mesh_io::{load_texture, Role, TextureMap};
use crate::partition::UVMask;
use crate::render::{Camera, GBuffer, RenderOutput};
use crate::seg::{load_masks, Mark, RegionMask};

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_owned() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn render_color(&self, view: usize) -> PathBuf {
        self.dir("render").join(format!("view{view}.png"))
    }

    pub fn render_gbuffer(&self, view: usize) -> PathBuf {
        self.dir("render").join(format!("view{view}.gbuf"))
    }

    pub fn cameras(&self) -> PathBuf {
        self.dir("render").join("cameras.json")
    }

    pub fn masks(&self) -> PathBuf {
        self.dir("masks")
    }

    pub fn annotated(&self, view: usize) -> PathBuf {
        self.dir("annotated").join(format!("view{view}.png"))
    }

    pub fn marks(&self, view: usize) -> PathBuf {
        self.dir("annotated").join(format!("view{view}.marks.json"))
    }

    pub fn matches(&self) -> PathBuf {
        self.dir("match").join("matches.json")
    }

    pub fn report(&self) -> PathBuf {
        self.dir("match").join("report.json")
    }

    pub fn object_hint(&self) -> PathBuf {
        self.dir("match").join("object_hint.txt")
    }

    pub fn uv_mask(&self, view: usize, label: u32) -> PathBuf {
        self.dir("uv").join(format!("view{view}_region{label}.uvm"))
    }

    pub fn estimate_map(&self, role: Role) -> PathBuf {
        self.dir("estimate").join(format!("{role}.exr"))
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run.json")
    }
}

/// Errors unless `path` exists, naming the stage that needs it.
pub fn require(stage: &str, path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingPriorArtifact {
            stage: stage.to_owned(),
            path: path.to_owned(),
        })
    }
}

/// Empties (or creates) a stage directory so stale files never leak into later stages.
pub fn fresh_dir(path: &Path) -> std::io::Result<()> {
    if path.exists() {
        std::fs::remove_dir_all(path)?;
    }
    std::fs::create_dir_all(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text)
}

pub fn read_json<T: DeserializeOwned>(stage: &str, path: &Path) -> Result<T, PipelineError> {
    require(stage, path)?;
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::stage(stage, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::stage(stage, format!("{}: {e}", path.display())))
}

pub fn read_cameras(stage: &str, layout: &Layout) -> Result<Vec<Camera>, PipelineError> {
    read_json(stage, &layout.cameras())
}

pub fn read_render(stage: &str, layout: &Layout, view: usize, camera: &Camera) -> Result<RenderOutput, PipelineError> {
    let color_path = layout.render_color(view);
    let gbuf_path = layout.render_gbuffer(view);
    require(stage, &color_path)?;
    require(stage, &gbuf_path)?;
    let color = load_texture(&color_path, Role::Diffuse).map_err(|e| PipelineError::stage(stage, e))?;
    let bytes = std::fs::read(&gbuf_path).map_err(|e| PipelineError::stage(stage, e))?;
    let gbuffer = GBuffer::from_bytes(&bytes)
        .ok_or_else(|| PipelineError::stage(stage, format!("{} is not a G-buffer dump", gbuf_path.display())))?;
    if gbuffer.width != color.width() || gbuffer.height != color.height() {
        return Err(PipelineError::stage(stage, format!("view {view}: color and G-buffer sizes differ")));
    }
    Ok(RenderOutput {
        color,
        gbuffer,
        camera: camera.clone(),
    })
}

/// Filtered masks of one view; a view with no mask files yields none.
pub fn read_masks(stage: &str, layout: &Layout, view: usize, render: &RenderOutput) -> Result<Vec<RegionMask>, PipelineError> {
    require(stage, &layout.masks())?;
    match load_masks(&layout.masks(), view, render) {
        Ok(m) => Ok(m),
        Err(crate::seg::SegError::NoMasksFound(_)) => Ok(Vec::new()),
        Err(e) => Err(PipelineError::stage(stage, e)),
    }
}

pub fn read_marks(stage: &str, layout: &Layout, view: usize) -> Result<Vec<Mark>, PipelineError> {
    read_json(stage, &layout.marks(view))
}

const UV_MAGIC: &[u8; 4] = b"MFUV";

/// Little-endian: magic, width, height, view, label, count, then `count`
/// (texel index, depth) pairs in ascending texel order.
pub fn encode_uv_mask(m: &UVMask) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + m.texel_count * 8);
    out.extend_from_slice(UV_MAGIC);
    for v in [m.width as u32, m.height as u32, m.view_id as u32, m.label, m.texel_count as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (t, _) in m.texels.iter().enumerate().filter(|(_, &on)| on) {
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&m.depth[t].to_le_bytes());
    }
    out
}

pub fn decode_uv_mask(bytes: &[u8]) -> Option<UVMask> {
    let word = |i: usize| -> Option<u32> { Some(u32::from_le_bytes(bytes.get(i..i + 4)?.try_into().ok()?)) };
    if bytes.get(..4)? != UV_MAGIC {
        return None;
    }
    let (w, h) = (word(4)? as usize, word(8)? as usize);
    let (view, label, count) = (word(12)? as usize, word(16)?, word(20)? as usize);
    if bytes.len() != 24 + count * 8 {
        return None;
    }
    let mut m = UVMask::empty(view, label, w, h);
    for k in 0..count {
        let t = word(24 + k * 8)? as usize;
        let d = f32::from_le_bytes(bytes[28 + k * 8..32 + k * 8].try_into().ok()?);
        *m.texels.get_mut(t)? = true;
        m.depth[t] = d;
    }
    m.texel_count = count;
    Some(m)
}

pub fn read_uv_mask(stage: &str, layout: &Layout, view: usize, label: u32) -> Result<UVMask, PipelineError> {
    let path = layout.uv_mask(view, label);
    require(stage, &path)?;
    let bytes = std::fs::read(&path).map_err(|e| PipelineError::stage(stage, e))?;
    decode_uv_mask(&bytes).ok_or_else(|| PipelineError::stage(stage, format!("{} is not a UV mask", path.display())))
}

/// Normalized depth (near = white) and UV images for inspecting a G-buffer.
pub fn gbuffer_debug_maps(g: &GBuffer) -> (TextureMap, TextureMap) {
    let covered = |i: usize| g.face_id[i] != crate::render::BACKGROUND;
    let (lo, hi) = (0..g.depth.len())
        .filter(|&i| covered(i))
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), i| (lo.min(g.depth[i]), hi.max(g.depth[i])));
    let span = (hi - lo).max(1e-6);
    let depth = TextureMap::from_fn(g.width, g.height, Role::Height, |x, y| {
        let i = y * g.width + x;
        vec![if covered(i) { 1.0 - 0.9 * (g.depth[i] - lo) / span } else { 0.0 }]
    });
    let uv = TextureMap::from_fn(g.width, g.height, Role::Diffuse, |x, y| {
        let i = y * g.width + x;
        if covered(i) {
            vec![g.uv[i][0].clamp(0.0, 1.0), g.uv[i][1].clamp(0.0, 1.0), 1.0]
        } else {
            vec![0.0; 3]
        }
    });
    (depth, uv)
}
