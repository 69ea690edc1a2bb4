//! Per-view region masks: ingestion, a deterministic fallback segmenter,
//! overlap filtering, and Set-of-Mark annotation.

mod annotate;
mod fallback;

use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh_io::TextureMap;
use crate::render::{GBuffer, RenderOutput};

pub use annotate::{annotate_som, distance_to_boundary_sq, pole_of_inaccessibility, AnnotatedImage, Mark};
pub use fallback::{fallback_segment, FallbackParams};

#[derive(Debug, Error)]
pub enum SegError {
    #[error("mask {file} is {got:?}, render is {expected:?}")]
    ResolutionMismatch {
        file: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("no mask files for view {0}")]
    NoMasksFound(usize),
    #[error("mask io: {0}")]
    Io(#[from] std::io::Error),
    #[error("mask decode: {0}")]
    Decode(String),
}

/// Binary region of one rendered view, labelled with its on-image mark number.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub view_id: usize,
    pub label: u32,
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    pub pixel_count: usize,
    pub mean_diffuse_rgb: [f32; 3],
}

impl RegionMask {
    /// Builds a mask and its statistics from a pixel predicate over `color`'s grid.
    pub fn new(view_id: usize, label: u32, mask: Vec<bool>, color: &TextureMap) -> Self {
        assert_eq!(mask.len(), color.len_pixels(), "mask size");
        let mut sum = [0f64; 3];
        let mut count = 0usize;
        for (i, &on) in mask.iter().enumerate() {
            if on {
                let c = color.rgb(i);
                for k in 0..3 {
                    sum[k] += c[k] as f64;
                }
                count += 1;
            }
        }
        let mean = if count > 0 {
            sum.map(|s| (s / count as f64) as f32)
        } else {
            [0.0; 3]
        };
        Self {
            view_id,
            label,
            width: color.width(),
            height: color.height(),
            mask,
            pixel_count: count,
            mean_diffuse_rgb: mean,
        }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.contains(x as usize, y as usize) { 255 } else { 0 }])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<(), SegError> {
        self.to_image()
            .save(path)
            .map_err(|e| SegError::Decode(e.to_string()))
    }
}

/// Summary row for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub view_id: usize,
    pub label: u32,
    pub pixel_count: usize,
    pub mean_diffuse_rgb: [f32; 3],
}

impl From<&RegionMask> for RegionInfo {
    fn from(m: &RegionMask) -> Self {
        Self {
            view_id: m.view_id,
            label: m.label,
            pixel_count: m.pixel_count,
            mean_diffuse_rgb: m.mean_diffuse_rgb,
        }
    }
}

fn parse_mask_name(name: &str, view_id: usize) -> Option<u64> {
    let rest = name.strip_prefix("view")?;
    let (view, rest) = rest.split_once("_region")?;
    let index = rest.strip_suffix(".png")?;
    if view.parse::<usize>().ok()? != view_id {
        return None;
    }
    index.parse().ok()
}

/// Loads `view<k>_region<j>.png` masks for one view, clipped to rendered foreground.
/// Masks empty after clipping are dropped; labels are 1.. in region-number order.
pub fn load_masks(dir: &Path, view_id: usize, render: &RenderOutput) -> Result<Vec<RegionMask>, SegError> {
    let mut files: Vec<(u64, std::path::PathBuf, String)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(j) = parse_mask_name(&name, view_id) {
            files.push((j, entry.path(), name));
        }
    }
    if files.is_empty() {
        return Err(SegError::NoMasksFound(view_id));
    }
    files.sort();
    let g = &render.gbuffer;
    let mut out = Vec::new();
    for (_, path, name) in files {
        let img = image::open(&path)
            .map_err(|e| SegError::Decode(format!("{name}: {e}")))?
            .to_luma8();
        let got = (img.width() as usize, img.height() as usize);
        if got != (g.width, g.height) {
            return Err(SegError::ResolutionMismatch {
                file: name,
                expected: (g.width, g.height),
                got,
            });
        }
        let mask: Vec<bool> = img
            .pixels()
            .enumerate()
            .map(|(i, p)| p[0] >= 128 && g.is_covered(i))
            .collect();
        if mask.iter().any(|&b| b) {
            let label = out.len() as u32 + 1;
            out.push(RegionMask::new(view_id, label, mask, &render.color));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedMask {
    pub label: u32,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub masks: Vec<RegionMask>,
    /// Regions removed as dust after overlap resolution, with their remaining area.
    pub dropped: Vec<DroppedMask>,
}

/// Resolves overlaps within one view (each contested pixel goes to the smaller
/// mask), deletes regions under `min_fraction` of the foreground, and relabels
/// the survivors 1.. in their original order.
pub fn filter_masks(
    masks: &[RegionMask],
    gbuffer: &GBuffer,
    color: &TextureMap,
    min_fraction: f64,
) -> FilterOutcome {
    if masks.is_empty() {
        return FilterOutcome {
            masks: Vec::new(),
            dropped: Vec::new(),
        };
    }
    let n = masks[0].mask.len();
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by_key(|&i| (masks[i].pixel_count, masks[i].label, i));
    let mut owner = vec![usize::MAX; n];
    for &m in &order {
        for (p, &on) in masks[m].mask.iter().enumerate() {
            if on && owner[p] == usize::MAX {
                owner[p] = m;
            }
        }
    }
    let foreground = gbuffer.coverage() as f64;
    let min_area = min_fraction * foreground;
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (m, src) in masks.iter().enumerate() {
        let mask: Vec<bool> = owner.iter().map(|&o| o == m).collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 || (count as f64) < min_area {
            dropped.push(DroppedMask {
                label: src.label,
                pixel_count: count,
            });
            continue;
        }
        kept.push(RegionMask::new(src.view_id, kept.len() as u32 + 1, mask, color));
    }
    FilterOutcome {
        masks: kept,
        dropped,
    }
}
