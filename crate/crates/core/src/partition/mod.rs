//! UV-space partitioning: which library material owns each texel of the atlas.

mod io;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::mesh_io::{texel_center_uv, uv_to_texel, Mesh, TextureMap};
use crate::render::GBuffer;
use crate::seg::RegionMask;

pub use io::{palette_color, read_partition, write_partition, PartitionLegend};

pub const UNOCCUPIED: u32 = u32::MAX;
pub const UNASSIGNED: u32 = u32::MAX - 1;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("no texel has an assigned material")]
    NoAssignedRegions,
    #[error("resolution mismatch: expected {expected:?}, got {got:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("partition image: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Texels covered by the mesh's UV charts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occupancy {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl Occupancy {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_occupied(&self, index: usize) -> bool {
        self.cells[index]
    }
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Texels whose centre lies inside (or on the edge of) some UV triangle.
pub fn uv_footprint(mesh: &Mesh, width: usize, height: usize) -> Occupancy {
    let mut cells = vec![false; width * height];
    for f in 0..mesh.faces.len() {
        let t = mesh.face_uvs(f).map(|uv| [uv[0] as f64, uv[1] as f64]);
        let area = edge(t[0], t[1], t[2]);
        if area == 0.0 {
            continue;
        }
        let umin = t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let umax = t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let vmin = t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let vmax = t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = ((umin * width as f64 - 0.5).floor().max(0.0)) as usize;
        let x1 = ((umax * width as f64 - 0.5).ceil().max(0.0) as usize).min(width - 1);
        let y0 = (((1.0 - vmax) * height as f64 - 0.5).floor().max(0.0)) as usize;
        let y1 = (((1.0 - vmin) * height as f64 - 0.5).ceil().max(0.0) as usize).min(height - 1);
        let eps = 1e-9 * area.abs();
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = texel_center_uv(x, y, width, height);
                let w0 = edge(t[1], t[2], c) * area.signum();
                let w1 = edge(t[2], t[0], c) * area.signum();
                let w2 = edge(t[0], t[1], c) * area.signum();
                if w0 >= -eps && w1 >= -eps && w2 >= -eps {
                    cells[y * width + x] = true;
                }
            }
        }
    }
    Occupancy { width, height, cells }
}

/// 8-neighbourhood dilation repeated `radius` times.
fn dilate(cells: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    let mut cur = cells.to_vec();
    for _ in 0..radius {
        let prev = cur.clone();
        for y in 0..height {
            for x in 0..width {
                if prev[y * width + x] {
                    continue;
                }
                let hit = (y.saturating_sub(1)..=(y + 1).min(height - 1))
                    .any(|ny| (x.saturating_sub(1)..=(x + 1).min(width - 1)).any(|nx| prev[ny * width + nx]));
                cur[y * width + x] = hit;
            }
        }
    }
    cur
}

/// UV footprint of the mesh with a `dilation`-texel band closing seam cracks.
pub fn build_occupancy_with(mesh: &Mesh, width: usize, height: usize, dilation: usize) -> Occupancy {
    let raw = uv_footprint(mesh, width, height);
    Occupancy {
        width,
        height,
        cells: dilate(&raw.cells, width, height, dilation),
    }
}

pub fn build_occupancy(mesh: &Mesh, width: usize, height: usize) -> Occupancy {
    build_occupancy_with(mesh, width, height, 1)
}

/// One view-region projected into texture space.
#[derive(Debug, Clone, PartialEq)]
pub struct UVMask {
    pub view_id: usize,
    pub label: u32,
    pub width: usize,
    pub height: usize,
    pub texels: Vec<bool>,
    /// Smallest camera depth that reached each texel; infinite where unset.
    pub depth: Vec<f32>,
    pub texel_count: usize,
}

impl UVMask {
    pub fn empty(view_id: usize, label: u32, width: usize, height: usize) -> Self {
        Self {
            view_id,
            label,
            width,
            height,
            texels: vec![false; width * height],
            depth: vec![f32::INFINITY; width * height],
            texel_count: 0,
        }
    }

    pub fn iou(&self, other: &UVMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.texels.iter().zip(&other.texels) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Largest texel extent of a pixel-triangle spanning two or more faces that is
/// still treated as one continuous chart.
const MAX_CROSS_FACE_SPAN: f64 = 8.0;

/// Fills texels whose centre lies in the UV triangle `t` (texel coordinates),
/// interpolating depth. Only occupied texels are touched.
fn fill_uv_triangle(out: &mut UVMask, occupancy: &Occupancy, t: [[f64; 2]; 3], d: [f32; 3]) {
    let area = edge(t[0], t[1], t[2]);
    if area.abs() < 1e-12 {
        return;
    }
    let (w, h) = (out.width, out.height);
    let lo = |k: usize| t.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
    let hi = |k: usize| t.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
    let x0 = (lo(0) - 0.5).ceil().max(0.0) as usize;
    let y0 = (lo(1) - 0.5).ceil().max(0.0) as usize;
    let x1 = ((hi(0) - 0.5).floor().min(w as f64 - 1.0)).max(-1.0);
    let y1 = ((hi(1) - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let eps = 1e-9 * area.abs();
    for y in y0..=y1 as usize {
        for x in x0..=x1 as usize {
            let c = [x as f64 + 0.5, y as f64 + 0.5];
            let l0 = edge(t[1], t[2], c) / area;
            let l1 = edge(t[2], t[0], c) / area;
            let l2 = edge(t[0], t[1], c) / area;
            let idx = y * w + x;
            if l0 * area.abs() >= -eps && l1 * area.abs() >= -eps && l2 * area.abs() >= -eps && occupancy.cells[idx] {
                let z = (l0 * d[0] as f64 + l1 * d[1] as f64 + l2 * d[2] as f64) as f32;
                out.texels[idx] = true;
                out.depth[idx] = out.depth[idx].min(z);
            }
        }
    }
}

/// Texels hit by the visible surface under each mask pixel, then one dilation
/// step restricted to occupied texels.
///
/// Surfaces seen at grazing angles cover more texels than pixels, so each pair
/// of screen triangles in a 2x2 block of masked pixels is also rasterized in UV
/// space when its corners lie on one continuous chart (same face, or a UV
/// extent of at most `MAX_CROSS_FACE_SPAN` texels).
pub fn backproject_mask(mask: &RegionMask, gbuffer: &GBuffer, occupancy: &Occupancy) -> UVMask {
    assert_eq!(mask.mask.len(), gbuffer.width * gbuffer.height, "mask and gbuffer sizes");
    let (w, h) = (occupancy.width, occupancy.height);
    let mut out = UVMask::empty(mask.view_id, mask.label, w, h);
    let live = |i: usize| mask.mask[i] && gbuffer.is_covered(i);
    for i in (0..mask.mask.len()).filter(|&i| live(i)) {
        let (x, y) = uv_to_texel(gbuffer.uv[i], w, h);
        let t = y * w + x;
        out.texels[t] = true;
        out.depth[t] = out.depth[t].min(gbuffer.depth[i]);
    }
    let texel_pos = |i: usize| {
        let uv = gbuffer.uv[i];
        [uv[0] as f64 * w as f64, (1.0 - uv[1] as f64) * h as f64]
    };
    let gw = gbuffer.width;
    for py in 0..gbuffer.height.saturating_sub(1) {
        for px in 0..gw.saturating_sub(1) {
            let q = [py * gw + px, py * gw + px + 1, (py + 1) * gw + px, (py + 1) * gw + px + 1];
            for tri in [[q[0], q[1], q[2]], [q[1], q[3], q[2]]] {
                if !tri.iter().all(|&i| live(i)) {
                    continue;
                }
                let t = tri.map(texel_pos);
                let same_face = tri.iter().all(|&i| gbuffer.face_id[i] == gbuffer.face_id[tri[0]]);
                if !same_face {
                    let span = (0..2)
                        .map(|k| {
                            let lo = t.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
                            let hi = t.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
                            hi - lo
                        })
                        .fold(0.0, f64::max);
                    if span > MAX_CROSS_FACE_SPAN {
                        continue;
                    }
                }
                fill_uv_triangle(&mut out, occupancy, t, tri.map(|i| gbuffer.depth[i]));
            }
        }
    }
    let seeds = out.texels.clone();
    let seed_depth = out.depth.clone();
    for y in 0..h {
        for x in 0..w {
            let t = y * w + x;
            if seeds[t] || !occupancy.cells[t] {
                continue;
            }
            let mut best = f32::INFINITY;
            let mut hit = false;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let n = ny * w + nx;
                    if seeds[n] {
                        hit = true;
                        best = best.min(seed_depth[n]);
                    }
                }
            }
            if hit {
                out.texels[t] = true;
                out.depth[t] = best;
            }
        }
    }
    out.texel_count = out.texels.iter().filter(|&&b| b).count();
    out
}

/// Texel-level material assignment over the atlas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionMap {
    pub width: usize,
    pub height: usize,
    /// Index into `materials`, or `UNOCCUPIED` / `UNASSIGNED`.
    pub cells: Vec<u32>,
    /// Material ids, sorted.
    pub materials: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell<'a> {
    Unoccupied,
    Unassigned,
    Material(&'a str),
}

impl PartitionMap {
    /// All occupied texels unassigned.
    pub fn unassigned(occupancy: &Occupancy) -> Self {
        Self {
            width: occupancy.width,
            height: occupancy.height,
            cells: occupancy
                .cells
                .iter()
                .map(|&o| if o { UNASSIGNED } else { UNOCCUPIED })
                .collect(),
            materials: Vec::new(),
        }
    }

    /// Fully assigned map with a single material on every texel.
    pub fn uniform(width: usize, height: usize, material: &str) -> Self {
        Self {
            width,
            height,
            cells: vec![0; width * height],
            materials: vec![material.to_owned()],
        }
    }

    pub fn cell(&self, index: usize) -> Cell<'_> {
        match self.cells[index] {
            UNOCCUPIED => Cell::Unoccupied,
            UNASSIGNED => Cell::Unassigned,
            k => Cell::Material(&self.materials[k as usize]),
        }
    }

    pub fn material_at(&self, index: usize) -> Option<&str> {
        match self.cell(index) {
            Cell::Material(m) => Some(m),
            _ => None,
        }
    }

    pub fn unassigned_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == UNASSIGNED).count()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != UNOCCUPIED).count()
    }

    /// Texels per material id.
    pub fn material_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts: BTreeMap<&str, usize> = self.materials.iter().map(|m| (m.as_str(), 0)).collect();
        for &c in &self.cells {
            if c < UNASSIGNED {
                *counts.get_mut(self.materials[c as usize].as_str()).expect("legend entry") += 1;
            }
        }
        counts
    }

    /// Linear texel indices assigned to `material`.
    pub fn texels_of(&self, material: &str) -> Vec<usize> {
        let Some(k) = self.materials.iter().position(|m| m == material) else {
            return Vec::new();
        };
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == k as u32)
            .map(|(i, _)| i)
            .collect()
    }

    /// Drops legend entries no texel uses and reindexes.
    pub fn compact(mut self) -> Self {
        let used: Vec<bool> = {
            let mut u = vec![false; self.materials.len()];
            for &c in &self.cells {
                if c < UNASSIGNED {
                    u[c as usize] = true;
                }
            }
            u
        };
        let mut remap = vec![u32::MAX; self.materials.len()];
        let mut kept = Vec::new();
        for (k, m) in self.materials.iter().enumerate() {
            if used[k] {
                remap[k] = kept.len() as u32;
                kept.push(m.clone());
            }
        }
        for c in &mut self.cells {
            if *c < UNASSIGNED {
                *c = remap[*c as usize];
            }
        }
        self.materials = kept;
        self
    }
}

/// Per texel: the material with the most covering view-regions; ties go to
/// the one seen at the smallest depth, then to the smaller id. Texels no mask
/// reaches stay unassigned. Invariant to input order.
pub fn merge_views(labeled: &[(UVMask, String)], occupancy: &Occupancy) -> PartitionMap {
    let mut materials: Vec<String> = labeled.iter().map(|(_, m)| m.clone()).collect();
    materials.sort();
    materials.dedup();
    let mat_index = |m: &str| materials.binary_search_by(|x| x.as_str().cmp(m)).expect("material listed") as u32;
    let ids: Vec<u32> = labeled.iter().map(|(_, m)| mat_index(m)).collect();
    let (w, h) = (occupancy.width, occupancy.height);
    for (mask, _) in labeled {
        assert_eq!((mask.width, mask.height), (w, h), "uv mask resolution");
    }
    let mut cells = vec![UNOCCUPIED; w * h];
    cells.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut votes: Vec<(u32, usize, f32)> = Vec::new();
        for (x, cell) in row.iter_mut().enumerate() {
            let t = y * w + x;
            if !occupancy.cells[t] {
                continue;
            }
            votes.clear();
            for ((mask, _), &id) in labeled.iter().zip(&ids) {
                if !mask.texels[t] {
                    continue;
                }
                match votes.iter_mut().find(|v| v.0 == id) {
                    Some(v) => {
                        v.1 += 1;
                        v.2 = v.2.min(mask.depth[t]);
                    }
                    None => votes.push((id, 1, mask.depth[t])),
                }
            }
            *cell = votes
                .iter()
                .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
                .map_or(UNASSIGNED, |v| v.0);
        }
    });
    PartitionMap {
        width: w,
        height: h,
        cells,
        materials,
    }
    .compact()
}

/// Assigns every unassigned occupied texel to the material whose mean diffuse
/// color over its assigned texels is nearest; ties go to the smaller id.
pub fn refine_missing(part: &PartitionMap, diffuse: &TextureMap) -> Result<PartitionMap, PartitionError> {
    if diffuse.dims() != (part.width, part.height) {
        return Err(PartitionError::ResolutionMismatch {
            expected: (part.width, part.height),
            got: diffuse.dims(),
        });
    }
    let k = part.materials.len();
    let mut sums = vec![[0f64; 3]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in part.cells.iter().enumerate() {
        if c < UNASSIGNED {
            let rgb = diffuse.rgb(i);
            for ch in 0..3 {
                sums[c as usize][ch] += rgb[ch] as f64;
            }
            counts[c as usize] += 1;
        }
    }
    let means: Vec<Option<[f64; 3]>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (n > 0).then(|| s.map(|v| v / n as f64)))
        .collect();
    if means.iter().all(Option::is_none) {
        return Err(PartitionError::NoAssignedRegions);
    }
    let mut out = part.clone();
    let w = part.width;
    out.cells.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, cell) in row.iter_mut().enumerate() {
            if *cell != UNASSIGNED {
                continue;
            }
            let rgb = diffuse.rgb(y * w + x);
            let mut best = (f64::INFINITY, 0u32);
            // Legend is sorted, so strict `<` keeps the smallest id on ties.
            for (m, mean) in means.iter().enumerate() {
                if let Some(mean) = mean {
                    let d: f64 = (0..3).map(|ch| (rgb[ch] as f64 - mean[ch]).powi(2)).sum();
                    if d < best.0 {
                        best = (d, m as u32);
                    }
                }
            }
            *cell = best.1;
        }
    });
    Ok(out)
}
