//! Z-buffered triangle rasterization with a per-pixel geometry buffer.

use super::{Camera, RenderError};
use crate::math::Vec3;
use crate::mesh_io::{Mesh, Role, TextureMap};

pub const BACKGROUND: u32 = u32::MAX;
pub const BACKGROUND_COLOR: [f32; 3] = [1.0, 1.0, 1.0];

/// Per-pixel surface record of the closest visible front face.
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub face_id: Vec<u32>,
    pub barycentric: Vec<[f32; 3]>,
    pub uv: Vec<[f32; 2]>,
    /// View-space depth; `f32::INFINITY` on background.
    pub depth: Vec<f32>,
}

impl GBuffer {
    /// All-background buffer.
    pub fn background(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            face_id: vec![BACKGROUND; n],
            barycentric: vec![[0.0; 3]; n],
            uv: vec![[0.0; 2]; n],
            depth: vec![f32::INFINITY; n],
        }
    }

    pub fn is_covered(&self, index: usize) -> bool {
        self.face_id[index] != BACKGROUND
    }

    pub fn coverage(&self) -> usize {
        self.face_id.iter().filter(|&&f| f != BACKGROUND).count()
    }

    const MAGIC: &'static [u8; 4] = b"MFGB";

    /// Little-endian dump: magic, width, height, then per pixel
    /// face id, 3 barycentrics, 2 uv, depth.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(12 + n * 28);
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for i in 0..n {
            out.extend_from_slice(&self.face_id[i].to_le_bytes());
            for b in self.barycentric[i] {
                out.extend_from_slice(&b.to_le_bytes());
            }
            for t in self.uv[i] {
                out.extend_from_slice(&t.to_le_bytes());
            }
            out.extend_from_slice(&self.depth[i].to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 12 || &bytes[..4] != Self::MAGIC {
            return None;
        }
        let word = |at: usize| -> [u8; 4] { bytes[at..at + 4].try_into().unwrap() };
        let width = u32::from_le_bytes(word(4)) as usize;
        let height = u32::from_le_bytes(word(8)) as usize;
        let n = width * height;
        if bytes.len() != 12 + n * 28 {
            return None;
        }
        let mut g = GBuffer::background(width, height);
        for i in 0..n {
            let base = 12 + i * 28;
            let f = |k: usize| f32::from_le_bytes(word(base + 4 + 4 * k));
            g.face_id[i] = u32::from_le_bytes(word(base));
            g.barycentric[i] = [f(0), f(1), f(2)];
            g.uv[i] = [f(3), f(4)];
            g.depth[i] = f(5);
        }
        Some(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: TextureMap,
    pub gbuffer: GBuffer,
    pub camera: Camera,
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: Vec3,
    bary: [f64; 3],
}

fn clip_near(poly: &[ClipVertex], near: f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(poly.len() + 2);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let a_in = a.view.z >= near;
        let b_in = b.view.z >= near;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (near - a.view.z) / (b.view.z - a.view.z);
            let mut bary = [0.0; 3];
            for k in 0..3 {
                bary[k] = a.bary[k] + (b.bary[k] - a.bary[k]) * t;
            }
            let mut view = a.view + (b.view - a.view) * t;
            view.z = near;
            out.push(ClipVertex { view, bary });
        }
    }
    out
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
    bary_over_z: [f64; 3],
}

fn edge(a: &ScreenVertex, b: &ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// `edge` evaluated from a canonical vertex order, so `edge_exact(a, b) == -edge_exact(b, a)`
/// bit for bit and triangles sharing an edge agree on which side each pixel lies.
fn edge_exact(a: &ScreenVertex, b: &ScreenVertex, px: f64, py: f64) -> f64 {
    if (a.x, a.y) <= (b.x, b.y) {
        edge(a, b, px, py)
    } else {
        -edge(b, a, px, py)
    }
}

/// Top-left fill convention for a positively oriented (y-down) triangle.
fn is_top_left(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

struct Target<'a> {
    cam: &'a Camera,
    gbuf: &'a mut GBuffer,
    bary: Vec<[f64; 3]>,
}

impl Target<'_> {
    fn draw(&mut self, face: u32, v: [ScreenVertex; 3]) {
        let [a, mut b, mut c] = v;
        let mut area = edge(&a, &b, c.x, c.y);
        if area == 0.0 {
            return;
        }
        if area < 0.0 {
            std::mem::swap(&mut b, &mut c);
            area = -area;
        }
        let (w, h) = (self.cam.width as f64, self.cam.height as f64);
        let min_x = a.x.min(b.x).min(c.x).floor().max(0.0);
        let max_x = a.x.max(b.x).max(c.x).ceil().min(w);
        let min_y = a.y.min(b.y).min(c.y).floor().max(0.0);
        let max_y = a.y.max(b.y).max(c.y).ceil().min(h);
        if min_x >= max_x || min_y >= max_y {
            return;
        }
        let tl = [is_top_left(&b, &c), is_top_left(&c, &a), is_top_left(&a, &b)];
        for py in min_y as usize..max_y as usize {
            let cy = py as f64 + 0.5;
            for px in min_x as usize..max_x as usize {
                let cx = px as f64 + 0.5;
                let ws = [
                    edge_exact(&b, &c, cx, cy),
                    edge_exact(&c, &a, cx, cy),
                    edge_exact(&a, &b, cx, cy),
                ];
                let inside = ws
                    .iter()
                    .zip(tl)
                    .all(|(&e, top_left)| e > 0.0 || (e == 0.0 && top_left));
                if !inside {
                    continue;
                }
                let l = [ws[0] / area, ws[1] / area, ws[2] / area];
                let inv_z = l[0] * a.inv_z + l[1] * b.inv_z + l[2] * c.inv_z;
                let depth = 1.0 / inv_z;
                if depth < self.cam.near || depth > self.cam.far {
                    continue;
                }
                let idx = py * self.cam.width + px;
                if depth >= self.gbuf.depth[idx] as f64 {
                    continue;
                }
                let mut bary = [0.0; 3];
                for k in 0..3 {
                    let v = (l[0] * a.bary_over_z[k] + l[1] * b.bary_over_z[k] + l[2] * c.bary_over_z[k])
                        / inv_z;
                    bary[k] = v.max(0.0);
                }
                let s: f64 = bary.iter().sum();
                for v in &mut bary {
                    *v /= s;
                }
                self.gbuf.depth[idx] = depth as f32;
                self.gbuf.face_id[idx] = face;
                self.bary[idx] = bary;
            }
        }
    }
}

/// Fills a geometry buffer for `mesh` seen through `cam`. Back faces are culled.
pub fn rasterize_gbuffer(mesh: &Mesh, cam: &Camera) -> GBuffer {
    let mut gbuf = GBuffer::background(cam.width, cam.height);
    let frame = cam.frame();
    let mut target = Target {
        cam,
        bary: vec![[0.0; 3]; cam.width * cam.height],
        gbuf: &mut gbuf,
    };
    for face in 0..mesh.faces.len() {
        let p = mesh.face_positions(face).map(Vec3::from_f32);
        let normal = (p[1] - p[0]).cross(p[2] - p[0]);
        if normal.dot(cam.eye - p[0]) <= 0.0 {
            continue;
        }
        let poly: Vec<ClipVertex> = (0..3)
            .map(|k| {
                let mut bary = [0.0; 3];
                bary[k] = 1.0;
                ClipVertex {
                    view: cam.to_view(&frame, p[k]),
                    bary,
                }
            })
            .collect();
        let clipped = if poly.iter().all(|v| v.view.z >= cam.near) {
            poly
        } else {
            clip_near(&poly, cam.near)
        };
        if clipped.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVertex> = clipped
            .iter()
            .map(|v| {
                let (x, y) = cam.view_to_screen(v.view);
                let inv_z = 1.0 / v.view.z;
                ScreenVertex {
                    x,
                    y,
                    inv_z,
                    bary_over_z: v.bary.map(|b| b * inv_z),
                }
            })
            .collect();
        for k in 1..screen.len() - 1 {
            target.draw(face as u32, [screen[0], screen[k], screen[k + 1]]);
        }
    }
    let bary = std::mem::take(&mut target.bary);
    for (idx, b) in bary.into_iter().enumerate() {
        let face = gbuf.face_id[idx];
        if face == BACKGROUND {
            continue;
        }
        let uvs = mesh.face_uvs(face as usize);
        let mut uv = [0f64; 2];
        for k in 0..3 {
            uv[0] += b[k] * uvs[k][0] as f64;
            uv[1] += b[k] * uvs[k][1] as f64;
        }
        gbuf.barycentric[idx] = b.map(|v| v as f32);
        gbuf.uv[idx] = [uv[0] as f32, uv[1] as f32];
    }
    gbuf
}

/// Unlit render: each covered pixel takes the diffuse texel at its interpolated UV.
pub fn rasterize(mesh: &Mesh, diffuse: &TextureMap, cam: &Camera) -> Result<RenderOutput, RenderError> {
    cam.validate()?;
    if diffuse.role() != Role::Diffuse {
        return Err(RenderError::MissingChannel(Role::Diffuse));
    }
    let gbuffer = rasterize_gbuffer(mesh, cam);
    let mut color = TextureMap::filled(cam.width, cam.height, Role::Diffuse, &BACKGROUND_COLOR);
    for idx in 0..cam.width * cam.height {
        if gbuffer.is_covered(idx) {
            let texel = diffuse.sample_nearest(gbuffer.uv[idx]);
            color.pixel_mut(idx).copy_from_slice(texel);
        }
    }
    Ok(RenderOutput {
        color,
        gbuffer,
        camera: cam.clone(),
    })
}
