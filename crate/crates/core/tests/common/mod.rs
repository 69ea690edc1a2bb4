//! Oracles and fixture builders shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use matforge_core::estimator::dist2;
use matforge_core::library::{build_index, LibraryIndex, MaterialRecord};
use matforge_core::math::Vec3;
use matforge_core::mesh_io::{Mesh, Role, TextureMap};
use matforge_core::partition::{backproject_mask, build_occupancy};
use matforge_core::pipeline::{MatcherMode, PipelineConfig};
use matforge_core::render::{make_camera_ring, rasterize_gbuffer, Camera, RingSpec};
use matforge_core::seg::RegionMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exhaustive scan; strict `<` keeps the smallest index on ties.
pub fn brute_nn(key: &TextureMap, q: [f32; 3]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for i in 0..key.len_pixels() {
        let d = dist2(q, key.rgb(i));
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Colors on a coarse 8-level grid so that duplicates and exact ties are common.
pub fn random_key(w: usize, h: usize, r: &mut ChaCha8Rng) -> TextureMap {
    TextureMap::from_fn(w, h, Role::Diffuse, |_, _| (0..3).map(|_| r.random_range(0..8) as f32 / 7.0).collect())
}

pub fn random_map(w: usize, h: usize, role: Role, r: &mut ChaCha8Rng) -> TextureMap {
    TextureMap::from_fn(w, h, role, |_, _| {
        if role == Role::Normal {
            let (x, y): (f32, f32) = (r.random_range(-0.5..0.5), r.random_range(-0.5..0.5));
            let z = (1.0 - x * x - y * y).sqrt();
            vec![x * 0.5 + 0.5, y * 0.5 + 0.5, z * 0.5 + 0.5]
        } else {
            (0..role.channels()).map(|_| r.random::<f32>()).collect()
        }
    })
}

/// Every pixel a distinct 8-bit RGB triple (odd multiplier permutes 24-bit codes).
pub fn unique_color_image(w: usize, h: usize) -> TextureMap {
    TextureMap::from_fn(w, h, Role::Diffuse, |x, y| {
        let i = (y * w + x) as u32;
        let code = i.wrapping_mul(0x9E37_79B1) & 0x00FF_FFFF;
        vec![(code >> 16) as f32 / 255.0, ((code >> 8) & 255) as f32 / 255.0, (code & 255) as f32 / 255.0]
    })
}

/// A material with `diffuse` as key and random values for every SVBRDF role.
pub fn material_with_diffuse(id: &str, diffuse: TextureMap, seed: u64) -> MaterialRecord {
    let (w, h) = diffuse.dims();
    let mut r = rng(seed);
    let mut maps = BTreeMap::new();
    maps.insert(Role::Diffuse, diffuse);
    for role in Role::SVBRDF {
        maps.insert(role, random_map(w, h, role, &mut r));
    }
    let (major, sub) = id.split_once('_').unwrap_or((id, id));
    MaterialRecord::from_maps(id, major, sub, "test material", maps).expect("valid record")
}

pub fn index_of(records: Vec<MaterialRecord>) -> LibraryIndex {
    build_index(records).expect("unique ids")
}

/// Texel-space ground truth for back-projection: occupied texels whose surface
/// point is front-facing, inside the view frustum and unoccluded along the ray
/// from the eye (Moller-Trumbore against every triangle).
pub struct VisibilityOracle<'a> {
    mesh: &'a Mesh,
    tris: Vec<[Vec3; 3]>,
    uv_bins: Vec<Vec<usize>>,
    bins: usize,
}

impl<'a> VisibilityOracle<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let bins = 32;
        let mut uv_bins = vec![Vec::new(); bins * bins];
        for f in 0..mesh.faces.len() {
            let uv = mesh.face_uvs(f);
            let (mut lo, mut hi) = ([f32::INFINITY; 2], [f32::NEG_INFINITY; 2]);
            for p in uv {
                for k in 0..2 {
                    lo[k] = lo[k].min(p[k]);
                    hi[k] = hi[k].max(p[k]);
                }
            }
            let cell = |v: f32| ((v * bins as f32).floor().max(0.0) as usize).min(bins - 1);
            for by in cell(lo[1])..=cell(hi[1]) {
                for bx in cell(lo[0])..=cell(hi[0]) {
                    uv_bins[by * bins + bx].push(f);
                }
            }
        }
        let tris = (0..mesh.faces.len())
            .map(|f| mesh.face_positions(f).map(Vec3::from_f32))
            .collect();
        Self {
            mesh,
            tris,
            uv_bins,
            bins,
        }
    }

    /// Surface point and face under a UV coordinate, if any chart covers it.
    pub fn surface_at(&self, uv: [f64; 2]) -> Option<(usize, Vec3)> {
        let b = self.bins;
        let bx = ((uv[0] * b as f64).floor().max(0.0) as usize).min(b - 1);
        let by = ((uv[1] * b as f64).floor().max(0.0) as usize).min(b - 1);
        for &f in &self.uv_bins[by * b + bx] {
            let t = self.mesh.face_uvs(f).map(|p| [p[0] as f64, p[1] as f64]);
            let det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
            if det.abs() < 1e-14 {
                continue;
            }
            let l1 = ((uv[0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (uv[1] - t[0][1])) / det;
            let l2 = ((t[1][0] - t[0][0]) * (uv[1] - t[0][1]) - (uv[0] - t[0][0]) * (t[1][1] - t[0][1])) / det;
            let l0 = 1.0 - l1 - l2;
            if l0 >= -1e-9 && l1 >= -1e-9 && l2 >= -1e-9 {
                let p = self.tris[f];
                return Some((f, p[0] * l0 + p[1] * l1 + p[2] * l2));
            }
        }
        None
    }

    fn in_frustum(cam: &Camera, p: Vec3) -> bool {
        let fwd = (cam.target - cam.eye).normalized();
        let right = fwd.cross(cam.up).normalized();
        let up = right.cross(fwd);
        let d = p - cam.eye;
        let z = d.dot(fwd);
        if z <= cam.near || z >= cam.far {
            return false;
        }
        let t = (cam.fov_y / 2.0).tan();
        let aspect = cam.width as f64 / cam.height as f64;
        (d.dot(right) / (z * t * aspect)).abs() <= 1.0 && (d.dot(up) / (z * t)).abs() <= 1.0
    }

    fn occluded(&self, eye: Vec3, p: Vec3, face: usize) -> bool {
        let dir = p - eye;
        for (f, tri) in self.tris.iter().enumerate() {
            if f == face {
                continue;
            }
            let e1 = tri[1] - tri[0];
            let e2 = tri[2] - tri[0];
            let h = dir.cross(e2);
            let a = e1.dot(h);
            if a.abs() < 1e-12 {
                continue;
            }
            let s = eye - tri[0];
            let u = s.dot(h) / a;
            if !(0.0..=1.0).contains(&u) {
                continue;
            }
            let q = s.cross(e1);
            let v = dir.dot(q) / a;
            if v < 0.0 || u + v > 1.0 {
                continue;
            }
            let t = e2.dot(q) / a;
            if t > 1e-9 && t < 1.0 - 1e-6 {
                return true;
            }
        }
        false
    }

    pub fn visible(&self, cam: &Camera, uv: [f64; 2]) -> bool {
        let Some((f, p)) = self.surface_at(uv) else {
            return false;
        };
        let t = self.tris[f];
        let n = (t[1] - t[0]).cross(t[2] - t[0]);
        n.dot(cam.eye - p) > 0.0 && Self::in_frustum(cam, p) && !self.occluded(cam.eye, p, f)
    }
}

/// Renders one view, back-projects the full-foreground mask into a `tex`² atlas and
/// scores it against the visibility oracle inside the UV rectangle `[lo, hi)`.
/// Returns (IoU, ground-truth texel count).
pub fn backprojection_iou(mesh: &Mesh, res: usize, tex: usize, lo: [f64; 2], hi: [f64; 2]) -> (f64, usize) {
    let cam = make_camera_ring(
        mesh,
        &RingSpec {
            views: 1,
            width: res,
            height: res,
            ..RingSpec::default()
        },
    )
    .expect("camera")
    .remove(0);
    let g = rasterize_gbuffer(mesh, &cam);
    let color = TextureMap::filled(res, res, Role::Diffuse, &[0.5; 3]);
    let mask = RegionMask::new(0, 1, (0..res * res).map(|i| g.is_covered(i)).collect(), &color);
    let occ = build_occupancy(mesh, tex, tex);
    let uv = backproject_mask(&mask, &g, &occ);
    let oracle = VisibilityOracle::new(mesh);
    let (mut inter, mut union, mut truth) = (0usize, 0usize, 0usize);
    for y in 0..tex {
        for x in 0..tex {
            let c = [(x as f64 + 0.5) / tex as f64, 1.0 - (y as f64 + 0.5) / tex as f64];
            if c[0] < lo[0] || c[0] >= hi[0] || c[1] < lo[1] || c[1] >= hi[1] {
                continue;
            }
            let gt = oracle.visible(&cam, c);
            let got = uv.texels[y * tex + x];
            truth += gt as usize;
            inter += (gt && got) as usize;
            union += (gt || got) as usize;
        }
    }
    (if union == 0 { 1.0 } else { inter as f64 / union as f64 }, truth)
}

/// Writes fixtures and toy library into `dir` and returns an offline config for `name`.
pub fn demo_config(dir: &Path, name: &str) -> PipelineConfig {
    if !dir.join("library").exists() {
        matforge_core::fixtures::write_demo(dir, 128, 32).expect("demo written");
    }
    let mut cfg = PipelineConfig::load(&dir.join(format!("{name}.json"))).expect("demo config");
    cfg.resolution = 256;
    cfg.matcher = MatcherMode::Offline;
    cfg
}

/// Relative path → bytes for every file under `root`.
pub fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_owned()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("readable dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
