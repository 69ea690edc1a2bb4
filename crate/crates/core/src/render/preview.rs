//! Cook-Torrance preview shading of a mesh with a full material map set.
//! Used only for human inspection and material-ball thumbnails.

use std::collections::BTreeMap;

use super::raster::{rasterize_gbuffer, BACKGROUND_COLOR};
use super::{Camera, RenderError};
use crate::math::{luminance, Vec3};
use crate::mesh_io::{Mesh, Role, TextureMap};

/// Anything that can hand out material maps by role.
pub trait MapSource {
    fn map(&self, role: Role) -> Option<&TextureMap>;
}

impl MapSource for BTreeMap<Role, TextureMap> {
    fn map(&self, role: Role) -> Option<&TextureMap> {
        self.get(&role)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreviewOptions {
    pub light_intensity: f64,
    pub ambient: f64,
    pub include_specular: bool,
}

impl Default for PreviewOptions {
    fn default() -> Self {
        Self {
            light_intensity: std::f64::consts::PI,
            ambient: 0.03,
            include_specular: true,
        }
    }
}

/// Linear HDR RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct PreviewImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f32; 3]>,
    pub covered: Vec<bool>,
}

impl PreviewImage {
    pub fn luminance(&self, x: usize, y: usize) -> f32 {
        luminance(self.rgb[y * self.width + x])
    }

    /// Clamped to [0, 1] for export.
    pub fn to_texture(&self) -> TextureMap {
        TextureMap::from_fn(self.width, self.height, Role::Diffuse, |x, y| {
            self.rgb[y * self.width + x]
                .iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect()
        })
    }
}

const MIN_ROUGHNESS: f64 = 0.02;

fn ggx_distribution(n_dot_h: f64, alpha: f64) -> f64 {
    let a2 = alpha * alpha;
    let d = n_dot_h * n_dot_h * (a2 - 1.0) + 1.0;
    a2 / (std::f64::consts::PI * d * d)
}

fn smith_schlick(n_dot_v: f64, n_dot_l: f64, roughness: f64) -> f64 {
    let k = (roughness + 1.0).powi(2) / 8.0;
    let g1 = |x: f64| x / (x * (1.0 - k) + k);
    g1(n_dot_v) * g1(n_dot_l)
}

fn fresnel_schlick(cos: f64, f0: Vec3) -> Vec3 {
    let w = (1.0 - cos).clamp(0.0, 1.0).powi(5);
    f0 + (Vec3::new(1.0, 1.0, 1.0) - f0) * w
}

fn texel_vec(map: &TextureMap, uv: [f32; 2]) -> Vec3 {
    let p = map.sample_nearest(uv);
    if p.len() == 3 {
        Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
    } else {
        Vec3::new(p[0] as f64, p[0] as f64, p[0] as f64)
    }
}

fn required<'a, M: MapSource + ?Sized>(maps: &'a M, role: Role) -> Result<&'a TextureMap, RenderError> {
    maps.map(role).ok_or(RenderError::MissingChannel(role))
}

/// Tangent frame of a face from its position and UV deltas.
fn tangent_frame(p: &[Vec3; 3], uv: &[[f32; 2]; 3], n: Vec3) -> (Vec3, Vec3) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let du1 = (uv[1][0] - uv[0][0]) as f64;
    let dv1 = (uv[1][1] - uv[0][1]) as f64;
    let du2 = (uv[2][0] - uv[0][0]) as f64;
    let dv2 = (uv[2][1] - uv[0][1]) as f64;
    let det = du1 * dv2 - du2 * dv1;
    let (t, b) = if det.abs() > 1e-12 {
        ((e1 * dv2 - e2 * dv1) / det, (e2 * du1 - e1 * du2) / det)
    } else {
        let helper = if n.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::Y };
        let t = helper.cross(n);
        (t, n.cross(t))
    };
    let t = (t - n * n.dot(t)).normalized();
    let handed = if n.cross(t).dot(b) < 0.0 { -1.0 } else { 1.0 };
    (t, n.cross(t) * handed)
}

/// Single directional light; `light_dir` points from the surface toward the light.
pub fn shade_preview<M: MapSource + ?Sized>(
    mesh: &Mesh,
    maps: &M,
    cam: &Camera,
    light_dir: Vec3,
    opts: &PreviewOptions,
) -> Result<PreviewImage, RenderError> {
    cam.validate()?;
    let albedo_map = maps
        .map(Role::Albedo)
        .or_else(|| maps.map(Role::Diffuse))
        .ok_or(RenderError::MissingChannel(Role::Albedo))?;
    let normal_map = required(maps, Role::Normal)?;
    let rough_map = required(maps, Role::Roughness)?;
    let metal_map = required(maps, Role::Metalness)?;

    let g = rasterize_gbuffer(mesh, cam);
    let light = light_dir.normalized();
    let n_px = cam.width * cam.height;
    let mut rgb = vec![BACKGROUND_COLOR; n_px];
    let mut covered = vec![false; n_px];
    for idx in 0..n_px {
        if !g.is_covered(idx) {
            continue;
        }
        covered[idx] = true;
        let face = g.face_id[idx] as usize;
        let b = g.barycentric[idx].map(|v| v as f64);
        let p = mesh.face_positions(face).map(Vec3::from_f32);
        let pos = p[0] * b[0] + p[1] * b[1] + p[2] * b[2];
        let face_n = (p[1] - p[0]).cross(p[2] - p[0]).normalized();
        let corners = &mesh.faces[face];
        let geo_n = if corners.iter().all(|c| c.normal.is_some()) {
            let mut n = Vec3::ZERO;
            for k in 0..3 {
                n += Vec3::from_f32(mesh.normals[corners[k].normal.unwrap() as usize]) * b[k];
            }
            n.normalized()
        } else {
            face_n
        };
        let uv = g.uv[idx];
        let (t, bt) = tangent_frame(&p, &mesh.face_uvs(face), geo_n);
        let tn = texel_vec(normal_map, uv) * 2.0 - Vec3::new(1.0, 1.0, 1.0);
        let n = (t * tn.x + bt * tn.y + geo_n * tn.z).normalized();

        let albedo = texel_vec(albedo_map, uv);
        let roughness = (texel_vec(rough_map, uv).x).max(MIN_ROUGHNESS);
        let metal = texel_vec(metal_map, uv).x;
        let v = (cam.eye - pos).normalized();
        let n_dot_l = n.dot(light).max(0.0);
        let n_dot_v = n.dot(v).max(1e-4);

        let f0 = Vec3::new(0.04, 0.04, 0.04) * (1.0 - metal) + albedo * metal;
        let mut color = Vec3::new(albedo.x, albedo.y, albedo.z) * opts.ambient;
        if n_dot_l > 0.0 {
            let h = (light + v).normalized();
            let f = fresnel_schlick(h.dot(v).max(0.0), f0);
            let kd = (Vec3::new(1.0, 1.0, 1.0) - f) * (1.0 - metal);
            let diffuse = Vec3::new(kd.x * albedo.x, kd.y * albedo.y, kd.z * albedo.z)
                / std::f64::consts::PI;
            let mut radiance = diffuse;
            if opts.include_specular {
                let alpha = roughness * roughness;
                let d = ggx_distribution(n.dot(h).max(0.0), alpha);
                let gs = smith_schlick(n_dot_v, n_dot_l, roughness);
                radiance += f * (d * gs / (4.0 * n_dot_v * n_dot_l));
            }
            color += radiance * (opts.light_intensity * n_dot_l);
        }
        rgb[idx] = [color.x as f32, color.y as f32, color.z as f32];
    }
    Ok(PreviewImage {
        width: cam.width,
        height: cam.height,
        rgb,
        covered,
    })
}
