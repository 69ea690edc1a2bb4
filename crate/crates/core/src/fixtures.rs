//! Procedural meshes and textures bundled for tests, demos and smoke runs.

use std::path::{Path, PathBuf};

use crate::library::{write_toy_library, LibraryError};
use crate::pipeline::PipelineConfig;

use crate::mesh_io::{write_obj, BitDepth, Corner, Mesh, Role, TextureError, TextureMap};

fn push_quad(mesh: &mut Mesh, corners: [[f32; 3]; 4], uv: [[f32; 2]; 4]) {
    let base_p = mesh.positions.len() as u32;
    let base_t = mesh.uvs.len() as u32;
    mesh.positions.extend_from_slice(&corners);
    mesh.uvs.extend_from_slice(&uv);
    let c = |k: u32| Corner {
        position: base_p + k,
        uv: base_t + k,
        normal: None,
    };
    mesh.faces.push([c(0), c(1), c(2)]);
    mesh.faces.push([c(0), c(2), c(3)]);
}

/// Square in the z = 0 plane spanning `[-half, half]^2`, facing +z, UVs over the full atlas.
pub fn quad_mesh(half: f32) -> Mesh {
    let mut mesh = Mesh::default();
    push_quad(
        &mut mesh,
        [[-half, -half, 0.0], [half, -half, 0.0], [half, half, 0.0], [-half, half, 0.0]],
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
    );
    mesh
}

/// UV cell of each cube face in a 3x2 atlas, inset by a small gutter.
pub const CUBE_FACES: [&str; 6] = ["+x", "-x", "+y", "-y", "+z", "-z"];

pub fn cube_face_cell(face: usize) -> ([f32; 2], [f32; 2]) {
    let col = (face % 3) as f32;
    let row = (face / 3) as f32;
    let gutter = 0.02;
    let u0 = col / 3.0 + gutter;
    let u1 = (col + 1.0) / 3.0 - gutter;
    let v1 = 1.0 - row / 2.0 - gutter;
    let v0 = 1.0 - (row + 1.0) / 2.0 + gutter;
    ([u0, v0], [u1, v1])
}

/// Axis-aligned cube `[-1, 1]^3`, outward counter-clockwise winding, one atlas cell per face.
pub fn cube_mesh() -> Mesh {
    let faces: [[[f32; 3]; 4]; 6] = [
        [[1., -1., 1.], [1., -1., -1.], [1., 1., -1.], [1., 1., 1.]],
        [[-1., -1., -1.], [-1., -1., 1.], [-1., 1., 1.], [-1., 1., -1.]],
        [[-1., 1., 1.], [1., 1., 1.], [1., 1., -1.], [-1., 1., -1.]],
        [[-1., -1., -1.], [1., -1., -1.], [1., -1., 1.], [-1., -1., 1.]],
        [[-1., -1., 1.], [1., -1., 1.], [1., 1., 1.], [-1., 1., 1.]],
        [[1., -1., -1.], [-1., -1., -1.], [-1., 1., -1.], [1., 1., -1.]],
    ];
    let mut mesh = Mesh::default();
    for (k, corners) in faces.iter().enumerate() {
        let (lo, hi) = cube_face_cell(k);
        push_quad(
            &mut mesh,
            *corners,
            [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]],
        );
    }
    mesh
}

/// Unit UV sphere with per-vertex normals. `u = 0.5` faces +z.
pub fn uv_sphere(segments: usize, rings: usize) -> Mesh {
    let mut mesh = Mesh::default();
    for i in 0..=rings {
        let theta = std::f32::consts::PI * i as f32 / rings as f32;
        for j in 0..=segments {
            let u = j as f32 / segments as f32;
            let phi = std::f32::consts::TAU * (u - 0.5);
            let p = [theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos()];
            mesh.positions.push(p);
            mesh.normals.push(p);
            mesh.uvs.push([u, 1.0 - i as f32 / rings as f32]);
        }
    }
    let idx = |i: usize, j: usize| (i * (segments + 1) + j) as u32;
    let c = |k: u32| Corner {
        position: k,
        uv: k,
        normal: Some(k),
    };
    for i in 0..rings {
        for j in 0..segments {
            let tl = idx(i, j);
            let tr = idx(i, j + 1);
            let bl = idx(i + 1, j);
            let br = idx(i + 1, j + 1);
            if i + 1 < rings {
                mesh.faces.push([c(bl), c(br), c(tr)]);
            }
            if i > 0 {
                mesh.faces.push([c(bl), c(tr), c(tl)]);
            }
        }
    }
    mesh
}

/// Texel-level checkerboard alternating `a` and `b`.
pub fn checker(width: usize, height: usize, a: [f32; 3], b: [f32; 3]) -> TextureMap {
    TextureMap::from_fn(width, height, Role::Diffuse, |x, y| {
        if (x + y) % 2 == 0 {
            a.to_vec()
        } else {
            b.to_vec()
        }
    })
}

/// Small deterministic hash noise in [0, 1).
pub(crate) fn hash_noise(x: usize, y: usize, seed: u32) -> f32 {
    let mut h = (x as u32).wrapping_mul(0x27d4_eb2d) ^ (y as u32).wrapping_mul(0x1656_67b1) ^ seed.wrapping_mul(0x9e37_79b9);
    h ^= h >> 15;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    (h & 0xffff) as f32 / 65536.0
}

/// Cube diffuse atlas: top and bottom faces gold, the four sides wood-like.
pub fn cube_diffuse(size: usize) -> TextureMap {
    TextureMap::from_fn(size, size, Role::Diffuse, |x, y| {
        let u = (x as f32 + 0.5) / size as f32;
        let v = 1.0 - (y as f32 + 0.5) / size as f32;
        let col = ((u * 3.0) as usize).min(2);
        let row = (((1.0 - v) * 2.0) as usize).min(1);
        let face = row * 3 + col;
        let n = hash_noise(x, y, 7) * 0.06;
        if face == 2 || face == 3 {
            vec![0.82 + n, 0.68 + n, 0.22 + n]
        } else {
            let grain = 0.05 * ((y as f32 * 0.9).sin() + 1.0);
            vec![0.62 + grain + n, 0.46 + grain + n, 0.28 + n]
        }
    })
}

/// Sphere diffuse: upper hemisphere red plastic, lower hemisphere blue plastic.
pub fn sphere_diffuse(size: usize) -> TextureMap {
    TextureMap::from_fn(size, size, Role::Diffuse, |x, y| {
        let n = hash_noise(x, y, 11) * 0.04;
        if y < size / 2 {
            vec![0.78 + n, 0.12 + n, 0.1 + n]
        } else {
            vec![0.12 + n, 0.2 + n, 0.78 + n]
        }
    })
}

/// Writes `cube.obj`, `cube_diffuse.png`, `sphere.obj` and `sphere_diffuse.png` into `dir`.
pub fn write_mesh_fixtures(dir: &Path, tex_size: usize) -> Result<(), TextureError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("cube.obj"), write_obj(&cube_mesh(), None))?;
    cube_diffuse(tex_size).save_png(&dir.join("cube_diffuse.png"), BitDepth::Eight)?;
    std::fs::write(dir.join("sphere.obj"), write_obj(&uv_sphere(64, 32), None))?;
    sphere_diffuse(tex_size).save_png(&dir.join("sphere_diffuse.png"), BitDepth::Eight)?;
    Ok(())
}

/// Writes the mesh fixtures, a toy library under `library/` and one offline
/// config per fixture (`cube.json`, `sphere.json`) whose outputs go to `runs/<name>`.
pub fn write_demo(dir: &Path, tex_size: usize, library_size: usize) -> Result<Vec<PathBuf>, DemoError> {
    write_mesh_fixtures(dir, tex_size)?;
    write_toy_library(&dir.join("library"), library_size)?;
    let mut configs = Vec::new();
    for name in ["cube", "sphere"] {
        let cfg = PipelineConfig::new(
            format!("{name}.obj"),
            format!("{name}_diffuse.png"),
            "library",
            format!("runs/{name}"),
        );
        let path = dir.join(format!("{name}.json"));
        let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
        std::fs::write(&path, text + "\n").map_err(TextureError::from)?;
        configs.push(path);
    }
    Ok(configs)
}

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Library(#[from] LibraryError),
}
