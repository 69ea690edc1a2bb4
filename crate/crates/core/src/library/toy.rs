use std::collections::BTreeMap;
use std::f32::consts::TAU;
use std::path::Path;

use super::{build_index, LibraryError, LibraryIndex, LibraryManifest, MaterialManifest, MaterialRecord};
use crate::fixtures::hash_noise;
use crate::mesh_io::{BitDepth, Role, TextureMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pattern {
    Brushed,
    Grain,
    Dimpled,
}

/// Parameters of one procedural toy material.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub id: String,
    pub major_type: &'static str,
    pub subcategory: &'static str,
    pub caption: String,
    pub base: [f32; 3],
    pub roughness: (f32, f32),
    pub metalness: f32,
    /// Diffuse is written all black; only the base color carries the appearance.
    pub black_diffuse: bool,
    pattern: Pattern,
    seed: u32,
}

/// The twelve toy materials: three types, two subcategories each, two variants each.
pub fn toy_material_specs() -> Vec<ToySpec> {
    let table: [(&str, &str, Pattern, [[f32; 3]; 2], (f32, f32), f32, &str); 6] = [
        ("metal", "gold", Pattern::Brushed, [[0.85, 0.66, 0.24], [0.78, 0.58, 0.18]], (0.18, 0.15), 1.0, "polished yellow gold with fine horizontal brushing"),
        ("metal", "steel", Pattern::Brushed, [[0.62, 0.64, 0.66], [0.52, 0.54, 0.58]], (0.3, 0.2), 1.0, "cool grey brushed steel, lightly scuffed"),
        ("wood", "oak", Pattern::Grain, [[0.68, 0.50, 0.30], [0.60, 0.44, 0.26]], (0.65, 0.2), 0.0, "light oak with straight grain and matte finish"),
        ("wood", "walnut", Pattern::Grain, [[0.38, 0.25, 0.16], [0.30, 0.20, 0.13]], (0.6, 0.2), 0.0, "dark walnut with wavy grain, satin finish"),
        ("plastic", "red", Pattern::Dimpled, [[0.80, 0.12, 0.10], [0.66, 0.08, 0.10]], (0.4, 0.1), 0.0, "glossy red plastic with a faint dimpled texture"),
        ("plastic", "blue", Pattern::Dimpled, [[0.12, 0.22, 0.80], [0.10, 0.14, 0.62]], (0.45, 0.1), 0.0, "smooth blue plastic, slightly dimpled, new condition"),
    ];
    let mut out = Vec::new();
    for (t, (major, sub, pattern, bases, rough, metal, caption)) in table.into_iter().enumerate() {
        for (v, base) in bases.into_iter().enumerate() {
            let shade = if v == 0 { "" } else { "darker, " };
            out.push(ToySpec {
                id: format!("{major}_{sub}_{:02}", v + 1),
                major_type: major,
                subcategory: sub,
                caption: format!("{shade}{caption}"),
                base,
                roughness: rough,
                metalness: metal,
                black_diffuse: major == "metal" && sub == "steel" && v == 1,
                pattern,
                seed: (t * 2 + v) as u32 * 101 + 7,
            });
        }
    }
    out
}

impl ToySpec {
    /// Tileable pattern value in [0, 1] at texel (x, y) of a `size` square.
    fn pattern_at(&self, x: usize, y: usize, size: usize) -> f32 {
        let s = size as f32;
        let (fx, fy) = (x as f32 / s, y as f32 / s);
        let n = hash_noise(x, y, self.seed);
        let p = match self.pattern {
            Pattern::Brushed => 0.35 + 0.45 * hash_noise(0, y, self.seed) + 0.2 * n,
            Pattern::Grain => 0.5 + 0.4 * (TAU * (6.0 * fy + 0.15 * (TAU * fx).sin())).sin() + 0.1 * (n - 0.5),
            Pattern::Dimpled => 0.5 + 0.3 * (TAU * 4.0 * fx).sin() * (TAU * 4.0 * fy).sin() + 0.1 * (n - 0.5),
        };
        p.clamp(0.0, 1.0)
    }

    /// All seven maps at `size`².
    pub fn maps(&self, size: usize) -> BTreeMap<Role, TextureMap> {
        let pat: Vec<f32> = (0..size * size).map(|i| self.pattern_at(i % size, i / size, size)).collect();
        let p = |x: usize, y: usize| pat[(y % size) * size + (x % size)];
        let color = TextureMap::from_fn(size, size, Role::Albedo, |x, y| {
            let k = 0.8 + 0.4 * p(x, y);
            self.base.iter().map(|c| (c * k).clamp(0.0, 1.0)).collect()
        });
        let diffuse = if self.black_diffuse {
            TextureMap::filled(size, size, Role::Diffuse, &[0.0; 3])
        } else {
            color.clone().with_role(Role::Diffuse).expect("same arity")
        };
        let (r0, span) = self.roughness;
        let mut maps = BTreeMap::new();
        maps.insert(Role::Diffuse, diffuse);
        maps.insert(Role::Albedo, color);
        maps.insert(
            Role::Roughness,
            TextureMap::from_fn(size, size, Role::Roughness, |x, y| vec![r0 + span * p(x, y)]),
        );
        maps.insert(
            Role::Metalness,
            TextureMap::from_fn(size, size, Role::Metalness, |_, _| vec![self.metalness]),
        );
        maps.insert(Role::Height, TextureMap::from_fn(size, size, Role::Height, |x, y| vec![p(x, y)]));
        maps.insert(
            Role::Specular,
            TextureMap::from_fn(size, size, Role::Specular, |x, y| vec![0.4 + 0.2 * p(x, y)]),
        );
        maps.insert(
            Role::Normal,
            TextureMap::from_fn(size, size, Role::Normal, |x, y| {
                let dx = p(x + 1, y) - p(x + size - 1, y);
                let dy = p(x, y + size - 1) - p(x, y + 1);
                let (nx, ny, nz) = (-dx * 2.0, -dy * 2.0, 1.0f32);
                let len = (nx * nx + ny * ny + nz * nz).sqrt();
                vec![0.5 + 0.5 * nx / len, 0.5 + 0.5 * ny / len, 0.5 + 0.5 * nz / len]
            }),
        );
        maps
    }

    pub fn record(&self, size: usize) -> MaterialRecord {
        MaterialRecord::from_maps(&self.id, self.major_type, self.subcategory, &self.caption, self.maps(size))
            .expect("toy materials are well formed")
    }
}

/// In-memory toy library.
pub fn toy_library(size: usize) -> LibraryIndex {
    build_index(toy_material_specs().iter().map(|s| s.record(size)).collect()).expect("toy ids are unique")
}

/// Writes the toy library under `root` (one directory per material plus `library.json`).
pub fn write_toy_library(root: &Path, size: usize) -> Result<Vec<String>, LibraryError> {
    let specs = toy_material_specs();
    std::fs::create_dir_all(root)?;
    for spec in &specs {
        let dir = root.join(&spec.id);
        std::fs::create_dir_all(&dir)?;
        let mut files = BTreeMap::new();
        for (role, map) in spec.maps(size) {
            let name = if role == Role::Albedo { "basecolor".to_owned() } else { role.name().to_owned() };
            let file = format!("{name}.png");
            map.save_png(&dir.join(&file), BitDepth::Sixteen)?;
            files.insert(role, file);
        }
        let manifest = MaterialManifest {
            id: spec.id.clone(),
            major_type: spec.major_type.into(),
            subcategory: spec.subcategory.into(),
            caption: spec.caption.clone(),
            maps: files,
        };
        std::fs::write(
            dir.join("material.json"),
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )?;
    }
    let ids: Vec<String> = specs.into_iter().map(|s| s.id).collect();
    let lib = LibraryManifest { materials: ids.clone() };
    std::fs::write(
        root.join("library.json"),
        serde_json::to_string_pretty(&lib).expect("manifest serializes"),
    )?;
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_materials_three_types() {
        let idx = toy_library(16);
        assert_eq!(idx.len(), 12);
        assert_eq!(idx.major_types(), vec!["metal", "plastic", "wood"]);
        for t in idx.major_types() {
            assert_eq!(idx.subcategories(t).unwrap().len(), 2);
        }
        let steel = idx.get("metal_steel_02").unwrap();
        assert_eq!(steel.key_role, Role::Albedo);
        assert_eq!(idx.get("metal_gold_01").unwrap().key_role, Role::Diffuse);
    }

    #[test]
    fn normals_are_unit_length() {
        for spec in toy_material_specs() {
            let n = &spec.maps(32)[&Role::Normal];
            for i in 0..n.len_pixels() {
                let v: Vec<f32> = n.pixel(i).iter().map(|c| 2.0 * c - 1.0).collect();
                let len = v.iter().map(|c| c * c).sum::<f32>().sqrt();
                assert!((len - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn disk_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let ids = write_toy_library(tmp.path(), 16).unwrap();
        let idx = super::super::load_library(tmp.path()).unwrap();
        assert_eq!(idx.records().map(|r| r.id.clone()).collect::<Vec<_>>().len(), ids.len());
        let mem = toy_library(16);
        for r in idx.records() {
            let m = mem.get(&r.id).unwrap();
            assert_eq!(r.key_role, m.key_role);
            for k in 0..3 {
                assert!((r.mean_diffuse_rgb[k] - m.mean_diffuse_rgb[k]).abs() < 1e-4);
            }
        }
    }
}
