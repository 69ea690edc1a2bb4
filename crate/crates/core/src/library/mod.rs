//! Material library: per-material directories, the three-level taxonomy index,
//! captioning, and a small procedural library for tests and demos.

mod caption;
mod toy;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::luminance;
use crate::mesh_io::{load_texture, Role, TextureError, TextureMap};
use crate::mllm::MllmError;
use crate::render::MapSource;

pub use caption::{caption_library, caption_material, material_ball, CAPTION_PROMPT};
pub use toy::{toy_library, toy_material_specs, write_toy_library, ToySpec};

/// Canonical major material types.
pub const MAJOR_TYPES: [&str; 13] = [
    "ceramic",
    "concrete",
    "fabric",
    "ground",
    "leather",
    "marble",
    "metal",
    "misc",
    "plaster",
    "plastic",
    "stone",
    "terracotta",
    "wood",
];

/// Diffuse maps darker than this mean luminance are replaced by the base color.
pub const BLACK_DIFFUSE_LUMINANCE: f32 = 0.02;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("no material.json in {0}")]
    MissingManifest(PathBuf),
    #[error("bad manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
    #[error("material {0} has neither a usable diffuse nor a base color map")]
    NoDiffuseSource(String),
    #[error("material {id}: {role} map is {got:?}, expected {expected:?}")]
    ResolutionMismatch {
        id: String,
        role: Role,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("unknown major type {0:?}")]
    UnknownMajorType(String),
    #[error("unknown subcategory {subcategory:?} under {major_type}")]
    UnknownSubcategory { major_type: String, subcategory: String },
    #[error("duplicate material id {0}")]
    DuplicateId(String),
    #[error("library is empty")]
    EmptyLibrary,
    #[error("caption response malformed: {0}")]
    MalformedResponse(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Mllm(#[from] MllmError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk `material.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialManifest {
    pub id: String,
    pub major_type: String,
    pub subcategory: String,
    #[serde(default)]
    pub caption: String,
    /// Role to file name relative to the material directory. When empty,
    /// `<role>.png` files are discovered (`basecolor.png` for the base color).
    #[serde(default)]
    pub maps: BTreeMap<Role, String>,
}

/// On-disk `library.json` at the library root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryManifest {
    pub materials: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialRecord {
    pub id: String,
    pub major_type: String,
    pub subcategory: String,
    pub caption: String,
    pub maps: BTreeMap<Role, TextureMap>,
    /// Either `Diffuse` or `Albedo`.
    pub key_role: Role,
    pub mean_diffuse_rgb: [f32; 3],
    pub tileable: bool,
    pub dir: Option<PathBuf>,
}

impl MaterialRecord {
    /// Builds a record from in-memory maps, applying the key-diffuse rule.
    pub fn from_maps(
        id: &str,
        major_type: &str,
        subcategory: &str,
        caption: &str,
        maps: BTreeMap<Role, TextureMap>,
    ) -> Result<Self, LibraryError> {
        let mut dims: Option<(Role, (usize, usize))> = None;
        for (role, map) in &maps {
            match dims {
                None => dims = Some((*role, map.dims())),
                Some((_, d)) if d != map.dims() => {
                    return Err(LibraryError::ResolutionMismatch {
                        id: id.to_owned(),
                        role: *role,
                        expected: d,
                        got: map.dims(),
                    })
                }
                _ => {}
            }
        }
        let usable = |r: Role| {
            maps.get(&r)
                .filter(|m| m.mean_luminance() >= BLACK_DIFFUSE_LUMINANCE)
                .map(|_| r)
        };
        let key_role = usable(Role::Diffuse)
            .or_else(|| usable(Role::Albedo))
            .ok_or_else(|| LibraryError::NoDiffuseSource(id.to_owned()))?;
        let means = maps[&key_role].channel_means();
        Ok(Self {
            id: id.to_owned(),
            major_type: major_type.to_owned(),
            subcategory: subcategory.to_owned(),
            caption: caption.to_owned(),
            mean_diffuse_rgb: [means[0], means[1], means[2]],
            key_role,
            maps,
            tileable: true,
            dir: None,
        })
    }

    pub fn key_diffuse(&self) -> &TextureMap {
        &self.maps[&self.key_role]
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.key_diffuse().dims()
    }

    pub fn key_luminance(&self) -> f32 {
        luminance(self.mean_diffuse_rgb)
    }
}

impl MapSource for MaterialRecord {
    fn map(&self, role: Role) -> Option<&TextureMap> {
        match role {
            Role::Albedo | Role::Diffuse => Some(self.key_diffuse()),
            r => self.maps.get(&r),
        }
    }
}

fn read_manifest(dir: &Path) -> Result<MaterialManifest, LibraryError> {
    let path = dir.join("material.json");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(LibraryError::MissingManifest(dir.to_owned()))
        }
        Err(e) => return Err(e.into()),
    };
    serde_json::from_str(&text).map_err(|e| LibraryError::BadManifest {
        path,
        reason: e.to_string(),
    })
}

fn discover_maps(dir: &Path) -> BTreeMap<Role, String> {
    let mut found = BTreeMap::new();
    for role in Role::ALL {
        let names: &[&str] = match role {
            Role::Albedo => &["basecolor", "albedo"],
            Role::Metalness => &["metalness", "metallic"],
            _ => &[role.name()],
        };
        'role: for name in names {
            for ext in ["png", "exr"] {
                let file = format!("{name}.{ext}");
                if dir.join(&file).is_file() {
                    found.insert(role, file);
                    break 'role;
                }
            }
        }
    }
    found
}

/// Reads one material directory.
pub fn ingest_material(dir: &Path) -> Result<MaterialRecord, LibraryError> {
    let manifest = read_manifest(dir)?;
    let files = if manifest.maps.is_empty() {
        discover_maps(dir)
    } else {
        manifest.maps.clone()
    };
    let mut maps = BTreeMap::new();
    for (role, file) in &files {
        maps.insert(*role, load_texture(&dir.join(file), *role)?);
    }
    let mut rec = MaterialRecord::from_maps(
        &manifest.id,
        &manifest.major_type,
        &manifest.subcategory,
        &manifest.caption,
        maps,
    )?;
    rec.dir = Some(dir.to_owned());
    Ok(rec)
}

/// Material directories under a library root, from `library.json` when present,
/// otherwise every subdirectory holding a `material.json`, sorted by name.
pub fn material_dirs(root: &Path) -> Result<Vec<PathBuf>, LibraryError> {
    let manifest = root.join("library.json");
    if manifest.is_file() {
        let m: LibraryManifest =
            serde_json::from_str(&std::fs::read_to_string(&manifest)?).map_err(|e| LibraryError::BadManifest {
                path: manifest.clone(),
                reason: e.to_string(),
            })?;
        return Ok(m.materials.iter().map(|d| root.join(d)).collect());
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("material.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Ingests every material under `root` and builds the index.
pub fn load_library(root: &Path) -> Result<LibraryIndex, LibraryError> {
    let dirs = material_dirs(root)?;
    let records = dirs
        .par_iter()
        .map(|d| ingest_material(d))
        .collect::<Result<Vec<_>, _>>()?;
    build_index(records)
}

/// Three-level taxonomy over an immutable record table.
#[derive(Debug, Clone, PartialEq)]
pub struct LibraryIndex {
    tree: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    records: BTreeMap<String, MaterialRecord>,
}

pub fn build_index(records: Vec<MaterialRecord>) -> Result<LibraryIndex, LibraryError> {
    if records.is_empty() {
        return Err(LibraryError::EmptyLibrary);
    }
    let mut tree: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    let mut table = BTreeMap::new();
    for rec in records {
        if !MAJOR_TYPES.contains(&rec.major_type.as_str()) {
            return Err(LibraryError::UnknownMajorType(rec.major_type));
        }
        if table.contains_key(&rec.id) {
            return Err(LibraryError::DuplicateId(rec.id));
        }
        tree.entry(rec.major_type.clone())
            .or_default()
            .entry(rec.subcategory.clone())
            .or_default()
            .push(rec.id.clone());
        table.insert(rec.id.clone(), rec);
    }
    for subs in tree.values_mut() {
        for ids in subs.values_mut() {
            ids.sort();
        }
    }
    Ok(LibraryIndex { tree, records: table })
}

impl LibraryIndex {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MaterialRecord> {
        self.records.get(id)
    }

    /// All records in id order.
    pub fn records(&self) -> impl Iterator<Item = &MaterialRecord> {
        self.records.values()
    }

    /// Major types present in the library, sorted.
    pub fn major_types(&self) -> Vec<&str> {
        self.tree.keys().map(String::as_str).collect()
    }

    pub fn subcategories(&self, major_type: &str) -> Result<Vec<&str>, LibraryError> {
        Ok(self.branch(major_type)?.keys().map(String::as_str).collect())
    }

    fn branch(&self, major_type: &str) -> Result<&BTreeMap<String, Vec<String>>, LibraryError> {
        if !MAJOR_TYPES.contains(&major_type) {
            return Err(LibraryError::UnknownMajorType(major_type.to_owned()));
        }
        self.tree.get(major_type).ok_or_else(|| LibraryError::UnknownMajorType(major_type.to_owned()))
    }

    /// Record count per major type.
    pub fn counts(&self) -> BTreeMap<&str, usize> {
        self.tree
            .iter()
            .map(|(k, subs)| (k.as_str(), subs.values().map(Vec::len).sum()))
            .collect()
    }

    /// Records under a major type, optionally restricted to one subcategory, in id order.
    pub fn lookup(&self, major_type: &str, subcategory: Option<&str>) -> Result<Vec<&MaterialRecord>, LibraryError> {
        let branch = self.branch(major_type)?;
        let mut ids: Vec<&String> = match subcategory {
            Some(s) => branch
                .get(s)
                .ok_or_else(|| LibraryError::UnknownSubcategory {
                    major_type: major_type.to_owned(),
                    subcategory: s.to_owned(),
                })?
                .iter()
                .collect(),
            None => branch.values().flatten().collect(),
        };
        ids.sort();
        Ok(ids.into_iter().map(|id| &self.records[id]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_io::BitDepth;

    fn rec(id: &str, major: &str, sub: &str) -> MaterialRecord {
        let mut maps = BTreeMap::new();
        maps.insert(Role::Diffuse, TextureMap::filled(2, 2, Role::Diffuse, &[0.5, 0.4, 0.3]));
        MaterialRecord::from_maps(id, major, sub, "", maps).unwrap()
    }

    fn write_material(dir: &Path, manifest: &MaterialManifest, maps: &[(&str, TextureMap)]) {
        std::fs::create_dir_all(dir).unwrap();
        std::fs::write(dir.join("material.json"), serde_json::to_string(manifest).unwrap()).unwrap();
        for (name, m) in maps {
            m.save_png(&dir.join(format!("{name}.png")), BitDepth::Sixteen).unwrap();
        }
    }

    fn manifest(id: &str) -> MaterialManifest {
        MaterialManifest {
            id: id.into(),
            major_type: "metal".into(),
            subcategory: "gold".into(),
            caption: "shiny".into(),
            maps: BTreeMap::new(),
        }
    }

    #[test]
    fn complete_directory_uses_diffuse() {
        let tmp = tempfile::tempdir().unwrap();
        let maps: Vec<(&str, TextureMap)> = Role::ALL
            .iter()
            .map(|&r| {
                let name = if r == Role::Albedo { "basecolor" } else { r.name() };
                (name, TextureMap::filled(4, 4, r, &vec![0.6; r.channels()]))
            })
            .collect();
        write_material(tmp.path(), &manifest("m"), &maps);
        let r = ingest_material(tmp.path()).unwrap();
        assert_eq!(r.maps.len(), 7);
        assert_eq!(r.key_role, Role::Diffuse);
        assert_eq!(ingest_material(tmp.path()).unwrap(), r);
    }

    #[test]
    fn black_diffuse_falls_back_to_basecolor() {
        let tmp = tempfile::tempdir().unwrap();
        write_material(
            tmp.path(),
            &manifest("m"),
            &[
                ("diffuse", TextureMap::filled(4, 4, Role::Diffuse, &[0.0; 3])),
                ("basecolor", TextureMap::filled(4, 4, Role::Albedo, &[0.8, 0.6, 0.2])),
            ],
        );
        let r = ingest_material(tmp.path()).unwrap();
        assert_eq!(r.key_role, Role::Albedo);
        assert!((r.mean_diffuse_rgb[0] - 0.8).abs() < 1e-3);
        assert!(r.key_luminance() >= BLACK_DIFFUSE_LUMINANCE);
    }

    #[test]
    fn ingest_errors() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(ingest_material(tmp.path()), Err(LibraryError::MissingManifest(_))));
        write_material(
            tmp.path(),
            &manifest("m"),
            &[("roughness", TextureMap::filled(4, 4, Role::Roughness, &[0.5]))],
        );
        assert!(matches!(ingest_material(tmp.path()), Err(LibraryError::NoDiffuseSource(_))));
        write_material(
            tmp.path(),
            &manifest("m"),
            &[("diffuse", TextureMap::filled(8, 8, Role::Diffuse, &[0.5; 3]))],
        );
        assert!(matches!(ingest_material(tmp.path()), Err(LibraryError::ResolutionMismatch { .. })));
    }

    #[test]
    fn index_tree_and_lookup() {
        let idx = build_index(vec![
            rec("w2", "wood", "oak"),
            rec("g1", "metal", "gold"),
            rec("w1", "wood", "walnut"),
            rec("s1", "metal", "steel"),
        ])
        .unwrap();
        assert_eq!(idx.major_types(), vec!["metal", "wood"]);
        assert_eq!(idx.counts().into_values().collect::<Vec<_>>(), vec![2, 2]);
        let ids = |v: Vec<&MaterialRecord>| v.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(idx.lookup("metal", Some("gold")).unwrap()), vec!["g1"]);
        assert_eq!(ids(idx.lookup("wood", None).unwrap()), vec!["w1", "w2"]);
        assert!(matches!(
            idx.lookup("metal", Some("unobtainium")),
            Err(LibraryError::UnknownSubcategory { .. })
        ));
        assert!(matches!(idx.lookup("glass", None), Err(LibraryError::UnknownMajorType(_))));
    }

    #[test]
    fn index_errors() {
        assert!(matches!(
            build_index(vec![rec("a", "metal", "x"), rec("a", "wood", "y")]),
            Err(LibraryError::DuplicateId(_))
        ));
        assert!(matches!(
            build_index(vec![rec("a", "glass", "x")]),
            Err(LibraryError::UnknownMajorType(_))
        ));
        assert!(matches!(build_index(vec![]), Err(LibraryError::EmptyLibrary)));
    }
}
