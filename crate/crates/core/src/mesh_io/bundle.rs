//! Export of the final mesh plus its material maps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::obj::{write_obj, Mesh};
use super::texture::{BitDepth, Role, TextureError, TextureMap};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("map {role} is {got:?}, expected {expected:?}")]
    ResolutionMismatch {
        role: Role,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("role {0} given twice")]
    DuplicateRole(Role),
    #[error("bundle io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Texture(#[from] TextureError),
}

/// `{ "mesh": str, "maps": {role: filename} }`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub mesh: String,
    pub maps: BTreeMap<Role, String>,
}

fn mtl_key(role: Role) -> &'static str {
    match role {
        Role::Diffuse | Role::Albedo => "map_Kd",
        Role::Normal => "norm",
        Role::Roughness => "map_Pr",
        Role::Metalness => "map_Pm",
        Role::Height => "disp",
        Role::Specular => "map_Ks",
    }
}

/// Writes `<stem>.obj`, `<stem>.mtl`, one `<stem>_<role>.png` per map and
/// `<stem>.manifest.json` into `out_dir`.
pub fn export_bundle<'a>(
    mesh: &Mesh,
    maps: impl IntoIterator<Item = &'a TextureMap>,
    out_dir: &Path,
    stem: &str,
    depth: BitDepth,
) -> Result<BundleManifest, BundleError> {
    let mut by_role: BTreeMap<Role, &TextureMap> = BTreeMap::new();
    let mut dims = None;
    for map in maps {
        let expected = *dims.get_or_insert(map.dims());
        if map.dims() != expected {
            return Err(BundleError::ResolutionMismatch {
                role: map.role(),
                expected,
                got: map.dims(),
            });
        }
        if by_role.insert(map.role(), map).is_some() {
            return Err(BundleError::DuplicateRole(map.role()));
        }
    }

    std::fs::create_dir_all(out_dir)?;
    let mesh_file = format!("{stem}.obj");
    let mtl_file = format!("{stem}.mtl");

    let mut manifest = BundleManifest {
        mesh: mesh_file.clone(),
        maps: BTreeMap::new(),
    };
    let mut mtl = String::new();
    let _ = writeln!(mtl, "newmtl {stem}");
    let _ = writeln!(mtl, "Kd 1 1 1");
    for (role, map) in &by_role {
        let file = format!("{stem}_{role}.png");
        map.save_png(&out_dir.join(&file), depth)?;
        let _ = writeln!(mtl, "{} {file}", mtl_key(*role));
        manifest.maps.insert(*role, file);
    }
    std::fs::write(out_dir.join(&mtl_file), mtl)?;
    std::fs::write(
        out_dir.join(&mesh_file),
        write_obj(mesh, Some((&mtl_file, stem))),
    )?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join(format!("{stem}.manifest.json")), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh_io::obj::parse_obj;

    fn tri() -> Mesh {
        parse_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n").unwrap()
    }

    #[test]
    fn naming_contract() {
        let dir = tempfile::tempdir().unwrap();
        let maps: Vec<TextureMap> = Role::SVBRDF
            .iter()
            .map(|r| TextureMap::filled(4, 4, *r, r.default_value()))
            .collect();
        let m = export_bundle(&tri(), &maps, dir.path(), "vase", BitDepth::Eight).unwrap();
        for role in ["normal", "roughness", "metalness", "height", "specular"] {
            assert!(dir.path().join(format!("vase_{role}.png")).exists());
        }
        assert!(dir.path().join("vase.manifest.json").exists());
        let text = std::fs::read_to_string(dir.path().join("vase.manifest.json")).unwrap();
        let back: BundleManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.maps[&Role::Roughness], "vase_roughness.png");
        let obj = std::fs::read(dir.path().join("vase.obj")).unwrap();
        assert_eq!(parse_obj(&obj).unwrap(), tri());
    }

    #[test]
    fn mismatched_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let a = TextureMap::filled(4, 4, Role::Roughness, &[0.5]);
        let b = TextureMap::filled(2, 4, Role::Height, &[0.5]);
        assert!(matches!(
            export_bundle(&tri(), [&a, &b], dir.path(), "x", BitDepth::Eight),
            Err(BundleError::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn empty_set_writes_mesh_only() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_bundle(&tri(), [], dir.path(), "x", BitDepth::Eight).unwrap();
        assert!(m.maps.is_empty());
        assert_eq!(m.mesh, "x.obj");
        assert!(dir.path().join("x.obj").exists());
    }
}
