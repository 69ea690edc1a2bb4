//! Wavefront OBJ ingestion and serialization.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ObjError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: face corner has no texture coordinate")]
    MissingUVs { line: usize },
    #[error("line {line}: index {index} out of range")]
    IndexOutOfRange { line: usize, index: i64 },
    #[error("mesh has no faces")]
    EmptyMesh,
}

/// One triangle corner: indices into the position, uv and (optional) normal lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Corner {
    pub position: u32,
    pub uv: u32,
    pub normal: Option<u32>,
}

/// Indexed triangle mesh with a UV atlas.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub positions: Vec<[f32; 3]>,
    pub uvs: Vec<[f32; 2]>,
    pub normals: Vec<[f32; 3]>,
    pub faces: Vec<[Corner; 3]>,
}

impl Mesh {
    pub fn face_positions(&self, face: usize) -> [[f32; 3]; 3] {
        let f = &self.faces[face];
        [
            self.positions[f[0].position as usize],
            self.positions[f[1].position as usize],
            self.positions[f[2].position as usize],
        ]
    }

    pub fn face_uvs(&self, face: usize) -> [[f32; 2]; 3] {
        let f = &self.faces[face];
        [
            self.uvs[f[0].uv as usize],
            self.uvs[f[1].uv as usize],
            self.uvs[f[2].uv as usize],
        ]
    }

    /// Checks that every corner index is in range.
    pub fn validate(&self) -> Result<(), ObjError> {
        if self.faces.is_empty() {
            return Err(ObjError::EmptyMesh);
        }
        for face in &self.faces {
            for c in face {
                let bad = (c.position as usize) >= self.positions.len()
                    || (c.uv as usize) >= self.uvs.len()
                    || c.normal.is_some_and(|n| (n as usize) >= self.normals.len());
                if bad {
                    return Err(ObjError::IndexOutOfRange {
                        line: 0,
                        index: c.position as i64,
                    });
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

/// Repeat addressing: coordinates outside [0, 1] are reduced modulo 1, 1.0 itself is kept.
pub fn wrap_uv(v: f32) -> f32 {
    if (0.0..=1.0).contains(&v) {
        v
    } else {
        v - v.floor()
    }
}

fn parse_floats<const N: usize>(
    fields: &[&str],
    min: usize,
    line: usize,
    fill: f32,
) -> Result<[f32; N], ObjError> {
    if fields.len() < min {
        return Err(ObjError::MalformedRecord {
            line,
            reason: format!("expected at least {min} values, got {}", fields.len()),
        });
    }
    let mut out = [fill; N];
    for (slot, field) in out.iter_mut().zip(fields.iter()) {
        *slot = field.parse::<f32>().map_err(|_| ObjError::MalformedRecord {
            line,
            reason: format!("invalid number {field:?}"),
        })?;
        if !slot.is_finite() {
            return Err(ObjError::MalformedRecord {
                line,
                reason: format!("non-finite number {field:?}"),
            });
        }
    }
    Ok(out)
}

fn resolve_index(raw: &str, count: usize, line: usize) -> Result<u32, ObjError> {
    let idx: i64 = raw.parse().map_err(|_| ObjError::MalformedRecord {
        line,
        reason: format!("invalid index {raw:?}"),
    })?;
    let resolved = match idx {
        0 => {
            return Err(ObjError::MalformedRecord {
                line,
                reason: "index 0 is not valid in OBJ".into(),
            })
        }
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(ObjError::IndexOutOfRange { line, index: idx });
    }
    Ok(resolved as u32)
}

/// Parses OBJ text. Polygons are fan-triangulated from their first corner and
/// texture coordinates are wrapped into [0, 1].
pub fn parse_obj(bytes: &[u8]) -> Result<Mesh, ObjError> {
    let text = String::from_utf8_lossy(bytes);
    let mut mesh = Mesh::default();

    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let keyword = parts.next().unwrap_or("");
        let fields: Vec<&str> = parts.collect();
        match keyword {
            "v" => {
                let p = parse_floats::<3>(&fields, 3, line_no, 0.0)?;
                mesh.positions.push(p);
            }
            "vt" => {
                let t = parse_floats::<2>(&fields, 1, line_no, 0.0)?;
                mesh.uvs.push([wrap_uv(t[0]), wrap_uv(t[1])]);
            }
            "vn" => {
                let n = parse_floats::<3>(&fields, 3, line_no, 0.0)?;
                mesh.normals.push(n);
            }
            "f" => {
                if fields.len() < 3 {
                    return Err(ObjError::MalformedRecord {
                        line: line_no,
                        reason: "face needs at least 3 corners".into(),
                    });
                }
                let mut corners = Vec::with_capacity(fields.len());
                for field in &fields {
                    let mut refs = field.split('/');
                    let v = refs.next().unwrap_or("");
                    let vt = refs.next().unwrap_or("");
                    let vn = refs.next().unwrap_or("");
                    if refs.next().is_some() {
                        return Err(ObjError::MalformedRecord {
                            line: line_no,
                            reason: format!("bad face corner {field:?}"),
                        });
                    }
                    if vt.is_empty() {
                        return Err(ObjError::MissingUVs { line: line_no });
                    }
                    corners.push(Corner {
                        position: resolve_index(v, mesh.positions.len(), line_no)?,
                        uv: resolve_index(vt, mesh.uvs.len(), line_no)?,
                        normal: if vn.is_empty() {
                            None
                        } else {
                            Some(resolve_index(vn, mesh.normals.len(), line_no)?)
                        },
                    });
                }
                for k in 1..corners.len() - 1 {
                    mesh.faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            // Grouping, smoothing and material records carry nothing the pipeline uses.
            _ => {}
        }
    }

    if mesh.faces.is_empty() {
        return Err(ObjError::EmptyMesh);
    }
    Ok(mesh)
}

/// Serializes a mesh as OBJ text. Floats use the shortest representation that
/// parses back to the same value.
pub fn write_obj(mesh: &Mesh, mtllib: Option<(&str, &str)>) -> String {
    let mut out = String::new();
    if let Some((lib, _)) = mtllib {
        let _ = writeln!(out, "mtllib {lib}");
    }
    for p in &mesh.positions {
        let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
    }
    for t in &mesh.uvs {
        let _ = writeln!(out, "vt {} {}", t[0], t[1]);
    }
    for n in &mesh.normals {
        let _ = writeln!(out, "vn {} {} {}", n[0], n[1], n[2]);
    }
    if let Some((_, material)) = mtllib {
        let _ = writeln!(out, "usemtl {material}");
    }
    for face in &mesh.faces {
        out.push('f');
        for c in face {
            match c.normal {
                Some(n) => {
                    let _ = write!(out, " {}/{}/{}", c.position + 1, c.uv + 1, n + 1);
                }
                None => {
                    let _ = write!(out, " {}/{}", c.position + 1, c.uv + 1);
                }
            }
        }
        out.push('\n');
    }
    out
}
