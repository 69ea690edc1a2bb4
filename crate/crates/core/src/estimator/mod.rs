//! Per-texel SVBRDF synthesis by nearest-neighbour index transfer from a
//! matched material's key diffuse.

mod kdtree;

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

pub use kdtree::{build_pixel_index, build_pixel_index_with, dist2, PixelIndex, DEFAULT_LEAF_SIZE};

use crate::library::{LibraryIndex, MaterialRecord};
use crate::mesh_io::{quantize8, Role, TextureMap};
use crate::partition::PartitionMap;
use crate::render::MapSource;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("material {0:?} is not in the library")]
    MaterialMissing(String),
    #[error("{0} occupied texels have no material")]
    UnassignedTexels(usize),
    #[error("partition is {partition:?} but diffuse is {diffuse:?}")]
    ResolutionMismatch {
        partition: (usize, usize),
        diffuse: (usize, usize),
    },
}

/// Per-channel equalization lookup: `lut[bin]` is the output for an input quantized to `bin`.
pub type EqualizationLut = [f32; 256];

/// Equalizes every channel independently over 256 bins.
///
/// With `N` pixels and `cdf_min` the count in the lowest populated bin, bin `b`
/// maps to `(cdf(b) - cdf_min) / (N - cdf_min)`; a single populated bin keeps
/// the identity `b / 255`.
pub fn hist_equalize(img: &TextureMap) -> (TextureMap, Vec<EqualizationLut>) {
    let c = img.channels();
    let n = img.len_pixels();
    let data = img.data();
    let mut luts = Vec::with_capacity(c);
    for ch in 0..c {
        let mut hist = [0usize; 256];
        for p in 0..n {
            hist[quantize8(data[p * c + ch]) as usize] += 1;
        }
        let mut lut = [0f32; 256];
        let cdf_min = hist.iter().copied().find(|&h| h > 0).unwrap_or(0);
        if n > cdf_min {
            let denom = (n - cdf_min) as f64;
            let mut cdf = 0usize;
            for (b, h) in hist.iter().enumerate() {
                cdf += h;
                lut[b] = (cdf.saturating_sub(cdf_min) as f64 / denom) as f32;
            }
        } else {
            for (b, v) in lut.iter_mut().enumerate() {
                *v = b as f32 / 255.0;
            }
        }
        luts.push(lut);
    }
    let mut out = img.clone();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v = luts[k % c][quantize8(*v) as usize];
    }
    (out, luts)
}

/// Values transferred onto one region, each role stored densely over `texels`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTransfer {
    pub texels: Vec<usize>,
    /// Key pixel chosen for each entry of `texels`.
    pub key_pixels: Vec<usize>,
    pub values: BTreeMap<Role, Vec<f32>>,
}

/// Copies, for every region texel, the values at its nearest key pixel from each
/// SVBRDF role of `maps`. Roles `maps` lacks take their neutral default.
pub fn transfer_region<M: MapSource + ?Sized>(
    query_eq: &TextureMap,
    region: &[usize],
    maps: &M,
    index: &PixelIndex,
) -> RegionTransfer {
    let key_pixels: Vec<usize> = region.par_iter().map(|&t| index.nearest(query_eq.rgb(t))).collect();
    let values = Role::SVBRDF
        .iter()
        .map(|&role| {
            let c = role.channels();
            let mut vals = Vec::with_capacity(region.len() * c);
            match maps.map(role) {
                Some(m) => {
                    for &k in &key_pixels {
                        vals.extend_from_slice(m.pixel(k));
                    }
                }
                None => {
                    for _ in &key_pixels {
                        vals.extend_from_slice(role.default_value());
                    }
                }
            }
            (role, vals)
        })
        .collect();
    RegionTransfer {
        texels: region.to_vec(),
        key_pixels,
        values,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimateOptions {
    /// Also emit an albedo map equal to the input diffuse.
    pub emit_albedo: bool,
}

/// The synthesized maps at query resolution plus the partition they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SvbrdfSet {
    pub maps: BTreeMap<Role, TextureMap>,
    pub provenance: PartitionMap,
}

impl SvbrdfSet {
    pub fn dims(&self) -> (usize, usize) {
        (self.provenance.width, self.provenance.height)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TextureMap> {
        self.maps.values()
    }
}

impl MapSource for SvbrdfSet {
    fn map(&self, role: Role) -> Option<&TextureMap> {
        self.maps.get(&role)
    }
}

/// A material's maps brought to the query resolution, with the equalized key.
struct PreparedMaterial {
    maps: BTreeMap<Role, TextureMap>,
    key_eq: TextureMap,
}

fn prepare(rec: &MaterialRecord, width: usize, height: usize) -> PreparedMaterial {
    let key = rec.key_diffuse().resize_bilinear_wrap(width, height);
    let maps = Role::SVBRDF
        .iter()
        .filter_map(|&r| rec.maps.get(&r).map(|m| (r, m.resize_bilinear_wrap(width, height))))
        .collect();
    PreparedMaterial {
        maps,
        key_eq: hist_equalize(&key).0,
    }
}

/// Assembles full SVBRDF maps for `diffuse` from the materials named in `part`.
pub fn estimate(
    diffuse: &TextureMap,
    part: &PartitionMap,
    lib: &LibraryIndex,
    opts: EstimateOptions,
) -> Result<SvbrdfSet, EstimateError> {
    let (w, h) = diffuse.dims();
    if (part.width, part.height) != (w, h) {
        return Err(EstimateError::ResolutionMismatch {
            partition: (part.width, part.height),
            diffuse: (w, h),
        });
    }
    let unassigned = part.unassigned_count();
    if unassigned > 0 {
        return Err(EstimateError::UnassignedTexels(unassigned));
    }
    let records: Vec<&MaterialRecord> = part
        .materials
        .iter()
        .map(|id| lib.get(id).ok_or_else(|| EstimateError::MaterialMissing(id.clone())))
        .collect::<Result<_, _>>()?;

    let (query_eq, _) = hist_equalize(diffuse);
    let transfers: Vec<RegionTransfer> = records
        .par_iter()
        .map(|rec| {
            let region = part.texels_of(&rec.id);
            let prepared = prepare(rec, w, h);
            let index = build_pixel_index(&prepared.key_eq);
            log::debug!("material {}: {} texels, {} key colors", rec.id, region.len(), index.unique_colors());
            transfer_region(&query_eq, &region, &prepared.maps, &index)
        })
        .collect();

    let mut maps: BTreeMap<Role, TextureMap> = Role::SVBRDF
        .iter()
        .map(|&r| (r, TextureMap::filled(w, h, r, r.default_value())))
        .collect();
    for t in &transfers {
        for (role, vals) in &t.values {
            let out = maps.get_mut(role).expect("all roles allocated");
            let c = role.channels();
            for (k, &texel) in t.texels.iter().enumerate() {
                out.pixel_mut(texel).copy_from_slice(&vals[k * c..(k + 1) * c]);
            }
        }
    }
    if opts.emit_albedo {
        let albedo = diffuse.clone().with_role(Role::Albedo).expect("diffuse is RGB");
        maps.insert(Role::Albedo, albedo);
    }
    Ok(SvbrdfSet {
        maps,
        provenance: part.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::toy_library;
    use crate::partition::UNOCCUPIED;

    fn gray(values: &[f32], w: usize) -> TextureMap {
        TextureMap::from_fn(w, values.len() / w, Role::Roughness, |x, y| vec![values[y * w + x]])
    }

    #[test]
    fn equalize_hand_computed_cdf() {
        let img = gray(&[52.0 / 255.0, 52.0 / 255.0, 154.0 / 255.0, 205.0 / 255.0], 2);
        let (eq, luts) = hist_equalize(&img);
        // cdf = 2, 3, 4; cdf_min = 2; N = 4.
        assert_eq!(eq.data(), &[0.0, 0.0, 0.5, 1.0]);
        assert_eq!(luts[0][154], 0.5);
    }

    #[test]
    fn equalize_ramp_is_fixed_point() {
        let img = gray(&(0..256).map(|v| v as f32 / 255.0).collect::<Vec<_>>(), 256);
        let (eq, _) = hist_equalize(&img);
        for (a, b) in img.data().iter().zip(eq.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn equalize_constant_is_constant() {
        let img = TextureMap::filled(5, 3, Role::Diffuse, &[0.3, 0.6, 0.9]);
        let (eq, _) = hist_equalize(&img);
        let first = eq.rgb(0);
        assert!((0..15).all(|i| eq.rgb(i) == first));
    }

    #[test]
    fn single_pixel_key_broadcasts() {
        let key = TextureMap::filled(1, 1, Role::Diffuse, &[0.4, 0.4, 0.4]);
        let mut maps = BTreeMap::new();
        maps.insert(Role::Roughness, TextureMap::filled(1, 1, Role::Roughness, &[0.7]));
        let idx = build_pixel_index(&key);
        let query = crate::fixtures::checker(6, 6, [0.1, 0.2, 0.3], [0.9, 0.8, 0.7]);
        let region: Vec<usize> = (0..36).collect();
        let t = transfer_region(&query, &region, &maps, &idx);
        assert!(t.values[&Role::Roughness].iter().all(|&v| v == 0.7));
        assert!(t.values[&Role::Metalness].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn estimate_rejects_bad_partitions() {
        let lib = toy_library(8);
        let d = TextureMap::filled(8, 8, Role::Diffuse, &[0.5; 3]);
        let mut p = PartitionMap::uniform(8, 8, "missing");
        assert!(matches!(
            estimate(&d, &p, &lib, EstimateOptions::default()),
            Err(EstimateError::MaterialMissing(_))
        ));
        p.materials = vec!["metal_gold_01".into()];
        p.cells[3] = crate::partition::UNASSIGNED;
        assert!(matches!(
            estimate(&d, &p, &lib, EstimateOptions::default()),
            Err(EstimateError::UnassignedTexels(1))
        ));
    }

    #[test]
    fn unoccupied_texels_take_defaults_and_albedo_copies_diffuse() {
        let lib = toy_library(8);
        let d = crate::fixtures::checker(8, 8, [0.2, 0.3, 0.1], [0.7, 0.6, 0.5]);
        let mut p = PartitionMap::uniform(8, 8, "wood_oak_01");
        p.cells[0] = UNOCCUPIED;
        let s = estimate(&d, &p, &lib, EstimateOptions { emit_albedo: true }).unwrap();
        assert_eq!(s.maps[&Role::Normal].pixel(0), Role::Normal.default_value());
        assert_eq!(s.maps[&Role::Albedo].data(), d.data());
        assert_eq!(s.maps.len(), 6);
    }
}
