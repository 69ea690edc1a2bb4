use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use super::{ingest_material, material_dirs, read_manifest, LibraryError, MaterialRecord};
use crate::fixtures::uv_sphere;
use crate::math::Vec3;
use crate::mesh_io::{BitDepth, Role, TextureMap};
use crate::mllm::{MllmClient, MllmResponse, Part, PromptPayload};
use crate::render::{make_camera_ring, shade_preview, PreviewOptions, RingSpec};

pub const CAPTION_PROMPT: &str = "You are given rendered spheres, each showing one tileable material from the same subcategory. \
For each sphere, in order, write one concise caption describing its surface appearance: color, pattern, roughness, \
metalness, embossing pattern and material condition (new, worn, weathered). Describe the material only and do not \
describe the overall object shape. Reply with JSON {\"captions\": [\"...\", ...]} holding exactly one string per image.";

fn captions_of(resp: &MllmResponse, expected: usize) -> Option<Vec<String>> {
    let list = resp.parsed.as_ref()?.get("captions")?.as_array()?;
    let caps: Vec<String> = list.iter().filter_map(Value::as_str).map(str::to_owned).collect();
    (caps.len() == list.len() && caps.len() == expected).then_some(caps)
}

/// One caption per image, in image order. Re-asks once on a count mismatch.
pub fn caption_material(client: &MllmClient, sphere_images: &[Vec<u8>], subcategory: &str) -> Result<Vec<String>, LibraryError> {
    if sphere_images.is_empty() || sphere_images.len() > 8 {
        return Err(LibraryError::InvalidInput(format!(
            "caption batches hold 1 to 8 images, got {}",
            sphere_images.len()
        )));
    }
    let n = sphere_images.len();
    let mut parts = vec![Part::text(format!(
        "Subcategory: {subcategory}. There are {n} images; return {n} captions."
    ))];
    parts.extend(sphere_images.iter().cloned().map(Part::png));
    let payload = PromptPayload::new(CAPTION_PROMPT).user(parts);
    for _ in 0..2 {
        let resp = client.complete(&payload)?;
        if let Some(caps) = captions_of(&resp, n) {
            return Ok(caps);
        }
        log::warn!("caption reply for {subcategory} did not hold {n} captions");
    }
    Err(LibraryError::MalformedResponse(format!("expected {n} captions for {subcategory}")))
}

/// A lit sphere showing the material, as 8-bit PNG bytes. Missing maps take neutral defaults.
pub fn material_ball(rec: &MaterialRecord, size: usize) -> Result<Vec<u8>, LibraryError> {
    let (w, h) = rec.resolution();
    let mut maps: BTreeMap<Role, TextureMap> = BTreeMap::new();
    maps.insert(Role::Albedo, rec.key_diffuse().clone());
    for role in [Role::Normal, Role::Roughness, Role::Metalness] {
        let m = rec
            .maps
            .get(&role)
            .cloned()
            .unwrap_or_else(|| TextureMap::filled(w, h, role, role.default_value()));
        maps.insert(role, m);
    }
    let mesh = uv_sphere(64, 32);
    let spec = RingSpec {
        views: 1,
        width: size,
        height: size,
        ..Default::default()
    };
    let cam = make_camera_ring(&mesh, &spec)
        .map_err(|e| LibraryError::InvalidInput(e.to_string()))?
        .remove(0);
    let img = shade_preview(&mesh, &maps, &cam, Vec3::new(-0.5, 0.8, 0.6), &PreviewOptions::default())
        .map_err(|e| LibraryError::InvalidInput(e.to_string()))?;
    Ok(img.to_texture().encode_png(BitDepth::Eight)?)
}

/// Captions every material under `root` in same-subcategory batches of up to 8
/// and writes the captions back into each `material.json`. Returns the count.
pub fn caption_library(client: &MllmClient, root: &Path, ball_size: usize) -> Result<usize, LibraryError> {
    let mut groups: BTreeMap<(String, String), Vec<MaterialRecord>> = BTreeMap::new();
    for dir in material_dirs(root)? {
        let rec = ingest_material(&dir)?;
        groups
            .entry((rec.major_type.clone(), rec.subcategory.clone()))
            .or_default()
            .push(rec);
    }
    let mut done = 0;
    for ((_, sub), recs) in groups {
        for batch in recs.chunks(8) {
            let images = batch
                .iter()
                .map(|r| material_ball(r, ball_size))
                .collect::<Result<Vec<_>, _>>()?;
            let caps = caption_material(client, &images, &sub)?;
            for (rec, cap) in batch.iter().zip(caps) {
                let dir = rec.dir.as_ref().expect("ingested records carry their directory");
                let mut manifest = read_manifest(dir)?;
                manifest.caption = cap;
                std::fs::write(
                    dir.join("material.json"),
                    serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
                )?;
                done += 1;
            }
        }
    }
    Ok(done)
}
