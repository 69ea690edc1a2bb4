//! Region-to-material assignment: a three-level prompted descent through the
//! library taxonomy, a deterministic color matcher, and cross-view reconciliation.

mod mock;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::library::{LibraryIndex, MaterialRecord};
use crate::mesh_io::TextureError;
use crate::mllm::{extract_choice, MllmClient, MllmError, Part, PromptPayload};
use crate::partition::UVMask;
use crate::seg::{AnnotatedImage, RegionMask};

pub use mock::{faithful_responder, first_option_responder, parse_prompt, PromptInfo};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("material library is empty")]
    EmptyLibrary,
    #[error(transparent)]
    Mllm(#[from] MllmError),
    #[error("annotated image: {0}")]
    Image(#[from] TextureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchSource {
    Mllm,
    Offline,
    /// Prompted descent conditioned on a reference-image description.
    ImagePrior,
}

/// One prompt exchange of the descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub level: String,
    pub options: Vec<String>,
    pub raw: String,
    pub choice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentTrace {
    pub major_type: String,
    pub subcategory: String,
    pub material_id: String,
    pub rounds: Vec<Round>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub view_id: usize,
    pub label: u32,
    pub material_id: String,
    pub source: MatchSource,
    pub trace: DescentTrace,
    /// Material chosen before cross-view reconciliation overrode it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconciled_from: Option<String>,
}

impl MatchResult {
    pub fn prompt_rounds(&self) -> usize {
        self.trace.rounds.len()
    }
}

pub const SYSTEM_PROMPT: &str = "You identify the physical materials of objects in rendered images. \
Regions of the image are marked with white numbers on black boxes. Answer each question about the marked region \
by choosing exactly one of the listed options, and reply only with JSON of the form {\"choice\": \"<option>\"}.";

fn centered(c: [f32; 3]) -> [f64; 3] {
    let m = (c[0] as f64 + c[1] as f64 + c[2] as f64) / 3.0;
    c.map(|v| v as f64 - m)
}

/// Library record whose zero-mean mean color is nearest to `rgb`'s; ties go to the smaller id.
pub fn nearest_material<'a>(rgb: [f32; 3], index: &'a LibraryIndex) -> Result<&'a MaterialRecord, MatchError> {
    let q = centered(rgb);
    let mut best: Option<(f64, &MaterialRecord)> = None;
    for rec in index.records() {
        let r = centered(rec.mean_diffuse_rgb);
        let d: f64 = (0..3).map(|k| (q[k] - r[k]).powi(2)).sum();
        // Records iterate in id order, so strict `<` keeps the smallest id on ties.
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, rec));
        }
    }
    best.map(|(_, r)| r).ok_or(MatchError::EmptyLibrary)
}

fn path_trace(rec: &MaterialRecord, rounds: Vec<Round>) -> DescentTrace {
    DescentTrace {
        major_type: rec.major_type.clone(),
        subcategory: rec.subcategory.clone(),
        material_id: rec.id.clone(),
        rounds,
    }
}

/// Deterministic match from the region's mean diffuse color.
pub fn match_region_offline(mask: &RegionMask, index: &LibraryIndex) -> Result<MatchResult, MatchError> {
    let rec = nearest_material(mask.mean_diffuse_rgb, index)?;
    Ok(MatchResult {
        view_id: mask.view_id,
        label: mask.label,
        material_id: rec.id.clone(),
        source: MatchSource::Offline,
        trace: path_trace(rec, Vec::new()),
        reconciled_from: None,
    })
}

struct Descent<'a> {
    client: &'a MllmClient,
    system: String,
    image: Vec<u8>,
    view_id: usize,
    label: u32,
    rounds: Vec<Round>,
}

impl Descent<'_> {
    /// Asks one level, re-asking once on an invalid answer. `Ok(None)` means both answers were invalid.
    fn ask(&mut self, level: &str, question: &str, options: &[String], details: &str) -> Result<Option<String>, MllmError> {
        let list = options.join(", ");
        let text = format!(
            "Image: view {view}. Region {label} is the area marked with the number {label}.\n{question}\n{details}Options: {list}\nReply with JSON {{\"choice\": \"<option>\"}}.",
            view = self.view_id,
            label = self.label,
        );
        let mut payload =
            PromptPayload::new(self.system.clone()).user(vec![Part::text(text), Part::png(self.image.clone())]);
        for attempt in 0..2 {
            let resp = match self.client.complete(&payload) {
                Ok(r) => r,
                Err(MllmError::Malformed(raw)) => {
                    self.rounds.push(Round {
                        level: level.into(),
                        options: options.to_vec(),
                        raw,
                        choice: None,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let choice = extract_choice(&resp, options).ok();
            self.rounds.push(Round {
                level: level.into(),
                options: options.to_vec(),
                raw: resp.raw.clone(),
                choice: choice.clone(),
            });
            if choice.is_some() {
                return Ok(choice);
            }
            if attempt == 0 {
                payload = payload.user(vec![Part::text(format!(
                    "Your previous answer {:?} is not one of the options. Reply with exactly one of: {list}.",
                    resp.raw
                ))]);
            }
        }
        Ok(None)
    }

    fn run(&mut self, index: &LibraryIndex) -> Result<Option<String>, MllmError> {
        let majors: Vec<String> = index.major_types().into_iter().map(str::to_owned).collect();
        let Some(major) = self.ask(
            "major_type",
            &format!("What is the major material type of region {}?", self.label),
            &majors,
            "",
        )?
        else {
            return Ok(None);
        };
        let subs: Vec<String> = index
            .subcategories(&major)
            .expect("major type comes from the index")
            .into_iter()
            .map(str::to_owned)
            .collect();
        let Some(sub) = self.ask(
            "subcategory",
            &format!("Region {} is {major}. Which subcategory of {major} is it?", self.label),
            &subs,
            "",
        )?
        else {
            return Ok(None);
        };
        let leaf = index.lookup(&major, Some(&sub)).expect("subcategory comes from the index");
        let ids: Vec<String> = leaf.iter().map(|r| r.id.clone()).collect();
        let captions: String = leaf.iter().map(|r| format!("- {}: {}\n", r.id, r.caption)).collect();
        self.ask(
            "material",
            &format!(
                "Region {} is {major} / {sub}. Which of these materials matches its appearance best?",
                self.label
            ),
            &ids,
            &format!("Material descriptions:\n{captions}"),
        )
    }
}

/// Three prompted rounds per region (major type, subcategory, material). Any
/// level answered invalidly twice drops that region to the offline matcher.
/// Endpoint failures (auth, transport, exhausted retries) propagate.
pub fn match_regions_mllm(
    client: &MllmClient,
    annotated: &AnnotatedImage,
    masks: &[RegionMask],
    index: &LibraryIndex,
    object_hint: Option<&str>,
) -> Result<Vec<MatchResult>, MatchError> {
    if index.is_empty() {
        return Err(MatchError::EmptyLibrary);
    }
    let image = annotated.to_png()?;
    let system = match object_hint {
        Some(h) if !h.trim().is_empty() => format!("Object description: {}\n\n{SYSTEM_PROMPT}", h.trim()),
        _ => SYSTEM_PROMPT.to_owned(),
    };
    let source = if object_hint.is_some_and(|h| !h.trim().is_empty()) {
        MatchSource::ImagePrior
    } else {
        MatchSource::Mllm
    };
    let mut results = masks
        .par_iter()
        .map(|mask| -> Result<MatchResult, MatchError> {
            let mut d = Descent {
                client,
                system: system.clone(),
                image: image.clone(),
                view_id: mask.view_id,
                label: mask.label,
                rounds: Vec::new(),
            };
            let chosen = d.run(index)?;
            let rounds = std::mem::take(&mut d.rounds);
            match chosen.and_then(|id| index.get(&id)) {
                Some(rec) => Ok(MatchResult {
                    view_id: mask.view_id,
                    label: mask.label,
                    material_id: rec.id.clone(),
                    source,
                    trace: path_trace(rec, rounds),
                    reconciled_from: None,
                }),
                None => {
                    log::warn!("view {} region {}: no valid answer, using offline match", mask.view_id, mask.label);
                    let mut r = match_region_offline(mask, index)?;
                    r.trace.rounds = rounds;
                    Ok(r)
                }
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by_key(|r| (r.view_id, r.label));
    Ok(results)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = i;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Groups view-regions whose UV footprints overlap with IoU > 0.5 (transitively)
/// and gives each group one material: the majority vote, ties going to the
/// material of the member with the largest footprint, then the smaller id.
pub fn reconcile_cross_view(results: &[MatchResult], uv_masks: &[UVMask], index: &LibraryIndex) -> Vec<MatchResult> {
    let footprint: Vec<Option<&UVMask>> = results
        .iter()
        .map(|r| uv_masks.iter().find(|m| m.view_id == r.view_id && m.label == r.label))
        .collect();
    let n = results.len();
    let mut uf = UnionFind((0..n).collect());
    for i in 0..n {
        for j in i + 1..n {
            if results[i].view_id == results[j].view_id {
                continue;
            }
            if let (Some(a), Some(b)) = (footprint[i], footprint[j]) {
                if a.iou(b) > 0.5 {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut out = results.to_vec();
    for members in groups.values() {
        if members.len() < 2 {
            continue;
        }
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for &m in members {
            *votes.entry(results[m].material_id.as_str()).or_default() += 1;
        }
        let top = *votes.values().max().expect("non-empty group");
        let tied: Vec<&str> = votes.iter().filter(|(_, &c)| c == top).map(|(m, _)| *m).collect();
        let winner = if tied.len() == 1 {
            tied[0].to_owned()
        } else {
            members
                .iter()
                .filter(|&&m| tied.contains(&results[m].material_id.as_str()))
                .max_by(|&&a, &&b| {
                    let fa = footprint[a].map_or(0, |f| f.texel_count);
                    let fb = footprint[b].map_or(0, |f| f.texel_count);
                    fa.cmp(&fb).then(results[b].material_id.cmp(&results[a].material_id))
                })
                .map(|&m| results[m].material_id.clone())
                .expect("tied materials have members")
        };
        for &m in members {
            if out[m].material_id != winner {
                let previous = std::mem::replace(&mut out[m].material_id, winner.clone());
                if let Some(rec) = index.get(&winner) {
                    out[m].trace.major_type = rec.major_type.clone();
                    out[m].trace.subcategory = rec.subcategory.clone();
                    out[m].trace.material_id = rec.id.clone();
                }
                out[m].reconciled_from = Some(previous);
            }
        }
    }
    out
}
