//! End-to-end orchestration: every stage reads its inputs from and writes its
//! outputs to the run directory, so a full run is exactly the stages applied in
//! order and any stage can be re-run in isolation.

mod artifacts;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use artifacts::{decode_uv_mask, encode_uv_mask, Layout};
pub use config::{MaskSource, MatcherMode, PipelineConfig};

use crate::estimator::{estimate, EstimateOptions};
use crate::library::{load_library, LibraryIndex};
use crate::matcher::{match_region_offline, match_regions_mllm, reconcile_cross_view, MatchError, MatchResult};
use crate::mesh_io::{decode_png, export_bundle, load_texture, parse_obj, BitDepth, Mesh, Role, TextureMap};
use crate::mllm::{ClientConfig, MllmClient, MllmError, Part, PromptPayload, ReplayTransport, Transport};
use crate::partition::{
    backproject_mask, build_occupancy_with, merge_views, read_partition, refine_missing, write_partition, Occupancy,
};
use crate::render::{make_camera_ring, rasterize, RingSpec};
use crate::seg::{annotate_som, fallback_segment, filter_masks, AnnotatedImage, DroppedMask, FallbackParams, RegionInfo};
use artifacts::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Render,
    Segment,
    Annotate,
    Match,
    Backproject,
    Reconcile,
    Merge,
    Refine,
    Estimate,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Render,
        Stage::Segment,
        Stage::Annotate,
        Stage::Match,
        Stage::Backproject,
        Stage::Reconcile,
        Stage::Merge,
        Stage::Refine,
        Stage::Estimate,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Render => "render",
            Stage::Segment => "segment",
            Stage::Annotate => "annotate",
            Stage::Match => "match",
            Stage::Backproject => "backproject",
            Stage::Reconcile => "reconcile",
            Stage::Merge => "merge",
            Stage::Refine => "refine",
            Stage::Estimate => "estimate",
            Stage::Export => "export",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "");
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage}: missing prior artifact {}", path.display())]
    MissingPriorArtifact { stage: String, path: PathBuf },
    #[error("{stage}: {message}")]
    Stage { stage: String, message: String },
    #[error("{stage}: {source}")]
    Mllm {
        stage: String,
        #[source]
        source: MllmError,
    },
}

impl PipelineError {
    pub fn stage(stage: &str, e: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage: stage.to_owned(),
            message: e.to_string(),
        }
    }

    fn mllm(stage: &str, source: MllmError) -> Self {
        PipelineError::Mllm {
            stage: stage.to_owned(),
            source,
        }
    }

    fn from_match(stage: &str, e: MatchError) -> Self {
        match e {
            MatchError::Mllm(m) => Self::mllm(stage, m),
            other => Self::stage(stage, other),
        }
    }

    /// 2 config, 3 stage failure, 4 unusable model endpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Mllm { source, .. } if source.is_fatal() => 4,
            _ => 3,
        }
    }

    pub fn stage_name(&self) -> Option<&str> {
        match self {
            PipelineError::Config(_) => None,
            PipelineError::MissingPriorArtifact { stage, .. }
            | PipelineError::Stage { stage, .. }
            | PipelineError::Mllm { stage, .. } => Some(stage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub seconds: f64,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub view_id: usize,
    pub label: u32,
    pub material_id: String,
    pub source: crate::matcher::MatchSource,
    pub prompt_rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconciled_from: Option<String>,
}

/// Machine-readable summary written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub config: PipelineConfig,
    pub stages: Vec<StageReport>,
    pub regions: Vec<RegionRow>,
    /// Texels per material in the final partition.
    pub materials: BTreeMap<String, usize>,
    pub mllm_calls: usize,
}

#[derive(Serialize, Deserialize)]
struct ViewRegions {
    view_id: usize,
    regions: Vec<RegionInfo>,
    dropped: Vec<DroppedMask>,
}

/// A validated config plus the model client its matcher mode needs.
pub struct Pipeline {
    cfg: PipelineConfig,
    layout: Layout,
    client: Option<MllmClient>,
}

impl Pipeline {
    /// Validates `cfg` and, for model-backed matching, builds the client up front
    /// so a missing key or bad endpoint fails before any work is done.
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        Self::with_transport(cfg, None)
    }

    /// Like [`Pipeline::new`], with live model traffic sent to `transport`
    /// instead of the HTTP endpoint.
    pub fn with_transport(cfg: PipelineConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let client = match cfg.matcher {
            MatcherMode::Offline => None,
            MatcherMode::Mllm => {
                if transport.is_none() && std::env::var("MLLM_API_KEY").map_or(true, |k| k.is_empty()) {
                    return Err(PipelineError::mllm("match", MllmError::MissingApiKey));
                }
                let log = cfg.session_log_path();
                if let Some(dir) = log.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| PipelineError::Config(format!("{}: {e}", dir.display())))?;
                }
                let cc = ClientConfig {
                    session_log: Some(log),
                    ..ClientConfig::default()
                };
                let client = match transport {
                    Some(t) => MllmClient::new(t, cc),
                    None => MllmClient::from_env(cc),
                };
                Some(client.map_err(|e| PipelineError::mllm("match", e))?)
            }
            MatcherMode::Replay => {
                let path = cfg.replay_log.as_ref().expect("validated");
                let t: Arc<dyn Transport> = match transport {
                    Some(t) => t,
                    None => Arc::new(ReplayTransport::load(path).map_err(|e| PipelineError::Config(e.to_string()))?),
                };
                let cc = ClientConfig {
                    model: std::env::var("MLLM_MODEL").unwrap_or_else(|_| ClientConfig::default().model),
                    ..ClientConfig::default()
                };
                Some(MllmClient::new(t, cc).map_err(|e| PipelineError::mllm("match", e))?)
            }
        };
        Ok(Self {
            layout: Layout::new(&cfg.output),
            cfg,
            client,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn mllm_calls(&self) -> usize {
        self.client.as_ref().map_or(0, MllmClient::calls)
    }

    /// Runs every stage in order and writes `run.json`, also on failure.
    pub fn run(&self) -> (RunManifest, Result<(), PipelineError>) {
        let mut stages = Vec::new();
        let mut outcome = Ok(());
        for stage in Stage::ALL {
            match self.run_stage(stage) {
                Ok(r) => stages.push(r),
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            }
        }
        let manifest = self.manifest(stages, outcome.as_ref().err());
        if let Err(e) = write_json(&self.layout.run_manifest(), &manifest) {
            log::warn!("could not write run manifest: {e}");
        }
        (manifest, outcome)
    }

    fn manifest(&self, stages: Vec<StageReport>, err: Option<&PipelineError>) -> RunManifest {
        let regions = read_json::<Vec<MatchResult>>("report", &self.layout.report())
            .map(|rs| {
                rs.iter()
                    .map(|r| RegionRow {
                        view_id: r.view_id,
                        label: r.label,
                        material_id: r.material_id.clone(),
                        source: r.source,
                        prompt_rounds: r.prompt_rounds(),
                        reconciled_from: r.reconciled_from.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let materials = read_partition(&self.layout.dir("partition"), "partition")
            .map(|p| p.material_counts().into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
            .unwrap_or_default();
        RunManifest {
            exit_code: err.map_or(0, PipelineError::exit_code),
            error: err.map(|e| e.to_string()),
            failed_stage: err.and_then(|e| e.stage_name().map(str::to_owned)),
            config: self.cfg.clone(),
            stages,
            regions,
            materials,
            mllm_calls: self.mllm_calls(),
        }
    }

    /// Executes one stage against the run directory.
    pub fn run_stage(&self, stage: Stage) -> Result<StageReport, PipelineError> {
        let start = Instant::now();
        log::info!("stage {stage}");
        let summary = match stage {
            Stage::Render => self.render(),
            Stage::Segment => self.segment(),
            Stage::Annotate => self.annotate(),
            Stage::Match => self.match_regions(),
            Stage::Backproject => self.backproject(),
            Stage::Reconcile => self.reconcile(),
            Stage::Merge => self.merge(),
            Stage::Refine => self.refine(),
            Stage::Estimate => self.estimate(),
            Stage::Export => self.export(),
        }?;
        Ok(StageReport {
            stage,
            seconds: start.elapsed().as_secs_f64(),
            summary,
        })
    }

    fn mesh(&self, stage: &str) -> Result<Mesh, PipelineError> {
        let bytes = std::fs::read(&self.cfg.mesh).map_err(|e| PipelineError::stage(stage, e))?;
        parse_obj(&bytes).map_err(|e| PipelineError::stage(stage, e))
    }

    fn diffuse(&self, stage: &str) -> Result<TextureMap, PipelineError> {
        load_texture(&self.cfg.diffuse, Role::Diffuse).map_err(|e| PipelineError::stage(stage, e))
    }

    fn library(&self, stage: &str) -> Result<LibraryIndex, PipelineError> {
        load_library(&self.cfg.library).map_err(|e| PipelineError::stage(stage, e))
    }

    fn occupancy(&self, stage: &str, mesh: &Mesh) -> Result<Occupancy, PipelineError> {
        let (w, h) = self.diffuse(stage)?.dims();
        Ok(build_occupancy_with(mesh, w, h, self.cfg.uv_dilation))
    }

    fn io(stage: &str) -> impl Fn(std::io::Error) -> PipelineError + '_ {
        move |e| PipelineError::stage(stage, e)
    }

    fn render(&self) -> Result<Value, PipelineError> {
        const S: &str = "render";
        let mesh = self.mesh(S)?;
        let diffuse = self.diffuse(S)?;
        let spec = RingSpec {
            views: self.cfg.views,
            width: self.cfg.resolution,
            height: self.cfg.resolution,
            ..RingSpec::default()
        };
        let cams = make_camera_ring(&mesh, &spec).map_err(|e| PipelineError::stage(S, e))?;
        fresh_dir(&self.layout.dir("render")).map_err(Self::io(S))?;
        let mut coverage = Vec::new();
        for (k, cam) in cams.iter().enumerate() {
            let r = rasterize(&mesh, &diffuse, cam).map_err(|e| PipelineError::stage(S, e))?;
            r.color
                .save_png(&self.layout.render_color(k), BitDepth::Sixteen)
                .map_err(|e| PipelineError::stage(S, e))?;
            std::fs::write(self.layout.render_gbuffer(k), r.gbuffer.to_bytes()).map_err(Self::io(S))?;
            if self.cfg.dump_gbuffer {
                let (depth, uv) = gbuffer_debug_maps(&r.gbuffer);
                let dir = self.layout.dir("render");
                depth
                    .save_png(&dir.join(format!("view{k}_depth.png")), BitDepth::Sixteen)
                    .and_then(|_| uv.save_exr(&dir.join(format!("view{k}_uv.exr"))))
                    .map_err(|e| PipelineError::stage(S, e))?;
            }
            coverage.push(r.gbuffer.coverage());
        }
        write_json(&self.layout.cameras(), &cams).map_err(Self::io(S))?;
        Ok(json!({ "views": cams.len(), "foreground_pixels": coverage }))
    }

    fn segment(&self) -> Result<Value, PipelineError> {
        const S: &str = "segment";
        let cams = read_cameras(S, &self.layout)?;
        fresh_dir(&self.layout.masks()).map_err(Self::io(S))?;
        let params = FallbackParams {
            k_max: self.cfg.k_max,
            seed: self.cfg.seed,
            merge_fraction: self.cfg.merge_fraction,
            ..FallbackParams::default()
        };
        let mut views = Vec::new();
        for (k, cam) in cams.iter().enumerate() {
            let r = read_render(S, &self.layout, k, cam)?;
            let raw = if r.gbuffer.coverage() == 0 {
                Vec::new()
            } else {
                match &self.cfg.masks {
                    MaskSource::Fallback => fallback_segment(&r, k, &params),
                    MaskSource::Files(dir) => match crate::seg::load_masks(dir, k, &r) {
                        Ok(m) => m,
                        Err(crate::seg::SegError::NoMasksFound(_)) => Vec::new(),
                        Err(e) => return Err(PipelineError::stage(S, e)),
                    },
                }
            };
            let out = filter_masks(&raw, &r.gbuffer, &r.color, self.cfg.dust_fraction);
            for m in &out.masks {
                m.save_png(&self.layout.masks().join(format!("view{k}_region{}.png", m.label)))
                    .map_err(|e| PipelineError::stage(S, e))?;
            }
            views.push(ViewRegions {
                view_id: k,
                regions: out.masks.iter().map(RegionInfo::from).collect(),
                dropped: out.dropped,
            });
        }
        let total: usize = views.iter().map(|v| v.regions.len()).sum();
        if total == 0 {
            return Err(PipelineError::stage(S, "no regions in any view"));
        }
        write_json(&self.layout.masks().join("regions.json"), &views).map_err(Self::io(S))?;
        Ok(json!({ "regions_per_view": views.iter().map(|v| v.regions.len()).collect::<Vec<_>>() }))
    }

    fn annotate(&self) -> Result<Value, PipelineError> {
        const S: &str = "annotate";
        let cams = read_cameras(S, &self.layout)?;
        fresh_dir(&self.layout.dir("annotated")).map_err(Self::io(S))?;
        let mut marks = 0;
        for (k, cam) in cams.iter().enumerate() {
            let r = read_render(S, &self.layout, k, cam)?;
            let masks = read_masks(S, &self.layout, k, &r)?;
            let mut a = annotate_som(&r.color, &masks);
            a.view_id = k;
            let png = a.to_png().map_err(|e| PipelineError::stage(S, e))?;
            std::fs::write(self.layout.annotated(k), png).map_err(Self::io(S))?;
            write_json(&self.layout.marks(k), &a.marks).map_err(Self::io(S))?;
            marks += a.marks.len();
        }
        Ok(json!({ "marks": marks }))
    }

    /// Hint text from the config, or the model's description of the hint image.
    fn object_hint(&self, client: &MllmClient) -> Result<Option<String>, PipelineError> {
        const S: &str = "match";
        if let Some(h) = &self.cfg.object_hint {
            return Ok(Some(h.clone()));
        }
        let Some(path) = &self.cfg.object_hint_image else {
            return Ok(None);
        };
        let bytes = std::fs::read(path).map_err(Self::io(S))?;
        let img = decode_png(&bytes, Role::Diffuse).map_err(|e| PipelineError::stage(S, e))?;
        let png = img.encode_png(BitDepth::Eight).map_err(|e| PipelineError::stage(S, e))?;
        let payload = PromptPayload::new("You describe objects in reference images for a material-annotation task.").user(vec![
            Part::text(
                "Describe the object in this image in two or three sentences, naming each visible part and \
                 the material it appears to be made of.",
            ),
            Part::png(png),
        ]);
        let resp = client.complete(&payload).map_err(|e| PipelineError::mllm(S, e))?;
        Ok(Some(resp.raw.trim().to_owned()))
    }

    fn match_regions(&self) -> Result<Value, PipelineError> {
        const S: &str = "match";
        let cams = read_cameras(S, &self.layout)?;
        let lib = self.library(S)?;
        let hint = match &self.client {
            Some(c) => self.object_hint(c)?,
            None => None,
        };
        let mut results = Vec::new();
        for (k, cam) in cams.iter().enumerate() {
            let r = read_render(S, &self.layout, k, cam)?;
            let masks = read_masks(S, &self.layout, k, &r)?;
            if masks.is_empty() {
                continue;
            }
            let view = match &self.client {
                None => masks
                    .iter()
                    .map(|m| match_region_offline(m, &lib))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| PipelineError::from_match(S, e))?,
                Some(client) => {
                    let path = self.layout.annotated(k);
                    require(S, &path)?;
                    let image = decode_png(&std::fs::read(&path).map_err(Self::io(S))?, Role::Diffuse)
                        .map_err(|e| PipelineError::stage(S, e))?;
                    let annotated = AnnotatedImage {
                        view_id: k,
                        image,
                        marks: read_marks(S, &self.layout, k)?,
                    };
                    match_regions_mllm(client, &annotated, &masks, &lib, hint.as_deref())
                        .map_err(|e| PipelineError::from_match(S, e))?
                }
            };
            results.extend(view);
        }
        results.sort_by_key(|r| (r.view_id, r.label));
        if let Some(h) = &hint {
            std::fs::write(self.layout.object_hint(), h).map_err(Self::io(S))?;
        }
        write_json(&self.layout.matches(), &results).map_err(Self::io(S))?;
        let fallbacks = results
            .iter()
            .filter(|r| r.source == crate::matcher::MatchSource::Offline && self.client.is_some())
            .count();
        Ok(json!({ "regions": results.len(), "offline_fallbacks": fallbacks }))
    }

    fn backproject(&self) -> Result<Value, PipelineError> {
        const S: &str = "backproject";
        let cams = read_cameras(S, &self.layout)?;
        let mesh = self.mesh(S)?;
        let occ = self.occupancy(S, &mesh)?;
        fresh_dir(&self.layout.dir("uv")).map_err(Self::io(S))?;
        let mut texels = Vec::new();
        for (k, cam) in cams.iter().enumerate() {
            let r = read_render(S, &self.layout, k, cam)?;
            for m in read_masks(S, &self.layout, k, &r)? {
                let uv = backproject_mask(&m, &r.gbuffer, &occ);
                std::fs::write(self.layout.uv_mask(k, m.label), encode_uv_mask(&uv)).map_err(Self::io(S))?;
                texels.push(uv.texel_count);
            }
        }
        Ok(json!({ "uv_masks": texels.len(), "occupied_texels": occ.count() }))
    }

    fn uv_masks_for(&self, stage: &str, results: &[MatchResult]) -> Result<Vec<crate::partition::UVMask>, PipelineError> {
        results
            .iter()
            .map(|r| read_uv_mask(stage, &self.layout, r.view_id, r.label))
            .collect()
    }

    fn reconcile(&self) -> Result<Value, PipelineError> {
        const S: &str = "reconcile";
        let results: Vec<MatchResult> = read_json(S, &self.layout.matches())?;
        let uv = self.uv_masks_for(S, &results)?;
        let lib = self.library(S)?;
        let out = reconcile_cross_view(&results, &uv, &lib);
        write_json(&self.layout.report(), &out).map_err(Self::io(S))?;
        let changed = out.iter().filter(|r| r.reconciled_from.is_some()).count();
        Ok(json!({ "regions": out.len(), "reconciled": changed }))
    }

    fn merge(&self) -> Result<Value, PipelineError> {
        const S: &str = "merge";
        let results: Vec<MatchResult> = read_json(S, &self.layout.report())?;
        let uv = self.uv_masks_for(S, &results)?;
        let mesh = self.mesh(S)?;
        let occ = self.occupancy(S, &mesh)?;
        let labeled: Vec<_> = uv.into_iter().zip(results.iter().map(|r| r.material_id.clone())).collect();
        let part = merge_views(&labeled, &occ);
        write_partition(&part, &self.layout.dir("partition"), "merged").map_err(|e| PipelineError::stage(S, e))?;
        Ok(json!({
            "occupied": part.occupied_count(),
            "unassigned": part.unassigned_count(),
            "materials": part.materials,
        }))
    }

    fn refine(&self) -> Result<Value, PipelineError> {
        const S: &str = "refine";
        let dir = self.layout.dir("partition");
        require(S, &dir.join("merged.png"))?;
        let merged = read_partition(&dir, "merged").map_err(|e| PipelineError::stage(S, e))?;
        let diffuse = self.diffuse(S)?;
        let part = refine_missing(&merged, &diffuse).map_err(|e| PipelineError::stage(S, e))?;
        write_partition(&part, &dir, "partition").map_err(|e| PipelineError::stage(S, e))?;
        Ok(json!({ "filled": merged.unassigned_count(), "unassigned": part.unassigned_count() }))
    }

    fn estimate(&self) -> Result<Value, PipelineError> {
        const S: &str = "estimate";
        let dir = self.layout.dir("partition");
        require(S, &dir.join("partition.png"))?;
        let part = read_partition(&dir, "partition").map_err(|e| PipelineError::stage(S, e))?;
        let diffuse = self.diffuse(S)?;
        let lib = self.library(S)?;
        let set = estimate(
            &diffuse,
            &part,
            &lib,
            EstimateOptions {
                emit_albedo: self.cfg.emit_albedo,
            },
        )
        .map_err(|e| PipelineError::stage(S, e))?;
        fresh_dir(&self.layout.dir("estimate")).map_err(Self::io(S))?;
        for (role, map) in &set.maps {
            map.save_exr(&self.layout.estimate_map(*role)).map_err(|e| PipelineError::stage(S, e))?;
        }
        Ok(json!({ "maps": set.maps.keys().map(|r| r.name()).collect::<Vec<_>>(), "size": set.dims() }))
    }

    fn export(&self) -> Result<Value, PipelineError> {
        const S: &str = "export";
        let mesh = self.mesh(S)?;
        let mut maps = Vec::new();
        for role in Role::ALL {
            let path = self.layout.estimate_map(role);
            if path.exists() {
                maps.push(load_texture(&path, role).map_err(|e| PipelineError::stage(S, e))?);
            } else if Role::SVBRDF.contains(&role) {
                return Err(PipelineError::MissingPriorArtifact {
                    stage: S.to_owned(),
                    path,
                });
            }
        }
        let out = self.layout.dir("export");
        fresh_dir(&out).map_err(Self::io(S))?;
        let depth = if self.cfg.deep { BitDepth::Sixteen } else { BitDepth::Eight };
        let stem = self.cfg.export_stem();
        let manifest = export_bundle(&mesh, &maps, &out, &stem, depth).map_err(|e| PipelineError::stage(S, e))?;
        if self.cfg.dump_partition {
            let part = read_partition(&self.layout.dir("partition"), "partition").map_err(|e| PipelineError::stage(S, e))?;
            write_partition(&part, &out, &format!("{stem}_provenance")).map_err(|e| PipelineError::stage(S, e))?;
        }
        Ok(serde_json::to_value(manifest).expect("manifest serializes"))
    }
}

/// Validates, runs every stage and returns the manifest; `exit_code` is set on failure.
pub fn run_pipeline(cfg: PipelineConfig) -> RunManifest {
    run_pipeline_with(cfg, None)
}

pub fn run_pipeline_with(cfg: PipelineConfig, transport: Option<Arc<dyn Transport>>) -> RunManifest {
    match Pipeline::with_transport(cfg.clone(), transport) {
        Ok(p) => p.run().0,
        Err(e) => RunManifest {
            exit_code: e.exit_code(),
            error: Some(e.to_string()),
            failed_stage: e.stage_name().map(str::to_owned),
            config: cfg,
            stages: Vec::new(),
            regions: Vec::new(),
            materials: BTreeMap::new(),
            mllm_calls: 0,
        },
    }
}

/// Runs one named stage; unknown names are config errors.
pub fn run_stage(name: &str, cfg: PipelineConfig) -> Result<StageReport, PipelineError> {
    let stage: Stage = name.parse()?;
    Pipeline::new(cfg)?.run_stage(stage)
}
