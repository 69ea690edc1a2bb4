use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherMode {
    /// Live vision model through the configured endpoint.
    Mllm,
    /// Nearest mean diffuse color, no model calls.
    Offline,
    /// Vision-model answers served from a recorded session log.
    Replay,
}

impl std::str::FromStr for MatcherMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mllm" => Ok(Self::Mllm),
            "offline" => Ok(Self::Offline),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown matcher {other:?} (expected mllm, offline or replay)")),
        }
    }
}

/// `"fallback"` or `{"files": "<dir>"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSource {
    Fallback,
    Files(PathBuf),
}

fn default_views() -> usize {
    3
}

fn default_resolution() -> usize {
    512
}

fn default_k_max() -> usize {
    6
}

fn default_dust_fraction() -> f64 {
    0.002
}

fn default_merge_fraction() -> f64 {
    0.005
}

fn default_uv_dilation() -> usize {
    1
}

fn default_masks() -> MaskSource {
    MaskSource::Fallback
}

fn default_matcher() -> MatcherMode {
    MatcherMode::Offline
}

/// One flat JSON document describing a single asset run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    pub diffuse: PathBuf,
    pub library: PathBuf,
    pub output: PathBuf,
    #[serde(default = "default_views")]
    pub views: usize,
    /// Square render size in pixels.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_matcher")]
    pub matcher: MatcherMode,
    #[serde(default = "default_masks")]
    pub masks: MaskSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Regions below this fraction of a view's foreground are dropped.
    #[serde(default = "default_dust_fraction")]
    pub dust_fraction: f64,
    /// Fallback-segmenter components below this fraction are merged into a neighbour.
    #[serde(default = "default_merge_fraction")]
    pub merge_fraction: f64,
    #[serde(default = "default_uv_dilation")]
    pub uv_dilation: usize,
    /// Text describing the object, prepended to every matcher prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_hint: Option<String>,
    /// Reference image described by the model to obtain `object_hint`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_hint_image: Option<PathBuf>,
    /// Session log served in replay mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_log: Option<PathBuf>,
    /// Where live calls are logged; defaults to `<output>/match/session.jsonl`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_log: Option<PathBuf>,
    /// Base name of exported files; defaults to the mesh file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
    #[serde(default)]
    pub emit_albedo: bool,
    #[serde(default)]
    pub dump_gbuffer: bool,
    #[serde(default)]
    pub dump_partition: bool,
    /// 16-bit PNG export.
    #[serde(default)]
    pub deep: bool,
}

impl PipelineConfig {
    /// Minimal config with every optional field at its default.
    pub fn new(mesh: impl Into<PathBuf>, diffuse: impl Into<PathBuf>, library: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        Self {
            mesh: mesh.into(),
            diffuse: diffuse.into(),
            library: library.into(),
            output: output.into(),
            views: default_views(),
            resolution: default_resolution(),
            matcher: default_matcher(),
            masks: default_masks(),
            seed: 0,
            k_max: default_k_max(),
            dust_fraction: default_dust_fraction(),
            merge_fraction: default_merge_fraction(),
            uv_dilation: default_uv_dilation(),
            object_hint: None,
            object_hint_image: None,
            replay_log: None,
            session_log: None,
            stem: None,
            emit_albedo: false,
            dump_gbuffer: false,
            dump_partition: false,
            deep: false,
        }
    }

    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_relative(base);
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.mesh);
        fix(&mut self.diffuse);
        fix(&mut self.library);
        fix(&mut self.output);
        if let MaskSource::Files(dir) = &mut self.masks {
            fix(dir);
        }
        for p in [&mut self.object_hint_image, &mut self.replay_log, &mut self.session_log]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.views == 0 {
            return bad("views must be at least 1".into());
        }
        if self.resolution < 8 {
            return bad(format!("resolution {} is below 8 px", self.resolution));
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        for (name, f) in [("dust_fraction", self.dust_fraction), ("merge_fraction", self.merge_fraction)] {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("{name} {f} is outside [0, 1)"));
            }
        }
        let must_exist = |what: &str, p: &Path| -> Result<(), PipelineError> {
            if p.exists() {
                Ok(())
            } else {
                Err(PipelineError::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        must_exist("mesh", &self.mesh)?;
        must_exist("diffuse", &self.diffuse)?;
        must_exist("library", &self.library)?;
        if let MaskSource::Files(dir) = &self.masks {
            must_exist("mask directory", dir)?;
        }
        if let Some(p) = &self.object_hint_image {
            must_exist("object hint image", p)?;
        }
        if self.matcher == MatcherMode::Replay {
            match &self.replay_log {
                Some(p) => must_exist("replay log", p)?,
                None => return bad("matcher replay needs replay_log".into()),
            }
        }
        Ok(())
    }

    pub fn export_stem(&self) -> String {
        self.stem.clone().unwrap_or_else(|| {
            self.mesh
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("asset")
                .to_owned()
        })
    }

    pub fn session_log_path(&self) -> PathBuf {
        self.session_log
            .clone()
            .unwrap_or_else(|| self.output.join("match").join("session.jsonl"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_mask_source_forms() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"mesh":"m.obj","diffuse":"d.png","library":"lib","output":"out"}"#).unwrap();
        assert_eq!(cfg.views, 3);
        assert_eq!(cfg.resolution, 512);
        assert_eq!(cfg.matcher, MatcherMode::Offline);
        assert_eq!(cfg.masks, MaskSource::Fallback);
        assert_eq!(cfg.export_stem(), "m");
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"mesh":"m.obj","diffuse":"d.png","library":"lib","output":"out","masks":{"files":"sam"},"matcher":"replay"}"#,
        )
        .unwrap();
        assert_eq!(cfg.masks, MaskSource::Files("sam".into()));
        assert_eq!(cfg.matcher, MatcherMode::Replay);
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: Result<PipelineConfig, _> =
            serde_json::from_str(r#"{"mesh":"m","diffuse":"d","library":"l","output":"o","view":2}"#);
        assert!(r.is_err());
    }

    #[test]
    fn relative_paths_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.obj"), "").unwrap();
        std::fs::write(dir.path().join("d.png"), "").unwrap();
        std::fs::create_dir(dir.path().join("lib")).unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"mesh":"m.obj","diffuse":"d.png","library":"lib","output":"out"}"#).unwrap();
        let mut cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.mesh, dir.path().join("m.obj"));
        cfg.validate().unwrap();
        cfg.views = 0;
        assert!(cfg.validate().is_err());
        cfg.views = 1;
        cfg.matcher = MatcherMode::Replay;
        assert!(cfg.validate().is_err());
        cfg.matcher = MatcherMode::Offline;
        cfg.diffuse = dir.path().join("nope.png");
        assert!(cfg.validate().is_err());
    }
}
