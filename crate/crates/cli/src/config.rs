use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glomfuse::features::{FeaturePanel, NeighbourhoodSpec};
use glomfuse::synthetic::SyntheticConfig;
use glomfuse::MatchParams;
use serde::{Deserialize, Serialize};

/// Input files of one slide. Paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideEntry {
    pub id: String,
    #[serde(default)]
    pub landmarks: Option<PathBuf>,
    #[serde(default)]
    pub cellmaps: Option<PathBuf>,
    /// Directory of PNG/PPM tiles with JSON sidecars.
    #[serde(default)]
    pub tiles: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Slides in stack order.
    pub slides: Vec<SlideEntry>,
    #[serde(rename = "match")]
    pub match_params: MatchParams,
    pub neighbourhood: NeighbourhoodSpec,
    pub panel: FeaturePanel,
    pub stain_config: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub histogram_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            slides: Vec::new(),
            match_params: MatchParams::tissue(),
            neighbourhood: NeighbourhoodSpec::default(),
            panel: FeaturePanel::default(),
            stain_config: None,
            synthetic: SyntheticConfig::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: None,
            histogram_bins: 10,
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads a config file and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        for s in &mut cfg.slides {
            for p in [&mut s.landmarks, &mut s.cellmaps, &mut s.tiles].into_iter().flatten() {
                rebase(&base, p);
            }
        }
        if let Some(p) = &mut cfg.stain_config {
            rebase(&base, p);
        }
        rebase(&base, &mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn slide_ids(&self) -> Vec<String> {
        self.slides.iter().map(|s| s.id.clone()).collect()
    }

    pub fn require_slides(&self, min: usize) -> Result<()> {
        if self.slides.len() < min {
            bail!("config lists {} slide(s), at least {min} required", self.slides.len());
        }
        let mut ids = self.slide_ids();
        ids.sort();
        ids.dedup();
        if ids.len() != self.slides.len() {
            bail!("slide ids in config are not unique");
        }
        Ok(())
    }
}
