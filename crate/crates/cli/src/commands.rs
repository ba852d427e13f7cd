use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use glomfuse::evaluation::{evaluate, metrics_json};
use glomfuse::features::{build_feature_matrix, chain_positions, pca_rank, FeatureMatrix, SlideData};
use glomfuse::matching::match_landmarks;
use glomfuse::stain::{extract_cells, load_tile, optical_density, unmix, StainConfig};
use glomfuse::synthetic::{format_repetitions, format_results, run_experiment, run_sweep, Experiment};
use glomfuse::{io, CellMap, Landmark, MatchChain};

use crate::config::{PipelineConfig, SlideEntry};

fn load_slide_landmarks(slide: &SlideEntry) -> Result<Vec<Landmark>> {
    let path = slide.landmarks.as_ref().ok_or_else(|| anyhow!("slide `{}` has no landmarks file", slide.id))?;
    Ok(io::load_landmarks(path, &slide.id)?)
}

pub fn match_file_name(source: &str, target: &str) -> String {
    format!("matches_{source}_{target}.tsv")
}

/// Matches every adjacent slide pair and chains the results.
pub fn cmd_match(cfg: &PipelineConfig) -> Result<()> {
    cfg.require_slides(2)?;
    cfg.match_params.validate()?;
    let landmarks: Vec<Vec<Landmark>> = cfg.slides.iter().map(load_slide_landmarks).collect::<Result<_>>()?;
    let mut sets = Vec::with_capacity(landmarks.len() - 1);
    for (k, pair) in landmarks.windows(2).enumerate() {
        let (a, b) = (&cfg.slides[k].id, &cfg.slides[k + 1].id);
        let set = match_landmarks(&pair[0], &pair[1], &cfg.match_params)
            .with_context(|| format!("matching `{a}` to `{b}`"))?;
        io::save_match_set(cfg.out_dir.join(match_file_name(a, b)), &set)?;
        eprintln!("match {a} -> {b}: {} of {}/{} landmarks paired", set.pairs.len(), pair[0].len(), pair[1].len());
        sets.push(set);
    }
    let chain = glomfuse::chain_matches(&sets)?;
    io::save_chain(cfg.out_dir.join("chains.tsv"), &chain)?;
    eprintln!("chains: {} rows, {} complete", chain.rows.len(), chain.complete_rows().count());
    Ok(())
}

/// Runs the synthetic robustness sweeps.
pub fn cmd_simulate(cfg: &PipelineConfig, experiment: Option<Experiment>, per_repetition: bool) -> Result<()> {
    let synth = &cfg.synthetic;
    let results = match experiment {
        Some(e) => run_sweep(synth, e)?,
        None => run_experiment(synth)?,
    };
    let path = cfg.out_dir.join("results.csv");
    io::save_text(&path, &format_results(&results))?;
    if per_repetition {
        io::save_text(cfg.out_dir.join("repetitions.csv"), &format_repetitions(&results))?;
    }
    eprintln!("simulate: {} levels x {} repetitions -> {}", results.len(), synth.n_repetitions, path.display());
    Ok(())
}

/// Scores a match file against reference correspondences.
pub fn cmd_evaluate(predicted: &Path, truth: &Path, out: Option<&Path>) -> Result<()> {
    let set = io::load_match_set(predicted)?;
    let gt = io::load_ground_truth(truth)?;
    let counts = evaluate(&set, &gt)
        .with_context(|| format!("evaluating {} against {}", predicted.display(), truth.display()))?;
    let text = format!("{:#}\n", metrics_json(&counts));
    print!("{text}");
    if let Some(out) = out {
        io::save_text(out, &text)?;
    }
    Ok(())
}

fn tile_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("cannot read tile directory {}", dir.display()))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Cell maps of one slide from its tile directory. Returns the maps and the
/// number of tiles that could not be processed.
pub fn deconvolve_slide(slide_id: &str, dir: &Path, stains: &StainConfig) -> Result<(Vec<CellMap>, usize)> {
    let matrix = stains.matrix()?;
    let mut maps: Vec<CellMap> =
        stains.cells.iter().map(|r| CellMap::new(slide_id, &r.cell_type, Vec::new())).collect();
    let mut skipped = 0;
    for file in tile_files(dir)? {
        let tile = match load_tile(&file) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("warning: skipping tile: {e}");
                skipped += 1;
                continue;
            }
        };
        let conc = unmix(&optical_density(&tile, stains.background)?, &matrix);
        for (rule, map) in stains.cells.iter().zip(&mut maps) {
            let found = extract_cells(&conc, slide_id, rule).with_context(|| format!("tile {}", file.display()))?;
            map.points.extend(found.points);
        }
    }
    Ok((maps, skipped))
}

pub fn cellmap_file_name(slide: &str) -> String {
    format!("{slide}_cells.csv")
}

/// Colour deconvolution over each slide's tile directory.
pub fn cmd_deconvolve(cfg: &PipelineConfig) -> Result<()> {
    let stain_path = cfg.stain_config.as_ref().ok_or_else(|| anyhow!("no stain config given"))?;
    let stains = StainConfig::load(stain_path)?;
    if stains.cells.is_empty() {
        bail!("stain config {} defines no cell rules", stain_path.display());
    }
    let mut total_skipped = 0;
    for slide in &cfg.slides {
        let Some(dir) = &slide.tiles else { continue };
        let (maps, skipped) = deconvolve_slide(&slide.id, dir, &stains)?;
        total_skipped += skipped;
        io::save_cellmaps(cfg.out_dir.join(cellmap_file_name(&slide.id)), &maps)?;
        let counts: Vec<String> = maps.iter().map(|m| format!("{}={}", m.cell_type, m.points.len())).collect();
        eprintln!("deconvolve {}: {} ({skipped} tiles skipped)", slide.id, counts.join(" "));
    }
    eprintln!("deconvolve: {total_skipped} tiles skipped in total");
    Ok(())
}

fn load_chain_for(cfg: &PipelineConfig, chain: Option<&Path>) -> Result<MatchChain> {
    let path = chain.map_or_else(|| cfg.out_dir.join("chains.tsv"), Path::to_path_buf);
    let chain = io::load_chain(&path)?;
    if chain.slides != cfg.slide_ids() {
        bail!("chain {} covers slides {:?}, config lists {:?}", path.display(), chain.slides, cfg.slide_ids());
    }
    Ok(chain)
}

fn load_slide_data(cfg: &PipelineConfig, slide: &SlideEntry) -> Result<SlideData> {
    let cells = slide.cellmaps.clone().unwrap_or_else(|| cfg.out_dir.join(cellmap_file_name(&slide.id)));
    Ok(SlideData {
        slide_id: slide.id.clone(),
        landmarks: load_slide_landmarks(slide)?,
        cellmaps: io::load_cellmaps(&cells, &slide.id)?,
    })
}

/// Feature matrix over the complete chains.
pub fn cmd_features(cfg: &PipelineConfig, chain: Option<&Path>) -> Result<()> {
    cfg.require_slides(2)?;
    let chain = load_chain_for(cfg, chain)?;
    let slides: Vec<SlideData> = cfg.slides.iter().map(|s| load_slide_data(cfg, s)).collect::<Result<_>>()?;
    let build = build_feature_matrix(&chain, &slides, &cfg.panel, &cfg.neighbourhood)?;
    let path = cfg.out_dir.join("features.csv");
    io::save_text(&path, &build.matrix.to_csv())?;
    eprintln!(
        "features: {} rows x {} columns -> {}",
        build.matrix.row_ids.len(),
        build.matrix.columns.len(),
        path.display()
    );
    if !build.incomplete_chains.is_empty() {
        eprintln!(
            "features: {} incomplete chains left out: {}",
            build.incomplete_chains.len(),
            build.incomplete_chains.join(",")
        );
    }
    Ok(())
}

/// PCA ranking of the feature matrix, with score histogram and overlay.
pub fn cmd_rank(cfg: &PipelineConfig, features: Option<&Path>, chain: Option<&Path>, bins: usize) -> Result<()> {
    let path = features.map_or_else(|| cfg.out_dir.join("features.csv"), Path::to_path_buf);
    let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let matrix = FeatureMatrix::from_csv(&text, &path)?;
    let rank = pca_rank(&matrix)?;
    io::save_text(cfg.out_dir.join("scores.csv"), &rank.scores_csv())?;
    io::save_text(cfg.out_dir.join("loadings.json"), &format!("{:#}\n", rank.loadings_json()))?;
    io::save_text(cfg.out_dir.join("histogram.csv"), &rank.histogram_csv(bins))?;
    eprintln!(
        "rank: {} rows scored, leading component explains {:.3} of variance",
        rank.scores.len(),
        rank.explained_variance
    );

    let overlay = cfg
        .slides
        .first()
        .map(|first| -> Result<BTreeMap<String, glomfuse::Point>> {
            let chain = load_chain_for(cfg, chain)?;
            Ok(chain_positions(&chain, &load_slide_landmarks(first)?))
        })
        .transpose();
    match overlay {
        Ok(Some(positions)) => {
            let mut s = String::from("chain_id,x,y,score\n");
            for (id, score) in &rank.scores {
                if let Some(p) = positions.get(id) {
                    s.push_str(&format!("{id},{},{},{score}\n", p.x, p.y));
                }
            }
            io::save_text(cfg.out_dir.join("overlay.csv"), &s)?;
        }
        Ok(None) => eprintln!("warning: no slides configured, overlay not written"),
        Err(e) => eprintln!("warning: overlay not written: {e:#}"),
    }
    Ok(())
}
