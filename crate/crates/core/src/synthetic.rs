//! Synthetic landmark pairs with known correspondence, and the Shift and
//! Unpaired robustness sweeps built on them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, mean_defined, ConfusionCounts};
use crate::features::{FeaturePanel, SlideData};
use crate::geometry::{Point, Polygon};
use crate::matching::{match_landmarks, MatchParams};
use crate::model::{CellMap, GroundTruthMatches, Landmark};
use crate::par;

pub const SLIDE_A: &str = "A";
pub const SLIDE_B: &str = "B";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Field width and height (µm-equivalent units).
    pub field_size: (f64, f64),
    pub n_points: usize,
    pub n_repetitions: usize,
    pub sigma_shift: Vec<f64>,
    pub unpaired_fraction: Vec<f64>,
    pub rng_seed: u64,
    pub params: MatchParams,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            field_size: (300.0, 300.0),
            n_points: 30,
            n_repetitions: 50,
            sigma_shift: (0..=11).map(f64::from).collect(),
            unpaired_fraction: (0..=10).map(|k| f64::from(k) / 20.0).collect(),
            rng_seed: 0,
            params: MatchParams::synthetic(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.field_size;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidParameter("field size must be positive".into()));
        }
        if self.n_points == 0 || self.n_repetitions == 0 {
            return Err(Error::InvalidParameter("point and repetition counts must be positive".into()));
        }
        if self.sigma_shift.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("shift standard deviations must be >= 0".into()));
        }
        if self.unpaired_fraction.iter().any(|&f| !(f >= 0.0 && f.is_finite())) {
            return Err(Error::InvalidParameter("unpaired fractions must be >= 0".into()));
        }
        self.params.validate()
    }
}

/// Two landmark sets and their reference correspondence.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub a: Vec<Landmark>,
    pub b: Vec<Landmark>,
    pub truth: GroundTruthMatches,
}

/// Number of spurious points added per side for a given fraction.
pub fn spurious_count(n_points: usize, fraction: f64) -> usize {
    (fraction * n_points as f64 + 1e-9).floor() as usize
}

fn draw_distinct(rng: &mut ChaCha8Rng, field: (f64, f64), taken: &[Point]) -> Point {
    loop {
        let p = Point::new(rng.random::<f64>() * field.0, rng.random::<f64>() * field.1);
        if !taken.contains(&p) {
            return p;
        }
    }
}

/// Generates one pair: shared base points, Gaussian shift on the second copy,
/// and independent spurious points on each side.
pub fn generate_pair(config: &SyntheticConfig, sigma: f64, unpaired: f64, seed: u64) -> SyntheticPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n_points;
    let mut base: Vec<Point> = Vec::with_capacity(n);
    for _ in 0..n {
        let p = draw_distinct(&mut rng, config.field_size, &base);
        base.push(p);
    }
    let mut moved: Vec<Point> = Vec::with_capacity(n);
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
        for &p in &base {
            loop {
                let q = p.translate(normal.sample(&mut rng), normal.sample(&mut rng));
                if !moved.contains(&q) {
                    moved.push(q);
                    break;
                }
            }
        }
    } else {
        moved.clone_from(&base);
    }

    let extra = spurious_count(n, unpaired);
    let mut side_a: Vec<(Point, Option<usize>)> = base.iter().enumerate().map(|(i, &p)| (p, Some(i))).collect();
    let mut side_b: Vec<(Point, Option<usize>)> = moved.iter().enumerate().map(|(i, &p)| (p, Some(i))).collect();
    for side in [&mut side_a, &mut side_b] {
        for _ in 0..extra {
            let taken: Vec<Point> = side.iter().map(|s| s.0).collect();
            let p = draw_distinct(&mut rng, config.field_size, &taken);
            side.push((p, None));
        }
        side.shuffle(&mut rng);
    }

    let to_landmarks = |side: &[(Point, Option<usize>)], slide: &str, prefix: &str| -> Vec<Landmark> {
        side.iter().enumerate().map(|(k, (p, _))| Landmark::new(slide, format!("{prefix}{k:03}"), p.x, p.y)).collect()
    };
    let a = to_landmarks(&side_a, SLIDE_A, "a");
    let b = to_landmarks(&side_b, SLIDE_B, "b");

    let mut b_of_base = vec![String::new(); n];
    let mut unpaired_b = Vec::new();
    for (k, (_, origin)) in side_b.iter().enumerate() {
        match origin {
            Some(i) => b_of_base[*i] = b[k].id.clone(),
            None => unpaired_b.push(b[k].id.clone()),
        }
    }
    let mut pairs = Vec::with_capacity(n);
    let mut unpaired_a = Vec::new();
    for (k, (_, origin)) in side_a.iter().enumerate() {
        match origin {
            Some(i) => pairs.push((a[k].id.clone(), b_of_base[*i].clone())),
            None => unpaired_a.push(a[k].id.clone()),
        }
    }
    let truth = GroundTruthMatches::from_pairs(SLIDE_A, SLIDE_B, &pairs, &unpaired_a, &unpaired_b)
        .expect("generated ids are unique");
    SyntheticPair { a, b, truth }
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    Shift,
    Unpaired,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Shift => "shift",
            Experiment::Unpaired => "unpaired",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Experiment::Shift => 1,
            Experiment::Unpaired => 2,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one repetition, a pure function of its coordinates in the sweep.
pub fn repetition_seed(seed: u64, experiment: Experiment, level: usize, repetition: usize) -> u64 {
    splitmix(splitmix(splitmix(seed ^ experiment.tag().rotate_left(56)) ^ level as u64) ^ repetition as u64)
}

/// Mean metrics over the repetitions of one parameter level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub experiment: Experiment,
    pub level: f64,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
    pub repetitions: Vec<ConfusionCounts>,
}

/// Runs one level: generate, match bidirectionally, evaluate, average.
pub fn run_level(
    config: &SyntheticConfig,
    experiment: Experiment,
    level_index: usize,
    level: f64,
) -> Result<LevelResult> {
    let (sigma, unpaired) = match experiment {
        Experiment::Shift => (level, 0.0),
        Experiment::Unpaired => (0.0, level),
    };
    let counts: Vec<Result<ConfusionCounts>> = par::map_range(config.n_repetitions, |rep| {
        let seed = repetition_seed(config.rng_seed, experiment, level_index, rep);
        let pair = generate_pair(config, sigma, unpaired, seed);
        let predicted = match_landmarks(&pair.a, &pair.b, &config.params)?;
        evaluate(&predicted, &pair.truth)
    });
    let repetitions = counts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(LevelResult {
        experiment,
        level,
        sensitivity: mean_defined(repetitions.iter().map(ConfusionCounts::sensitivity)),
        precision: mean_defined(repetitions.iter().map(ConfusionCounts::precision)),
        specificity: mean_defined(repetitions.iter().map(ConfusionCounts::specificity)),
        npv: mean_defined(repetitions.iter().map(ConfusionCounts::npv)),
        repetitions,
    })
}

pub fn run_sweep(config: &SyntheticConfig, experiment: Experiment) -> Result<Vec<LevelResult>> {
    config.validate()?;
    let levels = match experiment {
        Experiment::Shift => &config.sigma_shift,
        Experiment::Unpaired => &config.unpaired_fraction,
    };
    levels.iter().enumerate().map(|(k, &level)| run_level(config, experiment, k, level)).collect()
}

/// Both sweeps, Shift first.
pub fn run_experiment(config: &SyntheticConfig) -> Result<Vec<LevelResult>> {
    let mut out = run_sweep(config, Experiment::Shift)?;
    out.extend(run_sweep(config, Experiment::Unpaired)?);
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// `experiment,level,sensitivity,precision,specificity,npv`
pub fn format_results(results: &[LevelResult]) -> String {
    let mut s = String::from("experiment,level,sensitivity,precision,specificity,npv\n");
    for r in results {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.experiment.name(),
            r.level,
            cell(r.sensitivity),
            cell(r.precision),
            cell(r.specificity),
            cell(r.npv)
        ));
    }
    s
}

/// Per-repetition counts: `experiment,level,repetition,tp,fp,fn,tn`.
pub fn format_repetitions(results: &[LevelResult]) -> String {
    let mut s = String::from("experiment,level,repetition,tp,fp,fn,tn\n");
    for r in results {
        for (k, c) in r.repetitions.iter().enumerate() {
            s.push_str(&format!("{},{},{},{},{},{},{}\n", r.experiment.name(), r.level, k, c.tp, c.fp, c.fn_, c.tn));
        }
    }
    s
}

/// Parameters of a multi-slide synthetic tissue stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StackConfig {
    pub field_size: (f64, f64),
    pub n_landmarks: usize,
    pub n_slides: usize,
    /// Minimum distance between glomerulus centres within a slide.
    pub min_separation: f64,
    /// Standard deviation of the per-slide Gaussian displacement.
    pub sigma_shift: f64,
    /// Range of glomerulus radii.
    pub radius: (f64, f64),
    pub boundary_vertices: usize,
    /// Cells of one type scattered around a glomerulus at full intensity.
    pub cells_per_glomerulus: usize,
    /// Uniform background cells of each type per slide.
    pub background_cells: usize,
    pub panel: FeaturePanel,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            field_size: (4000.0, 4000.0),
            n_landmarks: 40,
            n_slides: 4,
            min_separation: 350.0,
            sigma_shift: 4.0,
            radius: (50.0, 90.0),
            boundary_vertices: 24,
            cells_per_glomerulus: 40,
            background_cells: 400,
            panel: FeaturePanel::default(),
        }
    }
}

/// Slides in stack order plus the reference correspondence across all of them.
#[derive(Debug, Clone)]
pub struct SyntheticStack {
    pub slides: Vec<SlideData>,
    pub truth: GroundTruthMatches,
}

/// Slide ids `S1`, `S2`, ...
pub fn stack_slide_id(k: usize) -> String {
    format!("S{}", k + 1)
}

fn lobed_boundary(rng: &mut ChaCha8Rng, center: Point, radius: f64, vertices: usize) -> Polygon {
    let lobes = rng.random_range(2..5) as f64;
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let depth = 0.05 + 0.1 * rng.random::<f64>();
    let pts = (0..vertices)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / vertices as f64;
            let r = radius * (1.0 + depth * (lobes * t + phase).sin());
            Point::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect();
    Polygon::new(pts)
}

/// Generates a stack where every glomerulus appears in every slide.
///
/// Each glomerulus carries a latent intensity in `[0.25, 1]` shared by all
/// slides; it scales the number of cells placed in its neighbourhood, so the
/// resulting features are correlated across columns.
pub fn generate_stack(config: &StackConfig, seed: u64) -> Result<SyntheticStack> {
    if config.n_slides < 2 || config.n_landmarks == 0 || config.boundary_vertices < 3 {
        return Err(Error::InvalidParameter(
            "a stack needs at least 2 slides, 1 landmark and 3 boundary vertices".into(),
        ));
    }
    if !(config.radius.0 > 0.0 && config.radius.1 >= config.radius.0 && config.sigma_shift >= 0.0) {
        return Err(Error::InvalidParameter("radius range and shift must be non-negative and ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = config.field_size;
    let margin = config.radius.1 * 2.0;
    let mut base: Vec<Point> = Vec::with_capacity(config.n_landmarks);
    let mut attempts = 0usize;
    while base.len() < config.n_landmarks {
        attempts += 1;
        if attempts > 1000 * config.n_landmarks {
            return Err(Error::InvalidParameter(format!(
                "cannot place {} glomeruli {} apart in a {w}x{h} field",
                config.n_landmarks, config.min_separation
            )));
        }
        let p = Point::new(
            margin + rng.random::<f64>() * (w - 2.0 * margin),
            margin + rng.random::<f64>() * (h - 2.0 * margin),
        );
        if base.iter().all(|q| q.distance(p) >= config.min_separation) {
            base.push(p);
        }
    }
    let intensity: Vec<f64> = (0..base.len()).map(|_| 0.25 + 0.75 * rng.random::<f64>()).collect();
    let radii: Vec<f64> = (0..base.len()).map(|_| rng.random_range(config.radius.0..=config.radius.1)).collect();
    let normal = (config.sigma_shift > 0.0).then(|| Normal::new(0.0, config.sigma_shift).expect("finite sigma"));

    let n_types = config.panel.specific.len();
    let mut slides = Vec::with_capacity(config.n_slides);
    let mut ids_by_base: Vec<Vec<Option<String>>> = vec![vec![None; config.n_slides]; base.len()];
    for k in 0..config.n_slides {
        let slide_id = stack_slide_id(k);
        let mut order: Vec<usize> = (0..base.len()).collect();
        order.shuffle(&mut rng);
        let mut landmarks = Vec::with_capacity(base.len());
        let mut centres = vec![Point::new(0.0, 0.0); base.len()];
        for (pos, &i) in order.iter().enumerate() {
            let c = match &normal {
                Some(n) => base[i].translate(n.sample(&mut rng), n.sample(&mut rng)),
                None => base[i],
            };
            centres[i] = c;
            let id = format!("g{}_{pos:03}", k + 1);
            ids_by_base[i][k] = Some(id.clone());
            let boundary = lobed_boundary(&mut rng, c, radii[i], config.boundary_vertices);
            landmarks.push(Landmark::new(&slide_id, id, c.x, c.y).with_boundary(boundary));
        }

        let mut types = vec![config.panel.shared.clone()];
        types.extend((0..n_types).filter(|m| m % config.n_slides == k).map(|m| config.panel.specific[m].clone()));
        let mut cellmaps = Vec::with_capacity(types.len());
        for t in types {
            let mut points = Vec::new();
            for (i, &c) in centres.iter().enumerate() {
                let count = (intensity[i] * config.cells_per_glomerulus as f64).round() as usize;
                for _ in 0..count {
                    let r = radii[i] * 2.5 * rng.random::<f64>().sqrt();
                    let t = rng.random::<f64>() * std::f64::consts::TAU;
                    points.push(Point::new(c.x + r * t.cos(), c.y + r * t.sin()));
                }
            }
            for _ in 0..config.background_cells {
                points.push(Point::new(rng.random::<f64>() * w, rng.random::<f64>() * h));
            }
            cellmaps.push(CellMap::new(&slide_id, t, points));
        }
        slides.push(SlideData { slide_id, landmarks, cellmaps });
    }
    let truth = GroundTruthMatches::new((0..config.n_slides).map(stack_slide_id).collect(), ids_by_base)?;
    Ok(SyntheticStack { slides, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sides_without_perturbation() {
        let cfg = SyntheticConfig::default();
        let pair = generate_pair(&cfg, 0.0, 0.0, 3);
        assert_eq!(pair.a.len(), 30);
        assert_eq!(pair.b.len(), 30);
        let pairs = pair.truth.pairs(SLIDE_A, SLIDE_B).unwrap();
        assert_eq!(pairs.len(), 30);
        for (ga, hb) in pairs {
            let pa = pair.a.iter().find(|l| l.id == ga).unwrap().position;
            let pb = pair.b.iter().find(|l| l.id == hb).unwrap().position;
            assert_eq!(pa, pb);
        }
    }

    #[test]
    fn half_unpaired() {
        let cfg = SyntheticConfig::default();
        let pair = generate_pair(&cfg, 2.0, 0.5, 9);
        assert_eq!(pair.a.len(), 45);
        assert_eq!(pair.b.len(), 45);
        assert_eq!(pair.truth.pairs(SLIDE_A, SLIDE_B).unwrap().len(), 30);
        assert_eq!(pair.truth.unpaired(SLIDE_A, SLIDE_B).unwrap().len(), 15);
        assert_eq!(pair.truth.unpaired(SLIDE_B, SLIDE_A).unwrap().len(), 15);
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = SyntheticConfig::default();
        let x = generate_pair(&cfg, 4.0, 0.2, 77);
        let y = generate_pair(&cfg, 4.0, 0.2, 77);
        assert_eq!(x.a, y.a);
        assert_eq!(x.b, y.b);
        assert_eq!(x.truth, y.truth);
        let z = generate_pair(&cfg, 4.0, 0.2, 78);
        assert_ne!(x.a, z.a);
    }

    #[test]
    fn spurious_counts_are_exact() {
        for k in 0..=10 {
            let f = f64::from(k) / 20.0;
            assert_eq!(spurious_count(30, f), (30 * k as usize * 5) / 100);
        }
    }

    #[test]
    fn perfect_level_is_perfect() {
        let cfg = SyntheticConfig { n_repetitions: 5, ..SyntheticConfig::default() };
        let r = run_level(&cfg, Experiment::Shift, 0, 0.0).unwrap();
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.precision, Some(1.0));
    }

    #[test]
    fn results_csv_shape() {
        let cfg = SyntheticConfig {
            n_repetitions: 2,
            sigma_shift: vec![0.0, 5.0],
            unpaired_fraction: vec![0.0],
            ..SyntheticConfig::default()
        };
        let r = run_experiment(&cfg).unwrap();
        let text = format_results(&r);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "experiment,level,sensitivity,precision,specificity,npv");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("shift,0,1,1,"));
        assert!(lines[3].starts_with("unpaired,0,"));
    }

    #[test]
    fn stack_is_fully_paired() {
        let stack = generate_stack(&StackConfig::default(), 5).unwrap();
        assert_eq!(stack.slides.len(), 4);
        assert_eq!(stack.truth.rows.len(), 40);
        assert!(stack.truth.rows.iter().all(|r| r.iter().all(Option::is_some)));
        for (k, s) in stack.slides.iter().enumerate() {
            assert_eq!(s.landmarks.len(), 40);
            assert!(s.landmarks.iter().all(|l| l.validate().is_ok()));
            assert_eq!(s.cellmaps.len(), 2);
            assert_eq!(s.cellmaps[0].cell_type, "CD3");
            assert_eq!(s.cellmaps[1].cell_type, StackConfig::default().panel.specific[k]);
        }
    }
}
