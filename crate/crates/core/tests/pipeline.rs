use std::path::{Path, PathBuf};

use glomfuse::features::{build_feature_matrix, pca_rank, FeaturePanel, NeighbourhoodSpec, SlideData};
use glomfuse::io;
use glomfuse::matching::match_landmarks;
use glomfuse::synthetic::{generate_stack, StackConfig};
use glomfuse::{chain_matches, MatchChain, MatchParams, MatchSet};

const FIXTURE_SEED: u64 = 2024;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/stack4")
}

fn match_stack(slides: &[SlideData], params: &MatchParams) -> (Vec<MatchSet>, MatchChain) {
    let sets: Vec<MatchSet> =
        slides.windows(2).map(|w| match_landmarks(&w[0].landmarks, &w[1].landmarks, params).unwrap()).collect();
    let chain = chain_matches(&sets).unwrap();
    (sets, chain)
}

#[test]
fn bundled_fixture_matches_generator() {
    let stack = generate_stack(&StackConfig::default(), FIXTURE_SEED).unwrap();
    let dir = fixture_dir();
    if std::env::var_os("GLOMFUSE_REGEN_FIXTURE").is_some() {
        io::save_stack(&dir, &stack).unwrap();
    }
    let tmp = tempfile::tempdir().unwrap();
    io::save_stack(tmp.path(), &stack).unwrap();
    for entry in std::fs::read_dir(tmp.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let fresh = std::fs::read_to_string(tmp.path().join(&name)).unwrap();
        let bundled = std::fs::read_to_string(dir.join(&name)).unwrap();
        assert!(fresh == bundled, "{name:?} differs from the generator output");
    }
}

#[test]
fn four_slide_chain_equals_generator_truth() {
    let stack = generate_stack(&StackConfig::default(), 11).unwrap();
    let (sets, chain) = match_stack(&stack.slides, &MatchParams::tissue());
    for set in &sets {
        assert!(set.is_injective());
    }
    let mut expected: Vec<Vec<Option<String>>> = stack.truth.rows.clone();
    let mut got: Vec<Vec<Option<String>>> = chain.rows.iter().map(|r| r.ids.clone()).collect();
    expected.sort();
    got.sort();
    assert_eq!(got, expected);
}

#[test]
fn chain_survives_file_round_trip() {
    let stack = generate_stack(&StackConfig::default(), 12).unwrap();
    let (_, chain) = match_stack(&stack.slides, &MatchParams::tissue());
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("chains.tsv");
    io::save_chain(&path, &chain).unwrap();
    assert_eq!(io::load_chain(&path).unwrap(), chain);
}

#[test]
fn stack_features_are_complete_and_rankable() {
    let stack = generate_stack(&StackConfig::default(), 13).unwrap();
    let (_, chain) = match_stack(&stack.slides, &MatchParams::tissue());
    let build =
        build_feature_matrix(&chain, &stack.slides, &FeaturePanel::default(), &NeighbourhoodSpec::default()).unwrap();
    assert!(build.incomplete_chains.is_empty());
    assert_eq!(build.matrix.columns.len(), 19);
    assert_eq!(build.matrix.row_ids.len(), 40);
    let rank = pca_rank(&build.matrix).unwrap();
    assert!(rank.excluded_rows.len() < 40);
    let csv = build.matrix.to_csv();
    let back = glomfuse::features::FeatureMatrix::from_csv(&csv, Path::new("features.csv")).unwrap();
    assert_eq!(back, build.matrix);
}

#[test]
fn dropped_slide_rows_are_reported_incomplete() {
    let stack = generate_stack(&StackConfig::default(), 14).unwrap();
    let mut slides = stack.slides.clone();
    let removed = slides[2].landmarks.remove(0).id;
    let (_, chain) = match_stack(&slides, &MatchParams::tissue());
    let build = build_feature_matrix(&chain, &slides, &FeaturePanel::default(), &NeighbourhoodSpec::default()).unwrap();
    assert!(!build.incomplete_chains.is_empty());
    assert!(build.matrix.row_ids.len() < 40);
    assert!(chain.rows.iter().all(|r| r.ids[2].as_deref() != Some(removed.as_str())));
}
