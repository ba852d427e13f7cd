//! Association-level confusion counts against reference correspondences.
//!
//! A true positive is a predicted pair that is in the reference; a false
//! positive is a predicted pair that is not; a false negative is a reference
//! pair that was not predicted. A true negative is counted once per landmark,
//! on either side, that has no reference partner and was left unmatched.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{GroundTruthMatches, MatchSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionCounts {
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn npv(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fn_)
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            sensitivity: self.sensitivity(),
            precision: self.precision(),
            specificity: self.specificity(),
            npv: self.npv(),
        }
    }
}

/// The four ratios; `None` marks an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
}

fn metric_value(v: Option<f64>) -> Value {
    match v {
        Some(x) => json!(x),
        None => json!("undefined"),
    }
}

/// Renders counts and metrics as JSON, with `"undefined"` for empty denominators.
pub fn metrics_json(c: &ConfusionCounts) -> Value {
    let m = c.metrics();
    json!({
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn_,
        "tn": c.tn,
        "sensitivity": metric_value(m.sensitivity),
        "precision": metric_value(m.precision),
        "specificity": metric_value(m.specificity),
        "npv": metric_value(m.npv),
    })
}

/// Scores `predicted` against the reference for its two slides.
pub fn evaluate(predicted: &MatchSet, truth: &GroundTruthMatches) -> Result<ConfusionCounts> {
    let (src, dst) = (&predicted.source_slide, &predicted.target_slide);
    let src_universe = truth.universe(src)?;
    let dst_universe = truth.universe(dst)?;
    for p in &predicted.pairs {
        if !src_universe.contains(&p.g_id) {
            return Err(Error::UnknownLandmark { slide: src.clone(), id: p.g_id.clone() });
        }
        if !dst_universe.contains(&p.h_id) {
            return Err(Error::UnknownLandmark { slide: dst.clone(), id: p.h_id.clone() });
        }
    }
    let true_pairs = truth.pairs(src, dst)?;
    let predicted_pairs = predicted.pair_ids();
    let tp = predicted_pairs.intersection(&true_pairs).count();
    let fp = predicted_pairs.len() - tp;
    let fn_ = true_pairs.len() - tp;

    let matched_src: BTreeSet<&str> = predicted.pairs.iter().map(|p| p.g_id.as_str()).collect();
    let matched_dst: BTreeSet<&str> = predicted.pairs.iter().map(|p| p.h_id.as_str()).collect();
    let tn = truth.unpaired(src, dst)?.iter().filter(|id| !matched_src.contains(id.as_str())).count()
        + truth.unpaired(dst, src)?.iter().filter(|id| !matched_dst.contains(id.as_str())).count();
    Ok(ConfusionCounts { tp, fp, fn_, tn })
}

/// Mean of the defined values, `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.into_iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Direction, MatchPair};

    fn s(v: &str) -> String {
        v.to_string()
    }

    fn predicted(pairs: &[(&str, &str)]) -> MatchSet {
        MatchSet {
            source_slide: s("G"),
            target_slide: s("H"),
            direction: Direction::Bidirectional,
            pairs: pairs.iter().map(|(g, h)| MatchPair { g_id: s(g), h_id: s(h), energy: 0.0 }).collect(),
        }
    }

    fn truth() -> GroundTruthMatches {
        GroundTruthMatches::from_pairs("G", "H", &[(s("g1"), s("h1")), (s("g2"), s("h2"))], &[s("g3")], &[s("h3")])
            .unwrap()
    }

    #[test]
    fn partial_prediction() {
        let c = evaluate(&predicted(&[("g1", "h1"), ("g2", "h3")]), &truth()).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 1));
        assert_eq!(c.sensitivity(), Some(0.5));
        assert_eq!(c.precision(), Some(0.5));
        // g3 is unpaired and unmatched; h3 was wrongly used.
        assert_eq!(c.tn, 1);
    }

    #[test]
    fn perfect_prediction() {
        let c = evaluate(&predicted(&[("g1", "h1"), ("g2", "h2")]), &truth()).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 0, fn_: 0, tn: 2 });
        assert_eq!(c.sensitivity(), Some(1.0));
        assert_eq!(c.precision(), Some(1.0));
    }

    #[test]
    fn undefined_ratios() {
        let c = ConfusionCounts::default();
        let m = c.metrics();
        assert!(m.sensitivity.is_none() && m.precision.is_none() && m.specificity.is_none() && m.npv.is_none());
        let j = metrics_json(&c);
        assert_eq!(j["npv"], json!("undefined"));
        assert_eq!(j["tp"], json!(0));
    }

    #[test]
    fn unknown_ids_rejected() {
        let err = evaluate(&predicted(&[("g9", "h1")]), &truth()).unwrap_err();
        assert!(matches!(err, Error::UnknownLandmark { .. }));
    }
}
