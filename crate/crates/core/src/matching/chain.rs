use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{ChainRow, MatchChain, MatchSet};

/// Links pairwise match sets between consecutive slides into rows spanning the stack.
///
/// Each row is a maximal path through the pairwise matchings; slots before its
/// first and after its last landmark are empty. Rows are ordered by starting
/// slide, then by starting landmark id.
pub fn chain_matches(pairwise: &[MatchSet]) -> Result<MatchChain> {
    let Some(first) = pairwise.first() else {
        return Err(Error::SlideOrder("no match sets to chain".into()));
    };
    let mut slides = vec![first.source_slide.clone(), first.target_slide.clone()];
    for (k, w) in pairwise.windows(2).enumerate() {
        if w[1].source_slide != w[0].target_slide {
            return Err(Error::SlideOrder(format!(
                "match set {} starts at `{}` but the previous one ends at `{}`",
                k + 1,
                w[1].source_slide,
                w[0].target_slide
            )));
        }
        slides.push(w[1].target_slide.clone());
    }
    let unique: BTreeSet<&String> = slides.iter().collect();
    if unique.len() != slides.len() {
        return Err(Error::SlideOrder(format!("slide repeated in chain order {slides:?}")));
    }

    let mut successors: Vec<BTreeMap<&str, &str>> = Vec::with_capacity(pairwise.len());
    for m in pairwise {
        if !m.is_injective() {
            return Err(Error::Validation(format!(
                "match set {} -> {} is not one-to-one",
                m.source_slide, m.target_slide
            )));
        }
        successors.push(m.pairs.iter().map(|p| (p.g_id.as_str(), p.h_id.as_str())).collect());
    }
    let reached: Vec<BTreeSet<&str>> = successors.iter().map(|s| s.values().copied().collect()).collect();

    let mut rows = Vec::new();
    for start in 0..pairwise.len() {
        for &id in successors[start].keys() {
            if start > 0 && reached[start - 1].contains(id) {
                continue;
            }
            let mut ids: Vec<Option<String>> = vec![None; slides.len()];
            ids[start] = Some(id.to_string());
            let mut cur = id;
            let mut k = start;
            while k < successors.len() {
                let Some(&next) = successors[k].get(cur) else { break };
                ids[k + 1] = Some(next.to_string());
                cur = next;
                k += 1;
            }
            rows.push(ChainRow { ids });
        }
    }
    Ok(MatchChain { slides, rows })
}
