//! First-principal-component ranking of feature rows.
//!
//! Columns are standardised (zero mean, unit sample variance) before the
//! decomposition because the features mix densities and distances. The
//! component's sign is fixed so its largest-magnitude loading (the first
//! column, on ties) is positive, and projections are min-max normalised to
//! `[0, 1]`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankScore {
    /// `(row id, score in [0, 1])` for every usable row, in matrix order.
    pub scores: Vec<(String, f64)>,
    /// `(column, loading)` of the leading component over the retained columns.
    pub loadings: Vec<(String, f64)>,
    /// Share of the total standardised variance carried by the leading component.
    pub explained_variance: f64,
    /// Leading eigenvalue of the standardised covariance.
    pub eigenvalue: f64,
    /// Columns dropped for having zero variance.
    pub dropped_columns: Vec<String>,
    /// Rows left out because at least one value was undefined.
    pub excluded_rows: Vec<String>,
}

/// Standardised data restricted to complete rows and varying columns.
pub struct Standardised {
    pub data: DMatrix<f64>,
    pub row_ids: Vec<String>,
    pub columns: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub excluded_rows: Vec<String>,
}

pub fn standardise(f: &FeatureMatrix) -> Result<Standardised> {
    let mut row_ids = Vec::new();
    let mut excluded_rows = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (id, row) in f.row_ids.iter().zip(&f.values) {
        match row.iter().copied().collect::<Option<Vec<f64>>>() {
            Some(r) if r.iter().all(|v| v.is_finite()) => {
                row_ids.push(id.clone());
                rows.push(r);
            }
            _ => excluded_rows.push(id.clone()),
        }
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "ranking needs at least 2 complete rows, got {} ({} excluded)",
            rows.len(),
            excluded_rows.len()
        )));
    }
    let n = rows.len();
    let mut columns = Vec::new();
    let mut dropped_columns = Vec::new();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (c, name) in f.columns.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo == hi {
            dropped_columns.push(name.clone());
            continue;
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        columns.push(name.clone());
        kept.push(col.iter().map(|v| (v - mean) / sd).collect());
    }
    if kept.is_empty() {
        return Err(Error::InsufficientData("no feature column varies across rows".into()));
    }
    let data = DMatrix::from_fn(n, kept.len(), |r, c| kept[c][r]);
    Ok(Standardised { data, row_ids, columns, dropped_columns, excluded_rows })
}

/// Scores each complete row by its projection on the leading principal component.
pub fn pca_rank(f: &FeatureMatrix) -> Result<RankScore> {
    let z = standardise(f)?;
    let n = z.data.nrows();
    let cov = (z.data.transpose() * &z.data) / (n - 1) as f64;
    let trace = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let lead = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("at least one column");
    let eigenvalue = eig.eigenvalues[lead];
    let mut v: Vec<f64> = eig.eigenvectors.column(lead).iter().copied().collect();
    // First column whose loading is within rounding of the largest magnitude,
    // so near-ties (e.g. two columns) do not flip the sign on noise.
    let largest = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let pivot = v.iter().position(|x| x.abs() >= largest * (1.0 - 1e-9)).unwrap_or(0);
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }

    let raw: Vec<f64> = (0..n).map(|r| z.data.row(r).iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
    let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let span = hi - lo;
    let scores = z
        .row_ids
        .iter()
        .zip(&raw)
        .map(|(id, &s)| (id.clone(), if span > 0.0 { (s - lo) / span } else { 0.0 }))
        .collect();

    Ok(RankScore {
        scores,
        loadings: z.columns.iter().cloned().zip(v).collect(),
        explained_variance: eigenvalue / trace,
        eigenvalue,
        dropped_columns: z.dropped_columns,
        excluded_rows: z.excluded_rows,
    })
}

/// Equal-width histogram of scores over `[0, 1]`; the last bin is closed.
pub fn score_histogram(scores: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let k = ((s * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts.into_iter().enumerate().map(|(k, c)| (k as f64 / bins as f64, (k + 1) as f64 / bins as f64, c)).collect()
}

impl RankScore {
    pub fn scores_csv(&self) -> String {
        let mut s = String::from("chain_id,score\n");
        for (id, v) in &self.scores {
            s.push_str(&format!("{id},{v}\n"));
        }
        s
    }

    pub fn loadings_json(&self) -> serde_json::Value {
        let loadings: serde_json::Map<String, serde_json::Value> =
            self.loadings.iter().map(|(c, w)| (c.clone(), serde_json::json!(w))).collect();
        serde_json::json!({
            "explained_variance": self.explained_variance,
            "eigenvalue": self.eigenvalue,
            "loadings": loadings,
            "dropped_columns": self.dropped_columns,
            "excluded_rows": self.excluded_rows,
        })
    }

    pub fn histogram_csv(&self, bins: usize) -> String {
        let values: Vec<f64> = self.scores.iter().map(|s| s.1).collect();
        let mut s = String::from("bin_start,bin_end,count\n");
        for (lo, hi, c) in score_histogram(&values, bins) {
            s.push_str(&format!("{lo},{hi},{c}\n"));
        }
        s
    }
}
