//! Independent oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use glomfuse::features::FeatureMatrix;
use glomfuse::matching::neighbor_energy;
use glomfuse::{Landmark, Point, Polygon, Window};
use rand::seq::SliceRandom;
use rand::Rng;

/// Minimum, over all injective assignments of exactly `k` source neighbours to
/// distinct target neighbours, of the ascending-order sum of their energies.
pub fn exhaustive_assignment(g_neighbors: &[Point], h_neighbors: &[Point], g_i: Point, h_j: Point, k: usize) -> f64 {
    let k = k.min(g_neighbors.len()).min(h_neighbors.len());
    let cost: Vec<Vec<f64>> = g_neighbors
        .iter()
        .map(|&g| h_neighbors.iter().map(|&h| neighbor_energy(g_i, g, h_j, h).unwrap()).collect())
        .collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::new();
    let mut used = vec![false; h_neighbors.len()];
    enumerate(&cost, 0, k, &mut used, &mut chosen, &mut best);
    best
}

fn enumerate(cost: &[Vec<f64>], row: usize, k: usize, used: &mut [bool], chosen: &mut Vec<f64>, best: &mut f64) {
    if chosen.len() == k {
        let mut v = chosen.clone();
        v.sort_by(f64::total_cmp);
        let s: f64 = v.into_iter().sum();
        if s < *best {
            *best = s;
        }
        return;
    }
    if row == cost.len() || cost.len() - row < k - chosen.len() {
        return;
    }
    enumerate(cost, row + 1, k, used, chosen, best);
    for c in 0..cost[row].len() {
        if !used[c] {
            used[c] = true;
            chosen.push(cost[row][c]);
            enumerate(cost, row + 1, k, used, chosen, best);
            chosen.pop();
            used[c] = false;
        }
    }
}

pub fn random_point(rng: &mut impl Rng, lo: f64, hi: f64) -> Point {
    Point::new(rng.random_range(lo..hi), rng.random_range(lo..hi))
}

/// Star-shaped polygon with `n` vertices around `c`, radii in `[r_lo, r_hi]`.
pub fn random_star_polygon(rng: &mut impl Rng, c: Point, n: usize, r_lo: f64, r_hi: f64) -> Polygon {
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.dedup();
    Polygon::new(
        angles
            .into_iter()
            .map(|t| {
                let r = rng.random_range(r_lo..r_hi);
                Point::new(c.x + r * t.cos(), c.y + r * t.sin())
            })
            .collect(),
    )
}

/// Random landmark set and a perturbed, partially spurious copy.
pub fn random_landmark_pair(
    rng: &mut impl Rng,
    n: usize,
    sigma: f64,
    spurious: usize,
) -> (Vec<Landmark>, Vec<Landmark>) {
    let base: Vec<Point> = (0..n).map(|_| random_point(rng, 0.0, 300.0)).collect();
    let mut a: Vec<Landmark> =
        base.iter().enumerate().map(|(i, p)| Landmark::new("G", format!("g{i:03}"), p.x, p.y)).collect();
    let mut b: Vec<Landmark> = base
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dx = rng.random_range(-sigma..=sigma);
            let dy = rng.random_range(-sigma..=sigma);
            Landmark::new("H", format!("h{i:03}"), p.x + dx, p.y + dy)
        })
        .collect();
    for k in 0..spurious {
        let p = random_point(rng, 0.0, 300.0);
        a.push(Landmark::new("G", format!("gs{k:03}"), p.x, p.y));
        let q = random_point(rng, 0.0, 300.0);
        b.push(Landmark::new("H", format!("hs{k:03}"), q.x, q.y));
    }
    a.shuffle(rng);
    b.shuffle(rng);
    (a, b)
}

/// Winding-number test; points on an edge count as outside.
pub fn strictly_inside(poly: &Polygon, p: Point) -> bool {
    if boundary_distance(poly, p) == 0.0 {
        return false;
    }
    let v = &poly.vertices;
    let mut winding = 0i32;
    for k in 0..v.len() {
        let (a, b) = (v[k], v[(k + 1) % v.len()]);
        let cross = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
        if a.y <= p.y {
            if b.y > p.y && cross > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Distance from `p` to the polygon outline, edge by edge.
pub fn boundary_distance(poly: &Polygon, p: Point) -> f64 {
    let v = &poly.vertices;
    (0..v.len())
        .map(|k| {
            let (a, b) = (v[k], v[(k + 1) % v.len()]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let len2 = dx * dx + dy * dy;
            let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
            (p.x - (a.x + t * dx)).hypot(p.y - (a.y + t * dy))
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn in_window(w: &Window, p: Point) -> bool {
    let h = w.size / 2.0;
    (p.x - w.center.x).abs() <= h && (p.y - w.center.y).abs() <= h
}

/// Mean boundary distance over window cells not strictly inside.
pub fn brute_mean_boundary_distance(cells: &[Point], poly: &Polygon, w: &Window) -> Option<f64> {
    let d: Vec<f64> = cells
        .iter()
        .filter(|&&p| in_window(w, p) && !strictly_inside(poly, p))
        .map(|&p| boundary_distance(poly, p))
        .collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean over window `a` cells of the distance to the nearest window `b` cell.
pub fn brute_mean_nearest(a: &[Point], b: &[Point], w: &Window) -> Option<f64> {
    let b: Vec<Point> = b.iter().copied().filter(|&p| in_window(w, p)).collect();
    if b.is_empty() {
        return None;
    }
    let d: Vec<f64> = a
        .iter()
        .filter(|&&p| in_window(w, p))
        .map(|&p| b.iter().map(|&q| p.distance(q)).fold(f64::INFINITY, f64::min))
        .collect();
    (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
}

/// Leading eigenpair of the standardised covariance by power iteration,
/// returned as `(eigenvector, eigenvalue, trace)`.
pub fn power_iteration(rows: &[Vec<f64>]) -> (Vec<f64>, f64, f64) {
    let n = rows.len();
    let p = rows[0].len();
    let mut z = vec![vec![0.0; p]; n];
    for c in 0..p {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let sd = (rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for r in 0..n {
            z[r][c] = (rows[r][c] - mean) / sd;
        }
    }
    let mut cov = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in 0..p {
            cov[a][b] = (0..n).map(|r| z[r][a] * z[r][b]).sum::<f64>() / (n - 1) as f64;
        }
    }
    let trace: f64 = (0..p).map(|a| cov[a][a]).sum();
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut lambda = 0.0;
    for _ in 0..200_000 {
        let w: Vec<f64> = (0..p).map(|a| (0..p).map(|b| cov[a][b] * v[b]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let next: Vec<f64> = w.iter().map(|x| x / norm).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        lambda = norm;
        if delta < 1e-15 {
            break;
        }
    }
    (v, lambda, trace)
}

/// Rows sharing one strong latent factor, plus noise.
pub fn factor_rows(rng: &mut impl Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    let weights: Vec<f64> =
        (0..p).map(|_| rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let offsets: Vec<f64> = (0..p).map(|_| rng.random_range(-10.0..10.0)).collect();
    let scales: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..100.0)).collect();
    (0..n)
        .map(|_| {
            let f: f64 = rng.random_range(-2.0..2.0);
            (0..p).map(|c| offsets[c] + scales[c] * (weights[c] * f + rng.random_range(-0.5..0.5))).collect()
        })
        .collect()
}

pub fn matrix_of(rows: &[Vec<f64>]) -> FeatureMatrix {
    let cols = (0..rows[0].len()).map(|c| format!("f{c}")).collect();
    let ids = (0..rows.len()).map(|r| format!("r{r:03}")).collect();
    FeatureMatrix::new(cols, ids, rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect()).unwrap()
}

/// Row indices ordered by score, ties broken by index.
pub fn rank_order(scores: &[(String, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].1.total_cmp(&scores[b].1).then(a.cmp(&b)));
    idx
}
