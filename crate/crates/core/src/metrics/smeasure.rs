use super::{validate, Map, EPS};
use crate::error::Result;

const ALPHA: f64 = 0.5;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for a single value.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn object_similarity(values: &[f64]) -> f64 {
    let x = mean(values);
    2.0 * x / (x * x + 1.0 + std_dev(values) + EPS)
}

fn object_score(pred: &[f64], g: &[bool]) -> f64 {
    let fg: Vec<f64> = pred
        .iter()
        .zip(g)
        .filter(|(_, &t)| t)
        .map(|(&p, _)| p)
        .collect();
    let bg: Vec<f64> = pred
        .iter()
        .zip(g)
        .filter(|(_, &t)| !t)
        .map(|(&p, _)| 1.0 - p)
        .collect();
    let u = fg.len() as f64 / g.len() as f64;
    u * object_similarity(&fg) + (1.0 - u) * object_similarity(&bg)
}

/// SSIM-style structural similarity of one region.
fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let n = pred.len();
    let (x, y) = (mean(pred), mean(gt));
    let denom = n.saturating_sub(1).max(1) as f64;
    let (mut sx, mut sy, mut sxy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(gt) {
        sx += (p - x).powi(2);
        sy += (t - y).powi(2);
        sxy += (p - x) * (t - y);
    }
    let (sx, sy, sxy) = (sx / denom, sy / denom, sxy / denom);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Split point (one past the rounded foreground centroid) as (row, col).
fn centroid(g: &[bool], w: usize) -> (usize, usize) {
    let (mut sr, mut sc, mut n) = (0.0, 0.0, 0usize);
    for (i, _) in g.iter().enumerate().filter(|(_, &t)| t) {
        sr += (i / w) as f64;
        sc += (i % w) as f64;
        n += 1;
    }
    let (r, c) = (
        (sr / n as f64).round_ties_even() as usize,
        (sc / n as f64).round_ties_even() as usize,
    );
    (r + 1, c + 1)
}

fn region_score(pred: &Map, gt: &Map, g: &[bool]) -> f64 {
    let (h, w) = (pred.height, pred.width);
    let (y, x) = centroid(g, w);
    let quads = [(0..y, 0..x), (0..y, x..w), (y..h, 0..x), (y..h, x..w)];
    let area = (h * w) as f64;
    let mut total = 0.0;
    for (rows, cols) in quads {
        let mut p = Vec::new();
        let mut t = Vec::new();
        for r in rows.clone() {
            for c in cols.clone() {
                p.push(pred.at(r, c));
                t.push(gt.at(r, c));
            }
        }
        total += p.len() as f64 / area * ssim(&p, &t);
    }
    total
}

/// Structure measure, α = 0.5, clipped to [0,1].
pub fn s_measure(pred: &Map, gt: &Map) -> Result<f64> {
    let g = validate(pred, gt)?;
    let fg = g.iter().filter(|&&t| t).count();
    let score = if fg == 0 {
        1.0 - mean(&pred.data)
    } else if fg == g.len() {
        mean(&pred.data)
    } else {
        ALPHA * object_score(&pred.data, &g) + (1.0 - ALPHA) * region_score(pred, gt, &g)
    };
    Ok(score.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_degenerate() {
        let mut v = vec![0.0; 36];
        for i in [7, 8, 13, 14, 20] {
            v[i] = 1.0;
        }
        let gt = Map::new(6, 6, v).unwrap();
        assert!((s_measure(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
        let empty = Map::new(2, 2, vec![0.0; 4]).unwrap();
        let pred = Map::new(2, 2, vec![0.2, 0.4, 0.0, 0.2]).unwrap();
        assert!((s_measure(&pred, &empty).unwrap() - 0.8).abs() < 1e-15);
        let full = Map::new(2, 2, vec![1.0; 4]).unwrap();
        assert!((s_measure(&pred, &full).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn centroid_rounds_half_to_even() {
        // columns 0 and 1 → mean 0.5 → 0 → split after column 0
        let g = [true, true, false, false];
        assert_eq!(centroid(&g, 4), (1, 1));
    }
}
