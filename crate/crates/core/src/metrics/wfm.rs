use super::{validate, Map, EPS};
use crate::error::Result;

const KERNEL: usize = 7;
const SIGMA: f64 = 5.0;

/// Normalized `size`×`size` Gaussian, entries below `eps·max` zeroed first.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 - half, (i % size) as f64 - half);
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let max = k.iter().cloned().fold(0.0, f64::max);
    for v in &mut k {
        if *v < EPS * max {
            *v = 0.0;
        }
    }
    let sum: f64 = k.iter().sum();
    k.iter().map(|v| v / sum).collect()
}

/// For every pixel, the squared distance to the nearest foreground pixel and
/// the mean of `values` over all foreground pixels at that distance.
fn nearest_foreground(gt: &[bool], h: usize, w: usize, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    // per column: vertical distance to the nearest foreground row, with the
    // rows achieving it (one above and/or one below)
    let mut col_near: Vec<Vec<(usize, [Option<usize>; 2])>> = vec![Vec::with_capacity(h); w];
    for (c, near) in col_near.iter_mut().enumerate() {
        let rows: Vec<usize> = (0..h).filter(|&r| gt[r * w + c]).collect();
        let mut k = 0;
        for r in 0..h {
            while k < rows.len() && rows[k] < r {
                k += 1;
            }
            let below = rows.get(k).map(|&b| (b - r, b));
            let above = k.checked_sub(1).map(|i| (r - rows[i], rows[i]));
            near.push(match (above, below) {
                (Some(a), Some(b)) if a.0 == b.0 && a.1 != b.1 => (a.0, [Some(a.1), Some(b.1)]),
                (Some(a), Some(b)) if a.0 < b.0 => (a.0, [Some(a.1), None]),
                (_, Some(b)) => (b.0, [Some(b.1), None]),
                (Some(a), None) => (a.0, [Some(a.1), None]),
                (None, None) => (usize::MAX, [None, None]),
            });
        }
    }
    let mut dist2 = vec![0.0; h * w];
    let mut tied = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if gt[i] {
                tied[i] = values[i];
                continue;
            }
            let mut best = u64::MAX;
            let (mut sum, mut count) = (0.0, 0usize);
            for (cc, near) in col_near.iter().enumerate() {
                let (dv, rows) = near[r];
                if dv == usize::MAX {
                    continue;
                }
                let d2 = (dv * dv + cc.abs_diff(c).pow(2)) as u64;
                if d2 > best {
                    continue;
                }
                if d2 < best {
                    best = d2;
                    sum = 0.0;
                    count = 0;
                }
                for rr in rows.into_iter().flatten() {
                    sum += values[rr * w + cc];
                    count += 1;
                }
            }
            dist2[i] = best as f64;
            tied[i] = sum / count as f64;
        }
    }
    (dist2, tied)
}

/// Zero-padded correlation with a square kernel.
fn filter(input: &[f64], h: usize, w: usize, kernel: &[f64], size: usize) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = 0.0;
            for ky in 0..size as isize {
                let y = r + ky - half;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for kx in 0..size as isize {
                    let x = c + kx - half;
                    if x < 0 || x >= w as isize {
                        continue;
                    }
                    acc += kernel[(ky * size as isize + kx) as usize]
                        * input[(y * w as isize + x) as usize];
                }
            }
            out[(r * w as isize + c) as usize] = acc;
        }
    }
    out
}

/// Weighted F-measure (β² = 1). Background pixels take the error of their
/// nearest foreground pixel, averaged over ties. An empty ground truth scores
/// 1 for an all-zero prediction and 0 otherwise.
pub fn weighted_fbeta(pred: &Map, gt: &Map) -> Result<f64> {
    let g = validate(pred, gt)?;
    let (h, w) = (pred.height, pred.width);
    if !g.iter().any(|&v| v) {
        return Ok(if pred.data.iter().all(|&v| v == 0.0) {
            1.0
        } else {
            0.0
        });
    }
    let e: Vec<f64> = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(p, t)| (p - t).abs())
        .collect();
    let (dist2, et) = nearest_foreground(&g, h, w, &e);
    let ea = filter(&et, h, w, &gaussian_kernel(KERNEL, SIGMA), KERNEL);
    let decay = 0.5f64.ln() / 5.0;
    let (mut fg_err, mut fp, mut n_fg) = (0.0, 0.0, 0usize);
    for i in 0..h * w {
        if g[i] {
            fg_err += if ea[i] < e[i] { ea[i] } else { e[i] };
            n_fg += 1;
        } else {
            fp += e[i] * (2.0 - (decay * dist2[i].sqrt()).exp());
        }
    }
    let tp = n_fg as f64 - fg_err;
    let recall = 1.0 - fg_err / n_fg as f64;
    let precision = tp / (tp + fp + EPS);
    Ok(2.0 * recall * precision / (recall + precision + EPS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(7, 5.0);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[48]);
        assert!(k[24] > k[0]);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let mut gt = vec![0.0; 64];
        for i in [9, 10, 17, 18, 30] {
            gt[i] = 1.0;
        }
        let gt = Map::new(8, 8, gt).unwrap();
        assert!((weighted_fbeta(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
        let zero = Map::new(8, 8, vec![0.0; 64]).unwrap();
        assert_eq!(weighted_fbeta(&zero, &zero).unwrap(), 1.0);
        // away from the zero-padded border the smoothed error stays 1
        let mut inner = vec![0.0; 144];
        for i in [63, 64, 75, 76, 77, 88] {
            inner[i] = 1.0;
        }
        let inner = Map::new(12, 12, inner).unwrap();
        let zero = Map::new(12, 12, vec![0.0; 144]).unwrap();
        assert!(weighted_fbeta(&zero, &inner).unwrap() < 1e-12);
    }

    #[test]
    fn ties_average_both_sources() {
        // background pixel 1 is equidistant from foreground pixels 0 and 2
        let g = [true, false, true];
        let (d, t) = nearest_foreground(&g, 1, 3, &[0.2, 0.0, 0.6]);
        assert_eq!(d, vec![0.0, 1.0, 0.0]);
        assert!((t[1] - 0.4).abs() < 1e-15);
    }
}
