//! Straight-line reference implementations.
//!
//! These are written independently of the optimized paths (no shared
//! helpers beyond plain data types) and exist to be compared against them.

use crate::metrics::Map;
use crate::scan::ScanVariant;

/// Pixel order of a diagonal traversal, by sorting on the diagonal key.
pub fn diagonal_order(h: usize, w: usize, variant: ScanVariant) -> Vec<usize> {
    let mut anti: Vec<(usize, usize, usize)> = Vec::new();
    let mut main: Vec<(isize, usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            anti.push((r + c, r, r * w + c));
            main.push((r as isize - c as isize, r, r * w + c));
        }
    }
    anti.sort();
    main.sort();
    let tl: Vec<usize> = anti.iter().map(|t| t.2).collect();
    let tr: Vec<usize> = main.iter().map(|t| t.2).collect();
    match variant {
        ScanVariant::AntiDiagTL => tl,
        ScanVariant::AntiDiagBR => tl.into_iter().rev().collect(),
        ScanVariant::MainDiagTR => tr,
        ScanVariant::MainDiagBL => tr.into_iter().rev().collect(),
    }
}

/// One token of a selective-scan sequence.
#[derive(Clone, Debug)]
pub struct Token {
    /// Input per channel.
    pub u: Vec<f64>,
    /// Step size per channel.
    pub delta: Vec<f64>,
    /// Input projection per state.
    pub b: Vec<f64>,
    /// Readout per state.
    pub c: Vec<f64>,
}

/// `y[t][ch]` of the recurrence `h ← exp(−exp(A_log)Δ)h + ΔBu`,
/// `y = ⟨C,h⟩ + Du`, evaluated token by token.
pub fn selective_scan(tokens: &[Token], a_log: &[Vec<f64>], d: &[f64]) -> Vec<Vec<f64>> {
    let chans = d.len();
    let state = a_log.first().map_or(0, Vec::len);
    let mut h = vec![vec![0.0; state]; chans];
    let mut ys = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let mut y = vec![0.0; chans];
        for ch in 0..chans {
            let mut acc = 0.0;
            for s in 0..state {
                let decay = (-(a_log[ch][s].exp()) * tok.delta[ch]).exp();
                h[ch][s] = decay * h[ch][s] + tok.delta[ch] * tok.b[s] * tok.u[ch];
                acc += tok.c[s] * h[ch][s];
            }
            y[ch] = acc + d[ch] * tok.u[ch];
        }
        ys.push(y);
    }
    ys
}

/// One SS2D path on a single C×H×W image: per-pixel tokens visited in the
/// diagonal order, results written back to their pixels. `b` and `c` are
/// N×H×W.
#[allow(clippy::too_many_arguments)]
pub fn ss2d_path(
    x: &[f64],
    delta: &[f64],
    b: &[f64],
    c: &[f64],
    a_log: &[Vec<f64>],
    d: &[f64],
    (h, w): (usize, usize),
    variant: ScanVariant,
) -> Vec<f64> {
    let chans = d.len();
    let state = a_log[0].len();
    let hw = h * w;
    let order = diagonal_order(h, w, variant);
    let tokens: Vec<Token> = order
        .iter()
        .map(|&p| Token {
            u: (0..chans).map(|ch| x[ch * hw + p]).collect(),
            delta: (0..chans).map(|ch| delta[ch * hw + p]).collect(),
            b: (0..state).map(|s| b[s * hw + p]).collect(),
            c: (0..state).map(|s| c[s * hw + p]).collect(),
        })
        .collect();
    let ys = selective_scan(&tokens, a_log, d);
    let mut out = vec![0.0; chans * hw];
    for (y, &p) in ys.iter().zip(&order) {
        for ch in 0..chans {
            out[ch * hw + p] = y[ch];
        }
    }
    out
}

const TINY: f64 = f64::EPSILON;

fn px(m: &Map, r: usize, c: usize) -> f64 {
    m.data[r * m.width + c]
}

#[allow(clippy::needless_range_loop)]
/// Weighted F-measure by brute force: nearest foreground over all pairs
/// (ties averaged), direct 7×7 Gaussian (σ = 5) with zero padding.
pub fn weighted_fbeta(pred: &Map, gt: &Map) -> f64 {
    let (h, w) = (gt.height, gt.width);
    let fg: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| px(gt, r, c) == 1.0)
        .collect();
    if fg.is_empty() {
        return if pred.data.iter().all(|&v| v == 0.0) {
            1.0
        } else {
            0.0
        };
    }
    let err = |r: usize, c: usize| (px(pred, r, c) - px(gt, r, c)).abs();
    let mut et = vec![vec![0.0; w]; h];
    let mut dist = vec![vec![0.0; w]; h];
    for r in 0..h {
        for c in 0..w {
            if px(gt, r, c) == 1.0 {
                et[r][c] = err(r, c);
                continue;
            }
            let d2 = |&(fr, fc): &(usize, usize)| {
                let dy = fr as i64 - r as i64;
                let dx = fc as i64 - c as i64;
                dy * dy + dx * dx
            };
            let best = fg.iter().map(d2).min().unwrap();
            let ties: Vec<f64> = fg
                .iter()
                .filter(|p| d2(p) == best)
                .map(|&(fr, fc)| err(fr, fc))
                .collect();
            et[r][c] = ties.iter().sum::<f64>() / ties.len() as f64;
            dist[r][c] = (best as f64).sqrt();
        }
    }
    let mut kernel = [[0.0f64; 7]; 7];
    let mut ksum = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            let (y, x) = (i as f64 - 3.0, j as f64 - 3.0);
            *k = (-(x * x + y * y) / 50.0).exp();
            ksum += *k;
        }
    }
    let (mut fg_err, mut fp, mut n) = (0.0, 0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            let e = err(r, c);
            if px(gt, r, c) == 1.0 {
                let mut ea = 0.0;
                for (i, row) in kernel.iter().enumerate() {
                    for (j, k) in row.iter().enumerate() {
                        let (y, x) = (r as i64 + i as i64 - 3, c as i64 + j as i64 - 3);
                        if y >= 0 && y < h as i64 && x >= 0 && x < w as i64 {
                            ea += k / ksum * et[y as usize][x as usize];
                        }
                    }
                }
                fg_err += ea.min(e);
                n += 1.0;
            } else {
                fp += e * (2.0 - (0.5f64.ln() / 5.0 * dist[r][c]).exp());
            }
        }
    }
    let recall = 1.0 - fg_err / n;
    let tp = n - fg_err;
    let precision = tp / (tp + fp + TINY);
    2.0 * recall * precision / (recall + precision + TINY)
}

fn ssim_region(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let x = p.iter().sum::<f64>() / n;
    let y = g.iter().sum::<f64>() / n;
    let dof = if p.len() > 1 { n - 1.0 } else { 1.0 };
    let sx = p.iter().map(|v| (v - x) * (v - x)).sum::<f64>() / dof;
    let sy = g.iter().map(|v| (v - y) * (v - y)).sum::<f64>() / dof;
    let sxy = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / dof;
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + TINY)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn object_term(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * m / (m * m + 1.0 + sd + TINY)
}

/// Structure measure from its published definition (α = 0.5).
pub fn s_measure(pred: &Map, gt: &Map) -> f64 {
    let (h, w) = (gt.height, gt.width);
    let total = (h * w) as f64;
    let gmean = gt.data.iter().sum::<f64>() / total;
    let pmean = pred.data.iter().sum::<f64>() / total;
    if gmean == 0.0 {
        return (1.0 - pmean).clamp(0.0, 1.0);
    }
    if gmean == 1.0 {
        return pmean.clamp(0.0, 1.0);
    }
    let fg: Vec<f64> = (0..h * w)
        .filter(|&i| gt.data[i] == 1.0)
        .map(|i| pred.data[i])
        .collect();
    let bg: Vec<f64> = (0..h * w)
        .filter(|&i| gt.data[i] == 0.0)
        .map(|i| 1.0 - pred.data[i])
        .collect();
    let object = gmean * object_term(&fg) + (1.0 - gmean) * object_term(&bg);

    let (mut ry, mut rx, mut k) = (0.0, 0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            if px(gt, r, c) == 1.0 {
                ry += r as f64;
                rx += c as f64;
                k += 1.0;
            }
        }
    }
    let y = (ry / k).round_ties_even() as usize + 1;
    let x = (rx / k).round_ties_even() as usize + 1;
    let mut region = 0.0;
    for quadrant in 0..4 {
        let inside = |r: usize, c: usize| match quadrant {
            0 => r < y && c < x,
            1 => r < y && c >= x,
            2 => r >= y && c < x,
            _ => r >= y && c >= x,
        };
        let mut p = Vec::new();
        let mut g = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if inside(r, c) {
                    p.push(px(pred, r, c));
                    g.push(px(gt, r, c));
                }
            }
        }
        region += p.len() as f64 / total * ssim_region(&p, &g);
    }
    (0.5 * object + 0.5 * region).clamp(0.0, 1.0)
}

/// Enhanced-alignment measure evaluated pixel by pixel on the adaptively
/// binarized prediction.
pub fn e_measure(pred: &Map, gt: &Map) -> f64 {
    let n = gt.data.len() as f64;
    let thr = (2.0 * pred.data.iter().sum::<f64>() / n).min(1.0);
    let fm: Vec<f64> = pred
        .data
        .iter()
        .map(|&v| if v > 0.0 && v >= thr { 1.0 } else { 0.0 })
        .collect();
    let gmean = gt.data.iter().sum::<f64>() / n;
    let enhanced: Vec<f64> = if gmean == 0.0 {
        fm.iter().map(|v| 1.0 - v).collect()
    } else if gmean == 1.0 {
        fm.clone()
    } else {
        let fmean = fm.iter().sum::<f64>() / n;
        fm.iter()
            .zip(&gt.data)
            .map(|(f, g)| {
                let (a, b) = (f - fmean, g - gmean);
                let align = 2.0 * a * b / (a * a + b * b + TINY);
                (align + 1.0) * (align + 1.0) / 4.0
            })
            .collect()
    };
    enhanced.iter().sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_orders() {
        assert_eq!(
            diagonal_order(2, 3, ScanVariant::AntiDiagTL),
            vec![0, 1, 3, 2, 4, 5]
        );
        assert_eq!(
            diagonal_order(2, 3, ScanVariant::MainDiagTR),
            vec![2, 1, 5, 0, 4, 3]
        );
    }
}
