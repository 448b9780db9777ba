use super::{validate, Map, EPS};
use crate::error::Result;

/// Adaptive-threshold enhanced-alignment measure.
///
/// The prediction is binarized at `min(2·mean, 1)`; an all-zero prediction
/// binarizes to empty. The alignment sum is divided by the pixel count, so a
/// perfect prediction scores exactly 1.
pub fn e_measure(pred: &Map, gt: &Map) -> Result<f64> {
    let g = validate(pred, gt)?;
    let size = g.len();
    let threshold = (2.0 * pred.data.iter().sum::<f64>() / size as f64).min(1.0);
    let (mut tp, mut fp, mut gt_fg) = (0usize, 0usize, 0usize);
    for (&p, &t) in pred.data.iter().zip(&g) {
        let b = p >= threshold && p > 0.0;
        tp += usize::from(b && t);
        fp += usize::from(b && !t);
        gt_fg += usize::from(t);
    }
    let pred_fg = tp + fp;
    let pred_bg = size - pred_fg;
    let sum = if gt_fg == 0 {
        pred_bg as f64
    } else if gt_fg == size {
        pred_fg as f64
    } else {
        let fn_ = gt_fg - tp;
        let tn = pred_bg - fn_;
        let mp = pred_fg as f64 / size as f64;
        let mg = gt_fg as f64 / size as f64;
        let (pf, pb, gf, gb) = (1.0 - mp, -mp, 1.0 - mg, -mg);
        [(tp, pf, gf), (fp, pf, gb), (fn_, pb, gf), (tn, pb, gb)]
            .iter()
            .map(|&(count, a, b)| {
                let align = 2.0 * a * b / (a * a + b * b + EPS);
                (align + 1.0).powi(2) / 4.0 * count as f64
            })
            .sum()
    };
    Ok(sum / size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_complement_and_empty() {
        let gt = Map::new(2, 4, vec![1., 1., 0., 0., 1., 0., 0., 0.]).unwrap();
        assert!((e_measure(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
        let inv = Map::new(2, 4, gt.data.iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(e_measure(&inv, &gt).unwrap() < 1e-12);
        let zero = Map::new(2, 4, vec![0.0; 8]).unwrap();
        assert_eq!(e_measure(&zero, &zero).unwrap(), 1.0);
    }
}
