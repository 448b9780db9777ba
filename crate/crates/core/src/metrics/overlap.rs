use super::{validate, Map};
use crate::error::Result;

pub const DICE_THRESHOLD: f64 = 0.5;

/// Dice and IoU of `pred ≥ threshold` against `gt`; both are 1 when the two
/// masks are empty.
pub fn dice_iou(pred: &Map, gt: &Map, threshold: f64) -> Result<(f64, f64)> {
    let g = validate(pred, gt)?;
    let (mut inter, mut p, mut t) = (0usize, 0usize, 0usize);
    for (&v, &gv) in pred.data.iter().zip(&g) {
        let pv = v >= threshold;
        inter += usize::from(pv && gv);
        p += usize::from(pv);
        t += usize::from(gv);
    }
    if p + t == 0 {
        return Ok((1.0, 1.0));
    }
    let dice = 2.0 * inter as f64 / (p + t) as f64;
    let iou = inter as f64 / (p + t - inter) as f64;
    Ok((dice, iou))
}

pub fn mae(pred: &Map, gt: &Map) -> Result<f64> {
    validate(pred, gt)?;
    let sum: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> Map {
        Map::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn overlap_examples() {
        let gt = map(&[1., 1., 1., 1., 0., 0., 0., 0.]);
        assert_eq!(dice_iou(&gt, &gt, 0.5).unwrap(), (1.0, 1.0));
        let disjoint = map(&[0., 0., 0., 0., 1., 1., 1., 1.]);
        assert_eq!(dice_iou(&disjoint, &gt, 0.5).unwrap(), (0.0, 0.0));
        let half = map(&[0.9, 0.6, 0.2, 0.0, 1.0, 0.7, 0.1, 0.0]);
        let (d, i) = dice_iou(&half, &gt, 0.5).unwrap();
        assert_eq!(d, 0.5);
        assert!((i - 1.0 / 3.0).abs() < 1e-15);
        let empty = map(&[0.0; 8]);
        assert_eq!(dice_iou(&empty, &empty, 0.5).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn mae_examples() {
        let zero = map(&[0.0; 4]);
        assert_eq!(mae(&zero, &zero).unwrap(), 0.0);
        assert_eq!(mae(&map(&[0.25; 4]), &zero).unwrap(), 0.25);
        assert_eq!(mae(&map(&[1.0; 4]), &zero).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = map(&[0.0; 4]);
        let b = map(&[0.0; 3]);
        assert!(mae(&a, &b).is_err());
        assert!(dice_iou(&a, &map(&[0.0, 0.5, 1.0, 0.0]), 0.5).is_err());
    }
}
