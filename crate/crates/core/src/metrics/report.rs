use serde::{Deserialize, Serialize};

use super::{dice_iou, e_measure, mae, s_measure, weighted_fbeta, Map, DICE_THRESHOLD};
use crate::error::{Error, Result};
use crate::parallel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub mdice: f64,
    pub miou: f64,
    pub fbw: f64,
    pub s_alpha: f64,
    pub e_xi: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub mdice: f64,
    pub miou: f64,
    pub fbw: f64,
    pub s_alpha: f64,
    pub e_xi: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_images: usize,
    pub per_image: Vec<ImageMetrics>,
    pub means: MeanMetrics,
}

/// `value` as a percentage rounded to two decimals.
pub fn percent(value: f64) -> f64 {
    (value * 10_000.0).round() / 100.0
}

impl ImageMetrics {
    pub fn compute(id: impl Into<String>, pred: &Map, gt: &Map) -> Result<Self> {
        let (mdice, miou) = dice_iou(pred, gt, DICE_THRESHOLD)?;
        Ok(Self {
            id: id.into(),
            mdice,
            miou,
            fbw: weighted_fbeta(pred, gt)?,
            s_alpha: s_measure(pred, gt)?,
            e_xi: e_measure(pred, gt)?,
            mae: mae(pred, gt)?,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [
            self.mdice,
            self.miou,
            self.fbw,
            self.s_alpha,
            self.e_xi,
            self.mae,
        ]
    }
}

impl MeanMetrics {
    pub fn values(&self) -> [f64; 6] {
        [
            self.mdice,
            self.miou,
            self.fbw,
            self.s_alpha,
            self.e_xi,
            self.mae,
        ]
    }
}

impl MetricsReport {
    pub fn from_images(per_image: Vec<ImageMetrics>) -> Result<Self> {
        if per_image.is_empty() {
            return Err(Error::InvalidArgument("no images to evaluate".into()));
        }
        let mut sums = [0.0; 6];
        for m in &per_image {
            for (s, v) in sums.iter_mut().zip(m.values()) {
                *s += v;
            }
        }
        let n = per_image.len() as f64;
        let [mdice, miou, fbw, s_alpha, e_xi, mae] = sums.map(|s| s / n);
        Ok(Self {
            n_images: per_image.len(),
            per_image,
            means: MeanMetrics {
                mdice,
                miou,
                fbw,
                s_alpha,
                e_xi,
                mae,
            },
        })
    }

    /// Two-column table of the means in percent.
    pub fn table(&self) -> String {
        let names = ["mDice", "mIoU", "Fbw", "S_alpha", "E_xi", "MAE"];
        let mut out = format!("{:<8} {:>8}\n", "metric", "value(%)");
        for (name, v) in names.iter().zip(self.means.values()) {
            out.push_str(&format!("{name:<8} {:>8.2}\n", percent(v)));
        }
        out.push_str(&format!("{:<8} {:>8}\n", "images", self.n_images));
        out
    }
}

/// Evaluates aligned prediction/ground-truth pairs, images in parallel.
pub fn evaluate_dataset(ids: &[String], preds: &[Map], gts: &[Map]) -> Result<MetricsReport> {
    if preds.len() != gts.len() || ids.len() != preds.len() {
        return Err(Error::InvalidArgument(format!(
            "stream length mismatch: {} ids, {} predictions, {} ground truths",
            ids.len(),
            preds.len(),
            gts.len()
        )));
    }
    let per_image = parallel::map(preds.len(), |i| {
        ImageMetrics::compute(ids[i].clone(), &preds[i], &gts[i])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_images(per_image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_and_formatting() {
        let gt = Map::new(1, 4, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let miss = Map::new(1, 4, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let report = evaluate_dataset(&ids, &[gt.clone(), miss], &[gt.clone(), gt]).unwrap();
        assert_eq!(report.per_image[0].mdice, 1.0);
        assert_eq!(report.per_image[1].mdice, 0.0);
        assert_eq!(report.means.mdice, 0.5);
        assert_eq!(percent(0.123456), 12.35);
        assert!(report.table().contains("mDice       50.00"));
        assert!(evaluate_dataset(&[], &[], &[]).is_err());
    }
}
