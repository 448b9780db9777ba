//! Segmentation quality measures on single-channel maps.
//!
//! Predictions are probabilities in [0,1]; ground truths are binary {0,1}.
//! The structural measures follow the saliency-evaluation toolkit
//! conventions, with the adjustments noted on each function.

mod emeasure;
mod overlap;
mod report;
mod smeasure;
mod wfm;

pub use emeasure::e_measure;
pub use overlap::{dice_iou, mae, DICE_THRESHOLD};
pub use report::{evaluate_dataset, percent, ImageMetrics, MeanMetrics, MetricsReport};
pub use smeasure::s_measure;
pub use wfm::{gaussian_kernel, weighted_fbeta};

use crate::error::{Error, Result};

/// `f64::EPSILON`, the additive guard used throughout the measures.
pub(crate) const EPS: f64 = f64::EPSILON;

/// Row-major H×W map.
#[derive(Clone, Debug, PartialEq)]
pub struct Map {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Map {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidShape {
                shape: vec![height, width],
                reason: format!("map needs {} values, got {}", height * width, data.len()),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_mask(height: usize, width: usize, mask: &[bool]) -> Result<Self> {
        Self::new(
            height,
            width,
            mask.iter().map(|&m| f64::from(u8::from(m))).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut data = Vec::with_capacity(self.len());
        for row in self.data.chunks(self.width) {
            data.extend(row.iter().rev());
        }
        Self { data, ..*self }
    }
}

/// Checks shapes and ranges and returns the ground truth as booleans.
pub(crate) fn validate(pred: &Map, gt: &Map) -> Result<Vec<bool>> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(Error::shape(
            &[pred.height, pred.width],
            &[gt.height, gt.width],
            "prediction vs ground truth",
        ));
    }
    if let Some(v) = pred.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!(
            "prediction value {v} outside [0,1]"
        )));
    }
    gt.data
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::InvalidArgument(format!(
                    "ground truth value {v} is not binary"
                )))
            }
        })
        .collect()
}
