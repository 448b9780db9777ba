//! Images, masks and datasets: NetPBM I/O, the synthetic lesion generator,
//! augmentation and on-disk dataset loading.

mod augment;
pub mod pnm;
mod resize;
mod synth;

use std::path::{Path, PathBuf};

pub use augment::{augment, flip_horizontal, rotate, AugmentConfig};
pub use resize::{resize_bilinear, resize_nearest};
pub use synth::{generate_sample, sample_id, split, write_dataset, DatasetSpec, Manifest, Splits};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Planar RGB image in [0,1] with its binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub height: usize,
    pub width: usize,
    /// 3×H×W
    pub image: Vec<f32>,
    /// H×W, values {0,1}
    pub mask: Vec<u8>,
}

impl Sample {
    /// Resamples to `size`×`size` (bilinear image, nearest mask).
    pub fn resized(&self, size: usize) -> Sample {
        if (self.height, self.width) == (size, size) {
            return self.clone();
        }
        let hw = self.height * self.width;
        let image = (0..3)
            .flat_map(|c| {
                resize_bilinear(
                    &self.image[c * hw..(c + 1) * hw],
                    (self.height, self.width),
                    (size, size),
                )
            })
            .collect();
        Sample {
            id: self.id.clone(),
            height: size,
            width: size,
            image,
            mask: resize_nearest(&self.mask, (self.height, self.width), (size, size)),
        }
    }
}

pub fn read_sample(dir: &Path, id: &str) -> Result<Sample> {
    let img_path = dir.join("images").join(format!("{id}.ppm"));
    let mask_path = dir.join("masks").join(format!("{id}.pgm"));
    let read = |p: &PathBuf| std::fs::read(p).map_err(|e| Error::io(p, e));
    let (height, width, image) = pnm::decode_rgb(&read(&img_path)?)?;
    let (mh, mw, mask) = pnm::decode_mask(&read(&mask_path)?)?;
    if (mh, mw) != (height, width) {
        return Err(Error::shape(&[height, width], &[mh, mw], "image vs mask"));
    }
    Ok(Sample {
        id: id.to_string(),
        height,
        width,
        image,
        mask,
    })
}

pub fn write_sample(dir: &Path, s: &Sample) -> Result<()> {
    let images = dir.join("images");
    let masks = dir.join("masks");
    for d in [&images, &masks] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let p = images.join(format!("{}.ppm", s.id));
    std::fs::write(&p, pnm::encode_rgb(s.height, s.width, &s.image))
        .map_err(|e| Error::io(&p, e))?;
    let p = masks.join(format!("{}.pgm", s.id));
    std::fs::write(&p, pnm::encode_mask(s.height, s.width, &s.mask)).map_err(|e| Error::io(&p, e))
}

/// A loaded dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let load = |ids: &[String]| {
            crate::parallel::map(ids.len(), |i| read_sample(dir, &ids[i]))
                .into_iter()
                .collect::<Result<Vec<_>>>()
        };
        let train = load(&manifest.splits.train)?;
        let test = load(&manifest.splits.test)?;
        Ok(Self {
            manifest,
            train,
            test,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[Sample]> {
        match name {
            "train" => Ok(&self.train),
            "test" => Ok(&self.test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split {other:?} (expected train or test)"
            ))),
        }
    }
}

/// Stacks same-size samples into N×3×H×W images and N×1×H×W masks.
pub fn to_batch(samples: &[&Sample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut images = Vec::with_capacity(samples.len() * 3 * h * w);
    let mut masks = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if (s.height, s.width) != (h, w) {
            return Err(Error::shape(
                &[h, w],
                &[s.height, s.width],
                "batch sample size",
            ));
        }
        images.extend_from_slice(&s.image);
        masks.extend(s.mask.iter().map(|&m| f32::from(m)));
    }
    Ok((
        Tensor::from_vec(vec![samples.len(), 3, h, w], images)?,
        Tensor::from_vec(vec![samples.len(), 1, h, w], masks)?,
    ))
}
