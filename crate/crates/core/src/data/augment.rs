use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    /// Rotation angle bound in degrees.
    pub rotation_deg: f64,
    /// Additive brightness amplitude.
    pub brightness: f64,
    /// Multiplicative contrast amplitude around the image mean.
    pub contrast: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            rotation_deg: 15.0,
            brightness: 0.2,
            contrast: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self {
            flip_prob: 0.0,
            rotation_deg: 0.0,
            brightness: 0.0,
            contrast: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidArgument("flip_prob must lie in [0,1]".into()));
        }
        if self.rotation_deg < 0.0 || self.brightness < 0.0 || self.contrast < 0.0 {
            return Err(Error::InvalidArgument(
                "augmentation bounds must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn symmetric(rng: &mut ChaCha8Rng, bound: f64) -> f64 {
    if bound > 0.0 {
        rng.gen_range(-bound..=bound)
    } else {
        0.0
    }
}

pub fn flip_horizontal(s: &Sample) -> Sample {
    let (h, w) = (s.height, s.width);
    let flip = |plane: &[f32]| -> Vec<f32> {
        plane
            .chunks(w)
            .flat_map(|row| row.iter().rev().copied())
            .collect()
    };
    let image = s.image.chunks(h * w).flat_map(flip).collect();
    let mask = s
        .mask
        .chunks(w)
        .flat_map(|row| row.iter().rev().copied())
        .collect();
    Sample {
        image,
        mask,
        ..s.clone()
    }
}

/// Rotates image (bilinear) and mask (nearest) about the centre, zero fill.
pub fn rotate(s: &Sample, degrees: f64) -> Sample {
    let (h, w) = (s.height, s.width);
    let hw = h * w;
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut image = vec![0.0f32; 3 * hw];
    let mut mask = vec![0u8; hw];
    for r in 0..h {
        for c in 0..w {
            // inverse-map the output pixel centre into the source
            let (dy, dx) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
            let sx = cos * dx + sin * dy + cx - 0.5;
            let sy = -sin * dx + cos * dy + cy - 0.5;
            let (nr, nc) = (sy.round(), sx.round());
            if nr >= 0.0 && nc >= 0.0 && (nr as usize) < h && (nc as usize) < w {
                mask[r * w + c] = s.mask[nr as usize * w + nc as usize];
            }
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            for ch in 0..3 {
                let plane = &s.image[ch * hw..(ch + 1) * hw];
                let at = |y: f64, x: f64| -> f64 {
                    if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
                        0.0
                    } else {
                        f64::from(plane[y as usize * w + x as usize])
                    }
                };
                let v = (1.0 - fy) * ((1.0 - fx) * at(y0, x0) + fx * at(y0, x0 + 1.0))
                    + fy * ((1.0 - fx) * at(y0 + 1.0, x0) + fx * at(y0 + 1.0, x0 + 1.0));
                image[ch * hw + r * w + c] = v as f32;
            }
        }
    }
    Sample {
        image,
        mask,
        ..s.clone()
    }
}

/// Random flip, rotation and brightness/contrast jitter. The mask follows
/// the geometric transforms only.
pub fn augment(s: &Sample, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Sample {
    let flip = cfg.flip_prob > 0.0 && rng.gen_bool(cfg.flip_prob);
    let angle = symmetric(rng, cfg.rotation_deg);
    let brightness = symmetric(rng, cfg.brightness) as f32;
    let contrast = 1.0 + symmetric(rng, cfg.contrast) as f32;
    let mut out = if flip { flip_horizontal(s) } else { s.clone() };
    if angle != 0.0 {
        out = rotate(&out, angle);
    }
    if brightness != 0.0 || contrast != 1.0 {
        let mean = out.image.iter().sum::<f32>() / out.image.len() as f32;
        for v in &mut out.image {
            *v = ((*v - mean) * contrast + mean + brightness).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_sample;
    use crate::data::DatasetSpec;
    use rand::SeedableRng;

    fn sample() -> Sample {
        generate_sample(
            &DatasetSpec {
                size: 16,
                ..DatasetSpec::default()
            },
            0,
        )
    }

    #[test]
    fn identity_config_and_double_flip() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&s, &AugmentConfig::identity(), &mut rng), s);
        assert_eq!(flip_horizontal(&flip_horizontal(&s)), s);
        assert_eq!(rotate(&s, 0.0), s);
    }

    #[test]
    fn rotation_keeps_mask_binary() {
        let s = sample();
        let r = rotate(&s, 13.0);
        assert!(r.mask.iter().all(|&m| m <= 1));
    }
}
