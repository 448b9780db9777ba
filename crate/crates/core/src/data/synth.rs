//! Synthetic colonoscopy-like images: textured tissue background with soft
//! elliptical lesions, and exact ellipse masks.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pnm, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub count: usize,
    pub size: usize,
    /// Inclusive range of lesions per image.
    pub lesions: [usize; 2],
    /// Semi-major axis as a fraction of the image side.
    pub radius: [f64; 2],
    /// Minor/major axis ratio range.
    pub eccentricity: [f64; 2],
    /// Lesion-minus-background intensity range.
    pub contrast: [f64; 2],
    pub noise: f64,
    /// Width in pixels of the soft lesion edge.
    pub edge_blur: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 200,
            size: 64,
            lesions: [1, 3],
            radius: [0.08, 0.25],
            eccentricity: [0.6, 1.0],
            contrast: [0.15, 0.35],
            noise: 0.05,
            edge_blur: 2.0,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| {
            Err(Error::InvalidArgument(format!(
                "invalid dataset spec: {what}"
            )))
        };
        if self.count == 0 {
            return bad("count must be at least 1");
        }
        if self.size < 8 {
            return bad("size must be at least 8");
        }
        if self.lesions[0] > self.lesions[1] {
            return bad("lesion range is reversed");
        }
        let [r0, r1] = self.radius;
        if !(r0 > 0.0 && r0 <= r1 && r1 < 0.5) {
            return bad("radius range must lie in (0, 0.5)");
        }
        let [e0, e1] = self.eccentricity;
        if !(e0 > 0.0 && e0 <= e1 && e1 <= 1.0) {
            return bad("eccentricity range must lie in (0, 1]");
        }
        if self.contrast[0] > self.contrast[1] || self.noise < 0.0 || self.edge_blur < 0.0 {
            return bad("contrast, noise and edge_blur must be ordered and non-negative");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub spec: DatasetSpec,
    pub splits: Splits,
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:04}")
}

fn range(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

struct Lesion {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    contrast: f64,
}

impl Lesion {
    /// Normalized elliptical radius of pixel centre (y, x); ≤ 1 inside.
    fn rho(&self, y: f64, x: f64) -> f64 {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }
}

/// Generates sample `index`. Each sample draws from its own ChaCha stream, so
/// samples are independent of generation order.
pub fn generate_sample(spec: &DatasetSpec, index: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64 + 1);
    let n = spec.size;
    let side = n as f64;

    let base = [
        rng.gen_range(0.55..0.75),
        rng.gen_range(0.30..0.45),
        rng.gen_range(0.25..0.40),
    ];
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let theta = rng.gen_range(0.0..PI);
            let freq = rng.gen_range(1.0..4.0) * 2.0 * PI / side;
            (
                freq * theta.cos(),
                freq * theta.sin(),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.02..0.06),
            )
        })
        .collect();
    let count = rng.gen_range(spec.lesions[0]..=spec.lesions[1]);
    let lesions: Vec<Lesion> = (0..count)
        .map(|_| {
            let a = range(&mut rng, spec.radius) * side;
            let b = a * range(&mut rng, spec.eccentricity);
            let cy = rng.gen_range(a..=side - a);
            let cx = rng.gen_range(a..=side - a);
            let angle = rng.gen_range(0.0..PI);
            Lesion {
                cy,
                cx,
                a,
                b,
                cos: angle.cos(),
                sin: angle.sin(),
                contrast: range(&mut rng, spec.contrast),
            }
        })
        .collect();

    let hw = n * n;
    let mut image = vec![0.0f32; 3 * hw];
    let mut mask = vec![0u8; hw];
    for r in 0..n {
        for c in 0..n {
            let (y, x) = (r as f64 + 0.5, c as f64 + 0.5);
            let texture: f64 = waves
                .iter()
                .map(|&(ky, kx, ph, amp)| amp * (ky * y + kx * x + ph).sin())
                .sum();
            let mut lift = 0.0f64;
            for l in &lesions {
                let rho = l.rho(y, x);
                if rho <= 1.0 {
                    mask[r * n + c] = 1;
                }
                // soft edge: 1 inside, 0 outside, ramp of `edge_blur` pixels
                let dist = (rho - 1.0) * l.b;
                let alpha = if spec.edge_blur > 0.0 {
                    (0.5 - dist / spec.edge_blur).clamp(0.0, 1.0)
                } else if rho <= 1.0 {
                    1.0
                } else {
                    0.0
                };
                lift = lift.max(alpha * l.contrast);
            }
            for (ch, &b) in base.iter().enumerate() {
                let tint = [1.0, 0.7, 0.5][ch];
                let noise = if spec.noise > 0.0 {
                    rng.gen_range(-spec.noise..spec.noise)
                } else {
                    0.0
                };
                let v = b + texture + lift * tint + noise;
                image[ch * hw + r * n + c] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Sample {
        id: sample_id(index),
        height: n,
        width: n,
        image,
        mask,
    }
}

/// Train/test split of all ids, shuffled by the spec seed.
pub fn split(spec: &DatasetSpec) -> Splits {
    let mut ids: Vec<String> = (0..spec.count).map(sample_id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ids.shuffle(&mut rng);
    let n_test = ((spec.count as f64) * spec.test_fraction).round() as usize;
    let test = ids.split_off(spec.count - n_test);
    ids.sort();
    let mut test = test;
    test.sort();
    Splits { train: ids, test }
}

/// Writes `images/<id>.ppm`, `masks/<id>.pgm` and `manifest.json` under
/// `dir` and returns the manifest path.
pub fn write_dataset(spec: &DatasetSpec, dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    if dir.exists() && !dir.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "output path {} is not a directory",
            dir.display()
        )));
    }
    let images = dir.join("images");
    let masks = dir.join("masks");
    for d in [&images, &masks] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let written = crate::parallel::map(spec.count, |i| -> Result<()> {
        let s = generate_sample(spec, i);
        let img = images.join(format!("{}.ppm", s.id));
        std::fs::write(&img, pnm::encode_rgb(s.height, s.width, &s.image))
            .map_err(|e| Error::io(&img, e))?;
        let m = masks.join(format!("{}.pgm", s.id));
        std::fs::write(&m, pnm::encode_mask(s.height, s.width, &s.mask))
            .map_err(|e| Error::io(&m, e))
    });
    written.into_iter().collect::<Result<()>>()?;
    let manifest = Manifest {
        seed: spec.seed,
        spec: spec.clone(),
        splits: split(spec),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_order_independent() {
        let spec = DatasetSpec::default();
        assert_eq!(generate_sample(&spec, 3), generate_sample(&spec, 3));
        assert_ne!(
            generate_sample(&spec, 3).image,
            generate_sample(&spec, 4).image
        );
    }

    #[test]
    fn split_is_eighty_twenty_and_disjoint() {
        let s = split(&DatasetSpec::default());
        assert_eq!((s.train.len(), s.test.len()), (160, 40));
        assert!(s.test.iter().all(|id| !s.train.contains(id)));
    }

    #[test]
    fn centered_disc_area() {
        let spec = DatasetSpec {
            lesions: [1, 1],
            radius: [0.25, 0.25],
            eccentricity: [1.0, 1.0],
            ..DatasetSpec::default()
        };
        for i in 0..5 {
            let s = generate_sample(&spec, i);
            let frac = s.mask.iter().map(|&m| m as f64).sum::<f64>() / 4096.0;
            let expect = PI * 0.25 * 0.25;
            assert!((frac - expect).abs() / expect < 0.02, "{frac} vs {expect}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = DatasetSpec {
            radius: [0.2, 0.6],
            ..DatasetSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(DatasetSpec {
            count: 0,
            ..DatasetSpec::default()
        }
        .validate()
        .is_err());
    }
}
