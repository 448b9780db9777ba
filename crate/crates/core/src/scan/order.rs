use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four diagonal traversals used by the VSS Scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScanVariant {
    /// Anti-diagonals `r + c = d` for increasing `d`; rows increasing within
    /// a diagonal, so each diagonal starts at its top-right element.
    AntiDiagTL,
    /// Exact reversal of `AntiDiagTL`.
    AntiDiagBR,
    /// Diagonals `c − r = k` from the top-right corner (largest `k`) to the
    /// bottom-left; rows increasing within a diagonal.
    MainDiagTR,
    /// Exact reversal of `MainDiagTR`.
    MainDiagBL,
}

impl ScanVariant {
    pub const ALL: [ScanVariant; 4] = [
        ScanVariant::AntiDiagTL,
        ScanVariant::AntiDiagBR,
        ScanVariant::MainDiagTR,
        ScanVariant::MainDiagBL,
    ];
}

/// A bijective flattening of an H×W grid into a sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanOrder {
    variant: ScanVariant,
    height: usize,
    width: usize,
    /// sequence position → row-major flat index
    forward: Vec<usize>,
    /// row-major flat index → sequence position
    inverse: Vec<usize>,
}

impl ScanOrder {
    pub fn new(height: usize, width: usize, variant: ScanVariant) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape {
                shape: vec![height, width],
                reason: "scan grid dimensions must be positive".into(),
            });
        }
        let forward = match variant {
            ScanVariant::AntiDiagTL => anti_diagonal(height, width),
            ScanVariant::MainDiagTR => main_diagonal(height, width),
            ScanVariant::AntiDiagBR => reversed(anti_diagonal(height, width)),
            ScanVariant::MainDiagBL => reversed(main_diagonal(height, width)),
        };
        let mut inverse = vec![0; forward.len()];
        for (t, &p) in forward.iter().enumerate() {
            inverse[p] = t;
        }
        Ok(Self {
            variant,
            height,
            width,
            forward,
            inverse,
        })
    }

    pub fn variant(&self) -> ScanVariant {
        self.variant
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// `seq[t] = plane[forward[t]]`
    pub fn flatten<T: Copy>(&self, plane: &[T]) -> Vec<T> {
        self.forward.iter().map(|&p| plane[p]).collect()
    }

    /// `plane[p] = seq[inverse[p]]`
    pub fn unflatten<T: Copy>(&self, seq: &[T]) -> Vec<T> {
        self.inverse.iter().map(|&t| seq[t]).collect()
    }

    /// True when `forward` is a permutation of `0..H·W` and `inverse` undoes it.
    pub fn is_bijection(&self) -> bool {
        let n = self.height * self.width;
        if self.forward.len() != n || self.inverse.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &p in &self.forward {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return false;
            }
        }
        self.forward
            .iter()
            .enumerate()
            .all(|(t, &p)| self.inverse[p] == t)
    }

    /// Test hook: duplicates the first entry of the table so it is no longer
    /// a permutation. Used to check that the self-check catches broken tables.
    #[doc(hidden)]
    pub fn inject_duplicate(&mut self) {
        if self.forward.len() > 1 {
            self.forward[1] = self.forward[0];
        }
    }
}

fn anti_diagonal(h: usize, w: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(h * w);
    for d in 0..h + w - 1 {
        let r_lo = d.saturating_sub(w - 1);
        let r_hi = d.min(h - 1);
        for r in r_lo..=r_hi {
            out.push(r * w + (d - r));
        }
    }
    out
}

fn main_diagonal(h: usize, w: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(h * w);
    // k = c − r runs from w − 1 down to −(h − 1)
    for k in (-(h as isize - 1)..=(w as isize - 1)).rev() {
        for r in 0..h as isize {
            let c = r + k;
            if (0..w as isize).contains(&c) {
                out.push(r as usize * w + c as usize);
            }
        }
    }
    out
}

fn reversed(mut v: Vec<usize>) -> Vec<usize> {
    v.reverse();
    v
}
