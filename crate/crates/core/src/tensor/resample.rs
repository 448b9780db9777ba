use super::{Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::parallel;

/// Source taps for one output coordinate under half-pixel-center sampling:
/// `src = (dst + 0.5)·in/out − 0.5`, clamped at the low edge.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub frac: f64,
}

pub(crate) fn taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let src = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            Tap {
                i0,
                i1,
                frac: src - i0 as f64,
            }
        })
        .collect()
}

/// Bilinear resize of `planes` H×W planes to `oh`×`ow`.
pub(crate) fn upsample_forward<F: Scalar>(
    x: &[F],
    planes: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<F> {
    let (ty, tx) = (taps(h, oh), taps(w, ow));
    let mut y = vec![F::zero(); planes * oh * ow];
    parallel::for_each_chunk(&mut y, oh * ow, |p, out| {
        let src = &x[p * h * w..(p + 1) * h * w];
        for (oy, t) in ty.iter().enumerate() {
            let fy = F::lit(t.frac);
            let (r0, r1) = (
                &src[t.i0 * w..(t.i0 + 1) * w],
                &src[t.i1 * w..(t.i1 + 1) * w],
            );
            for (ox, s) in tx.iter().enumerate() {
                let fx = F::lit(s.frac);
                let top = r0[s.i0] + (r0[s.i1] - r0[s.i0]) * fx;
                let bot = r1[s.i0] + (r1[s.i1] - r1[s.i0]) * fx;
                out[oy * ow + ox] = top + (bot - top) * fy;
            }
        }
    });
    y
}

pub(crate) fn upsample_backward<F: Scalar>(
    gy: &[F],
    planes: usize,
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<F> {
    let (ty, tx) = (taps(h, oh), taps(w, ow));
    let mut gx = vec![F::zero(); planes * h * w];
    parallel::for_each_chunk(&mut gx, h * w, |p, out| {
        let g = &gy[p * oh * ow..(p + 1) * oh * ow];
        for (oy, t) in ty.iter().enumerate() {
            let fy = F::lit(t.frac);
            for (ox, s) in tx.iter().enumerate() {
                let fx = F::lit(s.frac);
                let v = g[oy * ow + ox];
                let (top, bot) = (v * (F::one() - fy), v * fy);
                out[t.i0 * w + s.i0] += top * (F::one() - fx);
                out[t.i0 * w + s.i1] += top * fx;
                out[t.i1 * w + s.i0] += bot * (F::one() - fx);
                out[t.i1 * w + s.i1] += bot * fx;
            }
        }
    });
    gx
}

impl<'g, F: Scalar> Var<'g, F> {
    /// Bilinear upsampling of an N×C×H×W map by an integer factor, sampling
    /// at half-pixel centers (corners not aligned).
    pub fn upsample_bilinear(self, factor: usize) -> Result<Var<'g, F>> {
        if factor < 1 {
            return Err(Error::InvalidArgument(format!(
                "upsampling factor must be ≥ 1, got {factor}"
            )));
        }
        let x = self.value();
        let [n, c, h, w] = x.dims4()?;
        if factor == 1 {
            return Ok(self);
        }
        let out = (h * factor, w * factor);
        let y = upsample_forward(x.data(), n * c, (h, w), out);
        let value = Tensor::from_vec(vec![n, c, out.0, out.1], y)?;
        Ok(self.graph().custom(
            "upsample_bilinear",
            &[self],
            value,
            move |gy: &Tensor<F>| {
                let gx = upsample_backward(gy.data(), n * c, (h, w), out);
                vec![Some(
                    Tensor::from_vec(vec![n, c, h, w], gx).expect("input shape"),
                )]
            },
        ))
    }
}
