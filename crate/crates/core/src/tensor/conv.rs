//! 2-D (transposed) cross-correlation over N×C×H×W tensors.
//!
//! Three kernels cover both directions: the forward correlation, its
//! input-gradient and its weight-gradient. A transposed convolution is the
//! input-gradient kernel run forwards, so it reuses the same three.

use super::{Scalar, Tensor, Var};
use crate::error::{Error, Result};
use crate::parallel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub const POINTWISE: ConvSpec = ConvSpec {
        stride: 1,
        padding: 0,
        groups: 1,
    };

    /// Stride-1 convolution that preserves spatial size for odd `kernel`.
    pub fn same(kernel: usize) -> Self {
        Self {
            stride: 1,
            padding: kernel / 2,
            groups: 1,
        }
    }

    pub fn depthwise(kernel: usize, channels: usize) -> Self {
        Self {
            groups: channels,
            ..Self::same(kernel)
        }
    }

    pub fn strided(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            groups: 1,
        }
    }
}

/// Geometry of one correlation: `x` is [n, c, h, w], `w` is [oc, c/groups, kh, kw].
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub oc: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
    pub spec: ConvSpec,
}

impl ConvGeom {
    pub(crate) fn new(x: [usize; 4], wshape: [usize; 4], spec: ConvSpec) -> Result<Self> {
        let [n, c, h, w] = x;
        let [oc, icg, kh, kw] = wshape;
        if spec.stride == 0 {
            return Err(Error::InvalidArgument(
                "convolution stride must be ≥ 1".into(),
            ));
        }
        if spec.groups == 0 || c % spec.groups != 0 {
            return Err(Error::Divisibility {
                what: "input channels",
                value: c,
                divisor: spec.groups,
            });
        }
        if oc % spec.groups != 0 {
            return Err(Error::Divisibility {
                what: "output channels",
                value: oc,
                divisor: spec.groups,
            });
        }
        if icg != c / spec.groups {
            return Err(Error::shape(&x, &wshape, "conv2d weight input channels"));
        }
        let (ph, pw) = (h + 2 * spec.padding, w + 2 * spec.padding);
        if kh > ph || kw > pw {
            return Err(Error::NegativeDimension {
                kernel: kh.max(kw),
                padded: ph.min(pw),
            });
        }
        Ok(Self {
            n,
            c,
            h,
            w,
            oc,
            kh,
            kw,
            oh: (ph - kh) / spec.stride + 1,
            ow: (pw - kw) / spec.stride + 1,
            spec,
        })
    }

    fn icg(&self) -> usize {
        self.c / self.spec.groups
    }

    fn ocg(&self) -> usize {
        self.oc / self.spec.groups
    }

    /// Output positions `o` along one axis whose input `o·s + k − p` lies in `0..len`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let (s, p) = (self.spec.stride as isize, self.spec.padding as isize);
        let k = k as isize;
        let lo = (p - k).max(0);
        let lo = (lo + s - 1) / s;
        let hi = (len as isize - 1 + p - k).div_euclid(s) + 1;
        let hi = hi.clamp(0, out_len as isize);
        (lo.min(hi) as usize, hi as usize)
    }
}

pub(crate) fn conv_forward<F: Scalar>(x: &[F], wt: &[F], g: &ConvGeom) -> Vec<F> {
    let (icg, ocg) = (g.icg(), g.ocg());
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    let (s, p) = (g.spec.stride, g.spec.padding);
    let mut y = vec![F::zero(); g.n * g.oc * ohw];
    parallel::for_each_chunk(&mut y, ohw, |plane, out| {
        let (b, o) = (plane / g.oc, plane % g.oc);
        let group = o / ocg;
        for ci in 0..icg {
            let ic = group * icg + ci;
            let xp = &x[(b * g.c + ic) * hw..(b * g.c + ic + 1) * hw];
            for ky in 0..g.kh {
                let (oy0, oy1) = g.valid_range(ky, g.h, g.oh);
                for kx in 0..g.kw {
                    let wv = wt[((o * icg + ci) * g.kh + ky) * g.kw + kx];
                    if wv == F::zero() {
                        continue;
                    }
                    let (ox0, ox1) = g.valid_range(kx, g.w, g.ow);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - p;
                        let row = &xp[iy * g.w..(iy + 1) * g.w];
                        let orow = &mut out[oy * g.ow..(oy + 1) * g.ow];
                        if s == 1 {
                            let ix0 = ox0 + kx - p;
                            for (ov, &xv) in orow[ox0..ox1].iter_mut().zip(&row[ix0..]) {
                                *ov += wv * xv;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                orow[ox] += wv * row[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
    });
    y
}

pub(crate) fn conv_backward_input<F: Scalar>(gy: &[F], wt: &[F], g: &ConvGeom) -> Vec<F> {
    let (icg, ocg) = (g.icg(), g.ocg());
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    let (s, p) = (g.spec.stride, g.spec.padding);
    let mut gx = vec![F::zero(); g.n * g.c * hw];
    parallel::for_each_chunk(&mut gx, hw, |plane, out| {
        let (b, ic) = (plane / g.c, plane % g.c);
        let (group, ci) = (ic / icg, ic % icg);
        for o in group * ocg..(group + 1) * ocg {
            let gp = &gy[(b * g.oc + o) * ohw..(b * g.oc + o + 1) * ohw];
            for ky in 0..g.kh {
                let (oy0, oy1) = g.valid_range(ky, g.h, g.oh);
                for kx in 0..g.kw {
                    let wv = wt[((o * icg + ci) * g.kh + ky) * g.kw + kx];
                    if wv == F::zero() {
                        continue;
                    }
                    let (ox0, ox1) = g.valid_range(kx, g.w, g.ow);
                    for oy in oy0..oy1 {
                        let iy = oy * s + ky - p;
                        let grow = &gp[oy * g.ow..(oy + 1) * g.ow];
                        let xrow = &mut out[iy * g.w..(iy + 1) * g.w];
                        if s == 1 {
                            let ix0 = ox0 + kx - p;
                            for (xv, &gv) in xrow[ix0..].iter_mut().zip(&grow[ox0..ox1]) {
                                *xv += wv * gv;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                xrow[ox * s + kx - p] += wv * grow[ox];
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

pub(crate) fn conv_backward_weight<F: Scalar>(gy: &[F], x: &[F], g: &ConvGeom) -> Vec<F> {
    let (icg, ocg) = (g.icg(), g.ocg());
    let (hw, ohw) = (g.h * g.w, g.oh * g.ow);
    let (s, p) = (g.spec.stride, g.spec.padding);
    let per_out = icg * g.kh * g.kw;
    let mut gw = vec![F::zero(); g.oc * per_out];
    parallel::for_each_chunk(&mut gw, per_out, |o, out| {
        let group = o / ocg;
        for b in 0..g.n {
            let gp = &gy[(b * g.oc + o) * ohw..(b * g.oc + o + 1) * ohw];
            for ci in 0..icg {
                let ic = group * icg + ci;
                let xp = &x[(b * g.c + ic) * hw..(b * g.c + ic + 1) * hw];
                for ky in 0..g.kh {
                    let (oy0, oy1) = g.valid_range(ky, g.h, g.oh);
                    for kx in 0..g.kw {
                        let (ox0, ox1) = g.valid_range(kx, g.w, g.ow);
                        let mut acc = F::zero();
                        for oy in oy0..oy1 {
                            let iy = oy * s + ky - p;
                            let grow = &gp[oy * g.ow..(oy + 1) * g.ow];
                            let xrow = &xp[iy * g.w..(iy + 1) * g.w];
                            if s == 1 {
                                let ix0 = ox0 + kx - p;
                                for (&gv, &xv) in grow[ox0..ox1].iter().zip(&xrow[ix0..]) {
                                    acc += gv * xv;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    acc += grow[ox] * xrow[ox * s + kx - p];
                                }
                            }
                        }
                        out[(ci * g.kh + ky) * g.kw + kx] += acc;
                    }
                }
            }
        }
    });
    gw
}

/// Per-channel sum over N, H, W of an N×C×H×W buffer.
fn channel_sums<F: Scalar>(gy: &[F], n: usize, c: usize, hw: usize) -> Vec<F> {
    let mut out = vec![F::zero(); c];
    for b in 0..n {
        for (ch, acc) in out.iter_mut().enumerate() {
            *acc += gy[(b * c + ch) * hw..(b * c + ch + 1) * hw]
                .iter()
                .copied()
                .sum();
        }
    }
    out
}

fn add_bias<F: Scalar>(y: &mut [F], bias: &[F], hw: usize) {
    let c = bias.len();
    for (plane, chunk) in y.chunks_mut(hw).enumerate() {
        let b = bias[plane % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn check_bias<F: Scalar>(bias: Option<&Tensor<F>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.numel() != channels {
            return Err(Error::shape(b.shape(), &[channels], "conv bias"));
        }
    }
    Ok(())
}

fn weight_dims<F: Scalar>(w: &Tensor<F>) -> Result<[usize; 4]> {
    w.dims4().map_err(|_| Error::InvalidShape {
        shape: w.shape().to_vec(),
        reason: "convolution weights must be rank 4".into(),
    })
}

impl<'g, F: Scalar> Var<'g, F> {
    /// Cross-correlation with weights `[out, in/groups, kh, kw]` and optional
    /// per-output-channel bias.
    pub fn conv2d(
        self,
        weight: Var<'g, F>,
        bias: Option<Var<'g, F>>,
        spec: ConvSpec,
    ) -> Result<Var<'g, F>> {
        let x = self.value();
        let w = weight.value();
        let bv = bias.map(|b| b.value());
        let geom = ConvGeom::new(x.dims4()?, weight_dims(&w)?, spec)?;
        check_bias(bv.as_ref(), geom.oc)?;
        let mut y = conv_forward(x.data(), w.data(), &geom);
        if let Some(b) = &bv {
            add_bias(&mut y, b.data(), geom.oh * geom.ow);
        }
        let value = Tensor::from_vec(vec![geom.n, geom.oc, geom.oh, geom.ow], y)?;
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        let bias_shape = bv.map(|b| b.shape().to_vec());
        Ok(self
            .graph()
            .custom("conv2d", &parents, value, move |gy: &Tensor<F>| {
                let gyd = gy.data();
                let gx = conv_backward_input(gyd, w.data(), &geom);
                let gw = conv_backward_weight(gyd, x.data(), &geom);
                let mut out = vec![
                    Some(Tensor::from_vec(x.shape().to_vec(), gx).expect("x shape")),
                    Some(Tensor::from_vec(w.shape().to_vec(), gw).expect("w shape")),
                ];
                if has_bias {
                    let gb = channel_sums(gyd, geom.n, geom.oc, geom.oh * geom.ow);
                    out.push(Some(
                        Tensor::from_vec(bias_shape.expect("bias"), gb).expect("bias shape"),
                    ));
                }
                out
            }))
    }

    /// Transposed convolution with weights `[in, out/groups, kh, kw]`. Output
    /// size is `(H − 1)·stride − 2·padding + kh`.
    pub fn conv_transpose2d(
        self,
        weight: Var<'g, F>,
        bias: Option<Var<'g, F>>,
        spec: ConvSpec,
    ) -> Result<Var<'g, F>> {
        let x = self.value();
        let w = weight.value();
        let bv = bias.map(|b| b.value());
        let [n, cin, h, wd] = x.dims4()?;
        let [wc, ocg, kh, kw] = weight_dims(&w)?;
        if wc != cin {
            return Err(Error::shape(
                x.shape(),
                w.shape(),
                "conv_transpose2d weight",
            ));
        }
        if spec.stride == 0 {
            return Err(Error::InvalidArgument(
                "convolution stride must be ≥ 1".into(),
            ));
        }
        let oh = ((h - 1) * spec.stride + kh) as isize - 2 * spec.padding as isize;
        let ow = ((wd - 1) * spec.stride + kw) as isize - 2 * spec.padding as isize;
        if oh < 1 || ow < 1 {
            return Err(Error::NegativeDimension {
                kernel: kh.max(kw),
                padded: h.min(wd),
            });
        }
        let (oh, ow) = (oh as usize, ow as usize);
        let cout = ocg * spec.groups;
        // The equivalent forward correlation maps the [n, cout, oh, ow] output
        // back onto the [n, cin, h, w] input.
        let geom = ConvGeom::new([n, cout, oh, ow], [cin, ocg, kh, kw], spec)?;
        if (geom.oh, geom.ow) != (h, wd) {
            return Err(Error::InvalidArgument(format!(
                "transposed convolution geometry does not invert ({h}×{wd} → {oh}×{ow})"
            )));
        }
        check_bias(bv.as_ref(), cout)?;
        let mut y = conv_backward_input(x.data(), w.data(), &geom);
        if let Some(b) = &bv {
            add_bias(&mut y, b.data(), oh * ow);
        }
        let value = Tensor::from_vec(vec![n, cout, oh, ow], y)?;
        let mut parents = vec![self, weight];
        parents.extend(bias);
        let has_bias = bias.is_some();
        let bias_shape = bv.map(|b| b.shape().to_vec());
        Ok(self.graph().custom(
            "conv_transpose2d",
            &parents,
            value,
            move |gy: &Tensor<F>| {
                let gyd = gy.data();
                let gx = conv_forward(gyd, w.data(), &geom);
                let gw = conv_backward_weight(x.data(), gyd, &geom);
                let mut out = vec![
                    Some(Tensor::from_vec(x.shape().to_vec(), gx).expect("x shape")),
                    Some(Tensor::from_vec(w.shape().to_vec(), gw).expect("w shape")),
                ];
                if has_bias {
                    let gb = channel_sums(gyd, n, cout, oh * ow);
                    out.push(Some(
                        Tensor::from_vec(bias_shape.expect("bias"), gb).expect("bias shape"),
                    ));
                }
                out
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    /// Straight-line correlation used to check the optimized kernel.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, spec: ConvSpec) -> Vec<f64> {
        let [n, c, h, wd] = x.dims4().unwrap();
        let [oc, icg, kh, kw] = w.dims4().unwrap();
        let oh = (h + 2 * spec.padding - kh) / spec.stride + 1;
        let ow = (wd + 2 * spec.padding - kw) / spec.stride + 1;
        let ocg = oc / spec.groups;
        let mut y = vec![0.0; n * oc * oh * ow];
        for b in 0..n {
            for o in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..icg {
                            let ic = (o / ocg) * icg + ci;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy =
                                        (oy * spec.stride + ky) as isize - spec.padding as isize;
                                    let ix =
                                        (ox * spec.stride + kx) as isize - spec.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.at4(b, ic, iy as usize, ix as usize)
                                        * w.at4(o, ci, ky, kx);
                                }
                            }
                        }
                        y[((b * oc + o) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        let _ = c;
        y
    }

    fn ramp(shape: &[usize], k: f64) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(
            shape.to_vec(),
            (0..n)
                .map(|i| ((i as f64 * k).sin() * 3.0).round() / 3.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn matches_naive_for_assorted_geometries() {
        let cases = [
            (
                [2, 4, 7, 6],
                [6, 2, 3, 3],
                ConvSpec {
                    stride: 2,
                    padding: 1,
                    groups: 2,
                },
            ),
            (
                [1, 3, 8, 8],
                [5, 3, 4, 4],
                ConvSpec {
                    stride: 4,
                    padding: 0,
                    groups: 1,
                },
            ),
            (
                [1, 4, 5, 5],
                [4, 1, 7, 7],
                ConvSpec {
                    stride: 1,
                    padding: 3,
                    groups: 4,
                },
            ),
            ([2, 2, 3, 9], [3, 2, 1, 1], ConvSpec::POINTWISE),
        ];
        for (xs, ws, spec) in cases {
            let x = ramp(&xs, 0.37);
            let w = ramp(&ws, 0.91);
            let g = Graph::new();
            let y = g
                .constant(x.clone())
                .conv2d(g.constant(w.clone()), None, spec)
                .unwrap();
            let expect = naive(&x, &w, spec);
            for (a, b) in y.value().data().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pointwise_scaling_and_delta_kernel() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::ones(vec![1, 1, 2, 2]));
        let w = g.constant(Tensor::full(vec![1, 1, 1, 1], 2.0));
        let y = x.conv2d(w, None, ConvSpec::POINTWISE).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 2.0));

        let img = ramp(&[1, 3, 5, 4], 1.3);
        let mut delta = vec![0.0; 3 * 9];
        for c in 0..3 {
            delta[c * 9 + 4] = 1.0;
        }
        let k = g.constant(Tensor::from_vec(vec![3, 1, 3, 3], delta).unwrap());
        let y = g
            .constant(img.clone())
            .conv2d(k, None, ConvSpec::depthwise(3, 3))
            .unwrap();
        assert_eq!(y.value(), img);
    }

    #[test]
    fn transposed_upsamples_by_two() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::ones(vec![1, 3, 8, 8]));
        let w = g.constant(Tensor::ones(vec![3, 5, 4, 4]));
        let y = x
            .conv_transpose2d(w, None, ConvSpec::strided(2, 1))
            .unwrap();
        assert_eq!(y.shape(), vec![1, 5, 16, 16]);
        let z = g
            .constant(Tensor::zeros(vec![1, 3, 8, 8]))
            .conv_transpose2d(w, None, ConvSpec::strided(2, 1))
            .unwrap();
        assert!(z.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn precondition_errors() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::ones(vec![1, 3, 4, 4]));
        let w = g.constant(Tensor::ones(vec![4, 1, 3, 3]));
        assert!(matches!(
            x.conv2d(
                w,
                None,
                ConvSpec {
                    stride: 1,
                    padding: 1,
                    groups: 2
                }
            ),
            Err(Error::Divisibility { .. })
        ));
        let big = g.constant(Tensor::ones(vec![2, 3, 7, 7]));
        assert!(matches!(
            x.conv2d(big, None, ConvSpec::POINTWISE),
            Err(Error::NegativeDimension { .. })
        ));
    }
}
