//! Elementwise, reduction and channel-permutation operations on [`Var`].

use super::{Scalar, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Silu,
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Mean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceAxis {
    /// N×C×H×W → N×C×1×1
    Spatial,
    /// N×C×H×W → N×1×H×W
    Channel,
}

/// Same-rank broadcast: every dimension pair is equal or one of them is 1.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::shape(a, b, "elementwise"));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(Error::shape(a, b, "elementwise")),
        })
        .collect()
}

/// Flat offset into `inp` for every element of `out` (row-major).
fn broadcast_offsets(out: &[usize], inp: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let mut strides = vec![0; rank];
    let mut s = 1;
    for d in (0..rank).rev() {
        strides[d] = if inp[d] == 1 { 0 } else { s };
        s *= inp[d];
    }
    let n: usize = out.iter().product();
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0; rank];
    let mut cur = 0;
    for _ in 0..n {
        offsets.push(cur);
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= strides[d] * out[d];
            idx[d] = 0;
        }
    }
    offsets
}

/// Sums `full` (shaped like the broadcast output) back onto `shape`.
fn reduce_to<F: Scalar>(full: Vec<F>, shape: &[usize], offsets: Option<&[usize]>) -> Tensor<F> {
    match offsets {
        None => Tensor::from_vec(shape.to_vec(), full).expect("same shape"),
        Some(offs) => {
            let mut out = vec![F::zero(); shape.iter().product()];
            for (&o, v) in offs.iter().zip(full) {
                out[o] += v;
            }
            Tensor::from_vec(shape.to_vec(), out).expect("reduced shape")
        }
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn softplus<F: Scalar>(x: F) -> F {
    // log(1 + e^x) without overflow
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

#[allow(clippy::should_implement_trait)]
impl<'g, F: Scalar> Var<'g, F> {
    pub fn binary(self, kind: BinaryKind, other: Var<'g, F>) -> Result<Var<'g, F>> {
        let a = self.value();
        let b = other.value();
        let out_shape = broadcast_shape(a.shape(), b.shape())?;
        let oa =
            (a.shape() != out_shape.as_slice()).then(|| broadcast_offsets(&out_shape, a.shape()));
        let ob =
            (b.shape() != out_shape.as_slice()).then(|| broadcast_offsets(&out_shape, b.shape()));
        let n: usize = out_shape.iter().product();
        let (ad, bd) = (a.data(), b.data());
        let at = |i: usize| oa.as_ref().map_or_else(|| ad[i], |o| ad[o[i]]);
        let bt = |i: usize| ob.as_ref().map_or_else(|| bd[i], |o| bd[o[i]]);
        let data: Vec<F> = match kind {
            BinaryKind::Add if oa.is_none() && ob.is_none() => {
                ad.iter().zip(bd).map(|(&x, &y)| x + y).collect()
            }
            BinaryKind::Mul if oa.is_none() && ob.is_none() => {
                ad.iter().zip(bd).map(|(&x, &y)| x * y).collect()
            }
            BinaryKind::Add => (0..n).map(|i| at(i) + bt(i)).collect(),
            BinaryKind::Sub => (0..n).map(|i| at(i) - bt(i)).collect(),
            BinaryKind::Mul => (0..n).map(|i| at(i) * bt(i)).collect(),
        };
        let value = Tensor::from_vec(out_shape, data)?;
        let op = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        Ok(self
            .graph()
            .custom(op, &[self, other], value, move |g: &Tensor<F>| {
                let gd = g.data();
                let (ga, gb) = match kind {
                    BinaryKind::Add => (gd.to_vec(), gd.to_vec()),
                    BinaryKind::Sub => (gd.to_vec(), gd.iter().map(|&v| -v).collect()),
                    BinaryKind::Mul => {
                        let (ad, bd) = (a.data(), b.data());
                        let ga = (0..gd.len())
                            .map(|i| gd[i] * ob.as_ref().map_or_else(|| bd[i], |o| bd[o[i]]))
                            .collect();
                        let gb = (0..gd.len())
                            .map(|i| gd[i] * oa.as_ref().map_or_else(|| ad[i], |o| ad[o[i]]))
                            .collect();
                        (ga, gb)
                    }
                };
                vec![
                    Some(reduce_to(ga, a.shape(), oa.as_deref())),
                    Some(reduce_to(gb, b.shape(), ob.as_deref())),
                ]
            }))
    }

    pub fn add(self, other: Var<'g, F>) -> Result<Var<'g, F>> {
        self.binary(BinaryKind::Add, other)
    }

    pub fn sub(self, other: Var<'g, F>) -> Result<Var<'g, F>> {
        self.binary(BinaryKind::Sub, other)
    }

    pub fn mul(self, other: Var<'g, F>) -> Result<Var<'g, F>> {
        self.binary(BinaryKind::Mul, other)
    }

    /// `scale · x + shift` with constant coefficients.
    pub fn affine(self, scale: f64, shift: f64) -> Var<'g, F> {
        let (s, t) = (F::lit(scale), F::lit(shift));
        let value = self.value().map(|v| v * s + t);
        self.graph()
            .custom("affine", &[self], value, move |g: &Tensor<F>| {
                vec![Some(g.map(|v| v * s))]
            })
    }

    pub fn activation(self, kind: Activation) -> Var<'g, F> {
        let x = self.value();
        let (op, y) = match kind {
            Activation::Sigmoid => ("sigmoid", x.map(sigmoid)),
            Activation::Relu => ("relu", x.map(|v| v.max(F::zero()))),
            Activation::Silu => ("silu", x.map(|v| v * sigmoid(v))),
            Activation::Softplus => ("softplus", x.map(softplus)),
        };
        let y_saved = y.clone();
        self.graph().custom(op, &[self], y, move |g: &Tensor<F>| {
            let dy = match kind {
                Activation::Sigmoid => g
                    .zip_map(&y_saved, |g, y| g * y * (F::one() - y))
                    .expect("same shape"),
                Activation::Relu => g
                    .zip_map(&x, |g, x| if x > F::zero() { g } else { F::zero() })
                    .expect("same shape"),
                Activation::Silu => g
                    .zip_map(&x, |g, x| {
                        let s = sigmoid(x);
                        g * s * (F::one() + x * (F::one() - s))
                    })
                    .expect("same shape"),
                Activation::Softplus => g.zip_map(&x, |g, x| g * sigmoid(x)).expect("same shape"),
            };
            vec![Some(dy)]
        })
    }

    pub fn sigmoid(self) -> Var<'g, F> {
        self.activation(Activation::Sigmoid)
    }

    pub fn relu(self) -> Var<'g, F> {
        self.activation(Activation::Relu)
    }

    pub fn silu(self) -> Var<'g, F> {
        self.activation(Activation::Silu)
    }

    pub fn softplus(self) -> Var<'g, F> {
        self.activation(Activation::Softplus)
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum_all(self) -> Var<'g, F> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let value = Tensor::scalar(x.sum());
        self.graph()
            .custom("sum_all", &[self], value, move |g: &Tensor<F>| {
                vec![Some(Tensor::full(shape, g.item()))]
            })
    }

    pub fn mean_all(self) -> Var<'g, F> {
        let n = self.value().numel() as f64;
        self.sum_all().affine(1.0 / n, 0.0)
    }

    /// Spatial or channel mean/max of an N×C×H×W map. Max routes the gradient
    /// to the first maximum in row-major order.
    pub fn reduce(self, kind: ReduceKind, axis: ReduceAxis) -> Result<Var<'g, F>> {
        let x = self.value();
        let [n, c, h, w] = x.dims4()?;
        let hw = h * w;
        let xd = x.data();
        // (output shape, number of outputs, reduction length, element index fn)
        let (out_shape, outer, len) = match axis {
            ReduceAxis::Spatial => (vec![n, c, 1, 1], n * c, hw),
            ReduceAxis::Channel => (vec![n, 1, h, w], n * hw, c),
        };
        let index = move |o: usize, k: usize| match axis {
            ReduceAxis::Spatial => o * hw + k,
            ReduceAxis::Channel => (o / hw) * c * hw + k * hw + o % hw,
        };
        let mut out = Vec::with_capacity(outer);
        let mut argmax = Vec::new();
        for o in 0..outer {
            match kind {
                ReduceKind::Mean => {
                    let s: F = (0..len).map(|k| xd[index(o, k)]).sum();
                    out.push(s / F::lit(len as f64));
                }
                ReduceKind::Max => {
                    let mut best = 0;
                    for k in 1..len {
                        if xd[index(o, k)] > xd[index(o, best)] {
                            best = k;
                        }
                    }
                    argmax.push(index(o, best));
                    out.push(xd[index(o, best)]);
                }
            }
        }
        let value = Tensor::from_vec(out_shape, out)?;
        let in_shape = x.shape().to_vec();
        let op = match kind {
            ReduceKind::Mean => "reduce_mean",
            ReduceKind::Max => "reduce_max",
        };
        Ok(self
            .graph()
            .custom(op, &[self], value, move |g: &Tensor<F>| {
                let mut gx = vec![F::zero(); in_shape.iter().product()];
                let gd = g.data();
                match kind {
                    ReduceKind::Mean => {
                        let scale = F::one() / F::lit(len as f64);
                        for (o, &gv) in gd.iter().enumerate() {
                            for k in 0..len {
                                gx[index(o, k)] += gv * scale;
                            }
                        }
                    }
                    ReduceKind::Max => {
                        for (&at, &gv) in argmax.iter().zip(gd) {
                            gx[at] += gv;
                        }
                    }
                }
                vec![Some(Tensor::from_vec(in_shape, gx).expect("input shape"))]
            }))
    }

    /// Concatenates N×Cᵢ×H×W maps along the channel axis.
    pub fn concat_channels(parts: &[Var<'g, F>]) -> Result<Var<'g, F>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let values: Vec<Tensor<F>> = parts.iter().map(|p| p.value()).collect();
        let [n, _, h, w] = values[0].dims4()?;
        let mut channels = Vec::with_capacity(values.len());
        for v in &values {
            let [vn, vc, vh, vw] = v.dims4()?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::shape(
                    values[0].shape(),
                    v.shape(),
                    "concat_channels",
                ));
            }
            channels.push(vc);
        }
        let total: usize = channels.iter().sum();
        let hw = h * w;
        let mut data = Vec::with_capacity(n * total * hw);
        for b in 0..n {
            for (v, &c) in values.iter().zip(&channels) {
                data.extend_from_slice(&v.data()[b * c * hw..(b + 1) * c * hw]);
            }
        }
        let value = Tensor::from_vec(vec![n, total, h, w], data)?;
        Ok(first
            .graph()
            .custom("concat_channels", parts, value, move |g: &Tensor<F>| {
                let gd = g.data();
                let mut offset = 0;
                let mut out = Vec::with_capacity(channels.len());
                for &c in &channels {
                    let mut part = Vec::with_capacity(n * c * hw);
                    for b in 0..n {
                        let start = (b * total + offset) * hw;
                        part.extend_from_slice(&gd[start..start + c * hw]);
                    }
                    out.push(Some(
                        Tensor::from_vec(vec![n, c, h, w], part).expect("part shape"),
                    ));
                    offset += c;
                }
                out
            }))
    }

    /// Channels `start..start + len`.
    pub fn slice_channels(self, start: usize, len: usize) -> Result<Var<'g, F>> {
        let x = self.value();
        let [n, c, h, w] = x.dims4()?;
        if len == 0 || start + len > c {
            return Err(Error::InvalidArgument(format!(
                "channel slice {start}..{} of {c} channels",
                start + len
            )));
        }
        let perm: Vec<usize> = (start..start + len).collect();
        let _ = (n, h, w);
        self.gather_channels(perm, "slice_channels")
    }

    /// Output channel `j` = input channel `perm[j]`.
    pub fn permute_channels(self, perm: &[usize]) -> Result<Var<'g, F>> {
        let c = self.dims4()?[1];
        let mut seen = vec![false; c];
        if perm.len() != c
            || perm
                .iter()
                .any(|&p| p >= c || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidArgument(format!(
                "{perm:?} is not a permutation of {c} channels"
            )));
        }
        self.gather_channels(perm.to_vec(), "permute_channels")
    }

    /// Group transpose: output channel `j·groups + g` takes input channel
    /// `g·(C/groups) + j`.
    pub fn channel_shuffle(self, groups: usize) -> Result<Var<'g, F>> {
        let c = self.dims4()?[1];
        if groups == 0 || c % groups != 0 {
            return Err(Error::Divisibility {
                what: "channel_shuffle channels",
                value: c,
                divisor: groups,
            });
        }
        self.gather_channels(shuffle_permutation(c, groups), "channel_shuffle")
    }

    fn gather_channels(self, src: Vec<usize>, op: &'static str) -> Result<Var<'g, F>> {
        let x = self.value();
        let [n, c, h, w] = x.dims4()?;
        let hw = h * w;
        let k = src.len();
        let xd = x.data();
        let mut data = Vec::with_capacity(n * k * hw);
        for b in 0..n {
            for &s in &src {
                let start = (b * c + s) * hw;
                data.extend_from_slice(&xd[start..start + hw]);
            }
        }
        let value = Tensor::from_vec(vec![n, k, h, w], data)?;
        Ok(self
            .graph()
            .custom(op, &[self], value, move |g: &Tensor<F>| {
                let gd = g.data();
                let mut gx = vec![F::zero(); n * c * hw];
                for b in 0..n {
                    for (j, &s) in src.iter().enumerate() {
                        let dst = (b * c + s) * hw;
                        let from = (b * k + j) * hw;
                        for (o, &v) in gx[dst..dst + hw].iter_mut().zip(&gd[from..from + hw]) {
                            *o += v;
                        }
                    }
                }
                vec![Some(
                    Tensor::from_vec(vec![n, c, h, w], gx).expect("input shape"),
                )]
            }))
    }
}

/// Source channel for each output channel of a channel shuffle.
pub(crate) fn shuffle_permutation(channels: usize, groups: usize) -> Vec<usize> {
    let per_group = channels / groups;
    (0..channels)
        .map(|o| {
            let (j, g) = (o / groups, o % groups);
            g * per_group + j
        })
        .collect()
}
