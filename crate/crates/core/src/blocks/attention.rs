use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Scope};
use crate::tensor::{ConvSpec, ParamBuilder, ParamId, ReduceAxis, ReduceKind, Scalar, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    Gab,
    Cbam,
}

impl std::str::FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gab" => Ok(Self::Gab),
            "cbam" => Ok(Self::Cbam),
            other => Err(Error::InvalidArgument(format!(
                "unknown attention kind {other:?} (expected gab or cbam)"
            ))),
        }
    }
}

/// Per-channel weights from spatially pooled descriptors through a shared
/// bottleneck.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub fc1: Conv2d,
    pub fc2: Conv2d,
}

impl ChannelAttention {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        reduction: usize,
    ) -> Result<Self> {
        let hidden = (channels / reduction.max(1)).max(1);
        let spec = ConvSpec::POINTWISE;
        Ok(Self {
            fc1: Conv2d::new(b, "fc1", (channels, hidden), 1, spec, false)?,
            fc2: Conv2d::new(b, "fc2", (hidden, channels), 1, spec, false)?,
        })
    }

    /// N×C×1×1 weights in (0,1).
    pub fn weights<'g, F: Scalar>(&self, s: Scope<'g, F>, m: Var<'g, F>) -> Result<Var<'g, F>> {
        let mlp = |v: Var<'g, F>| -> Result<Var<'g, F>> {
            self.fc2.forward(s, self.fc1.forward(s, v)?.relu())
        };
        let avg = mlp(m.reduce(ReduceKind::Mean, ReduceAxis::Spatial)?)?;
        let max = mlp(m.reduce(ReduceKind::Max, ReduceAxis::Spatial)?)?;
        Ok(avg.add(max)?.sigmoid())
    }
}

/// Per-position weights from channel mean/max maps through a k×k conv.
#[derive(Clone, Debug)]
pub struct SpatialAttention {
    pub conv: Conv2d,
}

impl SpatialAttention {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, kernel: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(b, "conv", (2, 1), kernel, ConvSpec::same(kernel), false)?,
        })
    }

    /// N×1×H×W weights in (0,1).
    pub fn weights<'g, F: Scalar>(&self, s: Scope<'g, F>, m: Var<'g, F>) -> Result<Var<'g, F>> {
        let mean = m.reduce(ReduceKind::Mean, ReduceAxis::Channel)?;
        let max = m.reduce(ReduceKind::Max, ReduceAxis::Channel)?;
        let pooled = Var::concat_channels(&[mean, max])?;
        Ok(self.conv.forward(s, pooled)?.sigmoid())
    }
}

/// `((1−λ)·W_c + λ·W_s) ⊙ m + m` with the weights broadcast to `m`'s shape.
pub fn gab_combine<'g, F: Scalar>(
    wc: Var<'g, F>,
    ws: Var<'g, F>,
    lambda: Var<'g, F>,
    m: Var<'g, F>,
) -> Result<Var<'g, F>> {
    let wcs = wc.mul(lambda.affine(-1.0, 1.0))?.add(ws.mul(lambda)?)?;
    wcs.mul(m)?.add(m)
}

/// Serial composition: `m′ = W_c ⊙ m`, `out = W_s(m′) ⊙ m′`.
pub fn cbam_combine<'g, F: Scalar>(
    wc: Var<'g, F>,
    spatial: impl FnOnce(Var<'g, F>) -> Result<Var<'g, F>>,
    m: Var<'g, F>,
) -> Result<Var<'g, F>> {
    let refined = wc.mul(m)?;
    spatial(refined)?.mul(refined)
}

#[derive(Clone, Debug)]
pub struct Gab {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
    /// λ = sigmoid(raw_lambda)
    pub raw_lambda: ParamId,
}

impl Gab {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        reduction: usize,
        kernel: usize,
    ) -> Result<Self> {
        Ok(Self {
            channel: ChannelAttention::new(&mut b.scope("channel"), channels, reduction)?,
            spatial: SpatialAttention::new(&mut b.scope("spatial"), kernel)?,
            raw_lambda: b.zeros("raw_lambda", &[1, 1, 1, 1])?,
        })
    }

    pub fn lambda<'g, F: Scalar>(&self, s: Scope<'g, F>) -> Var<'g, F> {
        s.param(self.raw_lambda).sigmoid()
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, m: Var<'g, F>) -> Result<Var<'g, F>> {
        let wc = self.channel.weights(s, m)?;
        let ws = self.spatial.weights(s, m)?;
        gab_combine(wc, ws, self.lambda(s), m)
    }
}

#[derive(Clone, Debug)]
pub struct Cbam {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

impl Cbam {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        reduction: usize,
        kernel: usize,
    ) -> Result<Self> {
        Ok(Self {
            channel: ChannelAttention::new(&mut b.scope("channel"), channels, reduction)?,
            spatial: SpatialAttention::new(&mut b.scope("spatial"), kernel)?,
        })
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, m: Var<'g, F>) -> Result<Var<'g, F>> {
        let wc = self.channel.weights(s, m)?;
        cbam_combine(wc, |r| self.spatial.weights(s, r), m)
    }
}

#[derive(Clone, Debug)]
pub enum AttentionBlock {
    Gab(Gab),
    Cbam(Cbam),
}

impl AttentionBlock {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        kind: AttentionKind,
        channels: usize,
        reduction: usize,
        kernel: usize,
    ) -> Result<Self> {
        Ok(match kind {
            AttentionKind::Gab => Self::Gab(Gab::new(b, channels, reduction, kernel)?),
            AttentionKind::Cbam => Self::Cbam(Cbam::new(b, channels, reduction, kernel)?),
        })
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, m: Var<'g, F>) -> Result<Var<'g, F>> {
        match self {
            Self::Gab(g) => g.forward(s, m),
            Self::Cbam(c) => c.forward(s, m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn uniform_weights_and_half_lambda_double_the_input() {
        let g = Graph::<f64>::new();
        let m = g.constant(
            Tensor::from_f64(vec![1, 2, 2, 2], &[1., -2., 3., 0.5, 7., 0., -1., 4.]).unwrap(),
        );
        let wc = g.constant(Tensor::ones(vec![1, 2, 1, 1]));
        let ws = g.constant(Tensor::ones(vec![1, 1, 2, 2]));
        let lambda = g.constant(Tensor::full(vec![1, 1, 1, 1], 0.5));
        let out = gab_combine(wc, ws, lambda, m).unwrap();
        let twice: Vec<f64> = m.value().data().iter().map(|v| 2.0 * v).collect();
        assert_eq!(out.value().data(), twice.as_slice());
    }

    #[test]
    fn cbam_identity_weights() {
        let g = Graph::<f64>::new();
        let m = g.constant(Tensor::from_f64(vec![1, 1, 1, 3], &[1.0, 2.0, 3.0]).unwrap());
        let wc = g.constant(Tensor::ones(vec![1, 1, 1, 1]));
        let ones = g.constant(Tensor::ones(vec![1, 1, 1, 3]));
        let out = cbam_combine(wc, |_| Ok(ones), m).unwrap();
        assert_eq!(out.value().data(), m.value().data());
    }

    #[test]
    fn parses_kind() {
        assert_eq!(
            "CBAM".parse::<AttentionKind>().unwrap(),
            AttentionKind::Cbam
        );
        assert!("se".parse::<AttentionKind>().is_err());
    }
}
