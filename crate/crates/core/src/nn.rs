//! Parameterized layers shared by the scan kernels and the model blocks.

use crate::error::Result;
use crate::tensor::{ConvSpec, Graph, ParamBuilder, ParamId, ParamStore, Scalar, Tensor, Var};

/// A graph plus the parameters it reads from.
pub struct Scope<'g, F: Scalar> {
    pub graph: &'g Graph<F>,
    pub params: &'g ParamStore<F>,
}

impl<F: Scalar> Clone for Scope<'_, F> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F: Scalar> Copy for Scope<'_, F> {}

impl<'g, F: Scalar> Scope<'g, F> {
    pub fn new(graph: &'g Graph<F>, params: &'g ParamStore<F>) -> Self {
        Self { graph, params }
    }

    pub fn param(&self, id: ParamId) -> Var<'g, F> {
        self.graph.param(self.params, id)
    }

    pub fn constant(&self, value: Tensor<F>) -> Var<'g, F> {
        self.graph.constant(value)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl Conv2d {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        name: &str,
        (cin, cout): (usize, usize),
        kernel: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Result<Self> {
        let mut s = b.scope(name);
        let icg = cin / spec.groups;
        let weight = s.uniform(
            "weight",
            &[cout, icg, kernel, kernel],
            icg * kernel * kernel,
        )?;
        let bias = if bias {
            Some(s.zeros("bias", &[cout])?)
        } else {
            None
        };
        Ok(Self { weight, bias, spec })
    }

    /// 1×1 convolution with bias.
    pub fn pointwise<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        name: &str,
        cin: usize,
        cout: usize,
    ) -> Result<Self> {
        Self::new(b, name, (cin, cout), 1, ConvSpec::POINTWISE, true)
    }

    /// k×k depthwise convolution (same padding) with bias.
    pub fn depthwise<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        name: &str,
        channels: usize,
        kernel: usize,
    ) -> Result<Self> {
        Self::new(
            b,
            name,
            (channels, channels),
            kernel,
            ConvSpec::depthwise(kernel, channels),
            true,
        )
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, x: Var<'g, F>) -> Result<Var<'g, F>> {
        let bias = self.bias.map(|b| s.param(b));
        x.conv2d(s.param(self.weight), bias, self.spec)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
}

impl ConvTranspose2d {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        name: &str,
        (cin, cout): (usize, usize),
        kernel: usize,
        spec: ConvSpec,
        bias: bool,
    ) -> Result<Self> {
        let mut s = b.scope(name);
        let ocg = cout / spec.groups;
        let weight = s.uniform("weight", &[cin, ocg, kernel, kernel], ocg * kernel * kernel)?;
        let bias = if bias {
            Some(s.zeros("bias", &[cout])?)
        } else {
            None
        };
        Ok(Self { weight, bias, spec })
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, x: Var<'g, F>) -> Result<Var<'g, F>> {
        let bias = self.bias.map(|b| s.param(b));
        x.conv_transpose2d(s.param(self.weight), bias, self.spec)
    }
}

/// Channel layer norm with learnable scale (init 1) and shift (init 0).
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        name: &str,
        channels: usize,
    ) -> Result<Self> {
        let mut s = b.scope(name);
        Ok(Self {
            gamma: s.full("gamma", &[channels], 1.0)?,
            beta: s.zeros("beta", &[channels])?,
        })
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, x: Var<'g, F>) -> Result<Var<'g, F>> {
        x.layer_norm_channels(s.param(self.gamma), s.param(self.beta), Self::EPS)
    }
}
