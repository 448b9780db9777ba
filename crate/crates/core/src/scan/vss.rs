use super::selective::{ss2d_diagonal, SsmParams};
use super::ScanVariant;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, LayerNorm, Scope};
use crate::tensor::{ConvSpec, ParamBuilder, Scalar, Var};

/// Residual block around the diagonal SS2D:
/// `x + proj(LN(ss2d(silu(dw3(in(LN(x)))))) · silu(gate(LN(x))))`.
#[derive(Clone, Debug)]
pub struct VssScanBlock {
    pub channels: usize,
    pub norm_in: LayerNorm,
    pub in_proj: Conv2d,
    pub gate_proj: Conv2d,
    pub dwconv: Conv2d,
    pub paths: Vec<SsmParams>,
    pub norm_out: LayerNorm,
    pub out_proj: Conv2d,
}

impl VssScanBlock {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        state: usize,
    ) -> Result<Self> {
        if channels == 0 || state == 0 {
            return Err(Error::InvalidArgument(
                "VSS block needs positive channel and state counts".into(),
            ));
        }
        let norm_in = LayerNorm::new(b, "norm_in", channels)?;
        let in_proj = Conv2d::new(
            b,
            "in_proj",
            (channels, channels),
            1,
            ConvSpec::POINTWISE,
            false,
        )?;
        let gate_proj = Conv2d::new(
            b,
            "gate_proj",
            (channels, channels),
            1,
            ConvSpec::POINTWISE,
            false,
        )?;
        let dwconv = Conv2d::depthwise(b, "dwconv", channels, 3)?;
        let paths = ScanVariant::ALL
            .iter()
            .enumerate()
            .map(|(i, _)| SsmParams::new(&mut b.scope(&format!("path{i}")), channels, state))
            .collect::<Result<Vec<_>>>()?;
        let norm_out = LayerNorm::new(b, "norm_out", channels)?;
        let out_proj = Conv2d::pointwise(b, "out_proj", channels, channels)?;
        Ok(Self {
            channels,
            norm_in,
            in_proj,
            gate_proj,
            dwconv,
            paths,
            norm_out,
            out_proj,
        })
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, x: Var<'g, F>) -> Result<Var<'g, F>> {
        let c = x.dims4()?[1];
        if c != self.channels {
            return Err(Error::shape(&[self.channels], &[c], "VSS block channels"));
        }
        let normed = self.norm_in.forward(s, x)?;
        let content = self.in_proj.forward(s, normed)?;
        let gate = self.gate_proj.forward(s, normed)?.silu();
        let content = self.dwconv.forward(s, content)?.silu();
        let scanned = ss2d_diagonal(s, content, &self.paths)?;
        let y = self.norm_out.forward(s, scanned)?.mul(gate)?;
        self.out_proj.forward(s, y)?.add(x)
    }
}
