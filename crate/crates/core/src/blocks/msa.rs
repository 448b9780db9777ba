use super::attention::{AttentionBlock, AttentionKind};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Scope};
use crate::tensor::{ParamBuilder, Scalar, Var};

const KERNELS: [usize; 3] = [3, 5, 7];

/// Inverted bottleneck: attention, expand to 2C, three parallel depthwise
/// branches (3/5/7) summed, channel shuffle, reduce to C.
#[derive(Clone, Debug)]
pub struct Msa {
    pub attention: AttentionBlock,
    pub expand: Conv2d,
    pub branches: Vec<Conv2d>,
    pub groups: usize,
    pub reduce: Conv2d,
}

impl Msa {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        attention: AttentionKind,
        reduction: usize,
        spatial_kernel: usize,
        groups: usize,
    ) -> Result<Self> {
        let wide = 2 * channels;
        if groups == 0 || !wide.is_multiple_of(groups) {
            return Err(Error::Divisibility {
                what: "MSA expanded channels",
                value: wide,
                divisor: groups,
            });
        }
        let attention = AttentionBlock::new(
            &mut b.scope("attention"),
            attention,
            channels,
            reduction,
            spatial_kernel,
        )?;
        let expand = Conv2d::pointwise(b, "expand", channels, wide)?;
        let branches = KERNELS
            .iter()
            .map(|&k| Conv2d::depthwise(b, &format!("dw{k}"), wide, k))
            .collect::<Result<Vec<_>>>()?;
        let reduce = Conv2d::pointwise(b, "reduce", wide, channels)?;
        Ok(Self {
            attention,
            expand,
            branches,
            groups,
            reduce,
        })
    }

    pub fn kernel_sizes() -> [usize; 3] {
        KERNELS
    }

    pub fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, x: Var<'g, F>) -> Result<Var<'g, F>> {
        let o = self.expand.forward(s, self.attention.forward(s, x)?)?;
        let mut sum = self.branches[0].forward(s, o)?;
        for branch in &self.branches[1..] {
            sum = sum.add(branch.forward(s, o)?)?;
        }
        self.reduce.forward(s, sum.channel_shuffle(self.groups)?)
    }
}
