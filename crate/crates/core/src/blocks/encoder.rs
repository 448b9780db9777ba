use crate::error::{Error, Result};
use crate::nn::{Conv2d, Scope};
use crate::tensor::{ConvSpec, ParamBuilder, Scalar, Var};

/// `x + pw(silu(dw3(x)))`
#[derive(Clone, Debug)]
struct ResidualBlock {
    dw: Conv2d,
    pw: Conv2d,
}

impl ResidualBlock {
    fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, channels: usize) -> Result<Self> {
        Ok(Self {
            dw: Conv2d::depthwise(b, "dw", channels, 3)?,
            pw: Conv2d::pointwise(b, "pw", channels, channels)?,
        })
    }

    fn forward<'g, F: Scalar>(&self, s: Scope<'g, F>, x: Var<'g, F>) -> Result<Var<'g, F>> {
        self.pw.forward(s, self.dw.forward(s, x)?.silu())?.add(x)
    }
}

#[derive(Clone, Debug)]
struct Stage {
    down: Conv2d,
    blocks: Vec<ResidualBlock>,
}

/// Small convolutional pyramid standing in for a pretrained backbone:
/// stride-4 patch embedding, then three stride-2 stages.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub channels: [usize; 4],
    stem: Conv2d,
    stages: Vec<Stage>,
}

const BLOCKS_PER_STAGE: usize = 2;

impl Encoder {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, channels: [usize; 4]) -> Result<Self> {
        let stem = Conv2d::new(
            b,
            "stem",
            (3, channels[0]),
            4,
            ConvSpec::strided(4, 0),
            true,
        )?;
        let mut stages = Vec::new();
        for i in 1..4 {
            let mut sb = b.scope(&format!("stage{i}"));
            let down = Conv2d::new(
                &mut sb,
                "down",
                (channels[i - 1], channels[i]),
                3,
                ConvSpec::strided(2, 1),
                true,
            )?;
            let blocks = (0..BLOCKS_PER_STAGE)
                .map(|j| ResidualBlock::new(&mut sb.scope(&format!("block{j}")), channels[i]))
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage { down, blocks });
        }
        Ok(Self {
            channels,
            stem,
            stages,
        })
    }

    /// Image in [0,1] (N×3×S×S) to feature maps at strides 4, 8, 16, 32.
    pub fn forward<'g, F: Scalar>(
        &self,
        s: Scope<'g, F>,
        image: Var<'g, F>,
    ) -> Result<Vec<Var<'g, F>>> {
        let [_, c, h, w] = image.dims4()?;
        if c != 3 {
            return Err(Error::shape(&[3], &[c], "encoder expects RGB input"));
        }
        for side in [h, w] {
            if side % 32 != 0 {
                return Err(Error::Divisibility {
                    what: "input size",
                    value: side,
                    divisor: 32,
                });
            }
        }
        let mut x = self.stem.forward(s, image.affine(2.0, -1.0))?;
        let mut out = vec![x];
        for stage in &self.stages {
            x = stage.down.forward(s, x)?;
            for block in &stage.blocks {
                x = block.forward(s, x)?;
            }
            out.push(x);
        }
        Ok(out)
    }
}
