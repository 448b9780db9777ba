use crate::error::{Error, Result};
use crate::nn::{ConvTranspose2d, Scope};
use crate::tensor::{ConvSpec, ParamBuilder, Scalar, Var};

/// Transposed 4×4 conv, stride 2, padding 1: an exact ×2 upsample.
const DEC: ConvSpec = ConvSpec {
    stride: 2,
    padding: 1,
    groups: 1,
};

/// Feature-discovery fusion: `G23 = DEC(c3)·c2 + c2`, `out = DEC(G23)·c1 + c1`.
#[derive(Clone, Debug)]
pub struct Fd {
    pub dec32: ConvTranspose2d,
    pub dec21: ConvTranspose2d,
}

impl Fd {
    pub fn new<F: Scalar>(b: &mut ParamBuilder<'_, F>, channels: [usize; 3]) -> Result<Self> {
        let [c1, c2, c3] = channels;
        Ok(Self {
            dec32: ConvTranspose2d::new(b, "dec32", (c3, c2), 4, DEC, false)?,
            dec21: ConvTranspose2d::new(b, "dec21", (c2, c1), 4, DEC, false)?,
        })
    }

    fn fuse<'g, F: Scalar>(
        dec: &ConvTranspose2d,
        s: Scope<'g, F>,
        deep: Var<'g, F>,
        shallow: Var<'g, F>,
    ) -> Result<Var<'g, F>> {
        let [_, _, dh, dw] = deep.dims4()?;
        let [_, _, h, w] = shallow.dims4()?;
        if (2 * dh, 2 * dw) != (h, w) {
            return Err(Error::shape(&[2 * dh, 2 * dw], &[h, w], "FD stage ratio"));
        }
        dec.forward(s, deep)?.mul(shallow)?.add(shallow)
    }

    pub fn forward<'g, F: Scalar>(
        &self,
        s: Scope<'g, F>,
        cmd1: Var<'g, F>,
        cmd2: Var<'g, F>,
        cmd3: Var<'g, F>,
    ) -> Result<Var<'g, F>> {
        let g23 = Self::fuse(&self.dec32, s, cmd3, cmd2)?;
        Self::fuse(&self.dec21, s, g23, cmd1)
    }
}
