use super::attention::{AttentionBlock, AttentionKind};
use super::exchange::{column_exchange, row_exchange};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Scope};
use crate::scan::VssScanBlock;
use crate::tensor::{ParamBuilder, Scalar, Var};

#[derive(Clone, Debug)]
struct CrossScan {
    vss_r1: VssScanBlock,
    vss_r2: VssScanBlock,
    vss_c1: VssScanBlock,
    vss_c2: VssScanBlock,
    fuse_row: Conv2d,
    fuse_col: Conv2d,
    att_row: AttentionBlock,
    att_col: AttentionBlock,
    out_in: Conv2d,
    out_dw: Conv2d,
    out_proj: Conv2d,
}

/// Cross-scanning decoder stage. With `full == None` the stage reduces to
/// `align(up(deeper)) + msa` (the CMD-removed ablation).
#[derive(Clone, Debug)]
pub struct Cmd {
    pub channels: usize,
    pub align: Conv2d,
    full: Option<CrossScan>,
}

impl Cmd {
    #[allow(clippy::too_many_arguments)]
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        deeper_channels: usize,
        state: usize,
        attention: AttentionKind,
        reduction: usize,
        spatial_kernel: usize,
        cross_scan: bool,
    ) -> Result<Self> {
        let align = Conv2d::pointwise(b, "align", deeper_channels, channels)?;
        let full = if cross_scan {
            let c = channels;
            let mut vss = |name: &str| VssScanBlock::new(&mut b.scope(name), c, state);
            let (vss_r1, vss_r2, vss_c1, vss_c2) = (
                vss("vss_r1")?,
                vss("vss_r2")?,
                vss("vss_c1")?,
                vss("vss_c2")?,
            );
            Some(CrossScan {
                vss_r1,
                vss_r2,
                vss_c1,
                vss_c2,
                fuse_row: Conv2d::pointwise(b, "fuse_row", c, c)?,
                fuse_col: Conv2d::pointwise(b, "fuse_col", c, c)?,
                att_row: AttentionBlock::new(
                    &mut b.scope("att_row"),
                    attention,
                    c,
                    reduction,
                    spatial_kernel,
                )?,
                att_col: AttentionBlock::new(
                    &mut b.scope("att_col"),
                    attention,
                    c,
                    reduction,
                    spatial_kernel,
                )?,
                out_in: Conv2d::pointwise(b, "out_in", c, c)?,
                out_dw: Conv2d::depthwise(b, "out_dw", c, 3)?,
                out_proj: Conv2d::pointwise(b, "out_proj", c, c)?,
            })
        } else {
            None
        };
        Ok(Self {
            channels,
            align,
            full,
        })
    }

    pub fn is_cross_scan(&self) -> bool {
        self.full.is_some()
    }

    pub fn forward<'g, F: Scalar>(
        &self,
        s: Scope<'g, F>,
        msa: Var<'g, F>,
        deeper: Var<'g, F>,
    ) -> Result<Var<'g, F>> {
        let [_, c, h, w] = msa.dims4()?;
        let [_, _, dh, dw] = deeper.dims4()?;
        if (2 * dh, 2 * dw) != (h, w) {
            return Err(Error::shape(
                &[h, w],
                &[dh, dw],
                "CMD deeper map must be half size",
            ));
        }
        if c != self.channels {
            return Err(Error::shape(&[self.channels], &[c], "CMD channels"));
        }
        let up = self.align.forward(s, deeper.upsample_bilinear(2)?)?;
        let Some(p) = &self.full else {
            return up.add(msa);
        };
        let (sr, dr) = row_exchange(msa, up)?;
        let (sc, dc) = column_exchange(msa, up)?;
        let r = p.vss_r1.forward(s, sr)?.add(p.vss_r2.forward(s, dr)?)?;
        let col = p.vss_c1.forward(s, sc)?.add(p.vss_c2.forward(s, dc)?)?;
        let b1 = p.att_row.forward(s, p.fuse_row.forward(s, r)?)?;
        let b2 = p.att_col.forward(s, p.fuse_col.forward(s, col)?)?;
        let fused = p.out_in.forward(s, b1.add(b2)?)?;
        p.out_proj.forward(s, p.out_dw.forward(s, fused)?)
    }
}
