use super::{Scalar, Tensor, Var};
use crate::error::{Error, Result};

impl<'g, F: Scalar> Var<'g, F> {
    /// Layer normalization over the channel axis at each pixel of an
    /// N×C×H×W map, followed by per-channel scale and shift.
    pub fn layer_norm_channels(
        self,
        gamma: Var<'g, F>,
        beta: Var<'g, F>,
        eps: f64,
    ) -> Result<Var<'g, F>> {
        let x = self.value();
        let [n, c, h, w] = x.dims4()?;
        let (gv, bv) = (gamma.value(), beta.value());
        if gv.numel() != c || bv.numel() != c {
            return Err(Error::shape(gv.shape(), &[c], "layer_norm_channels affine"));
        }
        let hw = h * w;
        let eps = F::lit(eps);
        let inv_c = F::one() / F::lit(c as f64);
        let xd = x.data();
        let mut xhat = vec![F::zero(); xd.len()];
        let mut rstd = vec![F::zero(); n * hw];
        let mut y = vec![F::zero(); xd.len()];
        for b in 0..n {
            for p in 0..hw {
                let at = |ch: usize| (b * c + ch) * hw + p;
                let mean = (0..c).map(|ch| xd[at(ch)]).sum::<F>() * inv_c;
                let var = (0..c)
                    .map(|ch| (xd[at(ch)] - mean) * (xd[at(ch)] - mean))
                    .sum::<F>()
                    * inv_c;
                let r = F::one() / (var + eps).sqrt();
                rstd[b * hw + p] = r;
                for ch in 0..c {
                    let xh = (xd[at(ch)] - mean) * r;
                    xhat[at(ch)] = xh;
                    y[at(ch)] = xh * gv.data()[ch] + bv.data()[ch];
                }
            }
        }
        let value = Tensor::from_vec(x.shape().to_vec(), y)?;
        let shape = x.shape().to_vec();
        let (gshape, bshape) = (gv.shape().to_vec(), bv.shape().to_vec());
        Ok(self.graph().custom(
            "layer_norm_channels",
            &[self, gamma, beta],
            value,
            move |gy: &Tensor<F>| {
                let gyd = gy.data();
                let gd = gv.data();
                let mut gx = vec![F::zero(); gyd.len()];
                let mut ggamma = vec![F::zero(); c];
                let mut gbeta = vec![F::zero(); c];
                for b in 0..n {
                    for p in 0..hw {
                        let at = |ch: usize| (b * c + ch) * hw + p;
                        let r = rstd[b * hw + p];
                        let mut sum_dxh = F::zero();
                        let mut sum_dxh_xh = F::zero();
                        for ch in 0..c {
                            let g = gyd[at(ch)];
                            ggamma[ch] += g * xhat[at(ch)];
                            gbeta[ch] += g;
                            let dxh = g * gd[ch];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xhat[at(ch)];
                        }
                        for ch in 0..c {
                            let dxh = gyd[at(ch)] * gd[ch];
                            gx[at(ch)] =
                                r * (dxh - inv_c * sum_dxh - xhat[at(ch)] * inv_c * sum_dxh_xh);
                        }
                    }
                }
                vec![
                    Some(Tensor::from_vec(shape, gx).expect("x shape")),
                    Some(Tensor::from_vec(gshape, ggamma).expect("gamma shape")),
                    Some(Tensor::from_vec(bshape, gbeta).expect("beta shape")),
                ]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn normalizes_each_pixel_over_channels() {
        let g = Graph::<f64>::new();
        let x = g.constant(
            Tensor::from_f64(vec![1, 3, 1, 2], &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]).unwrap(),
        );
        let gamma = g.constant(Tensor::ones(vec![3]));
        let beta = g.constant(Tensor::zeros(vec![3]));
        let y = x.layer_norm_channels(gamma, beta, 0.0).unwrap().value();
        let s = (2.0f64 / 3.0).sqrt();
        let expect = [-1.0 / s, -1.0 / s, 0.0, 0.0, 1.0 / s, 1.0 / s];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
