use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor, Var};

pub const DICE_SMOOTH: f64 = 1.0;

fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Mean binary cross-entropy on logits plus soft-dice loss
/// `1 − (2⟨σ(z),g⟩+1)/(⟨σ(z),1⟩+⟨g,1⟩+1)`, the dice term averaged over images.
pub fn bce_dice<'g, F: Scalar>(logits: Var<'g, F>, gt: &Tensor<F>) -> Result<Var<'g, F>> {
    let z = logits.value();
    if z.shape() != gt.shape() {
        return Err(Error::shape(z.shape(), gt.shape(), "loss map vs mask"));
    }
    let n = z.shape()[0];
    let per = z.numel() / n;
    let eps = F::lit(DICE_SMOOTH);
    let (zd, gd) = (z.data(), gt.data());
    let mut bce = F::zero();
    for (&zi, &gi) in zd.iter().zip(gd) {
        bce += zi.max(F::zero()) - zi * gi + (-zi.abs()).exp().ln_1p();
    }
    let bce = bce / F::lit(z.numel() as f64);
    // per image: intersection and total mass
    let stats: Vec<(F, F)> = (0..n)
        .map(|b| {
            let r = b * per..(b + 1) * per;
            let (mut inter, mut total) = (F::zero(), F::zero());
            for (&zi, &gi) in zd[r.clone()].iter().zip(&gd[r]) {
                let p = sigmoid(zi);
                inter += p * gi;
                total += p + gi;
            }
            (inter, total)
        })
        .collect();
    let dice: F = stats
        .iter()
        .map(|&(i, t)| F::one() - (F::lit(2.0) * i + eps) / (t + eps))
        .sum::<F>()
        / F::lit(n as f64);
    let value = Tensor::scalar(bce + dice);
    let (z, gt) = (z.clone(), gt.clone());
    Ok(logits
        .graph()
        .custom("bce_dice", &[logits], value, move |g| {
            let g = g.item();
            let inv_numel = F::one() / F::lit(z.numel() as f64);
            let inv_n = F::one() / F::lit(n as f64);
            let data = z
                .data()
                .iter()
                .zip(gt.data())
                .enumerate()
                .map(|(k, (&zi, &gi))| {
                    let p = sigmoid(zi);
                    let (i, t) = stats[k / per];
                    let s = t + eps;
                    let d_dice_dp = -(F::lit(2.0) * gi * s - (F::lit(2.0) * i + eps)) / (s * s);
                    g * ((p - gi) * inv_numel + d_dice_dp * p * (F::one() - p) * inv_n)
                })
                .collect();
            vec![Some(
                Tensor::from_vec(z.shape().to_vec(), data).expect("same shape"),
            )]
        }))
}

/// Weighted sum of [`bce_dice`] over the maps; `weights` defaults to 1 per map.
pub fn seg_loss<'g, F: Scalar>(
    maps: &[Var<'g, F>],
    gt: &Tensor<F>,
    weights: &[f64],
) -> Result<Var<'g, F>> {
    let mut total: Option<Var<'g, F>> = None;
    for (k, &m) in maps.iter().enumerate() {
        let w = weights.get(k).copied().unwrap_or(1.0);
        let term = bce_dice(m, gt)?;
        let term = if w == 1.0 { term } else { term.affine(w, 0.0) };
        total = Some(match total {
            None => term,
            Some(t) => t.add(term)?,
        });
    }
    total.ok_or_else(|| Error::InvalidArgument("loss needs at least one map".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    #[test]
    fn zero_logits_half_mask() {
        let g = Graph::<f64>::new();
        let gt = Tensor::from_f64(vec![1, 1, 2, 2], &[1.0, 1.0, 0.0, 0.0]).unwrap();
        let z = g.constant(Tensor::zeros(vec![1, 1, 2, 2]));
        let loss = bce_dice(z, &gt).unwrap().value().item();
        // ln 2 + 1 − (2·1 + 1)/(2 + 2 + 1)
        let expect = 2f64.ln() + 1.0 - 3.0 / 5.0;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_approach_zero() {
        let g = Graph::<f64>::new();
        let gt = Tensor::from_f64(vec![1, 1, 1, 4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let z =
            g.constant(Tensor::from_f64(vec![1, 1, 1, 4], &[40.0, -40.0, 40.0, -40.0]).unwrap());
        assert!(bce_dice(z, &gt).unwrap().value().item() < 1e-12);
    }
}
