use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor, Var};

/// Spatial axis of an N×C×H×W map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

fn takes_first(axis: Axis, h: usize, w: usize, idx: usize) -> bool {
    let (r, c) = ((idx / w) % h, idx % w);
    match axis {
        Axis::Row => r % 2 == 0,
        Axis::Column => c % 2 == 0,
    }
}

/// Even rows (or columns) from `a`, odd ones from `b`.
pub fn interleave<'g, F: Scalar>(a: Var<'g, F>, b: Var<'g, F>, axis: Axis) -> Result<Var<'g, F>> {
    let (av, bv) = (a.value(), b.value());
    if av.shape() != bv.shape() {
        return Err(Error::shape(av.shape(), bv.shape(), "pixel exchange"));
    }
    let [_, _, h, w] = av.dims4()?;
    let data = av
        .data()
        .iter()
        .zip(bv.data())
        .enumerate()
        .map(|(i, (&x, &y))| if takes_first(axis, h, w, i) { x } else { y })
        .collect();
    let shape = av.shape().to_vec();
    let value = Tensor::from_vec(shape.clone(), data)?;
    Ok(a.graph().custom("interleave", &[a, b], value, move |g| {
        let mut ga = g.clone();
        let mut gb = g.clone();
        let (da, db) = (ga.data_mut(), gb.data_mut());
        for i in 0..da.len() {
            if takes_first(axis, h, w, i) {
                db[i] = F::zero();
            } else {
                da[i] = F::zero();
            }
        }
        vec![Some(ga), Some(gb)]
    }))
}

/// `S` takes `x`'s even rows and `y`'s odd rows; `D` the opposite.
pub fn row_exchange<'g, F: Scalar>(
    x: Var<'g, F>,
    y: Var<'g, F>,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    Ok((interleave(x, y, Axis::Row)?, interleave(y, x, Axis::Row)?))
}

pub fn column_exchange<'g, F: Scalar>(
    x: Var<'g, F>,
    y: Var<'g, F>,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    Ok((
        interleave(x, y, Axis::Column)?,
        interleave(y, x, Axis::Column)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Graph;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn row_example() {
        let g = Graph::new();
        let x = g.constant(t(&[1, 1, 2, 2], &[1.0, 1.0, 2.0, 2.0]));
        let y = g.constant(t(&[1, 1, 2, 2], &[3.0, 3.0, 4.0, 4.0]));
        let (s, d) = row_exchange(x, y).unwrap();
        assert_eq!(s.value().data(), &[1.0, 1.0, 4.0, 4.0]);
        assert_eq!(d.value().data(), &[3.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn column_example_and_single_pixel() {
        let g = Graph::new();
        let x = g.constant(t(&[1, 1, 1, 2], &[1.0, 2.0]));
        let y = g.constant(t(&[1, 1, 1, 2], &[3.0, 4.0]));
        let (s, d) = column_exchange(x, y).unwrap();
        assert_eq!(s.value().data(), &[1.0, 4.0]);
        assert_eq!(d.value().data(), &[3.0, 2.0]);

        let x = g.constant(t(&[1, 1, 1, 1], &[5.0]));
        let y = g.constant(t(&[1, 1, 1, 1], &[6.0]));
        let (s, d) = column_exchange(x, y).unwrap();
        assert_eq!((s.value().item(), d.value().item()), (5.0, 6.0));
    }

    #[test]
    fn mismatched_shapes_fail() {
        let g = Graph::new();
        let x = g.constant(Tensor::<f64>::zeros(vec![1, 1, 2, 2]));
        let y = g.constant(Tensor::<f64>::zeros(vec![1, 1, 2, 3]));
        assert!(row_exchange(x, y).is_err());
    }
}
