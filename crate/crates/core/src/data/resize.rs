/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize_bilinear(
    plane: &[f32],
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    let tap = |o: usize, n: usize, on: usize| -> (usize, usize, f32) {
        let src = ((o as f64 + 0.5) * n as f64 / on as f64 - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, (src - i0 as f64).min(1.0) as f32)
    };
    let cols: Vec<_> = (0..ow).map(|c| tap(c, w, ow)).collect();
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        let (r0, r1, fy) = tap(r, h, oh);
        for &(c0, c1, fx) in &cols {
            let top = plane[r0 * w + c0] * (1.0 - fx) + plane[r0 * w + c1] * fx;
            let bottom = plane[r1 * w + c0] * (1.0 - fx) + plane[r1 * w + c1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Nearest-neighbour resampling (pixel-centre mapping).
pub fn resize_nearest<T: Copy>(
    plane: &[T],
    (h, w): (usize, usize),
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let src = |o: usize, n: usize, on: usize| ((o * n * 2 + n) / (2 * on)).min(n - 1);
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        let sr = src(r, h, oh);
        for c in 0..ow {
            out.push(plane[sr * w + src(c, w, ow)]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_sizes() {
        let p: Vec<f32> = (0..12).map(|v| v as f32).collect();
        assert_eq!(resize_bilinear(&p, (3, 4), (3, 4)), p);
        assert_eq!(resize_nearest(&p, (3, 4), (3, 4)), p);
    }

    #[test]
    fn nearest_upsample_repeats() {
        assert_eq!(resize_nearest(&[1u8, 2], (1, 2), (1, 4)), vec![1, 1, 2, 2]);
        assert_eq!(resize_nearest(&[1u8, 2, 3, 4], (1, 4), (1, 2)), vec![2, 4]);
    }
}
