//! Selective state-space recurrence, per channel `c` and state index `s`:
//!
//! ```text
//! Ā_t = exp(−exp(A_log[c,s]) · Δ_t)
//! h_t = Ā_t · h_{t−1} + Δ_t · B_t[s] · u_t,   h_0 = 0
//! y_t = Σ_s C_t[s] · h_t[s] + D[c] · u_t
//! ```
//!
//! evaluated sequentially. The backward pass runs the adjoint recurrence in
//! reverse using the stored state history.

use super::{ScanOrder, ScanVariant};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Scope};
use crate::parallel;
use crate::tensor::{ConvSpec, ParamBuilder, ParamId, Scalar, Tensor, Var};

/// Channel-major sequences: `u`, `delta` are [batch][chans][len]; `b`, `c`
/// are [batch][state][len]; `a_log` is [chans][state]; `d` is [chans].
struct ScanProblem<'a, F> {
    batch: usize,
    chans: usize,
    len: usize,
    state: usize,
    u: &'a [F],
    delta: &'a [F],
    b: &'a [F],
    c: &'a [F],
    a_log: &'a [F],
    d: &'a [F],
}

struct ScanGrads<F> {
    u: Vec<F>,
    delta: Vec<F>,
    b: Vec<F>,
    c: Vec<F>,
    a_log: Vec<F>,
    d: Vec<F>,
}

impl<F: Scalar> ScanProblem<'_, F> {
    fn seq(&self, bn: usize, ch: usize) -> std::ops::Range<usize> {
        let start = (bn * self.chans + ch) * self.len;
        start..start + self.len
    }

    /// Returns `y` and the state history [batch][chans][len][state].
    fn forward(&self) -> (Vec<F>, Vec<F>) {
        let (l, n) = (self.len, self.state);
        let per: Vec<(Vec<F>, Vec<F>)> = parallel::map(self.batch * self.chans, |item| {
            let (bn, ch) = (item / self.chans, item % self.chans);
            let u = &self.u[self.seq(bn, ch)];
            let dt = &self.delta[self.seq(bn, ch)];
            let bseq = &self.b[bn * n * l..(bn + 1) * n * l];
            let cseq = &self.c[bn * n * l..(bn + 1) * n * l];
            let a: Vec<F> = (0..n).map(|s| -self.a_log[ch * n + s].exp()).collect();
            let dd = self.d[ch];
            let mut h = vec![F::zero(); n];
            let mut hist = vec![F::zero(); l * n];
            let mut y = vec![F::zero(); l];
            for t in 0..l {
                let mut acc = dd * u[t];
                for s in 0..n {
                    let abar = (a[s] * dt[t]).exp();
                    h[s] = abar * h[s] + dt[t] * bseq[s * l + t] * u[t];
                    acc += cseq[s * l + t] * h[s];
                }
                hist[t * n..(t + 1) * n].copy_from_slice(&h);
                y[t] = acc;
            }
            (y, hist)
        });
        let mut y = Vec::with_capacity(self.batch * self.chans * l);
        let mut hist = Vec::with_capacity(self.batch * self.chans * l * n);
        for (yi, hi) in per {
            y.extend(yi);
            hist.extend(hi);
        }
        (y, hist)
    }

    fn backward(&self, hist: &[F], gy: &[F]) -> ScanGrads<F> {
        let (l, n) = (self.len, self.state);
        struct Item<F> {
            gu: Vec<F>,
            gdt: Vec<F>,
            gb: Vec<F>,
            gc: Vec<F>,
            ga: Vec<F>,
            gd: F,
        }
        let items: Vec<Item<F>> = parallel::map(self.batch * self.chans, |item| {
            let (bn, ch) = (item / self.chans, item % self.chans);
            let range = self.seq(bn, ch);
            let (u, dt, gy) = (
                &self.u[range.clone()],
                &self.delta[range.clone()],
                &gy[range],
            );
            let hist = &hist[item * l * n..(item + 1) * l * n];
            let bseq = &self.b[bn * n * l..(bn + 1) * n * l];
            let cseq = &self.c[bn * n * l..(bn + 1) * n * l];
            let a: Vec<F> = (0..n).map(|s| -self.a_log[ch * n + s].exp()).collect();
            let dd = self.d[ch];
            let mut out = Item {
                gu: vec![F::zero(); l],
                gdt: vec![F::zero(); l],
                gb: vec![F::zero(); n * l],
                gc: vec![F::zero(); n * l],
                ga: vec![F::zero(); n],
                gd: F::zero(),
            };
            // adjoint of h_t, carried backwards through Ā
            let mut gh = vec![F::zero(); n];
            for t in (0..l).rev() {
                let g = gy[t];
                out.gu[t] += g * dd;
                out.gd += g * u[t];
                for s in 0..n {
                    let h_t = hist[t * n + s];
                    let h_prev = if t > 0 {
                        hist[(t - 1) * n + s]
                    } else {
                        F::zero()
                    };
                    let abar = (a[s] * dt[t]).exp();
                    gh[s] += g * cseq[s * l + t];
                    out.gc[s * l + t] += g * h_t;
                    let g_abar = gh[s] * h_prev;
                    out.gdt[t] += g_abar * abar * a[s] + gh[s] * bseq[s * l + t] * u[t];
                    out.ga[s] += g_abar * abar * dt[t] * a[s];
                    out.gb[s * l + t] += gh[s] * dt[t] * u[t];
                    out.gu[t] += gh[s] * dt[t] * bseq[s * l + t];
                    gh[s] *= abar;
                }
            }
            out
        });
        let mut grads = ScanGrads {
            u: Vec::with_capacity(self.u.len()),
            delta: Vec::with_capacity(self.u.len()),
            b: vec![F::zero(); self.b.len()],
            c: vec![F::zero(); self.c.len()],
            a_log: vec![F::zero(); self.a_log.len()],
            d: vec![F::zero(); self.chans],
        };
        for (item, it) in items.into_iter().enumerate() {
            let (bn, ch) = (item / self.chans, item % self.chans);
            grads.u.extend(it.gu);
            grads.delta.extend(it.gdt);
            let off = bn * n * l;
            for (dst, v) in grads.b[off..off + n * l].iter_mut().zip(it.gb) {
                *dst += v;
            }
            for (dst, v) in grads.c[off..off + n * l].iter_mut().zip(it.gc) {
                *dst += v;
            }
            for (dst, v) in grads.a_log[ch * n..(ch + 1) * n].iter_mut().zip(it.ga) {
                *dst += v;
            }
            grads.d[ch] += it.gd;
        }
        grads
    }
}

fn transpose<F: Copy>(data: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(data.len());
    for c in 0..cols {
        for r in 0..rows {
            out.push(data[r * cols + c]);
        }
    }
    out
}

/// Selective scan over one sequence: `u`, `delta` are L×C, `a_log` is C×N,
/// `b` and `c` are L×N, `d` has C entries. Returns the L×C output.
pub fn selective_scan<F: Scalar>(
    u: &Tensor<F>,
    delta: &Tensor<F>,
    a_log: &Tensor<F>,
    b: &Tensor<F>,
    c: &Tensor<F>,
    d: &Tensor<F>,
) -> Result<Tensor<F>> {
    let [l, ch] = two_dims(u)?;
    let [an, state] = two_dims(a_log)?;
    if delta.shape() != u.shape() {
        return Err(Error::shape(
            u.shape(),
            delta.shape(),
            "selective_scan delta",
        ));
    }
    if an != ch {
        return Err(Error::shape(
            u.shape(),
            a_log.shape(),
            "selective_scan A_log",
        ));
    }
    for m in [b, c] {
        if m.shape() != [l, state] {
            return Err(Error::shape(&[l, state], m.shape(), "selective_scan B/C"));
        }
    }
    if d.numel() != ch {
        return Err(Error::shape(&[ch], d.shape(), "selective_scan D"));
    }
    let (ut, dtt) = (transpose(u.data(), l, ch), transpose(delta.data(), l, ch));
    let (bt, ct) = (transpose(b.data(), l, state), transpose(c.data(), l, state));
    let problem = ScanProblem {
        batch: 1,
        chans: ch,
        len: l,
        state,
        u: &ut,
        delta: &dtt,
        b: &bt,
        c: &ct,
        a_log: a_log.data(),
        d: d.data(),
    };
    let (y, _) = problem.forward();
    Tensor::from_vec(vec![l, ch], transpose(&y, ch, l))
}

fn two_dims<F: Scalar>(t: &Tensor<F>) -> Result<[usize; 2]> {
    match t.shape() {
        &[a, b] => Ok([a, b]),
        s => Err(Error::InvalidShape {
            shape: s.to_vec(),
            reason: "expected a matrix".into(),
        }),
    }
}

/// Gathers every H×W plane of an N×K×H×W buffer into scan order.
fn gather<F: Copy>(data: &[F], planes: usize, order: &ScanOrder) -> Vec<F> {
    let hw = order.len();
    let mut out = Vec::with_capacity(data.len());
    for p in 0..planes {
        out.extend(order.flatten(&data[p * hw..(p + 1) * hw]));
    }
    out
}

fn scatter<F: Copy>(seq: &[F], planes: usize, order: &ScanOrder) -> Vec<F> {
    let hw = order.len();
    let mut out = Vec::with_capacity(seq.len());
    for p in 0..planes {
        out.extend(order.unflatten(&seq[p * hw..(p + 1) * hw]));
    }
    out
}

/// One SS2D path on feature maps: flattens `x` (N×E×H×W), `delta`
/// (N×E×H×W), `b` and `c` (N×S×H×W) along `order`, runs the selective scan
/// and un-flattens the result.
#[allow(clippy::too_many_arguments)]
pub fn ss2d_path<'g, F: Scalar>(
    x: Var<'g, F>,
    delta: Var<'g, F>,
    b: Var<'g, F>,
    c: Var<'g, F>,
    a_log: Var<'g, F>,
    d: Var<'g, F>,
    order: &ScanOrder,
) -> Result<Var<'g, F>> {
    let (xv, dv, bv, cv, av, ddv) = (
        x.value(),
        delta.value(),
        b.value(),
        c.value(),
        a_log.value(),
        d.value(),
    );
    let [n, e, h, w] = xv.dims4()?;
    let state = bv.dims4()?[1];
    if dv.shape() != xv.shape() {
        return Err(Error::shape(xv.shape(), dv.shape(), "ss2d delta"));
    }
    if bv.shape() != [n, state, h, w] || cv.shape() != bv.shape() {
        return Err(Error::shape(bv.shape(), cv.shape(), "ss2d B/C"));
    }
    if av.shape() != [e, state] || ddv.numel() != e {
        return Err(Error::shape(av.shape(), &[e, state], "ss2d A_log/D"));
    }
    if order.dims() != (h, w) {
        return Err(Error::shape(
            &[h, w],
            &[order.dims().0, order.dims().1],
            "ss2d order",
        ));
    }
    let u = gather(xv.data(), n * e, order);
    let dt = gather(dv.data(), n * e, order);
    let bs = gather(bv.data(), n * state, order);
    let cs = gather(cv.data(), n * state, order);
    let problem = ScanProblem {
        batch: n,
        chans: e,
        len: h * w,
        state,
        u: &u,
        delta: &dt,
        b: &bs,
        c: &cs,
        a_log: av.data(),
        d: ddv.data(),
    };
    let (y, hist) = problem.forward();
    let value = Tensor::from_vec(xv.shape().to_vec(), scatter(&y, n * e, order))?;
    let order = order.clone();
    let graph = x.graph();
    Ok(graph.custom(
        "ss2d_path",
        &[x, delta, b, c, a_log, d],
        value,
        move |gy: &Tensor<F>| {
            let problem = ScanProblem {
                batch: n,
                chans: e,
                len: h * w,
                state,
                u: &u,
                delta: &dt,
                b: &bs,
                c: &cs,
                a_log: av.data(),
                d: ddv.data(),
            };
            let gys = gather(gy.data(), n * e, &order);
            let g = problem.backward(&hist, &gys);
            let map = |seq: &[F], planes: usize, shape: &[usize]| {
                Some(Tensor::from_vec(shape.to_vec(), scatter(seq, planes, &order)).expect("shape"))
            };
            vec![
                map(&g.u, n * e, xv.shape()),
                map(&g.delta, n * e, dv.shape()),
                map(&g.b, n * state, bv.shape()),
                map(&g.c, n * state, cv.shape()),
                Some(Tensor::from_vec(av.shape().to_vec(), g.a_log).expect("A_log")),
                Some(Tensor::from_vec(ddv.shape().to_vec(), g.d).expect("D")),
            ]
        },
    ))
}

/// Parameters of one scan path. Δ, B and C are produced per token by linear
/// maps of the token; Δ goes through a rank-`dt_rank` bottleneck and softplus.
#[derive(Clone, Debug)]
pub struct SsmParams {
    pub dt_down: Conv2d,
    pub dt_up: Conv2d,
    pub b_proj: Conv2d,
    pub c_proj: Conv2d,
    pub a_log: ParamId,
    pub d: ParamId,
    pub state: usize,
}

impl SsmParams {
    pub fn new<F: Scalar>(
        b: &mut ParamBuilder<'_, F>,
        channels: usize,
        state: usize,
    ) -> Result<Self> {
        use rand::Rng;
        let rank = channels.div_ceil(16);
        let dt_down = Conv2d::new(
            b,
            "dt_down",
            (channels, rank),
            1,
            ConvSpec::POINTWISE,
            false,
        )?;
        let mut dt_up = Conv2d::new(b, "dt_up", (rank, channels), 1, ConvSpec::POINTWISE, false)?;
        let b_proj = Conv2d::new(
            b,
            "b_proj",
            (channels, state),
            1,
            ConvSpec::POINTWISE,
            false,
        )?;
        let c_proj = Conv2d::new(
            b,
            "c_proj",
            (channels, state),
            1,
            ConvSpec::POINTWISE,
            false,
        )?;
        // S4D-real initialization: A = −(1..=state)
        let a_log = (0..channels * state)
            .map(|i| F::lit(((i % state) + 1) as f64).ln())
            .collect();
        let a_log = b.tensor("a_log", Tensor::from_vec(vec![channels, state], a_log)?)?;
        let d = b.full("d", &[channels], 1.0)?;
        // Δ starts log-uniform in [1e-3, 1e-1]; the bias is its softplus inverse.
        let (lo, hi) = (1e-3f64.ln(), 1e-1f64.ln());
        let dt_bias: Vec<F> = (0..channels)
            .map(|_| {
                let dt = b.rng().gen_range(lo..hi).exp();
                F::lit(dt + (-(-dt).exp_m1()).ln())
            })
            .collect();
        let dt_bias = Tensor::from_vec(vec![channels], dt_bias)?;
        dt_up.bias = Some(b.scope("dt_up").tensor("bias", dt_bias)?);
        Ok(Self {
            dt_down,
            dt_up,
            b_proj,
            c_proj,
            a_log,
            d,
            state,
        })
    }

    /// Runs this path's scan over `x` in the given order.
    pub fn forward<'g, F: Scalar>(
        &self,
        s: Scope<'g, F>,
        x: Var<'g, F>,
        order: &ScanOrder,
    ) -> Result<Var<'g, F>> {
        let low = self.dt_down.forward(s, x)?;
        let delta = self.dt_up.forward(s, low)?.softplus();
        let b = self.b_proj.forward(s, x)?;
        let c = self.c_proj.forward(s, x)?;
        ss2d_path(x, delta, b, c, s.param(self.a_log), s.param(self.d), order)
    }
}

/// Sum of the four diagonal scan paths over `x`; `paths[i]` scans along
/// `ScanVariant::ALL[i]`.
pub fn ss2d_diagonal<'g, F: Scalar>(
    s: Scope<'g, F>,
    x: Var<'g, F>,
    paths: &[SsmParams],
) -> Result<Var<'g, F>> {
    let [_, _, h, w] = x.dims4()?;
    if paths.len() != ScanVariant::ALL.len() {
        return Err(Error::InvalidArgument(format!(
            "ss2d_diagonal needs {} paths, got {}",
            ScanVariant::ALL.len(),
            paths.len()
        )));
    }
    let mut total: Option<Var<'g, F>> = None;
    for (p, &variant) in paths.iter().zip(ScanVariant::ALL.iter()) {
        let order = ScanOrder::new(h, w, variant)?;
        let y = p.forward(s, x, &order)?;
        total = Some(match total {
            None => y,
            Some(t) => t.add(y)?,
        });
    }
    Ok(total.expect("four paths"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(vec![rows, cols], v).unwrap()
    }

    /// Builds A_log so that Ā = `abar` for Δ = 1.
    fn a_log_for(abar: f64) -> f64 {
        (-abar.ln()).ln()
    }

    #[test]
    fn hand_evaluated_recurrence() {
        // N=1, Ā ≡ 0.5, B̄u = [1, 0, 2], C ≡ 1, D = 0
        let u = mat(3, 1, &[1.0, 0.0, 2.0]);
        let delta = mat(3, 1, &[1.0; 3]);
        let a_log = mat(1, 1, &[a_log_for(0.5)]);
        let ones = mat(3, 1, &[1.0; 3]);
        let d = Tensor::from_f64(vec![1], &[0.0]).unwrap();
        let y = selective_scan(&u, &delta, &a_log, &ones, &ones, &d).unwrap();
        let expect = [1.0, 0.5, 2.25];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_input_and_prefix_sums() {
        let l = 6;
        let u = mat(l, 2, &[0.0; 12]);
        let delta = mat(l, 2, &[0.3; 12]);
        let a_log = mat(2, 3, &[0.1, -0.2, 0.5, 0.0, 0.3, -1.0]);
        let bc = mat(l, 3, &[0.7; 18]);
        let d = Tensor::from_f64(vec![2], &[0.4, -0.9]).unwrap();
        let y = selective_scan(&u, &delta, &a_log, &bc, &bc, &d).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        // Ā → 1 (A_log very negative), Δ = 1 so B̄ = B = 1: cumulative sum
        let u = mat(5, 1, &[1.0, -2.0, 3.5, 0.25, 4.0]);
        let delta = mat(5, 1, &[1.0; 5]);
        let a_log = mat(1, 1, &[-800.0]);
        let ones = mat(5, 1, &[1.0; 5]);
        let d = Tensor::from_f64(vec![1], &[0.0]).unwrap();
        let y = selective_scan(&u, &delta, &a_log, &ones, &ones, &d).unwrap();
        assert_eq!(y.data(), &[1.0, -1.0, 2.5, 2.75, 6.75]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let u = mat(3, 2, &[0.0; 6]);
        let a_log = mat(3, 1, &[0.0; 3]);
        let b = mat(3, 1, &[0.0; 3]);
        let d = Tensor::from_f64(vec![2], &[0.0; 2]).unwrap();
        assert!(selective_scan(&u, &u, &a_log, &b, &b, &d).is_err());
    }
}
