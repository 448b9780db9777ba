//! Finite-difference gradient cases for every block, in 64-bit.
//!
//! Each case stores its input as a parameter named `input` so that input
//! gradients are checked along with the weights. Outputs are reduced with
//! fixed random weights to avoid symmetric cancellations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{AttentionKind, Cbam, Cmd, CmfdNet, Encoder, Fd, Gab, Mode, ModelConfig, Msa};
use crate::error::Result;
use crate::gradcheck::{check, GradCheckOptions, GradCheckReport};
use crate::nn::Scope;
use crate::scan::VssScanBlock;
use crate::tensor::{ParamBuilder, ParamStore, Tensor, Var};
use crate::train::seg_loss;

pub const TOLERANCE: f64 = 1e-3;

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
    )
    .expect("shape")
}

/// `Σ out ⊙ R` for a fixed random `R`.
fn probe<'g>(s: Scope<'g, f64>, out: Var<'g, f64>, weights: &Tensor<f64>) -> Result<Var<'g, f64>> {
    Ok(out.mul(s.constant(weights.clone()))?.sum_all())
}

struct Case {
    store: ParamStore<f64>,
    rng: ChaCha8Rng,
}

impl Case {
    fn new(seed: u64) -> Self {
        Self {
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn builder(&mut self) -> ParamBuilder<'_, f64> {
        ParamBuilder::new(&mut self.store, &mut self.rng)
    }

    fn input(&mut self, name: &str, shape: &[usize], scale: f64) -> crate::ParamId {
        let t = random(&mut self.rng, shape, scale);
        self.store.add(name, t).expect("fresh name")
    }

    /// Perturbs every parameter so zero-initialized biases and λ are off
    /// their special values.
    fn jitter(&mut self, scale: f64) {
        let ids: Vec<_> = self.store.ids().collect();
        for id in ids {
            let v = self.store.value(id).clone();
            let noise = random(&mut self.rng, v.shape(), scale);
            let t = v.zip_map(&noise, |a, b| a + b).expect("same shape");
            self.store.set_value(id, t).expect("same shape");
        }
    }
}

fn options(max_per_param: Option<usize>) -> GradCheckOptions {
    GradCheckOptions {
        max_per_param,
        ..GradCheckOptions::default()
    }
}

pub fn gab(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(1);
    let block = Gab::new(&mut c.builder(), 4, 2, 3)?;
    let x = c.input("input", &[2, 4, 5, 6], 1.0);
    c.jitter(0.1);
    let r = random(&mut c.rng, &[2, 4, 5, 6], 1.0);
    check(
        &c.store,
        |s| probe(s, block.forward(s, s.param(x))?, &r),
        opts,
    )
}

pub fn cbam(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(2);
    let block = Cbam::new(&mut c.builder(), 4, 2, 3)?;
    let x = c.input("input", &[2, 4, 5, 6], 1.0);
    c.jitter(0.1);
    let r = random(&mut c.rng, &[2, 4, 5, 6], 1.0);
    check(
        &c.store,
        |s| probe(s, block.forward(s, s.param(x))?, &r),
        opts,
    )
}

pub fn msa(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(3);
    let block = Msa::new(&mut c.builder(), 4, AttentionKind::Gab, 2, 3, 4)?;
    let x = c.input("input", &[1, 4, 7, 7], 1.0);
    c.jitter(0.1);
    let r = random(&mut c.rng, &[1, 4, 7, 7], 1.0);
    check(
        &c.store,
        |s| probe(s, block.forward(s, s.param(x))?, &r),
        opts,
    )
}

pub fn cmd(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(4);
    let block = Cmd::new(&mut c.builder(), 4, 6, 2, AttentionKind::Gab, 2, 3, true)?;
    let msa = c.input("input", &[1, 4, 6, 6], 1.0);
    let deeper = c.input("deeper", &[1, 6, 3, 3], 1.0);
    c.jitter(0.1);
    let r = random(&mut c.rng, &[1, 4, 6, 6], 1.0);
    check(
        &c.store,
        |s| probe(s, block.forward(s, s.param(msa), s.param(deeper))?, &r),
        opts,
    )
}

pub fn fd(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(5);
    let block = Fd::new(&mut c.builder(), [3, 4, 5])?;
    let c1 = c.input("input", &[1, 3, 8, 8], 1.0);
    let c2 = c.input("cmd2", &[1, 4, 4, 4], 1.0);
    let c3 = c.input("cmd3", &[1, 5, 2, 2], 1.0);
    let r = random(&mut c.rng, &[1, 3, 8, 8], 1.0);
    check(
        &c.store,
        |s| {
            probe(
                s,
                block.forward(s, s.param(c1), s.param(c2), s.param(c3))?,
                &r,
            )
        },
        opts,
    )
}

pub fn vss(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(6);
    let block = VssScanBlock::new(&mut c.builder(), 4, 3)?;
    let x = c.input("input", &[2, 4, 4, 5], 1.0);
    c.jitter(0.1);
    let r = random(&mut c.rng, &[2, 4, 4, 5], 1.0);
    check(
        &c.store,
        |s| probe(s, block.forward(s, s.param(x))?, &r),
        opts,
    )
}

pub fn encoder(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(7);
    let block = Encoder::new(&mut c.builder(), [2, 3, 4, 5])?;
    let x = c.input("input", &[1, 3, 32, 32], 0.5);
    c.jitter(0.1);
    let shapes = [[1, 2, 8, 8], [1, 3, 4, 4], [1, 4, 2, 2], [1, 5, 1, 1]];
    let rs: Vec<Tensor<f64>> = shapes.iter().map(|s| random(&mut c.rng, s, 1.0)).collect();
    check(
        &c.store,
        |s| {
            let outs = block.forward(s, s.param(x).affine(1.0, 0.5))?;
            let mut total = probe(s, outs[0], &rs[0])?;
            for (o, r) in outs.iter().zip(&rs).skip(1) {
                total = total.add(probe(s, *o, r)?)?;
            }
            Ok(total)
        },
        opts,
    )
}

pub fn seg_loss_case(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(8);
    let z1 = c.input("input", &[2, 1, 8, 8], 3.0);
    let z2 = c.input("aux", &[2, 1, 8, 8], 3.0);
    let gt = Tensor::from_vec(
        vec![2, 1, 8, 8],
        (0..128)
            .map(|_| if c.rng.gen_bool(0.4) { 1.0 } else { 0.0 })
            .collect(),
    )?;
    check(
        &c.store,
        |s| seg_loss(&[s.param(z1), s.param(z2)], &gt, &[1.0, 0.5]),
        opts,
    )
}

/// Tiny 64×64 configuration for the end-to-end check.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        input_size: 64,
        channels: [4, 4, 8, 8],
        ssm_state: 2,
        reduction: 4,
        spatial_kernel: 3,
        ..ModelConfig::default()
    }
}

pub fn full_model(opts: GradCheckOptions) -> Result<GradCheckReport> {
    let mut c = Case::new(10);
    let net = CmfdNet::new(tiny_config(), &mut c.builder())?;
    c.jitter(0.05);
    let image = Tensor::from_vec(
        vec![1, 3, 64, 64],
        (0..3 * 4096).map(|_| c.rng.gen_range(0.0..1.0)).collect(),
    )?;
    let gt = Tensor::from_vec(
        vec![1, 1, 64, 64],
        (0..4096)
            .map(|i| {
                let (y, x) = ((i / 64) as f64 - 30.0, (i % 64) as f64 - 26.0);
                if x * x + y * y < 300.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect(),
    )?;
    check(
        &c.store,
        |s| {
            let maps = net.forward(s, s.constant(image.clone()), Mode::Train)?;
            seg_loss(&maps, &gt, &[])
        },
        opts,
    )
}

pub type GradCase = fn(GradCheckOptions) -> Result<GradCheckReport>;

/// Every case with its name and options.
pub fn all() -> Vec<(&'static str, GradCase, GradCheckOptions)> {
    vec![
        ("gab", gab, options(None)),
        ("cbam", cbam, options(None)),
        ("msa", msa, options(None)),
        ("cmd", cmd, options(Some(12))),
        ("fd", fd, options(None)),
        ("vss_scan_block", vss, options(None)),
        ("encoder", encoder, options(Some(24))),
        ("seg_loss", seg_loss_case, options(None)),
        ("full_model", full_model, options(Some(3))),
    ]
}
