use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::AttentionKind;
use super::{Cmd, Encoder, Fd, Msa};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Scope};
use crate::tensor::{
    read_checkpoint, write_checkpoint, Checkpoint, Graph, ParamBuilder, ParamStore, Scalar, Tensor,
    Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub channels: [usize; 4],
    pub ssm_state: usize,
    pub shuffle_groups: usize,
    pub reduction: usize,
    pub spatial_kernel: usize,
    pub use_cmd: bool,
    pub use_msa: bool,
    pub use_fd: bool,
    pub attention: AttentionKind,
    pub deep_supervision: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            channels: [16, 32, 64, 128],
            ssm_state: 8,
            shuffle_groups: 4,
            reduction: 4,
            spatial_kernel: 7,
            use_cmd: true,
            use_msa: true,
            use_fd: true,
            attention: AttentionKind::Gab,
            deep_supervision: true,
        }
    }
}

impl ModelConfig {
    /// 64×64 input, channels [8,16,32,64], SSM state 4.
    pub fn desk() -> Self {
        Self {
            input_size: 64,
            channels: [8, 16, 32, 64],
            ssm_state: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(32) {
            return Err(Error::Divisibility {
                what: "input_size",
                value: self.input_size,
                divisor: 32,
            });
        }
        if self.channels.contains(&0) || self.ssm_state == 0 || self.reduction == 0 {
            return Err(Error::InvalidArgument(
                "channels, ssm_state and reduction must be positive".into(),
            ));
        }
        if self.spatial_kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "spatial_kernel must be odd, got {}",
                self.spatial_kernel
            )));
        }
        for &c in &self.channels[..3] {
            if self.shuffle_groups == 0 || (2 * c) % self.shuffle_groups != 0 {
                return Err(Error::Divisibility {
                    what: "2 x stage channels",
                    value: 2 * c,
                    divisor: self.shuffle_groups,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Main map followed by the auxiliary maps from CMD_1, CMD_2, CMD_3.
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct CmfdNet {
    pub config: ModelConfig,
    encoder: Encoder,
    msa: Vec<Option<Msa>>,
    seed: Conv2d,
    cmd: Vec<Cmd>,
    fd: Option<Fd>,
    head: Conv2d,
    aux: Vec<Conv2d>,
}

impl CmfdNet {
    pub fn new<F: Scalar>(config: ModelConfig, b: &mut ParamBuilder<'_, F>) -> Result<Self> {
        config.validate()?;
        let ch = config.channels;
        let encoder = Encoder::new(&mut b.scope("encoder"), ch)?;
        let msa = (0..3)
            .map(|i| {
                config
                    .use_msa
                    .then(|| {
                        Msa::new(
                            &mut b.scope(&format!("msa{}", i + 1)),
                            ch[i],
                            config.attention,
                            config.reduction,
                            config.spatial_kernel,
                            config.shuffle_groups,
                        )
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        let seed = Conv2d::pointwise(b, "cmd4_seed", ch[3], ch[3])?;
        let cmd = (0..3)
            .map(|i| {
                Cmd::new(
                    &mut b.scope(&format!("cmd{}", i + 1)),
                    ch[i],
                    ch[i + 1],
                    config.ssm_state,
                    config.attention,
                    config.reduction,
                    config.spatial_kernel,
                    config.use_cmd,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let fd = if config.use_fd {
            Some(Fd::new(&mut b.scope("fd"), [ch[0], ch[1], ch[2]])?)
        } else {
            None
        };
        let head = Conv2d::pointwise(b, "head", ch[0], 1)?;
        let aux = if config.deep_supervision {
            (0..3)
                .map(|i| Conv2d::pointwise(b, &format!("aux{}", i + 1), ch[i], 1))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            config,
            encoder,
            msa,
            seed,
            cmd,
            fd,
            head,
            aux,
        })
    }

    /// Builds the network and a freshly initialized parameter store.
    pub fn init<F: Scalar>(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore<F>)> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Self::new(config, &mut ParamBuilder::new(&mut store, &mut rng))?;
        Ok((net, store))
    }

    /// Logit maps at input resolution: one in infer mode, and with deep
    /// supervision four in train mode (main first).
    pub fn forward<'g, F: Scalar>(
        &self,
        s: Scope<'g, F>,
        image: Var<'g, F>,
        mode: Mode,
    ) -> Result<Vec<Var<'g, F>>> {
        let [_, _, h, w] = image.dims4()?;
        let size = self.config.input_size;
        if (h, w) != (size, size) {
            return Err(Error::shape(&[size, size], &[h, w], "model input size"));
        }
        let stages = self.encoder.forward(s, image)?;
        let msa = (0..3)
            .map(|i| match &self.msa[i] {
                Some(m) => m.forward(s, stages[i]),
                None => Ok(stages[i]),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut deeper = self.seed.forward(s, stages[3])?;
        let mut cmd = [deeper; 3];
        for i in (0..3).rev() {
            deeper = self.cmd[i].forward(s, msa[i], deeper)?;
            cmd[i] = deeper;
        }
        let fused = match &self.fd {
            Some(fd) => fd.forward(s, cmd[0], cmd[1], cmd[2])?,
            None => cmd[0],
        };
        let mut out = vec![self.head.forward(s, fused)?.upsample_bilinear(4)?];
        if mode == Mode::Train {
            for (i, head) in self.aux.iter().enumerate() {
                out.push(head.forward(s, cmd[i])?.upsample_bilinear(4 << i)?);
            }
        }
        Ok(out)
    }

    /// Foreground probabilities (N×1×S×S) without recording a graph.
    pub fn predict<F: Scalar>(
        &self,
        params: &ParamStore<F>,
        images: &Tensor<F>,
    ) -> Result<Tensor<F>> {
        let graph = Graph::inference();
        let s = Scope::new(&graph, params);
        let logits = self.forward(s, s.constant(images.clone()), Mode::Infer)?;
        Ok(logits[0].sigmoid().value())
    }

    /// Serializes the configuration and parameters in the checkpoint format.
    pub fn to_checkpoint<F: Scalar>(&self, params: &ParamStore<F>) -> Result<Vec<u8>> {
        let ckpt = Checkpoint {
            header: serde_json::to_string(&self.config)?,
            tensors: params.cast::<f32>().named_tensors(),
        };
        Ok(write_checkpoint(&ckpt))
    }

    pub fn from_checkpoint<F: Scalar>(bytes: &[u8]) -> Result<(Self, ParamStore<F>)> {
        let ckpt = read_checkpoint(bytes)?;
        let config: ModelConfig =
            serde_json::from_str(&ckpt.header).map_err(|e| Error::Malformed {
                format: "checkpoint header",
                reason: e.to_string(),
            })?;
        let (net, mut store) = Self::init::<f32>(config, 0)?;
        store.load_named(&ckpt.tensors)?;
        Ok((net, store.cast()))
    }
}
