//! Decoder building blocks and the assembled network.

mod attention;
mod cmd;
mod encoder;
mod exchange;
mod fd;
mod model;
mod msa;

pub use attention::{
    cbam_combine, gab_combine, AttentionBlock, AttentionKind, Cbam, ChannelAttention, Gab,
    SpatialAttention,
};
pub use cmd::Cmd;
pub use encoder::Encoder;
pub use exchange::{column_exchange, interleave, row_exchange, Axis};
pub use fd::Fd;
pub use model::{CmfdNet, Mode, ModelConfig};
pub use msa::Msa;
