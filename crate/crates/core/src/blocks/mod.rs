//! Network blocks: the binarized Mamba branch, the binarized window-attention
//! branch, and the two-branch block that combines them.

mod bmt;
mod mamba;
mod swin;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::tensor::Tensor;

pub use bmt::{BmtBlock, BmtProbe, BmtSpec};
pub use mamba::{BiMambaBlock, MambaSpec};
pub use swin::{roll, window_partition, window_reverse, BiSwinBlock, SwinSpec};

/// Which SSM projections receive the global scalar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedPosition {
    None,
    #[default]
    B,
    C,
    Delta,
    All,
}

impl EmbedPosition {
    pub const ALL_VARIANTS: [EmbedPosition; 5] =
        [EmbedPosition::None, EmbedPosition::B, EmbedPosition::C, EmbedPosition::Delta, EmbedPosition::All];

    pub fn feeds_b(self) -> bool {
        matches!(self, EmbedPosition::B | EmbedPosition::All)
    }

    pub fn feeds_c(self) -> bool {
        matches!(self, EmbedPosition::C | EmbedPosition::All)
    }

    pub fn feeds_delta(self) -> bool {
        matches!(self, EmbedPosition::Delta | EmbedPosition::All)
    }

    pub fn name(self) -> &'static str {
        match self {
            EmbedPosition::None => "none",
            EmbedPosition::B => "b",
            EmbedPosition::C => "c",
            EmbedPosition::Delta => "delta",
            EmbedPosition::All => "all",
        }
    }
}

impl fmt::Display for EmbedPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbedPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EmbedPosition::ALL_VARIANTS
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown embed position '{s}' (none|b|c|delta|all)")))
    }
}

/// Named intermediate activations captured during a forward pass.
pub type Probe = BTreeMap<String, Tensor>;

pub(crate) fn record(probe: &mut Option<&mut Probe>, name: impl Into<String>, t: &Tensor) {
    if let Some(p) = probe.as_deref_mut() {
        p.insert(name.into(), t.clone());
    }
}
