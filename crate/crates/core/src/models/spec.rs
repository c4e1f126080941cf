use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchName {
    Cnn,
    Vit,
    Resnet50,
    Hybrid,
}

impl ArchName {
    pub const ALL: [ArchName; 4] = [ArchName::Cnn, ArchName::Vit, ArchName::Resnet50, ArchName::Hybrid];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchName::Cnn => "cnn",
            ArchName::Vit => "vit",
            ArchName::Resnet50 => "resnet50",
            ArchName::Hybrid => "hybrid",
        }
    }

    /// Row label used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ArchName::Cnn => "CNN",
            ArchName::Vit => "ViT",
            ArchName::Resnet50 => "ResNet",
            ArchName::Hybrid => "CNN + ViT",
        }
    }
}

impl fmt::Display for ArchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(ArchName::Cnn),
            "vit" => Ok(ArchName::Vit),
            "resnet50" | "resnet" => Ok(ArchName::Resnet50),
            "hybrid" => Ok(ArchName::Hybrid),
            _ => Err(Error::Usage(format!("unknown architecture {s:?} (expected cnn, vit, resnet50 or hybrid)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Paper,
    Tiny,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "tiny" => Ok(Scale::Tiny),
            _ => Err(Error::Usage(format!("unknown preset {s:?} (expected paper or tiny)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitDims {
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub patch_size: usize,
    /// Side length the ViT (or the hybrid's ViT branch) consumes.
    pub input_side: usize,
}

impl VitDims {
    pub fn grid(&self) -> usize {
        self.input_side / self.patch_size
    }

    pub fn patch_tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Length of the flattened patch-token feature vector.
    pub fn feature_len(&self) -> usize {
        self.patch_tokens() * self.embed_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnDims {
    /// Filters of the three conv blocks.
    pub filters: [usize; 3],
    /// Width of both dense layers (the feature vector length).
    pub dense: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResNetDims {
    pub blocks: [usize; 4],
    /// Bottleneck widths; stage outputs are four times these.
    pub widths: [usize; 4],
    pub stem_width: usize,
    /// Start each residual branch at zero so every block is initially the identity.
    pub zero_init_residual: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpActivation {
    Relu,
    LeakyRelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridDims {
    pub hidden: [usize; 2],
    pub activation: MlpActivation,
}

/// Full description of one architecture instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub name: ArchName,
    pub scale: Scale,
    pub num_classes: usize,
    /// Side length of the square RGB input the model's `forward` accepts.
    pub input_side: usize,
    pub vit: VitDims,
    pub cnn: CnnDims,
    pub resnet: ResNetDims,
    pub hybrid: HybridDims,
    pub dropout_rate: f64,
    pub leaky_alpha: f64,
}

impl ArchSpec {
    pub fn preset(name: ArchName, scale: Scale, num_classes: usize) -> ArchSpec {
        let (vit, cnn, resnet, hybrid, base_side) = match scale {
            Scale::Paper => (
                VitDims { embed_dim: 768, depth: 12, heads: 12, mlp_dim: 3072, patch_size: 16, input_side: 224 },
                CnnDims { filters: [64, 128, 256], dense: 1024 },
                ResNetDims { blocks: [3, 4, 6, 3], widths: [64, 128, 256, 512], stem_width: 64, zero_init_residual: true },
                HybridDims { hidden: [1024, 256], activation: MlpActivation::Relu },
                128,
            ),
            Scale::Tiny => (
                VitDims { embed_dim: 64, depth: 2, heads: 4, mlp_dim: 128, patch_size: 16, input_side: 64 },
                CnnDims { filters: [8, 16, 32], dense: 64 },
                ResNetDims { blocks: [1, 1, 1, 1], widths: [8, 16, 32, 64], stem_width: 8, zero_init_residual: true },
                HybridDims { hidden: [64, 32], activation: MlpActivation::Relu },
                64,
            ),
        };
        let input_side = if name == ArchName::Vit { vit.input_side } else { base_side };
        let dropout_rate = match scale {
            Scale::Paper => 0.1,
            Scale::Tiny => 0.0,
        };
        ArchSpec { name, scale, num_classes, input_side, vit, cnn, resnet, hybrid, dropout_rate, leaky_alpha: 0.25 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.num_classes) {
            return Err(Error::Config(format!("num_classes must be 2, 3 or 4, got {}", self.num_classes)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0,1)", self.dropout_rate)));
        }
        if !(self.leaky_alpha > 0.0 && self.leaky_alpha < 1.0) {
            return Err(Error::Config(format!("LeakyReLU alpha {} outside (0,1)", self.leaky_alpha)));
        }
        if self.input_side < 8 {
            return Err(Error::Config(format!("input side {} is below 8 pixels", self.input_side)));
        }
        let v = &self.vit;
        if matches!(self.name, ArchName::Vit | ArchName::Hybrid) {
            if v.heads == 0 || v.embed_dim % v.heads != 0 {
                return Err(Error::Config(format!("embed_dim {} not divisible by {} heads", v.embed_dim, v.heads)));
            }
            if v.patch_size == 0 || v.input_side % v.patch_size != 0 {
                return Err(Error::Config(format!(
                    "ViT input side {} not divisible by patch size {}",
                    v.input_side, v.patch_size
                )));
            }
        }
        if self.name == ArchName::Vit && self.input_side != v.input_side {
            return Err(Error::Config(format!(
                "ViT input side {} differs from its patch grid side {}",
                self.input_side, v.input_side
            )));
        }
        Ok(())
    }

    /// Spec of the standalone classifier used as one hybrid branch.
    pub fn branch(&self, name: ArchName) -> ArchSpec {
        let mut s = ArchSpec::preset(name, self.scale, self.num_classes);
        s.vit = self.vit;
        s.cnn = self.cnn;
        s.resnet = self.resnet;
        s.hybrid = self.hybrid;
        s.dropout_rate = self.dropout_rate;
        s.leaky_alpha = self.leaky_alpha;
        s.input_side = if name == ArchName::Vit { self.vit.input_side } else { self.input_side };
        s
    }

    /// Length of the hybrid's concatenated feature vector.
    pub fn fused_feature_len(&self) -> usize {
        self.cnn.dense + self.vit.feature_len()
    }
}
