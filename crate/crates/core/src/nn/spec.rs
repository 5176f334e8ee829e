//! Architecture descriptions.

use crate::kv::{KvDoc, Section};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self, NnError> {
        match s {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(NnError::Spec(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// `feature_dim` outputs squashed by tanh.
    Hrr { feature_dim: usize },
    /// `num_classes` raw logits.
    Ce { num_classes: usize },
}

impl Head {
    pub fn width(self) -> usize {
        match self {
            Head::Hrr { feature_dim } => feature_dim,
            Head::Ce { num_classes } => num_classes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
    /// Max-pool window; 1 disables pooling.
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnSpec {
    pub convs: Vec<ConvSpec>,
    /// Hidden dense widths (ReLU), before the head.
    pub dense: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VitSpec {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_blocks: usize,
    pub mlp_ratio: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arch {
    Cnn(CnnSpec),
    Vit(VitSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub arch: Arch,
    pub head: Head,
    pub dropout: f64,
}

impl CnnSpec {
    /// conv(16, 5×5, relu, pool 2) → conv(32, 5×5, relu, pool 2) → dense(128).
    pub fn small() -> Self {
        let conv = |filters| ConvSpec {
            filters,
            kernel: 5,
            stride: 1,
            activation: Activation::Relu,
            pool: 2,
        };
        Self {
            convs: vec![conv(16), conv(32)],
            dense: vec![128],
        }
    }
}

impl VitSpec {
    /// 10×10 patches, 256 features, 4 heads, 6 blocks.
    pub fn full() -> Self {
        Self {
            patch_size: 10,
            embed_dim: 256,
            num_heads: 4,
            num_blocks: 6,
            mlp_ratio: 4,
        }
    }

    /// Reduced encoder for 32×32 inputs.
    pub fn desk() -> Self {
        Self {
            patch_size: 8,
            embed_dim: 64,
            num_heads: 4,
            num_blocks: 2,
            mlp_ratio: 2,
        }
    }
}

/// Spatial shape after each conv stage, `(channels, h, w)`.
pub fn conv_shapes(spec: &CnnSpec, mut h: usize, mut w: usize) -> Result<Vec<(usize, usize, usize)>, NnError> {
    let mut shapes = Vec::with_capacity(spec.convs.len());
    for (i, conv) in spec.convs.iter().enumerate() {
        if conv.kernel == 0 || conv.stride == 0 || conv.pool == 0 || conv.filters == 0 {
            return Err(NnError::Spec(format!("conv{i}: zero-sized parameter")));
        }
        if conv.kernel > h || conv.kernel > w {
            return Err(NnError::Spec(format!("conv{i}: kernel {} larger than {h}×{w} input", conv.kernel)));
        }
        h = (h - conv.kernel) / conv.stride + 1;
        w = (w - conv.kernel) / conv.stride + 1;
        if conv.pool > h || conv.pool > w {
            return Err(NnError::Spec(format!("conv{i}: pool {} larger than {h}×{w} map", conv.pool)));
        }
        h /= conv.pool;
        w /= conv.pool;
        shapes.push((conv.filters, h, w));
    }
    Ok(shapes)
}

impl ModelSpec {
    pub fn cnn(side: usize, head: Head) -> Self {
        Self {
            height: side,
            width: side,
            channels: 1,
            arch: Arch::Cnn(CnnSpec::small()),
            head,
            dropout: 0.1,
        }
    }

    pub fn vit(side: usize, vit: VitSpec, head: Head) -> Self {
        Self {
            height: side,
            width: side,
            channels: 1,
            arch: Arch::Vit(vit),
            head,
            dropout: 0.1,
        }
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn output_len(&self) -> usize {
        self.head.width()
    }

    pub fn kind(&self) -> &'static str {
        match self.arch {
            Arch::Cnn(_) => "cnn",
            Arch::Vit(_) => "vit",
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(NnError::Spec("empty input".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Spec(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.head.width() == 0 {
            return Err(NnError::Spec("head has zero width".into()));
        }
        match &self.arch {
            Arch::Cnn(cnn) => {
                conv_shapes(cnn, self.height, self.width)?;
                if cnn.dense.contains(&0) {
                    return Err(NnError::Spec("zero-width dense layer".into()));
                }
            }
            Arch::Vit(v) => {
                if v.patch_size == 0 || self.height % v.patch_size != 0 || self.width % v.patch_size != 0 {
                    return Err(NnError::Spec(format!(
                        "patch size {} does not divide {}×{}",
                        v.patch_size, self.height, self.width
                    )));
                }
                if v.num_heads == 0 || v.embed_dim % v.num_heads != 0 {
                    return Err(NnError::Spec(format!(
                        "{} heads do not divide embed dim {}",
                        v.num_heads, v.embed_dim
                    )));
                }
                if v.num_blocks == 0 || v.mlp_ratio == 0 {
                    return Err(NnError::Spec("vit needs at least one block and mlp_ratio ≥ 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_section(&self) -> Section {
        let mut s = Section::new("model");
        s.set("kind", self.kind());
        s.set("height", self.height);
        s.set("width", self.width);
        s.set("channels", self.channels);
        match self.head {
            Head::Hrr { feature_dim } => {
                s.set("head", "hrr");
                s.set("head_width", feature_dim);
            }
            Head::Ce { num_classes } => {
                s.set("head", "ce");
                s.set("head_width", num_classes);
            }
        }
        s.set("dropout", format!("{:?}", self.dropout));
        match &self.arch {
            Arch::Cnn(cnn) => {
                let convs: Vec<String> = cnn
                    .convs
                    .iter()
                    .map(|c| format!("{}:{}:{}:{}:{}", c.filters, c.kernel, c.stride, c.activation.name(), c.pool))
                    .collect();
                s.set("convs", convs.join(","));
                let dense: Vec<String> = cnn.dense.iter().map(|d| d.to_string()).collect();
                s.set("dense", dense.join(","));
            }
            Arch::Vit(v) => {
                s.set("patch_size", v.patch_size);
                s.set("embed_dim", v.embed_dim);
                s.set("num_heads", v.num_heads);
                s.set("num_blocks", v.num_blocks);
                s.set("mlp_ratio", v.mlp_ratio);
            }
        }
        s
    }

    pub fn from_section(s: &Section) -> Result<Self, NnError> {
        let get = |k: &str| s.get(k).ok_or_else(|| NnError::Spec(format!("model spec lacks `{k}`")));
        let num = |k: &str| -> Result<usize, NnError> {
            get(k)?.parse().map_err(|_| NnError::Spec(format!("bad `{k}`")))
        };
        let head_width = num("head_width")?;
        let head = match get("head")? {
            "hrr" => Head::Hrr { feature_dim: head_width },
            "ce" => Head::Ce { num_classes: head_width },
            other => return Err(NnError::Spec(format!("unknown head `{other}`"))),
        };
        let arch = match get("kind")? {
            "cnn" => {
                let mut convs = Vec::new();
                for item in get("convs")?.split(',').filter(|x| !x.is_empty()) {
                    let parts: Vec<&str> = item.split(':').collect();
                    if parts.len() != 5 {
                        return Err(NnError::Spec(format!("bad conv `{item}`")));
                    }
                    let p = |i: usize| parts[i].parse::<usize>().map_err(|_| NnError::Spec(format!("bad conv `{item}`")));
                    convs.push(ConvSpec {
                        filters: p(0)?,
                        kernel: p(1)?,
                        stride: p(2)?,
                        activation: Activation::parse(parts[3])?,
                        pool: p(4)?,
                    });
                }
                let dense = get("dense")?
                    .split(',')
                    .filter(|x| !x.is_empty())
                    .map(|d| d.parse().map_err(|_| NnError::Spec(format!("bad dense `{d}`"))))
                    .collect::<Result<Vec<usize>, _>>()?;
                Arch::Cnn(CnnSpec { convs, dense })
            }
            "vit" => Arch::Vit(VitSpec {
                patch_size: num("patch_size")?,
                embed_dim: num("embed_dim")?,
                num_heads: num("num_heads")?,
                num_blocks: num("num_blocks")?,
                mlp_ratio: num("mlp_ratio")?,
            }),
            other => return Err(NnError::Spec(format!("unknown model kind `{other}`"))),
        };
        let spec = Self {
            height: num("height")?,
            width: num("width")?,
            channels: num("channels")?,
            arch,
            head,
            dropout: get("dropout")?.parse().map_err(|_| NnError::Spec("bad dropout".into()))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// SHA-256 over the canonical rendering.
    pub fn digest(&self) -> String {
        KvDoc {
            sections: vec![self.to_section()],
        }
        .digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cnn_shapes() {
        let shapes = conv_shapes(&CnnSpec::small(), 32, 32).unwrap();
        assert_eq!(shapes, vec![(16, 14, 14), (32, 5, 5)]);
        let full = conv_shapes(&CnnSpec::small(), 100, 100).unwrap();
        assert_eq!(full, vec![(16, 48, 48), (32, 22, 22)]);
    }

    #[test]
    fn section_round_trip() {
        for spec in [
            ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 }),
            ModelSpec::vit(100, VitSpec::full(), Head::Ce { num_classes: 6 }),
        ] {
            let back = ModelSpec::from_section(&spec.to_section()).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.digest(), spec.digest());
        }
    }

    #[test]
    fn validation() {
        let mut spec = ModelSpec::vit(100, VitSpec::full(), Head::Hrr { feature_dim: 64 });
        assert!(spec.validate().is_ok());
        spec.height = 95;
        assert!(spec.validate().is_err());
        let mut spec = ModelSpec::cnn(32, Head::Hrr { feature_dim: 64 });
        spec.dropout = 1.0;
        assert!(spec.validate().is_err());
        let spec = ModelSpec::cnn(8, Head::Hrr { feature_dim: 64 });
        assert!(spec.validate().is_err());
    }
}
