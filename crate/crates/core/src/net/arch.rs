//! Architecture descriptors.

use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Same-padded dense convolution, odd kernel, stride 1.
    Conv3d,
    /// 2x2x2 convolution with stride 2.
    Down2,
    /// 2x2x2 transposed convolution with stride 2.
    Up2,
    /// PReLU activation.
    Activation,
    Sigmoid,
    /// Adds the output of an earlier layer.
    SkipAdd,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::Conv3d => 0,
            LayerKind::Down2 => 1,
            LayerKind::Up2 => 2,
            LayerKind::Activation => 3,
            LayerKind::Sigmoid => 4,
            LayerKind::SkipAdd => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerKind::Conv3d,
            1 => LayerKind::Down2,
            2 => LayerKind::Up2,
            3 => LayerKind::Activation,
            4 => LayerKind::Sigmoid,
            5 => LayerKind::SkipAdd,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv3d => "conv3d",
            LayerKind::Down2 => "down2",
            LayerKind::Up2 => "up2",
            LayerKind::Activation => "prelu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::SkipAdd => "skip_add",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// Source layer index for [`LayerKind::SkipAdd`].
    pub skip_from: Option<usize>,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            kind: LayerKind::Conv3d,
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            skip_from: None,
        }
    }

    pub fn down2(in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Down2,
            in_channels,
            out_channels,
            kernel: 2,
            stride: 2,
            skip_from: None,
        }
    }

    pub fn up2(in_channels: usize, out_channels: usize) -> Self {
        Self {
            kind: LayerKind::Up2,
            kernel: 2,
            stride: 2,
            ..Self::down2(in_channels, out_channels)
        }
    }

    pub fn prelu(channels: usize) -> Self {
        Self {
            kind: LayerKind::Activation,
            in_channels: channels,
            out_channels: channels,
            kernel: 1,
            stride: 1,
            skip_from: None,
        }
    }

    pub fn sigmoid(channels: usize) -> Self {
        Self {
            kind: LayerKind::Sigmoid,
            ..Self::prelu(channels)
        }
    }

    pub fn skip_add(channels: usize, from: usize) -> Self {
        Self {
            kind: LayerKind::SkipAdd,
            skip_from: Some(from),
            ..Self::prelu(channels)
        }
    }

    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv3d => self.out_channels * self.in_channels * self.kernel.pow(3),
            LayerKind::Down2 | LayerKind::Up2 => self.out_channels * self.in_channels * 8,
            LayerKind::Activation => self.out_channels,
            LayerKind::Sigmoid | LayerKind::SkipAdd => 0,
        }
    }

    pub fn bias_count(&self) -> usize {
        match self.kind {
            LayerKind::Conv3d | LayerKind::Down2 | LayerKind::Up2 => self.out_channels,
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Number of inputs feeding each output voxel of this layer.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv3d => self.in_channels * self.kernel.pow(3),
            LayerKind::Down2 => self.in_channels * 8,
            LayerKind::Up2 => self.in_channels,
            _ => 1,
        }
    }
}

/// Knobs for the encoder-decoder family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Number of stride-2 down/up stages.
    pub depth: usize,
    pub base_channels: usize,
    pub max_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            base_channels: 8,
            max_channels: 16,
        }
    }
}

/// An ordered layer list. Layer `i` consumes the output of layer `i - 1`
/// (or the network input for `i = 0`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub layers: Vec<LayerSpec>,
}

impl Arch {
    /// Encoder-decoder with additive skips:
    ///
    /// ```text
    /// conv3 1->c0, prelu                      (full resolution)
    /// [down2 c(l-1)->c(l), prelu] for l=1..depth
    /// conv3 cD->cD, prelu                     (bottleneck, when depth > 0)
    /// [up2 c(l)->c(l-1), prelu, +skip] for l=depth..1
    /// conv1 c0->1, sigmoid
    /// ```
    pub fn encoder_decoder(cfg: &NetConfig) -> Result<Self, NetError> {
        if cfg.base_channels == 0 || cfg.max_channels < cfg.base_channels {
            return Err(NetError::InvalidArch(
                "channels must satisfy 0 < base_channels <= max_channels".into(),
            ));
        }
        let ch = |level: usize| -> usize {
            let c = cfg.base_channels.saturating_mul(1usize << level.min(16));
            c.min(cfg.max_channels)
        };
        // Level 0 output before downsampling is reused as the last skip.
        let mut layers = vec![LayerSpec::conv(1, ch(0), 3), LayerSpec::prelu(ch(0))];
        let mut skips = vec![layers.len() - 1];
        for level in 1..=cfg.depth {
            layers.push(LayerSpec::down2(ch(level - 1), ch(level)));
            layers.push(LayerSpec::prelu(ch(level)));
            skips.push(layers.len() - 1);
        }
        if cfg.depth > 0 {
            let c = ch(cfg.depth);
            layers.push(LayerSpec::conv(c, c, 3));
            layers.push(LayerSpec::prelu(c));
        }
        for level in (1..=cfg.depth).rev() {
            layers.push(LayerSpec::up2(ch(level), ch(level - 1)));
            layers.push(LayerSpec::prelu(ch(level - 1)));
            layers.push(LayerSpec::skip_add(ch(level - 1), skips[level - 1]));
        }
        layers.push(LayerSpec::conv(ch(0), 1, 1));
        layers.push(LayerSpec::sigmoid(1));
        let arch = Self { layers };
        arch.validate()?;
        Ok(arch)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Number of stride-2 stages; inputs must be divisible by `2^depth`.
    pub fn depth(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Down2)
            .count()
    }

    /// Checks channel and resolution compatibility of every layer.
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |i: usize, msg: String| Err(NetError::InvalidArch(format!("layer {i}: {msg}")));
        if self.layers.is_empty() {
            return Err(NetError::InvalidArch("no layers".into()));
        }
        // (channels, level) at the output of every layer.
        let mut outs: Vec<(usize, usize)> = Vec::with_capacity(self.layers.len());
        let (mut ch, mut level) = (1usize, 0usize);
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels != ch {
                return bad(i, format!("expects {} channels, gets {ch}", l.in_channels));
            }
            if l.out_channels == 0 {
                return bad(i, "zero output channels".into());
            }
            match l.kind {
                LayerKind::Conv3d => {
                    if l.kernel % 2 == 0 || l.stride != 1 {
                        return bad(i, "conv3d needs an odd kernel and stride 1".into());
                    }
                }
                LayerKind::Down2 | LayerKind::Up2 => {
                    if l.kernel != 2 || l.stride != 2 {
                        return bad(i, "resampling layers use kernel 2, stride 2".into());
                    }
                    if l.kind == LayerKind::Down2 {
                        level += 1;
                    } else if level == 0 {
                        return bad(i, "up2 above full resolution".into());
                    } else {
                        level -= 1;
                    }
                }
                LayerKind::Activation | LayerKind::Sigmoid | LayerKind::SkipAdd => {
                    if l.out_channels != l.in_channels {
                        return bad(i, "elementwise layer changes channel count".into());
                    }
                }
            }
            match (l.kind, l.skip_from) {
                (LayerKind::SkipAdd, Some(from)) => {
                    if from >= i {
                        return bad(i, format!("skip source {from} is not an earlier layer"));
                    }
                    if outs[from] != (l.out_channels, level) {
                        return bad(i, format!("skip source {from} has a different shape"));
                    }
                }
                (LayerKind::SkipAdd, None) => return bad(i, "skip_add without source".into()),
                (_, Some(_)) => return bad(i, "only skip_add takes a source".into()),
                _ => {}
            }
            ch = l.out_channels;
            outs.push((ch, level));
        }
        if ch != 1 || level != 0 {
            return Err(NetError::InvalidArch(
                "final layer must produce 1 channel at input resolution".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout() {
        let arch = Arch::encoder_decoder(&NetConfig::default()).unwrap();
        let kinds: Vec<&str> = arch.layers.iter().map(|l| l.kind.name()).collect();
        assert_eq!(
            kinds,
            [
                "conv3d", "prelu", "down2", "prelu", "down2", "prelu", "conv3d", "prelu", "up2",
                "prelu", "skip_add", "up2", "prelu", "skip_add", "conv3d", "sigmoid"
            ]
        );
        assert_eq!(arch.depth(), 2);
        assert_eq!(arch.layers[10].skip_from, Some(3));
        assert_eq!(arch.layers[13].skip_from, Some(1));
        // 1->8 down to 16, back up 16->8->1
        assert_eq!(arch.layers[0].out_channels, 8);
        assert_eq!(arch.layers[2].out_channels, 16);
        assert_eq!(arch.layers[11].out_channels, 8);
    }

    #[test]
    fn depth_zero_has_no_resampling() {
        let arch = Arch::encoder_decoder(&NetConfig {
            depth: 0,
            ..NetConfig::default()
        })
        .unwrap();
        assert_eq!(arch.depth(), 0);
        assert_eq!(arch.layers.len(), 4);
    }

    #[test]
    fn rejects_bad_wiring() {
        let arch = Arch {
            layers: vec![LayerSpec::conv(1, 4, 3)],
        };
        assert!(arch.validate().is_err());
        let arch = Arch {
            layers: vec![LayerSpec::conv(1, 2, 2), LayerSpec::conv(2, 1, 1)],
        };
        assert!(arch.validate().is_err());
        let arch = Arch {
            layers: vec![
                LayerSpec::conv(1, 2, 3),
                LayerSpec::down2(2, 2),
                LayerSpec::skip_add(2, 0),
                LayerSpec::up2(2, 1),
            ],
        };
        assert!(arch.validate().is_err());
    }
}
