use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    SpectralOnly,
    SpatialOnly,
}

impl Variant {
    pub fn has_spectral(self) -> bool {
        matches!(self, Variant::Full | Variant::SpectralOnly)
    }

    pub fn has_spatial(self) -> bool {
        matches!(self, Variant::Full | Variant::SpatialOnly)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::SpectralOnly => "spectral_only",
            Variant::SpatialOnly => "spatial_only",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collaboration {
    /// `2 d_v -> d_v`
    Linear,
    /// `2 d_v -> d_v -> d_v` with GELU in between
    Nonlinear,
}

/// Architecture of one operator instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirsoConfig {
    /// Number of spectral–spatial blocks `T`.
    pub blocks: usize,
    /// Hidden function width `d_v`.
    pub d_v: usize,
    /// Retained Laplacian eigenmodes `m`.
    pub modes: usize,
    /// Width of the input embedding `d_latent`.
    pub d_latent: usize,
    #[serde(default = "defaults::embed_hidden")]
    pub embed_hidden: usize,
    #[serde(default = "defaults::head_hidden")]
    pub head_hidden: usize,
    #[serde(default = "defaults::gate_hidden")]
    pub gate_hidden: usize,
    #[serde(default = "defaults::gate_weight_width")]
    pub gate_weight_width: usize,
    pub alpha_anchors: usize,
    pub variant: Variant,
    #[serde(default = "defaults::yes")]
    pub use_identity_skip: bool,
    #[serde(default = "defaults::yes")]
    pub use_spectral_weighted_skip: bool,
    #[serde(default = "defaults::linear")]
    pub collaboration: Collaboration,
    #[serde(default)]
    pub weighted_laplacian: bool,
    pub output_channels: usize,
    pub input_width: usize,
    pub spatial_dim: usize,
}

mod defaults {
    use super::Collaboration;
    pub fn embed_hidden() -> usize {
        64
    }
    pub fn head_hidden() -> usize {
        128
    }
    pub fn gate_hidden() -> usize {
        16
    }
    pub fn gate_weight_width() -> usize {
        8
    }
    pub fn yes() -> bool {
        true
    }
    pub fn linear() -> Collaboration {
        Collaboration::Linear
    }
}

impl VirsoConfig {
    /// Heat-exchanger scale preset: 64 modes, width 48, linear collaboration,
    /// 102 inputs, four output channels on a 2-D slice of 3977 nodes.
    pub fn heat_exchanger(blocks: usize) -> Self {
        VirsoConfig {
            blocks,
            d_v: 48,
            modes: 64,
            d_latent: 64,
            embed_hidden: defaults::embed_hidden(),
            head_hidden: defaults::head_hidden(),
            gate_hidden: defaults::gate_hidden(),
            gate_weight_width: defaults::gate_weight_width(),
            alpha_anchors: crate::graph::default_anchor_count(3977),
            variant: Variant::Full,
            use_identity_skip: true,
            use_spectral_weighted_skip: true,
            collaboration: Collaboration::Linear,
            weighted_laplacian: false,
            output_channels: 4,
            input_width: 102,
            spatial_dim: 2,
        }
    }

    /// Desk-scale preset used with the synthetic dataset.
    pub fn toy(input_width: usize, output_channels: usize, n: usize) -> Self {
        VirsoConfig {
            blocks: 4,
            d_v: 16,
            modes: 16,
            d_latent: 16,
            embed_hidden: defaults::embed_hidden(),
            head_hidden: defaults::head_hidden(),
            gate_hidden: defaults::gate_hidden(),
            gate_weight_width: defaults::gate_weight_width(),
            alpha_anchors: crate::graph::default_anchor_count(n),
            variant: Variant::Full,
            use_identity_skip: true,
            use_spectral_weighted_skip: true,
            collaboration: Collaboration::Linear,
            weighted_laplacian: false,
            output_channels,
            input_width,
            spatial_dim: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks < 1 {
            return Err(Error::InvalidParameter("at least one block is required".into()));
        }
        self.validate_widths()
    }

    pub(crate) fn validate_widths(&self) -> Result<()> {
        let named = [
            ("d_v", self.d_v),
            ("d_latent", self.d_latent),
            ("embed_hidden", self.embed_hidden),
            ("head_hidden", self.head_hidden),
            ("output_channels", self.output_channels),
            ("input_width", self.input_width),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be >= 1")));
        }
        if self.spatial_dim != 2 && self.spatial_dim != 3 {
            return Err(Error::InvalidParameter(format!("spatial_dim must be 2 or 3, got {}", self.spatial_dim)));
        }
        if self.variant.has_spectral() && self.modes == 0 {
            return Err(Error::InvalidParameter("spectral variants need modes >= 1".into()));
        }
        if self.variant.has_spatial() && (self.alpha_anchors == 0 || self.gate_hidden == 0 || self.gate_weight_width == 0)
        {
            return Err(Error::InvalidParameter("spatial variants need anchors and gate widths >= 1".into()));
        }
        Ok(())
    }

    /// Closed-form number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let (q, eh, dl, dv, hh, c) =
            (self.input_width, self.embed_hidden, self.d_latent, self.d_v, self.head_hidden, self.output_channels);
        let embed = q * eh + eh + eh * dl + dl;
        let lift = (self.spatial_dim + dl) * dv + dv;
        let head = dv * hh + hh + hh * c + c;
        let mut block = 0;
        if self.variant.has_spectral() {
            block += self.modes * dv * dv + 2 * dv;
            if self.use_spectral_weighted_skip {
                block += dv * dv + dv;
            }
        }
        if self.variant.has_spatial() {
            let (a, gh, gw) = (self.alpha_anchors, self.gate_hidden, self.gate_weight_width);
            block += dv * dv + (2 * a + gw) * gh + gh + 2 * gw + gh + 1;
        }
        if self.variant == Variant::Full {
            block += 2 * dv * dv + dv;
            if self.collaboration == Collaboration::Nonlinear {
                block += dv * dv + dv;
            }
        }
        embed + lift + self.blocks * block + head
    }
}
