use serde::{Deserialize, Serialize};

use super::config::{Collaboration, Variant, VirsoConfig};

/// Analytic multiply-add count (2 FLOPs per MAC) of one inference sample.
/// Activations, normalizations and bias adds are not counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlopCount {
    pub total: f64,
    pub embed: f64,
    pub lift: f64,
    pub spectral_per_block: f64,
    pub spatial_per_block: f64,
    pub dense_per_block: f64,
    pub head: f64,
    pub formula: String,
}

/// `n` nodes, `e` directed edges (each undirected edge counted twice, one
/// message per direction).
pub fn flop_count(c: &VirsoConfig, n: usize, e: usize) -> FlopCount {
    let (n, e) = (n as f64, e as f64);
    let (q, eh, dl, dv) = (c.input_width as f64, c.embed_hidden as f64, c.d_latent as f64, c.d_v as f64);
    let (hh, ch, m, d) = (c.head_hidden as f64, c.output_channels as f64, c.modes as f64, c.spatial_dim as f64);
    let (a, gh, gw) = (c.alpha_anchors as f64, c.gate_hidden as f64, c.gate_weight_width as f64);

    let embed = 2.0 * q * eh + 2.0 * eh * dl;
    let lift = 2.0 * n * (d + dl) * dv;
    let head = 2.0 * n * dv * hh + 2.0 * n * hh * ch;
    let spectral_per_block = if c.variant.has_spectral() { 4.0 * n * m * dv + 2.0 * m * dv * dv } else { 0.0 };
    let gate = 2.0 * (2.0 * a + gw) * gh + 2.0 * gh;
    let spatial_per_block = if c.variant.has_spatial() { 2.0 * e * (dv + gate) } else { 0.0 };
    let mut dense_per_block = 0.0;
    if c.variant.has_spectral() && c.use_spectral_weighted_skip {
        dense_per_block += 2.0 * n * dv * dv;
    }
    if c.variant.has_spatial() {
        dense_per_block += 2.0 * n * dv * dv;
    }
    if c.variant == Variant::Full {
        dense_per_block += 2.0 * n * 2.0 * dv * dv;
        if c.collaboration == Collaboration::Nonlinear {
            dense_per_block += 2.0 * n * dv * dv;
        }
    }
    let t = c.blocks as f64;
    let total = embed + lift + head + t * (spectral_per_block + spatial_per_block + dense_per_block);
    let formula = "embed 2(q*h_e + h_e*d_l) + lift 2n(d+d_l)d_v + head 2n(d_v*h_o + h_o*C) \
                   + T*[spectral 4n*m*d_v + 2m*d_v^2 + spatial 2E(d_v + 2(2a+g_w)g_h + 2g_h) \
                   + dense maps (skip 2n*d_v^2, spatial W 2n*d_v^2, collaboration 4n*d_v^2)]"
        .to_string();
    FlopCount { total, embed, lift, spectral_per_block, spatial_per_block, dense_per_block, head, formula }
}
