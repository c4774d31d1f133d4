use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Collaboration, Variant, VirsoConfig};
use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

#[derive(Clone, Debug)]
pub struct GateParams {
    pub w1_dst: ParamId,
    pub w1_src: ParamId,
    pub w1_edge: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
}

#[derive(Clone, Debug)]
pub struct SpectralParams {
    pub kernel: ParamId,
    pub skip: Option<Dense>,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct SpatialParams {
    pub weight: ParamId,
    pub gate: GateParams,
}

/// Parameter handles of one spectral–spatial block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub spectral: Option<SpectralParams>,
    pub spatial: Option<SpatialParams>,
    pub collab: Vec<Dense>,
}

#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub embed: [Dense; 2],
    pub lift: Dense,
    pub blocks: Vec<BlockParams>,
    pub head: [Dense; 2],
}

/// An operator instance: its configuration plus the parameter store.
#[derive(Clone, Debug)]
pub struct VirsoModel {
    pub config: VirsoConfig,
    pub params: ParamStore,
    pub(crate) layout: Layout,
}

struct Init<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) -> ParamId {
        let len = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.store.insert(name, Tensor::new(shape, data).expect("shape matches data"))
    }

    fn fill(&mut self, name: String, shape: &[usize], value: f64) -> ParamId {
        self.store.insert(name, Tensor::filled(shape, value))
    }

    fn dense(&mut self, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Dense {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = self.uniform(format!("{name}.weight"), &[fan_in, fan_out], bound);
        let bias = bias.then(|| self.uniform(format!("{name}.bias"), &[1, fan_out], bound));
        Dense { weight, bias }
    }
}

impl VirsoModel {
    /// Allocates and initializes parameters for `config`.
    pub fn new(config: VirsoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self::allocate(config, seed))
    }

    /// Like [`VirsoModel::new`] but accepts `blocks == 0`, which reduces the
    /// operator to the embed/lift/head path. Only useful for testing.
    pub fn new_unchecked_blocks(config: VirsoConfig, seed: u64) -> Result<Self> {
        config.validate_widths()?;
        Ok(Self::allocate(config, seed))
    }

    fn allocate(config: VirsoConfig, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut init = Init { store: &mut store, rng: ChaCha8Rng::seed_from_u64(seed) };
        let c = &config;
        let dv = c.d_v;
        let embed = [
            init.dense("embed.0", c.input_width, c.embed_hidden, true),
            init.dense("embed.1", c.embed_hidden, c.d_latent, true),
        ];
        let lift = init.dense("lift", c.spatial_dim + c.d_latent, dv, true);
        let mut blocks = Vec::with_capacity(c.blocks);
        for t in 0..c.blocks {
            let spectral = c.variant.has_spectral().then(|| {
                let bound = 1.0 / (dv as f64).sqrt();
                let kernel = init.uniform(format!("block{t}.kernel"), &[c.modes, dv, dv], bound);
                let skip = c.use_spectral_weighted_skip.then(|| init.dense(&format!("block{t}.skip"), dv, dv, true));
                SpectralParams {
                    kernel,
                    skip,
                    norm_gain: init.fill(format!("block{t}.norm.gain"), &[1, dv], 1.0),
                    norm_bias: init.fill(format!("block{t}.norm.bias"), &[1, dv], 0.0),
                }
            });
            let spatial = c.variant.has_spatial().then(|| {
                let weight = init.dense(&format!("block{t}.spatial"), dv, dv, false).weight;
                let (a, gh, gw) = (c.alpha_anchors, c.gate_hidden, c.gate_weight_width);
                let b1 = 1.0 / ((2 * a + gw) as f64).sqrt();
                let gate = GateParams {
                    w1_dst: init.uniform(format!("block{t}.gate.w1_dst"), &[a, gh], b1),
                    w1_src: init.uniform(format!("block{t}.gate.w1_src"), &[a, gh], b1),
                    w1_edge: init.uniform(format!("block{t}.gate.w1_edge"), &[gw, gh], b1),
                    b1: init.uniform(format!("block{t}.gate.b1"), &[1, gh], b1),
                    w2: init.uniform(format!("block{t}.gate.w2"), &[1, gw], 1.0),
                    b2: init.uniform(format!("block{t}.gate.b2"), &[1, gw], 1.0),
                    w3: init.uniform(format!("block{t}.gate.w3"), &[gh, 1], 1.0 / (gh as f64).sqrt()),
                    b3: init.fill(format!("block{t}.gate.b3"), &[1, 1], 0.0),
                };
                SpatialParams { weight, gate }
            });
            let mut collab = Vec::new();
            if c.variant == Variant::Full {
                collab.push(init.dense(&format!("block{t}.collab.0"), 2 * dv, dv, true));
                if c.collaboration == Collaboration::Nonlinear {
                    collab.push(init.dense(&format!("block{t}.collab.1"), dv, dv, true));
                }
            }
            blocks.push(BlockParams { spectral, spatial, collab });
        }
        let head = [
            init.dense("head.0", dv, c.head_hidden, true),
            init.dense("head.1", c.head_hidden, c.output_channels, true),
        ];
        let layout = Layout { embed, lift, blocks, head };
        VirsoModel { config, params: store, layout }
    }

    pub fn block_params(&self, t: usize) -> &BlockParams {
        &self.layout.blocks[t]
    }

    /// Number of allocated trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Zeroes every parameter belonging to blocks.
    pub fn zero_block_params(&mut self) {
        let ids: Vec<ParamId> = self
            .params
            .iter()
            .filter(|(_, name, _)| name.starts_with("block"))
            .map(|(id, _, _)| id)
            .collect();
        for id in ids {
            self.params.get_mut(id).data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
}
