use super::config::Variant;
use super::context::{GraphContext, TapeContext};
use super::layout::{Dense, VirsoModel};
use crate::autodiff::{BoundParams, Tape, Tensor, Value};
use crate::error::{Error, Result};
use crate::graph::PointCloud;

fn dense(tape: &mut Tape, p: &BoundParams, layer: &Dense, x: Value) -> Result<Value> {
    let y = tape.matmul(x, p.get(layer.weight))?;
    match layer.bias {
        Some(b) => tape.add_bias(y, p.get(b)),
        None => Ok(y),
    }
}

/// Row `i` is `[x_i, a]`: node coordinates followed by the shared embedding.
pub fn assemble_node_features(points: &PointCloud, a: &[f64]) -> Tensor {
    let (n, d) = (points.len(), points.dim());
    let mut data = Vec::with_capacity(n * (d + a.len()));
    for i in 0..n {
        data.extend_from_slice(points.point(i));
        data.extend_from_slice(a);
    }
    Tensor::new(&[n, d + a.len()], data).expect("row-major layout")
}

fn in_block<T>(t: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InBlock { block: t, source: Box::new(e) })
}

impl VirsoModel {
    /// Places the geometry on `tape` and evaluates every block's edge gates.
    pub fn prepare(&self, tape: &mut Tape, p: &BoundParams, ctx: &GraphContext) -> Result<TapeContext> {
        let c = &self.config;
        if ctx.coords.cols() != c.spatial_dim {
            return Err(Error::shape("prepare", format!("points are {}-D, model expects {}", ctx.coords.cols(), c.spatial_dim)));
        }
        let coords = tape.constant(ctx.coords.clone());
        let (mut basis, mut basis_t) = (None, None);
        if c.variant.has_spectral() {
            let (q, qt) = match (&ctx.basis, &ctx.basis_t) {
                (Some(q), Some(qt)) => (q, qt),
                _ => return Err(Error::InvalidInput("spectral branch needs an eigenbasis".into())),
            };
            if q.cols() != c.modes {
                return Err(Error::shape("spectral block", format!("basis has {} modes, model expects {}", q.cols(), c.modes)));
            }
            basis = Some(tape.constant(q.clone()));
            basis_t = Some(tape.constant(qt.clone()));
        }
        let mut gates = vec![None; c.blocks];
        if c.variant.has_spatial() && c.blocks > 0 {
            let w = ctx
                .edge_weight
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("spatial branch needs edge weights on the graph".into()))?;
            let h = ctx
                .anchors
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("spatial branch needs an anchor embedding".into()))?;
            if h.cols() != c.alpha_anchors {
                return Err(Error::shape("edge gates", format!("{} anchors, model expects {}", h.cols(), c.alpha_anchors)));
            }
            let w = tape.constant(w.clone());
            let h = tape.constant(h.clone());
            for (t, g) in gates.iter_mut().enumerate() {
                *g = Some(in_block(t, self.edge_gates(tape, p, t, ctx, h, w))?);
            }
        }
        Ok(TapeContext { coords, basis, basis_t, gates })
    }

    /// `gamma_vu = sigmoid(W3 relu(W1 [h_v, h_u, W2 w_uv]))` for every directed
    /// edge, as an E×1 column. `W1` is applied blockwise so the anchor
    /// products are formed per node rather than per edge.
    pub fn edge_gates(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        t: usize,
        ctx: &GraphContext,
        anchors: Value,
        weights: Value,
    ) -> Result<Value> {
        let g = &self.spatial(t)?.gate;
        let hd = tape.matmul(anchors, p.get(g.w1_dst))?;
        let hs = tape.matmul(anchors, p.get(g.w1_src))?;
        let hd = tape.gather_rows(hd, ctx.dst.clone())?;
        let hs = tape.gather_rows(hs, ctx.src.clone())?;
        let e = tape.matmul(weights, p.get(g.w2))?;
        let e = tape.add_bias(e, p.get(g.b2))?;
        let e = tape.matmul(e, p.get(g.w1_edge))?;
        let pre = tape.add(hd, hs)?;
        let pre = tape.add(pre, e)?;
        let pre = tape.add_bias(pre, p.get(g.b1))?;
        let hidden = tape.relu(pre);
        let logit = tape.matmul(hidden, p.get(g.w3))?;
        let logit = tape.add_bias(logit, p.get(g.b3))?;
        Ok(tape.sigmoid(logit))
    }

    fn spatial(&self, t: usize) -> Result<&super::layout::SpatialParams> {
        self.layout.blocks[t]
            .spatial
            .as_ref()
            .ok_or_else(|| Error::InvalidUsage(format!("{} variant has no spatial branch", self.config.variant)))
    }

    /// Latent embedding of the boundary input, 1×d_latent.
    pub fn embed_input(&self, tape: &mut Tape, p: &BoundParams, u_q: &[f64]) -> Result<Value> {
        if u_q.len() != self.config.input_width {
            return Err(Error::shape("embed_input", format!("input has {} values, expected {}", u_q.len(), self.config.input_width)));
        }
        let [l0, l1] = &self.layout.embed;
        let u = tape.constant(Tensor::row_vector(u_q));
        let h = dense(tape, p, l0, u)?;
        let h = tape.gelu(h);
        dense(tape, p, l1, h)
    }

    /// `LN(gelu(Q (K x1 Q^T v) + v W_skip))` followed by the norm's affine map.
    pub fn spectral_block(&self, tape: &mut Tape, p: &BoundParams, t: usize, v: Value, tc: &TapeContext) -> Result<Value> {
        let sp = self.layout.blocks[t]
            .spectral
            .as_ref()
            .ok_or_else(|| Error::InvalidUsage(format!("{} variant has no spectral branch", self.config.variant)))?;
        let (q, qt) = match (tc.basis, tc.basis_t) {
            (Some(q), Some(qt)) => (q, qt),
            _ => return Err(Error::InvalidInput("spectral branch needs an eigenbasis".into())),
        };
        let coeff = tape.matmul(qt, v)?;
        let mixed = tape.mode1_product(p.get(sp.kernel), coeff)?;
        let mut x = tape.matmul(q, mixed)?;
        if let Some(skip) = &sp.skip {
            let s = dense(tape, p, skip, v)?;
            x = tape.add(x, s)?;
        }
        let x = tape.gelu(x);
        let x = tape.layer_norm_rows(x)?;
        let x = tape.mul_cols(x, p.get(sp.norm_gain))?;
        tape.add_bias(x, p.get(sp.norm_bias))
    }

    /// Row-normalized gated neighbor sum of `v W`.
    pub fn spatial_block(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        t: usize,
        v: Value,
        gates: Value,
        ctx: &GraphContext,
    ) -> Result<Value> {
        let sp = self.spatial(t)?;
        let vw = tape.matmul(v, p.get(sp.weight))?;
        let msg = tape.gather_rows(vw, ctx.src.clone())?;
        let msg = tape.scale_rows(msg, gates)?;
        let agg = tape.scatter_add_rows(msg, ctx.dst.clone(), ctx.n)?;
        tape.l2_normalize_rows(agg)
    }

    /// Merges the branch outputs and applies the identity skip. Single-branch
    /// variants pass their one branch straight to the skip.
    pub fn collaboration(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        t: usize,
        spat: Option<Value>,
        spec: Option<Value>,
        v: Value,
    ) -> Result<Value> {
        let merged = match (self.config.variant, spat, spec) {
            (Variant::Full, Some(a), Some(b)) => {
                let layers = &self.layout.blocks[t].collab;
                let mut x = tape.concat_cols(a, b)?;
                for (i, layer) in layers.iter().enumerate() {
                    if i > 0 {
                        x = tape.gelu(x);
                    }
                    x = dense(tape, p, layer, x)?;
                }
                x
            }
            (Variant::SpectralOnly, None, Some(x)) | (Variant::SpatialOnly, Some(x), None) => x,
            _ => return Err(Error::InvalidUsage(format!("branch outputs do not match the {} variant", self.config.variant))),
        };
        if self.config.use_identity_skip {
            tape.add(merged, v)
        } else {
            Ok(merged)
        }
    }

    fn block(&self, tape: &mut Tape, p: &BoundParams, t: usize, v: Value, ctx: &GraphContext, tc: &TapeContext) -> Result<Value> {
        let spec = match self.config.variant.has_spectral() {
            true => Some(self.spectral_block(tape, p, t, v, tc)?),
            false => None,
        };
        let spat = match tc.gates[t] {
            Some(g) => Some(self.spatial_block(tape, p, t, v, g, ctx)?),
            None => None,
        };
        self.collaboration(tape, p, t, spat, spec, v)
    }

    /// Full operator on one (normalized) input vector; returns the n×C field
    /// in normalized units.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        p: &BoundParams,
        ctx: &GraphContext,
        tc: &TapeContext,
        u_q: &[f64],
    ) -> Result<Value> {
        let a = self.embed_input(tape, p, u_q)?;
        let a = tape.repeat_rows(a, ctx.n)?;
        let x = tape.concat_cols(tc.coords, a)?;
        let mut v = dense(tape, p, &self.layout.lift, x)?;
        for t in 0..self.config.blocks {
            v = in_block(t, self.block(tape, p, t, v, ctx, tc))?;
        }
        let [h0, h1] = &self.layout.head;
        let h = dense(tape, p, h0, v)?;
        let h = tape.gelu(h);
        dense(tape, p, h1, h)
    }

    /// Convenience inference path on a fresh tape.
    pub fn forward(&self, ctx: &GraphContext, u_q: &[f64]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let tc = self.prepare(&mut tape, &p, ctx)?;
        let out = self.forward_on_tape(&mut tape, &p, ctx, &tc, u_q)?;
        Ok(tape.value(out).clone())
    }

    /// Latent embedding without building a full forward pass.
    pub fn embed(&self, u_q: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let a = self.embed_input(&mut tape, &p, u_q)?;
        Ok(tape.value(a).data().to_vec())
    }
}

impl VirsoModel {
    /// Inference on several inputs sharing one geometry; the edge gates are
    /// evaluated once for the whole batch.
    pub fn forward_batch(&self, ctx: &GraphContext, inputs: &[&[f64]]) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let tc = self.prepare(&mut tape, &p, ctx)?;
        let mut out = Vec::with_capacity(inputs.len());
        for u in inputs {
            let v = self.forward_on_tape(&mut tape, &p, ctx, &tc, u)?;
            out.push(tape.value(v).clone());
        }
        Ok(out)
    }
}
