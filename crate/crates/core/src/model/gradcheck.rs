use super::context::GraphContext;
use super::layout::VirsoModel;
use crate::autodiff::{grad_check, GradCheckReport, Tape, Tensor};
use crate::error::{Error, Result};

impl VirsoModel {
    /// Central differences on `probes` random parameters of the loss
    /// `||forward(u) - target||_F`.
    pub fn check_gradients(
        &self,
        ctx: &GraphContext,
        u_q: &[f64],
        target: &Tensor,
        probes: usize,
        step: f64,
        seed: u64,
    ) -> Result<GradCheckReport> {
        if target.shape() != [ctx.node_count(), self.config.output_channels] {
            return Err(Error::shape("gradient check", format!("target {:?}", target.shape())));
        }
        grad_check(&self.params, probes, step, seed, |store| {
            let mut m = self.clone();
            m.params = store.clone();
            let mut tape = Tape::new();
            let p = m.params.bind(&mut tape);
            let tc = m.prepare(&mut tape, &p, ctx)?;
            let out = m.forward_on_tape(&mut tape, &p, ctx, &tc, u_q)?;
            let t = tape.constant(target.clone());
            let diff = tape.sub(out, t)?;
            let sq = tape.col_sum_squares(diff)?;
            let sq = tape.sum(sq);
            let loss = tape.sqrt(sq);
            tape.backward(loss)?;
            Ok((tape.value(loss).data()[0], p.grads(&tape)))
        })
    }
}
