//! Dense feed-forward networks with hand-written reverse-mode gradients.

mod loss;
mod params;

pub use loss::{
    anchor_ce_with_grad, clamped_ln, entropy, loss_with_prob_grad, softmax, softmax_backward,
    softmax_rows, weighted_mi_with_grad, Loss, Marginal, PROB_FLOOR,
};
pub use params::{Activation, ForwardCache, GradientSet, Layer, LayerGrad, ParamSet};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Forward through `nets` in order, softmax the final logits, evaluate `loss`
/// and backpropagate to every network. Returns the loss, one gradient set per
/// network and the softmax rows.
pub fn backward_stack(
    nets: &[&ParamSet],
    batch: ArrayView2<f64>,
    loss: &Loss,
) -> Result<(f64, Vec<GradientSet>, Array2<f64>)> {
    if nets.is_empty() {
        return Err(Error::Config("empty network stack".into()));
    }
    let mut caches = Vec::with_capacity(nets.len());
    let mut x = batch.to_owned();
    for net in nets {
        let cache = net.forward_cached(x.view())?;
        x = cache.output.clone();
        caches.push(cache);
    }
    let probs = softmax_rows(x.view());
    let (value, grad_probs) = loss_with_prob_grad(probs.view(), loss)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("{} loss is {value}", loss.name())));
    }
    let mut upstream = softmax_backward(probs.view(), grad_probs.view());
    let mut grads = Vec::with_capacity(nets.len());
    for (net, cache) in nets.iter().zip(&caches).rev() {
        let (g, dx) = net.backprop(cache, upstream.view())?;
        if !g.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient under {} loss",
                loss.name()
            )));
        }
        grads.push(g);
        upstream = dx;
    }
    grads.reverse();
    Ok((value, grads, probs))
}

/// Loss and parameter gradient of a single network whose output is logits.
pub fn backward(
    params: &ParamSet,
    batch: ArrayView2<f64>,
    loss: &Loss,
) -> Result<(f64, GradientSet)> {
    let (value, mut grads, _) = backward_stack(&[params], batch, loss)?;
    Ok((value, grads.remove(0)))
}

/// Per-layer freeze flags; a frozen layer's weight and bias are never touched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrozenMask(pub Vec<bool>);

impl FrozenMask {
    pub fn none(params: &ParamSet) -> Self {
        FrozenMask(vec![false; params.layers.len()])
    }

    pub fn all(params: &ParamSet) -> Self {
        FrozenMask(vec![true; params.layers.len()])
    }

    fn is_frozen(&self, layer: usize) -> bool {
        self.0.get(layer).copied().unwrap_or(false)
    }
}

/// One plain gradient step: `p ← p − lr · g` on unfrozen layers.
pub fn sgd_step(
    params: &ParamSet,
    grads: &GradientSet,
    lr: f64,
    frozen: &FrozenMask,
) -> Result<ParamSet> {
    let mut out = params.clone();
    apply_update(&mut out, grads, lr, frozen)?;
    Ok(out)
}

fn apply_update(
    params: &mut ParamSet,
    grads: &GradientSet,
    lr: f64,
    frozen: &FrozenMask,
) -> Result<()> {
    if !grads.is_congruent(params) {
        return Err(Error::Shape("gradient set does not match parameters".into()));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (k, (layer, g)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        if frozen.is_frozen(k) {
            continue;
        }
        layer.weight.scaled_add(-lr, &g.weight);
        layer.bias.scaled_add(-lr, &g.bias);
    }
    Ok(())
}

/// SGD with optional heavy-ball momentum, updating in place.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<GradientSet>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: None,
        }
    }

    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &GradientSet,
        frozen: &FrozenMask,
    ) -> Result<()> {
        if self.momentum == 0.0 {
            return apply_update(params, grads, self.lr, frozen);
        }
        let velocity = self
            .velocity
            .get_or_insert_with(|| GradientSet::zeros_like(params));
        velocity.scale(self.momentum);
        velocity.add_assign(grads);
        let v = velocity.clone();
        apply_update(params, &v, self.lr, frozen)
    }
}
