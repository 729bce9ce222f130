use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer computing `act(x · W + b)`; `weight` is `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Parameters of a feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<Layer>,
}

/// Per-layer partial derivatives, shape-congruent with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Intermediate values kept by [`ParamSet::forward_cached`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl ParamSet {
    /// Builds a network with layer widths `dims` (input first). Hidden layers
    /// use `hidden`, the last layer uses `output`. Weights are drawn from a
    /// fan-in scaled uniform distribution; biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least an input and an output width, got {dims:?}"
            )));
        }
        if dims.contains(&0) {
            return Err(Error::Config(format!("zero layer width in {dims:?}")));
        }
        let n_layers = dims.len() - 1;
        let layers = (0..n_layers)
            .map(|k| {
                let (fan_in, fan_out) = (dims[k], dims[k + 1]);
                let activation = if k + 1 == n_layers { output } else { hidden };
                let gain = match activation {
                    Activation::Relu => 6.0,
                    Activation::Identity => 3.0,
                };
                let bound = (gain / fan_in as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
                Layer {
                    weight,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Ok(ParamSet { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Checks the chaining and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("parameter set has no layers".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Shape(format!(
                    "layer {k}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if k + 1 < self.layers.len() && layer.out_dim() != self.layers[k + 1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    layer.out_dim(),
                    k + 1,
                    self.layers[k + 1].in_dim()
                )));
            }
            if !layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Evaluates the network. Classifier heads return logits.
    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&batch)?;
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight);
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            x = z;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_batch(&batch)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.to_owned();
        for layer in &self.layers {
            let mut z = x.dot(&layer.weight);
            z += &layer.bias;
            let a = z.mapv(|v| layer.activation.apply(v));
            inputs.push(x);
            pre.push(z);
            x = a;
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: x,
        })
    }

    /// Reverse pass. `grad_output` is dL/d(output); returns the parameter
    /// gradients and dL/d(input).
    pub fn backprop(
        &self,
        cache: &ForwardCache,
        grad_output: ArrayView2<f64>,
    ) -> Result<(GradientSet, Array2<f64>)> {
        if grad_output.dim() != cache.output.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_output.dim(),
                cache.output.dim()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.to_owned();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let mut dz = upstream;
            dz.zip_mut_with(&cache.pre[k], |g, &z| *g *= layer.activation.derivative(z));
            let weight = cache.inputs[k].t().dot(&dz);
            let bias = dz.sum_axis(Axis(0));
            upstream = dz.dot(&layer.weight.t());
            grads.push(LayerGrad { weight, bias });
        }
        grads.reverse();
        Ok((GradientSet { layers: grads }, upstream))
    }
}

impl GradientSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradientSet {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn is_congruent(&self, params: &ParamSet) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, p)| g.weight.dim() == p.weight.dim() && g.bias.dim() == p.bias.dim())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weight *= factor;
            g.bias *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    /// Flattened view, layer by layer, weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()).copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{rng_for, Stream};
    use ndarray::array;

    fn identity_layer(n: usize, activation: Activation) -> ParamSet {
        ParamSet {
            layers: vec![Layer {
                weight: Array2::eye(n),
                bias: Array1::zeros(n),
                activation,
            }],
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = identity_layer(3, Activation::Identity);
        let x = array![[1.5, -2.0, 0.25], [0.0, 3.0, -1.0]];
        assert_eq!(net.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn relu_kills_negative_input() {
        let net = identity_layer(3, Activation::Relu);
        let x = array![[-1.0, -0.5, -3.0]];
        assert_eq!(net.forward(x.view()).unwrap(), array![[0.0, 0.0, 0.0]]);
    }

    // Second, loop-based evaluation of the same arithmetic.
    fn straight_line_forward(net: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        let mut rows: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
        for layer in &net.layers {
            rows = rows
                .iter()
                .map(|r| {
                    (0..layer.out_dim())
                        .map(|o| {
                            let mut s = layer.bias[o];
                            for (i, v) in r.iter().enumerate() {
                                s += v * layer.weight[[i, o]];
                            }
                            match layer.activation {
                                Activation::Relu => {
                                    if s > 0.0 {
                                        s
                                    } else {
                                        0.0
                                    }
                                }
                                Activation::Identity => s,
                            }
                        })
                        .collect()
                })
                .collect();
        }
        let cols = rows[0].len();
        Array2::from_shape_vec((rows.len(), cols), rows.concat()).unwrap()
    }

    #[test]
    fn forward_matches_straight_line_reevaluation() {
        let mut rng = rng_for(11, Stream::ExtractorInit(0));
        for _ in 0..10 {
            let net =
                ParamSet::init(&[4, 6, 3], Activation::Relu, Activation::Identity, &mut rng)
                    .unwrap();
            let x = Array2::from_shape_fn((5, 4), |_| rng.random_range(-2.0..2.0));
            let fast = net.forward(x.view()).unwrap();
            let slow = straight_line_forward(&net, &x);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = identity_layer(3, Activation::Identity);
        let x = Array2::zeros((2, 4));
        assert!(matches!(net.forward(x.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn validate_catches_broken_chain() {
        let mut rng = rng_for(1, Stream::ExtractorInit(0));
        let mut net =
            ParamSet::init(&[2, 3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        net.validate().unwrap();
        net.layers[1].weight = Array2::zeros((4, 2));
        assert!(matches!(net.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn init_is_deterministic() {
        let a = ParamSet::init(
            &[3, 8, 2],
            Activation::Relu,
            Activation::Identity,
            &mut rng_for(5, Stream::HeadInit(1)),
        )
        .unwrap();
        let b = ParamSet::init(
            &[3, 8, 2],
            Activation::Relu,
            Activation::Identity,
            &mut rng_for(5, Stream::HeadInit(1)),
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
