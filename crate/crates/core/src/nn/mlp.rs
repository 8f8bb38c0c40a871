use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

/// Affine map `x ↦ xW + b`; `w` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

/// ReLU after every layer except the last, which is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].fan_out(),
                    i + 1,
                    pair[1].fan_in()
                )));
            }
        }
        for l in &layers {
            if l.b.len() != l.fan_out() {
                return Err(Error::Shape("bias length differs from fan-out".into()));
            }
            if !l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()) {
                return Err(Error::Domain("non-finite parameter".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::new(dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::fan_out).unwrap_or(0)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(Layer::fan_out));
        d
    }

    /// Flat views as `(w0, b0, w1, b1, ...)`, the order the optimizer and
    /// checkpoints use.
    pub fn tensors(&self) -> Vec<&[f64]> {
        tensors(&self.layers)
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("standard layout"),
                    l.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self { layers: params.layers.iter().map(|l| Layer::zeros(l.fan_in(), l.fan_out())).collect() }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        tensors(&self.layers)
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }
}

fn tensors(layers: &[Layer]) -> Vec<&[f64]> {
    layers
        .iter()
        .flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("standard layout")])
        .collect()
}

/// Per-layer inputs and (hidden) pre-activations from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl MlpCache {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Rows of `input` are samples. Returns the output logits and the cache.
pub fn mlp_forward(params: &MlpParams, input: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
    if input.ncols() != params.input_dim() {
        return Err(Error::Shape(format!("input has {} columns, network expects {}", input.ncols(), params.input_dim())));
    }
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(last);
    let mut x = input.to_owned();
    for (i, layer) in params.layers.iter().enumerate() {
        let z = x.dot(&layer.w) + &layer.b;
        inputs.push(x);
        if i == last {
            return Ok((z, MlpCache { inputs, pre }));
        }
        x = z.mapv(|v| v.max(0.0));
        pre.push(z);
    }
    unreachable!("loop returns at the last layer")
}

/// Reverse pass. `cotangent` is `∂loss/∂output`; returns `∂loss/∂input` and
/// the parameter gradients. ReLU has derivative 0 at 0.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &MlpCache,
    cotangent: ArrayView2<f64>,
) -> Result<(Array2<f64>, ParamGrads)> {
    let b = cache.batch_size();
    if cotangent.nrows() != b || cotangent.ncols() != params.output_dim() || cache.inputs.len() != params.layers.len() {
        return Err(Error::Shape("cotangent or cache does not match the network".into()));
    }
    let mut grads = Vec::with_capacity(params.layers.len());
    let mut delta = cotangent.to_owned();
    for (i, layer) in params.layers.iter().enumerate().rev() {
        let gw = cache.inputs[i].t().dot(&delta);
        let gb = delta.sum_axis(Axis(0));
        grads.push(Layer { w: gw, b: gb });
        delta = delta.dot(&layer.w.t());
        if i > 0 {
            delta.zip_mut_with(&cache.pre[i - 1], |d, z| {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
    }
    grads.reverse();
    Ok((delta, ParamGrads { layers: grads }))
}

/// `W ∼ U(−√(2/fan_in), √(2/fan_in))`, zero biases.
pub fn init_params(rng: &mut Rng, dims: &[usize]) -> Result<MlpParams> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Shape(format!("bad layer sizes {dims:?}")));
    }
    let layers = dims
        .windows(2)
        .map(|d| {
            let bound = (2.0 / d[0] as f64).sqrt();
            let w = Array2::from_shape_simple_fn((d[0], d[1]), || rng.random_range(-bound..bound));
            Layer { w, b: Array1::zeros(d[1]) }
        })
        .collect();
    MlpParams::new(layers)
}
