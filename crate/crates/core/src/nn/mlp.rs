use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes from input to output. Hidden layers use ReLU, the output
/// layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layer_sizes: Vec<usize>,
}

impl NetSpec {
    pub fn new(layer_sizes: impl Into<Vec<usize>>) -> Result<Self> {
        let spec = Self { layer_sizes: layer_sizes.into() };
        spec.validate()?;
        Ok(spec)
    }

    /// `input → hidden… → output`.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(sizes)
    }

    fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Shape(format!(
                "a network needs at least 2 layer sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Shape(format!("zero-width layer in {:?}", self.layer_sizes)));
        }
        Ok(())
    }
}

/// Affine layer `y = W·x + b` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: NetSpec,
    layers: Vec<Dense>,
}

/// Per-parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.w.ncols(), l.w.nrows())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.w *= c;
            l.b *= c;
        }
    }

    /// Flattened views in the same order as [`Mlp::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("standard layout")])
            .collect()
    }
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer, `(batch, in)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `(batch, out)`.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Network output, `(batch, out)`.
    pub fn output(&self) -> &Array2<f64> {
        self.pre.last().expect("non-empty network")
    }
}

impl Mlp {
    /// Uniform(−1/√fan_in, 1/√fan_in) weights and biases.
    pub fn new<R: Rng + ?Sized>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|io| {
                let (inputs, outputs) = (io[0], io[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let mut layer = Dense::zeros(inputs, outputs);
                layer.w.mapv_inplace(|_| rng.gen_range(-bound..=bound));
                layer.b.mapv_inplace(|_| rng.gen_range(-bound..=bound));
                layer
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn zeros(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec.layer_sizes.windows(2).map(|io| Dense::zeros(io[0], io[1])).collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Shape("network has no layers".into()))?;
        let mut sizes = vec![first.w.ncols()];
        for (i, l) in layers.iter().enumerate() {
            if l.w.ncols() != *sizes.last().unwrap() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but previous layer produces {}",
                    l.w.ncols(),
                    sizes.last().unwrap()
                )));
            }
            if l.b.len() != l.w.nrows() {
                return Err(Error::Shape(format!(
                    "layer {i} has {} biases for {} outputs",
                    l.b.len(),
                    l.w.nrows()
                )));
            }
            sizes.push(l.w.nrows());
        }
        let spec = NetSpec::new(sizes)?;
        // Owned standard-layout copies so flat tensor views always exist.
        let layers = layers
            .into_iter()
            .map(|l| Dense {
                w: l.w.as_standard_layout().into_owned(),
                b: l.b,
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.spec.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flattened mutable views: `w₀, b₀, w₁, b₁, …`.
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

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("standard layout")])
            .collect()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.spec == other.spec
    }

    /// Single-input forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("input has {} features, network expects {}", x.len(), self.input_dim())));
        }
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.b.to_vec();
            for (o, row) in out.iter_mut().zip(layer.w.outer_iter()) {
                *o += row.iter().zip(&h).map(|(w, x)| w * x).sum::<f64>();
                if i != last && *o < 0.0 {
                    *o = 0.0;
                }
            }
            h = out;
        }
        Ok(h)
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("batch has {} features, network expects {}", x.ncols(), self.input_dim())));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.w.t()) + &layer.b;
            let next = if i == last { None } else { Some(z.mapv(|v| v.max(0.0))) };
            inputs.push(h);
            pre.push(z);
            match next {
                Some(a) => h = a,
                None => break,
            }
        }
        Ok(ForwardCache { inputs, pre })
    }

    /// Reverse pass: gradients of `Σ upstream ⊙ output` with respect to every
    /// parameter (summed over the batch) and to each input row.
    pub fn backward_batch(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<(Gradients, Array2<f64>)> {
        let (grads, dx) = self.reverse(cache, upstream, true)?;
        Ok((grads.expect("parameter gradients requested"), dx))
    }

    /// Gradient with respect to the inputs only.
    pub fn input_gradient_batch(&self, cache: &ForwardCache, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.reverse(cache, upstream, false)?.1)
    }

    fn reverse(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<'_, f64>,
        params: bool,
    ) -> Result<(Option<Gradients>, Array2<f64>)> {
        let out = cache.output();
        if upstream.dim() != out.dim() {
            return Err(Error::Shape(format!("upstream gradient {:?} does not match output {:?}", upstream.dim(), out.dim())));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if params {
                let dw = g.t().dot(&cache.inputs[i]);
                let dw = if dw.is_standard_layout() { dw } else { dw.as_standard_layout().into_owned() };
                let db = g.sum_axis(Axis(0));
                grads.push(Dense { w: dw, b: db });
            }
            let mut g_in = g.dot(&layer.w);
            if i > 0 {
                // ReLU of the previous layer; zero gradient at and below zero.
                ndarray::Zip::from(&mut g_in).and(&cache.pre[i - 1]).for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            g = g_in;
        }
        if !params {
            return Ok((None, g));
        }
        grads.reverse();
        Ok((Some(Gradients { layers: grads }), g))
    }

    /// Single-input reverse pass.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} entries, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let xb = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::Shape(e.to_string()))?;
        let cache = self.forward_batch(xb)?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).map_err(|e| Error::Shape(e.to_string()))?;
        let (grads, dx) = self.backward_batch(&cache, up)?;
        Ok((grads, dx.into_raw_vec_and_offset().0))
    }

    /// `self ← (1 − τ)·self + τ·online`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !self.same_shape(online) {
            return Err(Error::Shape(format!(
                "soft update between {:?} and {:?}",
                self.spec.layer_sizes, online.spec.layer_sizes
            )));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.w.zip_mut_with(&o.w, |t, &o| *t = (1.0 - tau) * *t + tau * o);
            t.b.zip_mut_with(&o.b, |t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
        Ok(())
    }

    pub fn to_json(&self, meta: &NetMeta) -> Result<String> {
        let file = NetFile {
            spec: self.spec.layer_sizes.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: l.w.iter().copied().collect(),
                    b: l.b.to_vec(),
                })
                .collect(),
            meta: meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<(Self, NetMeta)> {
        let file: NetFile = serde_json::from_str(text)?;
        let spec = NetSpec::new(file.spec)?;
        let expected = spec.layer_sizes.len() - 1;
        if file.layers.len() != expected {
            return Err(Error::Shape(format!("spec {:?} needs {expected} layers, file has {}", spec.layer_sizes, file.layers.len())));
        }
        let mut layers = Vec::with_capacity(expected);
        for (i, (lf, io)) in file.layers.into_iter().zip(spec.layer_sizes.windows(2)).enumerate() {
            let (inputs, outputs) = (io[0], io[1]);
            if lf.w.len() != inputs * outputs {
                return Err(Error::Shape(format!(
                    "layer {i}: weight array has {} entries, expected {outputs}x{inputs} = {}",
                    lf.w.len(),
                    inputs * outputs
                )));
            }
            if lf.b.len() != outputs {
                return Err(Error::Shape(format!("layer {i}: bias array has {} entries, expected {outputs}", lf.b.len())));
            }
            if lf.w.iter().chain(&lf.b).any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("layer {i}: non-finite parameter")));
            }
            let w = Array2::from_shape_vec((outputs, inputs), lf.w).map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            layers.push(Dense { w, b: Array1::from(lf.b) });
        }
        Ok((Self { spec, layers }, file.meta))
    }

    pub fn save(&self, path: &Path, meta: &NetMeta) -> Result<()> {
        fs::write(path, self.to_json(meta)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, NetMeta)> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Provenance stored alongside each network's parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetMeta {
    pub seed: u64,
    pub created_by: String,
    pub agent_kind: String,
}

impl NetMeta {
    pub fn new(seed: u64, agent_kind: impl Into<String>) -> Self {
        Self {
            seed,
            created_by: concat!("advmm ", env!("CARGO_PKG_VERSION")).to_string(),
            agent_kind: agent_kind.into(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetFile {
    spec: Vec<usize>,
    layers: Vec<LayerFile>,
    meta: NetMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    /// Row-major `(out, in)`.
    w: Vec<f64>,
    b: Vec<f64>,
}
