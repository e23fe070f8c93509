//! Unit-sphere embeddings, the temperature-scaled similarity kernel and a
//! small tanh MLP whose output is projected onto the sphere.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs with a norm below this are rejected by [`normalize`].
pub const NORM_EPSILON: f64 = 1e-12;

/// A point on the unit sphere `S^{d-1}`, `d >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Plain inner product; both vectors must share a dimension.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn normalize(v: &[f64]) -> Result<EmbeddingVector> {
    if v.len() < 2 {
        return Err(Error::Input(format!(
            "embedding dimension must be at least 2, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite coordinate".into()));
    }
    let norm = dot(v, v).sqrt();
    if norm < NORM_EPSILON {
        return Err(Error::Degenerate(format!(
            "cannot project a vector of norm {norm:e} onto the sphere"
        )));
    }
    Ok(EmbeddingVector(v.iter().map(|x| x / norm).collect()))
}

/// Temperature `gamma` of the similarity kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityParams {
    gamma: f64,
}

impl SimilarityParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Input(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Largest attainable `|g|` for unit vectors.
    pub fn bound(&self) -> f64 {
        1.0 / self.gamma
    }

    #[inline]
    pub(crate) fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / self.gamma
    }
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self { gamma: 0.5 }
    }
}

/// `g(a, b) = <a, b> / gamma`.
pub fn similarity(a: &EmbeddingVector, b: &EmbeddingVector, p: &SimilarityParams) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(p.kernel(&a.0, &b.0))
}

/// One affine layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn uniform<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut layer = Self::zeros(inputs, outputs);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.gen_range(-bound..=bound);
        }
        layer
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| dot(row, input) + b));
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Feed-forward representation map: tanh hidden layers, a linear output
/// layer, then projection onto the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l]` the output of layer `l - 1`.
    /// The last entry holds the raw (pre-projection) output.
    activations: Vec<Vec<f64>>,
    norm: f64,
    output: EmbeddingVector,
}

impl ForwardTrace {
    pub fn output(&self) -> &EmbeddingVector {
        &self.output
    }

    pub fn raw_output(&self) -> &[f64] {
        self.activations.last().expect("trace has at least one layer")
    }
}

/// Parameter gradients with the same layout as an [`Embedder`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(e: &Embedder) -> Self {
        Self {
            layers: e.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(Dense::param_count).sum());
    for l in layers {
        out.extend_from_slice(&l.weights);
        out.extend_from_slice(&l.bias);
    }
    out
}

const SHAPE_MAGIC: &str = "hscl-embedder v1";

impl Embedder {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization.
    ///
    /// `widths` lists the input width followed by every layer's output width;
    /// the final entry is the embedding dimension.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(widths, &mut rng)
    }

    pub fn init_with<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths.windows(2).map(|w| Dense::uniform(w[0], w[1], rng)).collect();
        Ok(Self { layers })
    }

    /// The default architecture: two tanh hidden layers of `hidden` units.
    pub fn mlp(input_dim: usize, hidden: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        Self::init(&[input_dim, hidden, hidden, embed_dim], seed)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("embedder needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(Error::Input(format!("layer {i} has a zero width")));
            }
            if l.weights.len() != l.inputs * l.outputs {
                return Err(Error::Shape {
                    expected: l.inputs * l.outputs,
                    got: l.weights.len(),
                });
            }
            if l.bias.len() != l.outputs {
                return Err(Error::Shape {
                    expected: l.outputs,
                    got: l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Shape {
                    expected: layers[i - 1].outputs,
                    got: l.inputs,
                });
            }
        }
        if layers.last().map(|l| l.outputs) < Some(2) {
            return Err(Error::Input("embedding dimension must be at least 2".into()));
        }
        Ok(Self { layers })
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 {
            return Err(Error::Input("need an input width and at least one layer width".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Input("layer widths must be positive".into()));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::Input("embedding dimension must be at least 2".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<EmbeddingVector> {
        Ok(self.forward_trace(x)?.output)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite input coordinate".into()));
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.apply(activations.last().unwrap(), &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::LayerNumerical {
                    layer: i,
                    detail: "forward activation is not finite".into(),
                });
            }
            activations.push(z);
        }
        let raw = activations.last().unwrap();
        let norm = dot(raw, raw).sqrt();
        if norm < NORM_EPSILON {
            return Err(Error::Degenerate(format!(
                "raw embedding has norm {norm:e}; cannot project onto the sphere"
            )));
        }
        let output = EmbeddingVector(raw.iter().map(|v| v / norm).collect());
        Ok(ForwardTrace {
            activations,
            norm,
            output,
        })
    }

    /// Accumulates into `grads` the parameter gradient of a scalar whose
    /// gradient with respect to the unit-norm output is `d_output`.
    ///
    /// The sphere projection contributes `(I - u u^T) / |z|`, so any
    /// component of `d_output` along `u` is discarded.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64], grads: &mut Gradients) -> Result<()> {
        let u = trace.output.coords();
        if d_output.len() != u.len() {
            return Err(Error::Shape {
                expected: u.len(),
                got: d_output.len(),
            });
        }
        let radial = dot(u, d_output);
        let mut delta: Vec<f64> = d_output.iter().zip(u).map(|(d, ui)| (d - radial * ui) / trace.norm).collect();

        for (i, layer) in self.layers.iter().enumerate().rev() {
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::LayerNumerical {
                    layer: i,
                    detail: "backpropagated gradient is not finite".into(),
                });
            }
            let input = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, a) in row.iter_mut().zip(input) {
                    *w += d * a;
                }
                g.bias[o] += d;
            }
            if i == 0 {
                break;
            }
            // Previous layer is a tanh layer: d tanh = 1 - a^2.
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            delta = prev;
        }
        Ok(())
    }

    /// Plain-text shape header for [`Embedder::to_blob`].
    pub fn shape_header(&self) -> String {
        let widths: Vec<String> = self.widths().iter().map(usize::to_string).collect();
        format!(
            "{SHAPE_MAGIC}\nactivation tanh\nlayers {}\nwidths {}\nparams {}\n",
            self.layers.len(),
            widths.join(" "),
            self.param_count()
        )
    }

    /// Little-endian f64 blob: per layer, row-major weights then bias.
    pub fn to_blob(&self) -> Vec<u8> {
        self.flat_params().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_blob(header: &str, blob: &[u8]) -> Result<Self> {
        let mut lines = header.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(SHAPE_MAGIC) {
            return Err(Error::Input(format!("shape header must start with '{SHAPE_MAGIC}'")));
        }
        let mut widths: Option<Vec<usize>> = None;
        let mut params: Option<usize> = None;
        for line in lines {
            let (key, value) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "activation" if value == "tanh" => {}
                "activation" => return Err(Error::Input(format!("unsupported activation '{value}'"))),
                "layers" => {}
                "widths" => {
                    widths = Some(
                        value
                            .split_whitespace()
                            .map(|w| w.parse::<usize>().map_err(|e| Error::Input(format!("bad width '{w}': {e}"))))
                            .collect::<Result<_>>()?,
                    )
                }
                "params" => params = Some(value.parse().map_err(|e| Error::Input(format!("bad param count: {e}")))?),
                other => return Err(Error::Input(format!("unknown shape header key '{other}'"))),
            }
        }
        let widths = widths.ok_or_else(|| Error::Input("shape header lacks a widths line".into()))?;
        Self::check_widths(&widths)?;
        let mut e = Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        };
        if let Some(p) = params {
            if p != e.param_count() {
                return Err(Error::Shape {
                    expected: e.param_count(),
                    got: p,
                });
            }
        }
        if blob.len() != 8 * e.param_count() {
            return Err(Error::Shape {
                expected: 8 * e.param_count(),
                got: blob.len(),
            });
        }
        let flat: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        e.set_flat_params(&flat)?;
        Ok(e)
    }

    /// Writes `<stem>.shape` and `<stem>.bin`.
    pub fn save(&self, stem: &std::path::Path) -> Result<()> {
        std::fs::write(stem.with_extension("shape"), self.shape_header())?;
        std::fs::write(stem.with_extension("bin"), self.to_blob())?;
        Ok(())
    }

    pub fn load(stem: &std::path::Path) -> Result<Self> {
        let header = std::fs::read_to_string(stem.with_extension("shape"))?;
        let blob = std::fs::read(stem.with_extension("bin"))?;
        Self::from_blob(&header, &blob)
    }
}
