use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PARAMS_FORMAT_VERSION: u32 = 1;

/// One fully connected layer. `weights[o * inputs + i]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, &b)| dot(row, x) + b),
        );
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4 * 4;
    for (ca, cb) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        acc[0] += ca[0] * cb[0];
        acc[1] += ca[1] * cb[1];
        acc[2] += ca[2] * cb[2];
        acc[3] += ca[3] * cb[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        sum += x * y;
    }
    sum
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Weights of a feed-forward network with tanh hidden layers and a linear output layer.
///
/// The same structure doubles as a gradient accumulator and as optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct MlpParams {
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    format_version: u32,
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
}

impl From<MlpParams> for ParamsRepr {
    fn from(p: MlpParams) -> Self {
        Self {
            format_version: PARAMS_FORMAT_VERSION,
            layer_sizes: p.sizes(),
            layers: p.layers,
        }
    }
}

impl TryFrom<ParamsRepr> for MlpParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        if r.format_version != PARAMS_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported parameter format version {}",
                r.format_version
            )));
        }
        if r.layer_sizes.len() != r.layers.len() + 1 {
            return Err(Error::Format(
                "layer_sizes does not match the number of layers".into(),
            ));
        }
        for (l, layer) in r.layers.iter().enumerate() {
            if layer.inputs != r.layer_sizes[l]
                || layer.outputs != r.layer_sizes[l + 1]
                || layer.weights.len() != layer.inputs * layer.outputs
                || layer.biases.len() != layer.outputs
            {
                return Err(Error::Format(format!(
                    "layer {l} does not match its declared shape"
                )));
            }
        }
        let params = MlpParams { layers: r.layers };
        if !params.is_finite() {
            return Err(Error::Format("parameters contain non-finite values".into()));
        }
        Ok(params)
    }
}

/// Activations recorded by a forward pass. `activations[0]` is the input and the last
/// entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations
            .last()
            .expect("cache holds at least the input")
    }
}

impl MlpParams {
    /// All-zero network with the given layer widths, e.g. `[200, 512, 512, 8]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// Weights and biases drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_uniform<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(sizes)?;
        for layer in &mut p.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Every parameter in a fixed order: layer by layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.values_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|v| *v *= factor);
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            if l != last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.affine(&activations[l], &mut out);
            if l != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Accumulates into `grads` the gradient of a scalar loss whose derivative with
    /// respect to the network output is `grad_output`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut MlpParams,
    ) -> Result<()> {
        if !self.same_shape(grads) {
            return Err(Error::ShapeMismatch(
                "gradient buffer does not match network".into(),
            ));
        }
        if cache.activations.len() != self.layers.len() + 1
            || cache
                .activations
                .iter()
                .zip(self.sizes())
                .any(|(a, s)| a.len() != s)
        {
            return Err(Error::ShapeMismatch(
                "forward cache does not match network".into(),
            ));
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: grad_output.len(),
            });
        }

        let mut delta = grad_output.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    axpy(
                        d,
                        input,
                        &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs],
                    );
                }
                g.biases[o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    if d != 0.0 {
                        axpy(d, row, &mut prev);
                    }
                }
                // input of this layer is the tanh output of the previous one
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let p = MlpParams::zeros(&[5, 4, 4, 3]).unwrap();
        assert_eq!(
            p.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn output_bias_passes_through() {
        let mut p = MlpParams::zeros(&[3, 4, 4, 3]).unwrap();
        p.layers_mut()[2].biases[0] = 1.0;
        assert_eq!(p.forward(&[0.0; 3]).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let p = MlpParams::zeros(&[3, 2]).unwrap();
        assert!(matches!(
            p.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
        assert!(MlpParams::zeros(&[3]).is_err());
        assert!(MlpParams::zeros(&[3, 0, 2]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init_uniform(&[4, 5, 3], &mut rng).unwrap();
        let cache = p.forward_cached(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let mut g = p.zeros_like();
        p.backward(&cache, &[0.0; 3], &mut g).unwrap();
        assert!(g.values().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_matches_closed_form() {
        // loss = 0.5 * |W x + b - y|^2  =>  dW = (pred - y) x^T, db = pred - y
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MlpParams::init_uniform(&[3, 2], &mut rng).unwrap();
        let x = [0.5, -1.0, 2.0];
        let y = [0.3, -0.7];
        let cache = p.forward_cached(&x).unwrap();
        let residual: Vec<f64> = cache.output().iter().zip(&y).map(|(a, b)| a - b).collect();
        let mut g = p.zeros_like();
        p.backward(&cache, &residual, &mut g).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g.layers()[0].weights[o * 3 + i] - residual[o] * x[i]).abs() < 1e-15);
            }
            assert_eq!(g.layers()[0].biases[o], residual[o]);
        }
    }

    #[test]
    fn hidden_activations_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = MlpParams::init_uniform(&[3, 6, 6, 2], &mut rng).unwrap();
        p.scale(50.0);
        let cache = p.forward_cached(&[10.0, -10.0, 3.0]).unwrap();
        for hidden in &cache.activations[1..3] {
            assert!(hidden.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn serialization_validates_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = MlpParams::init_uniform(&[3, 4, 2], &mut rng).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: MlpParams = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);

        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["layer_sizes"][1] = 5.into();
        assert!(serde_json::from_value::<MlpParams>(value.clone()).is_err());
        value["layer_sizes"][1] = 4.into();
        value["format_version"] = 99.into();
        assert!(serde_json::from_value::<MlpParams>(value).is_err());
    }
}
