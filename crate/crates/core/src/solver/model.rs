use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blm::CONTEXT_LEN;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8] = b"BLMFFN 1\n";

/// Dense layer, `weights` row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Feed-forward network from seven stacked context embeddings (`7·dim`
/// inputs) to one predicted answer embedding (`dim` outputs). Hidden layers
/// use tanh; the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverModel {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

impl SolverModel {
    /// Seeded init, uniform in ±1/√fan_in.
    pub fn new(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(dim, hidden)?;
        model.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn zeros(dim: usize, hidden: &[usize]) -> Result<Self> {
        if dim == 0 || hidden.contains(&0) {
            return Err(Error::Argument(format!(
                "layer sizes must be positive (dim {dim}, hidden {hidden:?})"
            )));
        }
        let sizes: Vec<usize> = std::iter::once(CONTEXT_LEN * dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(dim))
            .collect();
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(SolverModel {
            dim,
            hidden: hidden.to_vec(),
            layers,
            seed: 0,
        })
    }

    pub fn input_size(&self) -> usize {
        CONTEXT_LEN * self.dim
    }

    /// Stack seven context vectors into one input row.
    pub fn stack<V: AsRef<[f32]>>(&self, context: &[V]) -> Result<Vec<f64>> {
        if context.len() != CONTEXT_LEN {
            return Err(Error::Argument(format!(
                "expected {CONTEXT_LEN} context vectors, got {}",
                context.len()
            )));
        }
        let mut input = Vec::with_capacity(self.input_size());
        for (i, v) in context.iter().enumerate() {
            let v = v.as_ref();
            if v.len() != self.dim {
                return Err(Error::Argument(format!(
                    "context vector {i} has dim {}, model expects {}",
                    v.len(),
                    self.dim
                )));
            }
            input.extend(v.iter().map(|&x| f64::from(x)));
        }
        Ok(input)
    }

    pub fn forward<V: AsRef<[f32]>>(&self, context: &[V]) -> Result<Vec<f64>> {
        let input = self.stack(context)?;
        let out = self.forward_stacked(&input);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite model output".into()));
        }
        Ok(out)
    }

    pub fn forward_stacked(&self, input: &[f64]) -> Vec<f64> {
        self.activations(input).pop().expect("at least one layer")
    }

    /// Layer inputs followed by the output: `[x, h1, ..., out]`.
    pub(crate) fn activations(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.apply(acts.last().expect("non-empty"));
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
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

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// `BLMFFN 1\n`, then u32 LE dim, hidden count and hidden sizes, u64 LE
    /// seed, then every parameter as f64 LE in [`SolverModel::params`] order.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.hidden.len() as u32).to_le_bytes())?;
        for h in &self.hidden {
            out.write_all(&(*h as u32).to_le_bytes())?;
        }
        out.write_all(&self.seed.to_le_bytes())?;
        for p in self.params() {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |m: &str| Error::Format {
            record: 0,
            message: format!("checkpoint: {m}"),
        };
        let mut magic = [0u8; 9];
        input.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |input: &mut R| -> Result<usize> {
            input.read_exact(&mut u32buf).map_err(|_| bad("truncated dims"))?;
            Ok(u32::from_le_bytes(u32buf) as usize)
        };
        let dim = read_u32(&mut input)?;
        let n_hidden = read_u32(&mut input)?;
        if n_hidden > 64 {
            return Err(bad("implausible hidden layer count"));
        }
        let hidden = (0..n_hidden)
            .map(|_| read_u32(&mut input))
            .collect::<Result<Vec<_>>>()?;
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf).map_err(|_| bad("truncated seed"))?;
        let mut model = SolverModel::zeros(dim, &hidden)?;
        model.seed = u64::from_le_bytes(u64buf);
        let mut params = Vec::with_capacity(model.n_params());
        for _ in 0..model.n_params() {
            input.read_exact(&mut u64buf).map_err(|_| bad("truncated parameters"))?;
            params.push(f64::from_le_bytes(u64buf));
        }
        if input.read(&mut [0u8; 1]).map_err(|e| bad(&e.to_string()))? != 0 {
            return Err(bad("trailing bytes"));
        }
        model.set_params(&params)?;
        if !model.is_finite() {
            return Err(bad("non-finite parameters"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).expect("writing to memory");
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&bytes[..])
    }
}
