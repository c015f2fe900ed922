//! Seeded linear-projection stand-in for a trained network.
//!
//! Projection rule, fixed so recorded goldens stay valid on every platform:
//!
//! * The generator is the 64-bit LCG `s = s * 6364136223846793005 + 1442695040888963407`
//!   (wrapping), started from `s = seed`. Each draw advances the state first.
//! * A weight is `(s >> 40) as f32 / 2^23 - 1`, which lies in `[-1, 1)` and is
//!   exact in f32.
//! * The input is flattened row-major. For each output in declaration order,
//!   weights are drawn row by row (`out[j]` takes draws for inputs `0..n`),
//!   followed by one bias per row when `bias` is set.
//! * `out[j] = sum_i w[j][i] * x[i] (+ b[j])`, every product exact in f64,
//!   summed in f64 in index order, then rounded to nearest-even f32.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::model::{Backend, ModelError, ModelHandle};
use crate::tensor::{NamedTensors, Tensor, TensorSpec};

pub const LCG_MULTIPLIER: u64 = 6_364_136_223_846_793_005;
pub const LCG_INCREMENT: u64 = 1_442_695_040_888_963_407;

#[derive(Clone, Debug, PartialEq)]
pub struct StubNetworkConfig {
    pub seed: u64,
    pub input: TensorSpec,
    pub outputs: Vec<TensorSpec>,
    pub bias: bool,
}

/// The stub's weight generator.
#[derive(Clone, Debug)]
pub struct WeightStream {
    state: u64,
}

impl WeightStream {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_weight(&mut self) -> f32 {
        self.state = self.state.wrapping_mul(LCG_MULTIPLIER).wrapping_add(LCG_INCREMENT);
        (self.state >> 40) as f32 / (1u32 << 23) as f32 - 1.0
    }
}

struct Projection {
    spec: TensorSpec,
    shape: Vec<usize>,
    weights: Vec<f32>,
    biases: Option<Vec<f32>>,
}

struct StubNetwork {
    inputs: Vec<TensorSpec>,
    outputs: Vec<TensorSpec>,
    projections: Vec<Projection>,
    seed: u64,
}

fn fixed_dims(spec: &TensorSpec) -> Result<Vec<usize>, ModelError> {
    spec.shape()
        .iter()
        .map(|d| {
            d.fixed().ok_or_else(|| {
                ModelError::InvalidSpec(alloc::format!(
                    "stub tensor `{}` must have fixed dimensions, got {}",
                    spec.name(),
                    spec.shape_string()
                ))
            })
        })
        .collect()
}

/// Builds a deterministic stub model from `config`.
pub fn make_stub(config: StubNetworkConfig) -> Result<ModelHandle, ModelError> {
    let input_len: usize = fixed_dims(&config.input)?.iter().product();
    if config.outputs.is_empty() {
        return Err(ModelError::InvalidSpec("stub needs at least one output".into()));
    }
    for (i, a) in config.outputs.iter().enumerate() {
        if a.name() == config.input.name() || config.outputs[..i].iter().any(|b| b.name() == a.name()) {
            return Err(ModelError::InvalidSpec(alloc::format!("duplicate tensor name `{}`", a.name())));
        }
    }

    let mut stream = WeightStream::new(config.seed);
    let mut projections = Vec::with_capacity(config.outputs.len());
    for spec in &config.outputs {
        let shape = fixed_dims(spec)?;
        let rows: usize = shape.iter().product();
        let mut weights = Vec::with_capacity(rows * input_len);
        let mut biases = config.bias.then(|| Vec::with_capacity(rows));
        for _ in 0..rows {
            weights.extend((0..input_len).map(|_| stream.next_weight()));
            if let Some(b) = biases.as_mut() {
                b.push(stream.next_weight());
            }
        }
        projections.push(Projection { spec: spec.clone(), shape, weights, biases });
    }

    Ok(ModelHandle::new(StubNetwork {
        inputs: alloc::vec![config.input],
        outputs: config.outputs,
        projections,
        seed: config.seed,
    }))
}

impl Backend for StubNetwork {
    fn inputs(&self) -> &[TensorSpec] {
        &self.inputs
    }

    fn outputs(&self) -> &[TensorSpec] {
        &self.outputs
    }

    fn metadata(&self) -> BTreeMap<String, String> {
        let params: usize = self
            .projections
            .iter()
            .map(|p| p.weights.len() + p.biases.as_ref().map_or(0, Vec::len))
            .sum();
        let mut m = BTreeMap::new();
        m.insert("model_name".into(), alloc::format!("stub-projection-{}", self.seed));
        m.insert("parameter_count".into(), params.to_string());
        m
    }

    fn run(&self, inputs: &NamedTensors) -> Result<NamedTensors, ModelError> {
        let x = inputs[self.inputs[0].name()].data();
        let n = x.len();
        let mut out = NamedTensors::new();
        for p in &self.projections {
            let values: Vec<f32> = p
                .weights
                .chunks_exact(n)
                .enumerate()
                .map(|(j, row)| {
                    let mut acc = 0.0f64;
                    for (&w, &v) in row.iter().zip(x) {
                        acc += w as f64 * v as f64;
                    }
                    if let Some(b) = &p.biases {
                        acc += b[j] as f64;
                    }
                    acc as f32
                })
                .collect();
            out.insert(p.spec.name().into(), Tensor::new(p.shape.clone(), values)?);
        }
        Ok(out)
    }
}
