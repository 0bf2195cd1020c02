//! Minimal tensor and layer stack with exact backpropagation.
//!
//! The zoo has seven variants sharing the same building blocks: a crop
//! embedding, a dense reducer for the flattened season features, a window
//! biLSTM with additive self-attention, a (stackable) year-level LSTM, an
//! optional distribution-fusion head and a softmax classifier. Training
//! runs in f32; gradient verification instantiates the same code at f64.

pub mod gradcheck;
mod layers;
mod linalg;
mod model;

pub use model::{loss_and_backward, predict_probs, ForwardOutput, ModelInput, ModelStep};

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, tag};

/// Scalar precision the network is instantiated at.
pub trait Scalar:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shaped, row-major buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(shape: &[usize]) -> Tensor<S> {
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::zero(); shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn fill(&mut self, v: S) {
        self.data.fill(v);
    }
}

/// Model dimensions. `v` is the fine class count; the embedding table has
/// one extra row for the UNKNOWN history token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub v: u32,
    /// Crop embedding width.
    pub embed: u32,
    /// Output width of the dense season-feature reducer.
    pub rs_dense: u32,
    /// Window biLSTM hidden width per direction.
    pub window_hidden: u32,
    /// Additive attention width.
    pub attn: u32,
    /// Year LSTM hidden width (also the fusion layer width).
    pub year_hidden: u32,
    /// Stacked year-LSTM depth.
    pub year_layers: u32,
    pub n_windows: u32,
    pub window_feats: u32,
}

impl Dims {
    /// Defaults used for full-scale runs.
    pub fn paper_default(v: u32) -> Dims {
        Dims {
            v,
            embed: 64,
            rs_dense: 128,
            window_hidden: 128,
            attn: 128,
            year_hidden: 256,
            year_layers: 1,
            n_windows: 25,
            window_feats: 28,
        }
    }

    /// Tiny configuration for finite-difference verification.
    pub fn tiny() -> Dims {
        Dims {
            v: 6,
            embed: 4,
            rs_dense: 4,
            window_hidden: 3,
            attn: 4,
            year_hidden: 5,
            year_layers: 1,
            n_windows: 3,
            window_feats: 5,
        }
    }

    pub fn flat_rs(&self) -> usize {
        (self.n_windows * self.window_feats) as usize
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("v", self.v),
            ("embed", self.embed),
            ("rs_dense", self.rs_dense),
            ("window_hidden", self.window_hidden),
            ("attn", self.attn),
            ("year_hidden", self.year_hidden),
            ("year_layers", self.year_layers),
            ("n_windows", self.n_windows),
            ("window_feats", self.window_feats),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::Config(format!("dimension {name} must be >= 1")));
            }
        }
        if self.v < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        Ok(())
    }
}

/// The model zoo of the end-of-season comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Year LSTM over crop embeddings only.
    LstmCrop,
    /// Year-independent baseline: LSTM over the target season's windows.
    LstmYi,
    /// Year LSTM over densely reduced season features, no crop input.
    LstmRs,
    /// Year LSTM over window-biLSTM+attention encodings, no crop input.
    HierRs,
    /// Year LSTM over [embedding; dense season features].
    LstmMm,
    /// Year LSTM over [embedding; window encoding].
    HierMm,
    /// HierMm plus crop-distribution fusion before the classifier.
    Final,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::LstmCrop,
        Variant::LstmYi,
        Variant::LstmRs,
        Variant::HierRs,
        Variant::LstmMm,
        Variant::HierMm,
        Variant::Final,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::LstmCrop => "LSTM_Crop",
            Variant::LstmYi => "LSTM_YI",
            Variant::LstmRs => "LSTM_RS",
            Variant::HierRs => "HierbiLSTM_RS",
            Variant::LstmMm => "LSTM_MM",
            Variant::HierMm => "HierbiLSTM_MM",
            Variant::Final => "Final",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model variant '{s}'")))
    }

    pub fn tag(&self) -> u8 {
        match self {
            Variant::LstmCrop => 0,
            Variant::LstmYi => 1,
            Variant::LstmRs => 2,
            Variant::HierRs => 3,
            Variant::LstmMm => 4,
            Variant::HierMm => 5,
            Variant::Final => 6,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Variant> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.tag() == tag)
            .ok_or_else(|| Error::Data(format!("unknown variant tag {tag}")))
    }

    pub fn uses_crop(&self) -> bool {
        matches!(self, Variant::LstmCrop | Variant::LstmMm | Variant::HierMm | Variant::Final)
    }

    pub fn uses_rs_dense(&self) -> bool {
        matches!(self, Variant::LstmRs | Variant::LstmMm)
    }

    pub fn uses_window_net(&self) -> bool {
        matches!(self, Variant::HierRs | Variant::HierMm | Variant::Final)
    }

    pub fn uses_dist(&self) -> bool {
        matches!(self, Variant::Final)
    }

    /// All variants but the year-independent baseline consume the 10-step
    /// season sequence.
    pub fn is_year_sequence(&self) -> bool {
        !matches!(self, Variant::LstmYi)
    }

    /// Width of the year-LSTM input (layer 0).
    pub fn year_input(&self, dims: &Dims) -> usize {
        let e = dims.embed as usize;
        let r = dims.rs_dense as usize;
        let w2 = 2 * dims.window_hidden as usize;
        match self {
            Variant::LstmCrop => e,
            Variant::LstmYi => dims.window_feats as usize,
            Variant::LstmRs => r,
            Variant::HierRs => w2,
            Variant::LstmMm => e + r,
            Variant::HierMm | Variant::Final => e + w2,
        }
    }
}

/// Ordered (name, shape) registry of the tensors a variant owns.
fn tensor_registry(variant: Variant, dims: &Dims) -> Vec<(String, Vec<usize>)> {
    let v = dims.v as usize;
    let e = dims.embed as usize;
    let r = dims.rs_dense as usize;
    let w = dims.window_hidden as usize;
    let a = dims.attn as usize;
    let y = dims.year_hidden as usize;
    let wf = dims.window_feats as usize;
    let mut reg: Vec<(String, Vec<usize>)> = Vec::new();

    if variant.uses_crop() {
        reg.push(("embed.weight".into(), vec![v + 1, e]));
    }
    if variant.uses_rs_dense() {
        reg.push(("rs_dense.weight".into(), vec![r, dims.flat_rs()]));
        reg.push(("rs_dense.bias".into(), vec![r]));
    }
    if variant.uses_window_net() {
        for dir in ["win_fwd", "win_bwd"] {
            reg.push((format!("{dir}.w_x"), vec![4 * w, wf]));
            reg.push((format!("{dir}.w_h"), vec![4 * w, w]));
            reg.push((format!("{dir}.b"), vec![4 * w]));
        }
        reg.push(("attn.weight".into(), vec![a, 2 * w]));
        reg.push(("attn.bias".into(), vec![a]));
        reg.push(("attn.v".into(), vec![a]));
    }
    for layer in 0..dims.year_layers as usize {
        let input = if layer == 0 {
            variant.year_input(dims)
        } else {
            y
        };
        reg.push((format!("year{layer}.w_x"), vec![4 * y, input]));
        reg.push((format!("year{layer}.w_h"), vec![4 * y, y]));
        reg.push((format!("year{layer}.b"), vec![4 * y]));
    }
    if variant.uses_dist() {
        reg.push(("fuse1.weight".into(), vec![y, y + v]));
        reg.push(("fuse1.bias".into(), vec![y]));
        reg.push(("fuse2.weight".into(), vec![y, y]));
        reg.push(("fuse2.bias".into(), vec![y]));
    }
    reg.push(("out.weight".into(), vec![v, y]));
    reg.push(("out.bias".into(), vec![v]));
    reg
}

/// Named parameter tensors of one model instance.
#[derive(Debug, Clone)]
pub struct ModelParams<S> {
    pub variant: Variant,
    pub dims: Dims,
    pub seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ModelParams<S> {
    fn from_tensors(
        variant: Variant,
        dims: Dims,
        seed: u64,
        names: Vec<String>,
        tensors: Vec<Tensor<S>>,
    ) -> ModelParams<S> {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        ModelParams {
            variant,
            dims,
            seed,
            names,
            tensors,
            index,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<S>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.tensors
    }

    pub fn tensor_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> &Tensor<S> {
        &self.tensors[self.index[name]]
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Rebuild with identical structure from replacement tensors (used by
    /// checkpoint loading). Shape agreement is validated.
    pub fn replace_tensors(&mut self, tensors: Vec<Tensor<S>>) -> Result<()> {
        if tensors.len() != self.tensors.len() {
            return Err(Error::Data("tensor count mismatch".into()));
        }
        for (old, new) in self.tensors.iter().zip(&tensors) {
            if old.shape() != new.shape() {
                return Err(Error::Data("tensor shape mismatch".into()));
            }
        }
        self.tensors = tensors;
        Ok(())
    }

    /// Cast every tensor (f32 <-> f64).
    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| Tensor {
                shape: t.shape.clone(),
                data: t.data.iter().map(|&x| T::from_f64(x.to_f64())).collect(),
            })
            .collect();
        ModelParams::from_tensors(
            self.variant,
            self.dims,
            self.seed,
            self.names.clone(),
            tensors,
        )
    }
}

/// Gradient buffers, one per parameter tensor, in parameter order.
#[derive(Debug, Clone)]
pub struct Gradients<S> {
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(params: &ModelParams<S>) -> Gradients<S> {
        Gradients {
            tensors: params
                .tensors
                .iter()
                .map(|t| Tensor::zeros(&t.shape))
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for t in &mut self.tensors {
            t.fill(S::zero());
        }
    }

    /// Accumulate another buffer (fixed elementwise order).
    pub fn accumulate(&mut self, other: &Gradients<S>) {
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            linalg::add_acc(&mut dst.data, &src.data);
        }
    }
}

/// Initialize parameters: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per
/// weight matrix (fan_in = input width), zero biases except the LSTM
/// forget-gate block at 1.0. Deterministic per seed.
pub fn init_params<S: Scalar>(variant: Variant, dims: Dims, seed: u64) -> Result<ModelParams<S>> {
    dims.validate()?;
    let registry = tensor_registry(variant, &dims);
    let mut rng = substream(seed, tag::INIT_PARAMS, variant.tag() as u64);
    let mut names = Vec::with_capacity(registry.len());
    let mut tensors = Vec::with_capacity(registry.len());
    for (name, shape) in registry {
        let mut tensor = Tensor::<S>::zeros(&shape);
        let is_bias = name.ends_with(".bias") || name.ends_with(".b");
        if is_bias {
            if name.ends_with(".b") {
                // LSTM bias: forget-gate block starts at H
                let h = shape[0] / 4;
                for i in h..2 * h {
                    tensor.data[i] = S::one();
                }
            }
        } else {
            let fan_in = *shape.last().unwrap();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in tensor.data.iter_mut() {
                *x = S::from_f64(rng.random_range(-bound..bound));
            }
        }
        names.push(name);
        tensors.push(tensor);
    }
    Ok(ModelParams::from_tensors(variant, dims, seed, names, tensors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_per_seed() {
        let a: ModelParams<f32> = init_params(Variant::Final, Dims::tiny(), 9).unwrap();
        let b: ModelParams<f32> = init_params(Variant::Final, Dims::tiny(), 9).unwrap();
        assert_eq!(a.tensors(), b.tensors());
        let c: ModelParams<f32> = init_params(Variant::Final, Dims::tiny(), 10).unwrap();
        assert_ne!(a.tensors(), c.tensors());
    }

    #[test]
    fn forget_gate_bias_is_one() {
        let p: ModelParams<f32> = init_params(Variant::LstmCrop, Dims::tiny(), 1).unwrap();
        let b = p.get("year0.b");
        let h = Dims::tiny().year_hidden as usize;
        for i in 0..4 * h {
            let expected = if (h..2 * h).contains(&i) { 1.0 } else { 0.0 };
            assert_eq!(b.data[i], expected);
        }
    }

    #[test]
    fn weight_magnitudes_respect_fan_in_bound() {
        let p: ModelParams<f64> = init_params(Variant::Final, Dims::tiny(), 3).unwrap();
        for (name, t) in p.names().iter().zip(p.tensors()) {
            if name.ends_with(".bias") || name.ends_with(".b") {
                continue;
            }
            let bound = 1.0 / (*t.shape().last().unwrap() as f64).sqrt();
            for &x in &t.data {
                assert!(x.abs() <= bound, "{name}: {x} exceeds {bound}");
            }
        }
    }

    #[test]
    fn registry_shapes_are_variant_consistent() {
        let dims = Dims::tiny();
        for variant in Variant::ALL {
            let p: ModelParams<f32> = init_params(variant, dims, 2).unwrap();
            let y = dims.year_hidden as usize;
            let w_x = p.get("year0.w_x");
            assert_eq!(w_x.shape(), &[4 * y, variant.year_input(&dims)]);
            assert_eq!(p.get("out.weight").shape(), &[dims.v as usize, y]);
            // every tensor has a same-shaped gradient buffer
            let grads = Gradients::zeros_like(&p);
            for (t, g) in p.tensors().iter().zip(&grads.tensors) {
                assert_eq!(t.shape(), g.shape());
            }
        }
    }

    #[test]
    fn stacked_year_layers_get_registered() {
        let mut dims = Dims::tiny();
        dims.year_layers = 2;
        let p: ModelParams<f32> = init_params(Variant::LstmCrop, dims, 2).unwrap();
        assert!(p.tensor_index("year1.w_x").is_some());
        assert_eq!(
            p.get("year1.w_x").shape(),
            &[4 * dims.year_hidden as usize, dims.year_hidden as usize]
        );
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
            assert_eq!(Variant::from_tag(v.tag()).unwrap(), v);
        }
        assert!(Variant::parse("nope").is_err());
    }
}
