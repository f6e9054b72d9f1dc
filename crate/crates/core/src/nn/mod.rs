//! Network descriptions, weight containers and the secure layer engine.

mod io;
mod secure;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use io::{load_dataset, read_idx, save_dataset, Checkpoint, Dataset, Tensor, TensorData};
pub use secure::{LayerCache, SecureNet, SharedParams};

/// Per-sample activation shape (channels, height, width). Flat vectors use (n, 1, 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Shape { c, h, w }
    }

    pub fn flat(n: usize) -> Self {
        Shape { c: n, h: 1, w: 1 }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Fc {
        inputs: usize,
        outputs: usize,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        filter: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        pad: usize,
    },
    Relu,
    Maxpool {
        window: usize,
        #[serde(default)]
        stride: usize,
    },
    BatchNorm,
}

fn one() -> usize {
    1
}

pub use crate::protocols::conv_out_dim as out_dim;

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Fc { .. } => "fc",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::Maxpool { .. } => "maxpool",
            LayerSpec::BatchNorm => "batch_norm",
        }
    }

    pub fn pool_stride(&self) -> usize {
        match *self {
            LayerSpec::Maxpool { window, stride } => {
                if stride == 0 {
                    window
                } else {
                    stride
                }
            }
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Fc { inputs, outputs } => {
                if inputs != input.len() || outputs == 0 {
                    return Err(Error::Shape(format!(
                        "fc expects {inputs} inputs, got {}",
                        input.len()
                    )));
                }
                Ok(Shape::flat(outputs))
            }
            LayerSpec::Conv {
                in_channels,
                out_channels,
                filter,
                stride,
                pad,
            } => {
                if in_channels != input.c || out_channels == 0 {
                    return Err(Error::Shape(format!(
                        "conv expects {in_channels} channels, got {}",
                        input.c
                    )));
                }
                Ok(Shape::new(
                    out_channels,
                    out_dim(input.h, filter, stride, pad)?,
                    out_dim(input.w, filter, stride, pad)?,
                ))
            }
            LayerSpec::Relu | LayerSpec::BatchNorm => Ok(input),
            LayerSpec::Maxpool { window, .. } => {
                let s = self.pool_stride();
                Ok(Shape::new(input.c, out_dim(input.h, window, s, 0)?, out_dim(input.w, window, s, 0)?))
            }
        }
    }

    /// Shapes of the weight and bias tensors (empty for parameter-free layers).
    pub fn param_shapes(&self, input: Shape) -> (Vec<usize>, Vec<usize>) {
        match *self {
            LayerSpec::Fc { inputs, outputs } => (vec![inputs, outputs], vec![outputs]),
            LayerSpec::Conv {
                in_channels,
                out_channels,
                filter,
                ..
            } => (vec![out_channels, in_channels, filter, filter], vec![out_channels]),
            LayerSpec::BatchNorm => (vec![input.len()], vec![input.len()]),
            LayerSpec::Relu | LayerSpec::Maxpool { .. } => (vec![], vec![]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: Shape,
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Learning rate 2^{−lr_shift}.
    #[serde(default = "default_lr_shift")]
    pub lr_shift: u32,
}

fn default_batch() -> usize {
    32
}

fn default_lr_shift() -> u32 {
    6
}

fn fc(inputs: usize, outputs: usize) -> LayerSpec {
    LayerSpec::Fc { inputs, outputs }
}

fn conv(in_channels: usize, out_channels: usize, filter: usize, stride: usize, pad: usize) -> LayerSpec {
    LayerSpec::Conv {
        in_channels,
        out_channels,
        filter,
        stride,
        pad,
    }
}

fn pool(window: usize) -> LayerSpec {
    LayerSpec::Maxpool { window, stride: window }
}

impl NetworkSpec {
    fn preset(name: &str, input: Shape, classes: usize, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            name: name.into(),
            input,
            classes,
            layers,
            batch: default_batch(),
            lr_shift: default_lr_shift(),
        }
    }

    /// Three fully connected layers, 784-128-128-10.
    pub fn network_a() -> Self {
        use LayerSpec::Relu;
        Self::preset(
            "network-a",
            Shape::new(1, 28, 28),
            10,
            vec![fc(784, 128), Relu, fc(128, 128), Relu, fc(128, 10)],
        )
    }

    /// One strided convolution and two fully connected layers.
    pub fn network_b() -> Self {
        use LayerSpec::Relu;
        Self::preset(
            "network-b",
            Shape::new(1, 28, 28),
            10,
            vec![conv(1, 5, 5, 2, 2), Relu, fc(980, 100), Relu, fc(100, 10)],
        )
    }

    /// Two convolutions with max pooling and two fully connected layers.
    pub fn network_c() -> Self {
        use LayerSpec::Relu;
        Self::preset(
            "network-c",
            Shape::new(1, 28, 28),
            10,
            vec![
                conv(1, 16, 5, 1, 0),
                Relu,
                pool(2),
                conv(16, 16, 5, 1, 0),
                Relu,
                pool(2),
                fc(256, 100),
                Relu,
                fc(100, 10),
            ],
        )
    }

    pub fn lenet() -> Self {
        use LayerSpec::Relu;
        Self::preset(
            "lenet",
            Shape::new(1, 28, 28),
            10,
            vec![
                conv(1, 20, 5, 1, 0),
                Relu,
                pool(2),
                conv(20, 50, 5, 1, 0),
                Relu,
                pool(2),
                fc(800, 500),
                Relu,
                fc(500, 10),
            ],
        )
    }

    /// AlexNet on 33×33×3 inputs, with batch norm after the first two pooling layers.
    pub fn alexnet() -> Self {
        use LayerSpec::{BatchNorm, Relu};
        let pool3 = LayerSpec::Maxpool { window: 3, stride: 2 };
        Self::preset(
            "alexnet",
            Shape::new(3, 33, 33),
            10,
            vec![
                conv(3, 96, 11, 4, 9),
                Relu,
                pool3.clone(),
                BatchNorm,
                conv(96, 256, 5, 1, 1),
                Relu,
                pool3,
                BatchNorm,
                conv(256, 384, 3, 1, 1),
                Relu,
                conv(384, 384, 3, 1, 1),
                Relu,
                conv(384, 256, 3, 1, 1),
                Relu,
                fc(256, 256),
                Relu,
                fc(256, 256),
                Relu,
                fc(256, 10),
            ],
        )
    }

    /// VGG16 on 32×32×3 inputs.
    pub fn vgg16() -> Self {
        use LayerSpec::Relu;
        let mut layers = Vec::new();
        let mut c = 3;
        for (blocks, width) in [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)] {
            for _ in 0..blocks {
                layers.push(conv(c, width, 3, 1, 1));
                layers.push(Relu);
                c = width;
            }
            layers.push(pool(2));
        }
        layers.extend([fc(512, 256), Relu, fc(256, 256), Relu, fc(256, 10)]);
        Self::preset("vgg16", Shape::new(3, 32, 32), 10, layers)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "a" | "network-a" | "secureml" => Ok(Self::network_a()),
            "b" | "network-b" | "chameleon" => Ok(Self::network_b()),
            "c" | "network-c" | "minionn" => Ok(Self::network_c()),
            "lenet" => Ok(Self::lenet()),
            "alexnet" => Ok(Self::alexnet()),
            "vgg16" | "vgg" => Ok(Self::vgg16()),
            other => Err(Error::Config(format!("unknown network {other}"))),
        }
    }

    /// Reads a TOML or JSON network file, or a preset name.
    pub fn load(path_or_name: &str) -> Result<Self> {
        let path = Path::new(path_or_name);
        if !path.exists() {
            return Self::by_name(path_or_name);
        }
        let text = std::fs::read_to_string(path)?;
        let spec: NetworkSpec = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
            _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("network spec serializes")
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut out = vec![self.input];
        for (i, l) in self.layers.iter().enumerate() {
            let next = l
                .output_shape(*out.last().unwrap())
                .map_err(|e| Error::Shape(format!("layer {i} ({}): {e}", l.name())))?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.is_empty() || self.classes == 0 || self.batch == 0 {
            return Err(Error::Shape("network dimensions must be positive".into()));
        }
        let shapes = self.shapes()?;
        let last = shapes.last().unwrap().len();
        if last != self.classes {
            return Err(Error::Shape(format!(
                "network ends with {last} outputs for {} classes",
                self.classes
            )));
        }
        Ok(())
    }

    /// Swaps each ReLU → Maxpool pair into Maxpool → ReLU, which computes the
    /// same function with fewer comparisons.
    pub fn optimized(&self) -> Self {
        let mut out = self.clone();
        let mut i = 0;
        while i + 1 < out.layers.len() {
            if out.layers[i] == LayerSpec::Relu && matches!(out.layers[i + 1], LayerSpec::Maxpool { .. }) {
                out.layers.swap(i, i + 1);
                i += 2;
            } else {
                i += 1;
            }
        }
        out
    }

    pub fn param_count(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| {
                let (w, b) = l.param_shapes(s);
                w.iter().product::<usize>() * (!w.is_empty()) as usize
                    + b.iter().product::<usize>() * (!b.is_empty()) as usize
            })
            .sum())
    }

    /// Hash bound into the session handshake.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("network spec serializes"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Weight and bias of one layer, in any scalar representation.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T> Default for LayerParams<T> {
    fn default() -> Self {
        LayerParams { w: Vec::new(), b: Vec::new() }
    }
}

/// Plaintext parameters of a whole network.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<T> {
    pub layers: Vec<LayerParams<T>>,
}

impl<T: Clone + Default> Weights<T> {
    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        Ok(Weights {
            layers: spec
                .layers
                .iter()
                .zip(&shapes)
                .map(|(l, &s)| {
                    let (w, b) = l.param_shapes(s);
                    let n = |d: &Vec<usize>| if d.is_empty() { 0 } else { d.iter().product() };
                    LayerParams {
                        w: vec![T::default(); n(&w)],
                        b: vec![T::default(); n(&b)],
                    }
                })
                .collect(),
        })
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let want = Self::zeros(spec)?;
        if want.layers.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} parameter layers for {} network layers",
                self.layers.len(),
                want.layers.len()
            )));
        }
        for (i, (a, b)) in self.layers.iter().zip(&want.layers).enumerate() {
            if a.w.len() != b.w.len() || a.b.len() != b.b.len() {
                return Err(Error::Shape(format!("layer {i} parameter sizes")));
            }
        }
        Ok(())
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Weights<U> {
        Weights {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w: l.w.iter().map(&f).collect(),
                    b: l.b.iter().map(&f).collect(),
                })
                .collect(),
        }
    }
}

impl Weights<f64> {
    /// Xavier-uniform weights scaled per weighted layer, zero biases,
    /// γ = 1 and β = 0 for batch norm.
    pub fn xavier(spec: &NetworkSpec, scales: &[f64], rng: &mut impl rand::Rng) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut out = Self::zeros(spec)?;
        let mut k = 0;
        for (i, l) in spec.layers.iter().enumerate() {
            let (fan_in, fan_out) = match *l {
                LayerSpec::Fc { inputs, outputs } => (inputs, outputs),
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    filter,
                    ..
                } => (in_channels * filter * filter, out_channels * filter * filter),
                LayerSpec::BatchNorm => {
                    out.layers[i].w = vec![1.0; shapes[i].len()];
                    continue;
                }
                _ => continue,
            };
            let scale = scales.get(k).copied().unwrap_or(1.0);
            k += 1;
            let lim = scale * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut out.layers[i].w {
                *w = rng.gen_range(-lim..lim);
            }
        }
        Ok(out)
    }
}

/// Quantizes float weights to raw fixed-point values.
pub fn quantize(w: &Weights<f64>, params: &crate::rings::RingParams) -> Result<Weights<u64>> {
    let layers = w
        .layers
        .iter()
        .map(|l| {
            Ok(LayerParams {
                w: params.encode_all(&l.w)?,
                b: params.encode_all(&l.b)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Weights { layers })
}

/// Window element indices of a max-pool layer: for every output value in
/// (c, y, x) order, the `window²` input indices in row-major window order.
pub fn pool_windows(input: Shape, window: usize, stride: usize) -> Result<Vec<usize>> {
    let oh = out_dim(input.h, window, stride, 0)?;
    let ow = out_dim(input.w, window, stride, 0)?;
    let mut idx = Vec::with_capacity(input.c * oh * ow * window * window);
    for c in 0..input.c {
        for y in 0..oh {
            for x in 0..ow {
                for dy in 0..window {
                    for dx in 0..window {
                        idx.push((c * input.h + y * stride + dy) * input.w + x * stride + dx);
                    }
                }
            }
        }
    }
    Ok(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_consistent() {
        for spec in [
            NetworkSpec::network_a(),
            NetworkSpec::network_b(),
            NetworkSpec::network_c(),
            NetworkSpec::lenet(),
            NetworkSpec::alexnet(),
            NetworkSpec::vgg16(),
        ] {
            spec.validate().unwrap();
            spec.optimized().validate().unwrap();
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(NetworkSpec::network_a().param_count().unwrap(), 118_282);
        assert_eq!(NetworkSpec::network_b().param_count().unwrap(), 99_240);
        assert_eq!(NetworkSpec::lenet().param_count().unwrap(), 431_080);
    }

    #[test]
    fn swap_relu_maxpool() {
        let s = NetworkSpec::network_c().optimized();
        assert_eq!(s.layers[1], pool(2));
        assert_eq!(s.layers[2], LayerSpec::Relu);
    }

    #[test]
    fn output_dims_formula() {
        assert_eq!(out_dim(28, 5, 1, 0).unwrap(), 24);
        assert_eq!(out_dim(28, 5, 2, 2).unwrap(), 14);
        assert_eq!(out_dim(32, 3, 1, 1).unwrap(), 32);
        assert!(out_dim(4, 5, 1, 0).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = NetworkSpec::network_c();
        let back: NetworkSpec = toml::from_str(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn mismatched_config_rejected() {
        let mut s = NetworkSpec::network_a();
        s.layers[2] = fc(100, 128);
        assert!(matches!(s.validate(), Err(Error::Shape(_))));
    }

    #[test]
    fn pool_window_indices() {
        let w = pool_windows(Shape::new(1, 4, 4), 2, 2).unwrap();
        assert_eq!(&w[..8], &[0, 1, 4, 5, 2, 3, 6, 7]);
    }
}
