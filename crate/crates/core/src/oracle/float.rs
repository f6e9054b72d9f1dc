//! 64-bit float mirror of the layer semantics, plus a plaintext pretrainer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::argmax_f64;
use crate::error::{Error, Result};
use crate::nn::{pool_windows, Dataset, LayerParams, LayerSpec, NetworkSpec, Shape, Weights};

const BN_EPSILON: f64 = 1.0 / 1024.0;

#[derive(Clone, Debug)]
enum Cache {
    Input(Vec<f64>),
    Relu(Vec<bool>),
    Maxpool(Vec<usize>),
    BatchNorm { xhat: Vec<f64>, inv: Vec<f64> },
}

pub struct FloatNet {
    pub spec: NetworkSpec,
    pub weights: Weights<f64>,
    shapes: Vec<Shape>,
    caches: Vec<Option<Cache>>,
    batch: usize,
}

/// Geometry of one convolution: (in_c, out_c, filter, stride, pad).
fn conv_params(l: &LayerSpec) -> (usize, usize, usize, usize, usize) {
    match *l {
        LayerSpec::Conv {
            in_channels,
            out_channels,
            filter,
            stride,
            pad,
        } => (in_channels, out_channels, filter, stride, pad),
        _ => unreachable!("conv layer"),
    }
}

/// Calls `visit(o, out_index, w_index, in_index)` for every valid tap of a
/// convolution over one image.
fn conv_taps(l: &LayerSpec, sin: Shape, sout: Shape, mut visit: impl FnMut(usize, usize, usize, usize)) {
    let (ic, oc, f, stride, pad) = conv_params(l);
    for o in 0..oc {
        for oy in 0..sout.h {
            for ox in 0..sout.w {
                let out = (o * sout.h + oy) * sout.w + ox;
                for c in 0..ic {
                    for fy in 0..f {
                        let iy = (oy * stride + fy) as isize - pad as isize;
                        if iy < 0 || iy as usize >= sin.h {
                            continue;
                        }
                        for fx in 0..f {
                            let ix = (ox * stride + fx) as isize - pad as isize;
                            if ix < 0 || ix as usize >= sin.w {
                                continue;
                            }
                            let wi = ((o * ic + c) * f + fy) * f + fx;
                            visit(o, out, wi, (c * sin.h + iy as usize) * sin.w + ix as usize);
                        }
                    }
                }
            }
        }
    }
}

impl FloatNet {
    pub fn new(spec: &NetworkSpec, weights: Weights<f64>) -> Result<Self> {
        spec.validate()?;
        weights.check(spec)?;
        Ok(FloatNet {
            spec: spec.clone(),
            weights,
            shapes: spec.shapes()?,
            caches: vec![None; spec.layers.len()],
            batch: 0,
        })
    }

    pub fn forward(&mut self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.forward_until(x, batch, self.spec.layers.len())
    }

    /// Output of the first `upto` layers.
    pub fn forward_until(&mut self, x: &[f64], batch: usize, upto: usize) -> Result<Vec<f64>> {
        if x.len() != batch * self.spec.input.len() {
            return Err(Error::Shape("float input size".into()));
        }
        self.batch = batch;
        let mut a = x.to_vec();
        for i in 0..upto {
            let (y, c) = self.layer_forward(i, a)?;
            self.caches[i] = Some(c);
            a = y;
        }
        Ok(a)
    }

    fn layer_forward(&self, i: usize, a: Vec<f64>) -> Result<(Vec<f64>, Cache)> {
        let nb = self.batch;
        let (sin, sout) = (self.shapes[i], self.shapes[i + 1]);
        let LayerParams { w, b } = &self.weights.layers[i];
        let l = &self.spec.layers[i];
        match *l {
            LayerSpec::Fc { inputs, outputs } => {
                let mut y = vec![0.0; nb * outputs];
                for s in 0..nb {
                    let row = &mut y[s * outputs..(s + 1) * outputs];
                    row.copy_from_slice(b);
                    for k in 0..inputs {
                        let v = a[s * inputs + k];
                        if v != 0.0 {
                            for (o, r) in row.iter_mut().enumerate() {
                                *r += v * w[k * outputs + o];
                            }
                        }
                    }
                }
                Ok((y, Cache::Input(a)))
            }
            LayerSpec::Conv { .. } => {
                let (ilen, olen) = (sin.len(), sout.len());
                let mut y = vec![0.0; nb * olen];
                for s in 0..nb {
                    let (img, out) = (&a[s * ilen..(s + 1) * ilen], &mut y[s * olen..(s + 1) * olen]);
                    conv_taps(l, sin, sout, |_, o, wi, k| out[o] += img[k] * w[wi]);
                    for (o, v) in out.iter_mut().enumerate() {
                        *v += b[o / (sout.h * sout.w)];
                    }
                }
                Ok((y, Cache::Input(a)))
            }
            LayerSpec::Relu => {
                let d: Vec<bool> = a.iter().map(|&v| v >= 0.0).collect();
                Ok((a.iter().map(|&v| v.max(0.0)).collect(), Cache::Relu(d)))
            }
            LayerSpec::Maxpool { window, .. } => {
                let win = pool_windows(sin, window, l.pool_stride())?;
                let n = window * window;
                let mut y = Vec::with_capacity(nb * sout.len());
                let mut arg = Vec::with_capacity(nb * sout.len());
                for s in 0..nb {
                    for cell in win.chunks(n) {
                        let vals: Vec<f64> = cell.iter().map(|&k| a[s * sin.len() + k]).collect();
                        let j = argmax_f64(&vals);
                        y.push(vals[j]);
                        arg.push(s * sin.len() + cell[j]);
                    }
                }
                Ok((y, Cache::Maxpool(arg)))
            }
            LayerSpec::BatchNorm => {
                let n = sin.len();
                let m = nb as f64;
                let mut mean = vec![0.0; n];
                let mut var = vec![0.0; n];
                for (k, &v) in a.iter().enumerate() {
                    mean[k % n] += v / m;
                }
                for (k, &v) in a.iter().enumerate() {
                    var[k % n] += (v - mean[k % n]).powi(2) / m;
                }
                let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                let xhat: Vec<f64> = a.iter().enumerate().map(|(k, &v)| (v - mean[k % n]) * inv[k % n]).collect();
                let y = xhat.iter().enumerate().map(|(k, &x)| x * w[k % n] + b[k % n]).collect();
                Ok((y, Cache::BatchNorm { xhat, inv }))
            }
        }
    }

    /// Gradients of Σ δ·logits summed over the batch.
    pub fn backward(&mut self, delta: &[f64]) -> Result<Weights<f64>> {
        let mut grads = self.weights.map(|_| 0.0);
        let mut d = delta.to_vec();
        let nb = self.batch;
        for i in (0..self.spec.layers.len()).rev() {
            let cache = self.caches[i].take().ok_or(Error::MissingCache(i))?;
            let (sin, sout) = (self.shapes[i], self.shapes[i + 1]);
            let LayerParams { w, .. } = &self.weights.layers[i];
            let l = &self.spec.layers[i];
            d = match (l, cache) {
                (&LayerSpec::Fc { inputs, outputs }, Cache::Input(x)) => {
                    let g = &mut grads.layers[i];
                    let mut din = vec![0.0; nb * inputs];
                    for s in 0..nb {
                        for o in 0..outputs {
                            let dv = d[s * outputs + o];
                            g.b[o] += dv;
                            if dv == 0.0 {
                                continue;
                            }
                            for k in 0..inputs {
                                g.w[k * outputs + o] += x[s * inputs + k] * dv;
                                din[s * inputs + k] += dv * w[k * outputs + o];
                            }
                        }
                    }
                    din
                }
                (LayerSpec::Conv { .. }, Cache::Input(x)) => {
                    let (ilen, olen) = (sin.len(), sout.len());
                    let g = &mut grads.layers[i];
                    let mut din = vec![0.0; nb * ilen];
                    for s in 0..nb {
                        let (img, ds) = (&x[s * ilen..(s + 1) * ilen], &d[s * olen..(s + 1) * olen]);
                        let di = &mut din[s * ilen..(s + 1) * ilen];
                        conv_taps(l, sin, sout, |_, o, wi, k| {
                            g.w[wi] += ds[o] * img[k];
                            di[k] += ds[o] * w[wi];
                        });
                        for (o, &v) in ds.iter().enumerate() {
                            g.b[o / (sout.h * sout.w)] += v;
                        }
                    }
                    din
                }
                (LayerSpec::Relu, Cache::Relu(mask)) => d.iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect(),
                (LayerSpec::Maxpool { .. }, Cache::Maxpool(arg)) => {
                    let mut din = vec![0.0; nb * sin.len()];
                    for (&k, &v) in arg.iter().zip(&d) {
                        din[k] += v;
                    }
                    din
                }
                (LayerSpec::BatchNorm, Cache::BatchNorm { xhat, inv }) => {
                    let n = sin.len();
                    let m = nb as f64;
                    let g = &mut grads.layers[i];
                    let mut mean_d = vec![0.0; n];
                    let mut mean_dx = vec![0.0; n];
                    for k in 0..d.len() {
                        g.b[k % n] += d[k];
                        g.w[k % n] += d[k] * xhat[k];
                        let dxh = d[k] * w[k % n];
                        mean_d[k % n] += dxh / m;
                        mean_dx[k % n] += dxh * xhat[k] / m;
                    }
                    (0..d.len())
                        .map(|k| (d[k] * w[k % n] - mean_d[k % n] - xhat[k] * mean_dx[k % n]) * inv[k % n])
                        .collect()
                }
                _ => unreachable!("cache kind follows the layer kind"),
            };
        }
        Ok(grads)
    }
}

/// Softmax cross-entropy gradient (mean over the batch) and the summed loss.
fn softmax_xent(logits: &[f64], labels: &[u8], classes: usize) -> (Vec<f64>, f64) {
    let nb = labels.len() as f64;
    let mut grad = Vec::with_capacity(logits.len());
    let mut loss = 0.0;
    for (row, &y) in logits.chunks(classes).zip(labels) {
        let mx = row.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = row.iter().map(|&v| (v - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        loss -= (e[y as usize] / z).ln();
        for (c, &v) in e.iter().enumerate() {
            grad.push((v / z - (c == y as usize) as u8 as f64) / nb);
        }
    }
    (grad, loss)
}

#[derive(Clone, Debug)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Largest |pre-activation| per weighted layer after rebalancing.
    pub target: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 3,
            batch: 32,
            lr: 0.05,
            seed: 1,
            target: 4.0,
        }
    }
}

/// Float SGD with softmax cross-entropy, then [`rebalance`]. Reports the
/// mean loss of each epoch through `progress`.
pub fn pretrain(
    spec: &NetworkSpec,
    data: &Dataset,
    cfg: &PretrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<Weights<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let weights = Weights::xavier(spec, &[], &mut rng)?;
    let mut net = FloatNet::new(spec, weights)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch) {
            let x = data.batch(idx);
            let labels: Vec<u8> = idx.iter().map(|&i| data.labels[i]).collect();
            let logits = net.forward(&x, idx.len())?;
            let (delta, loss) = softmax_xent(&logits, &labels, spec.classes);
            total += loss;
            let g = net.backward(&delta)?;
            for (p, g) in net.weights.layers.iter_mut().zip(&g.layers) {
                for (w, dw) in p.w.iter_mut().zip(&g.w) {
                    *w -= cfg.lr * dw;
                }
                for (b, db) in p.b.iter_mut().zip(&g.b) {
                    *b -= cfg.lr * db;
                }
            }
        }
        progress(epoch, total / data.len() as f64);
    }
    let sample: Vec<usize> = (0..data.len().min(1000)).collect();
    rebalance(spec, &net.weights, &data.batch(&sample), sample.len(), cfg.target)
}

/// Rescales each weighted layer so its largest pre-activation on `x` is
/// `target`, using the positive homogeneity of ReLU and max-pool. The
/// network's argmax and relative output error are unchanged; the logits are
/// scaled by a positive constant. Networks with batch norm are returned as is.
pub fn rebalance(spec: &NetworkSpec, w: &Weights<f64>, x: &[f64], batch: usize, target: f64) -> Result<Weights<f64>> {
    if spec.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm)) {
        return Ok(w.clone());
    }
    let mut out = w.clone();
    let mut acc = 1.0;
    for i in 0..spec.layers.len() {
        if !matches!(spec.layers[i], LayerSpec::Fc { .. } | LayerSpec::Conv { .. }) {
            continue;
        }
        let mut net = FloatNet::new(spec, w.clone())?;
        let pre = net.forward_until(x, batch, i + 1)?;
        let peak = pre.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak == 0.0 {
            continue;
        }
        let c = target / (acc * peak);
        for v in &mut out.layers[i].w {
            *v *= c;
        }
        for v in &mut out.layers[i].b {
            *v *= acc * c;
        }
        acc *= c;
    }
    Ok(out)
}

/// Fraction of `data` classified correctly.
pub fn accuracy(spec: &NetworkSpec, w: &Weights<f64>, data: &Dataset) -> Result<f64> {
    let mut net = FloatNet::new(spec, w.clone())?;
    let mut hits = 0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(100) {
        let logits = net.forward(&data.batch(chunk), chunk.len())?;
        for (row, &i) in logits.chunks(spec.classes).zip(chunk) {
            hits += (argmax_f64(row) == data.labels[i] as usize) as usize;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_fc_passes_input() {
        let spec = NetworkSpec {
            name: "id".into(),
            input: Shape::flat(3),
            classes: 3,
            layers: vec![LayerSpec::Fc { inputs: 3, outputs: 3 }],
            batch: 1,
            lr_shift: 0,
        };
        let mut w = Weights::<f64>::zeros(&spec).unwrap();
        for k in 0..3 {
            w.layers[0].w[k * 3 + k] = 1.0;
        }
        let mut net = FloatNet::new(&spec, w).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5], 1).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn rebalance_keeps_direction() {
        let spec = NetworkSpec::network_a();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let w = Weights::xavier(&spec, &[], &mut rng).unwrap();
        let x: Vec<f64> = (0..784 * 4).map(|k| (k % 7) as f64 / 7.0).collect();
        let r = rebalance(&spec, &w, &x, 4, 4.0).unwrap();
        let a = FloatNet::new(&spec, w).unwrap().forward(&x, 4).unwrap();
        let b = FloatNet::new(&spec, r).unwrap().forward(&x, 4).unwrap();
        let ratio = b[0] / a[0];
        for (u, v) in a.iter().zip(&b) {
            assert!((v - ratio * u).abs() < 1e-9 * (1.0 + v.abs()));
        }
        assert!((b.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 4.0).abs() < 1e-9);
    }
}
