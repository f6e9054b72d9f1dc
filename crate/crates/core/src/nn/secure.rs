//! Secure forward and backward passes over shared activations.
//!
//! Activations are row-major [batch × per-sample length], each sample in CHW
//! order. FC weights are [in × out], conv weights [out_c × in_c·F·F].

use super::{pool_windows, LayerParams, LayerSpec, NetworkSpec, Shape, Weights};
use crate::error::{Error, Result};
use crate::party::Party;
use crate::protocols::{col2im_indices, transpose, BnCache, ConvGeom};
use crate::rss::{PartyId, Shares};

/// Shared weight and bias of one layer.
#[derive(Clone, Debug)]
pub struct SharedParams {
    pub w: Shares,
    pub b: Shares,
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum LayerCache {
    Fc { input: Shares },
    Conv { cols: Shares },
    Relu { d: Shares },
    Maxpool { onehot: Shares, idx: Vec<usize> },
    BatchNorm(BnCache),
}

pub struct SecureNet {
    pub spec: NetworkSpec,
    pub params: Vec<SharedParams>,
    shapes: Vec<Shape>,
    caches: Vec<Option<LayerCache>>,
    batch: usize,
}

fn conv_geom(l: &LayerSpec, s: Shape) -> ConvGeom {
    let LayerSpec::Conv { filter, stride, pad, .. } = *l else {
        unreachable!("conv layer")
    };
    ConvGeom {
        c: s.c,
        h: s.h,
        w: s.w,
        f: filter,
        stride,
        pad,
    }
}

/// Column sums of a rows×cols matrix.
fn col_sums(x: &Shares, rows: usize, cols: usize) -> Shares {
    let m = x.modulus;
    let mut out = Shares::zeros(m, cols);
    for r in 0..rows {
        for c in 0..cols {
            out.lo[c] = m.add(out.lo[c], x.lo[r * cols + c]);
            out.hi[c] = m.add(out.hi[c], x.hi[r * cols + c]);
        }
    }
    out
}

fn tile(x: &Shares, times: usize) -> Shares {
    let n = x.len();
    x.gather(&(0..times * n).map(|k| k % n).collect::<Vec<_>>())
}

/// [batch, P, C] ↔ [batch, C, P] reorder indices.
fn pixel_major_to_channel_major(batch: usize, pixels: usize, channels: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(batch * pixels * channels);
    for b in 0..batch {
        for c in 0..channels {
            for q in 0..pixels {
                idx.push((b * pixels + q) * channels + c);
            }
        }
    }
    idx
}

impl SecureNet {
    /// Shares plaintext raw weights held by `owner`; the others pass `None`.
    pub fn share(p: &mut Party, spec: &NetworkSpec, owner: PartyId, weights: Option<&Weights<u64>>) -> Result<Self> {
        spec.validate()?;
        let zeros = Weights::<u64>::zeros(spec)?;
        let lens: Vec<(usize, usize)> = zeros.layers.iter().map(|l| (l.w.len(), l.b.len())).collect();
        let total: usize = lens.iter().map(|(a, b)| a + b).sum();
        let flat = match weights {
            Some(w) if p.id == owner => {
                w.check(spec)?;
                Some(w.layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect::<Vec<_>>())
            }
            _ => None,
        };
        let all = p.share_input(owner, flat.as_deref(), total, p.params.l())?;
        let mut at = 0;
        let params = lens
            .iter()
            .map(|&(nw, nb)| {
                let sp = SharedParams {
                    w: all.slice(at, at + nw),
                    b: all.slice(at + nw, at + nw + nb),
                };
                at += nw + nb;
                sp
            })
            .collect();
        Self::from_params(spec, params)
    }

    pub fn from_params(spec: &NetworkSpec, params: Vec<SharedParams>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if params.len() != spec.layers.len() {
            return Err(Error::Shape("one parameter entry per layer".into()));
        }
        Ok(SecureNet {
            spec: spec.clone(),
            caches: vec![None; spec.layers.len()],
            params,
            shapes,
            batch: 0,
        })
    }

    /// Opens the parameters to all parties.
    pub fn reveal_weights(&self, p: &mut Party) -> Result<Weights<u64>> {
        let parts: Vec<&Shares> = self.params.iter().flat_map(|l| [&l.w, &l.b]).collect();
        let all = p.reveal(&Shares::concat(&parts)?)?;
        let mut at = 0;
        Ok(Weights {
            layers: self
                .params
                .iter()
                .map(|l| {
                    let (nw, nb) = (l.w.len(), l.b.len());
                    let lp = LayerParams {
                        w: all[at..at + nw].to_vec(),
                        b: all[at + nw..at + nw + nb].to_vec(),
                    };
                    at += nw + nb;
                    lp
                })
                .collect(),
        })
    }

    /// Logits [batch × classes] for a batch of shared inputs.
    pub fn forward(&mut self, p: &mut Party, x: &Shares, batch: usize) -> Result<Shares> {
        if x.len() != batch * self.spec.input.len() {
            return Err(Error::Shape(format!(
                "input holds {} values, expected {batch} × {}",
                x.len(),
                self.spec.input.len()
            )));
        }
        self.batch = batch;
        let mut a = x.clone();
        for i in 0..self.spec.layers.len() {
            let (y, cache) = p.scope("forward", |p| self.layer_forward(p, i, &a))?;
            self.caches[i] = cache;
            a = y;
        }
        Ok(a)
    }

    fn layer_forward(&self, p: &mut Party, i: usize, a: &Shares) -> Result<(Shares, Option<LayerCache>)> {
        let b = self.batch;
        let (sin, sout) = (self.shapes[i], self.shapes[i + 1]);
        let prm = &self.params[i];
        match self.spec.layers[i] {
            LayerSpec::Fc { inputs, outputs } => {
                let y = p.matmul_fixed(a, &prm.w, b, inputs, outputs)?;
                Ok((y.add(&tile(&prm.b, b))?, Some(LayerCache::Fc { input: a.clone() })))
            }
            ref l @ LayerSpec::Conv { out_channels, .. } => {
                let g = conv_geom(l, sin);
                let pixels = sout.h * sout.w;
                let cols = a.gather_padded(&col2im_indices(&g, b)?);
                let wmat = transpose(&prm.w, out_channels, g.patch_len());
                let y = p.matmul_fixed(&cols, &wmat, b * pixels, g.patch_len(), out_channels)?;
                let y = y.gather(&pixel_major_to_channel_major(b, pixels, out_channels));
                let bias = tile(&prm.b.repeat_each(pixels), b);
                Ok((y.add(&bias)?, Some(LayerCache::Conv { cols })))
            }
            LayerSpec::Relu => {
                let (y, d) = p.relu(a)?;
                Ok((y, Some(LayerCache::Relu { d })))
            }
            ref l @ LayerSpec::Maxpool { window, .. } => {
                let win = pool_windows(sin, window, l.pool_stride())?;
                let n = window * window;
                let idx: Vec<usize> = (0..b)
                    .flat_map(|s| win.iter().map(move |&k| s * sin.len() + k))
                    .collect();
                let (y, onehot) = p.maxpool_argmax(&a.gather(&idx), b * sout.len(), n)?;
                Ok((y, Some(LayerCache::Maxpool { onehot, idx })))
            }
            LayerSpec::BatchNorm => {
                let (y, cache) = p.batch_norm_forward(a, b, sin.len(), &prm.w, &prm.b)?;
                Ok((y, Some(LayerCache::BatchNorm(cache))))
            }
        }
    }

    /// Backpropagates `delta` (∂C/∂logits at scale 2^{f_p}) and returns the
    /// gradients per layer: FC and conv weights at scale 2^{2f_p}, everything
    /// else at 2^{f_p}.
    pub fn backward(&mut self, p: &mut Party, delta: &Shares) -> Result<Vec<SharedParams>> {
        let l = p.params.l();
        let mut grads: Vec<SharedParams> = self
            .params
            .iter()
            .map(|s| SharedParams {
                w: Shares::zeros(l, s.w.len()),
                b: Shares::zeros(l, s.b.len()),
            })
            .collect();
        let mut d = delta.clone();
        for i in (0..self.spec.layers.len()).rev() {
            let cache = self.caches[i].take().ok_or(Error::MissingCache(i))?;
            let need_input = i > 0;
            let (g, din) = p.scope("backward", |p| self.layer_backward(p, i, &d, cache, need_input))?;
            if let Some(g) = g {
                grads[i] = g;
            }
            match din {
                Some(x) => d = x,
                None => break,
            }
        }
        Ok(grads)
    }

    fn layer_backward(
        &self,
        p: &mut Party,
        i: usize,
        d: &Shares,
        cache: LayerCache,
        need_input: bool,
    ) -> Result<(Option<SharedParams>, Option<Shares>)> {
        let b = self.batch;
        let (sin, sout) = (self.shapes[i], self.shapes[i + 1]);
        let prm = &self.params[i];
        match (&self.spec.layers[i], cache) {
            (&LayerSpec::Fc { inputs, outputs }, LayerCache::Fc { input }) => {
                let dw = p.matmul(&transpose(&input, b, inputs), d, inputs, b, outputs)?;
                let db = col_sums(d, b, outputs);
                let din = if need_input {
                    Some(p.matmul_fixed(d, &transpose(&prm.w, inputs, outputs), b, outputs, inputs)?)
                } else {
                    None
                };
                Ok((Some(SharedParams { w: dw, b: db }), din))
            }
            (l @ &LayerSpec::Conv { out_channels, .. }, LayerCache::Conv { cols }) => {
                let g = conv_geom(l, sin);
                let (pixels, patch) = (sout.h * sout.w, g.patch_len());
                let rows = b * pixels;
                // δ back to [batch·P × out_c]
                let order = pixel_major_to_channel_major(b, pixels, out_channels);
                let mut inv = vec![0usize; order.len()];
                for (k, &o) in order.iter().enumerate() {
                    inv[o] = k;
                }
                let dm = d.gather(&inv);
                let dwm = p.matmul(&transpose(&cols, rows, patch), &dm, patch, rows, out_channels)?;
                let dw = transpose(&dwm, patch, out_channels);
                let db = col_sums(&dm, rows, out_channels);
                let din = if need_input {
                    let wmat = transpose(&prm.w, out_channels, patch);
                    let dcols = p.matmul(&dm, &transpose(&wmat, patch, out_channels), rows, out_channels, patch)?;
                    let summed = dcols.scatter_add(&col2im_indices(&g, b)?, b * sin.len());
                    Some(p.truncate(&summed, p.params.fp)?)
                } else {
                    None
                };
                Ok((Some(SharedParams { w: dw, b: db }), din))
            }
            (LayerSpec::Relu, LayerCache::Relu { d: mask }) => Ok((None, Some(p.mult(d, &mask)?))),
            (LayerSpec::Maxpool { window, .. }, LayerCache::Maxpool { onehot, idx }) => {
                let n = window * window;
                let routed = p.mult(&onehot, &d.repeat_each(n))?;
                let pos: Vec<Option<usize>> = idx.iter().map(|&k| Some(k)).collect();
                Ok((None, Some(routed.scatter_add(&pos, b * sin.len()))))
            }
            (LayerSpec::BatchNorm, LayerCache::BatchNorm(cache)) => {
                let (dx, dgamma, dbeta) = p.batch_norm_backward(d, &cache)?;
                Ok((Some(SharedParams { w: dgamma, b: dbeta }), Some(dx)))
            }
            _ => Err(Error::MissingCache(i)),
        }
    }

    /// W ← W − grad ≫ (f_p + lr_shift) for FC/conv weights and
    /// θ ← θ − grad ≫ lr_shift for biases and batch-norm parameters, in one
    /// batched truncation.
    pub fn sgd_step(&mut self, p: &mut Party, grads: &[SharedParams], lr_shift: u32) -> Result<()> {
        let fp = p.params.fp;
        let mut parts = Vec::new();
        let mut shifts = Vec::new();
        for (l, g) in self.spec.layers.iter().zip(grads) {
            let wshift = match l {
                LayerSpec::Fc { .. } | LayerSpec::Conv { .. } => fp + lr_shift,
                _ => lr_shift,
            };
            shifts.extend(std::iter::repeat_n(wshift, g.w.len()));
            shifts.extend(std::iter::repeat_n(lr_shift, g.b.len()));
            parts.push(&g.w);
            parts.push(&g.b);
        }
        let all = Shares::concat(&parts)?;
        let step = p.scope("sgd", |p| p.truncate_by(&all, &shifts, false))?;
        let mut at = 0;
        for prm in &mut self.params {
            let (nw, nb) = (prm.w.len(), prm.b.len());
            prm.w = prm.w.sub(&step.slice(at, at + nw))?;
            prm.b = prm.b.sub(&step.slice(at + nw, at + nw + nb))?;
            at += nw + nb;
        }
        Ok(())
    }
}

impl Party {
    /// δ = ASM(logits) − onehot, ASM(x)_i = ReLU(x_i) / Σ_j ReLU(x_j), with
    /// the uniform distribution for samples whose ReLU sum is zero. Both
    /// inputs are [batch × classes] at scale 2^{f_p}.
    pub fn loss_grad_approx(&mut self, logits: &Shares, onehot: &Shares, classes: usize) -> Result<Shares> {
        if logits.len() != onehot.len() || !logits.len().is_multiple_of(classes) {
            return Err(Error::Shape("logits and labels disagree".into()));
        }
        let batch = logits.len() / classes;
        self.scope("loss", |p| {
            let one = 1u64 << p.params.fp;
            let (r, _) = p.relu(logits)?;
            let sums = col_sums(&transpose(&r, batch, classes), classes, batch);
            let empty = p.drelu(&sums.neg())?;
            let z = p.bit_to_ring(&empty)?;
            let num = r.add(&z.repeat_each(classes).mul_const(one))?;
            let den = sums.add(&z.mul_const(classes as u64 * one))?;
            let q = p.divide(&num, &den.repeat_each(classes))?;
            q.sub(onehot)
        })
    }
}
