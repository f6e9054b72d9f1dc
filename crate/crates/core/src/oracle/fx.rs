//! Bit-exact plaintext twin of the secure engine.
//!
//! Values live in i64 as ℓ-bit two's complement. Matrix products and
//! convolutions truncate by flooring after the full sum; the numeric kernels
//! round half up at every internal truncation, as the secure kernels do.

use crate::error::{Error, Result};
use crate::nn::{pool_windows, LayerParams, LayerSpec, NetworkSpec, Shape, Weights};
use crate::rings::RingParams;

const DIV_W0: f64 = 2.9142;
const NEWTON_ITERS: usize = 4;
const BN_EPSILON: f64 = 1.0 / 1024.0;

/// Fixed-point arithmetic over Z_{2^ℓ} with f fractional bits.
#[derive(Clone, Copy, Debug)]
pub struct Fx {
    pub params: RingParams,
}

impl Fx {
    pub fn new(params: RingParams) -> Self {
        Fx { params }
    }

    fn f(&self) -> u32 {
        self.params.fp
    }

    pub fn one(&self) -> i64 {
        1i64 << self.f()
    }

    /// Reduces to the signed ℓ-bit representative.
    pub fn wrap(&self, v: i128) -> i64 {
        let ell = self.params.ell;
        let m = 1i128 << ell;
        let r = v.rem_euclid(m);
        (if r >= m / 2 { r - m } else { r }) as i64
    }

    pub fn from_raw(&self, r: u64) -> i64 {
        self.params.signed(r)
    }

    pub fn to_raw(&self, v: i64) -> u64 {
        self.params.from_signed(v)
    }

    pub fn constant(&self, real: f64) -> i64 {
        self.from_raw(self.params.constant(real))
    }

    pub fn add(&self, a: i64, b: i64) -> i64 {
        self.wrap(a as i128 + b as i128)
    }

    pub fn sub(&self, a: i64, b: i64) -> i64 {
        self.wrap(a as i128 - b as i128)
    }

    pub fn mul(&self, a: i64, b: i64) -> i64 {
        self.wrap(a as i128 * b as i128)
    }

    pub fn trunc(&self, x: i64, d: u32) -> i64 {
        x >> d
    }

    pub fn trunc_round(&self, x: i64, d: u32) -> i64 {
        if d == 0 {
            return x;
        }
        self.wrap(x as i128 + (1i128 << (d - 1))) >> d
    }

    pub fn mul_round(&self, a: i64, b: i64) -> i64 {
        self.trunc_round(self.mul(a, b), self.f())
    }

    /// x · 2^e; negative exponents shift right, rounding if asked.
    pub fn scale(&self, x: i64, e: i32, round: bool) -> i64 {
        if e > 0 {
            self.wrap((x as i128) << e)
        } else if round {
            self.trunc_round(x, (-e) as u32)
        } else {
            self.trunc(x, (-e) as u32)
        }
    }

    pub fn drelu(&self, x: i64) -> bool {
        x >= 0
    }

    pub fn relu(&self, x: i64) -> i64 {
        x.max(0)
    }

    /// α with 2^α ≤ x < 2^{α+1}.
    pub fn pow(&self, x: i64) -> Result<u32> {
        if x < 1 {
            return Err(Error::Domain("bounding power needs a positive input".into()));
        }
        Ok(63 - x.leading_zeros())
    }

    pub fn divide(&self, a: i64, b: i64) -> Result<i64> {
        let f = self.f() as i32;
        let one = self.one();
        let alpha = self.pow(b)?;
        let x = self.scale(b, f - alpha as i32 - 1, false);
        let w0 = self.sub(self.constant(DIV_W0), self.mul(2, x));
        let e0 = self.sub(one, self.mul_round(x, w0));
        let e1 = self.mul_round(e0, e0);
        let t1 = self.mul_round(w0, self.add(e0, one));
        let inv = self.mul_round(t1, self.add(e1, one));
        Ok(self.trunc_round(self.mul(a, inv), alpha + 1))
    }

    fn half_scale(&self, b: i64) -> Result<i32> {
        let f = self.f() as i32;
        Ok((self.pow(b)? as i32 - f + 1).div_euclid(2))
    }

    pub fn inv_sqrt(&self, b: i64) -> Result<i64> {
        let f = self.f();
        let k = self.half_scale(b)?;
        let bn = self.scale(b, -2 * k, true);
        let mut x = self.one();
        for _ in 0..NEWTON_ITERS {
            let x2 = self.mul_round(x, x);
            let t = self.mul_round(bn, x2);
            let u = self.sub(3 * self.one(), t);
            x = self.trunc_round(self.mul(x, u), f + 1);
        }
        Ok(self.scale(x, -k, true))
    }

    pub fn sqrt(&self, a: i64) -> Result<i64> {
        let k = self.half_scale(a)?;
        let an = self.scale(a, -2 * k, true);
        let mut x = self.one();
        for _ in 0..NEWTON_ITERS {
            let q = self.divide(an, x)?;
            x = self.trunc_round(self.add(x, q), 1);
        }
        Ok(self.scale(x, k, true))
    }

    /// Maximum and earliest argmax, decided by the sign of the difference
    /// exactly as the secure comparison does.
    pub fn max_index(&self, v: &[i64]) -> (i64, usize) {
        let mut best = (v[0], 0);
        for (i, &a) in v.iter().enumerate().skip(1) {
            if !self.drelu(self.sub(best.0, a)) {
                best = (a, i);
            }
        }
        best
    }

    fn sum(&self, it: impl Iterator<Item = i64>) -> i64 {
        self.wrap(it.map(|v| v as i128).sum())
    }

    /// Per-feature sums over the batch of [batch × features].
    fn col_sums(&self, x: &[i64], batch: usize, features: usize) -> Vec<i64> {
        (0..features)
            .map(|c| self.sum((0..batch).map(|b| x[b * features + c])))
            .collect()
    }

    pub fn batch_norm_forward(
        &self,
        a: &[i64],
        batch: usize,
        features: usize,
        gamma: &[i64],
        beta: &[i64],
    ) -> Result<(Vec<i64>, FxBn)> {
        let f = self.f();
        let inv_m = self.constant(1.0 / batch as f64);
        let mean: Vec<i64> = self
            .col_sums(a, batch, features)
            .iter()
            .map(|&s| self.trunc_round(self.mul(s, inv_m), f))
            .collect();
        let diff: Vec<i64> = a.iter().enumerate().map(|(k, &v)| self.sub(v, mean[k % features])).collect();
        let sq: Vec<i64> = diff.iter().map(|&d| self.mul_round(d, d)).collect();
        let eps = self.constant(BN_EPSILON);
        let inv = self
            .col_sums(&sq, batch, features)
            .iter()
            .map(|&s| self.inv_sqrt(self.add(self.trunc_round(self.mul(s, inv_m), f), eps)))
            .collect::<Result<Vec<_>>>()?;
        let xhat: Vec<i64> = diff.iter().enumerate().map(|(k, &d)| self.mul_round(d, inv[k % features])).collect();
        let out = xhat
            .iter()
            .enumerate()
            .map(|(k, &x)| self.add(self.mul_round(x, gamma[k % features]), beta[k % features]))
            .collect();
        Ok((
            out,
            FxBn {
                xhat,
                inv,
                gamma: gamma.to_vec(),
                batch,
            },
        ))
    }

    /// (dx, dγ, dβ).
    pub fn batch_norm_backward(&self, dy: &[i64], c: &FxBn) -> (Vec<i64>, Vec<i64>, Vec<i64>) {
        let f = self.f();
        let (m, n) = (c.batch, c.gamma.len());
        let inv_m = self.constant(1.0 / m as f64);
        let dbeta = self.col_sums(dy, m, n);
        let r0: Vec<i64> = dy.iter().zip(&c.xhat).map(|(&d, &x)| self.mul_round(d, x)).collect();
        let dgamma = self.col_sums(&r0, m, n);
        let dxhat: Vec<i64> = dy.iter().enumerate().map(|(k, &d)| self.mul_round(d, c.gamma[k % n])).collect();
        let t: Vec<i64> = dxhat.iter().zip(&c.xhat).map(|(&d, &x)| self.mul_round(d, x)).collect();
        let mean = |v: &[i64]| -> Vec<i64> {
            self.col_sums(v, m, n)
                .iter()
                .map(|&s| self.trunc_round(self.mul(s, inv_m), f))
                .collect()
        };
        let (mean_d, mean_dx) = (mean(&dxhat), mean(&t));
        let dx = (0..m * n)
            .map(|k| {
                let corr = self.mul_round(c.xhat[k], mean_dx[k % n]);
                let centered = self.sub(self.sub(dxhat[k], mean_d[k % n]), corr);
                self.mul_round(centered, c.inv[k % n])
            })
            .collect();
        (dx, dgamma, dbeta)
    }

    /// ASM(logits) − onehot, both [batch × classes] at scale 2^f.
    pub fn loss_grad(&self, logits: &[i64], onehot: &[i64], classes: usize) -> Result<Vec<i64>> {
        let one = self.one();
        let mut out = Vec::with_capacity(logits.len());
        for (row, hot) in logits.chunks(classes).zip(onehot.chunks(classes)) {
            let r: Vec<i64> = row.iter().map(|&v| self.relu(v)).collect();
            let s = self.sum(r.iter().copied());
            let z = self.drelu(self.sub(0, s)) as i64;
            let den = self.add(s, self.mul(z, classes as i64 * one));
            for (&ri, &h) in r.iter().zip(hot) {
                let q = self.divide(self.add(ri, z * one), den)?;
                out.push(self.sub(q, h));
            }
        }
        Ok(out)
    }
}

/// Batch-norm values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct FxBn {
    pub xhat: Vec<i64>,
    pub inv: Vec<i64>,
    pub gamma: Vec<i64>,
    pub batch: usize,
}

#[derive(Clone, Debug)]
pub enum FxCache {
    Fc { input: Vec<i64> },
    Conv { input: Vec<i64> },
    Relu { d: Vec<bool> },
    Maxpool { arg: Vec<usize> },
    BatchNorm(FxBn),
}

/// Plaintext network evaluated with the secure engine's exact arithmetic.
pub struct FxNet {
    pub spec: NetworkSpec,
    pub fx: Fx,
    pub weights: Weights<i64>,
    shapes: Vec<Shape>,
    caches: Vec<Option<FxCache>>,
    batch: usize,
}

struct ConvDims {
    ic: usize,
    oc: usize,
    f: usize,
    stride: usize,
    pad: usize,
    input: Shape,
}

impl ConvDims {
    /// Input offset within one image for (c, oy, ox, fy, fx), if not padding.
    fn src(&self, c: usize, oy: usize, ox: usize, fy: usize, fx: usize) -> Option<usize> {
        let iy = (oy * self.stride + fy) as isize - self.pad as isize;
        let ix = (ox * self.stride + fx) as isize - self.pad as isize;
        let s = self.input;
        (iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w)
            .then(|| (c * s.h + iy as usize) * s.w + ix as usize)
    }

    fn widx(&self, o: usize, c: usize, fy: usize, fx: usize) -> usize {
        ((o * self.ic + c) * self.f + fy) * self.f + fx
    }
}

impl FxNet {
    /// Weights as raw ring elements.
    pub fn new(spec: &NetworkSpec, params: RingParams, raw: &Weights<u64>) -> Result<Self> {
        spec.validate()?;
        raw.check(spec)?;
        let fx = Fx::new(params);
        Ok(FxNet {
            spec: spec.clone(),
            fx,
            weights: raw.map(|&r| fx.from_raw(r)),
            shapes: spec.shapes()?,
            caches: vec![None; spec.layers.len()],
            batch: 0,
        })
    }

    pub fn raw_weights(&self) -> Weights<u64> {
        self.weights.map(|&v| self.fx.to_raw(v))
    }

    fn conv_dims(&self, i: usize) -> ConvDims {
        let LayerSpec::Conv {
            in_channels,
            out_channels,
            filter,
            stride,
            pad,
        } = self.spec.layers[i]
        else {
            unreachable!("conv layer")
        };
        ConvDims {
            ic: in_channels,
            oc: out_channels,
            f: filter,
            stride,
            pad,
            input: self.shapes[i],
        }
    }

    /// Logits for a batch of inputs, [batch × input length] at scale 2^f.
    pub fn forward(&mut self, x: &[i64], batch: usize) -> Result<Vec<i64>> {
        if x.len() != batch * self.spec.input.len() {
            return Err(Error::Shape("oracle input size".into()));
        }
        self.batch = batch;
        let mut a = x.to_vec();
        for i in 0..self.spec.layers.len() {
            let (y, cache) = self.layer_forward(i, a)?;
            self.caches[i] = Some(cache);
            a = y;
        }
        Ok(a)
    }

    fn layer_forward(&self, i: usize, a: Vec<i64>) -> Result<(Vec<i64>, FxCache)> {
        let fx = &self.fx;
        let f = fx.params.fp;
        let nb = self.batch;
        let (sin, sout) = (self.shapes[i], self.shapes[i + 1]);
        let LayerParams { w, b } = &self.weights.layers[i];
        match self.spec.layers[i] {
            LayerSpec::Fc { inputs, outputs } => {
                let mut y = vec![0i64; nb * outputs];
                for s in 0..nb {
                    for o in 0..outputs {
                        let acc = fx.sum((0..inputs).map(|k| a[s * inputs + k].wrapping_mul(w[k * outputs + o])));
                        y[s * outputs + o] = fx.add(fx.trunc(acc, f), b[o]);
                    }
                }
                Ok((y, FxCache::Fc { input: a }))
            }
            LayerSpec::Conv { .. } => {
                let g = self.conv_dims(i);
                let (ilen, olen) = (sin.len(), sout.len());
                let mut y = vec![0i64; nb * olen];
                for s in 0..nb {
                    let img = &a[s * ilen..(s + 1) * ilen];
                    for o in 0..g.oc {
                        for oy in 0..sout.h {
                            for ox in 0..sout.w {
                                let mut acc = 0i64;
                                for c in 0..g.ic {
                                    for fy in 0..g.f {
                                        for fxx in 0..g.f {
                                            if let Some(k) = g.src(c, oy, ox, fy, fxx) {
                                                acc = acc.wrapping_add(img[k].wrapping_mul(w[g.widx(o, c, fy, fxx)]));
                                            }
                                        }
                                    }
                                }
                                let acc = fx.wrap(acc as i128);
                                y[s * olen + (o * sout.h + oy) * sout.w + ox] = fx.add(fx.trunc(acc, f), b[o]);
                            }
                        }
                    }
                }
                Ok((y, FxCache::Conv { input: a }))
            }
            LayerSpec::Relu => {
                let d: Vec<bool> = a.iter().map(|&v| fx.drelu(v)).collect();
                Ok((a.iter().map(|&v| fx.relu(v)).collect(), FxCache::Relu { d }))
            }
            ref l @ LayerSpec::Maxpool { window, .. } => {
                let win = pool_windows(sin, window, l.pool_stride())?;
                let n = window * window;
                let mut y = Vec::with_capacity(nb * sout.len());
                let mut arg = Vec::with_capacity(nb * sout.len());
                for s in 0..nb {
                    for cell in win.chunks(n) {
                        let vals: Vec<i64> = cell.iter().map(|&k| a[s * sin.len() + k]).collect();
                        let (m, j) = fx.max_index(&vals);
                        y.push(m);
                        arg.push(s * sin.len() + cell[j]);
                    }
                }
                Ok((y, FxCache::Maxpool { arg }))
            }
            LayerSpec::BatchNorm => {
                let (y, c) = fx.batch_norm_forward(&a, nb, sin.len(), w, b)?;
                Ok((y, FxCache::BatchNorm(c)))
            }
        }
    }

    /// Gradients per layer, with the same scales as the secure backward pass.
    pub fn backward(&mut self, delta: &[i64]) -> Result<Weights<i64>> {
        let mut grads = self.weights.map(|_| 0i64);
        let mut d = delta.to_vec();
        for i in (0..self.spec.layers.len()).rev() {
            let cache = self.caches[i].take().ok_or(Error::MissingCache(i))?;
            let (g, din) = self.layer_backward(i, &d, cache, i > 0);
            if let Some(g) = g {
                grads.layers[i] = g;
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
        i: usize,
        d: &[i64],
        cache: FxCache,
        need_input: bool,
    ) -> (Option<LayerParams<i64>>, Option<Vec<i64>>) {
        let fx = &self.fx;
        let f = fx.params.fp;
        let nb = self.batch;
        let (sin, sout) = (self.shapes[i], self.shapes[i + 1]);
        let w = &self.weights.layers[i].w;
        match (&self.spec.layers[i], cache) {
            (&LayerSpec::Fc { inputs, outputs }, FxCache::Fc { input }) => {
                let mut dw = vec![0i64; inputs * outputs];
                for k in 0..inputs {
                    for o in 0..outputs {
                        dw[k * outputs + o] =
                            fx.sum((0..nb).map(|s| input[s * inputs + k].wrapping_mul(d[s * outputs + o])));
                    }
                }
                let db = fx.col_sums(d, nb, outputs);
                let din = need_input.then(|| {
                    let mut v = vec![0i64; nb * inputs];
                    for s in 0..nb {
                        for k in 0..inputs {
                            let acc = fx.sum((0..outputs).map(|o| d[s * outputs + o].wrapping_mul(w[k * outputs + o])));
                            v[s * inputs + k] = fx.trunc(acc, f);
                        }
                    }
                    v
                });
                (Some(LayerParams { w: dw, b: db }), din)
            }
            (LayerSpec::Conv { .. }, FxCache::Conv { input }) => {
                let g = self.conv_dims(i);
                let (ilen, olen) = (sin.len(), sout.len());
                let (ho, wo) = (sout.h, sout.w);
                let mut dw = vec![0i64; w.len()];
                let mut db = vec![0i64; g.oc];
                let mut din = vec![0i64; nb * ilen];
                for s in 0..nb {
                    for o in 0..g.oc {
                        for oy in 0..ho {
                            for ox in 0..wo {
                                let dv = d[s * olen + (o * ho + oy) * wo + ox];
                                db[o] = db[o].wrapping_add(dv);
                                for c in 0..g.ic {
                                    for fy in 0..g.f {
                                        for fxx in 0..g.f {
                                            if let Some(k) = g.src(c, oy, ox, fy, fxx) {
                                                let wi = g.widx(o, c, fy, fxx);
                                                dw[wi] = dw[wi].wrapping_add(dv.wrapping_mul(input[s * ilen + k]));
                                                let t = &mut din[s * ilen + k];
                                                *t = t.wrapping_add(dv.wrapping_mul(w[wi]));
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                let wrap = |v: Vec<i64>| v.into_iter().map(|x| fx.wrap(x as i128)).collect::<Vec<_>>();
                let din = need_input.then(|| wrap(din).into_iter().map(|x| fx.trunc(x, f)).collect());
                (Some(LayerParams { w: wrap(dw), b: wrap(db) }), din)
            }
            (LayerSpec::Relu, FxCache::Relu { d: mask }) => {
                (None, Some(d.iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0 }).collect()))
            }
            (LayerSpec::Maxpool { .. }, FxCache::Maxpool { arg }) => {
                let mut din = vec![0i64; nb * sin.len()];
                for (&k, &v) in arg.iter().zip(d) {
                    din[k] = fx.add(din[k], v);
                }
                (None, Some(din))
            }
            (LayerSpec::BatchNorm, FxCache::BatchNorm(c)) => {
                let (dx, dg, dbeta) = fx.batch_norm_backward(d, &c);
                (Some(LayerParams { w: dg, b: dbeta }), Some(dx))
            }
            _ => unreachable!("cache kind follows the layer kind"),
        }
    }

    pub fn sgd_step(&mut self, grads: &Weights<i64>, lr_shift: u32) {
        let fx = self.fx;
        let f = fx.params.fp;
        for ((l, p), g) in self.spec.layers.iter().zip(&mut self.weights.layers).zip(&grads.layers) {
            let wshift = match l {
                LayerSpec::Fc { .. } | LayerSpec::Conv { .. } => f + lr_shift,
                _ => lr_shift,
            };
            for (w, &dw) in p.w.iter_mut().zip(&g.w) {
                *w = fx.sub(*w, fx.trunc(dw, wshift));
            }
            for (b, &db) in p.b.iter_mut().zip(&g.b) {
                *b = fx.sub(*b, fx.trunc(db, lr_shift));
            }
        }
    }

    /// One step of forward, loss gradient, backward and SGD; returns the logits.
    pub fn train_step(&mut self, x: &[i64], onehot: &[i64], batch: usize) -> Result<Vec<i64>> {
        let logits = self.forward(x, batch)?;
        let delta = self.fx.loss_grad(&logits, onehot, self.spec.classes)?;
        let grads = self.backward(&delta)?;
        self.sgd_step(&grads, self.spec.lr_shift);
        Ok(logits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fx13() -> Fx {
        Fx::new(RingParams::with_bits(32, 13).unwrap())
    }

    #[test]
    fn kernels_track_reals() {
        let fx = fx13();
        let e = |v: f64| fx.constant(v);
        let d = |v: i64| v as f64 / 8192.0;
        assert!((d(fx.divide(e(1.0), e(3.0)).unwrap()) - 1.0 / 3.0).abs() < 1e-3);
        assert!((d(fx.sqrt(e(2.0)).unwrap()) - 2f64.sqrt()).abs() < 2e-3);
        assert!((d(fx.inv_sqrt(e(4.0)).unwrap()) - 0.5).abs() < 2e-3);
        assert!(fx.pow(0).is_err());
        assert_eq!(fx.pow(1).unwrap(), 0);
        assert_eq!(fx.pow(8192).unwrap(), 13);
    }

    #[test]
    fn truncation_floors_and_rounds() {
        let fx = fx13();
        assert_eq!(fx.trunc(-3, 1), -2);
        assert_eq!(fx.trunc_round(-3, 1), -1);
        assert_eq!(fx.trunc_round(3, 1), 2);
        assert_eq!(fx.wrap(1i128 << 31), -(1i64 << 31));
    }

    #[test]
    fn asm_of_all_negative_row_is_uniform() {
        let fx = fx13();
        let logits = vec![fx.constant(-1.0); 4];
        let g = fx.loss_grad(&logits, &[0; 4], 4).unwrap();
        for v in g {
            assert!((v as f64 / 8192.0 - 0.25).abs() < 1e-3);
        }
    }
}
