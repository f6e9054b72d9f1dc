use crate::error::{Error, Result};
use crate::party::Party;
use crate::rings::Modulus;
use crate::rss::Shares;

/// Plain matrix product (n×k)(k×m) over `modulus`.
fn mm(a: &[u64], b: &[u64], n: usize, k: usize, m: usize, modulus: Modulus) -> Vec<u64> {
    let mut out = vec![0u64; n * m];
    match modulus {
        Modulus::Pow2(_) => {
            for i in 0..n {
                let row = &mut out[i * m..(i + 1) * m];
                for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
                    if av == 0 {
                        continue;
                    }
                    for (o, &bv) in row.iter_mut().zip(&b[t * m..(t + 1) * m]) {
                        *o = o.wrapping_add(av.wrapping_mul(bv));
                    }
                }
            }
            let mask = modulus.mask();
            out.iter_mut().for_each(|v| *v &= mask);
        }
        Modulus::Prime(_) => {
            for i in 0..n {
                for t in 0..k {
                    let av = a[i * k + t];
                    for j in 0..m {
                        let o = &mut out[i * m + j];
                        *o = modulus.add(*o, modulus.mul(av, b[t * m + j]));
                    }
                }
            }
        }
    }
    out
}

/// Row-major transpose of a rows×cols share matrix.
pub fn transpose(x: &Shares, rows: usize, cols: usize) -> Shares {
    let idx: Vec<usize> = (0..cols)
        .flat_map(|c| (0..rows).map(move |r| r * cols + c))
        .collect();
    x.gather(&idx)
}

/// Local cross terms of a matrix product: this party's 3-of-3 share.
pub(crate) fn matmul_local(x: &Shares, y: &Shares, n: usize, k: usize, m: usize) -> Result<Vec<u64>> {
    x.modulus.check_same(y.modulus)?;
    if x.len() != n * k || y.len() != k * m {
        return Err(Error::Shape(format!(
            "matmul ({n}×{k})({k}×{m}) given {} and {} values",
            x.len(),
            y.len()
        )));
    }
    let md = x.modulus;
    let ysum: Vec<u64> = y.lo.iter().zip(&y.hi).map(|(&a, &b)| md.add(a, b)).collect();
    let p1 = mm(&x.lo, &ysum, n, k, m, md);
    let p2 = mm(&x.hi, &y.lo, n, k, m, md);
    Ok(p1.iter().zip(&p2).map(|(&a, &b)| md.add(a, b)).collect())
}

impl Party {
    /// (n×k)(k×m) product in one round, without truncation.
    pub fn matmul(&mut self, x: &Shares, y: &Shares, n: usize, k: usize, m: usize) -> Result<Shares> {
        self.scope("matmul", |p| {
            let z = matmul_local(x, y, n, k, m)?;
            p.reshare(z, x.modulus)
        })
    }

    /// Fixed-point matrix product: the raw product shifted right by f_p.
    pub fn matmul_fixed(&mut self, x: &Shares, y: &Shares, n: usize, k: usize, m: usize) -> Result<Shares> {
        let z = self.matmul(x, y, n, k, m)?;
        self.truncate(&z, self.params.fp)
    }

    /// Fixed-point element-wise product.
    pub fn mul_fixed(&mut self, x: &Shares, y: &Shares) -> Result<Shares> {
        let z = self.mult(x, y)?;
        self.truncate(&z, self.params.fp)
    }

    /// (−1)^β · x for a bit β shared in the same ring as x.
    pub fn flip_by_bit(&mut self, x: &Shares, beta: &Shares) -> Result<Shares> {
        let bx = self.mult(x, beta)?;
        x.sub(&bx.mul_const(2))
    }
}

/// Geometry of a square-kernel 2-D convolution over CHW images.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub stride: usize,
    pub pad: usize,
}

pub fn conv_out_dim(input: usize, f: usize, stride: usize, pad: usize) -> Result<usize> {
    let span = input + 2 * pad;
    if f == 0 || stride == 0 || span < f {
        return Err(Error::Shape(format!(
            "kernel {f} stride {stride} pad {pad} does not fit input {input}"
        )));
    }
    Ok((span - f) / stride + 1)
}

impl ConvGeom {
    pub fn out_hw(&self) -> Result<(usize, usize)> {
        Ok((
            conv_out_dim(self.h, self.f, self.stride, self.pad)?,
            conv_out_dim(self.w, self.f, self.stride, self.pad)?,
        ))
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.f * self.f
    }
}

/// For each (output pixel, patch entry) of one image, the source index in the
/// CHW input, or `None` for padding. Rows are output pixels in raster order.
pub fn im2col_indices(g: &ConvGeom) -> Result<Vec<Option<usize>>> {
    let (ho, wo) = g.out_hw()?;
    let mut idx = Vec::with_capacity(ho * wo * g.patch_len());
    for oy in 0..ho {
        for ox in 0..wo {
            for c in 0..g.c {
                for fy in 0..g.f {
                    for fx in 0..g.f {
                        let iy = (oy * g.stride + fy) as isize - g.pad as isize;
                        let ix = (ox * g.stride + fx) as isize - g.pad as isize;
                        let inside = iy >= 0 && ix >= 0 && (iy as usize) < g.h && (ix as usize) < g.w;
                        idx.push(inside.then(|| c * g.h * g.w + iy as usize * g.w + ix as usize));
                    }
                }
            }
        }
    }
    Ok(idx)
}

/// The im2col map extended over a batch of `batch` images.
pub fn col2im_indices(g: &ConvGeom, batch: usize) -> Result<Vec<Option<usize>>> {
    let one = im2col_indices(g)?;
    let img = g.c * g.h * g.w;
    Ok((0..batch)
        .flat_map(|b| one.iter().map(move |i| i.map(|i| i + b * img)))
        .collect())
}

impl Shares {
    /// Gathers by index, filling `None` with zero.
    pub fn gather_padded(&self, idx: &[Option<usize>]) -> Shares {
        Shares::new(
            self.modulus,
            idx.iter().map(|i| i.map_or(0, |i| self.lo[i])).collect(),
            idx.iter().map(|i| i.map_or(0, |i| self.hi[i])).collect(),
        )
    }

    /// Adjoint of [`Shares::gather_padded`]: sums entries into `len` slots.
    pub fn scatter_add(&self, idx: &[Option<usize>], len: usize) -> Shares {
        let m = self.modulus;
        let mut out = Shares::zeros(m, len);
        for (k, i) in idx.iter().enumerate() {
            if let Some(i) = *i {
                out.lo[i] = m.add(out.lo[i], self.lo[k]);
                out.hi[i] = m.add(out.hi[i], self.hi[k]);
            }
        }
        out
    }
}
