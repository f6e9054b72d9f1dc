//! Binary tensors, checkpoints, MNIST IDX ingestion and the dataset store.
//!
//! A container file is `FALCONT1`, a ring header (ℓ, f_p; zero for float or
//! byte payloads), a count of named tensors, the tensors, and a SHA-256 of
//! everything before it.

use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{LayerParams, NetworkSpec, Weights};
use crate::error::{Error, Result};
use crate::rings::RingParams;

const MAGIC: &[u8; 8] = b"FALCONT1";

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    Raw(Vec<u64>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::Raw(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            TensorData::U8(_) => 1,
            TensorData::Raw(_) => 2,
            TensorData::F64(_) => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} for {} values", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.push(self.data.tag());
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match &self.data {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::Raw(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(Error::Format("file is truncated".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let tag = self.u8()?;
        let nd = self.u8()? as usize;
        let mut shape = Vec::with_capacity(nd);
        let mut n = 1usize;
        for _ in 0..nd {
            let d = self.u64()? as usize;
            n = n
                .checked_mul(d)
                .filter(|&n| n <= self.buf.len())
                .ok_or_else(|| Error::Format("tensor shape exceeds file".into()))?;
            shape.push(d);
        }
        let data = match tag {
            1 => TensorData::U8(self.take(n)?.to_vec()),
            2 => TensorData::Raw(self.take(8 * n)?.chunks(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect()),
            3 => TensorData::F64(self.take(8 * n)?.chunks(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            t => return Err(Error::Format(format!("unknown tensor type {t}"))),
        };
        Tensor::new(shape, data)
    }
}

/// Named tensors plus the ring they are encoded in, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub ring: Option<(u32, u32)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        let (ell, fp) = self.ring.unwrap_or((0, 0));
        out.extend_from_slice(&ell.to_le_bytes());
        out.extend_from_slice(&fp.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            t.write(&mut out);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() + 12 + 32 || &buf[..8] != MAGIC {
            return Err(Error::Format("not a tensor container".into()));
        }
        let (body, digest) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut c = Cursor { buf: body, at: 8 };
        let ell = c.u32()?;
        let fp = c.u32()?;
        let count = c.u32()? as usize;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let n = c.u32()? as usize;
            let name = String::from_utf8(c.take(n)?.to_vec()).map_err(|_| Error::Format("tensor name".into()))?;
            tensors.push((name, c.tensor()?));
        }
        if c.at != body.len() {
            return Err(Error::Format("trailing bytes".into()));
        }
        Ok(Checkpoint {
            ring: (ell != 0).then_some((ell, fp)),
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    }

    fn names(spec: &NetworkSpec) -> Result<Vec<(String, Vec<usize>, String, Vec<usize>)>> {
        let shapes = spec.shapes()?;
        Ok(spec
            .layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                let (w, b) = l.param_shapes(shapes[i]);
                (!w.is_empty()).then(|| (format!("{i}.{}.w", l.name()), w, format!("{i}.{}.b", l.name()), b))
            })
            .collect())
    }

    fn from_weights<T: Clone + Default>(
        spec: &NetworkSpec,
        w: &Weights<T>,
        ring: Option<(u32, u32)>,
        wrap: impl Fn(Vec<T>) -> TensorData,
    ) -> Result<Self> {
        w.check(spec)?;
        let shapes = spec.shapes()?;
        let mut tensors = Vec::new();
        for (i, l) in spec.layers.iter().enumerate() {
            let (ws, bs) = l.param_shapes(shapes[i]);
            if ws.is_empty() {
                continue;
            }
            tensors.push((format!("{i}.{}.w", l.name()), Tensor::new(ws, wrap(w.layers[i].w.clone()))?));
            tensors.push((format!("{i}.{}.b", l.name()), Tensor::new(bs, wrap(w.layers[i].b.clone()))?));
        }
        Ok(Checkpoint { ring, tensors })
    }

    pub fn from_float(spec: &NetworkSpec, w: &Weights<f64>) -> Result<Self> {
        Self::from_weights(spec, w, None, TensorData::F64)
    }

    pub fn from_raw(spec: &NetworkSpec, params: &RingParams, w: &Weights<u64>) -> Result<Self> {
        Self::from_weights(spec, w, Some((params.ell, params.fp)), TensorData::Raw)
    }

    pub fn to_float(&self, spec: &NetworkSpec) -> Result<Weights<f64>> {
        let mut out = Weights::<f64>::zeros(spec)?;
        for (i, (wn, ws, bn, bs)) in Self::layer_entries(spec)? {
            for (name, shape, dst) in [(wn, ws, 0), (bn, bs, 1)] {
                let t = self.get(&name)?;
                if t.shape != shape {
                    return Err(Error::Format(format!("{name} has shape {:?}, want {shape:?}", t.shape)));
                }
                let vals = match (&t.data, self.ring) {
                    (TensorData::F64(v), _) => v.clone(),
                    (TensorData::Raw(v), Some((ell, fp))) => {
                        let p = RingParams::with_bits(ell, fp)?;
                        p.decode_all(v)
                    }
                    _ => return Err(Error::Format(format!("{name} is not a weight tensor"))),
                };
                let l: &mut LayerParams<f64> = &mut out.layers[i];
                if dst == 0 {
                    l.w = vals;
                } else {
                    l.b = vals;
                }
            }
        }
        Ok(out)
    }

    /// Raw weights in `params`; float checkpoints are quantized on load.
    pub fn to_raw(&self, spec: &NetworkSpec, params: &RingParams) -> Result<Weights<u64>> {
        match self.ring {
            None => super::quantize(&self.to_float(spec)?, params),
            Some((ell, fp)) if (ell, fp) == (params.ell, params.fp) => {
                let mut out = Weights::<u64>::zeros(spec)?;
                for (i, (wn, _, bn, _)) in Self::layer_entries(spec)? {
                    for (name, dst) in [(wn, 0), (bn, 1)] {
                        let TensorData::Raw(v) = &self.get(&name)?.data else {
                            return Err(Error::Format(format!("{name} is not raw")));
                        };
                        if dst == 0 {
                            out.layers[i].w = v.clone();
                        } else {
                            out.layers[i].b = v.clone();
                        }
                    }
                }
                out.check(spec)?;
                Ok(out)
            }
            Some((ell, fp)) => Err(Error::Format(format!(
                "checkpoint is encoded for ell={ell} fp={fp}, session uses ell={} fp={}",
                params.ell, params.fp
            ))),
        }
    }

    #[allow(clippy::type_complexity)]
    fn layer_entries(spec: &NetworkSpec) -> Result<Vec<(usize, (String, Vec<usize>, String, Vec<usize>))>> {
        let shapes = spec.shapes()?;
        let names = Self::names(spec)?;
        let idx = spec
            .layers
            .iter()
            .enumerate()
            .filter(|(i, l)| !l.param_shapes(shapes[*i]).0.is_empty())
            .map(|(i, _)| i);
        Ok(idx.zip(names).collect())
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads an unsigned-byte IDX file (optionally gzipped); returns dims and payload.
pub fn read_idx(path: &Path, expect_magic: u32) -> Result<(Vec<usize>, Vec<u8>)> {
    let buf = read_maybe_gz(path)?;
    if buf.len() < 4 {
        return Err(Error::Format("IDX header truncated".into()));
    }
    let magic = u32::from_be_bytes(buf[..4].try_into().unwrap());
    if magic != expect_magic {
        return Err(Error::Format(format!("IDX magic {magic:#010x}, want {expect_magic:#010x}")));
    }
    let nd = (magic & 0xff) as usize;
    if buf.len() < 4 + 4 * nd {
        return Err(Error::Format("IDX header truncated".into()));
    }
    let dims: Vec<usize> = (0..nd)
        .map(|i| u32::from_be_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let n: usize = dims.iter().product();
    let body = &buf[4 + 4 * nd..];
    if body.len() != n {
        return Err(Error::Format(format!("IDX body holds {} bytes, header says {n}", body.len())));
    }
    Ok((dims, body.to_vec()))
}

/// Grayscale images with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn from_idx(images: &Path, labels: &Path) -> Result<Self> {
        let (d, px) = read_idx(images, 0x0000_0803)?;
        let (l, lab) = read_idx(labels, 0x0000_0801)?;
        if d[0] != l[0] {
            return Err(Error::Format(format!("{} images but {} labels", d[0], l[0])));
        }
        if lab.iter().any(|&y| y > 9) {
            return Err(Error::Format("label outside 0..9".into()));
        }
        Ok(Dataset {
            rows: d[1],
            cols: d[2],
            images: px,
            labels: lab,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Image `i` scaled to [0, 1) as px/256.
    pub fn image(&self, i: usize) -> Vec<f64> {
        let n = self.pixels();
        self.images[i * n..(i + 1) * n].iter().map(|&p| p as f64 / 256.0).collect()
    }

    /// Row-major batch of images scaled to [0, 1).
    pub fn batch(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().flat_map(|&i| self.image(i)).collect()
    }

    /// Raw fixed-point pixels px · 2^{f_p − 8}.
    pub fn batch_raw(&self, idx: &[usize], fp: u32) -> Vec<u64> {
        let n = self.pixels();
        idx.iter()
            .flat_map(|&i| self.images[i * n..(i + 1) * n].iter().map(move |&p| scale_px(p, fp)))
            .collect()
    }

    pub fn subset(&self, range: std::ops::Range<usize>) -> Dataset {
        let n = self.pixels();
        Dataset {
            rows: self.rows,
            cols: self.cols,
            images: self.images[range.start * n..range.end * n].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }
}

fn scale_px(p: u8, fp: u32) -> u64 {
    if fp >= 8 {
        (p as u64) << (fp - 8)
    } else {
        (p as u64 + (1 << (7 - fp))) >> (8 - fp)
    }
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    Checkpoint {
        ring: None,
        tensors: vec![
            ("images".into(), Tensor::new(vec![ds.len(), ds.rows, ds.cols], TensorData::U8(ds.images.clone()))?),
            ("labels".into(), Tensor::new(vec![ds.len()], TensorData::U8(ds.labels.clone()))?),
        ],
    }
    .save(path)
}

/// Loads a dataset store, or ingests an IDX image file whose label file sits
/// beside it with `images` replaced by `labels` in the name.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.contains("idx3") {
        let labels = path.with_file_name(name.replace("images", "labels").replace("idx3", "idx1"));
        return Dataset::from_idx(path, &labels);
    }
    let ck = Checkpoint::load(path)?;
    let (TensorData::U8(images), TensorData::U8(labels)) = (&ck.get("images")?.data, &ck.get("labels")?.data) else {
        return Err(Error::Format("dataset tensors must be bytes".into()));
    };
    let shape = &ck.get("images")?.shape;
    if shape.len() != 3 || shape[0] != labels.len() {
        return Err(Error::Format("dataset shape".into()));
    }
    Ok(Dataset {
        rows: shape[1],
        cols: shape[2],
        images: images.clone(),
        labels: labels.clone(),
    })
}
