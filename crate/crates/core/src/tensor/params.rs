//! Named parameter tables, gradient buffers and the binary checkpoint format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::optim::AdamW;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPAW";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Dense row-major array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![v; len],
        }
    }

    /// Uniform in `[-bound, bound)`.
    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
        Self { shape, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// How the tensor is laid out on a tape. Vectors become rows; higher
    /// ranks fold their leading dims into rows.
    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [.., last] => (self.data.len() / last.max(&1), *last),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Ordered, named parameter table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Domain(format!("duplicate parameter name `{name}`")));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(t);
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradient accumulator shaped like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct GradBuffer {
    grads: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            grads: store.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn add(&mut self, id: ParamId, g: &[f64]) {
        for (d, v) in self.grads[id.0].iter_mut().zip(g) {
            *d += v;
        }
    }

    /// Adds another buffer; used to reduce per-sample gradients in a fixed order.
    pub fn merge(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the parameter table and, if given, the optimizer state. Optimizer
/// moments cover the leading tensors of the table, so non-trainable entries
/// (such as stored hyperparameters) may follow the trainable ones.
pub fn write_checkpoint<W: Write>(w: &mut W, store: &ParamStore, opt: Option<&AdamW>) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, store.len() as u32)?;
    for (name, t) in store.iter() {
        put_u32(w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, t.shape.len() as u32)?;
        for &d in &t.shape {
            put_u32(w, d as u32)?;
        }
        put_f64s(w, &t.data)?;
    }
    match opt {
        None => w.write_all(&[0u8]),
        Some(o) => {
            w.write_all(&[1u8])?;
            w.write_all(&o.step_count().to_le_bytes())?;
            let c = o.config();
            put_f64s(w, &[o.lr(), c.weight_decay, c.beta1, c.beta2, c.eps])?;
            put_u32(w, o.moments().count() as u32)?;
            for (m, v) in o.moments() {
                put_f64s(w, m)?;
                put_f64s(w, v)?;
            }
            Ok(())
        }
    }
}

struct Reader<R> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> std::result::Result<Vec<u8>, String> {
        let mut b = vec![0u8; n];
        self.r.read_exact(&mut b).map_err(|e| e.to_string())?;
        Ok(b)
    }
    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.bytes(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parameter table plus the optional optimizer state of a checkpoint.
pub struct Checkpoint {
    pub params: ParamStore,
    pub optimizer: Option<AdamW>,
}

pub fn read_checkpoint<R: Read>(r: R) -> std::result::Result<Checkpoint, String> {
    let mut rd = Reader { r };
    if rd.bytes(4)? != CHECKPOINT_MAGIC {
        return Err("bad magic".into());
    }
    let version = rd.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let count = rd.u32()? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = rd.u32()? as usize;
        let name = String::from_utf8(rd.bytes(len)?).map_err(|e| e.to_string())?;
        let ndim = rd.u32()? as usize;
        let shape = (0..ndim).map(|_| rd.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let data = rd.f64s(n)?;
        store
            .add(name, Tensor { shape, data })
            .map_err(|e| e.to_string())?;
    }
    let flag = rd.bytes(1)?[0];
    let optimizer = match flag {
        0 => None,
        1 => {
            let step = rd.u64()?;
            let h = rd.f64s(5)?;
            let count = rd.u32()? as usize;
            if count > store.len() {
                return Err(format!("optimizer state for {count} of {} tensors", store.len()));
            }
            let mut moments = Vec::with_capacity(count);
            for (_, t) in store.iter().take(count) {
                let m = rd.f64s(t.len())?;
                let v = rd.f64s(t.len())?;
                moments.push((m, v));
            }
            Some(AdamW::restore(
                super::optim::AdamWConfig {
                    lr: h[0],
                    weight_decay: h[1],
                    beta1: h[2],
                    beta2: h[3],
                    eps: h[4],
                },
                step,
                moments,
            ))
        }
        other => return Err(format!("bad optimizer flag {other}")),
    };
    Ok(Checkpoint {
        params: store,
        optimizer,
    })
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, opt: Option<&AdamW>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, store, opt).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(f)).map_err(|reason| Error::format(path, reason))
}

/// Prefix of checkpoint entries that hold hyperparameters rather than weights.
pub const META_PREFIX: &str = "config.";

/// Appends scalar metadata entries after the trainable parameters.
pub fn with_meta(store: &ParamStore, meta: &[(&str, f64)]) -> Result<ParamStore> {
    let mut out = store.clone();
    for (k, v) in meta {
        out.add(format!("{META_PREFIX}{k}"), Tensor::new(vec![1], vec![*v])?)?;
    }
    Ok(out)
}

/// Separates metadata entries from trainable parameters.
pub fn split_meta(store: ParamStore) -> (ParamStore, HashMap<String, f64>) {
    let mut params = ParamStore::new();
    let mut meta = HashMap::new();
    for (name, t) in store.names.into_iter().zip(store.tensors) {
        match name.strip_prefix(META_PREFIX) {
            Some(k) if t.len() == 1 => {
                meta.insert(k.to_string(), t.data[0]);
            }
            _ => {
                params.add(name, t).expect("names were unique");
            }
        }
    }
    (params, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::optim::AdamWConfig;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        s.add("b", Tensor::new(vec![3], vec![0.5, -0.5, 0.25]).unwrap()).unwrap();
        s
    }

    #[test]
    fn checkpoint_round_trip_with_optimizer() {
        let mut store = sample_store();
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let mut g = GradBuffer::new(&store);
        g.add(ParamId(0), &[0.1; 6]);
        g.add(ParamId(1), &[-0.2; 3]);
        opt.step(&mut store, &g).unwrap();

        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &store, Some(&opt)).unwrap();
        assert_eq!(&buf[..4], b"MPAW");
        let ck = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(ck.params, store);
        let restored = ck.optimizer.unwrap();
        assert_eq!(restored.step_count(), 1);
        assert_eq!(restored.moments().collect::<Vec<_>>(), opt.moments().collect::<Vec<_>>());
    }

    #[test]
    fn meta_entries_split_back_out() {
        let store = sample_store();
        let full = with_meta(&store, &[("dim", 64.0)]).unwrap();
        let opt = AdamW::new(AdamWConfig::default(), &store);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &full, Some(&opt)).unwrap();
        let ck = read_checkpoint(buf.as_slice()).unwrap();
        let (params, meta) = split_meta(ck.params);
        assert_eq!(params, store);
        assert_eq!(meta["dim"], 64.0);
        assert_eq!(ck.optimizer.unwrap().moments().count(), 2);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = sample_store();
        assert!(s.add("w", Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        assert!(read_checkpoint(&b"XXXX\x01\0\0\0"[..]).is_err());
    }
}
