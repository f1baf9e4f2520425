//! Encoder checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "XDCK" | version u32 | tensor count u32
//! per tensor: name length u32 | name (UTF-8) | rank u32 | dims u64[rank] | f64[product(dims)]
//! ```
//!
//! Tensor names carry the structure needed to rebuild encoders:
//! `<slot>.<modality>.body.<layer>.<activation>.{weight,bias}` and
//! `<slot>.<modality>.head.<head>.{weight,bias}`. Weights are `[out, in]`.

use crate::error::{Error, Result};
use crate::nn::{Activation, ClassifierHead, DenseLayer, DenseNet, Encoder, HeadId, Modality};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const SLOTS: [&str; 2] = ["first", "second"];

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn encode_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(format!("byte {}", self.pos), format!("truncated {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::parse("byte 0", "bad magic, expected \"XDCK\""));
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse("byte 4", format!("unsupported version {version}")));
    }
    let count = c.u32("tensor count")? as usize;
    let mut tensors = Vec::new();
    for i in 0..count {
        let start = c.pos;
        let at = |what: &str| Error::parse(format!("tensor {i} (byte {start})"), what.to_string());
        let name_len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| at("name is not UTF-8"))?
            .to_string();
        let rank = c.u32("rank")? as usize;
        if rank > c.remaining() / 8 {
            return Err(at("rank exceeds the remaining bytes"));
        }
        let mut dims = Vec::with_capacity(rank);
        let mut len: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(c.u64("dimension")?).map_err(|_| at("dimension overflows"))?;
            len = len.checked_mul(d).ok_or_else(|| at("element count overflows"))?;
            dims.push(d);
        }
        let n_bytes = len.checked_mul(8).ok_or_else(|| at("element count overflows"))?;
        if n_bytes > c.remaining() {
            return Err(at("data truncated"));
        }
        let data = c
            .take(n_bytes, "data")?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, dims, data });
    }
    if c.remaining() != 0 {
        return Err(Error::parse(format!("byte {}", c.pos), "trailing bytes after the last tensor"));
    }
    Ok(tensors)
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn modality_from(name: &str) -> Option<Modality> {
    match name {
        "visual" => Some(Modality::Visual),
        "audio" => Some(Modality::Audio),
        _ => None,
    }
}

/// Tensors for both encoders, slot by slot.
pub fn encoders_to_tensors(encoders: &[Encoder; 2]) -> Vec<Tensor> {
    let mut out = Vec::new();
    for (slot, enc) in SLOTS.iter().zip(encoders) {
        let prefix = format!("{slot}.{}", enc.modality.name());
        for (i, l) in enc.body.layers.iter().enumerate() {
            let p = format!("{prefix}.body.{i}.{}", activation_name(l.activation));
            out.push(Tensor {
                name: format!("{p}.weight"),
                dims: vec![l.out_dim, l.in_dim],
                data: l.weight.clone(),
            });
            out.push(Tensor {
                name: format!("{p}.bias"),
                dims: vec![l.out_dim],
                data: l.bias.clone(),
            });
        }
        for h in &enc.heads {
            let p = format!("{prefix}.head.{}", h.head_id.name());
            out.push(Tensor {
                name: format!("{p}.weight"),
                dims: vec![h.num_classes, h.feature_dim],
                data: h.weight.clone(),
            });
            out.push(Tensor {
                name: format!("{p}.bias"),
                dims: vec![h.num_classes],
                data: h.bias.clone(),
            });
        }
    }
    out
}

pub fn encode_checkpoint(encoders: &[Encoder; 2]) -> Vec<u8> {
    encode_tensors(&encoders_to_tensors(encoders))
}

fn bad(name: &str, why: &str) -> Error {
    Error::parse(format!("tensor `{name}`"), why.to_string())
}

/// Pairs consecutive `weight`/`bias` tensors sharing a prefix.
fn pair<'a>(w: &'a Tensor, b: Option<&'a Tensor>) -> Result<(&'a str, &'a Tensor, &'a Tensor)> {
    let prefix = w
        .name
        .strip_suffix(".weight")
        .ok_or_else(|| bad(&w.name, "expected a weight tensor"))?;
    let b = b.ok_or_else(|| bad(&w.name, "missing bias tensor"))?;
    if b.name.strip_suffix(".bias") != Some(prefix) {
        return Err(bad(&b.name, "expected the matching bias tensor"));
    }
    if w.dims.len() != 2 || b.dims.len() != 1 || b.dims[0] != w.dims[0] {
        return Err(bad(&w.name, "weight must be [out, in] with a matching [out] bias"));
    }
    Ok((prefix, w, b))
}

/// Rebuilds both encoders from tensors produced by [`encoders_to_tensors`].
pub fn encoders_from_tensors(tensors: &[Tensor]) -> Result<[Encoder; 2]> {
    let mut built = Vec::new();
    let mut rest = tensors;
    for slot in SLOTS {
        let mine: Vec<&Tensor> = rest.iter().take_while(|t| t.name.split('.').next() == Some(slot)).collect();
        rest = &rest[mine.len()..];
        if mine.is_empty() {
            return Err(Error::parse("checkpoint", format!("no tensors for the {slot} encoder")));
        }
        let mut modality = None;
        let mut layers = Vec::new();
        let mut heads = Vec::new();
        for chunk in mine.chunks(2) {
            let (prefix, w, b) = pair(chunk[0], chunk.get(1).copied())?;
            let parts: Vec<&str> = prefix.split('.').collect();
            let m = parts.get(1).and_then(|m| modality_from(m)).ok_or_else(|| bad(&w.name, "unknown modality"))?;
            if *modality.get_or_insert(m) != m {
                return Err(bad(&w.name, "modality differs within one encoder"));
            }
            let (out_dim, in_dim) = (w.dims[0], w.dims[1]);
            match parts.as_slice() {
                [_, _, "body", idx, act] if heads.is_empty() => {
                    if idx.parse::<usize>().ok() != Some(layers.len()) {
                        return Err(bad(&w.name, "body layers out of order"));
                    }
                    let activation = match *act {
                        "relu" => Activation::Relu,
                        "identity" => Activation::Identity,
                        _ => return Err(bad(&w.name, "unknown activation")),
                    };
                    layers.push(DenseLayer {
                        in_dim,
                        out_dim,
                        weight: w.data.clone(),
                        bias: b.data.clone(),
                        activation,
                    });
                }
                [_, _, "head", id] => {
                    let head_id = HeadId::from_name(id).ok_or_else(|| bad(&w.name, "unknown head"))?;
                    heads.push(ClassifierHead {
                        head_id,
                        num_classes: out_dim,
                        feature_dim: in_dim,
                        weight: w.data.clone(),
                        bias: b.data.clone(),
                    });
                }
                _ => return Err(bad(&w.name, "unexpected tensor name")),
            }
        }
        let body = DenseNet::new(layers).map_err(|e| Error::parse(format!("{slot} encoder"), e.to_string()))?;
        let enc = Encoder::new(modality.expect("non-empty"), body, heads)
            .map_err(|e| Error::parse(format!("{slot} encoder"), e.to_string()))?;
        built.push(enc);
    }
    if let Some(t) = rest.first() {
        return Err(bad(&t.name, "unexpected trailing tensor"));
    }
    let second = built.pop().unwrap();
    let first = built.pop().unwrap();
    Ok([first, second])
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<[Encoder; 2]> {
    encoders_from_tensors(&decode_tensors(bytes)?)
}
