use rand::Rng;
use serde::{Deserialize, Serialize};

use super::net::DenseNet;
use crate::error::{Error, Result};

/// Input modality an encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Audio,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Audio => "audio",
        }
    }
}

/// Which pseudo-label stream a classification head is supervised by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadId {
    /// Clusters of the encoder's own features.
    Own,
    /// Clusters of the other encoder's features.
    Cross,
    /// Clusters of the concatenated features of both encoders.
    Joint,
}

impl HeadId {
    pub fn name(self) -> &'static str {
        match self {
            HeadId::Own => "own",
            HeadId::Cross => "cross",
            HeadId::Joint => "joint",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "own" => Some(HeadId::Own),
            "cross" => Some(HeadId::Cross),
            "joint" => Some(HeadId::Joint),
            _ => None,
        }
    }
}

/// Linear classification layer on top of the body features.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub head_id: HeadId,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(head_id: HeadId, feature_dim: usize, num_classes: usize) -> Self {
        Self {
            head_id,
            num_classes,
            feature_dim,
            weight: vec![0.0; feature_dim * num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    /// Uniform in `±1/sqrt(feature_dim)`, zero bias.
    pub fn random<R: Rng + ?Sized>(
        head_id: HeadId,
        feature_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Self {
        let mut head = Self::zeros(head_id, feature_dim, num_classes);
        head.reinit(rng);
        head
    }

    pub fn reinit<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let bound = 1.0 / (self.feature_dim as f64).sqrt();
        for w in &mut self.weight {
            *w = rng.random_range(-bound..bound);
        }
        self.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.feature_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(features).fold(*b, |acc, (w, f)| acc + w * f))
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "head `{}` needs at least 2 classes",
                self.head_id.name()
            )));
        }
        if self.weight.len() != self.feature_dim * self.num_classes
            || self.bias.len() != self.num_classes
        {
            return Err(Error::config(format!(
                "head `{}` buffers do not match {}x{}",
                self.head_id.name(),
                self.num_classes,
                self.feature_dim
            )));
        }
        if !self.weight.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::data(format!(
                "head `{}` has non-finite parameters",
                self.head_id.name()
            )));
        }
        Ok(())
    }
}

/// A body network plus one or two classification heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub modality: Modality,
    pub body: DenseNet,
    pub heads: Vec<ClassifierHead>,
}

/// Output of [`Encoder::forward`], retaining what backpropagation needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
    head: usize,
    /// Input to each body layer; `inputs[0]` is the sample itself.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each body layer.
    pre: Vec<Vec<f64>>,
}

impl Forward {
    pub fn head_index(&self) -> usize {
        self.head
    }
}

impl Encoder {
    pub fn new(modality: Modality, body: DenseNet, heads: Vec<ClassifierHead>) -> Result<Self> {
        let enc = Self {
            modality,
            body,
            heads,
        };
        enc.validate()?;
        Ok(enc)
    }

    /// Random ReLU body over `dims` (input first) and one randomly initialised
    /// head per `(id, classes)` entry.
    pub fn random<R: Rng + ?Sized>(
        modality: Modality,
        dims: &[usize],
        heads: &[(HeadId, usize)],
        rng: &mut R,
    ) -> Result<Self> {
        let body = DenseNet::random_relu(dims, rng)?;
        let feat = body.output_dim();
        let heads = heads
            .iter()
            .map(|&(id, k)| ClassifierHead::random(id, feat, k, rng))
            .collect();
        Self::new(modality, body, heads)
    }

    pub fn validate(&self) -> Result<()> {
        self.body.validate()?;
        if self.heads.is_empty() || self.heads.len() > 2 {
            return Err(Error::config(format!(
                "an encoder carries one or two heads, found {}",
                self.heads.len()
            )));
        }
        for head in &self.heads {
            head.check()?;
            if head.feature_dim != self.body.output_dim() {
                return Err(Error::config(format!(
                    "head `{}` expects {} features but the body emits {}",
                    head.head_id.name(),
                    head.feature_dim,
                    self.body.output_dim()
                )));
            }
        }
        if self.heads.len() == 2 && self.heads[0].head_id == self.heads[1].head_id {
            return Err(Error::config("duplicate head ids"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.body.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.body.output_dim()
    }

    pub fn head_index(&self, id: HeadId) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.head_id == id)
            .ok_or_else(|| Error::config(format!("encoder has no `{}` head", id.name())))
    }

    pub fn head(&self, id: HeadId) -> Result<&ClassifierHead> {
        Ok(&self.heads[self.head_index(id)?])
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::config(format!(
                "{} encoder expects {} inputs, got {}",
                self.modality.name(),
                self.input_dim(),
                x.len()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::data("non-finite input"));
        }
        Ok(())
    }

    /// Body output for `x` (the pre-head features).
    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.body.apply(x))
    }

    pub fn forward(&self, x: &[f64], head: HeadId) -> Result<Forward> {
        let head = self.head_index(head)?;
        self.forward_at(x, head)
    }

    pub(crate) fn forward_at(&self, x: &[f64], head: usize) -> Result<Forward> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.body.layers.len());
        let mut pre = Vec::with_capacity(self.body.layers.len());
        let mut h = x.to_vec();
        for layer in &self.body.layers {
            let z = layer.affine(&h);
            let next = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(h);
            pre.push(z);
            h = next;
        }
        let logits = self.heads[head].logits(&h);
        Ok(Forward {
            features: h,
            logits,
            head,
            inputs,
            pre,
        })
    }

    /// Gradients of a scalar loss given `dlogits = ∂loss/∂logits` for one forward pass.
    pub fn backward(&self, fwd: &Forward, dlogits: &[f64]) -> Result<GradientTape> {
        let mut tape = GradientTape::for_encoder(self);
        self.accumulate_backward(fwd, dlogits, &mut tape, true)?;
        Ok(tape)
    }

    /// Adds the gradients for one sample into `tape`. With `train_body == false`
    /// the body buffers are left alone.
    pub fn accumulate_backward(
        &self,
        fwd: &Forward,
        dlogits: &[f64],
        tape: &mut GradientTape,
        train_body: bool,
    ) -> Result<()> {
        let head = &self.heads[fwd.head];
        if dlogits.len() != head.num_classes {
            return Err(Error::config(format!(
                "dlogits has {} entries, head has {} classes",
                dlogits.len(),
                head.num_classes
            )));
        }
        if !tape.matches(self) {
            return Err(Error::config("gradient tape does not mirror encoder"));
        }
        let n_body = self.body.layers.len();
        let (hw, hb) = tape.head_slots(n_body, fwd.head);
        let feat_dim = head.feature_dim;
        let mut dfeat = vec![0.0; feat_dim];
        for (c, &g) in dlogits.iter().enumerate() {
            tape.buffers[hb][c] += g;
            if g == 0.0 {
                continue;
            }
            let row = &head.weight[c * feat_dim..(c + 1) * feat_dim];
            let grow = &mut tape.buffers[hw][c * feat_dim..(c + 1) * feat_dim];
            for j in 0..feat_dim {
                grow[j] += g * fwd.features[j];
                dfeat[j] += g * row[j];
            }
        }
        if !train_body {
            return Ok(());
        }
        let mut upstream = dfeat;
        for (li, layer) in self.body.layers.iter().enumerate().rev() {
            let dz: Vec<f64> = upstream
                .iter()
                .zip(&fwd.pre[li])
                .map(|(u, &z)| u * layer.activation.derivative(z))
                .collect();
            let input = &fwd.inputs[li];
            let mut dinput = vec![0.0; layer.in_dim];
            for (o, &g) in dz.iter().enumerate() {
                tape.buffers[2 * li + 1][o] += g;
                if g == 0.0 {
                    continue;
                }
                let base = o * layer.in_dim;
                let wrow = &layer.weight[base..base + layer.in_dim];
                let grow = &mut tape.buffers[2 * li][base..base + layer.in_dim];
                for i in 0..layer.in_dim {
                    grow[i] += g * input[i];
                    if li > 0 {
                        dinput[i] += g * wrow[i];
                    }
                }
            }
            upstream = dinput;
        }
        Ok(())
    }

    /// Every parameter buffer in tape order: body layers (weight, bias), then heads (weight, bias).
    pub fn param_buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.body.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for h in &self.heads {
            out.push(&h.weight);
            out.push(&h.bias);
        }
        out
    }

    pub fn param_buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.body.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for h in &mut self.heads {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    /// Re-draws every head from the init distribution; the body is untouched.
    pub fn reset_heads<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for head in &mut self.heads {
            head.reinit(rng);
        }
    }

    /// FNV-1a over the body parameter bits.
    pub fn body_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for layer in &self.body.layers {
            for v in layer.weight.iter().chain(&layer.bias) {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01B3);
                }
            }
        }
        h
    }
}

/// Gradient buffers laid out exactly like [`Encoder::param_buffers`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub buffers: Vec<Vec<f64>>,
    body_layers: usize,
}

impl GradientTape {
    pub fn for_encoder(enc: &Encoder) -> Self {
        Self {
            buffers: enc.param_buffers().iter().map(|b| vec![0.0; b.len()]).collect(),
            body_layers: enc.body.layers.len(),
        }
    }

    pub fn matches(&self, enc: &Encoder) -> bool {
        let params = enc.param_buffers();
        self.body_layers == enc.body.layers.len()
            && params.len() == self.buffers.len()
            && params.iter().zip(&self.buffers).all(|(p, g)| p.len() == g.len())
    }

    fn head_slots(&self, body_layers: usize, head: usize) -> (usize, usize) {
        (2 * body_layers + 2 * head, 2 * body_layers + 2 * head + 1)
    }

    pub fn body_layer(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.buffers[2 * i], &self.buffers[2 * i + 1])
    }

    pub fn head(&self, i: usize) -> (&[f64], &[f64]) {
        let (w, b) = self.head_slots(self.body_layers, i);
        (&self.buffers[w], &self.buffers[b])
    }

    /// Index of the first head buffer.
    pub fn head_offset(&self) -> usize {
        2 * self.body_layers
    }

    pub fn zero(&mut self) {
        self.buffers.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn scale(&mut self, s: f64) {
        self.buffers
            .iter_mut()
            .for_each(|b| b.iter_mut().for_each(|v| *v *= s));
    }

    pub fn is_zero(&self) -> bool {
        self.buffers.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.buffers.iter().flatten().all(|v| v.is_finite())
    }
}
