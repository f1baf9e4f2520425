use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, PairedSample};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    None,
    /// A fixed random square ReLU layer after the linear mixing.
    ReluMixing,
}

/// Parameters of the paired two-modality generator.
///
/// Every class `c` owns a shared latent prototype `z_c` and one private
/// prototype per modality. A visual sample of class `c` is
/// `A_v·(shared·z_c + visual_private·p_vc) + σ·ε`, the audio sample likewise
/// with its own mixing matrix and private prototype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub d_visual: usize,
    pub d_audio: usize,
    /// Width of the class prototypes before mixing.
    pub latent_dim: usize,
    pub shared_signal_strength: f64,
    pub visual_private_strength: f64,
    pub audio_private_strength: f64,
    pub noise_sigma: f64,
    pub nonlinearity: Nonlinearity,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            samples_per_class: 100,
            d_visual: 32,
            d_audio: 24,
            latent_dim: 8,
            shared_signal_strength: 1.0,
            visual_private_strength: 0.5,
            audio_private_strength: 0.5,
            noise_sigma: 0.3,
            nonlinearity: Nonlinearity::None,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let f = |n: &str| format!("{prefix}{n}");
        if self.num_classes < 2 {
            return Err(Error::field(f("num_classes"), "must be at least 2"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::field(f("samples_per_class"), "must be at least 1"));
        }
        for (name, v) in [
            ("d_visual", self.d_visual),
            ("d_audio", self.d_audio),
            ("latent_dim", self.latent_dim),
        ] {
            if v == 0 {
                return Err(Error::field(f(name), "must be at least 1"));
            }
        }
        for (name, v) in [
            ("shared_signal_strength", self.shared_signal_strength),
            ("visual_private_strength", self.visual_private_strength),
            ("audio_private_strength", self.audio_private_strength),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::field(f(name), "must be non-negative"));
            }
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::field(f("noise_sigma"), "must be positive"));
        }
        Ok(())
    }
}

fn normal_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn matvec(m: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    m.chunks_exact(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

struct ModalityMixer {
    dim: usize,
    private: Vec<Vec<f64>>,
    mixing: Vec<f64>,
    relu: Option<Vec<f64>>,
    noise_tag: u64,
}

impl ModalityMixer {
    fn new(spec: &GeneratorSpec, dim: usize, label: &str) -> Self {
        let l = spec.latent_dim;
        let mut rng = seed::rng(spec.seed, &[seed::tag(label), seed::tag("structure")]);
        let private = (0..spec.num_classes)
            .map(|_| normal_matrix(1, l, 1.0, &mut rng))
            .collect();
        let mixing = normal_matrix(dim, l, 1.0 / (l as f64).sqrt(), &mut rng);
        let relu = (spec.nonlinearity == Nonlinearity::ReluMixing)
            .then(|| normal_matrix(dim, dim, (2.0 / dim as f64).sqrt(), &mut rng));
        Self {
            dim,
            private,
            mixing,
            relu,
            noise_tag: seed::tag(label),
        }
    }

    fn clean(&self, shared: &[f64], class: usize, shared_w: f64, private_w: f64) -> Vec<f64> {
        let latent: Vec<f64> = shared
            .iter()
            .zip(&self.private[class])
            .map(|(z, p)| shared_w * z + private_w * p)
            .collect();
        let mixed = matvec(&self.mixing, latent.len(), &latent);
        match &self.relu {
            Some(w) => matvec(w, self.dim, &mixed).into_iter().map(|v| v.max(0.0)).collect(),
            None => mixed,
        }
    }
}

/// Deterministic, class-balanced, shuffled paired dataset.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate("generator.")?;
    let mut proto_rng = seed::rng(spec.seed, &[seed::tag("shared-prototypes")]);
    let shared: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| normal_matrix(1, spec.latent_dim, 1.0, &mut proto_rng))
        .collect();
    let visual = ModalityMixer::new(spec, spec.d_visual, "visual");
    let audio = ModalityMixer::new(spec, spec.d_audio, "audio");
    let clean_v: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|c| visual.clean(&shared[c], c, spec.shared_signal_strength, spec.visual_private_strength))
        .collect();
    let clean_a: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|c| audio.clean(&shared[c], c, spec.shared_signal_strength, spec.audio_private_strength))
        .collect();

    // noise streams are independent of every other knob, so changing sigma
    // rescales the same draws
    let mut noise_v = seed::rng(spec.seed, &[visual.noise_tag, seed::tag("noise")]);
    let mut noise_a = seed::rng(spec.seed, &[audio.noise_tag, seed::tag("noise")]);
    let n = spec.num_classes * spec.samples_per_class;
    let mut rows: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        for _ in 0..spec.samples_per_class {
            let v = clean_v[c]
                .iter()
                .map(|m| m + spec.noise_sigma * noise_v.sample::<f64, _>(StandardNormal))
                .collect();
            let a = clean_a[c]
                .iter()
                .map(|m| m + spec.noise_sigma * noise_a.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((c, v, a));
        }
    }
    let mut shuffle = seed::rng(spec.seed, &[seed::tag("shuffle")]);
    rows.shuffle(&mut shuffle);
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (class, visual, audio))| PairedSample {
            id: i as u64,
            visual,
            audio,
            class,
        })
        .collect();
    Dataset::new(samples, spec.num_classes, spec.d_visual, spec.d_audio)
}
