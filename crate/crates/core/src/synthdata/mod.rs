//! Seeded paired two-modality data and its on-disk formats.

mod generator;
mod io;

pub use generator::{generate, GeneratorSpec, Nonlinearity};
pub use io::{load_dataset, save_dataset, BINARY_MAGIC, BINARY_VERSION};

use crate::clustering::{FeatureMatrix, FeatureSource};
use crate::error::{Error, Result};
use crate::nn::Modality;

/// One example: both modality vectors plus the hidden class used only for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: u64,
    pub visual: Vec<f64>,
    pub audio: Vec<f64>,
    pub class: usize,
}

impl PairedSample {
    pub fn input(&self, modality: Modality) -> &[f64] {
        match modality {
            Modality::Visual => &self.visual,
            Modality::Audio => &self.audio,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<PairedSample>,
    pub num_classes: usize,
    pub d_visual: usize,
    pub d_audio: usize,
}

impl Dataset {
    pub fn new(
        samples: Vec<PairedSample>,
        num_classes: usize,
        d_visual: usize,
        d_audio: usize,
    ) -> Result<Self> {
        let ds = Self {
            samples,
            num_classes,
            d_visual,
            d_audio,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.visual.len() != self.d_visual || s.audio.len() != self.d_audio {
                return Err(Error::data(format!("sample {i} has the wrong width")));
            }
            if s.class >= self.num_classes {
                return Err(Error::data(format!(
                    "sample {i} has class {} but the dataset declares {} classes",
                    s.class, self.num_classes
                )));
            }
            if !s.visual.iter().chain(&s.audio).all(|v| v.is_finite()) {
                return Err(Error::data(format!("sample {i} holds non-finite values")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self, modality: Modality) -> usize {
        match modality {
            Modality::Visual => self.d_visual,
            Modality::Audio => self.d_audio,
        }
    }

    pub fn classes(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class).collect()
    }

    /// Raw inputs of one modality as a feature matrix.
    pub fn features(&self, modality: Modality) -> Result<FeatureMatrix> {
        let dim = self.input_dim(modality);
        let data = self
            .samples
            .iter()
            .flat_map(|s| s.input(modality).iter().copied())
            .collect();
        FeatureMatrix::new(self.len(), dim, data, FeatureSource::from(modality))
    }

    /// Copy with every input value multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|p| PairedSample {
                visual: p.visual.iter().map(|v| v * s).collect(),
                audio: p.audio.iter().map(|v| v * s).collect(),
                ..p.clone()
            })
            .collect();
        Self {
            samples,
            ..self.clone()
        }
    }
}
