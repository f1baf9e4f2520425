use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use super::kmeans::{kmeans_fit, ClusterModel, KMeansParams};
use crate::error::{Error, Result};
use crate::nn::HeadId;
use crate::regime::Regime;
use crate::seed;

/// Clustering knobs shared by every routing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringOptions {
    #[serde(flatten)]
    pub kmeans: KMeansParams,
    /// l2-normalise each modality's features before clustering in every regime.
    /// CDC always normalises the two halves of its joint vectors.
    pub normalize_all: bool,
    /// PCA-whiten to this many dimensions before clustering; 0 disables.
    pub pca_dim: usize,
}

impl ClusteringOptions {
    fn prepare(&self, f: &FeatureMatrix, normalize: bool) -> Result<FeatureMatrix> {
        let f = if normalize { f.l2_normalized() } else { f.clone() };
        if self.pca_dim > 0 {
            f.pca_whitened(self.pca_dim.min(f.dim))
        } else {
            Ok(f)
        }
    }
}

/// Which features a fit clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitRole {
    /// Features of the first encoder.
    First,
    /// Features of the second encoder.
    Second,
    /// Concatenated normalised features of both.
    Joint,
}

impl FitRole {
    pub fn name(self) -> &'static str {
        match self {
            FitRole::First => "first",
            FitRole::Second => "second",
            FitRole::Joint => "joint",
        }
    }

    /// Seed of this role's fit under a routing seed.
    pub fn fit_seed(self, routing_seed: u64) -> u64 {
        seed::derive(routing_seed, &[seed::tag(self.name())])
    }
}

/// Pseudo-labels for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStream {
    pub head: HeadId,
    /// Clustering whose assignments these are.
    pub source: FitRole,
    pub labels: Vec<usize>,
}

/// The routed pseudo-labels for both encoders of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelSet {
    pub regime: Regime,
    pub k: usize,
    pub first: Vec<LabelStream>,
    pub second: Vec<LabelStream>,
}

impl PseudoLabelSet {
    pub fn for_encoder(&self, slot: usize) -> &[LabelStream] {
        if slot == 0 {
            &self.first
        } else {
            &self.second
        }
    }

    /// Labels supervising `head` of encoder `slot`.
    pub fn labels(&self, slot: usize, head: HeadId) -> Option<&[usize]> {
        self.for_encoder(slot)
            .iter()
            .find(|s| s.head == head)
            .map(|s| s.labels.as_slice())
    }

    /// Labels of the encoder's first head, used for sampling and agreement.
    pub fn primary_labels(&self, slot: usize) -> &[usize] {
        &self.for_encoder(slot)[0].labels
    }

    pub fn validate(&self, rows: usize) -> Result<()> {
        let heads = self.regime.heads();
        for slot in [&self.first, &self.second] {
            if slot.len() != heads.len() || slot.iter().zip(heads).any(|(s, h)| s.head != *h) {
                return Err(Error::config(format!(
                    "{} label set does not carry heads {heads:?}",
                    self.regime
                )));
            }
            for stream in slot {
                if stream.labels.len() != rows {
                    return Err(Error::data("pseudo-label array length differs from row count"));
                }
                if stream.labels.iter().any(|&l| l >= self.k) {
                    return Err(Error::data("pseudo-label outside [0, k)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedFit {
    pub role: FitRole,
    pub model: ClusterModel,
    /// The matrix the model was fitted on, after any normalisation.
    pub features: FeatureMatrix,
}

/// Output of [`route_pseudo_labels`]: the label set plus the fits it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    pub labels: PseudoLabelSet,
    pub fits: Vec<RoutedFit>,
}

impl Routing {
    pub fn fit(&self, role: FitRole) -> Option<&ClusterModel> {
        self.fits.iter().find(|f| f.role == role).map(|f| &f.model)
    }
}

fn stream(head: HeadId, source: FitRole, model: &ClusterModel) -> LabelStream {
    LabelStream {
        head,
        source,
        labels: model.assignments.clone(),
    }
}

/// Clusters the features of both encoders and routes the assignments to the
/// heads `regime` prescribes. `seed` keys every fit of this routing.
pub fn route_pseudo_labels(
    regime: Regime,
    first: &FeatureMatrix,
    second: &FeatureMatrix,
    k: usize,
    options: &ClusteringOptions,
    seed: u64,
) -> Result<Routing> {
    if first.rows != second.rows {
        return Err(Error::data(format!(
            "feature matrices are not row-aligned: {} vs {} rows",
            first.rows, second.rows
        )));
    }
    let fit = |role: FitRole, f: &FeatureMatrix| -> Result<RoutedFit> {
        let prepared = options.prepare(f, options.normalize_all)?;
        Ok(RoutedFit {
            role,
            model: kmeans_fit(&prepared, k, &options.kmeans, role.fit_seed(seed))?,
            features: prepared,
        })
    };

    if regime == Regime::Cdc {
        let joint = FeatureMatrix::concat_normalized(first, second)?;
        let joint = options.prepare(&joint, false)?;
        let model = kmeans_fit(&joint, k, &options.kmeans, FitRole::Joint.fit_seed(seed))?;
        let labels = PseudoLabelSet {
            regime,
            k,
            first: vec![stream(HeadId::Joint, FitRole::Joint, &model)],
            second: vec![stream(HeadId::Joint, FitRole::Joint, &model)],
        };
        return Ok(Routing {
            labels,
            fits: vec![RoutedFit {
                role: FitRole::Joint,
                model,
                features: joint,
            }],
        });
    }

    let fa = fit(FitRole::First, first)?;
    let fb = fit(FitRole::Second, second)?;
    let (a, b) = (&fa.model, &fb.model);
    let (first_labels, second_labels) = match regime {
        Regime::Sdc => (
            vec![stream(HeadId::Own, FitRole::First, a)],
            vec![stream(HeadId::Own, FitRole::Second, b)],
        ),
        Regime::Mdc => (
            vec![
                stream(HeadId::Own, FitRole::First, a),
                stream(HeadId::Cross, FitRole::Second, b),
            ],
            vec![
                stream(HeadId::Own, FitRole::Second, b),
                stream(HeadId::Cross, FitRole::First, a),
            ],
        ),
        Regime::Xdc | Regime::XdcSameVisual | Regime::XdcSameAudio => (
            vec![stream(HeadId::Cross, FitRole::Second, b)],
            vec![stream(HeadId::Cross, FitRole::First, a)],
        ),
        Regime::Cdc => unreachable!("handled above"),
    };
    Ok(Routing {
        labels: PseudoLabelSet {
            regime,
            k,
            first: first_labels,
            second: second_labels,
        },
        fits: vec![fa, fb],
    })
}
