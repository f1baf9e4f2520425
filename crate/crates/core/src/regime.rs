use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::nn::{HeadId, Modality};

/// Pseudo-label routing between the two encoders.
///
/// The two encoder slots are called `first` and `second`. In the cross-modal
/// regimes `first` consumes the visual input and `second` the audio input; the
/// same-modality variants put both encoders on one input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Each encoder is trained on clusters of its own features.
    Sdc,
    /// Two heads per encoder: own clusters and the other encoder's clusters.
    Mdc,
    /// One clustering of the concatenated, per-part normalised features supervises both.
    Cdc,
    /// Each encoder is trained only on clusters of the other encoder's features.
    Xdc,
    /// XDC routing with both encoders on the visual input.
    XdcSameVisual,
    /// XDC routing with both encoders on the audio input.
    XdcSameAudio,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::Sdc,
        Regime::Mdc,
        Regime::Cdc,
        Regime::Xdc,
        Regime::XdcSameVisual,
        Regime::XdcSameAudio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Sdc => "SDC",
            Regime::Mdc => "MDC",
            Regime::Cdc => "CDC",
            Regime::Xdc => "XDC",
            Regime::XdcSameVisual => "XDC_SAME_VISUAL",
            Regime::XdcSameAudio => "XDC_SAME_AUDIO",
        }
    }

    /// Input modality of the (first, second) encoder.
    pub fn input_modalities(self) -> [Modality; 2] {
        match self {
            Regime::XdcSameVisual => [Modality::Visual, Modality::Visual],
            Regime::XdcSameAudio => [Modality::Audio, Modality::Audio],
            _ => [Modality::Visual, Modality::Audio],
        }
    }

    /// Heads carried by every encoder under this regime.
    pub fn heads(self) -> &'static [HeadId] {
        match self {
            Regime::Sdc => &[HeadId::Own],
            Regime::Mdc => &[HeadId::Own, HeadId::Cross],
            Regime::Cdc => &[HeadId::Joint],
            Regime::Xdc | Regime::XdcSameVisual | Regime::XdcSameAudio => &[HeadId::Cross],
        }
    }

    pub fn is_cross_modal_swap(self) -> bool {
        matches!(
            self,
            Regime::Xdc | Regime::XdcSameVisual | Regime::XdcSameAudio
        )
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == norm)
            .ok_or_else(|| {
                Error::field(
                    "regime",
                    format!("unknown regime `{s}` (expected SDC, MDC, CDC, XDC, XDC_SAME_VISUAL or XDC_SAME_AUDIO)"),
                )
            })
    }
}

impl Serialize for Regime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
