use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{extract_features, predict, train_rows, HoldoutSplit};
use crate::error::{Error, Result};
use crate::nn::{ClassifierHead, DenseLayer, DenseNet, Encoder, HeadId, Modality, TrainingSchedule};
use crate::seed;
use crate::synthdata::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMode {
    /// Linear classifier on frozen features.
    FcOnly,
    /// All parameters trained from the pretrained weights.
    FullFinetune,
    /// All parameters trained from a random initialisation.
    Scratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrScore {
    pub lr: f64,
    pub top1: f64,
    /// Training diverged; the rate is scored 0.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub mode: ProbeMode,
    /// Best test accuracy over the cross-validated rates.
    pub top1: f64,
    pub best_lr: f64,
    pub per_lr: Vec<LrScore>,
}

/// Seeded class-stratified train/test split; the test part lives in `val`.
pub fn downstream_split(data: &Dataset, test_fraction: f64, seed_: u64) -> HoldoutSplit {
    HoldoutSplit::stratified(&data.classes(), test_fraction, seed_)
}

fn accuracy(pred: &[usize], truth: &[usize], idx: &[usize]) -> f64 {
    let hits = idx.iter().zip(pred).filter(|(&i, &p)| truth[i] == p).count();
    hits as f64 / idx.len().max(1) as f64
}

fn summarize(mode: ProbeMode, per_lr: Vec<LrScore>) -> ProbeResult {
    // first maximum wins, so ties go to the smaller listed rate
    let best = per_lr
        .iter()
        .fold(None::<&LrScore>, |acc, s| match acc {
            Some(a) if a.top1 >= s.top1 => Some(a),
            _ => Some(s),
        })
        .expect("non-empty rate set");
    ProbeResult {
        mode,
        top1: best.top1,
        best_lr: best.lr,
        per_lr: per_lr.clone(),
    }
}

/// Trains one model per rate with `fit` and scores it on the test split.
fn cross_validate(
    mode: ProbeMode,
    lrs: &[f64],
    split: &HoldoutSplit,
    fit: impl Fn(f64, &HoldoutSplit) -> Result<Vec<usize>> + Sync,
    truth: &[usize],
) -> Result<ProbeResult> {
    if lrs.is_empty() {
        return Err(Error::config("learning-rate set is empty"));
    }
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::data("downstream split needs train and test samples"));
    }
    // the test samples must never reach the optimiser
    let train_only = HoldoutSplit {
        train: split.train.clone(),
        val: Vec::new(),
    };
    let per_lr = lrs
        .par_iter()
        .map(|&lr| match fit(lr, &train_only) {
            Ok(pred) => Ok(LrScore {
                lr,
                top1: accuracy(&pred, truth, &split.val),
                diverged: false,
            }),
            Err(Error::Divergence(_)) => Ok(LrScore {
                lr,
                top1: 0.0,
                diverged: true,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(mode, per_lr))
}

fn with_lr(schedule: &TrainingSchedule, lr: f64) -> TrainingSchedule {
    TrainingSchedule {
        base_lr: lr,
        early_stop: false,
        ..schedule.clone()
    }
}

/// Linear classifier on the frozen body features of `encoder`. A fresh head
/// is trained per rate in `lrs`; the encoder itself is never touched.
pub fn linear_probe(
    encoder: &Encoder,
    data: &Dataset,
    modality: Modality,
    schedule: &TrainingSchedule,
    lrs: &[f64],
    split: &HoldoutSplit,
    seed_: u64,
) -> Result<ProbeResult> {
    let features = extract_features(encoder, data, modality)?;
    let rows: Vec<&[f64]> = features.iter_rows().collect();
    let truth = data.classes();
    let dim = features.dim;
    let fit = |lr: f64, train: &HoldoutSplit| {
        let mut probe = Encoder::new(
            modality,
            DenseNet::new(vec![DenseLayer::identity(dim)])?,
            vec![ClassifierHead::random(
                HeadId::Own,
                dim,
                data.num_classes,
                &mut seed::rng(seed_, &[seed::tag("probe-head")]),
            )],
        )?;
        train_rows(&mut probe, &rows, &[(0, &truth)], &with_lr(schedule, lr), train, false, seed_)?;
        predict(&probe, &rows, 0, &split.val)
    };
    cross_validate(ProbeMode::FcOnly, lrs, split, fit, &truth)
}

#[allow(clippy::too_many_arguments)]
fn finetune(
    mode: ProbeMode,
    encoder: &Encoder,
    data: &Dataset,
    modality: Modality,
    schedule: &TrainingSchedule,
    lrs: &[f64],
    split: &HoldoutSplit,
    seed_: u64,
) -> Result<ProbeResult> {
    if encoder.input_dim() != data.input_dim(modality) {
        return Err(Error::config("encoder input width does not match the dataset"));
    }
    let rows: Vec<&[f64]> = data.samples.iter().map(|s| s.input(modality)).collect();
    let truth = data.classes();
    let fit = |lr: f64, train: &HoldoutSplit| {
        let mut model = Encoder::new(
            modality,
            encoder.body.clone(),
            vec![ClassifierHead::random(
                HeadId::Own,
                encoder.feature_dim(),
                data.num_classes,
                &mut seed::rng(seed_, &[seed::tag("probe-head")]),
            )],
        )?;
        train_rows(&mut model, &rows, &[(0, &truth)], &with_lr(schedule, lr), train, true, seed_)?;
        predict(&model, &rows, 0, &split.val)
    };
    cross_validate(mode, lrs, split, fit, &truth)
}

/// Finetunes body and a fresh head together, once per rate.
pub fn full_finetune(
    encoder: &Encoder,
    data: &Dataset,
    modality: Modality,
    schedule: &TrainingSchedule,
    lrs: &[f64],
    split: &HoldoutSplit,
    seed_: u64,
) -> Result<ProbeResult> {
    finetune(ProbeMode::FullFinetune, encoder, data, modality, schedule, lrs, split, seed_)
}

/// Full training of a randomly initialised encoder with the given body widths.
pub fn scratch_baseline(
    dims: &[usize],
    data: &Dataset,
    modality: Modality,
    schedule: &TrainingSchedule,
    lrs: &[f64],
    split: &HoldoutSplit,
    seed_: u64,
) -> Result<ProbeResult> {
    let random = Encoder::random(
        modality,
        dims,
        &[(HeadId::Own, data.num_classes)],
        &mut seed::rng(seed_, &[seed::tag("scratch-init")]),
    )?;
    finetune(ProbeMode::Scratch, &random, data, modality, schedule, lrs, split, seed_)
}
