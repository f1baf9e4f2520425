use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{make_epoch_sampler, HoldoutSplit};
use crate::clustering::{FeatureMatrix, FeatureSource};
use crate::error::{Error, Result};
use crate::nn::{argmax, early_stop_check, softmax_ce_loss, Encoder, GradientTape, HeadId, Modality, Sgd, TrainingSchedule};
use crate::seed;
use crate::synthdata::Dataset;

/// Loss history of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean per-sample loss over each epoch's draws.
    pub train_losses: Vec<f64>,
    /// Mean per-sample loss on the holdout after each epoch; empty without a holdout.
    pub val_losses: Vec<f64>,
    pub epochs_ran: usize,
    pub stopped_early: bool,
    /// Largest share of holdout samples the first head assigns to a single
    /// class after training (1.0 would mean constant predictions).
    pub max_prediction_fraction: f64,
}

/// Body outputs for every sample, in dataset order.
pub fn extract_features(encoder: &Encoder, data: &Dataset, modality: Modality) -> Result<FeatureMatrix> {
    if data.is_empty() {
        return Err(Error::config("cannot extract features from an empty dataset"));
    }
    if encoder.input_dim() != data.input_dim(modality) {
        return Err(Error::config(format!(
            "{} encoder expects {} inputs but the dataset's {} vectors have {}",
            encoder.modality.name(),
            encoder.input_dim(),
            modality.name(),
            data.input_dim(modality)
        )));
    }
    let rows: Vec<Vec<f64>> = data
        .samples
        .par_iter()
        .map(|s| encoder.features(s.input(modality)))
        .collect::<Result<_>>()?;
    let n = rows.len();
    let flat = rows.into_iter().flatten().collect();
    FeatureMatrix::new(n, encoder.feature_dim(), flat, FeatureSource::from(modality))
}

/// Trains every head listed in `targets` (head index, one label per row) on
/// the sampler's batches over `split.train`. The first target's labels drive
/// the uniform-over-clusters sampler. Per-sample loss is the unweighted sum
/// of the heads' cross-entropies; gradients are averaged over the batch.
pub(crate) fn train_rows(
    encoder: &mut Encoder,
    rows: &[&[f64]],
    targets: &[(usize, &[usize])],
    schedule: &TrainingSchedule,
    split: &HoldoutSplit,
    train_body: bool,
    seed_: u64,
) -> Result<TrainOutcome> {
    schedule.validate("")?;
    if targets.is_empty() {
        return Err(Error::config("training needs at least one supervised head"));
    }
    for &(head, labels) in targets {
        let Some(h) = encoder.heads.get(head) else {
            return Err(Error::config(format!("encoder has no head #{head}")));
        };
        if labels.len() != rows.len() {
            return Err(Error::data(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        if labels.iter().any(|&l| l >= h.num_classes) {
            return Err(Error::data(format!(
                "label outside the {} classes of head `{}`",
                h.num_classes,
                h.head_id.name()
            )));
        }
    }
    if split.train.is_empty() {
        return Err(Error::data("training pool is empty"));
    }
    let first_trainable = if train_body { 0 } else { 2 * encoder.body.layers.len() };
    let mut sgd = Sgd::new(encoder, schedule.momentum, schedule.weight_decay);
    let mut tape = GradientTape::for_encoder(encoder);

    let mut out = TrainOutcome {
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        epochs_ran: 0,
        stopped_early: false,
        max_prediction_fraction: 0.0,
    };
    for epoch in 0..schedule.total_epochs {
        let lr = schedule.lr_at(epoch);
        let batches = make_epoch_sampler(
            targets[0].1,
            &split.train,
            schedule.epoch_size,
            schedule.batch_size,
            seed::derive(seed_, &[seed::tag("epoch"), epoch as u64]),
        );
        let mut total = 0.0;
        let mut draws = 0usize;
        for batch in &batches {
            tape.zero();
            for &i in batch {
                for &(head, labels) in targets {
                    let fwd = encoder.forward_at(rows[i], head)?;
                    let (loss, dlogits) = softmax_ce_loss(&fwd.logits, labels[i])?;
                    total += loss;
                    encoder.accumulate_backward(&fwd, &dlogits, &mut tape, train_body)?;
                }
            }
            tape.scale(1.0 / batch.len() as f64);
            sgd.step(encoder, &tape, lr, first_trainable)?;
            draws += batch.len();
        }
        let train_loss = total / draws.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(Error::Divergence(format!("training loss is {train_loss} at epoch {epoch}")));
        }
        out.train_losses.push(train_loss);
        out.epochs_ran = epoch + 1;
        if !split.val.is_empty() {
            out.val_losses.push(mean_loss(encoder, rows, targets, &split.val)?);
            if schedule.early_stop && early_stop_check(&out.val_losses, schedule.early_stop_patience) {
                out.stopped_early = true;
                break;
            }
        }
    }
    let probe = if split.val.is_empty() { &split.train } else { &split.val };
    out.max_prediction_fraction = max_prediction_fraction(encoder, rows, targets[0].0, probe)?;
    Ok(out)
}

fn mean_loss(encoder: &Encoder, rows: &[&[f64]], targets: &[(usize, &[usize])], idx: &[usize]) -> Result<f64> {
    let losses: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            let mut sum = 0.0;
            for &(head, labels) in targets {
                let fwd = encoder.forward_at(rows[i], head)?;
                sum += softmax_ce_loss(&fwd.logits, labels[i])?.0;
            }
            Ok(sum)
        })
        .collect::<Result<_>>()?;
    // sequential sum keeps the value independent of the thread count
    Ok(losses.iter().sum::<f64>() / idx.len() as f64)
}

/// Predicted class of `head` for each listed row.
pub(crate) fn predict(encoder: &Encoder, rows: &[&[f64]], head: usize, idx: &[usize]) -> Result<Vec<usize>> {
    idx.par_iter()
        .map(|&i| Ok(argmax(&encoder.forward_at(rows[i], head)?.logits)))
        .collect()
}

fn max_prediction_fraction(encoder: &Encoder, rows: &[&[f64]], head: usize, idx: &[usize]) -> Result<f64> {
    let preds = predict(encoder, rows, head, idx)?;
    let mut counts = vec![0usize; encoder.heads[head].num_classes];
    preds.iter().for_each(|&p| counts[p] += 1);
    Ok(counts.into_iter().max().unwrap_or(0) as f64 / preds.len().max(1) as f64)
}

/// Trains `encoder` on pseudo-labels, one label array per supervised head,
/// stopping early once the holdout loss saturates.
pub fn train_on_pseudo_labels(
    encoder: &mut Encoder,
    data: &Dataset,
    modality: Modality,
    labels: &[(HeadId, &[usize])],
    schedule: &TrainingSchedule,
    split: &HoldoutSplit,
    seed_: u64,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    if split.train.iter().chain(&split.val).any(|&i| i >= data.len()) {
        return Err(Error::config("split indexes past the dataset"));
    }
    let rows: Vec<&[f64]> = data.samples.iter().map(|s| s.input(modality)).collect();
    let targets = labels
        .iter()
        .map(|&(id, l)| Ok((encoder.head_index(id)?, l)))
        .collect::<Result<Vec<_>>>()?;
    train_rows(encoder, &rows, &targets, schedule, split, true, seed_)
}
