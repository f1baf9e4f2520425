use serde::{Deserialize, Serialize};

use super::sampler::HoldoutSplit;
use super::train::{extract_features, train_on_pseudo_labels, TrainOutcome};
use crate::clustering::{label_agreement, route_pseudo_labels, FitRole, PseudoLabelSet, Routing};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::{Encoder, HeadId, Modality};
use crate::seed;
use crate::synthdata::Dataset;

/// Summary of one k-means fit inside a routing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub role: FitRole,
    pub inertia: f64,
    pub lloyd_iterations: usize,
    pub reassignments: usize,
    pub cluster_sizes: Vec<usize>,
}

/// One encoder's share of an iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderRecord {
    pub modality: Modality,
    #[serde(flatten)]
    pub training: TrainOutcome,
    /// Permutation-matched agreement of this iteration's primary labels with
    /// the previous iteration's; absent on the first iteration.
    pub label_agreement_with_previous: Option<f64>,
    /// Distinct pseudo-labels among this encoder's primary labels.
    pub distinct_labels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcIterationRecord {
    pub iteration: usize,
    pub pseudo_labels: PseudoLabelSet,
    pub fits: Vec<FitSummary>,
    pub encoders: Vec<EncoderRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcRunResult {
    /// Final (first, second) encoders.
    pub encoders: [Encoder; 2],
    pub records: Vec<DcIterationRecord>,
    pub config: ExperimentConfig,
    pub total_iterations: usize,
    /// Routing of the last iteration, kept with the features it clustered.
    pub final_routing: Routing,
}

/// Freshly seeded encoders for the two slots of `config.regime`.
pub fn bootstrap_encoders(config: &ExperimentConfig, data: &Dataset) -> Result<[Encoder; 2]> {
    let heads: Vec<(HeadId, usize)> = config.regime.heads().iter().map(|&h| (h, config.k)).collect();
    let make = |slot: usize| {
        let modality = config.regime.input_modalities()[slot];
        let mut dims = vec![data.input_dim(modality)];
        dims.extend_from_slice(config.encoder.hidden(modality));
        let mut rng = seed::rng(config.run_seed, &[seed::tag("init"), slot as u64]);
        Encoder::random(modality, &dims, &heads, &mut rng)
    };
    Ok([make(0)?, make(1)?])
}

fn distinct(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Runs the alternation to completion; see [`run_deep_clustering_with`].
pub fn run_deep_clustering(config: &ExperimentConfig, data: &Dataset) -> Result<DcRunResult> {
    run_deep_clustering_with(config, data, |_, _| Ok(()))
}

/// Starting from random encoders, repeats: extract both feature sets, cluster
/// and route pseudo-labels, reset heads, train both encoders. Stops after
/// `max_dc_iterations` or once every encoder's labels agree with the previous
/// iteration's at `agreement_stop` or better. `observe` sees each record,
/// with the encoders as trained in that iteration, as it is produced; an
/// error from it aborts the run.
pub fn run_deep_clustering_with(
    config: &ExperimentConfig,
    data: &Dataset,
    mut observe: impl FnMut(&DcIterationRecord, &[Encoder; 2]) -> Result<()>,
) -> Result<DcRunResult> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::config("dataset is empty"));
    }
    if data.len() < config.k {
        return Err(Error::field(
            "k",
            format!("{} clusters requested for {} samples", config.k, data.len()),
        ));
    }
    let regime = config.regime;
    let modalities = regime.input_modalities();
    let mut encoders = bootstrap_encoders(config, data)?;
    let split = HoldoutSplit::new(data.len(), config.val_fraction, seed::derive(config.run_seed, &[seed::tag("split")]));
    let mut records: Vec<DcIterationRecord> = Vec::new();
    let mut last_routing = None;

    for it in 0..config.max_dc_iterations {
        let [e0, e1] = &encoders;
        let (f0, f1) = rayon::join(
            || extract_features(e0, data, modalities[0]),
            || extract_features(e1, data, modalities[1]),
        );
        let routing = route_pseudo_labels(
            regime,
            &f0?,
            &f1?,
            config.k,
            &config.clustering,
            seed::derive(config.run_seed, &[seed::tag("cluster"), it as u64]),
        )?;
        let labels = &routing.labels;

        let train_slot = |slot: usize, enc: &mut Encoder| -> Result<TrainOutcome> {
            let mut rng = seed::rng(config.run_seed, &[seed::tag("reset"), it as u64, slot as u64]);
            enc.reset_heads(&mut rng);
            let targets: Vec<(HeadId, &[usize])> = labels
                .for_encoder(slot)
                .iter()
                .map(|s| (s.head, s.labels.as_slice()))
                .collect();
            train_on_pseudo_labels(
                enc,
                data,
                modalities[slot],
                &targets,
                &config.schedule,
                &split,
                seed::derive(config.run_seed, &[seed::tag("train"), it as u64, slot as u64]),
            )
        };
        let [e0, e1] = &mut encoders;
        let (t0, t1) = rayon::join(|| train_slot(0, e0), || train_slot(1, e1));
        let outcomes = [t0?, t1?];

        let encoder_records = outcomes
            .into_iter()
            .enumerate()
            .map(|(slot, training)| EncoderRecord {
                modality: modalities[slot],
                training,
                label_agreement_with_previous: records
                    .last()
                    .map(|prev| label_agreement(prev.pseudo_labels.primary_labels(slot), labels.primary_labels(slot))),
                distinct_labels: distinct(labels.primary_labels(slot)),
            })
            .collect();
        let record = DcIterationRecord {
            iteration: it,
            pseudo_labels: labels.clone(),
            fits: routing
                .fits
                .iter()
                .map(|f| FitSummary {
                    role: f.role,
                    inertia: f.model.inertia,
                    lloyd_iterations: f.model.iterations,
                    reassignments: f.model.reassignment_count,
                    cluster_sizes: f.model.cluster_sizes(),
                })
                .collect(),
            encoders: encoder_records,
        };
        observe(&record, &encoders)?;
        let converged = record.encoders.iter().all(|e| {
            e.label_agreement_with_previous
                .is_some_and(|a| a >= config.agreement_stop)
        });
        records.push(record);
        last_routing = Some(routing);
        if converged {
            break;
        }
    }

    Ok(DcRunResult {
        encoders,
        total_iterations: records.len(),
        records,
        config: config.clone(),
        final_routing: last_routing.expect("max_dc_iterations >= 1"),
    })
}
