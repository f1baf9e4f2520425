use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::probe::{downstream_split, full_finetune, linear_probe, ProbeResult};
use super::purity::{cluster_purity_k, exemplars, ClusterReport};
use crate::config::ExperimentConfig;
use crate::engine::{bootstrap_encoders, run_deep_clustering, DcRunResult};
use crate::error::{Error, Result};
use crate::regime::Regime;
use crate::seed;
use crate::synthdata::Dataset;

/// Downstream numbers for one finished run. Probes use the first encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub iterations: usize,
    pub fc_only: ProbeResult,
    pub full_finetune: ProbeResult,
    /// Linear probe on the untrained bootstrap encoder of the same slot.
    pub random_fc_only: ProbeResult,
    /// Purity and NMI of the last clustering of the first encoder's labels source.
    pub weighted_purity: f64,
    pub nmi: f64,
}

/// Probes the run's first encoder and scores its last clustering against the
/// hidden classes. The report's exemplars are sample ids.
pub fn evaluate_run(config: &ExperimentConfig, data: &Dataset, run: &DcRunResult) -> Result<(EvalMetrics, ClusterReport)> {
    let ev = &config.eval;
    let modality = config.regime.input_modalities()[0];
    let split = downstream_split(data, ev.test_fraction, ev.split_seed);
    let probe_seed = seed::derive(config.run_seed, &[seed::tag("eval")]);
    let random = bootstrap_encoders(config, data)?;
    let ((fc_only, full), random_fc) = rayon::join(
        || {
            rayon::join(
                || linear_probe(&run.encoders[0], data, modality, &ev.schedule, &ev.fc_lrs, &split, probe_seed),
                || full_finetune(&run.encoders[0], data, modality, &ev.schedule, &ev.full_lrs, &split, probe_seed),
            )
        },
        || linear_probe(&random[0], data, modality, &ev.schedule, &ev.fc_lrs, &split, probe_seed),
    );

    let fit = &run.final_routing.fits[0];
    let mut report = cluster_purity_k(&fit.model.assignments, &data.classes(), fit.model.k)?;
    for (stats, rows) in report
        .clusters
        .iter_mut()
        .zip(exemplars(&fit.model, &fit.features, ev.exemplars)?)
    {
        stats.exemplar_ids = rows.into_iter().map(|i| data.samples[i].id).collect();
    }
    let metrics = EvalMetrics {
        iterations: run.total_iterations,
        fc_only: fc_only?,
        full_finetune: full?,
        random_fc_only: random_fc?,
        weighted_purity: report.weighted_purity,
        nmi: report.nmi,
    };
    Ok((metrics, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Regime,
    K,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regime" => Ok(SweepAxis::Regime),
            "k" => Ok(SweepAxis::K),
            _ => Err(Error::field("axis", format!("expected `regime` or `k`, got `{s}`"))),
        }
    }
}

impl SweepAxis {
    /// `config` with this axis set to `value`.
    pub fn apply(self, config: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::Regime => c.regime = Regime::from_str(value)?,
            SweepAxis::K => {
                c.k = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::field("k", format!("`{value}` is not an integer")))?
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub metrics: Option<EvalMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

/// One full run plus evaluation per value. A failing row records its error
/// and leaves the others alone; rows come back in input order.
pub fn ablation_sweep(config: &ExperimentConfig, data: &Dataset, axis: SweepAxis, values: &[String]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::field("values", "a sweep needs at least one value"));
    }
    let rows = values
        .par_iter()
        .map(|value| {
            let outcome = axis.apply(config, value).and_then(|c| {
                let run = run_deep_clustering(&c, data)?;
                Ok(evaluate_run(&c, data, &run)?.0)
            });
            match outcome {
                Ok(m) => SweepRow {
                    value: value.clone(),
                    metrics: Some(m),
                    error: None,
                },
                Err(e) => SweepRow {
                    value: value.clone(),
                    metrics: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SweepTable { axis, rows })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl SweepTable {
    pub const CSV_COLUMNS: [&'static str; 11] = [
        "value",
        "status",
        "iterations",
        "fc_only_top1",
        "fc_only_best_lr",
        "full_finetune_top1",
        "full_finetune_best_lr",
        "random_fc_only_top1",
        "weighted_purity",
        "nmi",
        "error",
    ];

    pub fn to_csv(&self) -> String {
        let mut out = Self::CSV_COLUMNS.join(",");
        out.push('\n');
        for row in &self.rows {
            let _ = match &row.metrics {
                Some(m) => writeln!(
                    out,
                    "{},ok,{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},",
                    csv_field(&row.value),
                    m.iterations,
                    m.fc_only.top1,
                    m.fc_only.best_lr,
                    m.full_finetune.top1,
                    m.full_finetune.best_lr,
                    m.random_fc_only.top1,
                    m.weighted_purity,
                    m.nmi
                ),
                None => writeln!(
                    out,
                    "{},error,,,,,,,,,{}",
                    csv_field(&row.value),
                    csv_field(row.error.as_deref().unwrap_or(""))
                ),
            };
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep tables serialise")
    }
}
