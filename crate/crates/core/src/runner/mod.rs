//! End-to-end commands: run, sweep, report, inspect, data generation.
//!
//! A run directory holds:
//!
//! ```text
//! config.txt                  normalised configuration (key = value)
//! manifest.json               RunManifest
//! metrics.json                the manifest's metrics section alone
//! cluster_report.json/.txt    purity report of the last clustering
//! checkpoints/iter_NNN.xdck   encoders after each iteration's training
//! checkpoints/final.xdck
//! assignments/iter_NNN.csv    sample_id plus each encoder's primary pseudo-label
//! ```

mod checkpoint;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    decode_checkpoint, decode_tensors, encode_checkpoint, encode_tensors, encoders_from_tensors,
    encoders_to_tensors, Tensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use crate::clustering::FitRole;
use crate::config::ExperimentConfig;
use crate::engine::{run_deep_clustering_with, DcIterationRecord};
use crate::error::{Error, Result};
use crate::eval::{ablation_sweep, evaluate_run, ClusterReport, EvalMetrics, SweepAxis, SweepTable};
use crate::synthdata::{generate, load_dataset, save_dataset, Dataset, GeneratorSpec};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "cluster_report.json";
pub const THREADS_ENV: &str = "XDC_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

/// Per-iteration digest kept in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    /// `(fit role, inertia)` for each k-means fit.
    pub inertias: Vec<(FitRole, f64)>,
    /// `(encoder slot, head, clustering)` triples: which fit supervised which head.
    pub routing: Vec<(String, String, FitRole)>,
    pub epochs_ran: Vec<usize>,
    pub label_agreement: Vec<Option<f64>>,
    pub max_prediction_fraction: Vec<f64>,
}

impl IterationSummary {
    pub fn from_record(r: &DcIterationRecord) -> Self {
        let mut routing = Vec::new();
        for (slot, name) in ["first", "second"].iter().enumerate() {
            for s in r.pseudo_labels.for_encoder(slot) {
                routing.push((name.to_string(), s.head.name().to_string(), s.source));
            }
        }
        Self {
            iteration: r.iteration,
            inertias: r.fits.iter().map(|f| (f.role, f.inertia)).collect(),
            routing,
            epochs_ran: r.encoders.iter().map(|e| e.training.epochs_ran).collect(),
            label_agreement: r.encoders.iter().map(|e| e.label_agreement_with_previous).collect(),
            max_prediction_fraction: r.encoders.iter().map(|e| e.training.max_prediction_fraction).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub iterations: Vec<IterationSummary>,
    pub metrics: Option<EvalMetrics>,
    pub wall_clock_seconds: f64,
    /// Files written, relative to the run directory.
    pub artifacts: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Loads the configured dataset file, or generates one.
pub fn load_data(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data.path {
        Some(p) => {
            let path = Path::new(p);
            if !path.is_file() {
                return Err(Error::MissingArtifact(path.to_path_buf()));
            }
            load_dataset(path)
        }
        None => generate(&config.data.generator),
    }
}

/// Worker cap from `XDC_THREADS`, if set to a positive integer.
pub fn thread_cap_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::field(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
    }
}

/// Runs `f` on a pool of at most `threads` workers (the global pool when `None`).
/// Results never depend on the worker count.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)?.next().is_some();
        if occupied && !force {
            return Err(Error::WouldOverwrite(dir.to_path_buf()));
        }
        if occupied {
            for sub in ["checkpoints", "assignments"] {
                let p = dir.join(sub);
                if p.is_dir() {
                    fs::remove_dir_all(p)?;
                }
            }
        }
    }
    fs::create_dir_all(dir.join("checkpoints"))?;
    fs::create_dir_all(dir.join("assignments"))?;
    Ok(())
}

fn assignments_csv(data: &Dataset, record: &DcIterationRecord) -> String {
    let mut out = String::from("sample_id,first_cluster,second_cluster\n");
    let (a, b) = (record.pseudo_labels.primary_labels(0), record.pseudo_labels.primary_labels(1));
    for (i, s) in data.samples.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", s.id, a[i], b[i]);
    }
    out
}

/// Generates or loads data, runs deep clustering, evaluates, and writes every
/// artifact into `config.output_dir`. Refuses a non-empty directory unless
/// `force`. On failure a manifest with status `failed` lists what was written.
pub fn cmd_run(config: &ExperimentConfig, force: bool) -> Result<RunManifest> {
    config.validate()?;
    let dir = PathBuf::from(&config.output_dir);
    prepare_dir(&dir, force)?;
    let started = Instant::now();
    let mut manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        status: RunStatus::Failed,
        error: None,
        config: config.clone(),
        iterations: Vec::new(),
        metrics: None,
        wall_clock_seconds: 0.0,
        artifacts: Vec::new(),
    };
    let outcome = run_stages(config, &dir, &mut manifest);
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    match &outcome {
        Ok(()) => manifest.status = RunStatus::Complete,
        Err(e) => manifest.error = Some(e.to_string()),
    }
    manifest.artifacts.push(MANIFEST_FILE.into());
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    outcome.map(|()| manifest)
}

fn run_stages(config: &ExperimentConfig, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    fs::write(dir.join("config.txt"), config.to_key_values())?;
    manifest.artifacts.push("config.txt".into());
    let data = load_data(config)?;

    let mut written = Vec::new();
    let mut summaries = Vec::new();
    let run = run_deep_clustering_with(config, &data, |record, encoders| {
        summaries.push(IterationSummary::from_record(record));
        let ckpt = format!("checkpoints/iter_{:03}.xdck", record.iteration);
        fs::write(dir.join(&ckpt), encode_checkpoint(encoders))?;
        let csv = format!("assignments/iter_{:03}.csv", record.iteration);
        fs::write(dir.join(&csv), assignments_csv(&data, record))?;
        written.extend([ckpt, csv]);
        Ok(())
    });
    manifest.iterations = summaries;
    manifest.artifacts.extend(written);
    let run = run?;

    fs::write(dir.join("checkpoints/final.xdck"), encode_checkpoint(&run.encoders))?;
    manifest.artifacts.push("checkpoints/final.xdck".into());

    let (metrics, report) = evaluate_run(config, &data, &run)?;
    write_json(&dir.join(REPORT_FILE), &report)?;
    fs::write(dir.join("cluster_report.txt"), report.render_table(usize::MAX, 0, class_name))?;
    write_json(&dir.join(METRICS_FILE), &metrics)?;
    manifest
        .artifacts
        .extend([REPORT_FILE.to_string(), "cluster_report.txt".into(), METRICS_FILE.into()]);
    manifest.metrics = Some(metrics);
    Ok(())
}

fn class_name(label: usize) -> String {
    format!("class{label}")
}

/// Runs one sweep row per value and writes `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[String], force: bool) -> Result<SweepTable> {
    config.validate()?;
    let dir = PathBuf::from(&config.output_dir);
    for name in ["sweep.csv", "sweep.json"] {
        if dir.join(name).exists() && !force {
            return Err(Error::WouldOverwrite(dir.join(name)));
        }
    }
    let data = load_data(config)?;
    let table = ablation_sweep(config, &data, axis, values)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("sweep.csv"), table.to_csv())?;
    fs::write(dir.join("sweep.json"), table.to_json())?;
    Ok(table)
}

pub fn load_manifest(run_dir: &Path) -> Result<RunManifest> {
    read_json(&run_dir.join(MANIFEST_FILE))
}

/// Human-readable summary of a finished run.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    let m = load_manifest(run_dir)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "run {} | regime {} | k {} | seed {} | status {:?} | {:.1}s",
        run_dir.display(),
        m.config.regime,
        m.config.k,
        m.config.run_seed,
        m.status,
        m.wall_clock_seconds
    );
    if let Some(e) = &m.error {
        let _ = writeln!(out, "error: {e}");
    }
    let _ = writeln!(out, "iter | inertia per fit | epochs | agreement with previous");
    for it in &m.iterations {
        let inertias: Vec<String> = it.inertias.iter().map(|(r, v)| format!("{}={v:.4}", r.name())).collect();
        let agreement: Vec<String> = it
            .label_agreement
            .iter()
            .map(|a| a.map_or("-".into(), |a| format!("{a:.3}")))
            .collect();
        let _ = writeln!(
            out,
            "{:>4} | {} | {:?} | {}",
            it.iteration,
            inertias.join(" "),
            it.epochs_ran,
            agreement.join(" ")
        );
    }
    if let Some(mt) = &m.metrics {
        let _ = writeln!(out, "fc-only top-1        {:.4} (lr {})", mt.fc_only.top1, mt.fc_only.best_lr);
        let _ = writeln!(out, "full finetune top-1  {:.4} (lr {})", mt.full_finetune.top1, mt.full_finetune.best_lr);
        let _ = writeln!(out, "random-encoder fc    {:.4}", mt.random_fc_only.top1);
        let _ = writeln!(out, "purity {:.4}  nmi {:.4}", mt.weighted_purity, mt.nmi);
    }
    Ok(out)
}

/// The ranked cluster table restricted to the `top` purest and `bottom` least pure clusters.
pub fn cmd_inspect_clusters(run_dir: &Path, top: usize, bottom: usize) -> Result<String> {
    let report: ClusterReport = read_json(&run_dir.join(REPORT_FILE))?;
    Ok(report.render_table(top, bottom, class_name))
}

/// Generates a dataset and saves it (CSV for a `.csv` path, binary otherwise).
pub fn cmd_gen_data(spec: &GeneratorSpec, path: &Path, force: bool) -> Result<Dataset> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    let data = generate(spec)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_dataset(&data, path)?;
    Ok(data)
}
