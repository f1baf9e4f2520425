//! Downstream probes and cluster-quality analysis.

mod probe;
mod purity;
mod sweep;

pub use probe::{
    downstream_split, full_finetune, linear_probe, scratch_baseline, LrScore, ProbeMode, ProbeResult,
};
pub use purity::{cluster_purity, cluster_purity_k, exemplars, nmi, ClusterReport, ClusterStats, TOP_LABELS};
pub use sweep::{ablation_sweep, evaluate_run, EvalMetrics, SweepAxis, SweepRow, SweepTable};
