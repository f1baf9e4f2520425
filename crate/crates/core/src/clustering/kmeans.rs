//! Lloyd's k-means from k-means++ seeding, with empty-cluster repair.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed;

/// Relative size of the perturbation applied to a re-seeded centroid.
const RESEED_NOISE: f64 = 1e-6;

/// Rows handled per parallel task in the assignment step.
const ASSIGN_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Convergence threshold on the largest centroid shift, relative to the
    /// RMS row norm of the data so that rescaling the features does not move
    /// the stopping point.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest-inertia fit wins.
    pub n_init: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            n_init: 3,
        }
    }
}

impl KMeansParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::field(format!("{prefix}max_iters"), "must be at least 1"));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::field(format!("{prefix}tol"), "must be non-negative"));
        }
        if self.n_init == 0 {
            return Err(Error::field(format!("{prefix}n_init"), "must be at least 1"));
        }
        Ok(())
    }
}

/// Result of one k-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k × dim`.
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    /// `Σ ‖x_i − c_{a(i)}‖²` for the returned assignments.
    pub inertia: f64,
    pub reassignment_count: usize,
    pub iterations: usize,
    /// Inertia after each assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
    /// `true` where an empty cluster was repaired just before that assignment step.
    pub repaired_before: Vec<bool>,
}

impl ClusterModel {
    #[inline]
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        counts(&self.assignments, self.k)
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn counts(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &a in assignments {
        c[a] += 1;
    }
    c
}

/// Nearest centroid (lowest index on ties) and its squared distance.
#[inline]
fn nearest(x: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_raw(features: &FeatureMatrix, centroids: &[f64]) -> Vec<(usize, f64)> {
    let dim = features.dim;
    features
        .data
        .par_chunks(ASSIGN_CHUNK * dim)
        .flat_map_iter(|block| {
            block
                .chunks_exact(dim)
                .map(|x| nearest(x, centroids, dim))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Index of the nearest centroid for every row; ties go to the lowest index.
pub fn assign(model: &ClusterModel, features: &FeatureMatrix) -> Result<Vec<usize>> {
    if features.dim != model.dim {
        return Err(Error::config(format!(
            "features have {} columns, centroids have {}",
            features.dim, model.dim
        )));
    }
    Ok(assign_raw(features, &model.centroids)
        .into_iter()
        .map(|(c, _)| c)
        .collect())
}

/// Squared distance of every row to its assigned centroid.
pub fn distances_to_assigned(model: &ClusterModel, features: &FeatureMatrix) -> Vec<f64> {
    features
        .iter_rows()
        .zip(&model.assignments)
        .map(|(x, &a)| squared_distance(x, model.centroid(a)))
        .collect()
}

fn inertia_of(features: &FeatureMatrix, centroids: &[f64], assignments: &[usize]) -> f64 {
    let dim = features.dim;
    features
        .iter_rows()
        .zip(assignments)
        .map(|(x, &a)| squared_distance(x, &centroids[a * dim..(a + 1) * dim]))
        .sum()
}

/// Cluster means in row order. Empty clusters keep their previous centroid.
fn update_means(features: &FeatureMatrix, assignments: &[usize], previous: &[f64], k: usize) -> Vec<f64> {
    let dim = features.dim;
    let mut sums = vec![0.0; k * dim];
    let cnt = counts(assignments, k);
    for (x, &a) in features.iter_rows().zip(assignments) {
        sums[a * dim..(a + 1) * dim]
            .iter_mut()
            .zip(x)
            .for_each(|(s, v)| *s += v);
    }
    for c in 0..k {
        let slot = &mut sums[c * dim..(c + 1) * dim];
        if cnt[c] == 0 {
            slot.copy_from_slice(&previous[c * dim..(c + 1) * dim]);
        } else {
            let n = cnt[c] as f64;
            slot.iter_mut().for_each(|s| *s /= n);
        }
    }
    sums
}

/// k-means++ seeding: first centre uniform, later centres with probability ∝ D².
pub fn kmeans_plus_plus<R: Rng + ?Sized>(features: &FeatureMatrix, k: usize, rng: &mut R) -> Vec<f64> {
    let (n, dim) = (features.rows, features.dim);
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(features.row(first));
    let mut d2: Vec<f64> = features
        .iter_rows()
        .map(|x| squared_distance(x, features.row(first)))
        .collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            if d2[chosen] == 0.0 {
                // rounding pushed the draw past the end; take the last positive weight
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = features.row(pick).to_vec();
        for (i, x) in features.iter_rows().enumerate() {
            let d = squared_distance(x, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.extend(c);
    }
    centroids
}

/// Repairs empty clusters in place: each empty cluster takes over a random
/// member of the currently most populous cluster and its centroid moves onto
/// that point with a tiny multiplicative perturbation. Returns how many
/// clusters were repaired.
fn repair_empty<R: Rng + ?Sized>(
    features: &FeatureMatrix,
    assignments: &mut [usize],
    centroids: &mut [f64],
    k: usize,
    rng: &mut R,
) -> usize {
    let dim = features.dim;
    let mut cnt = counts(assignments, k);
    let mut repaired = 0;
    for empty in 0..k {
        if cnt[empty] != 0 {
            continue;
        }
        let mut largest = 0;
        for c in 1..k {
            if cnt[c] > cnt[largest] {
                largest = c;
            }
        }
        let members: Vec<usize> = assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == largest)
            .map(|(i, _)| i)
            .collect();
        let donor = members[rng.random_range(0..members.len())];
        for (c, &x) in centroids[empty * dim..(empty + 1) * dim]
            .iter_mut()
            .zip(features.row(donor))
        {
            let eps: f64 = rng.sample(StandardNormal);
            *c = x * (1.0 + RESEED_NOISE * eps);
        }
        assignments[donor] = empty;
        cnt[largest] -= 1;
        cnt[empty] += 1;
        repaired += 1;
    }
    repaired
}

/// Fixes any empty cluster of `model` (see the module docs), updating the
/// centroids of the affected clusters to the means of their new members.
pub fn reassign_empty<R: Rng + ?Sized>(
    model: &mut ClusterModel,
    features: &FeatureMatrix,
    rng: &mut R,
) -> usize {
    let repaired = repair_empty(
        features,
        &mut model.assignments,
        &mut model.centroids,
        model.k,
        rng,
    );
    if repaired > 0 {
        model.centroids = update_means(features, &model.assignments, &model.centroids, model.k);
        model.inertia = inertia_of(features, &model.centroids, &model.assignments);
        model.reassignment_count += repaired;
    }
    repaired
}

fn check_inputs(features: &FeatureMatrix, k: usize, params: &KMeansParams) -> Result<()> {
    params.validate("kmeans.")?;
    if k == 0 {
        return Err(Error::field("k", "must be at least 1"));
    }
    if k > features.rows {
        return Err(Error::config(format!(
            "k = {k} exceeds the number of samples ({})",
            features.rows
        )));
    }
    if !features.data.iter().all(|v| v.is_finite()) {
        return Err(Error::data("non-finite features"));
    }
    Ok(())
}

/// Lloyd iterations from explicit starting centroids.
pub fn kmeans_from(
    features: &FeatureMatrix,
    initial: Vec<f64>,
    params: &KMeansParams,
    seed: u64,
) -> Result<ClusterModel> {
    let k = initial.len() / features.dim.max(1);
    if initial.len() != k * features.dim {
        return Err(Error::config("initial centroids do not match the feature width"));
    }
    check_inputs(features, k, params)?;
    let mut rng = seed::rng(seed, &[seed::tag("reseed")]);
    Ok(lloyd(features, initial, k, params, &mut rng))
}

fn lloyd<R: Rng + ?Sized>(
    features: &FeatureMatrix,
    mut centroids: Vec<f64>,
    k: usize,
    params: &KMeansParams,
    rng: &mut R,
) -> ClusterModel {
    let dim = features.dim;
    let threshold = params.tol * features.rms_norm();
    let mut history = Vec::new();
    let mut repaired_flags = Vec::new();
    let mut reassignments = 0;
    let mut previous: Option<Vec<usize>> = None;
    let mut repaired_last = false;
    let mut iterations = 0;

    for _ in 0..params.max_iters {
        iterations += 1;
        let raw = assign_raw(features, &centroids);
        let assignments: Vec<usize> = raw.iter().map(|&(c, _)| c).collect();
        history.push(raw.iter().map(|&(_, d)| d).sum());
        repaired_flags.push(repaired_last);
        if previous.as_deref() == Some(assignments.as_slice()) {
            break;
        }
        let mut forced = assignments.clone();
        let repaired = repair_empty(features, &mut forced, &mut centroids, k, rng);
        reassignments += repaired;
        repaired_last = repaired > 0;
        let next = update_means(features, &forced, &centroids, k);
        let shift = centroids
            .chunks_exact(dim)
            .zip(next.chunks_exact(dim))
            .map(|(a, b)| squared_distance(a, b))
            .fold(0.0, f64::max)
            .sqrt();
        centroids = next;
        previous = Some(assignments);
        if shift <= threshold {
            break;
        }
    }

    let mut assignments: Vec<usize> = assign_raw(features, &centroids)
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    let repaired = repair_empty(features, &mut assignments, &mut centroids, k, rng);
    if repaired > 0 {
        reassignments += repaired;
        centroids = update_means(features, &assignments, &centroids, k);
    }
    let inertia = inertia_of(features, &centroids, &assignments);
    ClusterModel {
        k,
        dim,
        centroids,
        assignments,
        inertia,
        reassignment_count: reassignments,
        iterations,
        inertia_history: history,
        repaired_before: repaired_flags,
    }
}

/// Best of `params.n_init` k-means++ initialised Lloyd runs.
pub fn kmeans_fit(
    features: &FeatureMatrix,
    k: usize,
    params: &KMeansParams,
    seed: u64,
) -> Result<ClusterModel> {
    check_inputs(features, k, params)?;
    let mut best: Option<ClusterModel> = None;
    for restart in 0..params.n_init {
        let mut rng = seed::rng(seed, &[seed::tag("kmeans++"), restart as u64]);
        let init = kmeans_plus_plus(features, k, &mut rng);
        let model = lloyd(features, init, k, params, &mut rng);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    Ok(best.expect("n_init >= 1"))
}
