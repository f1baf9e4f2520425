use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::clustering::{squared_distance, ClusterModel, FeatureMatrix};
use crate::error::{Error, Result};

/// Labels listed per cluster.
pub const TOP_LABELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster: usize,
    pub size: usize,
    /// Largest label fraction; `None` for an empty cluster.
    pub purity: Option<f64>,
    /// Up to five `(label, fraction)` pairs, by descending fraction then ascending label.
    pub top_labels: Vec<(usize, f64)>,
    /// Sample ids nearest the centroid, nearest first. Empty unless filled in.
    pub exemplar_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Indexed by cluster id.
    pub clusters: Vec<ClusterStats>,
    /// Non-empty cluster ids by descending purity; ties by ascending id.
    pub ranking: Vec<usize>,
    /// Size-weighted mean purity over non-empty clusters.
    pub weighted_purity: f64,
    pub nmi: f64,
}

fn check_aligned(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::data(format!("arrays are not aligned: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Per-cluster label fractions and purity, assuming clusters `0..k`.
/// Clusters without members report size 0 and no purity.
pub fn cluster_purity_k(assignments: &[usize], labels: &[usize], k: usize) -> Result<ClusterReport> {
    check_aligned(assignments, labels)?;
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::data(format!("cluster id {bad} outside 0..{k}")));
    }
    let num_labels = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; num_labels]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        counts[a][l] += 1;
    }
    let clusters: Vec<ClusterStats> = counts
        .iter()
        .enumerate()
        .map(|(cluster, row)| {
            let size: usize = row.iter().sum();
            let mut present: Vec<(usize, usize)> =
                row.iter().enumerate().filter(|(_, &c)| c > 0).map(|(l, &c)| (l, c)).collect();
            present.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
            let top_labels: Vec<(usize, f64)> = present
                .iter()
                .take(TOP_LABELS)
                .map(|&(l, c)| (l, c as f64 / size as f64))
                .collect();
            ClusterStats {
                cluster,
                size,
                purity: top_labels.first().map(|&(_, f)| f),
                top_labels,
                exemplar_ids: Vec::new(),
            }
        })
        .collect();

    let mut ranking: Vec<usize> = clusters.iter().filter(|c| c.size > 0).map(|c| c.cluster).collect();
    ranking.sort_by(|&x, &y| {
        let (px, py) = (clusters[x].purity.unwrap(), clusters[y].purity.unwrap());
        py.total_cmp(&px).then(x.cmp(&y))
    });
    let majority: usize = counts.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(ClusterReport {
        clusters,
        ranking,
        weighted_purity: majority as f64 / assignments.len().max(1) as f64,
        nmi: nmi(assignments, labels)?,
    })
}

/// [`cluster_purity_k`] with `k` taken as one past the largest cluster id.
pub fn cluster_purity(assignments: &[usize], labels: &[usize]) -> Result<ClusterReport> {
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    cluster_purity_k(assignments, labels, k)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    let mut terms: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Normalised mutual information, `I(a;b) / ((H(a) + H(b)) / 2)`.
///
/// When both labelings are constant the score is 1 (they describe the same
/// partition). The result is symmetric bit for bit: every sum runs over
/// sorted terms.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_aligned(a, b)?;
    if a.is_empty() {
        return Err(Error::data("nmi of empty labelings"));
    }
    let n = a.len() as f64;
    let ka = a.iter().copied().max().unwrap() + 1;
    let kb = b.iter().copied().max().unwrap() + 1;
    let mut joint = vec![0usize; ka * kb];
    let (mut ca, mut cb) = (vec![0usize; ka], vec![0usize; kb]);
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let (ha, hb) = (entropy(&ca, n), entropy(&cb, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut terms = Vec::new();
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c > 0 {
                let pxy = c as f64 / n;
                // ln(pxy / (px py)) written over counts so both argument orders agree
                terms.push(pxy * ((c as f64 * n) / (ca[x] as f64 * cb[y] as f64)).ln());
            }
        }
    }
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

/// For each cluster, its members' row indices by ascending distance to the
/// centroid (ties by index), truncated to `per_cluster`.
pub fn exemplars(model: &ClusterModel, features: &FeatureMatrix, per_cluster: usize) -> Result<Vec<Vec<usize>>> {
    if per_cluster == 0 {
        return Err(Error::config("per_cluster must be at least 1"));
    }
    if features.rows != model.assignments.len() || features.dim != model.dim {
        return Err(Error::config("features do not match the cluster model"));
    }
    let mut members: Vec<Vec<(f64, usize)>> = vec![Vec::new(); model.k];
    for (i, &c) in model.assignments.iter().enumerate() {
        members[c].push((squared_distance(features.row(i), model.centroid(c)), i));
    }
    Ok(members
        .into_iter()
        .map(|mut m| {
            m.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            m.into_iter().take(per_cluster).map(|(_, i)| i).collect()
        })
        .collect())
}

impl ClusterReport {
    /// Ranked rows: the `top` purest then the `bottom` least pure clusters,
    /// without repeating a cluster when the two ranges overlap.
    pub fn selected(&self, top: usize, bottom: usize) -> Vec<(usize, &ClusterStats)> {
        let n = self.ranking.len();
        let head = top.min(n);
        let tail_start = n.saturating_sub(bottom).max(head);
        (0..head)
            .chain(tail_start..n)
            .map(|rank| (rank + 1, &self.clusters[self.ranking[rank]]))
            .collect()
    }

    /// Fixed-width table: rank, cluster, size, purity and the top labels as
    /// `label(fraction)`.
    pub fn render_table(&self, top: usize, bottom: usize, label_name: impl Fn(usize) -> String) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>4} | {:>7} | {:>5} | {:>6} | top labels", "rank", "cluster", "size", "purity");
        for (rank, c) in self.selected(top, bottom) {
            let labels: Vec<String> = c
                .top_labels
                .iter()
                .map(|&(l, f)| format!("{}({f:.2})", label_name(l)))
                .collect();
            let _ = writeln!(
                out,
                "{rank:>4} | {:>7} | {:>5} | {:>6.2} | {}",
                c.cluster,
                c.size,
                c.purity.unwrap_or(f64::NAN),
                labels.join(", ")
            );
        }
        let _ = writeln!(out, "weighted purity {:.4}, nmi {:.4}", self.weighted_purity, self.nmi);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{FeatureSource, KMeansParams};
    use proptest::prelude::*;

    #[test]
    fn perfect_assignment_is_pure() {
        let l = vec![0, 1, 2, 1, 0, 2];
        let r = cluster_purity(&l, &l).unwrap();
        assert!(r.clusters.iter().all(|c| c.purity == Some(1.0)));
        assert_eq!(r.nmi, 1.0);
        assert_eq!(r.weighted_purity, 1.0);
    }

    #[test]
    fn bagpipe_style_row() {
        // 100 members: 70, 4, 3, 2, 1 of five labels plus 20 singletons
        let mut labels = Vec::new();
        for (label, count) in [(0, 70), (1, 4), (2, 3), (3, 2), (4, 1)] {
            labels.extend(std::iter::repeat(label).take(count));
        }
        labels.extend(5..25);
        let assign = vec![0; 100];
        let r = cluster_purity(&assign, &labels).unwrap();
        let c = &r.clusters[0];
        assert_eq!(c.purity, Some(0.70));
        assert_eq!(c.top_labels, vec![(0, 0.70), (1, 0.04), (2, 0.03), (3, 0.02), (4, 0.01)]);
        let text = r.render_table(1, 0, |l| format!("c{l}"));
        assert!(text.contains("c0(0.70), c1(0.04), c2(0.03), c3(0.02), c4(0.01)"), "{text}");
    }

    #[test]
    fn empty_clusters_are_unranked() {
        let r = cluster_purity_k(&[0, 0, 2], &[1, 1, 0], 4).unwrap();
        assert_eq!(r.clusters[1].size, 0);
        assert_eq!(r.clusters[1].purity, None);
        assert_eq!(r.ranking, vec![0, 2]);
    }

    #[test]
    fn ties_rank_by_id() {
        let r = cluster_purity(&[2, 2, 0, 0, 1, 1], &[0, 1, 0, 1, 0, 0]).unwrap();
        assert_eq!(r.ranking, vec![1, 0, 2]);
        let sel: Vec<usize> = r.selected(1, 1).iter().map(|(rank, _)| *rank).collect();
        assert_eq!(sel, vec![1, 3]);
        assert_eq!(r.selected(5, 5).len(), 3);
    }

    #[test]
    fn random_assignments_on_two_classes() {
        use rand::Rng;
        let mut rng = crate::seed::rng(8, &[]);
        let n = 20_000;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let assign: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let r = cluster_purity(&assign, &labels).unwrap();
        for c in &r.clusters {
            // majority fraction of ~5000 fair coin flips: 0.5 + |z|·0.0071, 4σ
            assert!(c.purity.unwrap() < 0.5 + 4.0 * 0.0071, "{c:?}");
        }
    }

    #[test]
    fn nmi_cases() {
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 0]).unwrap(), 0.0);
        assert!(matches!(nmi(&[0], &[0, 1]), Err(Error::Data(_))));
        use rand::Rng;
        let mut rng = crate::seed::rng(2, &[]);
        let n = 50_000;
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
        // bias of plug-in MI ≈ (ka-1)(kb-1)/(2N), normalised by ~ln 5
        assert!(nmi(&a, &b).unwrap() < 10.0 * 16.0 / (2.0 * n as f64) / 5f64.ln());
    }

    #[test]
    fn exemplar_order() {
        let f = FeatureMatrix::from_rows(&[vec![0.0], vec![0.1], vec![0.9]], FeatureSource::Audio).unwrap();
        let model = crate::clustering::kmeans_fit(&f, 1, &KMeansParams::default(), 0).unwrap();
        assert_eq!(exemplars(&model, &f, 10).unwrap(), vec![vec![1, 0, 2]]);
        assert_eq!(exemplars(&model, &f, 1).unwrap(), vec![vec![1]]);
    }

    proptest! {
        #[test]
        fn nmi_is_symmetric_and_permutation_invariant(
            pairs in prop::collection::vec((0usize..4, 0usize..5), 1..60)
        ) {
            let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let ab = nmi(&a, &b).unwrap();
            prop_assert_eq!(ab.to_bits(), nmi(&b, &a).unwrap().to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
            let renamed: Vec<usize> = a.iter().map(|&x| 3 - x).collect();
            prop_assert!((nmi(&renamed, &b).unwrap() - ab).abs() < 1e-12);
        }

        #[test]
        fn purity_bounds(pairs in prop::collection::vec((0usize..4, 0usize..3), 1..80)) {
            let (a, l): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let r = cluster_purity(&a, &l).unwrap();
            let mut prior = vec![0usize; 3];
            l.iter().for_each(|&x| prior[x] += 1);
            let max_prior = *prior.iter().max().unwrap() as f64 / l.len() as f64;
            prop_assert!(r.weighted_purity >= max_prior - 1e-12);
            for c in r.clusters.iter().filter(|c| c.size > 0) {
                let p = c.purity.unwrap();
                prop_assert!(p > 0.0 && p <= 1.0);
                prop_assert!(c.top_labels.iter().map(|t| t.1).sum::<f64>() <= 1.0 + 1e-12);
            }
            let mut sorted = r.ranking.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), r.ranking.len());
        }
    }
}
