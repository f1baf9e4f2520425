use rand::Rng;

use crate::seed;

/// Fixed seeded partition of sample indices into a training pool and a
/// validation holdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl HoldoutSplit {
    /// Holds out `round(n·fraction)` samples, at least one on each side when `n ≥ 2`.
    pub fn new(n: usize, fraction: f64, seed_: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed_, &[seed::tag("holdout")]));
        let mut n_val = (n as f64 * fraction).round() as usize;
        if n >= 2 {
            n_val = n_val.clamp(1, n - 1);
        } else {
            n_val = 0;
        }
        let mut val = order.split_off(n - n_val);
        let mut train = order;
        train.sort_unstable();
        val.sort_unstable();
        Self { train, val }
    }

    /// Per-class split keeping roughly `fraction` of every class in `val`.
    pub fn stratified(classes: &[usize], fraction: f64, seed_: u64) -> Self {
        use rand::seq::SliceRandom;
        let num = classes.iter().copied().max().map_or(0, |m| m + 1);
        let mut rng = seed::rng(seed_, &[seed::tag("stratified")]);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for c in 0..num {
            let mut members: Vec<usize> = (0..classes.len()).filter(|&i| classes[i] == c).collect();
            members.shuffle(&mut rng);
            let mut n_val = (members.len() as f64 * fraction).round() as usize;
            if members.len() >= 2 {
                n_val = n_val.clamp(1, members.len() - 1);
            } else {
                n_val = 0;
            }
            val.extend(members.split_off(members.len() - n_val));
            train.extend(members);
        }
        train.sort_unstable();
        val.sort_unstable();
        Self { train, val }
    }
}

/// Draws one epoch of batches from `pool`: each draw picks a cluster
/// uniformly among those present in the pool, then a member of that cluster
/// uniformly, with replacement. Batches hold `batch_size` indices except
/// possibly the last; the epoch totals `epoch_size` draws.
pub fn make_epoch_sampler(
    labels: &[usize],
    pool: &[usize],
    epoch_size: usize,
    batch_size: usize,
    seed_: u64,
) -> Vec<Vec<usize>> {
    if pool.is_empty() || batch_size == 0 {
        return Vec::new();
    }
    let k = pool.iter().map(|&i| labels[i]).max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for &i in pool {
        members[labels[i]].push(i);
    }
    members.retain(|m| !m.is_empty());

    let mut rng = seed::rng(seed_, &[seed::tag("epoch-sampler")]);
    let mut batches = Vec::with_capacity(epoch_size.div_ceil(batch_size));
    let mut remaining = epoch_size;
    while remaining > 0 {
        let size = remaining.min(batch_size);
        let batch = (0..size)
            .map(|_| {
                let cluster = &members[rng.random_range(0..members.len())];
                cluster[rng.random_range(0..cluster.len())]
            })
            .collect();
        batches.push(batch);
        remaining -= size;
    }
    batches
}
