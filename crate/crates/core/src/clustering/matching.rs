//! Label-permutation-invariant comparison of two labelings.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

/// Contingency counts `table[a][b]`.
fn contingency(a: &[usize], b: &[usize]) -> (Vec<Vec<i64>>, usize, usize) {
    let ka = a.iter().copied().max().map_or(0, |m| m + 1);
    let kb = b.iter().copied().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0i64; kb.max(1)]; ka.max(1)];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    (table, ka, kb)
}

/// Maps each label of `a` to a label of `b` so that the number of agreeing
/// rows is maximal (Hungarian assignment on the contingency table).
/// Labels of `a` left unmatched when `a` has more labels map to `None`.
pub fn best_matching(a: &[usize], b: &[usize]) -> Vec<Option<usize>> {
    assert_eq!(a.len(), b.len(), "labelings must be aligned");
    let (table, ka, kb) = contingency(a, b);
    if ka == 0 {
        return Vec::new();
    }
    let size = ka.max(kb).max(1);
    let weights = Matrix::from_fn(size, size, |(i, j)| {
        if i < ka && j < kb {
            table[i][j]
        } else {
            0
        }
    });
    let (_, cols) = kuhn_munkres(&weights);
    (0..ka)
        .map(|i| if cols[i] < kb { Some(cols[i]) } else { None })
        .collect()
}

/// Fraction of rows on which `a` and `b` agree after the best relabeling of `a`.
pub fn label_agreement(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let map = best_matching(a, b);
    let hits = a
        .iter()
        .zip(b)
        .filter(|(&x, &y)| map[x] == Some(y))
        .count();
    hits as f64 / a.len() as f64
}
