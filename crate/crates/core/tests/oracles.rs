mod common;

use proptest::prelude::*;
use rand::Rng;
use xdc::clustering::{
    kmeans_fit, route_pseudo_labels, squared_distance, ClusteringOptions, FeatureMatrix, FeatureSource,
    KMeansParams,
};
use xdc::eval::nmi;
use xdc::nn::softmax_ce_loss;
use xdc::seed;
use xdc::Regime;

use common::{analytic_gradient, input_off_kinks, numeric_partial, random_encoder, relative_error};

fn random_matrix(rows: usize, dim: usize, seed_: u64) -> FeatureMatrix {
    let mut rng = seed::rng(seed_, &[seed::tag("matrix")]);
    let data = (0..rows * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
    FeatureMatrix::new(rows, dim, data, FeatureSource::Visual).unwrap()
}

// Reference values from 60-digit decimal arithmetic.
#[test]
fn cross_entropy_matches_extended_precision() {
    let cases: [(&[f64], usize, f64, [f64; 5]); 3] = [
        (
            &[0.3, -1.2, 2.5, 0.0, -0.7],
            2,
            0.22982032193867033,
            [0.08805265229096129, 0.019647202407176198, 0.7946763755869044, 0.06523100919649594, 0.03239276051846216],
        ),
        (
            &[10.0, 9.5, -3.0, 4.25, 0.125],
            4,
            10.351089538535655,
            [0.6212078577153117, 0.37678161175873975, 1.4041343886416218e-06, 0.0019771684401772038, 3.19579513826966e-05],
        ),
        (
            &[-20.0, -21.0, -19.5, -22.0, -20.5],
            0,
            1.3240110696579748,
            [0.266065949718443, 0.09788019289716987, 0.4386685907098277, 0.03600811066476383, 0.16137715600979557],
        ),
    ];
    for (logits, label, loss, softmax) in cases {
        let (got, grad) = softmax_ce_loss(logits, label).unwrap();
        assert!((got - loss).abs() <= 1e-12 * loss.max(1.0), "{got} vs {loss}");
        for (c, (&g, &p)) in grad.iter().zip(&softmax).enumerate() {
            let want = if c == label { p - 1.0 } else { p };
            assert!((g - want).abs() <= 1e-14, "class {c}: {g} vs {want}");
        }
    }
}

#[test]
fn kmeans_separates_two_blobs() {
    let mut rng = seed::rng(8, &[]);
    let mut rows = Vec::new();
    for i in 0..12 {
        let centre = if i % 3 == 0 { [5.0, 5.0] } else { [-5.0, 0.0] };
        rows.push(vec![centre[0] + rng.random_range(-0.5..0.5), centre[1] + rng.random_range(-0.5..0.5)]);
    }
    let f = FeatureMatrix::from_rows(&rows, FeatureSource::Audio).unwrap();
    let m = kmeans_fit(&f, 2, &KMeansParams::default(), 1).unwrap();
    let blob: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
    for i in 1..12 {
        assert_eq!(m.assignments[i] == m.assignments[0], blob[i] == blob[0]);
    }
}

#[test]
fn nmi_of_independent_labels_is_small() {
    let mut rng = seed::rng(5, &[]);
    let n = 20_000;
    let k = 5;
    let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    // plug-in MI bias is about (k-1)^2 / (2N) nats; normalised by ln k
    let bound = 4.0 * ((k - 1) * (k - 1)) as f64 / (2.0 * n as f64) / (k as f64).ln();
    let v = nmi(&a, &b).unwrap();
    assert!(v < bound, "nmi {v} above {bound}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backward_matches_central_differences(s in any::<u64>()) {
        let mut rng = seed::rng(s, &[]);
        let enc = random_encoder(&mut rng);
        let x = input_off_kinks(&enc, &mut rng);
        let labels: Vec<usize> = enc.heads.iter().map(|h| rng.random_range(0..h.num_classes)).collect();
        let tape = analytic_gradient(&enc, &x, &labels);
        for (b, buffer) in tape.buffers.iter().enumerate() {
            for (j, &a) in buffer.iter().enumerate() {
                let n = numeric_partial(&enc, &x, &labels, b, j, 1e-5);
                prop_assert!(relative_error(a, n) <= 1e-4, "buffer {} [{}]: {} vs {}", b, j, a, n);
            }
        }
    }

    #[test]
    fn assignments_are_nearest_centroids(rows in 2usize..40, dim in 1usize..5, k in 1usize..6, s in any::<u64>()) {
        prop_assume!(k <= rows);
        let f = random_matrix(rows, dim, s);
        let m = kmeans_fit(&f, k, &KMeansParams::default(), s).unwrap();
        for (i, &a) in m.assignments.iter().enumerate() {
            let d = squared_distance(f.row(i), m.centroid(a));
            for c in 0..k {
                let dc = squared_distance(f.row(i), m.centroid(c));
                prop_assert!(d < dc || (d == dc && a <= c), "row {} assigned {} but {} is closer", i, a, c);
            }
        }
        prop_assert!(m.cluster_sizes().iter().all(|&n| n > 0));
    }

    #[test]
    fn lloyd_inertia_never_rises_between_repairs(rows in 4usize..60, k in 2usize..8, s in any::<u64>()) {
        prop_assume!(k <= rows);
        let f = random_matrix(rows, 3, s);
        let params = KMeansParams { n_init: 1, ..KMeansParams::default() };
        let m = kmeans_fit(&f, k, &params, s).unwrap();
        for i in 1..m.inertia_history.len() {
            if !m.repaired_before[i] {
                let (prev, cur) = (m.inertia_history[i - 1], m.inertia_history[i]);
                prop_assert!(cur <= prev * (1.0 + 1e-12) + 1e-12, "step {}: {} after {}", i, cur, prev);
            }
        }
    }

    #[test]
    fn routing_is_scale_invariant(s in any::<u64>(), scale in prop::sample::select(vec![7.3, 0.25, 3.0, 1000.0]), k in 2usize..6) {
        let a = random_matrix(30, 4, s);
        let b = random_matrix(30, 3, s ^ 1);
        let opts = ClusteringOptions::default();
        for regime in [Regime::Sdc, Regime::Cdc, Regime::Xdc] {
            let plain = route_pseudo_labels(regime, &a, &b, k, &opts, s).unwrap();
            let scaled = route_pseudo_labels(regime, &a.scaled(scale), &b.scaled(scale), k, &opts, s).unwrap();
            prop_assert_eq!(plain.labels, scaled.labels);
        }
    }
}
