//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use xdc::nn::{softmax_ce_loss, Activation, ClassifierHead, DenseLayer, DenseNet, Encoder, GradientTape, HeadId, Modality};

/// Small encoder with random shape (1–3 layers, widths 1–5, one or two heads
/// of 2–5 classes), mixed activations and non-zero biases.
pub fn random_encoder(rng: &mut impl Rng) -> Encoder {
    let depth = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=5)];
    for _ in 0..depth {
        dims.push(rng.random_range(1..=5));
    }
    let layers = dims
        .windows(2)
        .map(|w| {
            let act = if rng.random_bool(0.75) { Activation::Relu } else { Activation::Identity };
            let mut l = DenseLayer::random(w[0], w[1], act, rng);
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            l
        })
        .collect();
    let body = DenseNet::new(layers).unwrap();
    let feat = body.output_dim();
    let ids: &[HeadId] = if rng.random_bool(0.5) { &[HeadId::Own] } else { &[HeadId::Own, HeadId::Cross] };
    let heads = ids
        .iter()
        .map(|&id| {
            let mut h = ClassifierHead::random(id, feat, rng.random_range(2..=5), rng);
            h.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            h
        })
        .collect();
    Encoder::new(Modality::Visual, body, heads).unwrap()
}

/// Summed cross-entropy over every head.
pub fn total_loss(enc: &Encoder, x: &[f64], labels: &[usize]) -> f64 {
    enc.heads
        .iter()
        .zip(labels)
        .map(|(h, &y)| softmax_ce_loss(&enc.forward(x, h.head_id).unwrap().logits, y).unwrap().0)
        .sum()
}

/// Smallest |pre-activation| of any ReLU unit; finite differences are only
/// meaningful away from the kink.
pub fn kink_margin(enc: &Encoder, x: &[f64]) -> f64 {
    let mut h = x.to_vec();
    let mut margin = f64::INFINITY;
    for l in &enc.body.layers {
        let z = l.affine(&h);
        if l.activation == Activation::Relu {
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
        }
        h = z.into_iter().map(|v| l.activation.apply(v)).collect();
    }
    margin
}

/// Analytic gradient of [`total_loss`], summed over every head.
pub fn analytic_gradient(enc: &Encoder, x: &[f64], labels: &[usize]) -> GradientTape {
    let mut tape = GradientTape::for_encoder(enc);
    for (head, &y) in labels.iter().enumerate() {
        let fwd = enc.forward(x, enc.heads[head].head_id).unwrap();
        let (_, d) = softmax_ce_loss(&fwd.logits, y).unwrap();
        enc.accumulate_backward(&fwd, &d, &mut tape, true).unwrap();
    }
    tape
}

/// Central difference of [`total_loss`] in one parameter.
pub fn numeric_partial(enc: &Encoder, x: &[f64], labels: &[usize], buffer: usize, j: usize, h: f64) -> f64 {
    let mut plus = enc.clone();
    plus.param_buffers_mut()[buffer][j] += h;
    let mut minus = enc.clone();
    minus.param_buffers_mut()[buffer][j] -= h;
    (total_loss(&plus, x, labels) - total_loss(&minus, x, labels)) / (2.0 * h)
}

/// Input with every ReLU pre-activation at least 1e-3 from the kink.
pub fn input_off_kinks(enc: &Encoder, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..enc.input_dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
        if kink_margin(enc, &x) > 1e-3 {
            return x;
        }
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}
