//! Numerical self-checks: central finite-difference gradient checks for every
//! layer and model graph, and padding invariance of model outputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Batch;
use crate::error::Result;
use crate::models::{build_model, ModelGraph, ModelKind};
use crate::nn::{
    bce_loss, concat, concat_backward, dense_backward, dense_forward, dropout, dropout_backward,
    lstm_backward, lstm_forward, mean_pool_time, mean_pool_time_backward, Activation, DenseParams,
    LstmParams, Tensor,
};
use crate::seed::rng_for;

pub const FD_STEP: f64 = 1e-6;

/// `|a - n| / (|a| + |n|)` in the Euclidean norm; 0 when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let den = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if den == 0.0 {
        0.0
    } else {
        diff / den
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(x);
            x[i] = orig - h;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A batch carrying all three channels, with the given per-row sentence and
/// audio lengths; pads are zero.
pub fn toy_batch(
    dim_w: usize,
    dim_a: usize,
    seq_lens: &[usize],
    audio_lens: &[usize],
    seed: u64,
) -> Batch {
    assert_eq!(seq_lens.len(), audio_lens.len());
    let mut rng = rng_for(seed, &[0x70e]);
    let b = seq_lens.len();
    let l = seq_lens.iter().copied().max().unwrap_or(0);
    let t = audio_lens.iter().copied().max().unwrap_or(0);
    let mut word = Tensor::zeros(&[b, l, dim_w]);
    let mut time = Tensor::zeros(&[b, l, 2]);
    let mut audio = Tensor::zeros(&[b, t, dim_a]);
    let mut seq_mask = vec![false; b * l];
    let mut audio_mask = vec![false; b * t];
    for i in 0..b {
        let n = seq_lens[i];
        word.row_mut(i)[..n * dim_w].copy_from_slice(&normal_vec(n * dim_w, &mut rng));
        let mut clock = 0.0;
        for k in 0..n {
            let start = clock + rng.random_range(0.0..0.2);
            let end = start + rng.random_range(0.2..0.6);
            time.row_mut(i)[2 * k] = start;
            time.row_mut(i)[2 * k + 1] = end;
            clock = end;
        }
        seq_mask[i * l..i * l + n].fill(true);
        let m = audio_lens[i];
        audio.row_mut(i)[..m * dim_a].copy_from_slice(&normal_vec(m * dim_a, &mut rng));
        audio_mask[i * t..i * t + m].fill(true);
    }
    Batch {
        rows: (0..b).collect(),
        labels: (0..b).map(|i| (i % 2) as f64).collect(),
        seq_len: l,
        seq_mask,
        word: Some(word),
        time: Some(time),
        audio_len: t,
        audio_mask,
        audio: Some(audio),
    }
}

fn replay(seed: u64) -> ChaCha8Rng {
    rng_for(seed, &[0xd0])
}

fn graph_loss(g: &ModelGraph, batch: &Batch, training: bool, seed: u64) -> f64 {
    let (p, _) = g
        .forward(batch, training, &mut replay(seed))
        .expect("forward");
    bce_loss(&p, &batch.labels).0
}

/// Per-tensor relative error of the BCE-loss gradient of one model graph.
/// In training mode the dropout masks are replayed from a fixed seed, so
/// every perturbed evaluation sees the same masks.
pub fn check_graph(
    g: &ModelGraph,
    batch: &Batch,
    training: bool,
    seed: u64,
) -> Result<Vec<(&'static str, f64)>> {
    let (p, cache) = g.forward(batch, training, &mut replay(seed))?;
    let (_, dp) = bce_loss(&p, &batch.labels);
    let grads = g.backward(&cache, &dp)?;
    let analytic: Vec<Vec<f64>> = grads.flat().iter().map(|s| s.to_vec()).collect();
    let names: Vec<&'static str> = g.named_params().iter().map(|(n, _)| *n).collect();

    let mut work = g.clone();
    let mut out = Vec::new();
    for (k, name) in names.into_iter().enumerate() {
        let mut values = work.params_mut()[k].to_vec();
        let numeric = numeric_gradient(&mut values, FD_STEP, |v| {
            work.params_mut()[k].copy_from_slice(v);
            graph_loss(&work, batch, training, seed)
        });
        work.params_mut()[k].copy_from_slice(&values);
        out.push((name, relative_error(&analytic[k], &numeric)));
    }
    Ok(out)
}

/// All six graphs at toy sizes, in both modes. Returns `(label, worst error)`.
pub fn check_all_graphs(dim_w: usize, dim_a: usize, seed: u64) -> Result<Vec<(String, f64)>> {
    let batch = toy_batch(dim_w, dim_a, &[3, 6, 1, 4], &[5, 2, 6, 3], seed);
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        let g = build_model(kind, dim_w, dim_a, seed)?;
        for training in [false, true] {
            let worst = check_graph(&g, &batch, training, seed)?
                .into_iter()
                .map(|(_, e)| e)
                .fold(0.0, f64::max);
            let mode = if training { "train" } else { "infer" };
            out.push((format!("{}/{mode}", kind.name()), worst));
        }
    }
    Ok(out)
}

fn lstm_tensor(p: &mut LstmParams, which: usize) -> &mut Tensor {
    match which {
        0 => &mut p.w,
        1 => &mut p.u,
        _ => &mut p.b,
    }
}

fn weighted(y: &Tensor, c: &[f64]) -> f64 {
    y.data().iter().zip(c).map(|(a, b)| a * b).sum()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::from_vec(shape, data).expect("shape")
}

/// Each layer's backward pass against central differences of a random
/// linear functional of its output. Returns `(label, relative error)`.
pub fn check_layers(seed: u64) -> Result<Vec<(String, f64)>> {
    let mut rng = rng_for(seed, &[0x1a7]);
    let mut out = Vec::new();
    let (b, l, d, units) = (3, 5, 4, 3);

    for act in [Activation::Sigmoid, Activation::Identity] {
        let mut p = DenseParams::new(d, 2, act, &mut rng);
        let x = tensor(&[b, d], normal_vec(b * d, &mut rng));
        let c = normal_vec(b * 2, &mut rng);
        let (y, cache) = dense_forward(&x, &p)?;
        let (dx, g) = dense_backward(&p, &cache, &tensor(y.shape(), c.clone()))?;
        let tag = format!("dense/{act:?}").to_lowercase();
        let mut xv = x.data().to_vec();
        let num = numeric_gradient(&mut xv, FD_STEP, |v| {
            weighted(
                &dense_forward(&tensor(&[b, d], v.to_vec()), &p).unwrap().0,
                &c,
            )
        });
        out.push((format!("{tag}/x"), relative_error(dx.data(), &num)));
        let mut wv = p.w.data().to_vec();
        let num = numeric_gradient(&mut wv, FD_STEP, |v| {
            p.w.data_mut().copy_from_slice(v);
            weighted(&dense_forward(&x, &p).unwrap().0, &c)
        });
        p.w.data_mut().copy_from_slice(&wv);
        out.push((format!("{tag}/w"), relative_error(g.w.data(), &num)));
        let mut bv = p.b.data().to_vec();
        let num = numeric_gradient(&mut bv, FD_STEP, |v| {
            p.b.data_mut().copy_from_slice(v);
            weighted(&dense_forward(&x, &p).unwrap().0, &c)
        });
        out.push((format!("{tag}/b"), relative_error(g.b.data(), &num)));
    }

    // LSTM: both outputs feed the functional, with dropout active.
    let mut p = LstmParams::new(d, units, 0.3, 0.3, &mut rng);
    let x = tensor(&[b, l, d], normal_vec(b * l * d, &mut rng));
    let mut mask = vec![false; b * l];
    for (i, n) in [5, 2, 4].into_iter().enumerate() {
        mask[i * l..i * l + n].fill(true);
    }
    let c_seq = normal_vec(b * l * units, &mut rng);
    let c_last = normal_vec(b * units, &mut rng);
    let f = |x: &Tensor, p: &LstmParams| {
        let (o, _) = lstm_forward(x, &mask, p, true, &mut replay(seed)).unwrap();
        weighted(&o.h_seq, &c_seq) + weighted(&o.h_last, &c_last)
    };
    let (_, cache) = lstm_forward(&x, &mask, &p, true, &mut replay(seed))?;
    let (dx, g) = lstm_backward(
        &p,
        &cache,
        Some(&tensor(&[b, l, units], c_seq.clone())),
        &tensor(&[b, units], c_last.clone()),
    )?;
    let mut xv = x.data().to_vec();
    let num = numeric_gradient(&mut xv, FD_STEP, |v| f(&tensor(&[b, l, d], v.to_vec()), &p));
    out.push(("lstm/x".into(), relative_error(dx.data(), &num)));
    for (name, which) in [("lstm/w", 0), ("lstm/u", 1), ("lstm/b", 2)] {
        let mut values = lstm_tensor(&mut p, which).data().to_vec();
        let num = numeric_gradient(&mut values, FD_STEP, |v| {
            lstm_tensor(&mut p, which).data_mut().copy_from_slice(v);
            f(&x, &p)
        });
        lstm_tensor(&mut p, which)
            .data_mut()
            .copy_from_slice(&values);
        let analytic = [&g.w, &g.u, &g.b][which];
        out.push((name.into(), relative_error(analytic.data(), &num)));
    }

    // Masked mean pooling.
    let t = 4;
    let xa = tensor(&[b, t, d], normal_vec(b * t * d, &mut rng));
    let mut am = vec![false; b * t];
    for (i, n) in [4, 1, 3].into_iter().enumerate() {
        am[i * t..i * t + n].fill(true);
    }
    let c = normal_vec(b * d, &mut rng);
    let dx = mean_pool_time_backward(&tensor(&[b, d], c.clone()), &am, t);
    let mut xv = xa.data().to_vec();
    let num = numeric_gradient(&mut xv, FD_STEP, |v| {
        weighted(
            &mean_pool_time(&tensor(&[b, t, d], v.to_vec()), &am).unwrap(),
            &c,
        )
    });
    out.push(("mean_pool_time/x".into(), relative_error(dx.data(), &num)));

    // Dropout with a replayed mask.
    let xd = tensor(&[b, d], normal_vec(b * d, &mut rng));
    let (_, m) = dropout(&xd, 0.4, true, &mut replay(seed));
    let dx = dropout_backward(&tensor(&[b, d], c.clone()), m.as_deref());
    let mut xv = xd.data().to_vec();
    let num = numeric_gradient(&mut xv, FD_STEP, |v| {
        let (y, _) = dropout(&tensor(&[b, d], v.to_vec()), 0.4, true, &mut replay(seed));
        weighted(&y, &c)
    });
    out.push(("dropout/x".into(), relative_error(dx.data(), &num)));

    // Concatenation of two blocks.
    let (w1, w2) = (2, 3);
    let x1 = tensor(&[b, w1], normal_vec(b * w1, &mut rng));
    let x2 = tensor(&[b, w2], normal_vec(b * w2, &mut rng));
    let c = normal_vec(b * (w1 + w2), &mut rng);
    let parts = concat_backward(&tensor(&[b, w1 + w2], c.clone()), &[w1, w2]);
    let mut v1 = x1.data().to_vec();
    let num = numeric_gradient(&mut v1, FD_STEP, |v| {
        weighted(&concat(&[&tensor(&[b, w1], v.to_vec()), &x2]).unwrap(), &c)
    });
    out.push(("concat/x1".into(), relative_error(parts[0].data(), &num)));
    let mut v2 = x2.data().to_vec();
    let num = numeric_gradient(&mut v2, FD_STEP, |v| {
        weighted(&concat(&[&x1, &tensor(&[b, w2], v.to_vec())]).unwrap(), &c)
    });
    out.push(("concat/x2".into(), relative_error(parts[1].data(), &num)));

    // Binary cross-entropy away from the clamp.
    let probs: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..0.95)).collect();
    let labels: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
    let (_, grad) = bce_loss(&probs, &labels);
    let mut pv = probs.clone();
    let num = numeric_gradient(&mut pv, FD_STEP, |v| bce_loss(v, &labels).0);
    out.push(("bce/p".into(), relative_error(&grad, &num)));
    Ok(out)
}

/// Largest change in any output probability when `batch` is re-padded by
/// `extra_seq` steps and `extra_audio` frames, in both modes.
pub fn padding_deviation(
    g: &ModelGraph,
    batch: &Batch,
    extra_seq: usize,
    extra_audio: usize,
    seed: u64,
) -> Result<f64> {
    let padded = batch.pad_to(batch.seq_len + extra_seq, batch.audio_len + extra_audio);
    let mut worst: f64 = 0.0;
    for training in [false, true] {
        let (a, _) = g.forward(batch, training, &mut replay(seed))?;
        let (b, _) = g.forward(&padded, training, &mut replay(seed))?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0], &[1.0]), 0.0);
        assert!((relative_error(&[1.0], &[-1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn numeric_gradient_of_square() {
        let mut x = vec![3.0];
        let g = numeric_gradient(&mut x, 1e-6, |v| v[0] * v[0]);
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert_eq!(x, vec![3.0]);
    }
}
