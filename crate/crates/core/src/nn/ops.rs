//! Parameter-free layers: masked mean pooling, dropout, concatenation, and
//! the binary cross-entropy loss.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Mean over the true steps of each sequence: `B x T x d -> B x d`.
pub fn mean_pool_time(x: &Tensor, mask: &[bool]) -> Result<Tensor> {
    x.expect_rank("mean_pool_time", 3)?;
    let (batch, steps, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if mask.len() != batch * steps {
        return Err(Error::shape(
            "mean_pool_time",
            format!("mask {} for {:?}", mask.len(), x.shape()),
        ));
    }
    let mut y = Tensor::zeros(&[batch, d]);
    for b in 0..batch {
        let m = &mask[b * steps..(b + 1) * steps];
        let n = m.iter().filter(|&&v| v).count();
        if n == 0 {
            return Err(Error::shape(
                "mean_pool_time",
                format!("sequence {b} has no real steps"),
            ));
        }
        let row = x.row(b);
        let out = y.row_mut(b);
        for t in (0..steps).filter(|&t| m[t]) {
            out.iter_mut()
                .zip(&row[t * d..(t + 1) * d])
                .for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
    }
    Ok(y)
}

pub fn mean_pool_time_backward(dy: &Tensor, mask: &[bool], steps: usize) -> Tensor {
    let (batch, d) = (dy.shape()[0], dy.shape()[1]);
    let mut dx = Tensor::zeros(&[batch, steps, d]);
    for b in 0..batch {
        let m = &mask[b * steps..(b + 1) * steps];
        let n = m.iter().filter(|&&v| v).count() as f64;
        let g = dy.row(b);
        let out = dx.row_mut(b);
        for t in (0..steps).filter(|&t| m[t]) {
            out[t * d..(t + 1) * d]
                .iter_mut()
                .zip(g)
                .for_each(|(o, v)| *o = v / n);
        }
    }
    dx
}

/// Inverted dropout. Returns the output and the applied scale mask (`None` at
/// inference or rate 0, where the layer is the identity).
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> (Tensor, Option<Vec<f64>>) {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if !training || rate == 0.0 {
        return (x.clone(), None);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    let mut y = x.clone();
    y.data_mut()
        .iter_mut()
        .zip(&mask)
        .for_each(|(v, m)| *v *= m);
    (y, Some(mask))
}

pub fn dropout_backward(dy: &Tensor, mask: Option<&[f64]>) -> Tensor {
    let mut dx = dy.clone();
    if let Some(m) = mask {
        dx.data_mut().iter_mut().zip(m).for_each(|(v, k)| *v *= k);
    }
    dx
}

/// Horizontal concatenation of `B x d_i` matrices in argument order.
pub fn concat(xs: &[&Tensor]) -> Result<Tensor> {
    let batch = xs.first().map(|x| x.shape()[0]).unwrap_or(0);
    for x in xs {
        x.expect_rank("concat", 2)?;
        if x.shape()[0] != batch {
            return Err(Error::shape(
                "concat",
                format!("batch {} vs {}", x.shape()[0], batch),
            ));
        }
    }
    let width: usize = xs.iter().map(|x| x.shape()[1]).sum();
    let mut y = Tensor::zeros(&[batch, width]);
    for b in 0..batch {
        let mut off = 0;
        for x in xs {
            let w = x.shape()[1];
            y.row_mut(b)[off..off + w].copy_from_slice(x.row(b));
            off += w;
        }
    }
    Ok(y)
}

/// Splits `dy` back into pieces of the given widths.
pub fn concat_backward(dy: &Tensor, widths: &[usize]) -> Vec<Tensor> {
    let batch = dy.shape()[0];
    let mut off = 0;
    widths
        .iter()
        .map(|&w| {
            let mut t = Tensor::zeros(&[batch, w]);
            for b in 0..batch {
                t.row_mut(b).copy_from_slice(&dy.row(b)[off..off + w]);
            }
            off += w;
            t
        })
        .collect()
}

pub const BCE_EPS: f64 = 1e-12;

/// Mean binary cross-entropy with probabilities clamped to `[eps, 1 - eps]`.
/// Returns the loss and `dL/dp`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(p.len(), y.len());
    let n = p.len() as f64;
    let mut loss = 0.0;
    let grad = p
        .iter()
        .zip(y)
        .map(|(&pi, &yi)| {
            let pc = pi.clamp(BCE_EPS, 1.0 - BCE_EPS);
            loss -= yi * pc.ln() + (1.0 - yi) * (1.0 - pc).ln();
            if pi != pc {
                0.0
            } else {
                (pc - yi) / (pc * (1.0 - pc)) / n
            }
        })
        .collect();
    (loss / n, grad)
}
