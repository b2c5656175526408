use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `out x in`
    pub w: Tensor,
    pub b: Tensor,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    x: Tensor,
    y: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Tensor,
    pub b: Tensor,
}

impl DenseParams {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DenseParams {
            w: glorot_uniform(out_dim, in_dim, rng),
            b: Tensor::zeros(&[out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// `y = act(x W^T + b)` for `x` of shape `B x in`.
pub fn dense_forward(x: &Tensor, p: &DenseParams) -> Result<(Tensor, DenseCache)> {
    x.expect_rank("dense_forward", 2)?;
    if x.shape()[1] != p.in_dim() {
        return Err(Error::shape(
            "dense_forward",
            format!("input {:?} vs weights {:?}", x.shape(), p.w.shape()),
        ));
    }
    let batch = x.shape()[0];
    let mut y = Tensor::zeros(&[batch, p.out_dim()]);
    for i in 0..batch {
        let out = y.row_mut(i);
        out.copy_from_slice(p.b.data());
        matvec_acc(p.w.data(), x.row(i), out);
        if p.activation == Activation::Sigmoid {
            out.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }
    Ok((y.clone(), DenseCache { x: x.clone(), y }))
}

/// Returns `(dL/dx, parameter gradients)` given `dL/dy`.
pub fn dense_backward(
    p: &DenseParams,
    cache: &DenseCache,
    dy: &Tensor,
) -> Result<(Tensor, DenseGrads)> {
    if dy.shape() != cache.y.shape() {
        return Err(Error::shape(
            "dense_backward",
            format!("upstream {:?} vs output {:?}", dy.shape(), cache.y.shape()),
        ));
    }
    let batch = dy.shape()[0];
    let mut dx = Tensor::zeros(cache.x.shape());
    let mut grads = DenseGrads {
        w: Tensor::zeros(p.w.shape()),
        b: Tensor::zeros(p.b.shape()),
    };
    let mut dz = vec![0.0; p.out_dim()];
    for i in 0..batch {
        for (j, d) in dz.iter_mut().enumerate() {
            *d = match p.activation {
                Activation::Identity => dy.row(i)[j],
                Activation::Sigmoid => {
                    let s = cache.y.row(i)[j];
                    dy.row(i)[j] * s * (1.0 - s)
                }
            };
        }
        outer_acc(grads.w.data_mut(), &dz, cache.x.row(i));
        grads
            .b
            .data_mut()
            .iter_mut()
            .zip(&dz)
            .for_each(|(g, d)| *g += d);
        matvec_t_acc(p.w.data(), &dz, dx.row_mut(i));
    }
    Ok((dx, grads))
}
