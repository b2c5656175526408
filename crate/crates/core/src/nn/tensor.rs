use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `i` of a tensor viewed as `shape[0] x rest`.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_width();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.row_width();
        &mut self.data[i * w..(i + 1) * w]
    }

    fn row_width(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.shape.len() != rank {
            return Err(Error::shape(
                op,
                format!("expected rank {rank}, got shape {:?}", self.shape),
            ));
        }
        Ok(())
    }
}

/// `y += A x` for row-major `A` of shape `rows x x.len()`.
pub(crate) fn matvec_acc(a: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (r, out) in y.iter_mut().enumerate() {
        let row = &a[r * cols..(r + 1) * cols];
        *out += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
}

/// `y += A^T v` for row-major `A` of shape `v.len() x y.len()`.
pub(crate) fn matvec_t_acc(a: &[f64], v: &[f64], y: &mut [f64]) {
    let cols = y.len();
    for (r, &s) in v.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let row = &a[r * cols..(r + 1) * cols];
        for (o, w) in y.iter_mut().zip(row) {
            *o += w * s;
        }
    }
}

/// `G += u v^T` for row-major `G` of shape `u.len() x v.len()`.
pub(crate) fn outer_acc(g: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (r, &s) in u.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for (o, x) in g[r * cols..(r + 1) * cols].iter_mut().zip(v) {
            *o += s * x;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checked() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        let t = Tensor::from_vec(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
