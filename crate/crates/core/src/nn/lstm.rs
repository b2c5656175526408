//! Single-layer LSTM with trailing-pad masking, input and recurrent dropout,
//! and backpropagation through time.
//!
//! Gate rows are laid out `[input, forget, candidate, output]`, each `units` long.

use rand::Rng;

use super::init::{glorot_uniform, orthogonal};
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub units: usize,
    /// `4·units x input_dim`
    pub w: Tensor,
    /// `4·units x units`
    pub u: Tensor,
    /// `4·units`
    pub b: Tensor,
    pub dropout: f64,
    pub recurrent_dropout: f64,
}

impl LstmParams {
    /// Glorot input weights, orthogonal recurrent weights, zero bias with forget slice at 1.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        units: usize,
        dropout: f64,
        recurrent_dropout: f64,
        rng: &mut R,
    ) -> Self {
        assert!((0.0..1.0).contains(&dropout) && (0.0..1.0).contains(&recurrent_dropout));
        let w = glorot_uniform(4 * units, input_dim, rng);
        let u = orthogonal(4 * units, units, rng);
        let mut b = Tensor::zeros(&[4 * units]);
        b.data_mut()[units..2 * units]
            .iter_mut()
            .for_each(|v| *v = 1.0);
        LstmParams {
            units,
            w,
            u,
            b,
            dropout,
            recurrent_dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
struct Step {
    x_in: Vec<f64>,
    h_in: Vec<f64>,
    /// post-activation gates, `4·units`
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct SeqCache {
    len: usize,
    input_mask: Option<Vec<f64>>,
    recurrent_mask: Option<Vec<f64>>,
    steps: Vec<Step>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    seqs: Vec<SeqCache>,
    max_len: usize,
    input_dim: usize,
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// `B x L x units`; padded steps repeat the last real state.
    pub h_seq: Tensor,
    /// `B x units`, state at each sequence's final real step.
    pub h_last: Tensor,
}

/// Length of the true prefix of a mask row; errors if a true follows a false.
pub fn prefix_len(mask: &[bool]) -> Result<usize> {
    let len = mask.iter().take_while(|&&m| m).count();
    if mask[len..].iter().any(|&m| m) {
        return Err(Error::shape(
            "mask",
            "padding must be trailing (true after false)",
        ));
    }
    Ok(len)
}

fn dropout_mask<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

/// Runs the recurrence over `x: B x L x in` with `mask: B x L` (row-major).
pub fn lstm_forward<R: Rng + ?Sized>(
    x: &Tensor,
    mask: &[bool],
    p: &LstmParams,
    training: bool,
    rng: &mut R,
) -> Result<(LstmOutput, LstmCache)> {
    x.expect_rank("lstm_forward", 3)?;
    let (batch, max_len, input_dim) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if input_dim != p.input_dim() {
        return Err(Error::shape(
            "lstm_forward",
            format!("input {:?} vs kernel {:?}", x.shape(), p.w.shape()),
        ));
    }
    if mask.len() != batch * max_len {
        return Err(Error::shape(
            "lstm_forward",
            format!("mask has {} entries for input {:?}", mask.len(), x.shape()),
        ));
    }
    let units = p.units;
    let mut h_seq = Tensor::zeros(&[batch, max_len, units]);
    let mut h_last = Tensor::zeros(&[batch, units]);
    let mut seqs = Vec::with_capacity(batch);

    for bi in 0..batch {
        let len = prefix_len(&mask[bi * max_len..(bi + 1) * max_len])?;
        let input_mask =
            (training && p.dropout > 0.0).then(|| dropout_mask(input_dim, p.dropout, rng));
        let recurrent_mask = (training && p.recurrent_dropout > 0.0)
            .then(|| dropout_mask(units, p.recurrent_dropout, rng));

        let mut h = vec![0.0; units];
        let mut c = vec![0.0; units];
        let mut steps = Vec::with_capacity(len);
        let xb = x.row(bi);
        for t in 0..len {
            let mut x_in = xb[t * input_dim..(t + 1) * input_dim].to_vec();
            if let Some(m) = &input_mask {
                x_in.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            let mut h_in = h.clone();
            if let Some(m) = &recurrent_mask {
                h_in.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            let mut z = p.b.data().to_vec();
            matvec_acc(p.w.data(), &x_in, &mut z);
            matvec_acc(p.u.data(), &h_in, &mut z);
            for (k, v) in z.iter_mut().enumerate() {
                *v = if (2 * units..3 * units).contains(&k) {
                    v.tanh()
                } else {
                    sigmoid(*v)
                };
            }
            let c_prev = c.clone();
            for j in 0..units {
                c[j] = z[units + j] * c_prev[j] + z[j] * z[2 * units + j];
                h[j] = z[3 * units + j] * c[j].tanh();
            }
            h_seq.row_mut(bi)[t * units..(t + 1) * units].copy_from_slice(&h);
            steps.push(Step {
                x_in,
                h_in,
                gates: z,
                c_prev,
                c: c.clone(),
            });
        }
        for t in len..max_len {
            h_seq.row_mut(bi)[t * units..(t + 1) * units].copy_from_slice(&h);
        }
        h_last.row_mut(bi).copy_from_slice(&h);
        seqs.push(SeqCache {
            len,
            input_mask,
            recurrent_mask,
            steps,
        });
    }

    Ok((
        LstmOutput { h_seq, h_last },
        LstmCache {
            seqs,
            max_len,
            input_dim,
        },
    ))
}

/// Backpropagation through time. `dh_seq` (optional, `B x L x units`) and
/// `dh_last` (`B x units`) are upstream gradients of the two outputs.
pub fn lstm_backward(
    p: &LstmParams,
    cache: &LstmCache,
    dh_seq: Option<&Tensor>,
    dh_last: &Tensor,
) -> Result<(Tensor, LstmGrads)> {
    let units = p.units;
    let batch = cache.seqs.len();
    if dh_last.shape() != [batch, units] {
        return Err(Error::shape(
            "lstm_backward",
            format!("dh_last {:?}", dh_last.shape()),
        ));
    }
    if let Some(d) = dh_seq {
        if d.shape() != [batch, cache.max_len, units] {
            return Err(Error::shape(
                "lstm_backward",
                format!("dh_seq {:?}", d.shape()),
            ));
        }
    }
    let in_dim = cache.input_dim;
    let mut dx = Tensor::zeros(&[batch, cache.max_len, in_dim]);
    let mut grads = LstmGrads {
        w: Tensor::zeros(p.w.shape()),
        u: Tensor::zeros(p.u.shape()),
        b: Tensor::zeros(p.b.shape()),
    };

    let mut dz = vec![0.0; 4 * units];
    let mut dx_in = vec![0.0; in_dim];
    let mut dh_in = vec![0.0; units];
    for (bi, seq) in cache.seqs.iter().enumerate() {
        if seq.len == 0 {
            continue;
        }
        let seq_grad = |t: usize| dh_seq.map(|d| &d.row(bi)[t * units..(t + 1) * units]);
        let mut dh = dh_last.row(bi).to_vec();
        // padded outputs copy the final real state
        for t in (seq.len - 1)..cache.max_len {
            if let Some(g) = seq_grad(t) {
                dh.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        let mut dc = vec![0.0; units];
        for t in (0..seq.len).rev() {
            if t < seq.len - 1 {
                if let Some(g) = seq_grad(t) {
                    dh.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            let s = &seq.steps[t];
            let (gi, gf, gg, go) = (
                &s.gates[..units],
                &s.gates[units..2 * units],
                &s.gates[2 * units..3 * units],
                &s.gates[3 * units..],
            );
            for j in 0..units {
                let tc = s.c[j].tanh();
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * go[j] * (1.0 - tc * tc);
                let d_i = dc[j] * gg[j];
                let d_g = dc[j] * gi[j];
                let d_f = dc[j] * s.c_prev[j];
                dz[j] = d_i * gi[j] * (1.0 - gi[j]);
                dz[units + j] = d_f * gf[j] * (1.0 - gf[j]);
                dz[2 * units + j] = d_g * (1.0 - gg[j] * gg[j]);
                dz[3 * units + j] = d_o * go[j] * (1.0 - go[j]);
                dc[j] *= gf[j];
            }
            outer_acc(grads.w.data_mut(), &dz, &s.x_in);
            outer_acc(grads.u.data_mut(), &dz, &s.h_in);
            grads
                .b
                .data_mut()
                .iter_mut()
                .zip(&dz)
                .for_each(|(g, d)| *g += d);

            dx_in.fill(0.0);
            matvec_t_acc(p.w.data(), &dz, &mut dx_in);
            if let Some(m) = &seq.input_mask {
                dx_in.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            dx.row_mut(bi)[t * in_dim..(t + 1) * in_dim].copy_from_slice(&dx_in);

            dh_in.fill(0.0);
            matvec_t_acc(p.u.data(), &dz, &mut dh_in);
            if let Some(m) = &seq.recurrent_mask {
                dh_in.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            dh.copy_from_slice(&dh_in);
        }
    }
    Ok((dx, grads))
}
