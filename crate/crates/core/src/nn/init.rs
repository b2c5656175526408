use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;

/// Uniform on `±sqrt(6 / (fan_in + fan_out))` for a `fan_out x fan_in` weight.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::from_vec(&[fan_out, fan_in], data).unwrap()
}

/// `rows x cols` matrix whose shorter side is orthonormal (Gram-Schmidt on a
/// Gaussian draw, signs fixed so the triangular factor has a positive diagonal).
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // `short` vectors of length `tall`
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..tall).map(|_| StandardNormal.sample(rng)).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    let mut t = Tensor::zeros(&[rows, cols]);
    let d = t.data_mut();
    for (k, q) in basis.iter().enumerate() {
        for (i, &v) in q.iter().enumerate() {
            if rows >= cols {
                d[i * cols + k] = v;
            } else {
                d[k * cols + i] = v;
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v = glorot_uniform(1, 1, &mut rng).data()[0];
            assert!(v.abs() <= 3f64.sqrt());
        }
        let t = glorot_uniform(64, 300, &mut rng);
        let limit = (6.0f64 / 364.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn glorot_reproducible() {
        let a = glorot_uniform(4, 3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = glorot_uniform(4, 3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn orthogonal_columns() {
        let t = orthogonal(12, 3, &mut ChaCha8Rng::seed_from_u64(2));
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..12)
                    .map(|i| t.data()[i * 3 + a] * t.data()[i * 3 + b])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }
}
