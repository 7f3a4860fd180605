//! Weight initializers.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::Rng;

/// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn fan_in_uniform(n: usize, fan_in: usize, rng: &mut Rng) -> Vec<f32> {
    let bound = 1.0 / (fan_in as f32).sqrt();
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// A `rows x cols` matrix with orthonormal rows (or columns, when `rows > cols`),
/// from Gram-Schmidt on a Gaussian draw.
pub fn orthogonal(rows: usize, cols: usize, rng: &mut Rng) -> Vec<f32> {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    // `short` vectors of length `long`, orthonormalized.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(short);
    while basis.len() < short {
        let mut v: Vec<f64> = (0..long).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows >= cols { basis[c][r] as f32 } else { basis[r][c] as f32 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn orthogonal_square_is_orthonormal() {
        let mut rng = Rng::seed_from_u64(3);
        let n = 16;
        let q = orthogonal(n, n, &mut rng);
        for i in 0..n {
            for j in 0..n {
                let dot: f32 = (0..n).map(|k| q[i * n + k] * q[j * n + k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn fan_in_bound_respected() {
        let mut rng = Rng::seed_from_u64(1);
        let w = fan_in_uniform(1000, 25, &mut rng);
        assert!(w.iter().all(|v| v.abs() <= 0.2));
    }
}
