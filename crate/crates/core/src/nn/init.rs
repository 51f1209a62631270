use rand::Rng;
use rand_distr::StandardNormal;

/// `rows x cols` matrix with orthonormal columns (rows >= cols) or rows
/// (rows < cols), scaled by `gain`. Row-major.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    // Columns of a tall Gaussian matrix, orthonormalised by modified Gram-Schmidt.
    let mut q: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..tall).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..short {
        for i in 0..j {
            let d: f64 = q[j].iter().zip(&q[i]).map(|(a, b)| a * b).sum();
            let qi = q[i].clone();
            q[j].iter_mut().zip(&qi).for_each(|(a, b)| *a -= d * b);
        }
        let n = q[j].iter().map(|a| a * a).sum::<f64>().sqrt();
        q[j].iter_mut().for_each(|a| *a /= n);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = gain * if rows >= cols { q[c][r] } else { q[r][c] };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn columns_or_rows_are_orthonormal() {
        let mut rng = stream(1, Purpose::Init, 0);
        for &(r, c) in &[(8usize, 3usize), (3, 8), (5, 5)] {
            let w = orthogonal(r, c, 2.0, &mut rng);
            let (outer, inner) = if r >= c { (c, r) } else { (r, c) };
            let at = |i: usize, k: usize| if r >= c { w[k * c + i] } else { w[i * c + k] };
            for i in 0..outer {
                for j in 0..outer {
                    let d: f64 = (0..inner).map(|k| at(i, k) * at(j, k)).sum();
                    let expected = if i == j { 4.0 } else { 0.0 };
                    assert!((d - expected).abs() < 1e-12, "{r}x{c}: {d}");
                }
            }
        }
    }
}
