//! Dense helpers: 3×3 algebra for tangent dynamics, Gram-Schmidt QR and
//! weight initializers.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

pub fn mat3_trace(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

/// Modified Gram-Schmidt on the columns of a 3×3 matrix. Returns Q and the
/// diagonal of R.
pub fn qr3(a: &Mat3) -> (Mat3, Vec3) {
    let mut q = *a;
    let mut r = [0.0; 3];
    for j in 0..3 {
        for k in 0..j {
            let dot: f64 = (0..3).map(|i| q[i][k] * q[i][j]).sum();
            for i in 0..3 {
                q[i][j] -= dot * q[i][k];
            }
        }
        let n = (0..3).map(|i| q[i][j] * q[i][j]).sum::<f64>().sqrt();
        r[j] = n;
        if n > 0.0 {
            for row in q.iter_mut() {
                row[j] /= n;
            }
        }
    }
    (q, r)
}

/// Thin QR of a row-major `rows × cols` matrix (rows ≥ cols) by modified
/// Gram-Schmidt. Returns row-major Q (`rows × cols`) and diag(R).
pub fn qr_thin(a: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(rows >= cols && a.len() == rows * cols);
    let mut q = a.to_vec();
    let mut diag = vec![0.0; cols];
    for j in 0..cols {
        for k in 0..j {
            let dot: f64 = (0..rows).map(|i| q[i * cols + k] * q[i * cols + j]).sum();
            for i in 0..rows {
                q[i * cols + j] -= dot * q[i * cols + k];
            }
        }
        let n = (0..rows).map(|i| q[i * cols + j].powi(2)).sum::<f64>().sqrt();
        diag[j] = n;
        for i in 0..rows {
            q[i * cols + j] /= n;
        }
    }
    (q, diag)
}

/// Orthogonal initializer for a row-major `rows × cols` weight, scaled by
/// `gain`. The smaller dimension gets orthonormal vectors.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g: Vec<f64> = (0..r * c).map(|_| rng.sample(StandardNormal)).collect();
    let (mut q, d) = qr_thin(&g, r, c);
    // sign convention that makes the distribution uniform (Haar)
    for j in 0..c {
        if d[j] < 0.0 {
            for i in 0..r {
                q[i * c + j] = -q[i * c + j];
            }
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = gain * if rows >= cols { q[i * c + j] } else { q[j * c + i] };
        }
    }
    out
}

/// Spectral radius estimate of a square row-major matrix from the growth
/// rate of repeated products.
pub fn spectral_radius(w: &[f64], n: usize, iters: usize, rng: &mut Rng) -> f64 {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut tail = Vec::new();
    for _ in 0..iters {
        let mut next = vec![0.0; n];
        for i in 0..n {
            next[i] = (0..n).map(|j| w[i * n + j] * v[j]).sum();
        }
        let g = norm(&next);
        if g == 0.0 {
            return 0.0;
        }
        next.iter_mut().for_each(|x| *x /= g);
        tail.push(g.ln());
        v = next;
    }
    // average the second half to skip the transient
    let h = tail.len() / 2;
    let late: f64 = tail[h..].iter().sum::<f64>() / (tail.len() - h) as f64;
    late.exp()
}

/// Rescales a square matrix so its estimated spectral radius equals `target`.
pub fn scale_to_radius(w: &mut [f64], n: usize, target: f64, iters: usize, rng: &mut Rng) {
    let r = spectral_radius(w, n, iters, rng);
    if r > 0.0 {
        let s = target / r;
        w.iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::named;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = named(0, "t", &[]);
        for (r, c) in [(8, 3), (3, 8), (5, 5)] {
            let w = orthogonal(r, c, 1.0, &mut rng);
            let small = r.min(c);
            for a in 0..small {
                for b in 0..small {
                    let dot: f64 = if r >= c {
                        (0..r).map(|i| w[i * c + a] * w[i * c + b]).sum()
                    } else {
                        (0..c).map(|j| w[a * c + j] * w[b * c + j]).sum()
                    };
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn radius_of_diagonal_matrix() {
        let mut rng = named(0, "t", &[]);
        let w = [0.5, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0, 1.0];
        let r = spectral_radius(&w, 3, 200, &mut rng);
        assert!((r - 2.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn radius_of_rotation_is_one() {
        let mut rng = named(0, "t", &[]);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let w = [c, -s, s, c];
        let r = spectral_radius(&w, 2, 50, &mut rng);
        assert!((r - 1.0).abs() < 1e-9);
    }
}
