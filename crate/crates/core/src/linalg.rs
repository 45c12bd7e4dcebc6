//! Small dense symmetric linear algebra used by the Fréchet metric.
//!
//! A cyclic Jacobi eigensolver is enough at the feature dimensions this
//! crate works with (tens to a few hundred); it is deterministic and has no
//! external dependencies.

use alloc::vec;
use alloc::vec::Vec;

/// Dense square matrix, row-major.
#[derive(Debug, Clone)]
pub struct SquareMat {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMat {
    pub fn zeros(n: usize) -> Self {
        SquareMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SquareMat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn matmul(&self, other: &SquareMat) -> SquareMat {
        let n = self.n;
        let mut out = SquareMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, m);
                self.set(j, i, m);
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in the columns of
/// the returned matrix: `A = V diag(w) V^T`.
pub fn sym_eigen(a: &SquareMat) -> (Vec<f64>, SquareMat) {
    let n = a.n;
    let mut m = a.clone();
    m.symmetrize();
    let mut v = SquareMat::identity(n);
    if n == 1 {
        return (vec![m.get(0, 0)], v);
    }

    let scale = m.data.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    let tol = 1e-14 * scale;

    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m.get(i, j).abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                // Stable tangent of the rotation angle.
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(1.0 + theta * theta))
                } else {
                    1.0 / (theta - libm::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let akp = m.get(k, p);
                    let akq = m.get(k, q);
                    m.set(k, p, c * akp - s * akq);
                    m.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = m.get(p, k);
                    let aqk = m.get(q, k);
                    m.set(p, k, c * apk - s * aqk);
                    m.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let w = (0..n).map(|i| m.get(i, i)).collect();
    (w, v)
}

/// Symmetric PSD square root `V diag(sqrt(max(w, 0))) V^T`.
///
/// Tiny negative eigenvalues from round-off are clamped to zero.
pub fn sqrtm_psd(a: &SquareMat) -> SquareMat {
    let n = a.n;
    let (w, v) = sym_eigen(a);
    let mut out = SquareMat::zeros(n);
    for (k, &wk) in w.iter().enumerate() {
        let s = libm::sqrt(wk.max(0.0));
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = v.get(i, k);
            if vik == 0.0 {
                continue;
            }
            for j in 0..n {
                out.data[i * n + j] += s * vik * v.get(j, k);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_psd(n: usize, rng: &mut Rng) -> SquareMat {
        // B^T B is PSD.
        let mut b = SquareMat::zeros(n);
        for v in b.data.iter_mut() {
            *v = rng.normal();
        }
        let mut bt = SquareMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                bt.set(i, j, b.get(j, i));
            }
        }
        bt.matmul(&b)
    }

    #[test]
    fn eigen_reconstructs() {
        let mut rng = Rng::seed(4);
        for &n in &[1usize, 2, 5, 12] {
            let a = random_psd(n, &mut rng);
            let (w, v) = sym_eigen(&a);
            // V diag(w) V^T == A
            let mut rebuilt = SquareMat::zeros(n);
            for (k, &wk) in w.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        rebuilt.data[i * n + j] += wk * v.get(i, k) * v.get(j, k);
                    }
                }
            }
            for (x, y) in rebuilt.data.iter().zip(&a.data) {
                assert!((x - y).abs() < 1e-9, "n={n}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let mut rng = Rng::seed(9);
        let a = random_psd(6, &mut rng);
        let s = sqrtm_psd(&a);
        let ss = s.matmul(&s);
        for (x, y) in ss.data.iter().zip(&a.data) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }
}
