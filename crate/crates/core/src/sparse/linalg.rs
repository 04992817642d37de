//! Small dense kernels for the Gram systems of the pursuit refit.

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular factor of a symmetric positive-definite `k × k` matrix.
#[derive(Clone, Debug)]
pub(crate) struct Cholesky {
    k: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` when a pivot is not strictly positive.
    pub(crate) fn factor(a: &[f64], k: usize) -> Option<Self> {
        let mut l = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let mut s = a[i * k + j];
                for p in 0..j {
                    s -= l[i * k + p] * l[j * k + p];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * k + i] = s.sqrt();
                } else {
                    l[i * k + j] = s / l[j * k + j];
                }
            }
        }
        Some(Cholesky { k, l })
    }

    /// Cheap condition estimate `(max Lᵢᵢ / min Lᵢᵢ)²`.
    pub(crate) fn condition_estimate(&self) -> f64 {
        let diag = (0..self.k).map(|i| self.l[i * self.k + i]);
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), x| (lo.min(x), hi.max(x)));
        (hi / lo).powi(2)
    }

    /// Solves `L y = b` in place.
    pub(crate) fn forward(&self, b: &mut [f64]) {
        let k = self.k;
        for i in 0..k {
            let mut s = b[i];
            for p in 0..i {
                s -= self.l[i * k + p] * b[p];
            }
            b[i] = s / self.l[i * k + i];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub(crate) fn backward(&self, b: &mut [f64]) {
        let k = self.k;
        for i in (0..k).rev() {
            let mut s = b[i];
            for p in i + 1..k {
                s -= self.l[p * k + i] * b[p];
            }
            b[i] = s / self.l[i * k + i];
        }
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }
}
