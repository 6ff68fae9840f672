//! Real tridiagonal matrices and the Thomas algorithm.

use num_complex::Complex64;

/// A real `n x n` tridiagonal matrix. `lower[i]` sits at `(i+1, i)` and
/// `upper[i]` at `(i, i+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TridiagMatrix {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TridiagMatrix {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "empty tridiagonal matrix");
        assert_eq!(lower.len() + 1, diag.len());
        assert_eq!(upper.len() + 1, diag.len());
        Self { lower, diag, upper }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![0.0; n - 1], vec![1.0; n], vec![0.0; n - 1])
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower == self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.lower[j]
        } else if j == i + 1 {
            self.upper[i]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `y = A x` for a complex vector.
    pub fn mul_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = x[i] * self.diag[i];
                if i > 0 {
                    acc += x[i - 1] * self.lower[i - 1];
                }
                if i + 1 < n {
                    acc += x[i + 1] * self.upper[i];
                }
                acc
            })
            .collect()
    }

    /// Forward-elimination coefficients of the Thomas algorithm. No pivoting:
    /// the caller guarantees diagonal dominance (or positive definiteness).
    pub fn factor(&self) -> ThomasFactor {
        let n = self.len();
        let mut upper_mod = vec![0.0; n.saturating_sub(1)];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = self.diag[0];
        inv_pivot[0] = 1.0 / pivot;
        for i in 1..n {
            upper_mod[i - 1] = self.upper[i - 1] * inv_pivot[i - 1];
            pivot = self.diag[i] - self.lower[i - 1] * upper_mod[i - 1];
            inv_pivot[i] = 1.0 / pivot;
        }
        ThomasFactor {
            lower: self.lower.clone(),
            upper_mod,
            inv_pivot,
        }
    }
}

/// Reusable Thomas factorization; a real factor solves complex right-hand
/// sides by acting on real and imaginary parts together.
#[derive(Clone, Debug)]
pub struct ThomasFactor {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ThomasFactor {
    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        let n = self.inv_pivot.len();
        assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            let prev = rhs[i - 1];
            rhs[i] = (rhs[i] - prev * self.lower[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            let next = rhs[i + 1];
            rhs[i] -= next * self.upper_mod[i];
        }
    }

    pub fn solve_real_in_place(&self, rhs: &mut [f64]) {
        let n = self.inv_pivot.len();
        assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - rhs[i - 1] * self.lower[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= rhs[i + 1] * self.upper_mod[i];
        }
    }
}
