//! Minimal dense real-matrix kernel.
//!
//! Row-major `f64` matrices with the handful of operations the rest of the
//! crate needs: products, Frobenius and operator norms, and symmetric
//! eigenvalues / singular values via cyclic Jacobi on the Gram matrix. Sized
//! for desk-scale work (dimensions in the tens), not for anything large.
//!
//! Shape mismatches are programmer errors and panic; the iterative solvers
//! return [`Error::NonConvergence`] if 100 sweeps cannot push the
//! off-diagonal mass under tolerance (they never do at these sizes).

use crate::error::{Error, Result};

/// Sweep cap for cyclic Jacobi.
const JACOBI_MAX_SWEEPS: usize = 100;
/// Off-diagonal Frobenius mass at which Jacobi stops, relative to the input scale.
const JACOBI_OFF_TOL: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Build from raw row-major entries. Panics if the length is wrong.
    ///
    /// The kernel itself is agnostic to non-finite values; the task and
    /// optimizer layers check [`Matrix::all_finite`] wherever divergence can
    /// enter and surface it as a numeric error with provenance.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        assert_eq!(
            data.len(),
            rows * cols,
            "entry count {} does not match {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix::new(rows, cols, data)
    }

    /// Build from nested slices, one per row.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "matrix needs at least one row");
        let cols = rows[0].len();
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "ragged rows in matrix literal"
        );
        Matrix::new(
            rows.len(),
            cols,
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Standard product; panics if `self.cols != other.rows`.
    pub fn mat_mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "dimension mismatch in matrix product: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self.data[i * self.cols + k];
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += aik * b;
                }
            }
        }
        Matrix::new(self.rows, other.cols, out)
    }

    /// Entrywise sum; panics on shape mismatch.
    pub fn add(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a + b)
    }

    /// Entrywise difference; panics on shape mismatch.
    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|x| x * s).collect(),
        )
    }

    fn zip_with(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        assert_eq!(
            self.shape(),
            other.shape(),
            "shape mismatch: {:?} vs {:?}",
            self.shape(),
            other.shape()
        );
        Matrix::new(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// Square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest singular value (operator 2-norm).
    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(self.singular_values()?[0])
    }

    /// All singular values, descending; length `min(rows, cols)`.
    ///
    /// Computed as square roots of the eigenvalues of the smaller Gram
    /// matrix, so values near zero are only accurate to roughly the square
    /// root of the Gram rounding error.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let gram = if self.rows < self.cols {
            // A Aᵀ, rows x rows
            self.mat_mul(&self.transpose())
        } else {
            // Aᵀ A, cols x cols
            self.transpose().mat_mul(self)
        };
        let mut eigs = symmetric_eigenvalues(&gram)?;
        for e in &mut eigs {
            *e = e.max(0.0).sqrt();
        }
        Ok(eigs)
    }
}

/// Eigenvalues of a symmetric matrix, descending, by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2` before sweeping, so tiny
/// asymmetries from accumulated rounding are harmless.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    assert_eq!(a.rows, a.cols, "eigenvalues need a square matrix");
    let n = a.rows;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a.get(i, j) + a.get(j, i));
        }
    }
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let tol = JACOBI_OFF_TOL * scale;

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&m, n);
        if off <= tol {
            break;
        }
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(Error::NonConvergence {
                residual: off,
                sweeps,
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, n, p, q);
            }
        }
        sweeps += 1;
    }

    let mut eigs: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(eigs)
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in 0..n {
            if p != q {
                s += m[p * n + q] * m[p * n + q];
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing the (p, q) entry.
fn rotate(m: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    if apq == 0.0 {
        return;
    }
    let app = m[p * n + p];
    let aqq = m[q * n + q];
    let theta = (aqq - app) / (2.0 * apq);
    // Smaller-angle root of t^2 + 2 t theta - 1 = 0.
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let mkp = m[k * n + p];
        let mkq = m[k * n + q];
        m[k * n + p] = c * mkp - s * mkq;
        m[k * n + q] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[p * n + k];
        let mqk = m[q * n + k];
        m[p * n + k] = c * mpk - s * mqk;
        m[q * n + k] = s * mpk + c * mqk;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng::normal(rng))
    }

    /// Independent entry-by-entry triple-loop product.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.entries()
            .iter()
            .zip(b.entries())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity_times_anything_is_identity_map() {
        let x = Matrix::from_rows(&[&[1.5, -2.0], &[0.25, 3.0]]);
        let prod = Matrix::identity(2).mat_mul(&x);
        assert_eq!(prod, x);
    }

    #[test]
    fn hand_expanded_product() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Matrix::from_rows(&[&[0.0], &[1.0]]);
        let p = a.mat_mul(&b);
        assert_eq!(p.entries(), &[2.0, 4.0]);
    }

    #[test]
    fn product_matches_triple_loop_oracle() {
        let mut r = rng::stream(11, rng::Domain::Battery, 0);
        let a = random_matrix(5, 3, &mut r);
        let b = random_matrix(3, 4, &mut r);
        let diff = max_abs_diff(&a.mat_mul(&b), &matmul_oracle(&a, &b));
        assert!(diff <= 1e-14, "deviation {diff}");
    }

    #[test]
    #[should_panic(expected = "dimension mismatch")]
    fn mismatched_product_panics() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        let _ = a.mat_mul(&b);
    }

    #[test]
    fn frobenius_norm_basics() {
        assert_eq!(Matrix::zeros(3, 2).frobenius_norm(), 0.0);
        let m = Matrix::from_rows(&[&[3.0, 4.0]]);
        assert_eq!(m.frobenius_norm(), 5.0);
    }

    #[test]
    fn frobenius_norm_matches_direct_summation() {
        let mut r = rng::stream(12, rng::Domain::Battery, 0);
        let a = random_matrix(4, 4, &mut r);
        let direct: f64 = a.entries().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((a.frobenius_norm() - direct).abs() <= 1e-14);
    }

    #[test]
    fn spectral_norm_identity_and_nilpotent() {
        assert!((Matrix::identity(2).spectral_norm().unwrap() - 1.0).abs() <= 1e-12);
        let n = Matrix::from_rows(&[&[0.0, 2.0], &[0.0, 0.0]]);
        assert!((n.spectral_norm().unwrap() - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn spectral_norm_of_deflated_ring_mixing() {
        // Lazy 4-ring mixing minus the all-ones projector: eigenvalues
        // {1, 1/3, -1/3, 1/3} with the leading 1 deflated to 0, so the
        // remaining circulant has spectral norm exactly 1/3... the matrix
        // itself (before deflation) has norm 1.
        let third = 1.0 / 3.0;
        let w = Matrix::from_rows(&[
            &[third, third, 0.0, third],
            &[third, third, third, 0.0],
            &[0.0, third, third, third],
            &[third, 0.0, third, third],
        ]);
        assert!((w.spectral_norm().unwrap() - 1.0).abs() <= 1e-10);
        let n = 4.0;
        let deflated = w.sub(&Matrix::from_fn(4, 4, |_, _| 1.0 / n));
        assert!((deflated.spectral_norm().unwrap() - third).abs() <= 1e-10);
    }

    #[test]
    fn singular_values_diagonal_and_zero() {
        let d = Matrix::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]);
        let sv = d.singular_values().unwrap();
        assert!((sv[0] - 3.0).abs() <= 1e-9 && (sv[1] - 1.0).abs() <= 1e-9);

        let z = Matrix::zeros(3, 2);
        let sv = z.singular_values().unwrap();
        assert_eq!(sv.len(), 2);
        assert!(sv.iter().all(|&s| s.abs() <= 1e-12));
    }

    #[test]
    fn singular_values_reconstruct_frobenius_norm() {
        let mut r = rng::stream(13, rng::Domain::Battery, 0);
        let a = random_matrix(6, 4, &mut r);
        let sv = a.singular_values().unwrap();
        assert_eq!(sv.len(), 4);
        let sum_sq: f64 = sv.iter().map(|s| s * s).sum();
        let fro_sq = a.frobenius_norm().powi(2);
        assert!((sum_sq - fro_sq).abs() / fro_sq <= 1e-10);
        // descending
        for w in sv.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn symmetric_eigenvalues_known_spectrum() {
        // diag(5, -1, 2) conjugated stays {5, 2, -1}.
        let a = Matrix::from_rows(&[&[5.0, 0.0, 0.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let e = symmetric_eigenvalues(&a).unwrap();
        assert!((e[0] - 5.0).abs() <= 1e-12);
        assert!((e[1] - 2.0).abs() <= 1e-12);
        assert!((e[2] + 1.0).abs() <= 1e-12);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn small_entries() -> impl Strategy<Value = f64> {
            (-10.0f64..10.0).prop_map(|x| (x * 16.0).round() / 16.0)
        }

        fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
            proptest::collection::vec(small_entries(), rows * cols)
                .prop_map(move |v| Matrix::new(rows, cols, v))
        }

        proptest! {
            #[test]
            fn mat_mul_is_associative(
                a in matrix_strategy(3, 4),
                b in matrix_strategy(4, 2),
                c in matrix_strategy(2, 5),
            ) {
                let left = a.mat_mul(&b).mat_mul(&c);
                let right = a.mat_mul(&b.mat_mul(&c));
                let scale = left.frobenius_norm().max(1.0);
                prop_assert!(max_abs_diff(&left, &right) / scale <= 1e-12);
            }

            #[test]
            fn norm_sandwich(a in matrix_strategy(4, 6)) {
                let spec = a.spectral_norm().unwrap();
                let fro = a.frobenius_norm();
                let k = (a.rows().min(a.cols()) as f64).sqrt();
                prop_assert!(spec <= fro + 1e-9);
                prop_assert!(fro <= k * spec + 1e-9);
            }

            #[test]
            fn gram_singular_values_are_squares(a in matrix_strategy(4, 3)) {
                let sv = a.singular_values().unwrap();
                let gram_sv = a.transpose().mat_mul(&a).singular_values().unwrap();
                for (s, g) in sv.iter().zip(&gram_sv) {
                    prop_assert!((s * s - g).abs() <= 1e-8);
                }
            }

            #[test]
            fn spectral_norm_transpose_invariant(a in matrix_strategy(5, 3)) {
                let n1 = a.spectral_norm().unwrap();
                let n2 = a.transpose().spectral_norm().unwrap();
                prop_assert!((n1 - n2).abs() <= 1e-10);
            }
        }

        fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
            super::max_abs_diff(a, b)
        }
    }
}
