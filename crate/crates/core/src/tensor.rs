//! Small dense matrix kernels for deformation gradients in dimension 2 and 3.
//!
//! Everything here is closed-form: determinants and adjugates by cofactor
//! expansion, arbitrary minors from index tuples, and singular-value based
//! quantities (trace powers, operator norm) through symmetric eigensolvers
//! for `F^T F`.

use thiserror::Error;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 3;

/// Errors from tensor-level input validation.
#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("minor index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("minor indices must be strictly increasing")]
    NonIncreasingIndices,
    #[error("minor size {size} invalid for dimension {dim}")]
    InvalidMinorSize { size: usize, dim: usize },
}

/// Which matrix norm to use where the two conventions diverge.
///
/// Distortion quantities default to [`NormKind::Operator`] (conformal maps
/// then have distortion exactly 1); coercivity checks default to
/// [`NormKind::Frobenius`]. Both are always available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Largest singular value.
    Operator,
    /// Square root of the sum of squared entries.
    Frobenius,
}

/// Dense n-by-n real matrix with n in {2, 3}, row-major storage.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    dim: usize,
    e: [f64; MAX_DIM * MAX_DIM],
}

impl std::fmt::Debug for Mat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Mat{}x{}[", self.dim, self.dim)?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
        }
        write!(f, "]")
    }
}

impl Mat {
    /// Zero matrix of the given dimension (2 or 3).
    pub fn zeros(dim: usize) -> Mat {
        assert!(dim == 2 || dim == 3, "Mat dimension must be 2 or 3");
        Mat {
            dim,
            e: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    /// Identity matrix.
    pub fn identity(dim: usize) -> Mat {
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from row-major entries; `entries.len()` must equal `dim * dim`.
    pub fn from_rows(dim: usize, entries: &[f64]) -> Mat {
        assert_eq!(entries.len(), dim * dim, "entry count mismatch");
        let mut m = Mat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, entries[i * dim + j]);
            }
        }
        m
    }

    /// Diagonal matrix from the given diagonal (length 2 or 3).
    pub fn diag(d: &[f64]) -> Mat {
        let mut m = Mat::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.e[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        self.e[i * self.dim + j] = v;
    }

    /// Row-major entry slice of length `dim * dim`.
    pub fn entries(&self) -> &[f64] {
        &self.e[..self.dim * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.set(i, j, self.get(j, i));
            }
        }
        t
    }

    pub fn add(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.dim, other.dim);
        let mut r = *self;
        for k in 0..self.dim * self.dim {
            r.e[k] += other.e[k];
        }
        r
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.dim, other.dim);
        let mut r = *self;
        for k in 0..self.dim * self.dim {
            r.e[k] -= other.e[k];
        }
        r
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut r = *self;
        for k in 0..self.dim * self.dim {
            r.e[k] *= s;
        }
        r
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut r = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.get(i, k) * other.get(k, j);
                }
                r.set(i, j, acc);
            }
        }
        r
    }

    /// Apply the matrix to a vector (length `dim`).
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.dim;
        debug_assert!(v.len() >= n && out.len() >= n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.get(i, j) * v[j];
            }
            out[i] = acc;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Closed-form cofactor-expansion determinant.
    pub fn determinant(&self) -> f64 {
        match self.dim {
            2 => self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0),
            3 => {
                let a = self.get(0, 0);
                let b = self.get(0, 1);
                let c = self.get(0, 2);
                let d = self.get(1, 0);
                let e = self.get(1, 1);
                let f = self.get(1, 2);
                let g = self.get(2, 0);
                let h = self.get(2, 1);
                let i = self.get(2, 2);
                a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)
            }
            _ => unreachable!(),
        }
    }

    /// Adjugate matrix: the transpose of the cofactor matrix, so that
    /// `F * adj(F) = det(F) * I` holds identically.
    pub fn adjugate(&self) -> Mat {
        let mut adj = Mat::zeros(self.dim);
        match self.dim {
            2 => {
                adj.set(0, 0, self.get(1, 1));
                adj.set(0, 1, -self.get(0, 1));
                adj.set(1, 0, -self.get(1, 0));
                adj.set(1, 1, self.get(0, 0));
            }
            3 => {
                for i in 0..3 {
                    for j in 0..3 {
                        // cofactor C_ji goes to adj(i, j)
                        let r0 = (j + 1) % 3;
                        let r1 = (j + 2) % 3;
                        let c0 = (i + 1) % 3;
                        let c1 = (i + 2) % 3;
                        let cof = self.get(r0, c0) * self.get(r1, c1)
                            - self.get(r0, c1) * self.get(r1, c0);
                        adj.set(i, j, cof);
                    }
                }
            }
            _ => unreachable!(),
        }
        adj
    }

    /// Cofactor matrix, equal to `adjugate().transpose()`.
    pub fn cofactor(&self) -> Mat {
        self.adjugate().transpose()
    }

    /// Inverse via adjugate; `None` when the determinant is exactly zero.
    pub fn inverse(&self) -> Option<Mat> {
        let det = self.determinant();
        if det == 0.0 {
            return None;
        }
        Some(self.adjugate().scale(1.0 / det))
    }

    /// Determinant of the submatrix selected by `spec`.
    pub fn minor(&self, spec: &MinorSpec) -> f64 {
        debug_assert!(spec.size >= 1 && spec.size <= self.dim);
        match spec.size {
            1 => self.get(spec.rows[0], spec.cols[0]),
            2 => {
                let (r0, r1) = (spec.rows[0], spec.rows[1]);
                let (c0, c1) = (spec.cols[0], spec.cols[1]);
                self.get(r0, c0) * self.get(r1, c1) - self.get(r0, c1) * self.get(r1, c0)
            }
            3 => self.determinant(),
            _ => unreachable!(),
        }
    }

    /// Gram matrix `F^T F` (symmetric positive semidefinite).
    pub fn gram(&self) -> Mat {
        self.transpose().matmul(self)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        let sv = self.singular_values();
        sv[0]
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Operator => self.operator_norm(),
            NormKind::Frobenius => self.frobenius_norm(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Singular values in descending order; entries beyond `dim` are zero.
    pub fn singular_values(&self) -> [f64; MAX_DIM] {
        let mut ev = sym_eigenvalues(&self.gram());
        for v in ev.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        ev
    }
}

/// Ordered row/column index tuple selecting an m-by-m submatrix.
///
/// Indices are zero-based, strictly increasing, and bounded by the matrix
/// dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinorSpec {
    rows: [usize; MAX_DIM],
    cols: [usize; MAX_DIM],
    size: usize,
}

impl MinorSpec {
    pub fn new(rows: &[usize], cols: &[usize], dim: usize) -> Result<MinorSpec, TensorError> {
        if rows.len() != cols.len() || rows.is_empty() || rows.len() > dim {
            return Err(TensorError::InvalidMinorSize {
                size: rows.len(),
                dim,
            });
        }
        for set in [rows, cols] {
            for (k, &idx) in set.iter().enumerate() {
                if idx >= dim {
                    return Err(TensorError::IndexOutOfRange { index: idx, dim });
                }
                if k > 0 && set[k - 1] >= idx {
                    return Err(TensorError::NonIncreasingIndices);
                }
            }
        }
        let mut r = [0usize; MAX_DIM];
        let mut c = [0usize; MAX_DIM];
        r[..rows.len()].copy_from_slice(rows);
        c[..cols.len()].copy_from_slice(cols);
        Ok(MinorSpec {
            rows: r,
            cols: c,
            size: rows.len(),
        })
    }

    /// Full minor selecting the whole matrix (equals the determinant).
    pub fn full(dim: usize) -> MinorSpec {
        let idx: Vec<usize> = (0..dim).collect();
        MinorSpec::new(&idx, &idx, dim).expect("full minor spec is always valid")
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows[..self.size]
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols[..self.size]
    }
}

/// Sum of singular values raised to the power `gamma >= 1`, i.e.
/// `tr((F^T F)^{gamma/2})`.
pub fn trace_power(f: &Mat, gamma: f64) -> f64 {
    assert!(gamma >= 1.0, "trace power exponent must be >= 1");
    let sv = f.singular_values();
    sv[..f.dim()].iter().map(|s| s.powf(gamma)).sum()
}

/// Eigenvalues of a symmetric matrix, descending. Entries beyond `dim` are 0.
///
/// n=2 uses the closed form. n=3 uses the trigonometric solution of the
/// characteristic cubic and falls back to cyclic Jacobi sweeps when the
/// discriminant is within 1e-12 (relative) of a repeated root.
pub fn sym_eigenvalues(s: &Mat) -> [f64; MAX_DIM] {
    match s.dim() {
        2 => {
            let a = s.get(0, 0);
            let b = 0.5 * (s.get(0, 1) + s.get(1, 0));
            let c = s.get(1, 1);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            [mean + rad, mean - rad, 0.0]
        }
        3 => {
            let q = s.trace() / 3.0;
            let mut p2 = 0.0;
            for i in 0..3 {
                let d = s.get(i, i) - q;
                p2 += d * d;
            }
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let off = 0.5 * (s.get(i, j) + s.get(j, i));
                p2 += 2.0 * off * off;
            }
            let scale = s.max_abs().max(1e-300);
            if p2.sqrt() <= 1e-14 * scale {
                // numerically scalar matrix
                return [q, q, q];
            }
            let p = (p2 / 6.0).sqrt();
            let mut b = Mat::zeros(3);
            for i in 0..3 {
                for j in 0..3 {
                    let sym = 0.5 * (s.get(i, j) + s.get(j, i));
                    b.set(i, j, (sym - if i == j { q } else { 0.0 }) / p);
                }
            }
            let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
            if 1.0 - r.abs() <= 1e-12 {
                // near-repeated roots; the trig formula loses accuracy
                let (ev, _) = jacobi_eigen(s);
                return ev;
            }
            let phi = r.acos() / 3.0;
            let e0 = q + 2.0 * p * phi.cos();
            let e2 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3 * 2.0).cos();
            let e1 = 3.0 * q - e0 - e2;
            let mut ev = [e0, e1, e2];
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            ev
        }
        _ => unreachable!(),
    }
}

/// Eigenvalues (descending) and orthonormal eigenvector columns of a
/// symmetric matrix. n=2 closed form, n=3 cyclic Jacobi.
pub fn sym_eigen(s: &Mat) -> ([f64; MAX_DIM], Mat) {
    match s.dim() {
        2 => {
            let a = s.get(0, 0);
            let b = 0.5 * (s.get(0, 1) + s.get(1, 0));
            let c = s.get(1, 1);
            let ev = sym_eigenvalues(s);
            let mut v = Mat::identity(2);
            // rotation diagonalizing [[a b][b c]]
            if b != 0.0 {
                let theta = 0.5 * (2.0 * b).atan2(a - c);
                let (sn, cs) = theta.sin_cos();
                v = Mat::from_rows(2, &[cs, -sn, sn, cs]);
                // column 0 corresponds to the larger eigenvalue when a >= c;
                // verify ordering by Rayleigh quotient and swap if needed.
                let q0 = cs * (a * cs + b * sn) + sn * (b * cs + c * sn);
                if (q0 - ev[0]).abs() > (q0 - ev[1]).abs() {
                    v = Mat::from_rows(2, &[-sn, cs, cs, sn]);
                }
            } else if a < c {
                v = Mat::from_rows(2, &[0.0, 1.0, 1.0, 0.0]);
            }
            (ev, v)
        }
        3 => jacobi_eigen(s),
        _ => unreachable!(),
    }
}

/// Cyclic Jacobi for symmetric 3x3: returns (descending eigenvalues,
/// eigenvector columns).
fn jacobi_eigen(s: &Mat) -> ([f64; MAX_DIM], Mat) {
    let n = s.dim();
    let mut a = *s;
    // symmetrize defensively
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, m);
            a.set(j, i, m);
        }
    }
    let mut v = Mat::identity(n);
    let scale = a.max_abs().max(1e-300);
    for _sweep in 0..50 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a.get(i, j).abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s_ = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s_ * akq);
                    a.set(k, q, s_ * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s_ * aqk);
                    a.set(q, k, s_ * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s_ * vkq);
                    v.set(k, q, s_ * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let mut ev = [0.0; MAX_DIM];
    let mut vs = Mat::zeros(n);
    for (slot, &idx) in order.iter().enumerate() {
        ev[slot] = a.get(idx, idx);
        for k in 0..n {
            vs.set(k, slot, v.get(k, idx));
        }
    }
    (ev, vs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_matrix_log_uniform, trial_rng};
    use proptest::prelude::*;

    #[test]
    fn determinant_identity_and_diag() {
        assert_eq!(Mat::identity(3).determinant(), 1.0);
        assert_eq!(Mat::diag(&[2.0, 3.0]).determinant(), 6.0);
    }

    #[test]
    fn determinant_matches_full_minor() {
        for dim in [2usize, 3] {
            let mut rng = trial_rng(7, dim as u64);
            for _ in 0..50 {
                let f = random_matrix_log_uniform(&mut rng, dim, 1e-2, 1e2);
                let det = f.determinant();
                let full = f.minor(&MinorSpec::full(dim));
                assert!(
                    (det - full).abs() <= 1e-14 * det.abs().max(1.0),
                    "det {det} vs full minor {full}"
                );
            }
        }
    }

    #[test]
    fn adjugate_identity_and_diag() {
        assert_eq!(Mat::identity(3).adjugate(), Mat::identity(3));
        assert_eq!(Mat::diag(&[3.0, 7.0]).adjugate(), Mat::diag(&[7.0, 3.0]));
    }

    #[test]
    fn adjugate_satisfies_fundamental_identity() {
        for dim in [2usize, 3] {
            let mut rng = trial_rng(11, dim as u64);
            for _ in 0..200 {
                let f = random_matrix_log_uniform(&mut rng, dim, 1e-3, 1e3);
                let prod = f.matmul(&f.adjugate());
                let det = f.determinant();
                let scale = f.frobenius_norm() * f.adjugate().frobenius_norm() + det.abs();
                for i in 0..dim {
                    for j in 0..dim {
                        let expect = if i == j { det } else { 0.0 };
                        assert!(
                            (prod.get(i, j) - expect).abs() <= 1e-12 * scale,
                            "F adj F mismatch at ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn minors_assemble_into_adjugate() {
        // 2x2 minors with cofactor signs reproduce the 3x3 adjugate entries.
        let mut rng = trial_rng(13, 0);
        for _ in 0..50 {
            let f = random_matrix_log_uniform(&mut rng, 3, 1e-1, 1e1);
            let adj = f.adjugate();
            for i in 0..3 {
                for j in 0..3 {
                    // adj(i, j) = cofactor C_{j i}: delete row j and column i
                    let rows: Vec<usize> = (0..3).filter(|&r| r != j).collect();
                    let cols: Vec<usize> = (0..3).filter(|&c| c != i).collect();
                    let spec = MinorSpec::new(&rows, &cols, 3).unwrap();
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    let val = sign * f.minor(&spec);
                    assert!(
                        (val - adj.get(i, j)).abs() <= 1e-14 * f.max_abs().powi(2).max(1.0),
                        "minor assembly mismatch at ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn minor_single_entry() {
        let f = Mat::from_rows(2, &[4.0, -1.0, 2.0, 9.0]);
        let spec = MinorSpec::new(&[0], &[0], 2).unwrap();
        assert_eq!(f.minor(&spec), 4.0);
    }

    #[test]
    fn minor_spec_validation() {
        assert_eq!(
            MinorSpec::new(&[0, 3], &[0, 1], 3),
            Err(TensorError::IndexOutOfRange { index: 3, dim: 3 })
        );
        assert_eq!(
            MinorSpec::new(&[1, 0], &[0, 1], 3),
            Err(TensorError::NonIncreasingIndices)
        );
        assert!(MinorSpec::new(&[0, 2], &[1, 2], 3).is_ok());
    }

    #[test]
    fn trace_power_closed_forms() {
        assert!((trace_power(&Mat::identity(3), 4.7) - 3.0).abs() < 1e-13);
        assert!((trace_power(&Mat::diag(&[2.0, 3.0]), 2.0) - 13.0).abs() < 1e-12);
        assert!((trace_power(&Mat::diag(&[1.0, 2.0]), 3.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn norms_identity_and_diag() {
        let id = Mat::identity(2);
        assert!((id.operator_norm() - 1.0).abs() < 1e-14);
        assert!((id.frobenius_norm() - 2f64.sqrt()).abs() < 1e-14);
        assert!((Mat::diag(&[2.0, 1.0]).operator_norm() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn eigen_3x3_repeated_roots_fallback() {
        // two equal eigenvalues, exercises the Jacobi fallback path
        let s = Mat::diag(&[2.0, 2.0, 5.0]);
        let ev = sym_eigenvalues(&s);
        assert!((ev[0] - 5.0).abs() < 1e-12);
        assert!((ev[1] - 2.0).abs() < 1e-12);
        assert!((ev[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_vectors_diagonalize() {
        let mut rng = trial_rng(17, 0);
        for dim in [2usize, 3] {
            for _ in 0..50 {
                let f = random_matrix_log_uniform(&mut rng, dim, 1e-1, 1e1);
                let c = f.gram();
                let (ev, v) = sym_eigen(&c);
                // check C v_i = ev_i v_i
                for i in 0..dim {
                    let mut col = [0.0; 3];
                    for k in 0..dim {
                        col[k] = v.get(k, i);
                    }
                    let mut out = [0.0; 3];
                    c.apply(&col, &mut out);
                    for k in 0..dim {
                        assert!(
                            (out[k] - ev[i] * col[k]).abs() <= 1e-9 * c.max_abs().max(1.0),
                            "eigenpair residual too large (dim {dim})"
                        );
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn prop_norm_equivalence(seed in 0u64..500) {
            let dim = 2 + (seed % 2) as usize;
            let mut rng = trial_rng(23, seed);
            let f = random_matrix_log_uniform(&mut rng, dim, 1e-3, 1e3);
            let op = f.operator_norm();
            let fro = f.frobenius_norm();
            let sqn = (dim as f64).sqrt();
            prop_assert!(op <= fro * (1.0 + 1e-12));
            prop_assert!(fro <= sqn * op * (1.0 + 1e-12));
        }

        #[test]
        fn prop_det_of_adjugate(seed in 0u64..500) {
            let dim = 2 + (seed % 2) as usize;
            let mut rng = trial_rng(29, seed);
            // singular-value spread 1e2: the identity loses about
            // (sigma_max / sigma_min)^2 * eps of relative accuracy through
            // the cancellations in the adjugate entries
            let f = random_matrix_log_uniform(&mut rng, dim, 1e-1, 1e1);
            let det = f.determinant();
            let det_adj = f.adjugate().determinant();
            let expect = det.powi(dim as i32 - 1);
            prop_assert!((det_adj - expect).abs() <= 1e-10 * expect.abs().max(1e-300));
        }

        #[test]
        fn prop_trace_power_homogeneous(seed in 0u64..300) {
            let dim = 2 + (seed % 2) as usize;
            let mut rng = trial_rng(31, seed);
            let f = random_matrix_log_uniform(&mut rng, dim, 1e-1, 1e1);
            let gamma = 1.0 + (seed % 7) as f64 * 0.5;
            let lambda = 0.3 + (seed % 11) as f64 * 0.7;
            let lhs = trace_power(&f.scale(lambda), gamma);
            let rhs = lambda.powf(gamma) * trace_power(&f, gamma);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }
}
