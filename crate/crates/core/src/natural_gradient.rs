//! Conjugate-gradient solves against the KL Hessian using only
//! Hessian-vector products.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

/// Default Tikhonov damping added to every product.
pub const DEFAULT_DAMPING: f64 = 1e-5;
pub const DEFAULT_CG_TOL: f64 = 1e-10;

/// Default iteration cap: twice the dimension, at most 100.
pub fn default_cg_iters(dim: usize) -> usize {
    (2 * dim).clamp(1, 100)
}

type ProductFn<'a> = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync + 'a;

/// A symmetric positive semi-definite operator `v -> H v`, applied with damping.
pub struct HvpHandle<'a> {
    product: Box<ProductFn<'a>>,
    dim: usize,
    damping: f64,
}

impl std::fmt::Debug for HvpHandle<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HvpHandle")
            .field("dim", &self.dim)
            .field("damping", &self.damping)
            .finish_non_exhaustive()
    }
}

impl<'a> HvpHandle<'a> {
    /// `product` computes the undamped `H v`.
    pub fn new(
        dim: usize,
        damping: f64,
        product: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'a,
    ) -> Self {
        Self { product: Box::new(product), dim, damping }
    }

    /// Dense symmetric matrix, row-major.
    pub fn from_dense(dim: usize, matrix: Vec<f64>, damping: f64) -> Self {
        assert_eq!(matrix.len(), dim * dim, "matrix must be dim x dim");
        Self::new(dim, damping, move |v| {
            matrix.chunks(dim).map(|row| dot(row, v)).collect()
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, 0.0, |v| v.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    /// Undamped `H v`.
    pub fn raw(&self, v: &[f64]) -> Vec<f64> {
        (self.product)(v)
    }

    /// `H v + damping * v`.
    pub fn evaluate(&self, v: &[f64]) -> Vec<f64> {
        let mut out = (self.product)(v);
        if self.damping != 0.0 {
            axpy(self.damping, v, &mut out);
        }
        out
    }
}

/// Solve `(H + damping I) x = rhs` by conjugate gradients.
///
/// Stops once `||r|| <= tol * ||rhs||` or after `max_iters` iterations.
pub fn conjugate_gradient(
    hvp: &HvpHandle<'_>,
    rhs: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if rhs.len() != hvp.dim() {
        return Err(Error::Dimension(format!(
            "rhs has length {}, operator dimension is {}",
            rhs.len(),
            hvp.dim()
        )));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("conjugate gradient right-hand side".into()));
    }
    let mut x = vec![0.0; rhs.len()];
    let rhs_norm = norm(rhs);
    if rhs_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iters {
        let hp = hvp.evaluate(&p);
        let php = dot(&p, &hp);
        if !php.is_finite() || hp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Hessian-vector product".into()));
        }
        if php <= 0.0 {
            // direction of zero curvature; nothing more to gain
            break;
        }
        let alpha = rr / php;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= tol * rhs_norm {
            break;
        }
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;
    }
    Ok(x)
}

/// Undamped `x^T H x`.
pub fn quadratic_form(hvp: &HvpHandle<'_>, x: &[f64]) -> f64 {
    dot(x, &hvp.raw(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        spd.transpose().as_slice().to_vec()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let hvp = HvpHandle::identity(3);
        let g = [1.0, -2.0, 0.5];
        let x = conjugate_gradient(&hvp, &g, 1, 1e-12).unwrap();
        for (a, b) in x.iter().zip(&g) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_solve() {
        let hvp = HvpHandle::from_dense(2, vec![2.0, 0.0, 0.0, 4.0], 0.0);
        let x = conjugate_gradient(&hvp, &[2.0, 4.0], 10, 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_solve() {
        let n = 50;
        let m = random_spd(n, 21);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hvp = HvpHandle::from_dense(n, m.clone(), 0.0);
        let x = conjugate_gradient(&hvp, &rhs, 100, 1e-10).unwrap();
        let dense = DMatrix::from_row_slice(n, n, &m)
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&rhs))
            .unwrap();
        for (a, b) in x.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_rhs_and_bad_inputs() {
        let hvp = HvpHandle::identity(2);
        assert_eq!(conjugate_gradient(&hvp, &[0.0, 0.0], 5, 1e-10).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(conjugate_gradient(&hvp, &[1.0], 5, 1e-10), Err(Error::Dimension(_))));
        let nan = HvpHandle::new(2, 0.0, |_| vec![f64::NAN, 0.0]);
        assert!(matches!(conjugate_gradient(&nan, &[1.0, 1.0], 5, 1e-10), Err(Error::NonFinite(_))));
    }

    #[test]
    fn quadratic_form_is_undamped() {
        let hvp = HvpHandle::new(2, 0.7, |v| v.to_vec());
        assert_eq!(quadratic_form(&hvp, &[0.0, 0.0]), 0.0);
        assert!((quadratic_form(&hvp, &[3.0, 4.0]) - 25.0).abs() < 1e-12);
        let m = random_spd(6, 2);
        let hvp = HvpHandle::from_dense(6, m.clone(), 1e-3);
        let x = [0.3, -1.0, 2.0, 0.1, 0.0, -0.7];
        let dense: f64 = (0..6).map(|i| (0..6).map(|j| x[i] * m[i * 6 + j] * x[j]).sum::<f64>()).sum();
        assert!((quadratic_form(&hvp, &x) - dense).abs() < 1e-9);
    }

    #[test]
    fn residual_energy_norm_decreases() {
        let n = 20;
        let m = random_spd(n, 5);
        let dense = DMatrix::from_row_slice(n, n, &m);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let exact = dense.clone().lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        let hvp = HvpHandle::from_dense(n, m, 0.0);
        let mut prev = f64::INFINITY;
        for iters in 1..=n {
            let x = conjugate_gradient(&hvp, &rhs, iters, 0.0).unwrap();
            let e = nalgebra::DVector::from_column_slice(&x) - &exact;
            let energy = (e.transpose() * &dense * &e)[(0, 0)];
            assert!(energy <= prev * (1.0 + 1e-9) + 1e-20);
            prev = energy;
        }
    }
}
