//! The covariance matrix `C_0(t) = int_0^t E(s) A_0 E(s)^T ds` as an exact
//! polynomial in `t`, its inverse, the constant `b_B` and the eigenvalue
//! bounds `lambda_1`, `Lambda_1`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{BlockStructure, SigmaBounds};

/// Condition number above which [`CovariancePoly::invert`] refuses to invert.
pub const COND_THRESHOLD: f64 = 1e14;

/// Embeds a `p_0 x p_0` block into an `N x N` matrix of the form
/// `diag(A, 0)`.
pub fn embed_block(s: &BlockStructure, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p0 = s.p0();
    if a.shape() != (p0, p0) {
        return Err(Error::InadmissibleDiffusion(format!(
            "block has shape {:?}, expected ({p0}, {p0})",
            a.shape()
        )));
    }
    let mut m = DMatrix::zeros(s.dim(), s.dim());
    m.view_mut((0, 0), (p0, p0)).copy_from(a);
    Ok(m)
}

/// Checks that `a0` is `diag(A, 0)` with `A` symmetric positive definite.
pub fn check_admissible(s: &BlockStructure, a0: &DMatrix<f64>) -> Result<()> {
    let n = s.dim();
    if a0.shape() != (n, n) {
        return Err(Error::InadmissibleDiffusion(format!(
            "shape {:?}, expected ({n}, {n})",
            a0.shape()
        )));
    }
    if a0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("diffusion matrix".into()));
    }
    let p0 = s.p0();
    for i in 0..n {
        for j in 0..n {
            if (i >= p0 || j >= p0) && a0[(i, j)] != 0.0 {
                return Err(Error::InadmissibleDiffusion(format!(
                    "nonzero entry ({i}, {j}) outside the first block"
                )));
            }
        }
    }
    let blk = a0.view((0, 0), (p0, p0)).into_owned();
    let scale = blk.amax().max(f64::MIN_POSITIVE);
    if (&blk - blk.transpose()).amax() > 1e-12 * scale {
        return Err(Error::InadmissibleDiffusion("first block is not symmetric".into()));
    }
    if blk.cholesky().is_none() {
        return Err(Error::InadmissibleDiffusion(
            "first block is not positive definite".into(),
        ));
    }
    Ok(())
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// `C_0(t) = sum_k coeffs[k] t^{k+1}`.
#[derive(Debug, Clone)]
pub struct CovariancePoly {
    structure: BlockStructure,
    a0: DMatrix<f64>,
    coeffs: Vec<DMatrix<f64>>,
    inv_c1: DMatrix<f64>,
    det_c1: f64,
}

impl CovariancePoly {
    pub fn new(s: &BlockStructure, a0: &DMatrix<f64>) -> Result<Self> {
        check_admissible(s, a0)?;
        let n = s.n();
        let dim = s.dim();
        // E(s) = sum_j M_j s^j, so E A0 E^T = sum_m s^m sum_{j+k=m} M_j A0 M_k^T
        let mut coeffs = Vec::with_capacity(2 * n + 1);
        for m in 0..=2 * n {
            let mut acc = DMatrix::zeros(dim, dim);
            for j in 0..=m.min(n) {
                let k = m - j;
                if k > n {
                    continue;
                }
                acc += s.exp_term(j) * a0 * s.exp_term(k).transpose();
            }
            acc /= (m + 1) as f64;
            acc = (&acc + acc.transpose()) * 0.5;
            coeffs.push(acc);
        }
        let c1: DMatrix<f64> = coeffs.iter().fold(DMatrix::zeros(dim, dim), |a, c| a + c);
        let chol = c1.clone().cholesky().ok_or(Error::IllConditioned {
            cond: f64::INFINITY,
            threshold: COND_THRESHOLD,
        })?;
        let inv_c1 = chol.inverse();
        let inv_c1 = (&inv_c1 + inv_c1.transpose()) * 0.5;
        let det_c1 = chol.determinant();
        Ok(Self {
            structure: s.clone(),
            a0: a0.clone(),
            coeffs,
            inv_c1,
            det_c1,
        })
    }

    /// Covariance with `A_0 = I_0`, the matrix `C(t)`.
    pub fn identity(s: &BlockStructure) -> Self {
        Self::new(s, &s.i0()).expect("I_0 is admissible")
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// Polynomial degree in `t` (`2n + 1`).
    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// `C_0(t)` by Horner evaluation.
    pub fn eval(&self, t: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.structure.dim(), self.structure.dim());
        for c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc * t
    }

    /// Exact derivative `C_0'(t)`.
    pub fn deriv(&self, t: f64) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.structure.dim(), self.structure.dim());
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            acc = acc * t + c * (k + 1) as f64;
        }
        acc
    }

    /// `C_0^{-1}(1)`.
    pub fn inv_c1(&self) -> &DMatrix<f64> {
        &self.inv_c1
    }

    /// `det C_0(1)`.
    pub fn det_c1(&self) -> f64 {
        self.det_c1
    }

    /// `C_0^{-1}(t)` and `det C_0(t)` from the polynomial itself.
    pub fn invert(&self, t: f64) -> Result<(DMatrix<f64>, f64)> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let c = self.eval(t);
        let (lo, hi) = eig_extremes(&c);
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(cond <= COND_THRESHOLD) {
            return Err(Error::IllConditioned {
                cond,
                threshold: COND_THRESHOLD,
            });
        }
        let chol = c.cholesky().ok_or(Error::IllConditioned {
            cond,
            threshold: COND_THRESHOLD,
        })?;
        let det = chol.determinant();
        Ok((chol.inverse(), det))
    }

    /// `C_0^{-1}(t)` through the scaling `C_0(t) = D_{sqrt t} C_0(1) D_{sqrt t}`;
    /// stable for every `t > 0`.
    pub fn inv_scaled(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let d = self.structure.dilation_diag(1.0 / t.sqrt());
        let mut m = self.inv_c1.clone();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                m[(i, j)] *= d[i] * d[j];
            }
        }
        Ok(m)
    }

    /// Max-norm of `C_0'(t) - (A_0 - B^T C_0(t) - C_0(t) B)`.
    pub fn check_derivative_identity(&self, t: f64) -> f64 {
        let b = self.structure.b_matrix();
        let c = self.eval(t);
        let rhs = &self.a0 - b.transpose() * &c - &c * b;
        (self.deriv(t) - rhs).amax()
    }

    /// Max-norm of `C_0(t) - D_{sqrt t} C_0(1) D_{sqrt t}`.
    pub fn split_residual(&self, t: f64) -> f64 {
        let d = self.structure.dilation_matrix(t.sqrt());
        (self.eval(t) - &d * self.eval(1.0) * &d).amax()
    }
}

/// `sigma^* = sup{sigma > 0 : ||E(tau)|| <= 2 for all |tau| <= sigma}` and
/// `b_B = min{(sigma_0 / sigma_bar)^2, sigma^*}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbChoice {
    pub b_b: f64,
    /// Infinite when `E` is the identity (single block).
    pub sigma_star: f64,
}

fn e_norm_sup(s: &BlockStructure, sigma: f64) -> f64 {
    // sup over a grid of |tau| <= sigma, endpoints included
    const GRID: usize = 32;
    let mut best: f64 = 0.0;
    for i in 1..=GRID {
        let tau = sigma * i as f64 / GRID as f64;
        for t in [tau, -tau] {
            let sv = s.matrix_e(t).singular_values();
            best = best.max(sv.iter().cloned().fold(0.0, f64::max));
        }
    }
    best
}

pub fn compute_b_b(s: &BlockStructure, sb: &SigmaBounds) -> BbChoice {
    let cap = (sb.sigma_0 / sb.sigma_bar).powi(2);
    if s.n() == 0 {
        return BbChoice {
            b_b: cap.min(1.0),
            sigma_star: f64::INFINITY,
        };
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while e_norm_sup(s, hi) <= 2.0 {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if e_norm_sup(s, mid) <= 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BbChoice {
        b_b: cap.min(lo),
        sigma_star: lo,
    }
}

/// Eigenvalue bounds for `C_0(t)` uniform over `lambda I_0 <= A_0 <= Lambda I_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenBounds {
    pub lambda_1: f64,
    pub big_lambda_1: f64,
    pub b_b: f64,
    pub lambda_i: f64,
    pub big_lambda_i: f64,
}

pub fn eigen_bounds(
    s: &BlockStructure,
    sb: &SigmaBounds,
    b_b: f64,
    lambda: f64,
    big_lambda: f64,
) -> Result<EigenBounds> {
    if !(lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite()) {
        return Err(Error::BadEllipticity { lambda, big_lambda });
    }
    let c1 = CovariancePoly::identity(s).eval(1.0);
    let (lambda_i, big_lambda_i) = eig_extremes(&c1);
    let ratio = sb.sigma_bar / sb.sigma_0;
    let n = s.n() as i32;
    Ok(EigenBounds {
        lambda_1: lambda * lambda_i * ratio.powi(-(4 * n + 2)),
        big_lambda_1: big_lambda * big_lambda_i * ratio * ratio,
        b_b,
        lambda_i,
        big_lambda_i,
    })
}
