//! Block structure of the drift matrix and the homogeneous Lie group it
//! induces on space-time: composition, inverse, dilations, homogeneous
//! norms and the nilpotent exponential `E(sigma) = exp(-sigma B^T)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Relative singular-value threshold below which a block counts as rank
/// deficient.
const RANK_TOL: f64 = 1e-12;

/// JSON form of a [`BlockStructure`]: `{"p":[...],"blocks":[[[...]]]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StructureSpec {
    pub p: Vec<usize>,
    /// Row-major blocks; `blocks[j-1]` is the `p[j-1] x p[j]` block.
    pub blocks: Vec<Vec<Vec<f64>>>,
}

/// Validated block structure `p_0 >= p_1 >= ... >= p_n >= 1` together with
/// the superdiagonal blocks of `B` and every derived quantity the rest of
/// the crate needs.
#[derive(Debug, Clone)]
pub struct BlockStructure {
    p: Vec<usize>,
    blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    dim: usize,
    q: usize,
    m_b: f64,
    c_nb: f64,
    b: DMatrix<f64>,
    /// `(-B^T)^k / k!` for `k = 0..=n`.
    exp_terms: Vec<DMatrix<f64>>,
}

impl BlockStructure {
    pub fn new(p: Vec<usize>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyStructure);
        }
        if p.iter().any(|&v| v == 0) || p.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::BadBlockSizes(p));
        }
        let n = p.len() - 1;
        if blocks.len() != n {
            return Err(Error::InvalidParameter(format!(
                "{} block sizes need {} blocks, got {}",
                p.len(),
                n,
                blocks.len()
            )));
        }
        let mut m_b: f64 = 0.0;
        for (j, blk) in blocks.iter().enumerate() {
            let expected = (p[j], p[j + 1]);
            if blk.shape() != expected {
                return Err(Error::ShapeMismatch {
                    index: j + 1,
                    got: blk.shape(),
                    expected,
                });
            }
            if blk.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("block {}", j + 1)));
            }
            let sv = blk.clone().singular_values();
            let smax = sv.iter().cloned().fold(0.0, f64::max);
            let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if sv.len() < p[j + 1] || smax == 0.0 || smin <= RANK_TOL * smax {
                return Err(Error::RankDeficient {
                    index: j + 1,
                    sigma_min: if smax == 0.0 { 0.0 } else { smin },
                });
            }
            m_b = m_b.max(smax);
        }

        let mut offsets = Vec::with_capacity(p.len() + 1);
        let mut acc = 0;
        for &pi in &p {
            offsets.push(acc);
            acc += pi;
        }
        offsets.push(acc);
        let dim = acc;
        let q = p.iter().enumerate().map(|(i, &pi)| (2 * i + 1) * pi).sum();

        let mut b = DMatrix::zeros(dim, dim);
        for (j, blk) in blocks.iter().enumerate() {
            b.view_mut((offsets[j], offsets[j + 1]), blk.shape())
                .copy_from(blk);
        }

        let c_nb = if n == 0 {
            0.0
        } else {
            let nf = n as f64;
            let e = 2.0 * nf + 1.0;
            nf * (nf + 1.0) / 2.0 * m_b.powf(1.0 / e).max(m_b.powf(nf / e))
        };

        let minus_bt = -b.transpose();
        let mut exp_terms = Vec::with_capacity(n + 1);
        let mut term = DMatrix::identity(dim, dim);
        exp_terms.push(term.clone());
        for k in 1..=n {
            term = &term * &minus_bt / k as f64;
            exp_terms.push(term.clone());
        }

        Ok(Self {
            p,
            blocks,
            offsets,
            dim,
            q,
            m_b,
            c_nb,
            b,
            exp_terms,
        })
    }

    /// The prototype Kolmogorov structure `p = [1, 1]`, `B_1 = [1]`.
    pub fn prototype() -> Self {
        Self::new(vec![1, 1], vec![DMatrix::from_element(1, 1, 1.0)])
            .expect("prototype structure is valid")
    }

    /// The `d`-dimensional kinetic structure `p = [d, d]`, `B_1 = I_d`.
    pub fn kinetic(d: usize) -> Result<Self> {
        Self::new(vec![d, d], vec![DMatrix::identity(d, d)])
    }

    pub fn from_spec(spec: &StructureSpec) -> Result<Self> {
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for (j, rows) in spec.blocks.iter().enumerate() {
            let nrows = rows.len();
            let ncols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != ncols) {
                return Err(Error::InvalidParameter(format!(
                    "block {} has ragged rows",
                    j + 1
                )));
            }
            blocks.push(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]));
        }
        Self::new(spec.p.clone(), blocks)
    }

    pub fn to_spec(&self) -> StructureSpec {
        StructureSpec {
            p: self.p.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|m| {
                    (0..m.nrows())
                        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Spatial dimension `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of nonzero superdiagonal blocks `n`.
    pub fn n(&self) -> usize {
        self.p.len() - 1
    }

    /// `Q`, the homogeneous dimension minus 2.
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn qf(&self) -> f64 {
        self.q as f64
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.p
    }

    pub fn p0(&self) -> usize {
        self.p[0]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    /// Coordinate range of block `i` inside `R^N`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Block index owning coordinate `k`.
    pub fn block_of(&self, k: usize) -> usize {
        self.offsets.partition_point(|&o| o <= k) - 1
    }

    /// Dilation degree `2i + 1` of coordinate `k`.
    pub fn coordinate_degree(&self, k: usize) -> i32 {
        2 * self.block_of(k) as i32 + 1
    }

    pub fn m_b(&self) -> f64 {
        self.m_b
    }

    /// The constant `c(n, B)` bounding `|(E(t) - I)x|_B`.
    pub fn c_nb(&self) -> f64 {
        self.c_nb
    }

    pub fn b_matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// The matrix `I_0` (identity on the first block, zero elsewhere).
    pub fn i0(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for k in self.block_range(0) {
            m[(k, k)] = 1.0;
        }
        m
    }

    /// `(-B^T)^k / k!`.
    pub fn exp_term(&self, k: usize) -> &DMatrix<f64> {
        &self.exp_terms[k]
    }

    /// `E(sigma) = exp(-sigma B^T)`, evaluated as the exact finite series.
    pub fn matrix_e(&self, sigma: f64) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.dim, self.dim);
        let mut pow = 1.0;
        for term in &self.exp_terms {
            e += term * pow;
            pow *= sigma;
        }
        e
    }

    /// `E(sigma) x` without forming the matrix.
    pub fn apply_e(&self, sigma: f64, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        let mut pow = sigma;
        for term in self.exp_terms.iter().skip(1) {
            out += term * x * pow;
            pow *= sigma;
        }
        out
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Group law `z o zeta = (xi + E(tau) x, t + tau)`.
    pub fn compose(&self, z: &Point, zeta: &Point) -> Point {
        Point {
            x: &zeta.x + self.apply_e(zeta.t, &z.x),
            t: z.t + zeta.t,
        }
    }

    /// `z^{-1} = (-E(-t) x, -t)`.
    pub fn inverse(&self, z: &Point) -> Point {
        Point {
            x: -self.apply_e(-z.t, &z.x),
            t: -z.t,
        }
    }

    /// `zeta^{-1} o z = (x - E(t - tau) xi, t - tau)`, evaluated directly.
    pub fn relative(&self, zeta: &Point, z: &Point) -> Point {
        let dt = z.t - zeta.t;
        Point {
            x: &z.x - self.apply_e(dt, &zeta.x),
            t: dt,
        }
    }

    /// Diagonal of the spatial dilation `D_r`.
    pub fn dilation_diag(&self, r: f64) -> DVector<f64> {
        DVector::from_fn(self.dim, |k, _| r.powi(self.coordinate_degree(k)))
    }

    pub fn dilation_matrix(&self, r: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.dilation_diag(r))
    }

    /// `D_r x`.
    pub fn dilate_spatial(&self, r: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        if !(r > 0.0) {
            return Err(Error::NonPositiveDilation(r));
        }
        self.check_dim(x)?;
        Ok(x.component_mul(&self.dilation_diag(r)))
    }

    /// `delta_r (x, t) = (D_r x, r^2 t)`.
    pub fn dilate(&self, r: f64, z: &Point) -> Result<Point> {
        Ok(Point {
            x: self.dilate_spatial(r, &z.x)?,
            t: r * r * z.t,
        })
    }

    /// Euclidean norm of block `i` of `x`.
    pub fn block_norm(&self, i: usize, x: &DVector<f64>) -> f64 {
        x.rows_range(self.block_range(i)).norm()
    }

    /// Homogeneous norm `|x|_B = sum_i |x^(p_i)|^{1/(2i+1)}`.
    pub fn norm_b(&self, x: &DVector<f64>) -> f64 {
        self.norm_b_slice(x.as_slice())
    }

    pub fn norm_b_slice(&self, x: &[f64]) -> f64 {
        (0..self.p.len())
            .map(|i| {
                let r = self.block_range(i);
                let sq: f64 = x[r].iter().map(|v| v * v).sum();
                if sq == 0.0 {
                    0.0
                } else if i == 0 {
                    sq.sqrt()
                } else {
                    sq.powf(0.5 / (2 * i + 1) as f64)
                }
            })
            .sum()
    }

    /// `||z||_B = |x|_B + |t|^{1/2}`.
    pub fn norm_b_spacetime(&self, z: &Point) -> f64 {
        self.norm_b(&z.x) + z.t.abs().sqrt()
    }

    /// Right-hand side of the bound on `|(E(t) - I) x|_B`.
    pub fn e_minus_identity_bound(&self, x_euclid: f64, t: f64) -> f64 {
        let n = self.n() as f64;
        let e = 2.0 * n + 1.0;
        let xa = x_euclid.powf(1.0 / 3.0).max(x_euclid.powf(1.0 / e));
        let ta = t.abs().powf(1.0 / e).max(t.abs().powf(n / e));
        self.c_nb * xa * ta
    }

    /// Lower and upper homogeneous-vs-Euclidean comparison
    /// `sigma_0 min{|x|, |x|^{1/(2n+1)}} <= |x|_B <= sigma_bar max{...}`.
    pub fn comparison_bounds(&self, sb: &SigmaBounds, x_euclid: f64) -> (f64, f64) {
        let e = 1.0 / (2 * self.n() + 1) as f64;
        let a = x_euclid;
        let b = x_euclid.powf(e);
        (sb.sigma_0 * a.min(b), sb.sigma_bar * a.max(b))
    }

    /// Random direction scaled so that `|x|_B = radius`.
    pub fn sample_on_sphere_b<R: Rng + ?Sized>(&self, radius: f64, rng: &mut R) -> DVector<f64> {
        loop {
            let x = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let nb = self.norm_b(&x);
            if nb > 1e-300 {
                return x.component_mul(&self.dilation_diag(radius / nb));
            }
        }
    }

    /// Uniform sample from the homogeneous ball `B_radius(0)` by rejection
    /// from its bounding box.
    pub fn sample_in_ball_b<R: Rng + ?Sized>(&self, radius: f64, rng: &mut R) -> DVector<f64> {
        let half = self.ball_half_widths(radius);
        loop {
            let x = DVector::from_fn(self.dim, |k, _| half[k] * (2.0 * rng.random::<f64>() - 1.0));
            if self.norm_b(&x) < radius {
                return x;
            }
        }
    }

    /// Half side lengths of the axis-aligned box containing `B_radius(0)`.
    pub fn ball_half_widths(&self, radius: f64) -> Vec<f64> {
        (0..self.dim)
            .map(|k| radius.powi(self.coordinate_degree(k)))
            .collect()
    }

    /// `sigma_0 = min_{|x|=1} |x|_B` and `sigma_bar = max_{|x|=1} |x|_B`.
    ///
    /// Multi-start projected pattern search seeded from `1000 N` random
    /// directions plus the coordinate axes, refined to absolute tolerance
    /// `1e-9`. The objective is not differentiable on the coordinate
    /// hyperplanes, so no gradients are used.
    pub fn sigma_bounds(&self) -> Result<SigmaBounds> {
        let n = self.dim;
        if self.p.len() == 1 {
            return Ok(SigmaBounds {
                sigma_0: 1.0,
                sigma_bar: 1.0,
            });
        }
        let seeds = 1000 * n;
        let mut rng = par::stream_rng(0x5EED, 0);
        let mut pts: Vec<DVector<f64>> = Vec::with_capacity(seeds + 2 * n);
        for k in 0..n {
            for sgn in [1.0, -1.0] {
                let mut e = DVector::zeros(n);
                e[k] = sgn;
                pts.push(e);
            }
        }
        for _ in 0..seeds {
            let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let nrm = x.norm();
            if nrm > 0.0 {
                pts.push(x / nrm);
            }
        }
        let mut scored: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, x)| (self.norm_b(x), i))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));

        const STARTS: usize = 8;
        let mut best_min = f64::INFINITY;
        for &(_, i) in scored.iter().take(STARTS) {
            best_min = best_min.min(self.pattern_search(&pts[i], 1.0)?);
        }
        let mut best_max = f64::NEG_INFINITY;
        for &(_, i) in scored.iter().rev().take(STARTS) {
            best_max = best_max.max(-self.pattern_search(&pts[i], -1.0)?);
        }
        Ok(SigmaBounds {
            sigma_0: best_min,
            sigma_bar: best_max,
        })
    }

    /// Minimizes `sign * |x|_B` over the Euclidean unit sphere starting at
    /// `start`; returns the minimal value of `sign * |x|_B`.
    fn pattern_search(&self, start: &DVector<f64>, sign: f64) -> Result<f64> {
        let n = self.dim;
        let f = |x: &DVector<f64>| sign * self.norm_b(x);
        let mut x = start.clone();
        let mut fx = f(&x);
        let mut step = 0.1;
        let mut iters = 0usize;
        const MAX_ITERS: usize = 200_000;
        while step > 1e-10 {
            iters += 1;
            if iters > MAX_ITERS {
                return Err(Error::NoConvergence {
                    what: "sigma_bounds",
                    detail: format!("step {step:e} after {MAX_ITERS} iterations"),
                });
            }
            let mut improved = false;
            for k in 0..n {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[k] += dir * step;
                    let nrm = y.norm();
                    if nrm == 0.0 {
                        continue;
                    }
                    y /= nrm;
                    let fy = f(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        Ok(fx)
    }
}

/// Extreme values of `|x|_B` on the Euclidean unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub sigma_0: f64,
    pub sigma_bar: f64,
}

/// A space-time point `z = (x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PointRepr", into = "PointRepr")]
pub struct Point {
    pub x: DVector<f64>,
    pub t: f64,
}

#[derive(Serialize, Deserialize)]
struct PointRepr {
    x: Vec<f64>,
    t: f64,
}

impl From<PointRepr> for Point {
    fn from(r: PointRepr) -> Self {
        Point::new(r.x, r.t)
    }
}

impl From<Point> for PointRepr {
    fn from(p: Point) -> Self {
        PointRepr {
            x: p.x.iter().copied().collect(),
            t: p.t,
        }
    }
}

impl Point {
    pub fn new(x: Vec<f64>, t: f64) -> Self {
        Self {
            x: DVector::from_vec(x),
            t,
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            x: DVector::zeros(dim),
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    /// Max-norm distance, used for approximate comparisons in tests.
    pub fn max_abs_diff(&self, other: &Point) -> f64 {
        (&self.x - &other.x)
            .amax()
            .max((self.t - other.t).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p21() -> BlockStructure {
        BlockStructure::new(vec![2, 1], vec![DMatrix::from_column_slice(2, 1, &[1.0, 0.0])]).unwrap()
    }

    fn random_point<R: Rng>(s: &BlockStructure, rng: &mut R) -> Point {
        Point {
            x: DVector::from_fn(s.dim(), |_, _| rng.random_range(-2.0..2.0)),
            t: rng.random_range(-2.0..2.0),
        }
    }

    #[test]
    fn prototype_dimensions() {
        let s = BlockStructure::prototype();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.q(), 4);
        assert_eq!(s.m_b(), 1.0);
        assert_eq!(s.n(), 1);
        assert_abs_diff_eq!(s.c_nb(), 1.0);
    }

    #[test]
    fn p21_dimensions() {
        let s = p21();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.q(), 5);
    }

    #[test]
    fn rejects_bad_structures() {
        let zero = BlockStructure::new(vec![1, 1], vec![DMatrix::zeros(1, 1)]);
        assert!(matches!(zero, Err(Error::RankDeficient { .. })));
        let shape = BlockStructure::new(vec![2, 1], vec![DMatrix::zeros(1, 1)]);
        assert!(matches!(shape, Err(Error::ShapeMismatch { .. })));
        assert_eq!(BlockStructure::new(vec![], vec![]).unwrap_err(), Error::EmptyStructure);
        assert!(matches!(
            BlockStructure::new(vec![1, 2], vec![DMatrix::zeros(1, 2)]),
            Err(Error::BadBlockSizes(_))
        ));
        // rank 1 block of shape 2x2 where rank 2 is required
        let r1 = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            BlockStructure::new(vec![2, 2], vec![r1]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn spec_round_trip() {
        let s = p21();
        let json = serde_json::to_string(&s.to_spec()).unwrap();
        let back: StructureSpec = serde_json::from_str(&json).unwrap();
        let s2 = BlockStructure::from_spec(&back).unwrap();
        assert_eq!(s2.block_sizes(), s.block_sizes());
        assert_eq!(s2.b_matrix(), s.b_matrix());
    }

    #[test]
    fn matrix_e_prototype_values() {
        let s = BlockStructure::prototype();
        let e1 = s.matrix_e(1.0);
        assert_eq!(e1, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 1.0]));
        let em2 = s.matrix_e(-2.0);
        assert_eq!(em2, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 1.0]));
        assert_eq!(s.matrix_e(0.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn matrix_e_matches_truncated_series_oracle() {
        // generic power series truncated at machine precision, independent
        // of the nilpotent finite sum
        let s = p21();
        let bt = s.b_matrix().transpose();
        for sigma in [-1.7, -0.3, 0.4, 2.5] {
            let mut sum = DMatrix::identity(3, 3);
            let mut term = DMatrix::identity(3, 3);
            for k in 1..40 {
                term = &term * (&bt * (-sigma)) / k as f64;
                sum += &term;
            }
            let e = s.matrix_e(sigma);
            assert!((e - sum).amax() < 1e-14);
        }
    }

    #[test]
    fn compose_inverse_examples() {
        let s = BlockStructure::prototype();
        let z = Point::new(vec![1.0, 0.0], 0.0);
        let zeta = Point::new(vec![0.0, 0.0], 1.0);
        let c = s.compose(&z, &zeta);
        assert_eq!(c, Point::new(vec![1.0, -1.0], 1.0));
        let inv = s.inverse(&Point::new(vec![1.0, 0.0], 1.0));
        assert_eq!(inv, Point::new(vec![-1.0, -1.0], -1.0));
        assert_eq!(s.inverse(&Point::origin(2)), Point::origin(2));
    }

    #[test]
    fn dilation_examples() {
        let s = BlockStructure::prototype();
        let z = Point::new(vec![1.0, 1.0], 1.0);
        assert_eq!(s.dilate(2.0, &z).unwrap(), Point::new(vec![2.0, 8.0], 4.0));
        assert_eq!(s.dilate(1.0, &z).unwrap(), z);
        assert!(matches!(s.dilate(0.0, &z), Err(Error::NonPositiveDilation(_))));
        assert!(matches!(s.dilate(-1.0, &z), Err(Error::NonPositiveDilation(_))));
    }

    #[test]
    fn norm_examples() {
        let s = BlockStructure::prototype();
        assert_abs_diff_eq!(s.norm_b(&DVector::from_vec(vec![0.0, 8.0])), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.norm_b(&DVector::from_vec(vec![3.0, -8.0])), 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            s.norm_b_spacetime(&Point::new(vec![1.0, 1.0], 4.0)),
            4.0,
            epsilon = 1e-15
        );
        assert_eq!(s.norm_b(&DVector::zeros(2)), 0.0);
    }

    #[test]
    fn commutation_property() {
        let s = p21();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let r: f64 = rng.random_range(0.1..3.0);
            let sigma: f64 = rng.random_range(-2.0..2.0);
            let lhs = s.matrix_e(r * r * sigma);
            let rhs = s.dilation_matrix(r) * s.matrix_e(sigma) * s.dilation_matrix(1.0 / r);
            assert!((lhs - rhs).amax() < 1e-12);
        }
    }

    #[test]
    fn group_axioms_and_automorphism() {
        let s = p21();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = random_point(&s, &mut rng);
            let b = random_point(&s, &mut rng);
            let c = random_point(&s, &mut rng);
            let l = s.compose(&s.compose(&a, &b), &c);
            let r = s.compose(&a, &s.compose(&b, &c));
            assert!(l.max_abs_diff(&r) < 1e-12);
            assert!(s.compose(&a, &Point::origin(3)).max_abs_diff(&a) < 1e-15);
            assert!(s.compose(&a, &s.inverse(&a)).max_abs_diff(&Point::origin(3)) < 1e-12);
            assert!(s.inverse(&s.inverse(&a)).max_abs_diff(&a) < 1e-12);
            let rr: f64 = rng.random_range(0.2..2.0);
            let lhs = s.dilate(rr, &s.compose(&a, &b)).unwrap();
            let rhs = s.compose(&s.dilate(rr, &a).unwrap(), &s.dilate(rr, &b).unwrap());
            assert!(lhs.max_abs_diff(&rhs) < 1e-11);
            let rel = s.relative(&b, &a);
            assert!(rel.max_abs_diff(&s.compose(&s.inverse(&b), &a)) < 1e-12);
        }
    }

    #[test]
    fn sigma_bounds_prototype_against_circle_grid() {
        let s = BlockStructure::prototype();
        let sb = s.sigma_bounds().unwrap();
        // 1-D oracle on the unit circle: dense grid plus golden refinement
        let g = |th: f64| th.cos().abs() + th.sin().abs().powf(1.0 / 3.0);
        let mut best = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        let m = 200_000;
        for i in 0..m {
            let th = i as f64 / m as f64 * std::f64::consts::TAU;
            let v = g(th);
            if v < best.0 {
                best.0 = v;
            }
            if v > best.1 {
                best.1 = v;
                best.2 = th;
            }
        }
        let (mut a, mut b) = (best.2 - 1e-4, best.2 + 1e-4);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..100 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if g(c) > g(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let max_oracle = g(0.5 * (a + b));
        assert_abs_diff_eq!(sb.sigma_0, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(best.0, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sb.sigma_bar, max_oracle, epsilon = 1e-8);
        assert_abs_diff_eq!(sb.sigma_bar, 1.66, epsilon = 0.01);
    }

    #[test]
    fn single_block_sigma_bounds() {
        let s = BlockStructure::new(vec![2], vec![]).unwrap();
        let sb = s.sigma_bounds().unwrap();
        assert_eq!((sb.sigma_0, sb.sigma_bar), (1.0, 1.0));
        assert_eq!(s.q(), 2);
        assert_eq!(s.matrix_e(3.0), DMatrix::identity(2, 2));
    }

    #[test]
    fn block_of_maps_coordinates() {
        let s = p21();
        assert_eq!(s.block_of(0), 0);
        assert_eq!(s.block_of(1), 0);
        assert_eq!(s.block_of(2), 1);
        assert_eq!(s.coordinate_degree(2), 3);
    }
}
