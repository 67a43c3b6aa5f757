//! Coefficient fields `A(z) = diag(AA(z), 0)` with `lambda I <= AA(z) <= Lambda I`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::covariance::embed_block;
use crate::error::{Error, Result};
use crate::geometry::Cylinder;
use crate::group::{BlockStructure, Point};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H1,
    H2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Constant,
    Checkerboard,
    SmoothOscillatory,
    HolderOscillatory,
    PiecewiseRandom,
    Custom,
}

/// JSON descriptor `{"kind", "lambda", "Lambda", "seed", "params"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub params: serde_json::Value,
}

fn default_seed() -> u64 {
    0x5EED
}

impl FieldSpec {
    pub fn new(kind: FieldKind, lambda: f64, big_lambda: f64) -> Self {
        Self {
            kind,
            lambda,
            big_lambda,
            seed: default_seed(),
            params: serde_json::Value::Null,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_params(mut self, params: serde_json::Value) -> Self {
        self.params = params;
        self
    }
}

/// Uniform modulus of continuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Modulus {
    /// `omega(eps) = L eps`.
    Lipschitz(f64),
    /// `omega(eps) = c sqrt(eps)`.
    Sqrt(f64),
    /// `omega = 0`.
    Zero,
}

impl Modulus {
    pub fn eval(&self, eps: f64) -> f64 {
        match *self {
            Modulus::Lipschitz(l) => l * eps,
            Modulus::Sqrt(c) => c * eps.sqrt(),
            Modulus::Zero => 0.0,
        }
    }

    /// Largest `eps in (0, 1]` with `omega(eps) <= bound`.
    pub fn largest_eps_below(&self, bound: f64) -> f64 {
        let e = match *self {
            Modulus::Lipschitz(l) if l > 0.0 => bound / l,
            Modulus::Sqrt(c) if c > 0.0 => (bound / c).powi(2),
            _ => 1.0,
        };
        e.min(1.0)
    }
}

type CustomFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
enum Imp {
    Constant(DMatrix<f64>),
    Lattice { cell: f64, random_matrix: bool },
    Wave {
        mid: f64,
        amp: f64,
        k: DVector<f64>,
        omega_t: f64,
        shape: DMatrix<f64>,
        holder: bool,
    },
    Custom(CustomFn),
}

/// A coefficient field; `eval_block` returns the `p_0 x p_0` block.
#[derive(Clone)]
pub struct CoefficientField {
    kind: FieldKind,
    lambda: f64,
    big_lambda: f64,
    seed: u64,
    structure: BlockStructure,
    modulus: Option<Modulus>,
    imp: Imp,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("kind", &self.kind)
            .field("lambda", &self.lambda)
            .field("Lambda", &self.big_lambda)
            .field("seed", &self.seed)
            .field("modulus", &self.modulus)
            .finish()
    }
}

/// Projects the spectrum of a symmetric matrix onto `[lo, hi]`.
pub fn clamp_spectrum(m: &DMatrix<f64>, lo: f64, hi: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = eig.eigenvalues.map(|v| v.clamp(lo, hi));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn param_f64(p: &serde_json::Value, key: &str, default: f64) -> Result<f64> {
    match p.get(key) {
        None | Some(serde_json::Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidParameter(format!("field parameter `{key}` must be a number"))),
    }
}

fn param_vec(p: &serde_json::Value, key: &str) -> Result<Option<Vec<f64>>> {
    match p.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::InvalidParameter(format!("field parameter `{key}`: {e}"))),
    }
}

fn param_matrix(p: &serde_json::Value, key: &str, n: usize) -> Result<Option<DMatrix<f64>>> {
    match p.get(key) {
        None | Some(serde_json::Value::Null) => Ok(None),
        Some(v) => {
            let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())
                .map_err(|e| Error::InvalidParameter(format!("field parameter `{key}`: {e}")))?;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidParameter(format!("field parameter `{key}` must be {n}x{n}")));
            }
            Ok(Some(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
        }
    }
}

fn check_ellipticity(lambda: f64, big_lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && big_lambda >= lambda && big_lambda.is_finite()) {
        return Err(Error::BadEllipticity { lambda, big_lambda });
    }
    Ok(())
}

/// H1 threshold `1 + 2/Q`.
pub fn h1_threshold(s: &BlockStructure) -> f64 {
    1.0 + 2.0 / s.qf()
}

/// Builds a field from its descriptor. With `hyp = Some(H1)` the ratio
/// `Lambda/lambda` must be below `1 + 2/Q`; with `Some(H2)` the kind must carry
/// a modulus of continuity.
pub fn make_field(spec: &FieldSpec, s: &BlockStructure, hyp: Option<Hypothesis>) -> Result<CoefficientField> {
    let (lambda, big_lambda) = (spec.lambda, spec.big_lambda);
    check_ellipticity(lambda, big_lambda)?;
    if hyp == Some(Hypothesis::H1) && big_lambda / lambda >= h1_threshold(s) {
        return Err(Error::H1Violated {
            ratio: big_lambda / lambda,
            threshold: h1_threshold(s),
        });
    }
    let p0 = s.p0();
    let p = &spec.params;
    let (imp, modulus) = match spec.kind {
        FieldKind::Constant => {
            let m = param_matrix(p, "matrix", p0)?.unwrap_or_else(|| DMatrix::identity(p0, p0) * lambda);
            let c = clamp_spectrum(&m, lambda, big_lambda);
            (Imp::Constant(c), Some(Modulus::Zero))
        }
        FieldKind::Checkerboard | FieldKind::PiecewiseRandom => {
            let cell = param_f64(p, "cell", 0.25)?;
            if !(cell > 0.0) {
                return Err(Error::InvalidParameter("cell size must be positive".into()));
            }
            let random_matrix = spec.kind == FieldKind::PiecewiseRandom;
            (Imp::Lattice { cell, random_matrix }, None)
        }
        FieldKind::SmoothOscillatory | FieldKind::HolderOscillatory => {
            let holder = spec.kind == FieldKind::HolderOscillatory;
            let mid = param_f64(p, "mid", 0.5 * (lambda + big_lambda))?;
            let amp = param_f64(p, "amp", 0.25 * (big_lambda - lambda))?;
            let omega_t = param_f64(p, "omega_t", 0.0)?;
            let kv = param_vec(p, "k")?.unwrap_or_else(|| {
                let mut v = vec![0.0; p0];
                v[0] = 1.0;
                v
            });
            if kv.len() != p0 {
                return Err(Error::InvalidParameter(format!("wave vector must have length p_0 = {p0}")));
            }
            let shape = param_matrix(p, "shape", p0)?.unwrap_or_else(|| DMatrix::identity(p0, p0));
            let shape = (&shape + shape.transpose()) * 0.5;
            let sn = SymmetricEigen::new(shape.clone()).eigenvalues.amax();
            if !(sn > 0.0) || amp < 0.0 {
                return Err(Error::InvalidParameter("shape must be nonzero and amp nonnegative".into()));
            }
            let shape = shape / sn;
            let slack = 1e-12 * big_lambda;
            if mid - amp < lambda - slack || mid + amp > big_lambda + slack {
                return Err(Error::InvalidParameter(format!(
                    "amplitude {amp} around {mid} leaves the band [{lambda}, {big_lambda}]"
                )));
            }
            let k = DVector::from_vec(kv);
            let rate = k.norm() + omega_t.abs();
            let modulus = if holder {
                Modulus::Sqrt(amp * 2f64.sqrt() * rate.sqrt())
            } else {
                Modulus::Lipschitz(amp * rate)
            };
            (
                Imp::Wave {
                    mid,
                    amp,
                    k,
                    omega_t,
                    shape,
                    holder,
                },
                Some(modulus),
            )
        }
        FieldKind::Custom => {
            return Err(Error::InvalidParameter(
                "custom fields are built with CoefficientField::custom".into(),
            ))
        }
    };
    if hyp == Some(Hypothesis::H2) && modulus.is_none() {
        return Err(Error::InvalidParameter(format!(
            "{:?} fields are discontinuous and have no modulus of continuity",
            spec.kind
        )));
    }
    Ok(CoefficientField {
        kind: spec.kind,
        lambda,
        big_lambda,
        seed: spec.seed,
        structure: s.clone(),
        modulus,
        imp,
    })
}

impl CoefficientField {
    /// Constant field `AA = a`.
    pub fn constant(s: &BlockStructure, a: DMatrix<f64>, lambda: f64, big_lambda: f64) -> Result<Self> {
        check_ellipticity(lambda, big_lambda)?;
        if a.shape() != (s.p0(), s.p0()) {
            return Err(Error::InvalidParameter("constant block has the wrong shape".into()));
        }
        Ok(Self {
            kind: FieldKind::Constant,
            lambda,
            big_lambda,
            seed: 0,
            structure: s.clone(),
            modulus: Some(Modulus::Zero),
            imp: Imp::Constant(clamp_spectrum(&a, lambda, big_lambda)),
        })
    }

    /// Arbitrary, unclamped field; `lambda`/`Lambda` are nominal and are not
    /// enforced, which lets tests inject known violations.
    pub fn custom<F>(s: &BlockStructure, lambda: f64, big_lambda: f64, modulus: Option<Modulus>, f: F) -> Self
    where
        F: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            kind: FieldKind::Custom,
            lambda,
            big_lambda,
            seed: 0,
            structure: s.clone(),
            modulus,
            imp: Imp::Custom(Arc::new(f)),
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn modulus(&self) -> Option<Modulus> {
        self.modulus
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.imp, Imp::Constant(_))
    }

    /// Index of the homogeneous lattice cell containing `z`: coordinate `k`
    /// is divided by `h^{deg k}` and time by `h^2`.
    fn cell_hash(&self, z: &Point, cell: f64) -> u64 {
        let mut h = splitmix(self.seed);
        for (k, v) in z.x.iter().enumerate() {
            let w = cell.powi(self.structure.coordinate_degree(k));
            h = splitmix(h ^ ((v / w).floor() as i64 as u64));
        }
        splitmix(h ^ ((z.t / (cell * cell)).floor() as i64 as u64))
    }

    pub fn eval_block(&self, z: &Point) -> DMatrix<f64> {
        let p0 = self.structure.p0();
        match &self.imp {
            Imp::Constant(a) => a.clone(),
            Imp::Lattice { cell, random_matrix } => {
                let h = self.cell_hash(z, *cell);
                if *random_matrix {
                    let mut rng = ChaCha8Rng::seed_from_u64(h);
                    let g = DMatrix::from_fn(p0, p0, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let q = g.qr().q();
                    let d = DVector::from_fn(p0, |_, _| rng.random_range(self.lambda..=self.big_lambda));
                    let m = &q * DMatrix::from_diagonal(&d) * q.transpose();
                    clamp_spectrum(&m, self.lambda, self.big_lambda)
                } else if h & 1 == 0 {
                    DMatrix::identity(p0, p0) * self.lambda
                } else {
                    DMatrix::identity(p0, p0) * self.big_lambda
                }
            }
            Imp::Wave {
                mid,
                amp,
                k,
                omega_t,
                shape,
                holder,
            } => {
                let phase = omega_t * z.t + k.dot(&z.x.rows(0, p0));
                let g = if *holder {
                    phase.signum() * phase.abs().min(1.0).sqrt()
                } else {
                    phase.sin()
                };
                let m = DMatrix::identity(p0, p0) * *mid + shape * (amp * g);
                clamp_spectrum(&m, self.lambda, self.big_lambda)
            }
            Imp::Custom(f) => f(z),
        }
    }

    /// Writes the block row major into `out`, skipping the matrix
    /// allocation for lattice fields.
    pub fn eval_block_into(&self, z: &Point, out: &mut [f64]) {
        let p0 = self.structure.p0();
        if let Imp::Lattice { cell, random_matrix: false } = &self.imp {
            let v = if self.cell_hash(z, *cell) & 1 == 0 { self.lambda } else { self.big_lambda };
            for i in 0..p0 {
                for j in 0..p0 {
                    out[i * p0 + j] = if i == j { v } else { 0.0 };
                }
            }
            return;
        }
        let m = self.eval_block(z);
        for i in 0..p0 {
            for j in 0..p0 {
                out[i * p0 + j] = m[(i, j)];
            }
        }
    }

    /// Full `N x N` matrix `A(z)`.
    pub fn eval_full(&self, z: &Point) -> DMatrix<f64> {
        embed_block(&self.structure, &self.eval_block(z)).expect("block shape is fixed at construction")
    }
}

/// Result of [`validate_field`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub samples: usize,
    pub min_eig: f64,
    pub max_eig: f64,
    pub ratio: f64,
    pub max_asymmetry: f64,
    /// `max(lambda - min_eig, max_eig - Lambda, 0)`.
    pub ellipticity_violation: f64,
    /// Largest `||AA(z) - AA(z0)|| - omega(eps)` seen, when a modulus exists.
    pub modulus_violation: Option<f64>,
}

impl FieldReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.ellipticity_violation <= tol
            && self.max_asymmetry <= tol
            && self.modulus_violation.is_none_or(|v| v <= tol)
    }
}

/// Samples the field on `region` and checks ellipticity, symmetry and the
/// modulus of continuity over cylinders `Q_eps^{-eps^2, eps^2}(z0)`.
pub fn validate_field(f: &CoefficientField, region: &Cylinder, samples: usize, seed: u64, exec: Exec) -> FieldReport {
    let s = &f.structure;
    let counts = par::split_counts(samples, par::SAMPLING_CHUNKS);
    let parts = par::map_indexed(exec, counts.len(), |c| {
        let mut rng = par::stream_rng(seed, c as u64);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut asym: f64 = 0.0;
        let mut modv = f64::NEG_INFINITY;
        for _ in 0..counts[c] {
            let z0 = region.sample_interior(s, &mut rng);
            let a0 = f.eval_block(&z0);
            asym = asym.max((&a0 - a0.transpose()).amax());
            let ev = SymmetricEigen::new((&a0 + a0.transpose()) * 0.5).eigenvalues;
            lo = lo.min(ev.min());
            hi = hi.max(ev.max());
            if let Some(m) = f.modulus {
                let eps: f64 = rng.random_range(1e-3..1.0);
                let local = Cylinder::new(z0.clone(), eps, -eps * eps, eps * eps).expect("valid cylinder");
                let z = if rng.random::<bool>() {
                    local.sample_interior(s, &mut rng)
                } else {
                    let x = s.sample_on_sphere_b(eps * (1.0 - 1e-12), &mut rng);
                    let t = eps * eps * (2.0 * rng.random::<f64>() - 1.0);
                    s.compose(&z0, &Point { x, t })
                };
                let d = f.eval_block(&z) - &a0;
                let nrm = SymmetricEigen::new((&d + d.transpose()) * 0.5).eigenvalues.amax();
                modv = modv.max(nrm - m.eval(eps));
            }
        }
        (lo, hi, asym, modv)
    });
    let lo = parts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = parts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let asym = parts.iter().map(|p| p.2).fold(0.0, f64::max);
    let modv = parts.iter().map(|p| p.3).fold(f64::NEG_INFINITY, f64::max);
    FieldReport {
        samples,
        min_eig: lo,
        max_eig: hi,
        ratio: hi / lo,
        max_asymmetry: asym,
        ellipticity_violation: (f.lambda - lo).max(hi - f.big_lambda).max(0.0),
        modulus_violation: f.modulus.map(|_| modv.max(0.0)),
    }
}
