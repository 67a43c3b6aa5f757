//! Explicit monotone finite differences for `L_A u = 0`, i.e.
//! `u_t = tr(AA D^2_{x^(p0)}) u + <x, B grad u>`, on axis-aligned boxes.
//!
//! Second derivatives in the `p_0` block are central, mixed derivatives use
//! the stencil whose diagonal matches the sign of `a_ij`, and the drift is
//! upwinded. Under the CFL restriction every update is a convex combination
//! of old values, so the discrete maximum principle holds.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::geometry::Cylinder;
use crate::group::{BlockStructure, Point};
use crate::par::{self, Exec};

/// Default nodes per spatial axis.
pub const DEFAULT_RESOLUTION: usize = 64;
/// Fewer nodes than this per axis cannot hold the stencil plus a margin.
pub const MIN_RESOLUTION: usize = 8;
pub const CFL_SAFETY: f64 = 0.9;
/// Upper limits that keep a single solve at desk scale.
pub const MAX_NODES: usize = 50_000_000;
pub const MAX_STEPS: usize = 2_000_000;
const NODE_CHUNK: usize = 1024;

/// Axis-aligned space-time box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
}

impl BoxDomain {
    /// Smallest box holding `cyl`, enlarged by about one cell per side at
    /// `resolution` nodes per axis.
    pub fn covering(st: &BlockStructure, cyl: &Cylinder, resolution: usize) -> BoxDomain {
        let n = st.dim();
        let w = st.ball_half_widths(cyl.r);
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        const TAU_SAMPLES: usize = 33;
        for i in 0..TAU_SAMPLES {
            let tau = cyl.t1 + (cyl.t2 - cyl.t1) * i as f64 / (TAU_SAMPLES - 1) as f64;
            let c = st.apply_e(tau, &cyl.center.x);
            for k in 0..n {
                lo[k] = lo[k].min(c[k] - w[k]);
                hi[k] = hi[k].max(c[k] + w[k]);
            }
        }
        let margin = 1.0 / (resolution.max(MIN_RESOLUTION) as f64 - 3.0);
        for k in 0..n {
            let pad = (hi[k] - lo[k]) * margin;
            lo[k] -= pad;
            hi[k] += pad;
        }
        BoxDomain {
            lo,
            hi,
            t1: cyl.center.t + cyl.t1,
            t2: cyl.center.t + cyl.t2,
        }
    }

    /// Image under `delta_r`.
    pub fn dilate(&self, st: &BlockStructure, r: f64) -> BoxDomain {
        let sc = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .enumerate()
                .map(|(k, x)| x * r.powi(st.coordinate_degree(k)))
                .collect()
        };
        BoxDomain {
            lo: sc(&self.lo),
            hi: sc(&self.hi),
            t1: self.t1 * r * r,
            t2: self.t2 * r * r,
        }
    }
}

/// Uniform space-time grid satisfying the CFL restriction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub h: Vec<f64>,
    pub nodes: Vec<usize>,
    pub strides: Vec<usize>,
    pub t1: f64,
    pub t2: f64,
    pub dt: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(st: &BlockStructure, dom: &BoxDomain, resolution: usize, big_lambda: f64) -> Result<Grid> {
        let n = st.dim();
        if resolution < MIN_RESOLUTION {
            return Err(Error::Infeasible(format!(
                "resolution {resolution} is below the minimum {MIN_RESOLUTION} nodes per axis"
            )));
        }
        if dom.lo.len() != n || dom.hi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: dom.lo.len() });
        }
        if dom.lo.iter().zip(&dom.hi).any(|(a, b)| !(a < b)) || !(dom.t1 < dom.t2) {
            return Err(Error::InvalidParameter("empty solver box".into()));
        }
        let total = (resolution as f64).powi(n as i32);
        if total > MAX_NODES as f64 {
            return Err(Error::Infeasible(format!("{total} nodes exceed the limit {MAX_NODES}")));
        }
        let nodes = vec![resolution; n];
        let h: Vec<f64> = (0..n).map(|k| (dom.hi[k] - dom.lo[k]) / (resolution - 1) as f64).collect();
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * nodes[k + 1];
        }
        // sup |(B^T x)_j| over the box, attained at a corner coordinatewise
        let b = st.b_matrix();
        let mut rate = 0.0;
        for i in 0..st.p0() {
            rate += 2.0 * big_lambda / (h[i] * h[i]);
        }
        for j in 0..n {
            let mut bmax = 0.0;
            for i in 0..n {
                bmax += b[(i, j)].abs() * dom.lo[i].abs().max(dom.hi[i].abs());
            }
            rate += bmax / h[j];
        }
        let span = dom.t2 - dom.t1;
        let dt_max = CFL_SAFETY / rate;
        let steps = (span / dt_max).ceil().max(1.0);
        if steps > MAX_STEPS as f64 {
            return Err(Error::Infeasible(format!("{steps} time steps exceed the limit {MAX_STEPS}")));
        }
        let steps = steps as usize;
        Ok(Grid {
            lo: dom.lo.clone(),
            h,
            nodes,
            strides,
            t1: dom.t1,
            t2: dom.t2,
            dt: span / steps as f64,
            steps,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn time(&self, step: usize) -> f64 {
        if step == self.steps {
            self.t2
        } else {
            self.t1 + self.dt * step as f64
        }
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        self.strides.iter().zip(&self.nodes).map(|(s, n)| (flat / s) % n).collect()
    }

    pub fn coords(&self, flat: usize) -> DVector<f64> {
        let n = self.nodes.len();
        DVector::from_fn(n, |k, _| self.lo[k] + self.h[k] * ((flat / self.strides[k]) % self.nodes[k]) as f64)
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.strides
            .iter()
            .zip(&self.nodes)
            .any(|(s, n)| {
                let i = (flat / s) % n;
                i == 0 || i + 1 == *n
            })
    }

    /// Cell index and weight along axis `k`, or `None` outside the box.
    fn locate(&self, k: usize, x: f64) -> Option<(usize, f64)> {
        let s = (x - self.lo[k]) / self.h[k];
        let last = (self.nodes[k] - 1) as f64;
        if !(s >= -1e-9 && s <= last + 1e-9) {
            return None;
        }
        let s = s.clamp(0.0, last);
        let i = (s.floor() as usize).min(self.nodes[k] - 2);
        Some((i, s - i as f64))
    }
}

/// Sub-cylinder whose nodes are tracked during the solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub name: String,
    pub cylinder: Cylinder,
    /// Nodes with `u <= level` are counted separately.
    pub level: f64,
}

impl Observer {
    pub fn new(name: &str, cylinder: Cylinder) -> Self {
        Self { name: name.into(), cylinder, level: 0.0 }
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }
}

/// Statistics over the nodes of an observed cylinder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverStats {
    pub name: String,
    pub nodes: usize,
    pub sup: f64,
    pub inf: f64,
    /// Nodes with `u <= level`.
    pub below_level: usize,
    /// Per observed slab: `(t, sup, inf)`.
    pub series: Vec<(f64, f64, f64)>,
}

impl ObserverStats {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            nodes: 0,
            sup: f64::NEG_INFINITY,
            inf: f64::INFINITY,
            below_level: 0,
            series: Vec::new(),
        }
    }

    pub fn osc(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.sup - self.inf
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub resolution: usize,
    pub observers: Vec<Observer>,
    pub keep_history: bool,
    pub exec: Exec,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            observers: Vec::new(),
            keep_history: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub observers: Vec<ObserverStats>,
    pub min_u: f64,
    pub max_u: f64,
    /// Bounds of the Dirichlet data over all boundary nodes and slabs.
    pub data_min: f64,
    pub data_max: f64,
    /// `min u >= -1e-12 max|data|` when the data are nonnegative.
    pub nonnegative: bool,
    /// Interior nodes where the diffusion stencil lost diagonal dominance.
    pub non_monotone_nodes: usize,
    pub history: Option<Vec<Vec<f64>>>,
    structure: BlockStructure,
}

impl SolveResult {
    pub fn observer(&self, name: &str) -> Option<&ObserverStats> {
        self.observers.iter().find(|o| o.name == name)
    }

    /// Multilinear interpolation in space and linear in time; needs the
    /// history.
    pub fn interpolate(&self, z: &Point) -> Option<f64> {
        let hist = self.history.as_ref()?;
        let g = &self.grid;
        let n = g.nodes.len();
        if z.t < g.t1 - 1e-12 * g.t2.abs().max(1.0) || z.t > g.t2 + 1e-12 * g.t2.abs().max(1.0) {
            return None;
        }
        let st = ((z.t - g.t1) / g.dt).clamp(0.0, g.steps as f64);
        let s0 = (st.floor() as usize).min(g.steps.saturating_sub(1));
        let wt = (st - s0 as f64).clamp(0.0, 1.0);
        let mut cells = Vec::with_capacity(n);
        for k in 0..n {
            cells.push(g.locate(k, z.x[k])?);
        }
        let mut acc = [0.0f64; 2];
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for (k, &(i, f)) in cells.iter().enumerate() {
                let up = (corner >> k) & 1 == 1;
                w *= if up { f } else { 1.0 - f };
                flat += (i + usize::from(up)) * g.strides[k];
            }
            if w == 0.0 {
                continue;
            }
            acc[0] += w * hist[s0][flat];
            acc[1] += w * hist[(s0 + 1).min(g.steps)][flat];
        }
        Some((1.0 - wt) * acc[0] + wt * acc[1])
    }

    /// Statistics of an observer registered after the solve; needs the
    /// history.
    pub fn observe(&self, o: &Observer) -> Option<ObserverStats> {
        let hist = self.history.as_ref()?;
        let coords: Vec<DVector<f64>> = (0..self.grid.node_count()).map(|f| self.grid.coords(f)).collect();
        let mut s = ObserverStats::new(&o.name);
        for (k, u) in hist.iter().enumerate() {
            observe_slab(&self.structure, &coords, o, &mut s, u, self.grid.time(k));
        }
        Some(s)
    }

    /// Per-slab `(t, sup, inf)` of every observer as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "observer,t,sup,inf")?;
        for o in &self.observers {
            for (t, s, i) in &o.series {
                writeln!(out, "{},{:.17e},{:.17e},{:.17e}", o.name, t, s, i)?;
            }
        }
        Ok(())
    }

    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }
}

/// Adds the nodes of slab `t` that lie in the observed cylinder.
fn observe_slab(st: &BlockStructure, coords: &[DVector<f64>], o: &Observer, s: &mut ObserverStats, u: &[f64], t: f64) {
    let tol = 1e-12 * (1.0 + t.abs());
    let tl = t - o.cylinder.center.t;
    if tl < o.cylinder.t1 - tol || tl > o.cylinder.t2 + tol {
        return;
    }
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    let mut cnt = 0;
    // local coordinates are x - E(t - t0) x0; the shift is fixed on a slab
    let shift = st.apply_e(tl, &o.cylinder.center.x);
    let mut w = vec![0.0; st.dim()];
    for (f, x) in coords.iter().enumerate() {
        for k in 0..w.len() {
            w[k] = x[k] - shift[k];
        }
        if st.norm_b_slice(&w) <= o.cylinder.r + tol {
            sup = sup.max(u[f]);
            inf = inf.min(u[f]);
            cnt += 1;
            if u[f] <= o.level {
                s.below_level += 1;
            }
        }
    }
    if cnt > 0 {
        s.nodes += cnt;
        s.sup = s.sup.max(sup);
        s.inf = s.inf.min(inf);
        s.series.push((t, sup, inf));
    }
}

/// Explicit step at one interior node; `a` is the `p_0 x p_0` block, row
/// major.
fn node_update(
    g: &Grid,
    p0: usize,
    a: &[f64],
    drift: &[f64],
    old: &[f64],
    flat: usize,
) -> f64 {
    let n = g.nodes.len();
    let u0 = old[flat];
    let mut du = 0.0;
    for i in 0..p0 {
        let si = g.strides[i];
        let hi2 = g.h[i] * g.h[i];
        du += a[i * p0 + i] * ((old[flat + si] - u0) + (old[flat - si] - u0)) / hi2;
        for j in (i + 1)..p0 {
            let aij = a[i * p0 + j];
            if aij == 0.0 {
                continue;
            }
            let sj = g.strides[j];
            let d = |idx: usize| old[idx] - u0;
            let axis = d(flat + si) + d(flat - si) + d(flat + sj) + d(flat - sj);
            let diag = if aij > 0.0 {
                d(flat + si + sj) + d(flat - si - sj)
            } else {
                -(d(flat + si - sj) + d(flat - si + sj))
            };
            let uij = if aij > 0.0 { diag - axis } else { diag + axis };
            // 2 a_ij u_ij with u_ij = uij / (2 h_i h_j)
            du += aij * uij / (g.h[i] * g.h[j]);
        }
    }
    for j in 0..n {
        let b = drift[j];
        if b > 0.0 {
            du += b * (old[flat + g.strides[j]] - u0) / g.h[j];
        } else if b < 0.0 {
            du += b * (u0 - old[flat - g.strides[j]]) / g.h[j];
        }
    }
    u0 + g.dt * du
}

/// Whether the mixed stencil keeps nonnegative weights at this node.
fn diagonally_dominant(g: &Grid, p0: usize, a: &[f64]) -> bool {
    (0..p0).all(|i| {
        let off: f64 = (0..p0)
            .filter(|j| *j != i)
            .map(|j| a[i * p0 + j].abs() / (g.h[i] * g.h[j]))
            .sum();
        a[i * p0 + i] / (g.h[i] * g.h[i]) >= off
    })
}

/// Solves on `dom` with Dirichlet data `data` on the parabolic boundary of
/// the box.
pub fn solve(
    field: &CoefficientField,
    st: &BlockStructure,
    dom: &BoxDomain,
    data: &(dyn Fn(&Point) -> f64 + Sync),
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let g = Grid::new(st, dom, opts.resolution, field.big_lambda())?;
    let n = st.dim();
    let p0 = st.p0();
    let total = g.node_count();
    let b = st.b_matrix();
    let coords: Vec<DVector<f64>> = (0..total).map(|f| g.coords(f)).collect();
    let drift: Vec<f64> = coords
        .iter()
        .flat_map(|x| (b.transpose() * x).iter().cloned().collect::<Vec<_>>())
        .collect();
    let constant_a: Option<Vec<f64>> = field.is_constant().then(|| {
        let m = field.eval_block(&Point::origin(n));
        (0..p0 * p0).map(|k| m[(k / p0, k % p0)]).collect()
    });

    let mut stats: Vec<ObserverStats> = opts.observers.iter().map(|o| ObserverStats::new(&o.name)).collect();
    let observe = |stats: &mut Vec<ObserverStats>, u: &[f64], t: f64| {
        for (o, s) in opts.observers.iter().zip(stats.iter_mut()) {
            observe_slab(st, &coords, o, s, u, t);
        }
    };

    let mut data_min = f64::INFINITY;
    let mut data_max = f64::NEG_INFINITY;
    let mut u: Vec<f64> = coords
        .iter()
        .map(|x| data(&Point { x: x.clone(), t: g.t1 }))
        .collect();
    for v in &u {
        data_min = data_min.min(*v);
        data_max = data_max.max(*v);
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial data".into()));
    }
    let mut history = opts.keep_history.then(|| vec![u.clone()]);
    observe(&mut stats, &u, g.t1);
    let mut next = vec![0.0; total];
    let boundary: Vec<bool> = (0..total).map(|f| g.is_boundary(f)).collect();
    let block_at = |f: usize, t: f64, buf: &mut [f64]| {
        field.eval_block_into(&Point { x: coords[f].clone(), t }, buf);
    };
    // diagonal dominance depends only on the coefficients, checked on the first slab
    let mut non_monotone = 0usize;
    if p0 > 1 {
        let mut buf = vec![0.0; p0 * p0];
        for f in (0..total).filter(|f| !boundary[*f]) {
            let a: &[f64] = match &constant_a {
                Some(a) => a,
                None => {
                    block_at(f, g.t1, &mut buf);
                    &buf
                }
            };
            if !diagonally_dominant(&g, p0, a) {
                non_monotone += 1;
            }
        }
    }
    let mut min_all = u.iter().cloned().fold(f64::INFINITY, f64::min);

    for step in 0..g.steps {
        let t_old = g.time(step);
        let t_new = g.time(step + 1);
        {
            let (g, old, coords, drift, boundary, constant_a) = (&g, &u, &coords, &drift, &boundary, &constant_a);
            par::for_each_chunk_mut(opts.exec, &mut next, NODE_CHUNK, |ci, chunk| {
                let start = ci * NODE_CHUNK;
                let mut buf = vec![0.0; p0 * p0];
                let mut z = Point { x: DVector::zeros(n), t: t_new };
                for (off, slot) in chunk.iter_mut().enumerate() {
                    let f = start + off;
                    z.x.copy_from(&coords[f]);
                    if boundary[f] {
                        z.t = t_new;
                        *slot = data(&z);
                        continue;
                    }
                    let a: &[f64] = match constant_a {
                        Some(a) => a,
                        None => {
                            z.t = t_old;
                            field.eval_block_into(&z, &mut buf);
                            &buf
                        }
                    };
                    *slot = node_update(g, p0, a, &drift[f * n..(f + 1) * n], old, f);
                }
            });
        }
        for f in 0..total {
            let v = next[f];
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("solution at t = {t_new}")));
            }
            if boundary[f] {
                data_min = data_min.min(v);
                data_max = data_max.max(v);
            }
            min_all = min_all.min(v);
        }
        std::mem::swap(&mut u, &mut next);
        if let Some(h) = history.as_mut() {
            h.push(u.clone());
        }
        observe(&mut stats, &u, t_new);
    }

    let min_u = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_u = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = data_max.abs().max(data_min.abs());
    let nonnegative = data_min < 0.0 || min_all >= -1e-12 * scale;
    Ok(SolveResult {
        grid: g,
        u,
        observers: stats,
        min_u,
        max_u,
        data_min,
        data_max,
        nonnegative,
        non_monotone_nodes: non_monotone,
        history,
        structure: st.clone(),
    })
}

/// Solves on the box covering `cyl`.
pub fn solve_cylinder(
    field: &CoefficientField,
    st: &BlockStructure,
    cyl: &Cylinder,
    data: &(dyn Fn(&Point) -> f64 + Sync),
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let dom = BoxDomain::covering(st, cyl, opts.resolution);
    solve(field, st, &dom, data, opts)
}
