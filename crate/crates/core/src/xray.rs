//! Ray transform of symmetric 2-tensors along p-wave rays with both ends on
//! `S`: fan generation, forward and adjoint operators, damped least-squares
//! inversion and the solenoidal/potential split.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fd::{self, D1, D1_LOW};
use crate::field::SymTensor2Field;
use crate::grid::Grid3;
use crate::linalg::{cgls, CglsOptions, CglsResult, LinearOperator};
use crate::medium::{MediumError, MediumModel, Mode};
use crate::raytrace::{integrate_bicharacteristic, Bicharacteristic, ExitKind, TraceError, TraceParams};
use crate::region::{LensRegion, PointClass};
use crate::tensor::{quad_weights, Sym3, Vec3, SYM_PAIRS};

#[derive(Debug, Clone, PartialEq)]
pub enum XrayError {
    Trace(TraceError),
    Medium(MediumError),
    NoSeeds,
    EmptyFan { candidates: usize, cap: usize, trapped: usize, failed: usize },
    OutsideMask { ray_id: usize, s: f64 },
    OutsideGrid { ray_id: usize, s: f64 },
    SampleCount { rays: usize, samples: usize },
    BadRegularization(f64),
    GridTooSmall,
}

impl From<TraceError> for XrayError {
    fn from(e: TraceError) -> Self {
        XrayError::Trace(e)
    }
}

impl From<MediumError> for XrayError {
    fn from(e: MediumError) -> Self {
        XrayError::Medium(e)
    }
}

impl core::fmt::Display for XrayError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            XrayError::Trace(e) => write!(f, "{e}"),
            XrayError::Medium(e) => write!(f, "{e}"),
            XrayError::NoSeeds => write!(f, "no seed point landed on S"),
            XrayError::EmptyFan { candidates, cap, trapped, failed } => write!(
                f,
                "empty fan: all {candidates} candidates discarded ({cap} cap exits, {trapped} trapped, {failed} failed)"
            ),
            XrayError::OutsideMask { ray_id, s } => write!(f, "ray {ray_id} leaves the valid mask at s = {s}"),
            XrayError::OutsideGrid { ray_id, s } => write!(f, "ray {ray_id} leaves the grid at s = {s}"),
            XrayError::SampleCount { rays, samples } => write!(f, "{samples} samples for {rays} rays"),
            XrayError::BadRegularization(r) => write!(f, "regularization weight must be positive, got {r}"),
            XrayError::GridTooSmall => write!(f, "grid needs at least 5 nodes per axis"),
        }
    }
}

/// Where seed points are laid out before projection onto `θ = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedChart {
    /// Sunflower pattern on a flat disk.
    Disk { center: Vec3, normal: Vec3, radius: f64 },
    /// Fibonacci lattice on a sphere.
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanDesign {
    pub chart: SeedChart,
    pub seeds: usize,
    pub elevations: usize,
    pub azimuths: usize,
    /// Launch angle above the tangent plane of `S`, degrees.
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    /// Random azimuth rotation per seed, as a fraction of the azimuth spacing.
    pub jitter: f64,
    pub rng_seed: u64,
    pub h_ray: f64,
    pub max_length: f64,
}

impl FanDesign {
    /// Split a direction count into elevations × azimuths, 16 azimuths when
    /// the count allows it.
    pub fn split_directions(dirs: usize) -> (usize, usize) {
        if dirs >= 16 && dirs % 16 == 0 {
            (dirs / 16, 16)
        } else {
            (1, dirs.max(1))
        }
    }

    pub fn directions(&self) -> usize {
        self.elevations * self.azimuths
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Launch {
    pub id: usize,
    pub seed_index: usize,
    pub dir_index: usize,
    pub x0: Vec3,
    pub xi0: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanRay {
    pub launch: Launch,
    pub ray: Bicharacteristic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FanCounts {
    pub seeds: usize,
    pub candidates: usize,
    pub kept: usize,
    pub cap_exit: usize,
    pub trapped: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RayFan {
    pub rays: Vec<FanRay>,
    pub counts: FanCounts,
    pub h_ray: f64,
}

/// Seed points on `S`: the chart pattern projected onto `θ = 0`, keeping
/// points that land on the `S` part of the boundary.
pub fn seed_points(region: &LensRegion, chart: &SeedChart, n: usize) -> Vec<Vec3> {
    let golden = core::f64::consts::PI * (3.0 - crate::math::sqrt(5.0));
    let raw = (0..n).map(|k| {
        let kf = k as f64 + 0.5;
        match *chart {
            SeedChart::Disk { center, normal, radius } => {
                let (u, v) = normal.normalized().orthonormal_pair();
                let r = radius * crate::math::sqrt(kf / n as f64);
                let phi = k as f64 * golden;
                center + (u * crate::math::cos(phi) + v * crate::math::sin(phi)) * r
            }
            SeedChart::Sphere { center, radius } => {
                let z = 1.0 - 2.0 * kf / n as f64;
                let r = crate::math::sqrt((1.0 - z * z).max(0.0));
                let phi = k as f64 * golden;
                center + Vec3::new(r * crate::math::cos(phi), r * crate::math::sin(phi), z) * radius
            }
        }
    });
    raw.map(|p| region.project_to_s(p)).filter(|&p| region.classify(p) == PointClass::BoundaryS).collect()
}

/// Launch list of a design: per seed, `elevations × azimuths` directions in
/// the cone about the inward normal `∇θ/|∇θ|`.
pub fn plan_launches(region: &LensRegion, design: &FanDesign) -> Result<Vec<Launch>, XrayError> {
    let seeds = seed_points(region, &design.chart, design.seeds);
    if seeds.is_empty() {
        return Err(XrayError::NoSeeds);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(design.rng_seed);
    let d_az = 2.0 * core::f64::consts::PI / design.azimuths as f64;
    let (e0, e1) = (design.min_elevation_deg.to_radians(), design.max_elevation_deg.to_radians());
    let mut out = Vec::with_capacity(seeds.len() * design.directions());
    for (si, &x0) in seeds.iter().enumerate() {
        let u01 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let rot = design.jitter * d_az * u01;
        let n = Vec3(region.theta.value_grad(x0.0).1).normalized();
        let (t1, t2) = n.orthonormal_pair();
        for ei in 0..design.elevations {
            let e = e0 + (ei as f64 + 0.5) / design.elevations as f64 * (e1 - e0);
            for ai in 0..design.azimuths {
                let a = rot + ai as f64 * d_az;
                let tangential = t1 * crate::math::cos(a) + t2 * crate::math::sin(a);
                let dir = tangential * crate::math::cos(e) + n * crate::math::sin(e);
                out.push(Launch {
                    id: out.len(),
                    seed_index: si,
                    dir_index: ei * design.azimuths + ai,
                    x0,
                    xi0: dir,
                });
            }
        }
    }
    Ok(out)
}

/// Trace launches as forward p rays and keep those exiting through `S`.
pub fn trace_launches(
    model: &MediumModel,
    region: &LensRegion,
    launches: &[Launch],
    h_ray: f64,
    max_length: f64,
) -> Result<RayFan, XrayError> {
    let params = TraceParams { max_length, ..TraceParams::p(h_ray) };
    let traced = crate::par::map_slice(launches, |l| integrate_bicharacteristic(model, region, l.x0, l.xi0, &params));
    let mut counts = FanCounts { candidates: launches.len(), ..FanCounts::default() };
    let mut seeds = Vec::new();
    let mut rays = Vec::new();
    for (l, t) in launches.iter().zip(traced) {
        match t {
            Ok(ray) => match ray.exit {
                ExitKind::S if ray.samples.len() >= 3 => {
                    if !seeds.contains(&l.seed_index) {
                        seeds.push(l.seed_index);
                    }
                    rays.push(FanRay { launch: *l, ray });
                }
                ExitKind::S => counts.failed += 1,
                ExitKind::Cap => counts.cap_exit += 1,
                ExitKind::Trapped => counts.trapped += 1,
            },
            Err(_) => counts.failed += 1,
        }
    }
    counts.kept = rays.len();
    counts.seeds = seeds.len();
    if rays.is_empty() {
        return Err(XrayError::EmptyFan {
            candidates: counts.candidates,
            cap: counts.cap_exit,
            trapped: counts.trapped,
            failed: counts.failed,
        });
    }
    Ok(RayFan { rays, counts, h_ray })
}

pub fn generate_fan(model: &MediumModel, region: &LensRegion, design: &FanDesign) -> Result<RayFan, XrayError> {
    let launches = plan_launches(region, design)?;
    trace_launches(model, region, &launches, design.h_ray, design.max_length)
}

/// Anything that yields a symmetric tensor at a point.
pub trait TensorSampler {
    fn sample(&self, x: Vec3) -> Option<Sym3>;
}

impl TensorSampler for SymTensor2Field {
    fn sample(&self, x: Vec3) -> Option<Sym3> {
        self.interpolate(x)
    }
}

/// Closure-backed sampler, for analytic tensors.
pub struct FnSampler<F>(pub F);

impl<F: Fn(Vec3) -> Sym3> TensorSampler for FnSampler<F> {
    fn sample(&self, x: Vec3) -> Option<Sym3> {
        Some((self.0)(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSample {
    pub ray_id: usize,
    pub value: f64,
    pub length: f64,
}

fn integrand<S: TensorSampler + ?Sized>(b: &S, ray: &Bicharacteristic, k: usize, id: usize) -> Result<f64, XrayError> {
    let p = &ray.samples[k];
    let t = b.sample(p.x).ok_or(XrayError::OutsideMask { ray_id: id, s: p.s })?;
    Ok(t.quad(ray.direction(k)))
}

/// `∫ N·(BN) ds` by the trapezoid rule on the ray samples.
pub fn forward_transform<S: TensorSampler + ?Sized>(b: &S, ray: &Bicharacteristic, id: usize) -> Result<TransformSample, XrayError> {
    let mut acc = 0.0;
    let mut prev = integrand(b, ray, 0, id)?;
    for k in 1..ray.samples.len() {
        let cur = integrand(b, ray, k, id)?;
        acc += 0.5 * (ray.samples[k].s - ray.samples[k - 1].s) * (prev + cur);
        prev = cur;
    }
    Ok(TransformSample { ray_id: id, value: acc, length: ray.length() })
}

/// `∫ f(γ̇, γ̇) dt` with `f = B/c_p` and `γ̇ = c_p N`, trapezoid in travel time.
pub fn transform_g_form<S: TensorSampler + ?Sized>(
    b: &S,
    model: &MediumModel,
    ray: &Bicharacteristic,
    id: usize,
) -> Result<TransformSample, XrayError> {
    let f = |k: usize| -> Result<f64, XrayError> {
        let p = &ray.samples[k];
        let c = model.speed(p.x, Mode::P)?;
        let t = b.sample(p.x).ok_or(XrayError::OutsideMask { ray_id: id, s: p.s })?;
        let gdot = ray.direction(k) * c;
        Ok(t.quad(gdot) / c)
    };
    let mut acc = 0.0;
    let mut prev = f(0)?;
    for k in 1..ray.samples.len() {
        let cur = f(k)?;
        acc += 0.5 * (ray.samples[k].t - ray.samples[k - 1].t) * (prev + cur);
        prev = cur;
    }
    Ok(TransformSample { ray_id: id, value: acc, length: ray.length() })
}

/// Sparse matrix of the gridded transform: one row per ray, six weights per
/// touched node. Unknowns are node-major, component-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformOperator {
    pub grid: Grid3,
    row_ptr: Vec<usize>,
    nodes: Vec<u32>,
    vals: Vec<[f64; 6]>,
    // transposed copy, for a gather-form adjoint
    col_ptr: Vec<usize>,
    col_rows: Vec<u32>,
    col_vals: Vec<[f64; 6]>,
}

fn ray_row(grid: &Grid3, ray: &Bicharacteristic, id: usize) -> Result<Vec<(u32, [f64; 6])>, XrayError> {
    let n = ray.samples.len();
    let mut entries: Vec<(u32, [f64; 6])> = Vec::with_capacity(8 * n);
    for k in 0..n {
        let s = ray.samples[k].s;
        let w = match k {
            0 => 0.5 * (ray.samples[1].s - s),
            _ if k == n - 1 => 0.5 * (s - ray.samples[k - 1].s),
            _ => 0.5 * (ray.samples[k + 1].s - ray.samples[k - 1].s),
        };
        let q = quad_weights(ray.direction(k));
        let tri = grid.trilinear(ray.samples[k].x).ok_or(XrayError::OutsideGrid { ray_id: id, s })?;
        for (node, tw) in tri {
            if tw != 0.0 {
                let a = w * tw;
                entries.push((node as u32, q.map(|v| v * a)));
            }
        }
    }
    entries.sort_by_key(|e| e.0);
    let mut merged: Vec<(u32, [f64; 6])> = Vec::with_capacity(entries.len() / 4);
    for (node, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == node => {
                for c in 0..6 {
                    last.1[c] += v[c];
                }
            }
            _ => merged.push((node, v)),
        }
    }
    Ok(merged)
}

impl TransformOperator {
    pub fn new(grid: &Grid3, rays: &[&Bicharacteristic]) -> Result<Self, XrayError> {
        let idx: Vec<usize> = (0..rays.len()).collect();
        let rows = crate::par::map_slice(&idx, |&i| ray_row(grid, rays[i], i));
        let mut row_ptr = vec![0];
        let mut nodes = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (n, v) in r? {
                nodes.push(n);
                vals.push(v);
            }
            row_ptr.push(nodes.len());
        }
        // counting sort into columns, rows ascending within each column
        let mut col_ptr = vec![0usize; grid.len() + 1];
        for &n in &nodes {
            col_ptr[n as usize + 1] += 1;
        }
        for i in 0..grid.len() {
            col_ptr[i + 1] += col_ptr[i];
        }
        let mut fill = col_ptr.clone();
        let mut col_rows = vec![0u32; nodes.len()];
        let mut col_vals = vec![[0.0; 6]; nodes.len()];
        for r in 0..rows_len(&row_ptr) {
            for e in row_ptr[r]..row_ptr[r + 1] {
                let c = nodes[e] as usize;
                col_rows[fill[c]] = r as u32;
                col_vals[fill[c]] = vals[e];
                fill[c] += 1;
            }
        }
        Ok(TransformOperator { grid: *grid, row_ptr, nodes, vals, col_ptr, col_rows, col_vals })
    }

    pub fn from_fan(grid: &Grid3, fan: &RayFan) -> Result<Self, XrayError> {
        let rays: Vec<&Bicharacteristic> = fan.rays.iter().map(|r| &r.ray).collect();
        Self::new(grid, &rays)
    }

    pub fn nnz(&self) -> usize {
        self.nodes.len()
    }

    /// `trace(AᵀA)`: sum of squared entries.
    pub fn frobenius_sq(&self) -> f64 {
        let mut acc = 0.0;
        for v in &self.vals {
            for x in v {
                acc += x * x;
            }
        }
        acc
    }

    pub fn apply_field(&self, f: &SymTensor2Field) -> Vec<f64> {
        self.apply(&crate::field::GridField::to_flat(f))
    }
}

fn rows_len(ptr: &[usize]) -> usize {
    ptr.len() - 1
}

impl LinearOperator for TransformOperator {
    fn rows(&self) -> usize {
        rows_len(&self.row_ptr)
    }

    fn cols(&self) -> usize {
        6 * self.grid.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        crate::par::map_range(self.rows(), |r| {
            let mut acc = 0.0;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let base = 6 * self.nodes[e] as usize;
                let v = &self.vals[e];
                for c in 0..6 {
                    acc += v[c] * x[base + c];
                }
            }
            acc
        })
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let per_node = crate::par::map_range(self.grid.len(), |n| {
            let mut acc = [0.0; 6];
            for e in self.col_ptr[n]..self.col_ptr[n + 1] {
                let yr = y[self.col_rows[e] as usize];
                for c in 0..6 {
                    acc[c] += self.col_vals[e][c] * yr;
                }
            }
            acc
        });
        per_node.into_iter().flatten().collect()
    }
}

/// Frobenius weights of the stored components: off-diagonals count twice.
const FROB: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];

/// `A` in Frobenius-scaled unknowns `u_c = √w_c f_c`, so that plain
/// Tikhonov damping penalizes `|f|²_F`.
struct Scaled<'a>(&'a TransformOperator);

impl LinearOperator for Scaled<'_> {
    fn rows(&self) -> usize {
        self.0.rows()
    }
    fn cols(&self) -> usize {
        self.0.cols()
    }
    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = u.iter().enumerate().map(|(i, v)| v / libm::sqrt(FROB[i % 6])).collect();
        self.0.apply(&f)
    }
    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut g = self.0.apply_adjoint(y);
        for (i, v) in g.iter_mut().enumerate() {
            *v /= libm::sqrt(FROB[i % 6]);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    /// Tikhonov weight; `None` picks `1e-4 · trace(AᵀA) / #unknowns`.
    pub reg: Option<f64>,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for InversionOptions {
    fn default() -> Self {
        InversionOptions { reg: None, rel_tol: 1e-6, max_iter: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inversion {
    pub estimate: SymTensor2Field,
    pub reg: f64,
    pub solve: CglsResult,
}

pub fn default_regularization(op: &TransformOperator) -> f64 {
    1e-4 * op.frobenius_sq() / op.cols() as f64
}

/// `argmin Σ (A f − d)² + reg |f|²_F` by CGLS.
pub fn invert_transform(op: &TransformOperator, data: &[f64], opts: &InversionOptions) -> Result<Inversion, XrayError> {
    if data.len() != op.rows() {
        return Err(XrayError::SampleCount { rays: op.rows(), samples: data.len() });
    }
    let reg = opts.reg.unwrap_or_else(|| default_regularization(op));
    if !(reg > 0.0 && reg.is_finite()) {
        return Err(XrayError::BadRegularization(reg));
    }
    let solve = cgls(&Scaled(op), data, &CglsOptions { damping: reg, rel_tol: opts.rel_tol, abs_tol: 0.0, max_iter: opts.max_iter });
    let f: Vec<f64> = solve.x.iter().enumerate().map(|(i, v)| v / libm::sqrt(FROB[i % 6])).collect();
    let estimate = crate::field::GridField::from_flat(op.grid, &f, vec![true; op.grid.len()]);
    Ok(Inversion { estimate, reg, solve })
}

/// Zero-extended fourth-order `d_g` from one-forms on `unknowns` to tensors
/// on `rows`, weighted by `√(c_p w_c)` so that least squares uses the
/// `g`-metric on tensors.
struct GaugeOperator {
    grid: Grid3,
    unknowns: Vec<usize>,
    /// Per axis: rows using the centered 4th-order stencil, and rows one node
    /// from a face along that axis, which fall back to the 2nd-order one.
    hi_mask: [Vec<bool>; 3],
    lo_mask: [Vec<bool>; 3],
    rows: Vec<usize>,
    grad_psi: Vec<Vec3>,
    weight: Vec<[f64; 6]>,
}

impl GaugeOperator {
    fn new(grid: Grid3, unknowns: Vec<usize>, row_mask: &[bool], grad_psi: Vec<Vec3>, cp: &[f64]) -> Self {
        let rows: Vec<usize> = (0..grid.len()).filter(|&i| row_mask[i]).collect();
        let wide = |i: usize, a: usize| {
            let c = grid.coords(i)[a];
            c >= 2 && c + 2 < grid.dims[a]
        };
        let hi_mask = [0, 1, 2].map(|a| (0..grid.len()).map(|i| row_mask[i] && wide(i, a)).collect());
        let lo_mask = [0, 1, 2].map(|a| (0..grid.len()).map(|i| row_mask[i] && !wide(i, a)).collect());
        let weight = rows.iter().map(|&n| FROB.map(|w| libm::sqrt(w * cp[n]))).collect();
        GaugeOperator { grid, unknowns, hi_mask, lo_mask, rows, grad_psi, weight }
    }

    fn expand(&self, v: &[f64]) -> [Vec<f64>; 3] {
        let mut full = [vec![0.0; self.grid.len()], vec![0.0; self.grid.len()], vec![0.0; self.grid.len()]];
        for (k, &n) in self.unknowns.iter().enumerate() {
            for c in 0..3 {
                full[c][n] = v[3 * k + c];
            }
        }
        full
    }

    /// Unweighted `d_g v` on every row node.
    fn dg(&self, v: &[f64]) -> Vec<Sym3> {
        let full = self.expand(v);
        let d: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|c| {
                (0..3)
                    .map(|a| {
                        let hi = fd::apply(&self.grid, &full[c], &self.hi_mask[a], &D1, a);
                        let lo = fd::apply(&self.grid, &full[c], &self.lo_mask[a], &D1_LOW, a);
                        hi.iter().zip(lo).map(|(h, l)| h + l).collect()
                    })
                    .collect()
            })
            .collect();
        self.rows
            .iter()
            .map(|&n| {
                let vi = Vec3([full[0][n], full[1][n], full[2][n]]);
                let gp = self.grad_psi[n];
                let vg = vi.dot(gp);
                let mut s = Sym3::ZERO;
                for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                    let sym = 0.5 * (d[b][a][n] + d[a][b][n]);
                    let chris = vi[a] * gp[b] + vi[b] * gp[a] - if a == b { vg } else { 0.0 };
                    s.0[k] = sym - chris;
                }
                s
            })
            .collect()
    }
}

impl LinearOperator for GaugeOperator {
    fn rows(&self) -> usize {
        6 * self.rows.len()
    }

    fn cols(&self) -> usize {
        3 * self.unknowns.len()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dg(v);
        let mut out = Vec::with_capacity(self.rows());
        for (r, s) in d.iter().enumerate() {
            for k in 0..6 {
                out.push(self.weight[r][k] * s.0[k]);
            }
        }
        out
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        // g[c][a] collects the coefficient of ∂_a v_c at each row node
        let mut g = vec![vec![vec![0.0; n]; 3]; 3];
        let mut point = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (r, &node) in self.rows.iter().enumerate() {
            let gp = self.grad_psi[node];
            for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                let yk = self.weight[r][k] * y[6 * r + k];
                g[b][a][node] += 0.5 * yk;
                g[a][b][node] += 0.5 * yk;
                point[a][node] -= yk * gp[b];
                point[b][node] -= yk * gp[a];
                if a == b {
                    for c in 0..3 {
                        point[c][node] += yk * gp[c];
                    }
                }
            }
        }
        let mut full = point;
        for c in 0..3 {
            for a in 0..3 {
                let hi = fd::apply_adjoint(&self.grid, &g[c][a], &self.hi_mask[a], &D1, a);
                let lo = fd::apply_adjoint(&self.grid, &g[c][a], &self.lo_mask[a], &D1_LOW, a);
                for ((x, h), l) in full[c].iter_mut().zip(hi).zip(lo) {
                    *x += h + l;
                }
            }
        }
        let mut out = Vec::with_capacity(self.cols());
        for &node in &self.unknowns {
            for c in 0..3 {
                out.push(full[c][node]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub solenoidal: SymTensor2Field,
    pub potential: crate::field::OneFormField,
    pub solve: CglsResult,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions { rel_tol: 1e-12, max_iter: 20000 }
    }
}

/// Split `f = f_s + d_g v` with `δ_g f_s = 0`: least squares for `v` in the
/// `g`-metric, `v` vanishing outside the region (or on the outer grid face
/// when no region is given). Rows, and so the valid part of `f_s`, are the
/// valid nodes of `f` in the closed region and off the outer face.
pub fn solenoidal_project(
    model: &MediumModel,
    f: &SymTensor2Field,
    region: Option<&LensRegion>,
    opts: &ProjectionOptions,
) -> Result<Projection, XrayError> {
    let grid = f.grid;
    if grid.dims.iter().any(|&d| d < 5) {
        return Err(XrayError::GridTooSmall);
    }
    let unknowns: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.depth(i) >= 1 && region.map_or(true, |r| r.level(grid.point_at(i)) > 0.0))
        .collect();
    let row_mask: Vec<bool> = (0..grid.len())
        .map(|i| grid.depth(i) >= 1 && f.mask[i] && region.map_or(true, |r| r.contains(grid.point_at(i))))
        .collect();
    let speeds = crate::par::map_range(grid.len(), |i| model.speed_and_log_grad(grid.point_at(i), Mode::P));
    let mut grad_psi = Vec::with_capacity(grid.len());
    let mut cp = Vec::with_capacity(grid.len());
    for s in speeds {
        let (c, g) = s?;
        cp.push(c);
        grad_psi.push(-g);
    }
    let op = GaugeOperator::new(grid, unknowns, &row_mask, grad_psi, &cp);
    let mut rhs = Vec::with_capacity(op.rows());
    for (r, &n) in op.rows.iter().enumerate() {
        for k in 0..6 {
            rhs.push(op.weight[r][k] * f.data[n].0[k]);
        }
    }
    // ‖D‖ is of order 1/h; a normal residual below roundoff of ‖D‖‖f‖ is zero.
    let cmax = cp.iter().fold(0.0f64, |a, &c| a.max(c));
    let scale = 4.0 * libm::sqrt(2.0 * cmax) / grid.spacing * libm::sqrt(crate::linalg::dot(&rhs, &rhs));
    let solve = cgls(
        &op,
        &rhs,
        &CglsOptions { damping: 0.0, rel_tol: opts.rel_tol, abs_tol: 1e-13 * scale, max_iter: opts.max_iter },
    );
    let dv = op.dg(&solve.x);
    let mut solenoidal = f.clone();
    for m in solenoidal.mask.iter_mut() {
        *m = false;
    }
    for (r, &n) in op.rows.iter().enumerate() {
        solenoidal.data[n] = f.data[n] - dv[r];
        solenoidal.mask[n] = true;
    }
    let full = op.expand(&solve.x);
    let potential = crate::field::OneFormField::from_fn(grid, |_| Vec3::ZERO);
    let potential = crate::field::OneFormField {
        data: (0..grid.len()).map(|i| Vec3([full[0][i], full[1][i], full[2][i]])).collect(),
        ..potential
    };
    Ok(Projection { solenoidal, potential, solve })
}

/// Label for reports.
pub fn exit_label(kind: ExitKind) -> String {
    String::from(kind.label())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::raytrace::Sign;
    use proptest::prelude::*;

    fn constant() -> MediumModel {
        MediumModel::new("c", "1", "1", "1").unwrap()
    }

    fn ball(cap: f64) -> LensRegion {
        LensRegion::new("0.64 - x^2 - y^2 - z^2", "-z", cap, 1e-9).unwrap()
    }

    fn design(seeds: usize, dirs: usize) -> FanDesign {
        let (elevations, azimuths) = FanDesign::split_directions(dirs);
        FanDesign {
            chart: SeedChart::Sphere { center: Vec3::ZERO, radius: 0.8 },
            seeds,
            elevations,
            azimuths,
            min_elevation_deg: 5.0,
            max_elevation_deg: 85.0,
            jitter: 0.0,
            rng_seed: 0,
            h_ray: 0.01,
            max_length: 4.0,
        }
    }

    /// Exit of the straight chord from `p` along unit `d`: `true` through the
    /// sphere below the cap plane `z = cap`, by root formulas only.
    fn chord_exits_s(p: Vec3, d: Vec3, cap: f64) -> bool {
        let (b, c) = (p.dot(d), p.dot(p) - 0.64);
        let t = -b + libm::sqrt(b * b - c);
        if t <= 0.0 {
            return false;
        }
        let z_end = p[2] + t * d[2];
        z_end <= cap
    }

    #[test]
    fn chord_count_matches_geometry() {
        let region = ball(0.3);
        let fan_design = design(8, 16);
        let launches = plan_launches(&region, &fan_design).unwrap();
        let fan = trace_launches(&constant(), &region, &launches, 0.01, 4.0).unwrap();
        let expected = launches.iter().filter(|l| chord_exits_s(l.x0, l.xi0, 0.3)).count();
        assert_eq!(fan.counts.kept, expected);
        assert_eq!(fan.counts.kept + fan.counts.cap_exit + fan.counts.trapped + fan.counts.failed, launches.len());
        assert!(fan.counts.cap_exit > 0 && fan.counts.kept > 0);
        for r in &fan.rays {
            let end = r.ray.samples.last().unwrap().x;
            assert!((end.dot(end) - 0.64).abs() < 1e-9);
        }
    }

    #[test]
    fn steep_ray_at_cap_is_discarded() {
        let region = ball(0.3);
        let x0 = Vec3::new(0.0, 0.0, -0.8);
        let l = Launch { id: 0, seed_index: 0, dir_index: 0, x0, xi0: Vec3::new(0.0, 0.0, 1.0) };
        let err = trace_launches(&constant(), &region, &[l], 0.01, 4.0).unwrap_err();
        assert!(matches!(err, XrayError::EmptyFan { cap: 1, .. }));
    }

    #[test]
    fn identity_integrates_to_length() {
        let region = ball(10.0);
        let fan = generate_fan(&constant(), &region, &design(4, 4)).unwrap();
        for r in &fan.rays {
            let t = forward_transform(&FnSampler(|_| Sym3::IDENTITY), &r.ray, 0).unwrap();
            assert!((t.value - t.length).abs() < 1e-12 * t.length);
        }
    }

    #[test]
    fn g_form_matches_in_gradient_medium() {
        let model = MediumModel::new("g", "(1 + 0.3*z)^2", "0.2*(1 + 0.3*z)^2", "1").unwrap();
        let region = ball(10.0);
        let b = FnSampler(|x: Vec3| Sym3([1.0 + x[0], 0.5, x[2] * x[1], 0.2 * x[0], -0.1, libm::sin(x[1])]));
        let x0 = Vec3::new(0.0, 0.0, -0.8);
        for dir in [Vec3::new(0.3, 0.1, 1.0), Vec3::new(-0.6, 0.4, 0.7)] {
            let params = TraceParams { max_length: 4.0, ..TraceParams::p(2.5e-4) };
            let ray = integrate_bicharacteristic(&model, &region, x0, dir, &params).unwrap();
            let a = forward_transform(&b, &ray, 0).unwrap();
            let g = transform_g_form(&b, &model, &ray, 0).unwrap();
            assert!((a.value - g.value).abs() <= 1e-8 * a.length, "{} {}", a.value, g.value);
        }
    }

    #[test]
    fn outside_mask_is_an_error() {
        let g = Grid3::cube(-1.0, 1.0, 9);
        let mut f = SymTensor2Field::from_fn(g, |_| Sym3::IDENTITY);
        f.mask[g.index(4, 4, 4)] = false;
        let ray = integrate_bicharacteristic(&constant(), &ball(10.0), Vec3::new(0.0, 0.0, -0.8), Vec3::new(0.0, 0.0, 1.0), &TraceParams::p(0.01)).unwrap();
        assert!(matches!(forward_transform(&f, &ray, 3), Err(XrayError::OutsideMask { ray_id: 3, .. })));
    }

    #[test]
    fn operator_matches_interpolated_transform() {
        let g = Grid3::cube(-1.0, 1.0, 9);
        let fan = generate_fan(&constant(), &ball(10.0), &design(6, 16)).unwrap();
        let op = TransformOperator::from_fan(&g, &fan).unwrap();
        let f = SymTensor2Field::from_fn(g, |x| Sym3([x[0], x[1] * x[1], 1.0, libm::sin(x[2]), 0.3, x[0] * x[2]]));
        let a = op.apply_field(&f);
        for (r, v) in fan.rays.iter().zip(&a) {
            let t = forward_transform(&f, &r.ray, 0).unwrap();
            assert!((t.value - v).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn zero_data_zero_estimate() {
        let g = Grid3::cube(-1.0, 1.0, 9);
        let fan = generate_fan(&constant(), &ball(10.0), &design(6, 16)).unwrap();
        let op = TransformOperator::from_fan(&g, &fan).unwrap();
        let inv = invert_transform(&op, &vec![0.0; op.rows()], &InversionOptions::default()).unwrap();
        assert!(inv.estimate.data.iter().all(|s| s.0.iter().all(|v| *v == 0.0)));
        assert!(matches!(
            invert_transform(&op, &vec![0.0; op.rows()], &InversionOptions { reg: Some(-1.0), ..Default::default() }),
            Err(XrayError::BadRegularization(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let g = Grid3::cube(-1.0, 1.0, 13);
        let m = MediumModel::new("g", "(1 + 0.2*z)^2", "0.3*(1 + 0.2*z)^2", "1").unwrap();
        let bubble = |x: Vec3| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * (1.0 - x[2] * x[2]);
        let f = SymTensor2Field::from_fn(g, |x| Sym3([x[0] * x[1], 1.0 + x[2], x[1], 0.3 * x[0] * x[0], -x[2] * x[1], 0.5]));
        let p = solenoidal_project(&m, &f, None, &ProjectionOptions::default()).unwrap();
        assert!(p.solve.converged);
        let again = solenoidal_project(&m, &p.solenoidal, None, &ProjectionOptions::default()).unwrap();
        let diff = again.solenoidal.sub(&p.solenoidal).l2_norm();
        assert!(diff <= 1e-8 * p.solenoidal.l2_norm());

        // manufactured potential, with d_g evaluated analytically
        let v0 = |x: Vec3| Vec3::new(bubble(x), x[0] * bubble(x), 0.5 * bubble(x));
        let errs: Vec<f64> = [9usize, 17]
            .iter()
            .map(|&n| {
                let g = Grid3::cube(-1.0, 1.0, n);
                let exact = crate::tensorfield::sym_derivative_g(&m, &crate::field::OneFormField::from_fn(Grid3::cube(-1.0, 1.0, 4 * n - 3), v0)).unwrap();
                let fine = exact.grid;
                let f = SymTensor2Field::from_fn(g, |x| {
                    let c = fine.nearest(x).unwrap();
                    exact.data[fine.index(c[0], c[1], c[2])]
                });
                let p = solenoidal_project(&m, &f, None, &ProjectionOptions::default()).unwrap();
                let v = crate::field::OneFormField::from_fn(g, v0);
                let mut e = 0.0;
                let mut s = 0.0;
                for i in 0..g.len() {
                    let d = p.potential.data[i] - v.data[i];
                    e += d.dot(d);
                    s += v.data[i].dot(v.data[i]);
                }
                libm::sqrt(e / s)
            })
            .collect();
        assert!(errs[1] < 0.05 && errs[0] / errs[1] >= 3.0, "{errs:?}");
    }

    #[test]
    fn discretely_solenoidal_has_no_potential() {
        // f = Δφ I − Hess φ from the same central stencils, φ supported well
        // inside: the discrete divergence vanishes identically.
        let g = Grid3::cube(-1.0, 1.0, 21);
        let phi = fd::Masked::full((0..g.len()).map(|i| {
            let x = g.point_at(i);
            let r2 = x.dot(x) / 0.0625;
            if r2 < 1.0 { (1.0 - r2).powi(4) } else { 0.0 }
        }).collect());
        let dd: Vec<Vec<fd::Masked>> = (0..3).map(|a| (0..3).map(|b| fd::d1(&g, &fd::d1(&g, &phi, b), a)).collect()).collect();
        let f = SymTensor2Field::from_fn(g, |_| Sym3::ZERO);
        let data = (0..g.len()).map(|i| {
            let lap = dd[0][0].values[i] + dd[1][1].values[i] + dd[2][2].values[i];
            let mut s = Sym3::ZERO;
            for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
                s.0[k] = if a == b { lap } else { 0.0 } - dd[a][b].values[i];
            }
            s
        }).collect();
        let f = SymTensor2Field { data, ..f };
        let p = solenoidal_project(&constant(), &f, None, &ProjectionOptions::default()).unwrap();
        assert!(p.potential.l2_norm() <= 1e-8, "{}", p.potential.l2_norm());
        assert!(f.l2_norm() > 0.1, "{}", f.l2_norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn adjoint_and_linearity(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = Grid3::cube(-1.0, 1.0, 9);
            let mut d = design(5, 16);
            d.jitter = 1.0;
            d.rng_seed = seed;
            let fan = generate_fan(&constant(), &ball(10.0), &d).unwrap();
            let op = TransformOperator::from_fan(&g, &fan).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut uni = || (rand_chacha::rand_core::RngCore::next_u64(&mut rng) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let x: Vec<f64> = (0..op.cols()).map(|_| uni()).collect();
            let x2: Vec<f64> = (0..op.cols()).map(|_| uni()).collect();
            let y: Vec<f64> = (0..op.rows()).map(|_| uni()).collect();
            let lhs = dot(&op.apply(&x), &y);
            let rhs = dot(&x, &op.apply_adjoint(&y));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let combo: Vec<f64> = x.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
            let (ac, a1, a2) = (op.apply(&combo), op.apply(&x), op.apply(&x2));
            for k in 0..ac.len() {
                prop_assert!((ac[k] - (a * a1[k] + b * a2[k])).abs() <= 1e-12 * (1.0 + ac[k].abs()) * 10.0);
            }
        }

        #[test]
        fn gauge_adjoint(seed in 0u64..1000) {
            let g = Grid3::cube(-1.0, 1.0, 7);
            let m = MediumModel::new("g", "(1 + 0.2*x)^2", "0.3*(1 + 0.2*x)^2", "1").unwrap();
            let unknowns: Vec<usize> = (0..g.len()).filter(|&i| g.depth(i) >= 1).collect();
            let row_mask: Vec<bool> = (0..g.len()).map(|i| g.depth(i) >= 1).collect();
            let grad_psi = (0..g.len()).map(|i| -m.speed_and_log_grad(g.point_at(i), Mode::P).unwrap().1).collect();
            let cp: Vec<f64> = (0..g.len()).map(|i| m.speed(g.point_at(i), Mode::P).unwrap()).collect();
            let op = GaugeOperator::new(g, unknowns, &row_mask, grad_psi, &cp);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut uni = || (rand_chacha::rand_core::RngCore::next_u64(&mut rng) >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            let x: Vec<f64> = (0..op.cols()).map(|_| uni()).collect();
            let y: Vec<f64> = (0..op.rows()).map(|_| uni()).collect();
            let lhs = dot(&op.apply(&x), &y);
            let rhs = dot(&x, &op.apply_adjoint(&y));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn sign_is_forward() {
        assert_eq!(TraceParams::p(0.1).sign, Sign::Plus);
    }
}
