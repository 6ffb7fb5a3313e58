//! Null bicharacteristics of the isotropic elastic operator, parameterized by
//! Euclidean arclength `s`:
//!
//! ```text
//! dt/ds = 1/c,  dx/ds = σ ξ/|ξ|,  dτ/ds = 0,  dξ/ds = -σ |ξ| ∇log c
//! ```
//!
//! with `c = c_p` or `c_s` and `τ = σ c |ξ|` conserved. Integration is fixed
//! step RK4; the exit point is located by bisection on the last sub-step.

use alloc::vec::Vec;

use crate::medium::{MediumError, MediumModel, Mode};
use crate::region::{LensRegion, PointClass};
use crate::tensor::{solve3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub s: f64,
    pub t: f64,
    pub x: Vec3,
    pub tau: f64,
    pub xi: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    S,
    Cap,
    /// Maximum length reached inside the region.
    Trapped,
}

impl ExitKind {
    pub fn label(self) -> &'static str {
        match self {
            ExitKind::S => "S",
            ExitKind::Cap => "cap",
            ExitKind::Trapped => "trapped",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bicharacteristic {
    pub mode: Mode,
    pub sign: Sign,
    pub h_ray: f64,
    /// Uniform in `s` except possibly the final (exit) sample.
    pub samples: Vec<RaySample>,
    pub exit: ExitKind,
}

impl Bicharacteristic {
    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.s)
    }

    /// Unit tangent `dx/ds` at sample `k`.
    #[inline]
    pub fn direction(&self, k: usize) -> Vec3 {
        self.samples[k].xi.normalized() * self.sign.value()
    }

    /// Number of leading samples on the uniform `s` lattice.
    pub fn uniform_len(&self) -> usize {
        let n = self.samples.len();
        if n >= 2 {
            let last = self.samples[n - 1].s;
            let k = (n - 1) as f64;
            if (last - k * self.h_ray).abs() > 1e-9 * self.h_ray {
                return n - 1;
            }
        }
        n
    }

    /// `max |τ − σ c |ξ|| / |τ|` over the samples.
    pub fn hamiltonian_drift(&self, model: &MediumModel) -> Result<f64, MediumError> {
        let mut worst: f64 = 0.0;
        for p in &self.samples {
            let c = model.speed(p.x, self.mode)?;
            let h = p.tau - self.sign.value() * c * p.xi.norm();
            worst = worst.max(h.abs() / p.tau.abs());
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceError {
    ZeroCovector,
    BadStep(f64),
    StartOutside { x0: [f64; 3], class: PointClass },
    Medium(MediumError),
    TooFewSamples(usize),
    LengthMismatch { expected: usize, got: usize },
}

impl From<MediumError> for TraceError {
    fn from(e: MediumError) -> Self {
        TraceError::Medium(e)
    }
}

impl core::fmt::Display for TraceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TraceError::ZeroCovector => write!(f, "initial covector must be nonzero"),
            TraceError::BadStep(h) => write!(f, "ray step must be positive, got {h}"),
            TraceError::StartOutside { x0, class } => {
                write!(f, "start point ({}, {}, {}) is {}", x0[0], x0[1], x0[2], class.label())
            }
            TraceError::Medium(e) => write!(f, "medium along ray: {e}"),
            TraceError::TooFewSamples(n) => write!(f, "ray has {n} samples, need at least 5"),
            TraceError::LengthMismatch { expected, got } => {
                write!(f, "expected {expected} per-sample values, got {got}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct State {
    t: f64,
    x: Vec3,
    xi: Vec3,
}

#[derive(Debug, Clone, Copy)]
struct Deriv {
    t: f64,
    x: Vec3,
    xi: Vec3,
}

#[inline]
fn rhs(model: &MediumModel, mode: Mode, sigma: f64, y: &State) -> Result<Deriv, MediumError> {
    let (c, g) = model.speed_and_log_grad(y.x, mode)?;
    let n = y.xi.norm();
    Ok(Deriv { t: 1.0 / c, x: y.xi * (sigma / n), xi: g * (-sigma * n) })
}

#[inline]
fn axpy(y: &State, h: f64, d: &Deriv) -> State {
    State { t: y.t + h * d.t, x: y.x + d.x * h, xi: y.xi + d.xi * h }
}

fn rk4(model: &MediumModel, mode: Mode, sigma: f64, y: &State, h: f64) -> Result<State, MediumError> {
    let k1 = rhs(model, mode, sigma, y)?;
    let k2 = rhs(model, mode, sigma, &axpy(y, 0.5 * h, &k1))?;
    let k3 = rhs(model, mode, sigma, &axpy(y, 0.5 * h, &k2))?;
    let k4 = rhs(model, mode, sigma, &axpy(y, h, &k3))?;
    let w = h / 6.0;
    Ok(State {
        t: y.t + w * (k1.t + 2.0 * k2.t + 2.0 * k3.t + k4.t),
        x: y.x + (k1.x + k2.x * 2.0 + k3.x * 2.0 + k4.x) * w,
        xi: y.xi + (k1.xi + k2.xi * 2.0 + k3.xi * 2.0 + k4.xi) * w,
    })
}

/// Launch parameters shared by every ray of a computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceParams {
    pub mode: Mode,
    pub sign: Sign,
    pub h_ray: f64,
    pub max_length: f64,
}

impl TraceParams {
    pub fn p(h_ray: f64) -> Self {
        TraceParams { mode: Mode::P, sign: Sign::Plus, h_ray, max_length: 10.0 }
    }
}

/// Tolerance on the region level function at a located exit point.
pub const EXIT_TOL: f64 = 1e-10;

pub fn integrate_bicharacteristic(
    model: &MediumModel,
    region: &LensRegion,
    x0: Vec3,
    xi0: Vec3,
    params: &TraceParams,
) -> Result<Bicharacteristic, TraceError> {
    let TraceParams { mode, sign, h_ray, max_length } = *params;
    if !(h_ray > 0.0 && h_ray.is_finite()) {
        return Err(TraceError::BadStep(h_ray));
    }
    if !(xi0.norm() > 0.0) {
        return Err(TraceError::ZeroCovector);
    }
    let class = region.classify(x0);
    if !class.is_inside() {
        return Err(TraceError::StartOutside { x0: x0.0, class });
    }
    let sigma = sign.value();
    let tau = sigma * model.speed(x0, mode)? * xi0.norm();
    let mut y = State { t: 0.0, x: x0, xi: xi0 };
    let mut samples = alloc::vec![RaySample { s: 0.0, t: 0.0, x: x0, tau, xi: xi0 }];
    let max_steps = crate::math::floor(max_length / h_ray) as usize;
    let push = |samples: &mut Vec<RaySample>, s: f64, y: &State| {
        samples.push(RaySample { s, t: y.t, x: y.x, tau, xi: y.xi });
    };

    for step in 1..=max_steps {
        let next = rk4(model, mode, sigma, &y, h_ray)?;
        let level = region.level(next.x);
        if level >= 0.0 {
            y = next;
            push(&mut samples, step as f64 * h_ray, &y);
            continue;
        }
        // Crossed the boundary inside this step: bisect on the sub-step.
        let s_prev = (step - 1) as f64 * h_ray;
        let (mut lo, mut hi) = (0.0, h_ray);
        let mut hit = None;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let trial = rk4(model, mode, sigma, &y, mid)?;
            let lv = region.level(trial.x);
            if lv.abs() <= EXIT_TOL {
                hit = Some((mid, trial));
                break;
            }
            if lv > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * h_ray {
                break;
            }
        }
        let (sub, end) = match hit {
            Some(found) => found,
            None => (lo, rk4(model, mode, sigma, &y, lo)?),
        };
        let theta = region.theta.value(end.x.0);
        let cap = region.xtilde.value(end.x.0) + region.cap_level;
        let exit = if theta <= cap { ExitKind::S } else { ExitKind::Cap };
        if sub > 0.0 {
            push(&mut samples, s_prev + sub, &end);
        }
        return Ok(Bicharacteristic { mode, sign, h_ray, samples, exit });
    }
    Ok(Bicharacteristic { mode, sign, h_ray, samples, exit: ExitKind::Trapped })
}

/// Integrate exactly `steps` uniform steps with no region test.
pub fn integrate_steps(
    model: &MediumModel,
    x0: Vec3,
    xi0: Vec3,
    params: &TraceParams,
    steps: usize,
) -> Result<Bicharacteristic, TraceError> {
    let TraceParams { mode, sign, h_ray, .. } = *params;
    if !(xi0.norm() > 0.0) {
        return Err(TraceError::ZeroCovector);
    }
    let sigma = sign.value();
    let tau = sigma * model.speed(x0, mode)? * xi0.norm();
    let mut y = State { t: 0.0, x: x0, xi: xi0 };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(RaySample { s: 0.0, t: 0.0, x: x0, tau, xi: xi0 });
    for step in 1..=steps {
        match rk4(model, mode, sigma, &y, h_ray) {
            Ok(next) => y = next,
            Err(_) => break,
        }
        samples.push(RaySample { s: step as f64 * h_ray, t: y.t, x: y.x, tau, xi: y.xi });
    }
    Ok(Bicharacteristic { mode, sign, h_ray, samples, exit: ExitKind::Trapped })
}

/// Maximum defect of the pre-geodesic equation `x'' = -(I − NNᵀ)∇log c` on the
/// uniform samples, with `x'` and `x''` from central differences.
pub fn geodesic_residual(model: &MediumModel, ray: &Bicharacteristic) -> Result<f64, TraceError> {
    let n = ray.uniform_len();
    if n < 5 {
        return Err(TraceError::TooFewSamples(n));
    }
    let h = ray.h_ray;
    let mut worst: f64 = 0.0;
    for k in 1..n - 1 {
        let (a, b, c) = (ray.samples[k - 1].x, ray.samples[k].x, ray.samples[k + 1].x);
        let acc = ((c - b) - (b - a)) * (1.0 / (h * h));
        let tangent = (c - a) * (1.0 / (2.0 * h));
        let nn = tangent.normalized();
        let (_, g) = model.speed_and_log_grad(b, ray.mode)?;
        let expected = -(g - nn * g.dot(nn));
        worst = worst.max((acc - expected).norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FanKind {
    /// Neighbours offset transversally, sharing the initial covector.
    Parallel,
    /// Neighbours from the same point with tilted directions.
    PointSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrace {
    pub div_n: Vec<f64>,
    pub b0: Vec<f64>,
    pub a_minus1: Option<Vec<f64>>,
    /// Sample where `b0` equals the supplied initial value.
    pub reference_index: usize,
    /// Some neighbour ray failed before the central one ended.
    pub truncated: bool,
}

/// Relative position of a neighbour ray's sample to the central one.
fn fan_divergence(
    model: &MediumModel,
    ray: &Bicharacteristic,
    neighbours: &[Bicharacteristic; 4],
    k: usize,
) -> Result<f64, TraceError> {
    let x = ray.samples[k].x;
    let nvec = ray.direction(k);
    let (_, g) = model.speed_and_log_grad(x, ray.mode)?;
    let dnds = -(g - nvec * g.dot(nvec));
    let mut cols = [[0.0; 3]; 3];
    let mut rhs_cols = [[0.0; 3]; 3];
    for a in 0..2 {
        let (p, m) = (&neighbours[2 * a], &neighbours[2 * a + 1]);
        let d = p.samples[k].x - m.samples[k].x;
        let dn = p.direction(k) - m.direction(k);
        cols[a] = d.0;
        rhs_cols[a] = dn.0;
    }
    cols[2] = nvec.0;
    rhs_cols[2] = dnds.0;
    // J M = R with M = [d1 d2 N]; row i of J solves Mᵀ j = (R_i·)ᵀ.
    let mt = [cols[0], cols[1], cols[2]];
    let mut trace = 0.0;
    for i in 0..3 {
        let b = [rhs_cols[0][i], rhs_cols[1][i], rhs_cols[2][i]];
        match solve3(mt, b) {
            Some(row) => trace += row[i],
            None => return Ok(f64::INFINITY),
        }
    }
    Ok(trace)
}

/// Cumulative trapezoid of `f` over `s`, zero at `reference`.
fn cumulative_trapezoid(s: &[f64], f: &[f64], reference: usize) -> Vec<f64> {
    let n = s.len();
    let mut out = alloc::vec![0.0; n];
    for k in reference + 1..n {
        out[k] = out[k - 1] + 0.5 * (s[k] - s[k - 1]) * (f[k] + f[k - 1]);
    }
    for k in (0..reference).rev() {
        out[k] = out[k + 1] - 0.5 * (s[k + 1] - s[k]) * (f[k + 1] + f[k]);
    }
    out
}

fn rho_c(model: &MediumModel, x: Vec3, mode: Mode) -> Result<f64, TraceError> {
    let (_, _, rho) = model.lame(x);
    Ok(rho * model.speed(x, mode)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanSpec {
    pub kind: FanKind,
    /// Transverse offset (parallel) or tilt angle (point source).
    pub offset: f64,
    /// Sample at which `b0 = b0_init`; `None` picks the first sample with a
    /// finite divergence.
    pub reference_index: Option<usize>,
}

/// `∇·N` along the ray from a 4-ray fan, and the leading amplitude
/// `b0(s) = b0(s_ref) √(ρc(s_ref)/ρc(s)) exp(-½∫ ∇·N)`.
pub fn amplitude_transport(
    model: &MediumModel,
    ray: &Bicharacteristic,
    fan: &FanSpec,
    b0_init: f64,
) -> Result<AmplitudeTrace, TraceError> {
    let n_uniform = ray.uniform_len();
    let steps = n_uniform.saturating_sub(1);
    let first = ray.samples[0];
    let params = TraceParams { mode: ray.mode, sign: ray.sign, h_ray: ray.h_ray, max_length: f64::INFINITY };
    let nvec = ray.direction(0);
    let (e1, e2) = nvec.orthonormal_pair();
    let eps = fan.offset;
    let mut launches = [(Vec3::ZERO, Vec3::ZERO); 4];
    for (a, e) in [e1, e2].into_iter().enumerate() {
        for (b, sgn) in [1.0, -1.0].into_iter().enumerate() {
            launches[2 * a + b] = match fan.kind {
                FanKind::Parallel => (first.x + e * (sgn * eps), first.xi),
                FanKind::PointSource => {
                    let dir = (nvec + e * (sgn * eps)).normalized();
                    (first.x, dir * (ray.sign.value() * first.xi.norm()))
                }
            };
        }
    }
    let traced = crate::par::map_slice(&launches, |(x0, xi0)| integrate_steps(model, *x0, *xi0, &params, steps));
    let mut rays = Vec::with_capacity(4);
    for r in traced {
        rays.push(r?);
    }
    let neighbours: [Bicharacteristic; 4] = rays.try_into().expect("four neighbour rays");
    let common = neighbours.iter().map(|r| r.samples.len()).min().unwrap_or(0).min(n_uniform);
    let truncated = common < n_uniform;

    let div_n = crate::par::map_range(common, |k| fan_divergence(model, ray, &neighbours, k));
    let div_n: Vec<f64> = div_n.into_iter().collect::<Result<_, _>>()?;
    let reference_index = match fan.reference_index {
        Some(r) => r.min(common.saturating_sub(1)),
        None => div_n.iter().position(|v| v.is_finite()).unwrap_or(0),
    };
    let s: Vec<f64> = ray.samples[..common].iter().map(|p| p.s).collect();
    let integral = cumulative_trapezoid(&s, &div_n, reference_index);
    let rc_ref = rho_c(model, ray.samples[reference_index].x, ray.mode)?;
    let mut b0 = Vec::with_capacity(common);
    for k in 0..common {
        let rc = rho_c(model, ray.samples[k].x, ray.mode)?;
        let v = b0_init * crate::math::sqrt(rc_ref / rc) * crate::math::exp(-0.5 * integral[k]);
        b0.push(if integral[k].is_nan() { f64::INFINITY } else { v });
    }
    Ok(AmplitudeTrace { div_n, b0, a_minus1: None, reference_index, truncated })
}

/// Solve `a' + ½[(log ρc)' + ∇·N] a = G` by the integrating factor
/// `g = √(ρc) exp(½∫∇·N)`: `a = (g_ref a_init + ∫ g G) / g`.
pub fn amplitude_next_order(
    model: &MediumModel,
    ray: &Bicharacteristic,
    trace: &AmplitudeTrace,
    g_samples: &[f64],
    a_init: f64,
) -> Result<Vec<f64>, TraceError> {
    let n = trace.div_n.len();
    if g_samples.len() != n {
        return Err(TraceError::LengthMismatch { expected: n, got: g_samples.len() });
    }
    let r = trace.reference_index;
    let s: Vec<f64> = ray.samples[..n].iter().map(|p| p.s).collect();
    let int_div = cumulative_trapezoid(&s, &trace.div_n, r);
    let mut g = Vec::with_capacity(n);
    for k in 0..n {
        g.push(crate::math::sqrt(rho_c(model, ray.samples[k].x, ray.mode)?) * crate::math::exp(0.5 * int_div[k]));
    }
    let gg: Vec<f64> = g.iter().zip(g_samples).map(|(a, b)| a * b).collect();
    let int_source = cumulative_trapezoid(&s, &gg, r);
    Ok((0..n).map(|k| (g[r] * a_init + int_source[k]) / g[k]).collect())
}
