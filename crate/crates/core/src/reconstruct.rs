//! The fourth-order density operator `L u = γΔ²u − Δ(∇β⁺·∇u)`, its clamped
//! least-squares solve and the uniqueness certificate pipeline.

use alloc::vec;
use alloc::vec::Vec;

use crate::fd::{self, Masked, D1};
use crate::field::{ScalarField, SymTensor2Field};
use crate::grid::Grid3;
use crate::linalg::{cgls, dot, CglsOptions, CglsResult, LinearOperator};
use crate::medium::{MediumError, MediumModel, Mode};
use crate::region::LensRegion;
use crate::tensorfield::{contraction, gamma_coefficient, omega_quartic, saint_venant, TensorError};
use crate::xray::{
    invert_transform, solenoidal_project, InversionOptions, ProjectionOptions, TransformOperator, XrayError,
};

/// Unknowns and equations live this many nodes in from the grid faces, so
/// every composed stencil of `L` stays in bounds with `u = 0` outside.
pub const CLAMP_DEPTH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum ReconstructError {
    Medium(MediumError),
    EmptyMask,
    GridMismatch,
    NonPositiveDensity { at: [f64; 3] },
    Stage { stage: &'static str, error: StageError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageError {
    Xray(XrayError),
    Tensor(TensorError),
    Reconstruct(alloc::boxed::Box<ReconstructError>),
}

impl From<MediumError> for ReconstructError {
    fn from(e: MediumError) -> Self {
        ReconstructError::Medium(e)
    }
}

impl core::fmt::Display for ReconstructError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ReconstructError::Medium(e) => write!(f, "{e}"),
            ReconstructError::EmptyMask => write!(f, "no unmasked interior nodes"),
            ReconstructError::GridMismatch => write!(f, "fields live on different grids"),
            ReconstructError::NonPositiveDensity { at } => {
                write!(f, "density not positive at ({}, {}, {})", at[0], at[1], at[2])
            }
            ReconstructError::Stage { stage, error } => match error {
                StageError::Xray(e) => write!(f, "[{stage}] {e}"),
                StageError::Tensor(e) => write!(f, "[{stage}] {e}"),
                StageError::Reconstruct(e) => write!(f, "[{stage}] {e}"),
            },
        }
    }
}

fn stage<E>(stage: &'static str, wrap: impl FnOnce(E) -> StageError) -> impl FnOnce(E) -> ReconstructError {
    move |e| ReconstructError::Stage { stage, error: wrap(e) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct T4Operator {
    pub grid: Grid3,
    pub gamma: Vec<f64>,
    pub beta_plus: Vec<f64>,
    grad_beta_plus: [Vec<f64>; 3],
    /// Unknown and equation nodes.
    pub mask: Vec<bool>,
    /// Nodes dropped for `|c_p − 2c_s| < ε_deg`.
    pub degenerate: Vec<bool>,
    pub eps_deg: f64,
    nodes: Vec<usize>,
    ring2: Vec<bool>,
}

/// `ε_deg = 1e-3 · max c_s` over the given nodes.
pub fn degenerate_tolerance(cs: impl Iterator<Item = f64>) -> f64 {
    1e-3 * cs.fold(0.0, f64::max)
}

/// Build `L` on nodes that are `CLAMP_DEPTH` in from the faces, inside
/// `region` (when given), inside `within` (when given) and off the
/// degenerate band.
pub fn assemble_t4_operator(
    model: &MediumModel,
    beta_plus: &ScalarField,
    region: Option<&LensRegion>,
    within: Option<&[bool]>,
) -> Result<T4Operator, ReconstructError> {
    let grid = beta_plus.grid;
    let speeds = crate::par::map_range(grid.len(), |i| {
        let x = grid.point_at(i);
        Ok::<_, MediumError>((model.speed(x, Mode::P)?, model.speed(x, Mode::S)?))
    });
    let mut cp = Vec::with_capacity(grid.len());
    let mut cs = Vec::with_capacity(grid.len());
    for s in speeds {
        let (p, q) = s?;
        cp.push(p);
        cs.push(q);
    }
    let candidate: Vec<bool> = (0..grid.len())
        .map(|i| {
            grid.depth(i) >= CLAMP_DEPTH
                && region.map_or(true, |r| r.contains(grid.point_at(i)))
                && within.map_or(true, |w| w[i])
        })
        .collect();
    let eps_deg = degenerate_tolerance((0..grid.len()).filter(|&i| candidate[i]).map(|i| cs[i]));
    let degenerate: Vec<bool> = (0..grid.len()).map(|i| candidate[i] && (cp[i] - 2.0 * cs[i]).abs() < eps_deg).collect();
    let mask: Vec<bool> = (0..grid.len()).map(|i| candidate[i] && !degenerate[i]).collect();
    let nodes: Vec<usize> = (0..grid.len()).filter(|&i| mask[i]).collect();
    if nodes.is_empty() {
        return Err(ReconstructError::EmptyMask);
    }
    let bp = Masked::new(beta_plus.data.clone(), beta_plus.mask.clone());
    let grad = fd::gradient(&grid, &bp);
    let grad_beta_plus = grad.map(|g| g.values);
    let gamma = (0..grid.len()).map(|i| gamma_coefficient(cp[i], cs[i])).collect();
    let ring2 = fd::interior_mask(&grid, 2);
    Ok(T4Operator {
        grid,
        gamma,
        beta_plus: beta_plus.data.clone(),
        grad_beta_plus,
        mask,
        degenerate,
        eps_deg,
        nodes,
        ring2,
    })
}

impl T4Operator {
    pub fn unknowns(&self) -> usize {
        self.nodes.len()
    }

    fn expand(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        for (k, &n) in self.nodes.iter().enumerate() {
            full[n] = u[k];
        }
        full
    }

    /// `L u` on every grid node where it is defined (`u` taken as given,
    /// not clamped). Valid four nodes in from the faces.
    pub fn apply_field(&self, u: &ScalarField) -> ScalarField {
        let m = Masked::new(u.data.clone(), u.mask.clone());
        let bilap = fd::laplacian(&self.grid, &fd::laplacian(&self.grid, &m));
        let gu = fd::gradient(&self.grid, &m);
        let mut w = Masked::new(vec![0.0; self.grid.len()], gu[0].mask.clone());
        for a in 0..3 {
            for i in 0..self.grid.len() {
                w.values[i] += self.grad_beta_plus[a][i] * gu[a].values[i];
                w.mask[i] = w.mask[i] && gu[a].mask[i];
            }
        }
        let lw = fd::laplacian(&self.grid, &w);
        let mut out = ScalarField::zeros(self.grid);
        for i in 0..self.grid.len() {
            out.mask[i] = bilap.mask[i] && lw.mask[i] && self.ring2[i];
            if out.mask[i] {
                out.data[i] = self.gamma[i] * bilap.values[i] - lw.values[i];
            }
        }
        out
    }

    /// Zero-extend a solution vector to a field masked to the unknowns.
    pub fn to_field(&self, u: &[f64]) -> ScalarField {
        ScalarField { grid: self.grid, data: self.expand(u), mask: self.mask.clone() }
    }
}

impl LinearOperator for T4Operator {
    fn rows(&self) -> usize {
        self.nodes.len()
    }

    fn cols(&self) -> usize {
        self.nodes.len()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let full = self.expand(u);
        let lap = fd::apply_laplacian(&self.grid, &full, &self.ring2);
        let bilap = fd::apply_laplacian(&self.grid, &lap, &self.mask);
        let mut w = vec![0.0; self.grid.len()];
        for a in 0..3 {
            let g = fd::apply(&self.grid, &full, &self.ring2, &D1, a);
            for i in 0..self.grid.len() {
                w[i] += self.grad_beta_plus[a][i] * g[i];
            }
        }
        let lw = fd::apply_laplacian(&self.grid, &w, &self.mask);
        self.nodes.iter().map(|&n| self.gamma[n] * bilap[n] - lw[n]).collect()
    }

    fn apply_adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.grid.len();
        let mut gy = vec![0.0; n];
        let mut my = vec![0.0; n];
        for (k, &node) in self.nodes.iter().enumerate() {
            gy[node] = self.gamma[node] * y[k];
            my[node] = -y[k];
        }
        let mut t = fd::apply_laplacian_adjoint(&self.grid, &gy, &self.mask);
        mask_in_place(&mut t, &self.ring2);
        let mut acc = fd::apply_laplacian_adjoint(&self.grid, &t, &self.ring2);
        let mut z = fd::apply_laplacian_adjoint(&self.grid, &my, &self.mask);
        mask_in_place(&mut z, &self.ring2);
        for a in 0..3 {
            let s: Vec<f64> = (0..n).map(|i| self.grad_beta_plus[a][i] * z[i]).collect();
            for (x, v) in acc.iter_mut().zip(fd::apply_adjoint(&self.grid, &s, &self.ring2, &D1, a)) {
                *x += v;
            }
        }
        self.nodes.iter().map(|&node| acc[node]).collect()
    }
}

fn mask_in_place(v: &mut [f64], mask: &[bool]) {
    for (x, &m) in v.iter_mut().zip(mask) {
        if !m {
            *x = 0.0;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { rel_tol: 1e-8, max_iter: 20000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaSolve {
    pub beta_minus: ScalarField,
    pub solve: CglsResult,
    /// `‖L u − rhs‖ / ‖rhs‖` over the equations, or the absolute value when
    /// `rhs = 0`.
    pub residual: f64,
}

/// `argmin ‖L u − rhs‖²` over clamped `u`, by CGLS. Equations at nodes
/// where `rhs` is invalid are dropped from the operator mask beforehand.
pub fn solve_beta_minus(op: &T4Operator, rhs: &ScalarField, opts: &SolveOptions) -> Result<BetaSolve, ReconstructError> {
    if rhs.grid != op.grid {
        return Err(ReconstructError::GridMismatch);
    }
    let b: Vec<f64> = op.nodes.iter().map(|&n| if rhs.mask[n] { rhs.data[n] } else { 0.0 }).collect();
    let solve = cgls(op, &b, &CglsOptions { damping: 0.0, rel_tol: opts.rel_tol, abs_tol: 0.0, max_iter: opts.max_iter });
    let lu = op.apply(&solve.x);
    let r: Vec<f64> = lu.iter().zip(&b).map(|(x, y)| x - y).collect();
    let bn = libm::sqrt(dot(&b, &b));
    let rn = libm::sqrt(dot(&r, &r));
    let residual = if bn > 0.0 { rn / bn } else { rn };
    Ok(BetaSolve { beta_minus: op.to_field(&solve.x), solve, residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub inversion: InversionOptions,
    pub projection: ProjectionOptions,
    pub solve: SolveOptions,
    /// `‖β⁻‖_{L²}` at or below this certifies `ρ₁ = ρ₂`.
    pub eta_zero: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            // tight enough that the stopping iteration does not move with the
            // data amplitude; β⁻ then scales with the data to ~1e-10
            inversion: InversionOptions { rel_tol: 1e-10, ..InversionOptions::default() },
            projection: ProjectionOptions { rel_tol: 1e-10, max_iter: 20000 },
            solve: SolveOptions::default(),
            eta_zero: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub beta_minus: ScalarField,
    pub l2_norm: f64,
    pub linf_norm: f64,
    pub pde_residual: f64,
    /// Degenerate nodes over all candidate nodes.
    pub degenerate_fraction: f64,
    pub degenerate_nodes: usize,
    pub eps_deg: f64,
    pub pass: bool,
    pub eta_zero: f64,
    pub inversion_iterations: usize,
    pub inversion_converged: bool,
    pub reg: f64,
    pub projection_iterations: usize,
    pub solve_iterations: usize,
    pub solve_converged: bool,
    /// `‖Δ(∇β⁻·∇β⁻)‖_{L²}`, the term dropped by linearizing `β⁺` at `2 log ρ₂`.
    pub linearization_remainder: f64,
}

/// Data-side source: `−Σ_{ij} W_{iijj}(f) / (2ω′c_p²)` of a gauge-fixed tensor.
pub fn t4_rhs(model: &MediumModel, f: &SymTensor2Field) -> Result<ScalarField, ReconstructError> {
    let w = saint_venant(f).map_err(stage("saint-venant", StageError::Tensor))?;
    let mut c = contraction(&w);
    for i in 0..c.grid.len() {
        if c.mask[i] {
            let x = c.grid.point_at(i);
            let cp = model.speed(x, Mode::P)?;
            let cs = model.speed(x, Mode::S)?;
            c.data[i] = -c.data[i] / (2.0 * omega_quartic(cp, cs) * cp * cp);
        }
    }
    Ok(c)
}

/// Invert ray data for the difference tensor, remove the potential part,
/// take the fourth-order density source and solve for `β⁻ = log(ρ₁/ρ₂)`
/// with `β⁺` frozen at `2 log ρ₂`.
pub fn certify_uniqueness(
    model: &MediumModel,
    region: &LensRegion,
    rho2: &ScalarField,
    op: &TransformOperator,
    data: &[f64],
    opts: &CertifyOptions,
) -> Result<Certificate, ReconstructError> {
    let grid = op.grid;
    if rho2.grid != grid {
        return Err(ReconstructError::GridMismatch);
    }
    // Solve for unit-norm data and rescale, so the iteration counts (and the
    // result) do not depend on the data amplitude.
    let amplitude = libm::sqrt(dot(data, data));
    let unit: Vec<f64> = if amplitude > 0.0 { data.iter().map(|v| v / amplitude).collect() } else { data.to_vec() };
    let inv = invert_transform(op, &unit, &opts.inversion).map_err(stage("invert", StageError::Xray))?;
    let proj = solenoidal_project(model, &inv.estimate, Some(region), &opts.projection)
        .map_err(stage("solenoidal-project", StageError::Xray))?;
    let rhs = t4_rhs(model, &proj.solenoidal)?;

    let mut beta_plus = ScalarField::zeros(grid);
    for i in 0..grid.len() {
        let r = rho2.data[i];
        if !(r > 0.0) {
            return Err(ReconstructError::NonPositiveDensity { at: grid.point_at(i).0 });
        }
        beta_plus.data[i] = 2.0 * libm::log(r);
    }
    let t4 = assemble_t4_operator(model, &beta_plus, Some(region), Some(&rhs.mask))
        .map_err(|e| ReconstructError::Stage { stage: "t4-assemble", error: StageError::Reconstruct(alloc::boxed::Box::new(e)) })?;
    let sol = solve_beta_minus(&t4, &rhs, &opts.solve)
        .map_err(|e| ReconstructError::Stage { stage: "t4-solve", error: StageError::Reconstruct(alloc::boxed::Box::new(e)) })?;

    let (solve_iterations, solve_converged) = (sol.solve.iterations(), sol.solve.converged);
    let mut beta_minus = sol.beta_minus;
    for v in beta_minus.data.iter_mut() {
        *v *= amplitude;
    }
    let u = &beta_minus;
    let l2 = u.l2_norm();
    let linf = u.max_abs();
    let candidates = t4.mask.iter().zip(&t4.degenerate).filter(|(m, d)| **m || **d).count();
    let degenerate_nodes = t4.degenerate.iter().filter(|d| **d).count();
    let remainder = {
        let m = Masked::full(u.data.clone());
        let g = fd::gradient(&grid, &m);
        let sq = g[0].map2(&g[0], |a, b| a * b).map2(&g[1].map2(&g[1], |a, b| a * b), |a, b| a + b);
        let sq = sq.map2(&g[2].map2(&g[2], |a, b| a * b), |a, b| a + b);
        let l = fd::laplacian(&grid, &sq);
        let h = grid.spacing;
        let mut acc = 0.0;
        for i in 0..grid.len() {
            if l.mask[i] && t4.mask[i] {
                acc += l.values[i] * l.values[i];
            }
        }
        libm::sqrt(acc * h * h * h)
    };
    Ok(Certificate {
        beta_minus: beta_minus.clone(),
        l2_norm: l2,
        linf_norm: linf,
        pde_residual: sol.residual,
        degenerate_fraction: if candidates > 0 { degenerate_nodes as f64 / candidates as f64 } else { 0.0 },
        degenerate_nodes,
        eps_deg: t4.eps_deg,
        pass: l2 <= opts.eta_zero,
        eta_zero: opts.eta_zero,
        inversion_iterations: inv.solve.iterations(),
        inversion_converged: inv.solve.converged,
        reg: inv.reg,
        projection_iterations: proj.solve.iterations(),
        solve_iterations,
        solve_converged,
        linearization_remainder: remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sqrt3_model() -> MediumModel {
        // c_p² = 3, c_s = 1
        MediumModel::new("c", "1", "1", "1").unwrap()
    }

    fn unit_gamma_model() -> MediumModel {
        // c_s → 0 gives γ = 1; take c_p = 1, c_s = 0.01
        MediumModel::new("u", "0.9998", "0.0001", "1").unwrap()
    }

    fn grid(n: usize) -> Grid3 {
        Grid3::cube(-1.0, 1.0, n)
    }

    #[test]
    fn gamma_is_minus_one_for_sqrt3() {
        let g = grid(11);
        let op = assemble_t4_operator(&sqrt3_model(), &ScalarField::zeros(g), None, None).unwrap();
        assert!(op.gamma.iter().all(|v| (v + 1.0).abs() < 1e-14));
        assert_eq!(op.unknowns(), 3 * 3 * 3);
    }

    #[test]
    fn biharmonic_of_quartic() {
        let g = grid(13);
        let m = unit_gamma_model();
        let op = assemble_t4_operator(&m, &ScalarField::zeros(g), None, None).unwrap();
        let gam = op.gamma[0];
        let u = ScalarField::from_fn(g, |x| x[0].powi(4));
        let lu = op.apply_field(&u);
        let mut seen = 0;
        for i in 0..g.len() {
            if lu.mask[i] {
                seen += 1;
                assert!((lu.data[i] - 24.0 * gam).abs() < 1e-8, "{}", lu.data[i]);
            }
        }
        assert!(seen > 0 && (gam - 1.0).abs() < 1e-3);
        let zero = op.apply_field(&ScalarField::zeros(g));
        assert!(zero.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn restricted_matches_field_form() {
        let g = grid(15);
        let bp = ScalarField::from_fn(g, |x| 0.3 * libm::sin(x[0]) + 0.2 * x[1] * x[2]);
        let op = assemble_t4_operator(&sqrt3_model(), &bp, None, None).unwrap();
        let u: Vec<f64> = (0..op.unknowns()).map(|k| libm::cos(k as f64 * 0.7)).collect();
        let lu = op.apply(&u);
        let full = op.to_field(&u);
        let field = op.apply_field(&ScalarField { mask: vec![true; g.len()], ..full });
        for (k, &n) in op.nodes.iter().enumerate() {
            assert!((lu[k] - field.data[n]).abs() < 1e-9 * (1.0 + lu[k].abs()));
        }
    }

    #[test]
    fn degenerate_band_is_masked() {
        // λ → 2μ for x ≪ 0, so c_p → 2c_s there
        let g = grid(15);
        let m = MediumModel::new("d", "2 + 0.5*tanh(20*x) + 0.5", "1", "1").unwrap();
        let op = assemble_t4_operator(&m, &ScalarField::zeros(g), None, None).unwrap();
        let deg = op.degenerate.iter().filter(|d| **d).count();
        assert!(deg > 0);
        for i in 0..g.len() {
            if op.degenerate[i] {
                assert!(!op.mask[i]);
                assert!(g.point_at(i)[0] < 0.0);
            }
        }
    }

    #[test]
    fn field_form_is_fourth_order() {
        // u = sin x sin y sin z, β⁺ = b·x: Δ²u = 9u and Δ(b·∇u) = −3 b·∇u
        let bv = [0.3, -0.2, 0.5];
        let errs: Vec<f64> = [13usize, 25]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let bp = ScalarField::from_fn(g, |x| bv[0] * x[0] + bv[1] * x[1] + bv[2] * x[2]);
                let op = assemble_t4_operator(&sqrt3_model(), &bp, None, None).unwrap();
                let u = ScalarField::from_fn(g, |x| libm::sin(x[0]) * libm::sin(x[1]) * libm::sin(x[2]));
                let lu = op.apply_field(&u);
                let mut e: f64 = 0.0;
                for i in 0..g.len() {
                    let x = g.point_at(i);
                    // common node set of both grids
                    if lu.mask[i] && (0..3).all(|a| x[a].abs() <= 1.0 / 3.0 + 1e-12) {
                        let (s, c) = ([0, 1, 2].map(|a| libm::sin(x[a])), [0, 1, 2].map(|a| libm::cos(x[a])));
                        let grad = [c[0] * s[1] * s[2], s[0] * c[1] * s[2], s[0] * s[1] * c[2]];
                        let bgu = bv[0] * grad[0] + bv[1] * grad[1] + bv[2] * grad[2];
                        let want = 9.0 * op.gamma[i] * s[0] * s[1] * s[2] + 3.0 * bgu;
                        e = e.max((lu.data[i] - want).abs());
                    }
                }
                e
            })
            .collect();
        // halving h twice over: fourth order gives a factor near 16
        assert!(errs[0] < 1e-2 && errs[1] < errs[0] / 10.0, "{errs:?}");
    }

    #[test]
    fn manufactured_solution_converges() {
        // u* = f(x)f(y)f(z), f(t) = (1/4 − t²)⁴ on |t| < 1/2, vanishing to third
        // order on the clamped box; β⁺ = b·x so
        // L u* = γΔ²u* − b·∇Δu*
        let bv = [0.4, -0.3, 0.2];
        let f = |t: f64, k: usize| {
            let q = 0.25 - t * t;
            if q <= 0.0 {
                return 0.0;
            }
            match k {
                0 => q.powi(4),
                1 => -8.0 * t * q.powi(3),
                2 => -8.0 * q.powi(3) + 48.0 * t * t * q * q,
                3 => 144.0 * t * q * q - 192.0 * t.powi(3) * q,
                _ => 144.0 * q * q - 1152.0 * t * t * q + 384.0 * t.powi(4),
            }
        };
        let prod = |x: crate::tensor::Vec3, k: [usize; 3]| f(x[0], k[0]) * f(x[1], k[1]) * f(x[2], k[2]);
        let lap = |x, d: [usize; 3]| {
            (0..3)
                .map(|a| {
                    let mut k = d;
                    k[a] += 2;
                    prod(x, k)
                })
                .sum::<f64>()
        };
        let errs: Vec<f64> = [8usize, 12]
            .iter()
            .map(|&m| {
                let h = 1.0 / m as f64;
                let g = Grid3::new([-0.5 - 4.0 * h; 3], h, [m + 9; 3]).unwrap();
                let bp = ScalarField::from_fn(g, |x| bv[0] * x[0] + bv[1] * x[1] + bv[2] * x[2]);
                let op = assemble_t4_operator(&sqrt3_model(), &bp, None, None).unwrap();
                let gam = op.gamma[0];
                let rhs = ScalarField::from_fn(g, |x| {
                    let bilap = (0..3).map(|a| {
                        let mut k = [0; 3];
                        k[a] = 2;
                        lap(x, k)
                    });
                    let bilap: f64 = bilap.sum();
                    let grad_lap: f64 = (0..3)
                        .map(|a| {
                            let mut k = [0; 3];
                            k[a] = 1;
                            bv[a] * lap(x, k)
                        })
                        .sum();
                    gam * bilap - grad_lap
                });
                let sol = solve_beta_minus(&op, &rhs, &SolveOptions::default()).unwrap();
                assert!(sol.solve.converged);
                let us = ScalarField::from_fn(g, |x| prod(x, [0; 3]));
                let d = ScalarField { data: sol.beta_minus.data.iter().zip(&us.data).map(|(a, b)| a - b).collect(), ..us.clone() };
                d.l2_norm() / us.l2_norm()
            })
            .collect();
        let order = libm::log(errs[0] / errs[1]) / libm::log(1.5);
        assert!(errs[1] < errs[0] && order >= 1.8, "{errs:?} order {order}");
    }

    #[test]
    fn recovers_discrete_solution() {
        let g = grid(17);
        let bp = ScalarField::from_fn(g, |x| 0.1 * x[0] + 0.05 * x[2] * x[2]);
        let op = assemble_t4_operator(&sqrt3_model(), &bp, None, None).unwrap();
        let us = ScalarField::from_fn(g, |x| {
            let mut p = 1.0;
            for a in 0..3 {
                let t = (0.25 - x[a] * x[a]).max(0.0);
                p *= t * t;
            }
            p
        });
        let rhs = op.apply_field(&us);
        let sol = solve_beta_minus(&op, &rhs, &SolveOptions { rel_tol: 1e-12, max_iter: 50000 }).unwrap();
        assert!(sol.solve.converged && sol.residual < 1e-8, "{}", sol.residual);
        let mut e = 0.0;
        let mut s = 0.0;
        for i in 0..g.len() {
            if op.mask[i] {
                e += (sol.beta_minus.data[i] - us.data[i]).powi(2);
                s += us.data[i].powi(2);
            }
        }
        assert!(libm::sqrt(e / s) < 1e-6, "{}", libm::sqrt(e / s));
    }

    #[test]
    fn zero_rhs_zero_solution_and_scaling() {
        let g = grid(13);
        let op = assemble_t4_operator(&sqrt3_model(), &ScalarField::zeros(g), None, None).unwrap();
        let z = solve_beta_minus(&op, &ScalarField::zeros(g), &SolveOptions::default()).unwrap();
        assert!(z.beta_minus.data.iter().all(|v| *v == 0.0));
        let rhs = ScalarField::from_fn(g, |x| libm::exp(-4.0 * x.dot(x)));
        let a = solve_beta_minus(&op, &rhs, &SolveOptions { rel_tol: 1e-13, max_iter: 20000 }).unwrap();
        let b = solve_beta_minus(&op, &rhs.clone_scaled(2.0), &SolveOptions { rel_tol: 1e-13, max_iter: 20000 }).unwrap();
        for i in 0..g.len() {
            assert!((b.beta_minus.data[i] - 2.0 * a.beta_minus.data[i]).abs() <= 1e-10 * (1.0 + a.beta_minus.data[i].abs()));
        }
    }

    trait Scale {
        fn clone_scaled(&self, a: f64) -> Self;
    }

    impl Scale for ScalarField {
        fn clone_scaled(&self, a: f64) -> Self {
            ScalarField { data: self.data.iter().map(|v| v * a).collect(), ..self.clone() }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn linear_and_adjoint(seed in 0u64..10000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let g = grid(13);
            let s = seed as f64 * 1e-3;
            let bp = ScalarField::from_fn(g, |x| libm::sin(x[0] + s) * 0.4 + x[2] * s);
            let op = assemble_t4_operator(&sqrt3_model(), &bp, None, None).unwrap();
            let n = op.unknowns();
            let u: Vec<f64> = (0..n).map(|k| libm::sin(k as f64 * 1.3 + s)).collect();
            let v: Vec<f64> = (0..n).map(|k| libm::cos(k as f64 * 0.4 - s)).collect();
            let y: Vec<f64> = (0..n).map(|k| libm::sin(k as f64 * 0.9 + 2.0 * s)).collect();
            let comb: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
            let (lc, lu, lv) = (op.apply(&comb), op.apply(&u), op.apply(&v));
            for k in 0..n {
                let want = a * lu[k] + b * lv[k];
                prop_assert!((lc[k] - want).abs() <= 1e-12 * (1.0 + want.abs()) * 1e3);
            }
            let lhs = dot(&lu, &y);
            let rhs = dot(&u, &op.apply_adjoint(&y));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }

        #[test]
        fn biharmonic_form_is_positive(seed in 0u64..10000) {
            let g = grid(13);
            let op = assemble_t4_operator(&unit_gamma_model(), &ScalarField::zeros(g), None, None).unwrap();
            let u: Vec<f64> = (0..op.unknowns()).map(|k| libm::sin(k as f64 * 0.37 + seed as f64)).collect();
            prop_assert!(dot(&u, &op.apply(&u)) >= 0.0);
        }
    }
}
