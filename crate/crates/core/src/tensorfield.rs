//! Tensor calculus on the grid: the model-difference tensor `B`, the
//! symmetric covariant derivative `d_g` for `g = c_p⁻² dx²`, the Saint-Venant
//! operator `W` and the fourth-order density identity.

use alloc::vec;
use alloc::vec::Vec;

use crate::fd::{self, Masked};
use crate::field::{pair_pair_index, OneFormField, ScalarField, SymTensor2Field, SymTensor4Field};
use crate::grid::Grid3;
use crate::medium::{MediumError, MediumModel, MediumPoint};
use crate::tensor::{sym_index, Sym3, Vec3, SYM_PAIRS};

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    Medium(MediumError),
    SpeedMismatch { at: [f64; 3], cp: (f64, f64), cs: (f64, f64) },
    GridTooSmall { dims: [usize; 3], need: usize },
    NonPositiveDensity { at: [f64; 3] },
    GridMismatch,
}

impl From<MediumError> for TensorError {
    fn from(e: MediumError) -> Self {
        TensorError::Medium(e)
    }
}

impl core::fmt::Display for TensorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TensorError::Medium(e) => write!(f, "{e}"),
            TensorError::SpeedMismatch { at, cp, cs } => write!(
                f,
                "models disagree on speeds at ({}, {}, {}): c_p {} vs {}, c_s {} vs {}",
                at[0], at[1], at[2], cp.0, cp.1, cs.0, cs.1
            ),
            TensorError::GridTooSmall { dims, need } => {
                write!(f, "grid {}x{}x{} too small, need at least {need} nodes per axis", dims[0], dims[1], dims[2])
            }
            TensorError::NonPositiveDensity { at } => {
                write!(f, "density not positive at ({}, {}, {})", at[0], at[1], at[2])
            }
            TensorError::GridMismatch => write!(f, "fields live on different grids"),
        }
    }
}

fn require_dims(grid: &Grid3, need: usize) -> Result<(), TensorError> {
    if grid.dims.iter().any(|&d| d < need) {
        return Err(TensorError::GridTooSmall { dims: grid.dims, need });
    }
    Ok(())
}

/// `κ = 4c_s²(c_p² − 2c_s²) / (c_p(c_p² − c_s²))`.
pub fn kappa(cp: f64, cs: f64) -> f64 {
    let (p2, s2) = (cp * cp, cs * cs);
    4.0 * s2 * (p2 - 2.0 * s2) / (cp * (p2 - s2))
}

/// `ω = (c_p² − 4c_s²)/c_p + 4c_s⁴/(c_p(c_p² − c_s²))`, which equals
/// `(c_p⁴ − 5c_p²c_s² + 8c_s⁴)/(c_p(c_p² − c_s²))`.
pub fn omega(cp: f64, cs: f64) -> f64 {
    let (p2, s2) = (cp * cp, cs * cs);
    (p2 - 4.0 * s2) / cp + 4.0 * s2 * s2 / (cp * (p2 - s2))
}

/// `(c_p⁴ − 5c_p²c_s² + 8c_s⁴)/(c_p(c_p² − c_s²))`.
pub fn omega_quartic(cp: f64, cs: f64) -> f64 {
    let (p2, s2) = (cp * cp, cs * cs);
    (p2 * p2 - 5.0 * p2 * s2 + 8.0 * s2 * s2) / (cp * (p2 - s2))
}

/// `γ = (c_p² − c_s²)(c_p² − 4c_s²)/(c_p⁴ − 5c_p²c_s² + 8c_s⁴)`.
pub fn gamma_coefficient(cp: f64, cs: f64) -> f64 {
    let (p2, s2) = (cp * cp, cs * cs);
    (p2 - s2) * (p2 - 4.0 * s2) / (p2 * p2 - 5.0 * p2 * s2 + 8.0 * s2 * s2)
}

/// Per-node coefficient fields of the difference tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct BCoefficients {
    pub grid: Grid3,
    pub cp: Vec<f64>,
    pub cs: Vec<f64>,
    pub kappa: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
    pub v: Vec<Vec3>,
    /// `β_j = ½ log ρ_j`.
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub grad_beta1: Vec<Vec3>,
    pub grad_beta2: Vec<Vec3>,
}

struct NodeB {
    b: Sym3,
    cp: f64,
    cs: f64,
    kappa: f64,
    omega: f64,
    alpha: f64,
    v: Vec3,
    beta: (f64, f64),
    grad_beta: (Vec3, Vec3),
}

/// `Δ_g f = c² Δf − c ∇c·∇f` for `g = c⁻² dx²` in three dimensions.
#[inline]
pub fn laplace_g(cp: f64, grad_cp: Vec3, lap_f: f64, grad_f: Vec3) -> f64 {
    cp * cp * lap_f - cp * grad_cp.dot(grad_f)
}

fn node_b(x: Vec3, p1: &MediumPoint, p2: &MediumPoint) -> Result<NodeB, TensorError> {
    let tol = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0);
    if !(tol(p1.cp, p2.cp) && tol(p1.cs, p2.cs)) {
        return Err(TensorError::SpeedMismatch { at: x.0, cp: (p1.cp, p2.cp), cs: (p1.cs, p2.cs) });
    }
    // Symmetric averages keep B(m1, m2) = -B(m2, m1) bit for bit.
    let cp = 0.5 * (p1.cp + p2.cp);
    let cs = 0.5 * (p1.cs + p2.cs);
    let grad_cp = (p1.grad_cp + p2.grad_cp) * 0.5;
    let grad_cs2 = (p1.grad_cs2 + p2.grad_cs2) * 0.5;
    let (p2c, s2c) = (cp * cp, cs * cs);

    let k = kappa(cp, cs);
    let w = omega(cp, cs);
    let v = grad_cp * 2.0 - grad_cs2 * (8.0 * s2c / (cp * (p2c - s2c)));

    let g1 = p1.grad_log_rho * 0.5;
    let g2 = p2.grad_log_rho * 0.5;
    let gd = g1 - g2;
    let hd = (p1.hess_log_rho - p2.hess_log_rho) * 0.5;

    // log(ρ1/ρ2) pieces
    let lap_lr = p1.hess_log_rho.trace() - p2.hess_log_rho.trace();
    let grad_lr = p1.grad_log_rho - p2.grad_log_rho;
    let sq = p1.grad_log_rho.dot(p1.grad_log_rho) - p2.grad_log_rho.dot(p2.grad_log_rho);
    let alpha = (p2c - 4.0 * s2c) / (2.0 * cp) * laplace_g(cp, grad_cp, lap_lr, grad_lr) - 0.25 * w * sq;

    let b = (Sym3::outer_self(g1) - Sym3::outer_self(g2)) * k - Sym3::IDENTITY * (alpha - gd.dot(v))
        + Sym3::sym_product(gd, v + grad_cp * 2.0)
        + hd * (2.0 * (p2c - s2c));
    Ok(NodeB {
        b,
        cp,
        cs,
        kappa: k,
        omega: w,
        alpha,
        v,
        beta: (0.5 * crate::math::ln(p1.rho), 0.5 * crate::math::ln(p2.rho)),
        grad_beta: (g1, g2),
    })
}

/// Assemble `B` pointwise from symbolic medium derivatives.
pub fn build_difference_tensor(
    m1: &MediumModel,
    m2: &MediumModel,
    grid: &Grid3,
) -> Result<(SymTensor2Field, BCoefficients), TensorError> {
    let nodes = crate::par::map_range(grid.len(), |i| {
        let x = grid.point_at(i);
        let p1 = m1.eval(x)?;
        let p2 = m2.eval(x)?;
        node_b(x, &p1, &p2)
    });
    let n = grid.len();
    let mut b = SymTensor2Field::zeros(*grid);
    let mut c = BCoefficients {
        grid: *grid,
        cp: vec![0.0; n],
        cs: vec![0.0; n],
        kappa: vec![0.0; n],
        omega: vec![0.0; n],
        alpha: vec![0.0; n],
        v: vec![Vec3::ZERO; n],
        beta1: vec![0.0; n],
        beta2: vec![0.0; n],
        grad_beta1: vec![Vec3::ZERO; n],
        grad_beta2: vec![Vec3::ZERO; n],
    };
    for (i, node) in nodes.into_iter().enumerate() {
        let node = node?;
        b.data[i] = node.b;
        c.cp[i] = node.cp;
        c.cs[i] = node.cs;
        c.kappa[i] = node.kappa;
        c.omega[i] = node.omega;
        c.alpha[i] = node.alpha;
        c.v[i] = node.v;
        c.beta1[i] = node.beta.0;
        c.beta2[i] = node.beta.1;
        c.grad_beta1[i] = node.grad_beta.0;
        c.grad_beta2[i] = node.grad_beta.1;
    }
    Ok((b, c))
}

/// The `κ[∇β₁⊗∇β₁ − ∇β₂⊗∇β₂]` part of `B`: first derivatives of the densities
/// only, so its Saint-Venant image carries no fourth derivatives.
pub fn kappa_term(c: &BCoefficients) -> SymTensor2Field {
    let data = (0..c.grid.len())
        .map(|i| (Sym3::outer_self(c.grad_beta1[i]) - Sym3::outer_self(c.grad_beta2[i])) * c.kappa[i])
        .collect::<Vec<_>>();
    SymTensor2Field { grid: c.grid, mask: vec![true; data.len()], data }
}

/// `(d_g v)_ij = ½(∂_i v_j + ∂_j v_i) − (v_i ∂_jψ + v_j ∂_iψ − δ_ij v·∇ψ)`,
/// `ψ = −log c_p`. Fourth-order differences where they fit, second-order one
/// node in from the boundary; the outer ring is masked.
pub fn sym_derivative_g(model: &MediumModel, v: &OneFormField) -> Result<SymTensor2Field, TensorError> {
    let grid = v.grid;
    require_dims(&grid, 5)?;
    let comps: [Masked; 3] =
        [0, 1, 2].map(|c| Masked::new(v.data.iter().map(|x| x[c]).collect(), v.mask.clone()));
    // dv[c][a] = ∂_a v_c
    let dv: [[Masked; 3]; 3] = [0, 1, 2].map(|c| [0, 1, 2].map(|a| fd::d1_adaptive(&grid, &comps[c], a)));
    let grad_psi = crate::par::map_range(grid.len(), |i| {
        model.speed_and_log_grad(grid.point_at(i), crate::medium::Mode::P).map(|(_, g)| -g)
    });
    let mut out = SymTensor2Field::zeros(grid);
    for i in 0..grid.len() {
        let ok = dv.iter().flatten().all(|m| m.mask[i]);
        out.mask[i] = ok;
        if !ok {
            continue;
        }
        let gp = grad_psi[i].clone()?;
        let vi = v.data[i];
        let vg = vi.dot(gp);
        let mut s = Sym3::ZERO;
        for (k, &(a, b)) in SYM_PAIRS.iter().enumerate() {
            let sym = 0.5 * (dv[b][a].values[i] + dv[a][b].values[i]);
            let chris = vi[a] * gp[b] + vi[b] * gp[a] - if a == b { vg } else { 0.0 };
            s.0[k] = sym - chris;
        }
        out.data[i] = s;
    }
    Ok(out)
}

/// All 36 second derivatives `∂_c∂_d B_ab`, indexed `[ab][cd]` in pair order.
fn second_derivatives(b: &SymTensor2Field) -> Vec<Vec<Masked>> {
    let grid = b.grid;
    (0..6)
        .map(|comp| {
            let f = Masked::new(b.data.iter().map(|s| s.0[comp]).collect(), b.mask.clone());
            SYM_PAIRS.iter().map(|&(c, d)| fd::d2(&grid, &f, c, d)).collect()
        })
        .collect()
}

/// `(WB)_{i₁i₂j₁j₂} = σ(i₁i₂)σ(j₁j₂)[∂_{j₁}∂_{j₂}B_{i₁i₂} − 2∂_{i₂}∂_{j₂}B_{i₁j₁} + ∂_{i₁}∂_{i₂}B_{j₁j₂}]`
/// with fourth-order second differences. Two-node ring masked.
pub fn saint_venant(b: &SymTensor2Field) -> Result<SymTensor4Field, TensorError> {
    let grid = b.grid;
    require_dims(&grid, 5)?;
    let dd = second_derivatives(b);
    let val = |ab: (usize, usize), cd: (usize, usize), i: usize| dd[sym_index(ab.0, ab.1)][sym_index(cd.0, cd.1)].values[i];
    let mask: Vec<bool> = (0..grid.len()).map(|i| dd.iter().flatten().all(|m| m.mask[i])).collect();
    let data = crate::par::map_range(grid.len(), |i| {
        let mut w = [0.0; 21];
        if !mask[i] {
            return w;
        }
        for p in 0..6 {
            let (i1, i2) = SYM_PAIRS[p];
            for q in p..6 {
                let (j1, j2) = SYM_PAIRS[q];
                let t1 = val((i1, i2), (j1, j2), i);
                let t3 = val((j1, j2), (i1, i2), i);
                let t2 = val((i1, j1), (i2, j2), i)
                    + val((i2, j1), (i1, j2), i)
                    + val((i1, j2), (i2, j1), i)
                    + val((i2, j2), (i1, j1), i);
                w[pair_pair_index(p, q)] = t1 + t3 - 0.5 * t2;
            }
        }
        w
    });
    Ok(SymTensor4Field { grid, data, mask })
}

/// `Σ_{i,j} W_{iijj}`.
pub fn contraction(w: &SymTensor4Field) -> ScalarField {
    let data = w
        .data
        .iter()
        .map(|e| {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    acc += e[pair_pair_index(i, j)];
                }
            }
            acc
        })
        .collect();
    ScalarField { grid: w.grid, data, mask: w.mask.clone() }
}

/// Contraction of `W(B − κ-term)`: the part of `Σ W_{iijj}(B)` that carries
/// fourth derivatives of the densities.
pub fn contraction_fourth_order_part(b: &SymTensor2Field, coeffs: &BCoefficients) -> Result<ScalarField, TensorError> {
    let reduced = b.sub(&kappa_term(coeffs));
    Ok(contraction(&saint_venant(&reduced)?))
}

fn log_density(rho: &ScalarField) -> Result<Masked, TensorError> {
    let mut out = Vec::with_capacity(rho.data.len());
    for (i, &r) in rho.data.iter().enumerate() {
        if rho.mask[i] && !(r > 0.0) {
            return Err(TensorError::NonPositiveDensity { at: rho.grid.point_at(i).0 });
        }
        out.push(if rho.mask[i] { crate::math::ln(r) } else { 0.0 });
    }
    Ok(Masked::new(out, rho.mask.clone()))
}

/// The scalar identity
/// `-2((c_p² − 4c_s²)/c_p) Δ²β⁻ + ((c_p⁴ − 5c_p²c_s² + 8c_s⁴)/(c_p(c_p² − c_s²))) Δ(∇β⁺·∇β⁻)`
/// with `β^± = log ρ₁ ± log ρ₂`, by composed fourth-order stencils.
pub fn t4_functional(model: &MediumModel, rho1: &ScalarField, rho2: &ScalarField) -> Result<ScalarField, TensorError> {
    let grid = rho1.grid;
    if rho2.grid != grid {
        return Err(TensorError::GridMismatch);
    }
    require_dims(&grid, 9)?;
    let l1 = log_density(rho1)?;
    let l2 = log_density(rho2)?;
    let minus = l1.map2(&l2, |a, b| a - b);
    let plus = l1.map2(&l2, |a, b| a + b);
    let bilap = fd::laplacian(&grid, &fd::laplacian(&grid, &minus));
    let gp = fd::gradient(&grid, &plus);
    let gm = fd::gradient(&grid, &minus);
    let mut dot = gp[0].map2(&gm[0], |a, b| a * b);
    for a in 1..3 {
        let term = gp[a].map2(&gm[a], |x, y| x * y);
        dot = dot.map2(&term, |x, y| x + y);
    }
    let lap_dot = fd::laplacian(&grid, &dot);
    let speeds = crate::par::map_range(grid.len(), |i| {
        let x = grid.point_at(i);
        Ok::<_, MediumError>((model.speed(x, crate::medium::Mode::P)?, model.speed(x, crate::medium::Mode::S)?))
    });
    let mut out = ScalarField::zeros(grid);
    for i in 0..grid.len() {
        let ok = bilap.mask[i] && lap_dot.mask[i];
        out.mask[i] = ok;
        if ok {
            let (cp, cs) = speeds[i].clone()?;
            out.data[i] = -2.0 * ((cp * cp - 4.0 * cs * cs) / cp) * bilap.values[i] + omega_quartic(cp, cs) * lap_dot.values[i];
        }
    }
    Ok(out)
}
