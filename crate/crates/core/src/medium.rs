//! Isotropic elastic media given by closed-form Lamé parameters and density.

use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::{Expr, ParseError, SmoothField};
use crate::grid::Grid3;
use crate::region::LensRegion;
use crate::tensor::{Sym3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    P,
    S,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::P => "p",
            Mode::S => "s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MediumError {
    Parse { field: &'static str, error: ParseError },
    NonFinite { field: &'static str, at: [f64; 3] },
    NonPositiveDensity { value: f64, at: [f64; 3] },
    NonPositiveShear { value: f64, at: [f64; 3] },
    /// `λ + 2μ ≤ 0`: no real p-wave speed.
    NonPositiveModulus { value: f64, at: [f64; 3] },
}

impl core::fmt::Display for MediumError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let p = |at: &[f64; 3]| alloc::format!("({}, {}, {})", at[0], at[1], at[2]);
        match self {
            MediumError::Parse { field, error } => write!(f, "model.{field}: {error}"),
            MediumError::NonFinite { field, at } => write!(f, "{field} is not finite at {}", p(at)),
            MediumError::NonPositiveDensity { value, at } => write!(f, "density {value} <= 0 at {}", p(at)),
            MediumError::NonPositiveShear { value, at } => write!(f, "shear modulus {value} <= 0 at {}", p(at)),
            MediumError::NonPositiveModulus { value, at } => write!(f, "lambda + 2 mu = {value} <= 0 at {}", p(at)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MediumModel {
    pub name: String,
    pub lambda_src: String,
    pub mu_src: String,
    pub rho_src: String,
    pub lambda: SmoothField,
    pub mu: SmoothField,
    pub rho: SmoothField,
}

/// Point values of a medium with first derivatives of the speeds and
/// second derivatives of `log ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MediumPoint {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
    pub cp: f64,
    pub cs: f64,
    pub grad_log_cp: Vec3,
    pub grad_log_cs: Vec3,
    pub grad_log_rho: Vec3,
    pub grad_cp: Vec3,
    pub grad_cs2: Vec3,
    pub hess_log_rho: Sym3,
}

impl MediumPoint {
    pub fn speed(&self, mode: Mode) -> f64 {
        match mode {
            Mode::P => self.cp,
            Mode::S => self.cs,
        }
    }

    pub fn grad_log_speed(&self, mode: Mode) -> Vec3 {
        match mode {
            Mode::P => self.grad_log_cp,
            Mode::S => self.grad_log_cs,
        }
    }
}

impl MediumModel {
    pub fn new(name: &str, lambda: &str, mu: &str, rho: &str) -> Result<Self, MediumError> {
        let parse = |field: &'static str, src: &str| {
            Expr::parse(src).map(SmoothField::new).map_err(|error| MediumError::Parse { field, error })
        };
        Ok(MediumModel {
            name: name.into(),
            lambda_src: lambda.into(),
            mu_src: mu.into(),
            rho_src: rho.into(),
            lambda: parse("lambda", lambda)?,
            mu: parse("mu", mu)?,
            rho: parse("rho", rho)?,
        })
    }

    /// Raw `(λ, μ, ρ)` with no domain checks.
    pub fn lame(&self, x: Vec3) -> (f64, f64, f64) {
        (self.lambda.value(x.0), self.mu.value(x.0), self.rho.value(x.0))
    }

    fn checked(&self, x: Vec3) -> Result<(f64, f64, f64), MediumError> {
        let (l, m, r) = self.lame(x);
        for (field, v) in [("lambda", l), ("mu", m), ("rho", r)] {
            if !v.is_finite() {
                return Err(MediumError::NonFinite { field, at: x.0 });
            }
        }
        if r <= 0.0 {
            return Err(MediumError::NonPositiveDensity { value: r, at: x.0 });
        }
        if m <= 0.0 {
            return Err(MediumError::NonPositiveShear { value: m, at: x.0 });
        }
        if l + 2.0 * m <= 0.0 {
            return Err(MediumError::NonPositiveModulus { value: l + 2.0 * m, at: x.0 });
        }
        Ok((l, m, r))
    }

    /// Speed and `∇ log c` for one mode: the hot path of the ray integrator.
    pub fn speed_and_log_grad(&self, x: Vec3, mode: Mode) -> Result<(f64, Vec3), MediumError> {
        self.checked(x)?;
        let (l, gl) = self.lambda.value_grad(x.0);
        let (m, gm) = self.mu.value_grad(x.0);
        let (r, gr) = self.rho.value_grad(x.0);
        let (num, gnum) = match mode {
            Mode::P => (l + 2.0 * m, [0, 1, 2].map(|a| gl[a] + 2.0 * gm[a])),
            Mode::S => (m, gm),
        };
        let c = crate::math::sqrt(num / r);
        // ∇ log c = ½ (∇num/num − ∇ρ/ρ)
        let g = Vec3([0, 1, 2].map(|a| 0.5 * (gnum[a] / num - gr[a] / r)));
        if !(c.is_finite() && g.is_finite()) {
            return Err(MediumError::NonFinite { field: "speed", at: x.0 });
        }
        Ok((c, g))
    }

    pub fn speed(&self, x: Vec3, mode: Mode) -> Result<f64, MediumError> {
        let (l, m, r) = self.checked(x)?;
        Ok(match mode {
            Mode::P => crate::math::sqrt((l + 2.0 * m) / r),
            Mode::S => crate::math::sqrt(m / r),
        })
    }

    pub fn eval(&self, x: Vec3) -> Result<MediumPoint, MediumError> {
        self.checked(x)?;
        let jl = self.lambda.jet(x.0);
        let (m, gm) = self.mu.value_grad(x.0);
        let jr = self.rho.jet(x.0);
        let (l, r) = (jl.value, jr.value);
        let gl = Vec3(jl.grad);
        let gm = Vec3(gm);
        let gr = Vec3(jr.grad);

        let cp2 = (l + 2.0 * m) / r;
        let cs2 = m / r;
        let cp = crate::math::sqrt(cp2);
        let cs = crate::math::sqrt(cs2);
        let grad_cp2 = (gl + gm * 2.0) * (1.0 / r) - gr * ((l + 2.0 * m) / (r * r));
        let grad_cs2 = gm * (1.0 / r) - gr * (m / (r * r));
        let grad_log_rho = gr * (1.0 / r);
        // H log ρ = Hρ/ρ − ∇ρ⊗∇ρ/ρ²
        let hess_log_rho = Sym3(jr.hess) * (1.0 / r) - Sym3::outer_self(grad_log_rho);

        let pt = MediumPoint {
            lambda: l,
            mu: m,
            rho: r,
            cp,
            cs,
            grad_log_cp: grad_cp2 * (0.5 / cp2),
            grad_log_cs: grad_cs2 * (0.5 / cs2),
            grad_log_rho,
            grad_cp: grad_cp2 * (0.5 / cp),
            grad_cs2,
            hess_log_rho,
        };
        let finite = [pt.cp, pt.cs].iter().all(|v| v.is_finite())
            && [pt.grad_log_cp, pt.grad_log_cs, pt.grad_log_rho, pt.grad_cp, pt.grad_cs2]
                .iter()
                .all(|v| v.is_finite())
            && pt.hess_log_rho.0.iter().all(|v| v.is_finite());
        if !finite {
            return Err(MediumError::NonFinite { field: "derived quantity", at: x.0 });
        }
        Ok(pt)
    }
}

pub mod flags {
    pub const RHO_POSITIVE: u8 = 1;
    pub const MU_POSITIVE: u8 = 1 << 1;
    pub const LAMBDA_MU_POSITIVE: u8 = 1 << 2;
    pub const STRONG_CONVEX: u8 = 1 << 3;
    pub const DEGENERATE: u8 = 1 << 4;
    pub const IN_REGION: u8 = 1 << 5;
    pub const FINITE: u8 = 1 << 6;
    /// All conditions a node must satisfy to count as admissible.
    pub const ADMISSIBLE: u8 = RHO_POSITIVE | MU_POSITIVE | LAMBDA_MU_POSITIVE | STRONG_CONVEX | FINITE;
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    pub grid: Grid3,
    /// Bit set of [`flags`] per node.
    pub flags: Vec<u8>,
    pub eps_deg: f64,
    pub max_cs: f64,
    pub nodes_in_region: usize,
    pub failing_nodes: usize,
    pub degenerate_nodes: usize,
    /// Largest relative violation of `c_p² − c_s² = (λ+μ)/ρ` over admissible nodes.
    pub consistency_error: f64,
    pub pass: bool,
}

impl AdmissibilityReport {
    pub fn degenerate_mask(&self) -> Vec<bool> {
        self.flags.iter().map(|f| f & flags::DEGENERATE != 0).collect()
    }

    pub fn count(&self, flag: u8) -> usize {
        self.flags.iter().filter(|f| *f & flag != 0).count()
    }
}

/// Evaluate the admissibility conditions on every grid node. Aggregate
/// pass/fail is taken over nodes inside the region.
pub fn admissibility_report(model: &MediumModel, region: &LensRegion, grid: &Grid3) -> AdmissibilityReport {
    let n = grid.len();
    let mut fl = alloc::vec![0u8; n];
    let mut speeds = alloc::vec![(f64::NAN, f64::NAN); n];
    let mut max_cs: f64 = 0.0;
    let mut consistency_error: f64 = 0.0;
    for idx in 0..n {
        let p = grid.point_at(idx);
        let (l, m, r) = model.lame(p);
        let mut f = 0u8;
        if region.contains(p) {
            f |= flags::IN_REGION;
        }
        if l.is_finite() && m.is_finite() && r.is_finite() {
            f |= flags::FINITE;
        }
        if r > 0.0 {
            f |= flags::RHO_POSITIVE;
        }
        if m > 0.0 {
            f |= flags::MU_POSITIVE;
        }
        if l + m > 0.0 {
            f |= flags::LAMBDA_MU_POSITIVE;
        }
        if 3.0 * l + 2.0 * m > 0.0 {
            f |= flags::STRONG_CONVEX;
        }
        if f & flags::ADMISSIBLE == flags::ADMISSIBLE {
            let cp = crate::math::sqrt((l + 2.0 * m) / r);
            let cs = crate::math::sqrt(m / r);
            speeds[idx] = (cp, cs);
            max_cs = max_cs.max(cs);
            let lhs = cp * cp - cs * cs;
            let rhs = (l + m) / r;
            consistency_error = consistency_error.max((lhs - rhs).abs() / rhs.abs());
        }
        fl[idx] = f;
    }
    let eps_deg = 1e-3 * max_cs;
    let mut nodes_in_region = 0;
    let mut failing_nodes = 0;
    let mut degenerate_nodes = 0;
    for (f, &(cp, cs)) in fl.iter_mut().zip(&speeds) {
        if (cp - 2.0 * cs).abs() < eps_deg {
            *f |= flags::DEGENERATE;
            degenerate_nodes += 1;
        }
        if *f & flags::IN_REGION != 0 {
            nodes_in_region += 1;
            if *f & flags::ADMISSIBLE != flags::ADMISSIBLE {
                failing_nodes += 1;
            }
        }
    }
    AdmissibilityReport {
        grid: *grid,
        flags: fl,
        eps_deg,
        max_cs,
        nodes_in_region,
        failing_nodes,
        degenerate_nodes,
        consistency_error,
        pass: nodes_in_region > 0 && failing_nodes == 0,
    }
}
