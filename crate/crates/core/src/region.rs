//! The lens `{x̃ ≥ -c, θ ≥ 0}` with its accessible boundary piece `S`
//! (`θ = 0`) and inner cap (`x̃ = -c`).

use alloc::string::String;

use crate::expr::{Expr, ParseError, SmoothField};
use crate::tensor::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PointClass {
    Exterior,
    Interior,
    BoundaryS,
    BoundaryCap,
}

impl PointClass {
    pub fn is_inside(self) -> bool {
        !matches!(self, PointClass::Exterior)
    }

    pub fn label(self) -> &'static str {
        match self {
            PointClass::Exterior => "exterior",
            PointClass::Interior => "interior",
            PointClass::BoundaryS => "boundary-S",
            PointClass::BoundaryCap => "boundary-cap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionError {
    Parse { field: &'static str, error: ParseError },
    CapLevel(f64),
    Tolerance(f64),
}

impl core::fmt::Display for RegionError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RegionError::Parse { field, error } => write!(f, "region.{field}: {error}"),
            RegionError::CapLevel(c) => write!(f, "region.cap_level must be positive, got {c}"),
            RegionError::Tolerance(t) => write!(f, "region.s_tolerance must be non-negative, got {t}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LensRegion {
    pub theta_src: String,
    pub xtilde_src: String,
    pub theta: SmoothField,
    pub xtilde: SmoothField,
    pub cap_level: f64,
    pub s_tolerance: f64,
}

impl LensRegion {
    pub fn new(theta: &str, xtilde: &str, cap_level: f64, s_tolerance: f64) -> Result<Self, RegionError> {
        let t = Expr::parse(theta).map_err(|error| RegionError::Parse { field: "theta", error })?;
        let x = Expr::parse(xtilde).map_err(|error| RegionError::Parse { field: "xtilde", error })?;
        if !(cap_level > 0.0 && cap_level.is_finite()) {
            return Err(RegionError::CapLevel(cap_level));
        }
        if !(s_tolerance >= 0.0 && s_tolerance.is_finite()) {
            return Err(RegionError::Tolerance(s_tolerance));
        }
        Ok(LensRegion {
            theta_src: theta.into(),
            xtilde_src: xtilde.into(),
            theta: SmoothField::new(t),
            xtilde: SmoothField::new(x),
            cap_level,
            s_tolerance,
        })
    }

    /// `min(θ, x̃ + c)`: non-negative exactly on the closed lens.
    #[inline]
    pub fn level(&self, p: Vec3) -> f64 {
        let t = self.theta.value(p.0);
        let x = self.xtilde.value(p.0) + self.cap_level;
        t.min(x)
    }

    #[inline]
    pub fn contains(&self, p: Vec3) -> bool {
        self.level(p) >= 0.0
    }

    pub fn classify(&self, p: Vec3) -> PointClass {
        self.classify_with(p, self.s_tolerance)
    }

    pub fn classify_with(&self, p: Vec3, tol: f64) -> PointClass {
        let t = self.theta.value(p.0);
        let x = self.xtilde.value(p.0) + self.cap_level;
        if !(t >= -tol && x >= -tol) {
            PointClass::Exterior
        } else if t <= tol {
            PointClass::BoundaryS
        } else if x <= tol {
            PointClass::BoundaryCap
        } else {
            PointClass::Interior
        }
    }

    /// Newton projection onto `θ = 0` along `∇θ`.
    pub fn project_to_s(&self, p: Vec3) -> Vec3 {
        let mut q = p;
        for _ in 0..50 {
            let (t, g) = self.theta.value_grad(q.0);
            let g = Vec3(g);
            let gg = g.dot(g);
            if t.abs() <= 1e-14 || gg == 0.0 {
                break;
            }
            q -= g * (t / gg);
        }
        q
    }
}
