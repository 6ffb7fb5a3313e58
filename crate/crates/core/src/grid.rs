//! Uniform isotropic 3-D grids.

use crate::tensor::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    NonPositiveSpacing(f64),
    EmptyDim(usize),
    TooLarge,
}

impl core::fmt::Display for GridError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            GridError::NonPositiveSpacing(h) => write!(f, "grid spacing must be positive, got {h}"),
            GridError::EmptyDim(axis) => write!(f, "grid dimension along axis {axis} is zero"),
            GridError::TooLarge => write!(f, "grid node count overflows"),
        }
    }
}

impl Grid3 {
    pub fn new(origin: [f64; 3], spacing: f64, dims: [usize; 3]) -> Result<Self, GridError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(GridError::NonPositiveSpacing(spacing));
        }
        for (axis, &n) in dims.iter().enumerate() {
            if n == 0 {
                return Err(GridError::EmptyDim(axis));
            }
        }
        dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(GridError::TooLarge)?;
        Ok(Grid3 { origin, spacing, dims })
    }

    /// Grid of `n` nodes per axis covering `[lo, hi]^3`.
    pub fn cube(lo: f64, hi: f64, n: usize) -> Self {
        Grid3 { origin: [lo; 3], spacing: (hi - lo) / (n - 1) as f64, dims: [n; 3] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.spacing;
        Vec3([
            self.origin[0] + h * i as f64,
            self.origin[1] + h * j as f64,
            self.origin[2] + h * k as f64,
        ])
    }

    #[inline]
    pub fn point_at(&self, idx: usize) -> Vec3 {
        let [i, j, k] = self.coords(idx);
        self.point(i, j, k)
    }

    pub fn upper(&self) -> [f64; 3] {
        let h = self.spacing;
        [0, 1, 2].map(|a| self.origin[a] + h * (self.dims[a] - 1) as f64)
    }

    /// Distance (in nodes) from `idx` to the nearest grid face.
    #[inline]
    pub fn depth(&self, idx: usize) -> usize {
        let c = self.coords(idx);
        (0..3).map(|a| c[a].min(self.dims[a] - 1 - c[a])).min().unwrap_or(0)
    }

    /// Cell containing `p` and the local coordinates in `[0, 1]^3`, or `None`
    /// when `p` lies outside the grid box.
    pub fn locate(&self, p: Vec3) -> Option<([usize; 3], [f64; 3])> {
        let mut cell = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.spacing;
            let last = (self.dims[a] - 1) as f64;
            if !(u >= -1e-9 && u <= last + 1e-9) || self.dims[a] < 2 {
                return None;
            }
            let u = u.clamp(0.0, last);
            let c = (crate::math::floor(u) as usize).min(self.dims[a] - 2);
            cell[a] = c;
            frac[a] = u - c as f64;
        }
        Some((cell, frac))
    }

    /// The 8 node indices and trilinear weights for a point, in a fixed order.
    pub fn trilinear(&self, p: Vec3) -> Option<[(usize, f64); 8]> {
        let (c, f) = self.locate(p)?;
        let mut out = [(0usize, 0.0); 8];
        for (n, slot) in out.iter_mut().enumerate() {
            let (di, dj, dk) = (n & 1, (n >> 1) & 1, (n >> 2) & 1);
            let w = (if di == 1 { f[0] } else { 1.0 - f[0] })
                * (if dj == 1 { f[1] } else { 1.0 - f[1] })
                * (if dk == 1 { f[2] } else { 1.0 - f[2] });
            *slot = (self.index(c[0] + di, c[1] + dj, c[2] + dk), w);
        }
        Some(out)
    }

    /// Nearest node to `p`, if inside the box.
    pub fn nearest(&self, p: Vec3) -> Option<[usize; 3]> {
        let (c, f) = self.locate(p)?;
        Some([0, 1, 2].map(|a| c[a] + usize::from(f[a] >= 0.5)))
    }
}
