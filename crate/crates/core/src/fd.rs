//! Central finite-difference stencils on masked grid data.
//!
//! Every operator comes as a forward application and an exact adjoint
//! (gather form). A node's output is valid only when its whole stencil reads
//! valid input, so each application erodes the mask by the stencil radius.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::Grid3;
use crate::par;

#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub offsets: &'static [isize],
    pub coefs: &'static [f64],
    /// Output is scaled by `h^-power`.
    pub power: i32,
}

pub const D1: Stencil = Stencil {
    offsets: &[-2, -1, 1, 2],
    coefs: &[1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0],
    power: 1,
};

pub const D2: Stencil = Stencil {
    offsets: &[-2, -1, 0, 1, 2],
    coefs: &[-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
    power: 2,
};

/// Second-order first derivative, used one node in from a boundary.
pub const D1_LOW: Stencil = Stencil { offsets: &[-1, 1], coefs: &[-0.5, 0.5], power: 1 };

#[inline]
pub fn neighbor(grid: &Grid3, idx: usize, axis: usize, off: isize) -> Option<usize> {
    let c = grid.coords(idx);
    let t = c[axis] as isize + off;
    if t < 0 || t >= grid.dims[axis] as isize {
        return None;
    }
    let stride = match axis {
        0 => 1,
        1 => grid.dims[0],
        _ => grid.dims[0] * grid.dims[1],
    } as isize;
    Some((idx as isize + off * stride) as usize)
}

fn scale(grid: &Grid3, st: &Stencil) -> f64 {
    let h = grid.spacing;
    match st.power {
        1 => 1.0 / h,
        2 => 1.0 / (h * h),
        p => crate::math::powf(h, -(p as f64)),
    }
}

/// Output validity of `st` along `axis`.
pub fn stencil_mask(grid: &Grid3, valid: &[bool], st: &Stencil, axis: usize) -> Vec<bool> {
    par::map_range(grid.len(), |idx| {
        valid[idx]
            && st.offsets.iter().all(|&o| neighbor(grid, idx, axis, o).is_some_and(|n| valid[n]))
    })
}

fn stride(grid: &Grid3, axis: usize) -> isize {
    (match axis {
        0 => 1,
        1 => grid.dims[0],
        _ => grid.dims[0] * grid.dims[1],
    }) as isize
}

/// `y = S x` on `out_mask`, zero elsewhere.
pub fn apply(grid: &Grid3, x: &[f64], out_mask: &[bool], st: &Stencil, axis: usize) -> Vec<f64> {
    let s = scale(grid, st);
    let step = stride(grid, axis);
    par::map_range(grid.len(), |idx| {
        if !out_mask[idx] {
            return 0.0;
        }
        debug_assert!(st.offsets.iter().all(|&o| neighbor(grid, idx, axis, o).is_some()));
        let mut acc = 0.0;
        for (&o, &c) in st.offsets.iter().zip(st.coefs) {
            acc += c * x[(idx as isize + o * step) as usize];
        }
        acc * s
    })
}

/// Adjoint of [`apply`] with the same `out_mask`.
pub fn apply_adjoint(grid: &Grid3, y: &[f64], out_mask: &[bool], st: &Stencil, axis: usize) -> Vec<f64> {
    let s = scale(grid, st);
    let step = stride(grid, axis);
    let n = grid.dims[axis] as isize;
    par::map_range(grid.len(), |idx| {
        let t = grid.coords(idx)[axis] as isize;
        let mut acc = 0.0;
        for (&o, &c) in st.offsets.iter().zip(st.coefs) {
            if (0..n).contains(&(t - o)) {
                let m = (idx as isize - o * step) as usize;
                if out_mask[m] {
                    acc += c * y[m];
                }
            }
        }
        acc * s
    })
}

/// `Σ_a D2_a x` on `out_mask` in one pass; zero elsewhere.
pub fn apply_laplacian(grid: &Grid3, x: &[f64], out_mask: &[bool]) -> Vec<f64> {
    let s = scale(grid, &D2);
    let steps = [stride(grid, 0), stride(grid, 1), stride(grid, 2)];
    par::map_range(grid.len(), |idx| {
        if !out_mask[idx] {
            return 0.0;
        }
        let mut acc = 0.0;
        for step in steps {
            for (&o, &c) in D2.offsets.iter().zip(D2.coefs) {
                acc += c * x[(idx as isize + o * step) as usize];
            }
        }
        acc * s
    })
}

/// Adjoint of [`apply_laplacian`] with the same `out_mask`.
pub fn apply_laplacian_adjoint(grid: &Grid3, y: &[f64], out_mask: &[bool]) -> Vec<f64> {
    let s = scale(grid, &D2);
    par::map_range(grid.len(), |idx| {
        let c = grid.coords(idx);
        let mut acc = 0.0;
        for axis in 0..3 {
            let (t, n, step) = (c[axis] as isize, grid.dims[axis] as isize, stride(grid, axis));
            for (&o, &k) in D2.offsets.iter().zip(D2.coefs) {
                if (0..n).contains(&(t - o)) {
                    let m = (idx as isize - o * step) as usize;
                    if out_mask[m] {
                        acc += k * y[m];
                    }
                }
            }
        }
        acc * s
    })
}

/// Masked field data: values plus validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Masked {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl Masked {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Self {
        Masked { values, mask }
    }

    pub fn full(values: Vec<f64>) -> Self {
        let n = values.len();
        Masked { values, mask: vec![true; n] }
    }

    pub fn map2(&self, o: &Masked, f: impl Fn(f64, f64) -> f64) -> Masked {
        Masked {
            values: self.values.iter().zip(&o.values).map(|(a, b)| f(*a, *b)).collect(),
            mask: self.mask.iter().zip(&o.mask).map(|(a, b)| *a && *b).collect(),
        }
    }
}

pub fn op(grid: &Grid3, f: &Masked, st: &Stencil, axis: usize) -> Masked {
    let mask = stencil_mask(grid, &f.mask, st, axis);
    let values = apply(grid, &f.values, &mask, st, axis);
    Masked { values, mask }
}

/// Fourth-order `∂_a f`.
pub fn d1(grid: &Grid3, f: &Masked, axis: usize) -> Masked {
    op(grid, f, &D1, axis)
}

/// Fourth-order `∂_a ∂_b f`: a 5-point second difference when `a == b`,
/// composed first differences otherwise.
pub fn d2(grid: &Grid3, f: &Masked, a: usize, b: usize) -> Masked {
    if a == b {
        op(grid, f, &D2, a)
    } else {
        d1(grid, &d1(grid, f, b), a)
    }
}

pub fn laplacian(grid: &Grid3, f: &Masked) -> Masked {
    let dxx = d2(grid, f, 0, 0);
    let dyy = d2(grid, f, 1, 1);
    let dzz = d2(grid, f, 2, 2);
    dxx.map2(&dyy, |a, b| a + b).map2(&dzz, |a, b| a + b)
}

pub fn gradient(grid: &Grid3, f: &Masked) -> [Masked; 3] {
    [d1(grid, f, 0), d1(grid, f, 1), d1(grid, f, 2)]
}

/// First derivative that falls back to the second-order stencil where the
/// fourth-order one does not fit. Only nodes without both direct neighbours
/// are left invalid.
pub fn d1_adaptive(grid: &Grid3, f: &Masked, axis: usize) -> Masked {
    let hi = stencil_mask(grid, &f.mask, &D1, axis);
    let lo = stencil_mask(grid, &f.mask, &D1_LOW, axis);
    let lo_only: Vec<bool> = hi.iter().zip(&lo).map(|(h, l)| !*h && *l).collect();
    let a = apply(grid, &f.values, &hi, &D1, axis);
    let b = apply(grid, &f.values, &lo_only, &D1_LOW, axis);
    Masked {
        values: a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        mask: lo,
    }
}

/// Mask of nodes at least `depth` nodes away from every grid face.
pub fn interior_mask(grid: &Grid3, depth: usize) -> Vec<bool> {
    (0..grid.len()).map(|i| grid.depth(i) >= depth).collect()
}
