//! Gridded fields with validity masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::Grid3;
use crate::tensor::{Sym3, Vec3, SYM_PAIRS};

/// Index of the `(p, q)` pair-of-pairs entry, `p ≤ q`, among the 21 stored
/// components of a [`SymTensor4Field`].
pub const fn pair_pair_index(p: usize, q: usize) -> usize {
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    // rows of lengths 6, 5, 4, ...
    p * (13 - p) / 2 + (q - p)
}

/// Flat access to fields for file IO.
pub trait GridField: Sized {
    const NCOMP: usize;
    fn grid(&self) -> &Grid3;
    fn mask(&self) -> &[bool];
    fn to_flat(&self) -> Vec<f64>;
    fn from_flat(grid: Grid3, flat: &[f64], mask: Vec<bool>) -> Self;
}

macro_rules! field_type {
    ($(#[$doc:meta])* $name:ident, $elem:ty, $zero:expr, $n:expr, |$e:ident| $to:expr, |$s:ident| $from:expr, |$w:ident| $sq:expr) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub grid: Grid3,
            pub data: Vec<$elem>,
            /// `true` where the value is valid.
            pub mask: Vec<bool>,
        }

        impl $name {
            pub fn zeros(grid: Grid3) -> Self {
                let n = grid.len();
                $name { grid, data: vec![$zero; n], mask: vec![true; n] }
            }

            pub fn from_fn(grid: Grid3, f: impl Fn(Vec3) -> $elem) -> Self {
                let data = (0..grid.len()).map(|i| f(grid.point_at(i))).collect::<Vec<_>>();
                $name { grid, mask: vec![true; data.len()], data }
            }

            /// Squared pointwise norm summed over valid nodes.
            pub fn sum_squares(&self) -> f64 {
                let mut acc = 0.0;
                for (v, &m) in self.data.iter().zip(&self.mask) {
                    if m {
                        let $w = v;
                        acc += $sq;
                    }
                }
                acc
            }

            /// Discrete L² norm over valid nodes (cell volume `h³`).
            pub fn l2_norm(&self) -> f64 {
                let h = self.grid.spacing;
                crate::math::sqrt(self.sum_squares() * h * h * h)
            }

            pub fn valid_count(&self) -> usize {
                self.mask.iter().filter(|m| **m).count()
            }
        }

        impl GridField for $name {
            const NCOMP: usize = $n;
            fn grid(&self) -> &Grid3 {
                &self.grid
            }
            fn mask(&self) -> &[bool] {
                &self.mask
            }
            fn to_flat(&self) -> Vec<f64> {
                let mut out = Vec::with_capacity(self.data.len() * $n);
                for $e in &self.data {
                    out.extend_from_slice(&$to);
                }
                out
            }
            fn from_flat(grid: Grid3, flat: &[f64], mask: Vec<bool>) -> Self {
                let data = flat
                    .chunks_exact($n)
                    .map(|$s| $from)
                    .collect();
                $name { grid, data, mask }
            }
        }
    };
}

field_type!(ScalarField, f64, 0.0, 1, |e| [*e], |s| s[0], |w| w * w);
field_type!(
    /// Covector field `v`, three components per node.
    OneFormField, Vec3, Vec3::ZERO, 3, |e| e.0, |s| Vec3([s[0], s[1], s[2]]), |w| w.dot(*w)
);
field_type!(
    /// Symmetric 2-tensor field, components in `11, 22, 33, 12, 13, 23` order.
    SymTensor2Field, Sym3, Sym3::ZERO, 6, |e| e.0,
    |s| Sym3([s[0], s[1], s[2], s[3], s[4], s[5]]), |w| w.frobenius(w)
);
field_type!(
    /// Saint-Venant image. Entry `pair_pair_index(p, q)` holds
    /// `W_{i₁i₂j₁j₂}` with `(i₁,i₂) = SYM_PAIRS[p]`, `(j₁,j₂) = SYM_PAIRS[q]`.
    SymTensor4Field, [f64; 21], [0.0; 21], 21, |e| *e,
    |s| { let mut a = [0.0; 21]; a.copy_from_slice(s); a },
    |w| sv_frobenius(w)
);

/// Full Frobenius square of a stored Saint-Venant tensor, counting every
/// index permutation the stored entry stands for.
fn sv_frobenius(w: &[f64; 21]) -> f64 {
    let mult = |p: usize| if SYM_PAIRS[p].0 == SYM_PAIRS[p].1 { 1.0 } else { 2.0 };
    let mut acc = 0.0;
    for p in 0..6 {
        for q in p..6 {
            let v = w[pair_pair_index(p, q)];
            let m = mult(p) * mult(q) * if p == q { 1.0 } else { 2.0 };
            acc += m * v * v;
        }
    }
    acc
}

impl SymTensor4Field {
    /// `W_{ijkl}` for arbitrary indices.
    pub fn get(&self, node: usize, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let p = crate::tensor::sym_index(i, j);
        let q = crate::tensor::sym_index(k, l);
        self.data[node][pair_pair_index(p, q)]
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (v, &ok) in self.data.iter().zip(&self.mask) {
            if ok {
                for x in v {
                    m = m.max(x.abs());
                }
            }
        }
        m
    }
}

impl ScalarField {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().zip(&self.mask).filter(|(_, m)| **m).fold(0.0, |a, (v, _)| a.max(v.abs()))
    }
}

impl SymTensor2Field {
    /// Trilinear interpolation; `None` outside the box or if any of the eight
    /// surrounding nodes with nonzero weight is masked.
    pub fn interpolate(&self, p: Vec3) -> Option<Sym3> {
        let w = self.grid.trilinear(p)?;
        let mut acc = Sym3::ZERO;
        for (idx, wi) in w {
            if wi != 0.0 {
                if !self.mask[idx] {
                    return None;
                }
                acc = acc + self.data[idx] * wi;
            }
        }
        Some(acc)
    }

    pub fn scale(&self, a: f64) -> Self {
        SymTensor2Field { grid: self.grid, data: self.data.iter().map(|v| *v * a).collect(), mask: self.mask.clone() }
    }

    /// `self − other` on the intersection of masks.
    pub fn sub(&self, other: &SymTensor2Field) -> Self {
        SymTensor2Field {
            grid: self.grid,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect(),
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn with_mask(mut self, mask: &[bool]) -> Self {
        for (m, &o) in self.mask.iter_mut().zip(mask) {
            *m = *m && o;
        }
        self
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (v, &ok) in self.data.iter().zip(&self.mask) {
            if ok {
                for x in v.0 {
                    m = m.max(x.abs());
                }
            }
        }
        m
    }
}
