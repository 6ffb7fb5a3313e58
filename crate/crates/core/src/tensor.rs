//! Small fixed-size vectors and symmetric 3x3 matrices.

use core::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn unit(axis: usize) -> Self {
        let mut v = [0.0; 3];
        v[axis] = 1.0;
        Vec3(v)
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Vec3([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    pub fn is_finite(self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Two unit vectors completing `self` (assumed unit) to a right-handed
    /// orthonormal frame.
    pub fn orthonormal_pair(self) -> (Vec3, Vec3) {
        let n = self;
        let helper = if n.0[0].abs() < 0.9 {
            Vec3::unit(0)
        } else {
            Vec3::unit(1)
        };
        let e1 = (helper - n * helper.dot(n)).normalized();
        let e2 = n.cross(e1);
        (e1, e2)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Vec3 {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3([-self.0[0], -self.0[1], -self.0[2]])
    }
}

/// Component order used for every symmetric 2-tensor in the crate:
/// 11, 22, 33, 12, 13, 23.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Position of the (i, j) entry in [`SYM_PAIRS`] order.
#[inline]
pub const fn sym_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) | (1, 0) => 3,
        (0, 2) | (2, 0) => 4,
        _ => 5,
    }
}

/// Symmetric 3x3 matrix in [`SYM_PAIRS`] order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym3(pub [f64; 6]);

impl Sym3 {
    pub const ZERO: Sym3 = Sym3([0.0; 6]);
    pub const IDENTITY: Sym3 = Sym3([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[sym_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[sym_index(i, j)] = v;
    }

    /// `a ⊗ a`.
    pub fn outer_self(a: Vec3) -> Sym3 {
        let mut s = Sym3::ZERO;
        for (k, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            s.0[k] = a[i] * a[j];
        }
        s
    }

    /// Symmetric product `½(a ⊗ b + b ⊗ a)`.
    pub fn sym_product(a: Vec3, b: Vec3) -> Sym3 {
        let mut s = Sym3::ZERO;
        for (k, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            s.0[k] = 0.5 * (a[i] * b[j] + b[i] * a[j]);
        }
        s
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// `n · (S n)`.
    #[inline]
    pub fn quad(&self, n: Vec3) -> f64 {
        let s = &self.0;
        s[0] * n[0] * n[0]
            + s[1] * n[1] * n[1]
            + s[2] * n[2] * n[2]
            + 2.0 * (s[3] * n[0] * n[1] + s[4] * n[0] * n[2] + s[5] * n[1] * n[2])
    }

    /// Frobenius inner product (off-diagonal entries counted twice).
    pub fn frobenius(&self, o: &Sym3) -> f64 {
        let (a, b) = (&self.0, &o.0);
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }
}

/// Weights `w` with `n·(S n) = Σ_k w_k S_k` for components in [`SYM_PAIRS`] order.
#[inline]
pub fn quad_weights(n: Vec3) -> [f64; 6] {
    [
        n[0] * n[0],
        n[1] * n[1],
        n[2] * n[2],
        2.0 * n[0] * n[1],
        2.0 * n[0] * n[2],
        2.0 * n[1] * n[2],
    ]
}

impl Add for Sym3 {
    type Output = Sym3;
    fn add(self, o: Sym3) -> Sym3 {
        let mut r = self;
        for k in 0..6 {
            r.0[k] += o.0[k];
        }
        r
    }
}

impl Sub for Sym3 {
    type Output = Sym3;
    fn sub(self, o: Sym3) -> Sym3 {
        let mut r = self;
        for k in 0..6 {
            r.0[k] -= o.0[k];
        }
        r
    }
}

impl Mul<f64> for Sym3 {
    type Output = Sym3;
    fn mul(self, s: f64) -> Sym3 {
        let mut r = self;
        for v in r.0.iter_mut() {
            *v *= s;
        }
        r
    }
}

/// Solve the 3x3 system `m x = b` by Cramer's rule. `None` when `m` is
/// numerically singular relative to its scale.
pub fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(&m);
    let scale: f64 = m.iter().flatten().fold(0.0, |acc, v| acc.max(v.abs()));
    if !(d.abs() > 1e-300 && d.abs() > 1e-14 * scale * scale * scale) {
        return None;
    }
    let mut x = [0.0; 3];
    for (c, xc) in x.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *xc = det(&mc) / d;
    }
    Some(x)
}
