//! First-arrival travel times `|∇T| = 1/c_p` by first-order fast marching.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::grid::Grid3;
use crate::medium::{MediumModel, Mode};
use crate::region::LensRegion;
use crate::tensor::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Far,
    Trial,
    Accepted,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    Point(Vec3),
    /// Plane through `point` with unit `normal`; time is distance to the plane.
    Plane { point: Vec3, normal: Vec3 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeField {
    pub grid: Grid3,
    /// `f64::INFINITY` where unreached or outside.
    pub t: Vec<f64>,
    pub status: Vec<NodeStatus>,
    /// Order in which nodes were accepted.
    pub accept_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EikonalError {
    SourceOutsideGrid([f64; 3]),
    NoSourceNodes,
}

impl core::fmt::Display for EikonalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EikonalError::SourceOutsideGrid(p) => write!(f, "source ({}, {}, {}) lies outside the grid", p[0], p[1], p[2]),
            EikonalError::NoSourceNodes => write!(f, "no admissible grid node near the source"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    t: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (t, idx)
        other.t.total_cmp(&self.t).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EikonalOptions {
    /// Nodes closer than this to the source are initialized with the
    /// straight-ray slowness integral.
    pub init_radius: f64,
}

impl Default for EikonalOptions {
    fn default() -> Self {
        EikonalOptions { init_radius: 0.25 }
    }
}

/// `|x − x0| ∫₀¹ 1/c(x0 + u(x − x0)) du` by composite Simpson with 16 panels.
fn straight_ray_time(model: &MediumModel, a: Vec3, b: Vec3) -> Option<f64> {
    let n = 16;
    let d = b - a;
    let mut acc = 0.0;
    for i in 0..=n {
        let u = i as f64 / n as f64;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w / model.speed(a + d * u, Mode::P).ok()?;
    }
    Some(d.norm() * acc / (3.0 * n as f64))
}

/// One-sided upwind solve of `Σ (T − a_i)₊² = (h/c)²`.
fn local_update(neigh: [f64; 3], hs: f64) -> f64 {
    let mut a = neigh;
    a.sort_by(|x, y| x.total_cmp(y));
    let mut t = a[0] + hs;
    for m in 2..=3 {
        if !a[m - 1].is_finite() || t <= a[m - 1] {
            break;
        }
        let mf = m as f64;
        let sum: f64 = a[..m].iter().sum();
        let sum2: f64 = a[..m].iter().map(|v| v * v).sum();
        let disc = sum * sum - mf * (sum2 - hs * hs);
        if disc < 0.0 {
            break;
        }
        t = (sum + crate::math::sqrt(disc)) / mf;
    }
    t
}

pub fn eikonal_grid(
    model: &MediumModel,
    source: &Source,
    grid: &Grid3,
    region: Option<&LensRegion>,
    opts: &EikonalOptions,
) -> Result<TravelTimeField, EikonalError> {
    let n = grid.len();
    let anchor = match source {
        Source::Point(p) => *p,
        Source::Plane { point, .. } => *point,
    };
    if grid.locate(anchor).is_none() {
        return Err(EikonalError::SourceOutsideGrid(anchor.0));
    }
    let speed: Vec<f64> = crate::par::map_range(n, |i| {
        let p = grid.point_at(i);
        let inside = region.map_or(true, |r| r.contains(p));
        match model.speed(p, Mode::P) {
            Ok(c) if inside => c,
            _ => f64::NAN,
        }
    });
    let mut status: Vec<NodeStatus> =
        speed.iter().map(|c| if c.is_finite() { NodeStatus::Far } else { NodeStatus::Outside }).collect();
    let mut t = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();

    for idx in 0..n {
        if status[idx] == NodeStatus::Outside {
            continue;
        }
        let p = grid.point_at(idx);
        let init = match source {
            Source::Point(x0) if (p - *x0).norm() <= opts.init_radius => straight_ray_time(model, *x0, p),
            Source::Plane { point, normal } => {
                let d = (p - *point).dot(*normal);
                if d.abs() <= opts.init_radius {
                    straight_ray_time(model, p - *normal * d, p)
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(v) = init {
            t[idx] = v;
            status[idx] = NodeStatus::Trial;
            heap.push(Entry { t: v, idx });
        }
    }
    if heap.is_empty() {
        return Err(EikonalError::NoSourceNodes);
    }

    let h = grid.spacing;
    let mut accept_order = Vec::with_capacity(n);
    while let Some(Entry { t: tv, idx }) = heap.pop() {
        if status[idx] == NodeStatus::Accepted || tv > t[idx] {
            continue;
        }
        status[idx] = NodeStatus::Accepted;
        accept_order.push(idx);
        for axis in 0..3 {
            for off in [-1isize, 1] {
                let Some(nb) = crate::fd::neighbor(grid, idx, axis, off) else { continue };
                if matches!(status[nb], NodeStatus::Accepted | NodeStatus::Outside) {
                    continue;
                }
                let mut a = [f64::INFINITY; 3];
                for (ax, slot) in a.iter_mut().enumerate() {
                    for o in [-1isize, 1] {
                        if let Some(m) = crate::fd::neighbor(grid, nb, ax, o) {
                            if status[m] == NodeStatus::Accepted {
                                *slot = slot.min(t[m]);
                            }
                        }
                    }
                }
                let cand = local_update(a, h / speed[nb]);
                if cand < t[nb] {
                    t[nb] = cand;
                    status[nb] = NodeStatus::Trial;
                    heap.push(Entry { t: cand, idx: nb });
                }
            }
        }
    }
    Ok(TravelTimeField { grid: *grid, t, status, accept_order })
}

impl TravelTimeField {
    /// Trilinear interpolation; `None` if any weighted node is unreached.
    pub fn sample(&self, p: Vec3) -> Option<f64> {
        let w = self.grid.trilinear(p)?;
        let mut acc = 0.0;
        for (idx, wi) in w {
            if wi != 0.0 {
                if !self.t[idx].is_finite() {
                    return None;
                }
                acc += wi * self.t[idx];
            }
        }
        Some(acc)
    }
}

/// Closed-form first-arrival time for `c = c0 + b (z − z0)` from `x0`.
pub fn linear_gradient_time(c0: f64, b: f64, x0: Vec3, x: Vec3) -> f64 {
    let c = c0 + b * (x[2] - x0[2]);
    let r2 = (x - x0).dot(x - x0);
    // acosh(1 + u) = log1p(u + √(u(u + 2))), stable for small u
    let u = b * b * r2 / (2.0 * c0 * c);
    crate::math::log1p(u + crate::math::sqrt(u * (u + 2.0))) / b
}
