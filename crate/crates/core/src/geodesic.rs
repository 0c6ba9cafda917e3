//! Fast squared distances between points and one-parameter subgroups.
//!
//! Every optimizer in the crate evaluates `D²(x, exp(t v))` millions of times,
//! so points and generators are unpacked once into per-block form: SO(2)
//! blocks become angles (the block distance is a wrapped difference) and SO(3)
//! blocks keep a transposed matrix (the block distance is the rotation angle
//! of `Xᵀ exp(t w)`). The results agree with `riemannian_distance` up to
//! rounding.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::lie::{so3_angle, so3_exp, wrap_angle, AlgebraVector, Block, GroupElement, CUT_TOL};
use crate::search::{refine_grid, LineSearch};

/// Group element unpacked per block.
#[derive(Clone, Debug)]
pub(crate) struct SplitPoint {
    angles: Vec<f64>,
    rots_t: Vec<Matrix3<f64>>,
}

impl SplitPoint {
    pub fn new(g: &GroupElement) -> Self {
        let mut angles = Vec::new();
        let mut rots_t = Vec::new();
        for b in g.blocks() {
            match b {
                Block::So2(m) => angles.push(crate::lie::so2_angle(m)),
                Block::So3(m) => rots_t.push(m.transpose()),
            }
        }
        Self { angles, rots_t }
    }

    /// The point `exp(t v)` itself.
    pub fn on_line(line: &Line, t: f64) -> Self {
        Self {
            angles: line.so2.iter().map(|c| wrap_angle(t * c)).collect(),
            rots_t: line.so3.iter().map(|w| so3_exp(&(w * t)).transpose()).collect(),
        }
    }

    /// `D²(self, identity)`, or `None` at the cut.
    pub fn norm2(&self) -> Option<f64> {
        let mut d2: f64 = self.angles.iter().map(|a| a * a).sum();
        for r in &self.rots_t {
            d2 += checked_angle(r)?.powi(2);
        }
        Some(d2)
    }
}

/// Generator of a one-parameter subgroup, unpacked per block.
#[derive(Clone, Debug)]
pub(crate) struct Line {
    so2: Vec<f64>,
    so3: Vec<Vector3<f64>>,
}

impl Line {
    pub fn new(v: &AlgebraVector) -> Self {
        Self::from_coords(v.structure(), v.coords())
    }

    pub fn from_coords(s: &crate::lie::GroupStructure, c: &[f64]) -> Self {
        let mut so2 = Vec::new();
        let mut so3 = Vec::new();
        for (k, kind) in s.blocks().iter().enumerate() {
            let o = s.algebra_offset(k);
            match kind {
                crate::lie::BlockKind::So2 => so2.push(c[o]),
                crate::lie::BlockKind::So3 => so3.push(Vector3::new(c[o], c[o + 1], c[o + 2])),
            }
        }
        Self { so2, so3 }
    }

    fn so3_at(&self, t: f64) -> impl Iterator<Item = Matrix3<f64>> + '_ {
        self.so3.iter().map(move |w| so3_exp(&(w * t)))
    }

    /// `D²(p, exp(t v))`, or `None` when some SO(3) block sits at the cut.
    #[inline]
    pub fn dist2(&self, p: &SplitPoint, t: f64) -> Option<f64> {
        let mut d2 = 0.0;
        for (c, a) in self.so2.iter().zip(&p.angles) {
            d2 += wrap_angle(t * c - a).powi(2);
        }
        for (e, xt) in self.so3_at(t).zip(&p.rots_t) {
            d2 += checked_angle(&(xt * e))?.powi(2);
        }
        Some(d2)
    }

    /// `D²(exp(t v), exp(s u))` for `self = v`, `other = u`.
    #[inline]
    pub fn dist2_lines(&self, t: f64, other: &Line, s: f64) -> Option<f64> {
        let mut d2 = 0.0;
        for (a, b) in self.so2.iter().zip(&other.so2) {
            d2 += wrap_angle(s * b - t * a).powi(2);
        }
        for (w1, w2) in self.so3.iter().zip(&other.so3) {
            let r1t = so3_exp(&(w1 * t)).transpose();
            d2 += checked_angle(&(r1t * so3_exp(&(w2 * s))))?.powi(2);
        }
        Some(d2)
    }
}

#[inline]
fn checked_angle(m: &Matrix3<f64>) -> Option<f64> {
    let a = so3_angle(m);
    if std::f64::consts::PI - a < CUT_TOL {
        None
    } else {
        Some(a)
    }
}

/// Projects many points onto one subgroup, reusing the grid rotations.
pub(crate) struct Projector {
    line: Line,
    nodes: Vec<f64>,
    /// `exp(t_j w)` per grid node and SO(3) block.
    grid_so3: Vec<Vec<Matrix3<f64>>>,
    step: f64,
    tol: f64,
}

impl Projector {
    pub fn new(v: &AlgebraVector, t_bound: f64, search: &LineSearch) -> Self {
        Self::from_line(Line::new(v), t_bound, search)
    }

    pub fn from_line(line: Line, t_bound: f64, search: &LineSearch) -> Self {
        let nodes = search.nodes(-t_bound, t_bound);
        let grid_so3 = nodes.iter().map(|t| line.so3_at(*t).collect()).collect();
        let step = 2.0 * t_bound / (nodes.len() - 1) as f64;
        Self {
            line,
            nodes,
            grid_so3,
            step,
            tol: search.tol,
        }
    }

    pub fn line(&self) -> &Line {
        &self.line
    }

    fn node_dist2(&self, j: usize, p: &SplitPoint) -> Option<f64> {
        let t = self.nodes[j];
        let mut d2 = 0.0;
        for (c, a) in self.line.so2.iter().zip(&p.angles) {
            d2 += wrap_angle(t * c - a).powi(2);
        }
        for (e, xt) in self.grid_so3[j].iter().zip(&p.rots_t) {
            d2 += checked_angle(&(xt * e))?.powi(2);
        }
        Some(d2)
    }

    /// Minimizes `Σ_k D²(p_k, exp(t v))` over the search interval.
    /// Returns `(t*, value)`.
    pub fn argmin_sum(&self, points: &[&SplitPoint]) -> Option<(f64, f64)> {
        let values: Vec<Option<f64>> = (0..self.nodes.len())
            .map(|j| {
                points
                    .iter()
                    .try_fold(0.0, |acc, p| Some(acc + self.node_dist2(j, p)?))
            })
            .collect();
        let m = points.len() as f64;
        let step = self.step;
        // d/dt Σ D_k² ≤ 2 Σ D_k ≤ 2 √(m Σ D_k²) since each D_k is 1-Lipschitz in t
        let margin = move |best: f64| {
            let bound = 2.0 * (m * best).sqrt() + 2.0 * m * step;
            bound * step
        };
        refine_grid(
            &self.nodes,
            &values,
            |t| {
                points
                    .iter()
                    .try_fold(0.0, |acc, p| Some(acc + self.line.dist2(p, t)?))
            },
            self.tol,
            margin,
        )
    }

    /// Projects every point; `(t*, D²)` per point, in input order.
    pub fn project_many(&self, pts: &[SplitPoint]) -> Result<Vec<(f64, f64)>> {
        use rayon::prelude::*;
        pts.par_iter().map(|p| self.project(p)).collect()
    }

    /// `(t*, D²(p, exp(t* v)))`.
    pub fn project(&self, p: &SplitPoint) -> Result<(f64, f64)> {
        self.argmin_sum(&[p]).ok_or(Error::AngleAtCut {
            block: 0,
            angle: std::f64::consts::PI,
        })
    }
}
