//! Intrinsic statistics on the product group: distances, means and
//! projections onto one-parameter subgroups.

use crate::error::{Error, Result};
use crate::geodesic::{Projector, SplitPoint};
use crate::lie::{log_map, AlgebraVector, GroupElement, GroupStructure};
use crate::search::LineSearch;

pub const MEAN_TOL: f64 = 1e-9;
pub const MEAN_MAX_ITER: usize = 200;
const UNIT_TOL: f64 = 1e-9;

/// `D(x, y) = ‖log(x⁻¹ y)‖₂`.
pub fn riemannian_distance(x: &GroupElement, y: &GroupElement) -> Result<f64> {
    Ok(log_map(&x.between(y)?)?.norm())
}

/// Commutator-free approximation `‖log y − log x‖₂`.
pub fn bch_distance(x: &GroupElement, y: &GroupElement) -> Result<f64> {
    x.structure().check_same(y.structure())?;
    Ok(log_map(y)?.sub(&log_map(x)?)?.norm())
}

/// Karcher mean by fixed-point iteration
/// `μ ← μ · exp(mean_i log(μ⁻¹ x_i))`, started at the first point.
pub fn intrinsic_mean(points: &[GroupElement], tol: f64, max_iter: usize) -> Result<GroupElement> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("mean of an empty set".into()))?;
    let s = first.structure().clone();
    let n = points.len() as f64;
    let mut mu = first.clone();
    let mut step_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let mu_inv = mu.inverse();
        let mut acc = vec![0.0; s.algebra_dim()];
        for x in points {
            let d = log_map(&mu_inv.compose(x)?)?;
            for (a, c) in acc.iter_mut().zip(d.coords()) {
                *a += c;
            }
        }
        let delta = AlgebraVector::new(s.clone(), acc.into_iter().map(|a| a / n).collect())?;
        step_norm = delta.norm();
        mu = mu.compose(&delta.exp())?;
        if step_norm < tol {
            return Ok(mu);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        step_norm,
    })
}

/// Arithmetic mean of the flattened block matrices. Generally off-manifold.
pub fn extrinsic_mean(points: &[GroupElement]) -> Result<Vec<f64>> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("mean of an empty set".into()))?;
    let mut acc = vec![0.0; first.structure().ambient_dim()];
    for p in points {
        first.structure().check_same(p.structure())?;
        for (a, e) in acc.iter_mut().zip(p.embedding()) {
            *a += e;
        }
    }
    let n = points.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Search half-width covering any single-geodesic displacement: `π √blocks`.
pub fn default_t_bound(s: &GroupStructure) -> f64 {
    std::f64::consts::PI * (s.num_blocks() as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionResult {
    pub t_star: f64,
    /// `exp(t_star · v)`.
    pub point: GroupElement,
    pub residual_distance: f64,
}

pub(crate) fn check_unit(v: &AlgebraVector) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::UnitNormViolation { norm });
    }
    Ok(())
}

/// Closest point of the subgroup `{exp(t v) : |t| ≤ t_bound}` to `x`.
pub fn project_to_subgroup(
    x: &GroupElement,
    v: &AlgebraVector,
    t_bound: f64,
) -> Result<ProjectionResult> {
    project_with(x, v, t_bound, &LineSearch::default())
}

pub fn project_with(
    x: &GroupElement,
    v: &AlgebraVector,
    t_bound: f64,
    search: &LineSearch,
) -> Result<ProjectionResult> {
    check_unit(v)?;
    x.structure().check_same(v.structure())?;
    if !(t_bound > 0.0) {
        return Err(Error::InvalidInput(format!("t_bound must be positive, got {t_bound}")));
    }
    let proj = Projector::new(v, t_bound, search);
    let (t_star, _) = proj.project(&SplitPoint::new(x))?;
    let point = v.scaled(t_star).exp();
    let residual_distance = riemannian_distance(x, &point)?;
    Ok(ProjectionResult {
        t_star,
        point,
        residual_distance,
    })
}
