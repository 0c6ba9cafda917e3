//! Principal geodesic curves (intrinsic PCA) and the flat PCA baseline.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geodesic::{Line, Projector, SplitPoint};
use crate::icca::residualize;
use crate::lie::{log_map, AlgebraVector, GroupElement, GroupStructure};
use crate::search::LineSearch;
use crate::sphere::{descent_step, SphereStep};
use crate::stats::{default_t_bound, intrinsic_mean, MEAN_MAX_ITER, MEAN_TOL};

/// Loss below which a view is treated as a single point.
pub(crate) const DEGENERATE_LOSS: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq)]
pub struct IpcaOptions {
    pub n_starts: usize,
    pub max_iter: usize,
    /// Relative loss change that counts as converged.
    pub tol: f64,
    /// Seed for the random starting directions.
    pub seed: u64,
    pub search: LineSearch,
    /// Projection half-width; `None` means `π √blocks`.
    pub t_bound: Option<f64>,
    pub step: SphereStep,
}

impl Default for IpcaOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iter: 300,
            tol: 1e-8,
            seed: 0,
            search: LineSearch::default(),
            t_bound: None,
            step: SphereStep::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IpcaModel {
    pub mean: GroupElement,
    /// Unit generators, sign-canonicalized.
    pub generators: Vec<AlgebraVector>,
    /// Residual loss `Σᵢ D²(xᵢ⁽ᵏ⁾, H_v)` of each component.
    pub losses: Vec<f64>,
    pub converged: bool,
    /// Set when the (residual) data collapse to a point.
    pub degenerate: bool,
}

/// Top-K principal directions of flat data.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaResult {
    pub directions: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    /// Fewer than K directions with non-zero variance.
    pub degenerate: bool,
}

/// Centered PCA via the eigen-decomposition of the sample covariance.
pub fn fit_euclidean_pca(data: &[Vec<f64>], k: usize) -> Result<PcaResult> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("PCA needs at least 2 points, got {n}")));
    }
    let d = data[0].len();
    if k > d {
        return Err(Error::InvalidInput(format!("K = {k} exceeds dimension {d}")));
    }
    let mut mean = vec![0.0; d];
    for row in data {
        if row.len() != d {
            return Err(Error::LengthMismatch { left: row.len(), right: d });
        }
        mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut directions = Vec::with_capacity(k);
    let mut variances = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let lambda = eig.eigenvalues[j];
        if !(lambda > 1e-12 * top.max(f64::MIN_POSITIVE)) {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        canonicalize(&mut v);
        directions.push(v);
        variances.push(lambda);
    }
    Ok(PcaResult {
        degenerate: directions.len() < k,
        directions,
        variances,
    })
}

pub(crate) fn canonicalize(v: &mut [f64]) -> bool {
    if let Some(c) = v.iter().find(|c| c.abs() > 1e-12) {
        if *c < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
            return true;
        }
    }
    false
}

/// `Σᵢ min_t D²(xᵢ, exp(t v))` over already-centered points.
pub fn geodesic_loss(centered: &[GroupElement], v: &AlgebraVector, t_bound: f64) -> Result<f64> {
    crate::stats::check_unit(v)?;
    let pts: Vec<SplitPoint> = centered.iter().map(SplitPoint::new).collect();
    let proj = Projector::new(v, t_bound, &LineSearch::default());
    Ok(proj.project_many(&pts)?.iter().map(|r| r.1).sum())
}

/// Best single geodesic through the identity for centered points.
#[derive(Clone, Debug)]
pub(crate) struct GeodesicFit {
    pub v: AlgebraVector,
    pub times: Vec<f64>,
    pub loss: f64,
    pub converged: bool,
    pub degenerate: bool,
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= n);
    v
}

fn starting_directions(centered: &[GroupElement], s: &GroupStructure, opts: &IpcaOptions) -> Vec<Vec<f64>> {
    let d = s.algebra_dim();
    let mut starts = Vec::with_capacity(opts.n_starts.max(1));
    let logs: Option<Vec<Vec<f64>>> = centered
        .iter()
        .map(|x| log_map(x).ok().map(AlgebraVector::into_coords))
        .collect();
    let pca_dir = logs
        .filter(|l| l.len() >= 2)
        .and_then(|l| fit_euclidean_pca(&l, 1).ok())
        .and_then(|r| r.directions.into_iter().next());
    starts.push(pca_dir.unwrap_or_else(|| {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    }));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.n_starts.max(1) {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        starts.push(unit(v));
    }
    starts
}

pub(crate) fn fit_geodesic(centered: &[GroupElement], opts: &IpcaOptions) -> Result<GeodesicFit> {
    let first = centered
        .first()
        .ok_or_else(|| Error::InvalidInput("no points".into()))?;
    let s = first.structure().clone();
    let t_bound = opts.t_bound.unwrap_or_else(|| default_t_bound(&s));
    let pts: Vec<SplitPoint> = centered.iter().map(SplitPoint::new).collect();

    let spread: f64 = pts.iter().map(|p| p.norm2().unwrap_or(f64::INFINITY)).sum();
    if spread < DEGENERATE_LOSS {
        return Ok(GeodesicFit {
            v: AlgebraVector::basis(&s, 0),
            times: vec![0.0; pts.len()],
            loss: spread,
            converged: true,
            degenerate: true,
        });
    }

    let mut best: Option<(Vec<f64>, Vec<f64>, f64, bool)> = None;
    for start in starting_directions(centered, &s, opts) {
        let (v, times, loss, converged) = descend(&s, &pts, start, t_bound, opts)?;
        if best.as_ref().is_none_or(|b| loss < b.2) {
            best = Some((v, times, loss, converged));
        }
    }
    let (mut v, mut times, loss, converged) = best.expect("at least one start");
    if canonicalize(&mut v) {
        times.iter_mut().for_each(|t| *t = -*t);
    }
    Ok(GeodesicFit {
        v: AlgebraVector::new(s, v)?,
        times,
        loss,
        converged,
        degenerate: false,
    })
}

/// Alternates projections with one sphere descent step on the loss with
/// the projection times frozen.
fn descend(
    s: &GroupStructure,
    pts: &[SplitPoint],
    start: Vec<f64>,
    t_bound: f64,
    opts: &IpcaOptions,
) -> Result<(Vec<f64>, Vec<f64>, f64, bool)> {
    let project = |v: &[f64]| -> Result<(Vec<f64>, f64)> {
        let proj = Projector::from_line(Line::from_coords(s, v), t_bound, &opts.search);
        let r = proj.project_many(pts)?;
        Ok((r.iter().map(|x| x.0).collect(), r.iter().map(|x| x.1).sum()))
    };
    let mut v = start;
    let (mut times, mut loss) = project(&v)?;
    for _ in 0..opts.max_iter {
        let frozen = times.clone();
        let mut surrogate = |x: &[Vec<f64>]| -> f64 {
            let line = Line::from_coords(s, &x[0]);
            pts.iter()
                .zip(&frozen)
                .map(|(p, t)| line.dist2(p, *t).unwrap_or(f64::INFINITY))
                .sum()
        };
        let Some(acc) = descent_step(&mut surrogate, std::slice::from_ref(&v), loss, &opts.step)
        else {
            return Ok((v, times, loss, true));
        };
        let next = acc.point.into_iter().next().expect("one factor");
        let (next_times, next_loss) = project(&next)?;
        let change = (loss - next_loss).abs();
        v = next;
        times = next_times;
        let prev = loss;
        loss = next_loss;
        if change <= opts.tol * prev || loss < DEGENERATE_LOSS {
            return Ok((v, times, loss, true));
        }
    }
    Ok((v, times, loss, false))
}

/// Intrinsic PCA: mean plus `k` principal geodesic generators, each fitted
/// on the residuals left by the previous ones.
pub fn fit_ipca(points: &[GroupElement], k: usize, opts: &IpcaOptions) -> Result<IpcaModel> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidInput("no points".into()))?;
    let s = first.structure().clone();
    if k == 0 || k > s.algebra_dim() {
        return Err(Error::InvalidInput(format!(
            "K = {k} must be in 1..={}",
            s.algebra_dim()
        )));
    }
    let mean = intrinsic_mean(points, MEAN_TOL, MEAN_MAX_ITER)?;
    let mean_inv = mean.inverse();
    let mut residual: Vec<GroupElement> = points
        .iter()
        .map(|x| mean_inv.compose(x))
        .collect::<Result<_>>()?;

    let mut model = IpcaModel {
        mean,
        generators: Vec::with_capacity(k),
        losses: Vec::with_capacity(k),
        converged: true,
        degenerate: false,
    };
    for comp in 0..k {
        let comp_opts = IpcaOptions {
            seed: opts.seed.wrapping_add(comp as u64),
            ..opts.clone()
        };
        let fit = fit_geodesic(&residual, &comp_opts)?;
        model.converged &= fit.converged;
        model.generators.push(fit.v.clone());
        model.losses.push(fit.loss);
        if fit.degenerate {
            model.degenerate = true;
            break;
        }
        residual = residualize(&residual, &fit.v, &fit.times)?;
    }
    Ok(model)
}
