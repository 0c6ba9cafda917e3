//! Intrinsic canonical correlation analysis: pairs of one-parameter
//! subgroups, one per view, whose projection times are linearly related.
//!
//! The pair objective for centered views `X'`, `Y'` and unit generators
//! `(v, u)` is
//!
//! ```text
//! Σᵢ D²(x'ᵢ, exp(tᵢ v)) + D²(y'ᵢ, exp(sᵢ u)) + D²(exp(tᵢ v), exp(sᵢ u))
//! ```
//!
//! where `(tᵢ, sᵢ)` are the projection times. Fitting alternates a sphere
//! descent step on `(v, u)` with a time update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{Line, Projector, SplitPoint};
use crate::ipca::{canonicalize, fit_geodesic, IpcaOptions};
use crate::lie::{AlgebraVector, GroupElement, GroupStructure};
use crate::search::LineSearch;
use crate::sphere::{descent_step, SphereStep};
use crate::stats::{check_unit, default_t_bound, intrinsic_mean, MEAN_MAX_ITER, MEAN_TOL};

/// Joint spread `Σ D²(x', e) + Σ D²(y', e)` below which a pair is degenerate.
const DEGENERATE_SPREAD: f64 = 1e-10;
const DEGENERATE_VAR: f64 = 1e-12;

/// How the times are updated between generator steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Times are re-projected onto each subgroup, ignoring the coupling
    /// term. The loss is not guaranteed to decrease.
    #[default]
    PaperFaithful,
    /// Times minimize the full objective one point at a time, so the loss
    /// never increases.
    JointDescent,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper-faithful" => Ok(Mode::PaperFaithful),
            "joint" | "joint-descent" => Ok(Mode::JointDescent),
            other => Err(Error::InvalidInput(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IccaOptions {
    pub mode: Mode,
    /// Relative loss change that counts as converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Options of the intrinsic-PCA initialization.
    pub init: IpcaOptions,
    pub search: LineSearch,
    pub t_bound: Option<f64>,
    pub step: SphereStep,
}

impl Default for IccaOptions {
    fn default() -> Self {
        Self {
            mode: Mode::PaperFaithful,
            tol: 1e-6,
            max_iter: 200,
            init: IpcaOptions::default(),
            search: LineSearch::default(),
            t_bound: None,
            step: SphereStep::default(),
        }
    }
}

/// Projection times of the paired views.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimePairs {
    pub t_star: Vec<f64>,
    pub s_star: Vec<f64>,
}

/// Least-squares line `ŝ = slope · t + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRegression {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// The times had (numerically) zero variance.
    pub degenerate: bool,
}

impl TimeRegression {
    pub fn predict(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalPair {
    pub v: AlgebraVector,
    pub u: AlgebraVector,
    pub regression: TimeRegression,
    pub pair_loss: f64,
    pub converged: bool,
    pub degenerate: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitFlags {
    /// Every pair met the tolerance within `max_iter`.
    pub converged: bool,
    /// Some pair was degenerate (data collapsed to the mean).
    pub degenerate: bool,
    /// Fewer than K pairs were fitted because the residual vanished.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IccaModel {
    pub structure: GroupStructure,
    pub mu_x: GroupElement,
    pub mu_y: GroupElement,
    pub pairs: Vec<CanonicalPair>,
    /// `(iteration, loss)` per pair; iteration 0 is the initialization.
    pub loss_trace: Vec<Vec<(usize, f64)>>,
    pub mode: Mode,
    pub flags: FitFlags,
}

/// Result of fitting one pair on centered data.
#[derive(Clone, Debug)]
pub struct PairFit {
    pub pair: CanonicalPair,
    /// Projection times of the final generators.
    pub times: TimePairs,
    pub trace: Vec<(usize, f64)>,
}

/// `xᵢ ← exp(tᵢ v)⁻¹ xᵢ`.
pub fn residualize(points: &[GroupElement], v: &AlgebraVector, times: &[f64]) -> Result<Vec<GroupElement>> {
    if points.len() != times.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: times.len(),
        });
    }
    points
        .iter()
        .zip(times)
        .map(|(x, t)| v.scaled(-t).exp().compose(x))
        .collect()
}

/// Ordinary least squares of `s` on `t`.
pub fn fit_time_regression(times: &TimePairs) -> Result<TimeRegression> {
    let (t, s) = (&times.t_star, &times.s_star);
    if t.len() != s.len() {
        return Err(Error::LengthMismatch {
            left: t.len(),
            right: s.len(),
        });
    }
    let n = t.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("regression needs 2 pairs, got {n}")));
    }
    if t.iter().chain(s).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite projection time".into()));
    }
    let nf = n as f64;
    let mt = t.iter().sum::<f64>() / nf;
    let ms = s.iter().sum::<f64>() / nf;
    let stt: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let sss: f64 = s.iter().map(|b| (b - ms).powi(2)).sum();
    let sts: f64 = t.iter().zip(s).map(|(a, b)| (a - mt) * (b - ms)).sum();
    if stt / nf <= DEGENERATE_VAR {
        return Ok(TimeRegression {
            slope: 0.0,
            intercept: ms,
            r2: 0.0,
            degenerate: true,
        });
    }
    let slope = sts / stt;
    let intercept = ms - slope * mt;
    let sse: f64 = t
        .iter()
        .zip(s)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum();
    let r2 = if sss > 0.0 { 1.0 - sse / sss } else { 1.0 };
    Ok(TimeRegression {
        slope,
        intercept,
        r2,
        degenerate: false,
    })
}

struct Views {
    s: GroupStructure,
    xs: Vec<SplitPoint>,
    ys: Vec<SplitPoint>,
    t_bound: f64,
    search: LineSearch,
}

impl Views {
    fn new(x: &[GroupElement], y: &[GroupElement], t_bound: Option<f64>, search: LineSearch) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let s = x
            .first()
            .ok_or_else(|| Error::InvalidInput("no points".into()))?
            .structure()
            .clone();
        for p in x.iter().chain(y) {
            s.check_same(p.structure())?;
        }
        Ok(Self {
            t_bound: t_bound.unwrap_or_else(|| default_t_bound(&s)),
            xs: x.iter().map(SplitPoint::new).collect(),
            ys: y.iter().map(SplitPoint::new).collect(),
            s,
            search,
        })
    }

    fn project(&self, v: &[f64], u: &[f64]) -> Result<(TimePairs, f64)> {
        let pv = Projector::from_line(Line::from_coords(&self.s, v), self.t_bound, &self.search);
        let pu = Projector::from_line(Line::from_coords(&self.s, u), self.t_bound, &self.search);
        let tx = pv.project_many(&self.xs)?;
        let sy = pu.project_many(&self.ys)?;
        let times = TimePairs {
            t_star: tx.iter().map(|r| r.0).collect(),
            s_star: sy.iter().map(|r| r.0).collect(),
        };
        let loss = self.loss_at(pv.line(), pu.line(), &times).ok_or(cut_error())?;
        Ok((times, loss))
    }

    /// Objective with the times held fixed; `None` if a term hits the cut.
    fn loss_at(&self, lv: &Line, lu: &Line, times: &TimePairs) -> Option<f64> {
        let mut total = 0.0;
        for i in 0..self.xs.len() {
            let (t, s) = (times.t_star[i], times.s_star[i]);
            total += lv.dist2(&self.xs[i], t)? + lu.dist2(&self.ys[i], s)? + lv.dist2_lines(t, lu, s)?;
        }
        Some(total)
    }

    fn spread(&self) -> f64 {
        self.xs
            .iter()
            .chain(&self.ys)
            .map(|p| p.norm2().unwrap_or(f64::INFINITY))
            .sum()
    }

    /// One coordinate-descent sweep over the times with the coupling term
    /// included: each `tᵢ` then each `sᵢ` is moved only if its own part of
    /// the objective decreases.
    fn joint_times(&self, v: &[f64], u: &[f64], times: &mut TimePairs) -> Result<f64> {
        let lv = Line::from_coords(&self.s, v);
        let lu = Line::from_coords(&self.s, u);
        let pv = Projector::from_line(lv.clone(), self.t_bound, &self.search);
        let pu = Projector::from_line(lu.clone(), self.t_bound, &self.search);
        for i in 0..self.xs.len() {
            let (t, s) = (times.t_star[i], times.s_star[i]);
            let other = SplitPoint::on_line(&lu, s);
            let old = lv.dist2(&self.xs[i], t).zip(lv.dist2_lines(t, &lu, s)).map(|(a, b)| a + b);
            if let Some((nt, nv)) = pv.argmin_sum(&[&self.xs[i], &other]) {
                if old.is_none_or(|o| nv < o) {
                    times.t_star[i] = nt;
                }
            }
            let t = times.t_star[i];
            let other = SplitPoint::on_line(&lv, t);
            let old = lu.dist2(&self.ys[i], s).zip(lv.dist2_lines(t, &lu, s)).map(|(a, b)| a + b);
            if let Some((ns, nv)) = pu.argmin_sum(&[&self.ys[i], &other]) {
                if old.is_none_or(|o| nv < o) {
                    times.s_star[i] = ns;
                }
            }
        }
        self.loss_at(&lv, &lu, times).ok_or(cut_error())
    }
}

fn cut_error() -> Error {
    Error::AngleAtCut {
        block: 0,
        angle: std::f64::consts::PI,
    }
}

/// Pair objective at `(v, u)` with projection times, over centered views.
pub fn icca_pair_loss(
    x: &[GroupElement],
    y: &[GroupElement],
    v: &AlgebraVector,
    u: &AlgebraVector,
) -> Result<(f64, TimePairs)> {
    check_unit(v)?;
    check_unit(u)?;
    let views = Views::new(x, y, None, LineSearch::default())?;
    views.s.check_same(v.structure())?;
    views.s.check_same(u.structure())?;
    let (times, loss) = views.project(v.coords(), u.coords())?;
    Ok((loss, times))
}

/// Fits one canonical pair on already-centered views.
pub fn fit_first_pair(x: &[GroupElement], y: &[GroupElement], opts: &IccaOptions) -> Result<PairFit> {
    let views = Views::new(x, y, opts.t_bound, opts.search)?;
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("a pair needs at least 3 points, got {n}")));
    }
    if views.spread() < DEGENERATE_SPREAD {
        let regression = TimeRegression {
            slope: 0.0,
            intercept: 0.0,
            r2: 0.0,
            degenerate: true,
        };
        return Ok(PairFit {
            pair: CanonicalPair {
                v: AlgebraVector::basis(&views.s, 0),
                u: AlgebraVector::basis(&views.s, 0),
                regression,
                pair_loss: 0.0,
                converged: true,
                degenerate: true,
            },
            times: TimePairs {
                t_star: vec![0.0; n],
                s_star: vec![0.0; n],
            },
            trace: vec![(0, 0.0)],
        });
    }

    let init_opts = IpcaOptions {
        t_bound: opts.t_bound,
        search: opts.search,
        step: opts.step,
        ..opts.init.clone()
    };
    let v0 = fit_geodesic(x, &init_opts)?.v.into_coords();
    let u0 = fit_geodesic(y, &init_opts)?.v.into_coords();

    let (mut times, mut loss) = views.project(&v0, &u0)?;
    let mut gens = vec![v0, u0];
    let mut trace = vec![(0, loss)];
    let mut best = (gens.clone(), loss);
    let mut converged = false;

    for iter in 1..=opts.max_iter {
        let frozen = times.clone();
        let mut surrogate = |g: &[Vec<f64>]| -> f64 {
            let lv = Line::from_coords(&views.s, &g[0]);
            let lu = Line::from_coords(&views.s, &g[1]);
            views.loss_at(&lv, &lu, &frozen).unwrap_or(f64::INFINITY)
        };
        let fixed = surrogate(&gens);
        let Some(step) = descent_step(&mut surrogate, &gens, fixed, &opts.step) else {
            converged = true;
            break;
        };
        gens = step.point;
        let prev = loss;
        match opts.mode {
            Mode::PaperFaithful => (times, loss) = views.project(&gens[0], &gens[1])?,
            Mode::JointDescent => loss = views.joint_times(&gens[0], &gens[1], &mut times)?,
        }
        trace.push((iter, loss));
        if loss < best.1 {
            best = (gens.clone(), loss);
        }
        if (prev - loss).abs() < opts.tol * prev || loss < crate::ipca::DEGENERATE_LOSS {
            converged = true;
            break;
        }
    }

    if opts.mode == Mode::PaperFaithful {
        gens = best.0;
    }
    let (mut v, mut u) = (gens[0].clone(), gens[1].clone());
    let (mut times, proj_loss) = views.project(&v, &u)?;
    let pair_loss = match opts.mode {
        Mode::PaperFaithful => proj_loss,
        Mode::JointDescent => loss,
    };
    let mut regression = fit_time_regression(&times)?;

    if regression.slope < 0.0 {
        u.iter_mut().for_each(|c| *c = -*c);
        times.s_star.iter_mut().for_each(|s| *s = -*s);
        regression.slope = -regression.slope;
        regression.intercept = -regression.intercept;
    }
    if canonicalize(&mut v) {
        u.iter_mut().for_each(|c| *c = -*c);
        times.t_star.iter_mut().for_each(|t| *t = -*t);
        times.s_star.iter_mut().for_each(|s| *s = -*s);
        regression.intercept = -regression.intercept;
    }

    Ok(PairFit {
        pair: CanonicalPair {
            v: AlgebraVector::new(views.s.clone(), v)?.normalized()?,
            u: AlgebraVector::new(views.s.clone(), u)?.normalized()?,
            regression,
            pair_loss,
            converged,
            degenerate: false,
        },
        times,
        trace,
    })
}

/// Centers both views and fits up to `k` pairs, each on the residuals of
/// the previous ones.
pub fn fit(x: &[GroupElement], y: &[GroupElement], k: usize, opts: &IccaOptions) -> Result<IccaModel> {
    let s = x
        .first()
        .ok_or_else(|| Error::InvalidInput("no points".into()))?
        .structure()
        .clone();
    if k == 0 || k > s.algebra_dim() {
        return Err(Error::InvalidInput(format!("K = {k} must be in 1..={}", s.algebra_dim())));
    }
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let mu_x = intrinsic_mean(x, MEAN_TOL, MEAN_MAX_ITER)?;
    let mu_y = intrinsic_mean(y, MEAN_TOL, MEAN_MAX_ITER)?;
    s.check_same(mu_y.structure())?;
    let mut rx = center(x, &mu_x)?;
    let mut ry = center(y, &mu_y)?;

    let mut model = IccaModel {
        structure: s,
        mu_x,
        mu_y,
        pairs: Vec::with_capacity(k),
        loss_trace: Vec::with_capacity(k),
        mode: opts.mode,
        flags: FitFlags {
            converged: true,
            ..FitFlags::default()
        },
    };
    for idx in 0..k {
        if idx > 0 {
            let energy: f64 = rx.iter().chain(&ry).map(|p| SplitPoint::new(p).norm2().unwrap_or(f64::INFINITY)).sum();
            if energy < DEGENERATE_SPREAD {
                model.flags.truncated = true;
                model.flags.degenerate = true;
                break;
            }
        }
        let pair_opts = IccaOptions {
            init: IpcaOptions {
                seed: opts.init.seed.wrapping_add(idx as u64),
                ..opts.init.clone()
            },
            ..opts.clone()
        };
        let fit = fit_first_pair(&rx, &ry, &pair_opts)?;
        model.flags.converged &= fit.pair.converged;
        model.flags.degenerate |= fit.pair.degenerate;
        if idx + 1 < k {
            rx = residualize(&rx, &fit.pair.v, &fit.times.t_star)?;
            ry = residualize(&ry, &fit.pair.u, &fit.times.s_star)?;
        }
        model.loss_trace.push(fit.trace);
        let degenerate = fit.pair.degenerate;
        model.pairs.push(fit.pair);
        if degenerate {
            model.flags.truncated = model.pairs.len() < k;
            break;
        }
    }
    Ok(model)
}

fn times_along<'a>(
    s: &GroupStructure,
    mu: &GroupElement,
    gens: impl ExactSizeIterator<Item = &'a AlgebraVector>,
    p: &GroupElement,
) -> Result<Vec<f64>> {
    s.check_same(p.structure())?;
    let t_bound = default_t_bound(s);
    let search = LineSearch::default();
    let mut r = mu.inverse().compose(p)?;
    let k = gens.len();
    let mut out = Vec::with_capacity(k);
    for (i, g) in gens.enumerate() {
        let (t, _) = Projector::new(g, t_bound, &search).project(&SplitPoint::new(&r))?;
        if i + 1 < k {
            r = g.scaled(-t).exp().compose(&r)?;
        }
        out.push(t);
    }
    Ok(out)
}

fn center(points: &[GroupElement], mu: &GroupElement) -> Result<Vec<GroupElement>> {
    let inv = mu.inverse();
    points.iter().map(|p| inv.compose(p)).collect()
}

impl IccaModel {
    /// Projection times `t⁽ᵏ⁾` of `x` on each input generator, with
    /// residualization between components.
    pub fn input_times(&self, x: &GroupElement) -> Result<Vec<f64>> {
        times_along(&self.structure, &self.mu_x, self.pairs.iter().map(|p| &p.v), x)
    }

    /// Projection times `s⁽ᵏ⁾` of an output point on each output generator.
    pub fn output_times(&self, y: &GroupElement) -> Result<Vec<f64>> {
        times_along(&self.structure, &self.mu_y, self.pairs.iter().map(|p| &p.u), y)
    }

    /// `ŷ = μ_y · exp(Σₖ ŝ⁽ᵏ⁾(t⁽ᵏ⁾) u⁽ᵏ⁾)`.
    pub fn reconstruct(&self, x: &GroupElement) -> Result<GroupElement> {
        let times = self.input_times(x)?;
        let mut acc = AlgebraVector::zeros(&self.structure);
        for (pair, t) in self.pairs.iter().zip(times) {
            acc = acc.add(&pair.u.scaled(pair.regression.predict(t)))?;
        }
        self.mu_y.compose(&acc.exp())
    }

    pub fn reconstruct_many(&self, xs: &[GroupElement]) -> Result<Vec<GroupElement>> {
        use rayon::prelude::*;
        xs.par_iter().map(|x| self.reconstruct(x)).collect()
    }

    /// Final value of the pair objective for each pair.
    pub fn pair_losses(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.pair_loss).collect()
    }
}

/// Convenience for [`IccaModel::reconstruct`].
pub fn reconstruct(x: &GroupElement, model: &IccaModel) -> Result<GroupElement> {
    model.reconstruct(x)
}
