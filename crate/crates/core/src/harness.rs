//! Experiment runner: generate paired datasets, fit ICCA and the Euclidean
//! CCA baseline, evaluate both and write reports.
//!
//! Everything written by [`write_comparison`] is a deterministic function of
//! the configuration. Wall-clock timings go to a separate `timing.json`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{fit_euclidean_cca, CcaModel};
use crate::datagen::{self, NoiseSpec, PairedDataset};
use crate::error::{Error, Result};
use crate::icca::{self, IccaModel, IccaOptions, Mode};
use crate::io::{self, FORMAT_VERSION};
use crate::lie::{GroupElement, MANIFOLD_TOL};
use crate::metrics::{mse_ambient, mse_groups};

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;
/// Block error above which a baseline reconstruction counts as off-manifold.
pub const OFF_MANIFOLD_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub experiments: usize,
    /// Pairs per experiment.
    pub n: usize,
    /// Number of canonical pairs.
    pub k: usize,
    pub mode: Mode,
    /// Train fraction.
    pub split_ratio: f64,
    pub config_sigma2: f64,
    pub action_sigma: f64,
    pub horizon: usize,
    pub action_std: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Output directory; not part of the serialized report.
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            experiments: 10,
            n: 1500,
            k: 1,
            mode: Mode::PaperFaithful,
            split_ratio: datagen::SPLIT_RATIO,
            config_sigma2: 0.02,
            action_sigma: 0.01,
            horizon: datagen::HORIZON,
            action_std: datagen::ACTION_STD,
            tol: 1e-6,
            max_iter: 200,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {value:?} for {key}")))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "experiments" => self.experiments = parse(key, value)?,
            "n" => self.n = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "split_ratio" => self.split_ratio = parse(key, value)?,
            "config_sigma2" => self.config_sigma2 = parse(key, value)?,
            "action_sigma" => self.action_sigma = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "action_std" => self.action_std = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::InvalidInput(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    /// The configuration in the format read by [`Self::apply_text`].
    pub fn to_text(&self) -> String {
        let mode = match self.mode {
            Mode::PaperFaithful => "paper",
            Mode::JointDescent => "joint",
        };
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "experiments = {}", self.experiments);
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "split_ratio = {}", self.split_ratio);
        let _ = writeln!(s, "config_sigma2 = {}", self.config_sigma2);
        let _ = writeln!(s, "action_sigma = {}", self.action_sigma);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "action_std = {}", self.action_std);
        let _ = writeln!(s, "tol = {}", self.tol);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiments == 0 {
            return Err(Error::InvalidInput("experiments must be at least 1".into()));
        }
        if self.n < 6 {
            return Err(Error::InvalidInput(format!("n = {} is too small", self.n)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput("tol and max_iter must be positive".into()));
        }
        Ok(())
    }

    pub fn icca_options(&self) -> IccaOptions {
        IccaOptions {
            mode: self.mode,
            tol: self.tol,
            max_iter: self.max_iter,
            ..IccaOptions::default()
        }
    }

    pub fn chain_spec(&self) -> datagen::ChainSpec {
        datagen::make_spec(crate::lie::GroupStructure::hand(), self.horizon, self.action_std, self.seed)
    }

    pub fn noise(&self, experiment: usize) -> NoiseSpec {
        NoiseSpec {
            config_sigma2: self.config_sigma2,
            action_sigma: self.action_sigma,
            seed: experiment_seed(self.seed, experiment),
        }
    }

    pub fn dataset(&self, experiment: usize) -> Result<PairedDataset> {
        datagen::generate(&self.chain_spec(), &self.noise(experiment), self.n, self.split_ratio)
    }
}

/// Noise seed of experiment `e`, decorrelated from the base seed.
pub fn experiment_seed(seed: u64, e: usize) -> u64 {
    seed ^ (e as u64 + 1).wrapping_mul(SEED_STRIDE)
}

/// Train/test errors of both methods on one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub icca_train_mse: f64,
    pub icca_test_mse: f64,
    pub icca_train_mse_intrinsic: f64,
    pub icca_test_mse_intrinsic: f64,
    pub cca_train_mse: f64,
    pub cca_test_mse: f64,
    pub train_improvement: f64,
    pub test_improvement: f64,
    pub icca_generalization_gap: f64,
    pub cca_generalization_gap: f64,
    pub time_regression_r2: f64,
    pub slope: f64,
    pub intercept: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ICCA test reconstructions failing the manifold check at 1e-9.
    pub icca_test_off_manifold: usize,
    /// Baseline test reconstructions with a block error above 1e-3.
    pub cca_test_off_manifold: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub icca_train_mse: f64,
    pub icca_test_mse: f64,
    pub icca_train_mse_intrinsic: f64,
    pub icca_test_mse_intrinsic: f64,
    pub cca_train_mse: f64,
    pub cca_test_mse: f64,
    pub train_improvement: f64,
    pub test_improvement: f64,
    pub icca_generalization_gap: f64,
    pub cca_generalization_gap: f64,
    pub mean_time_regression_r2: f64,
    pub min_time_regression_r2: f64,
    pub all_converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    /// Cross-method MSEs are per-entry errors of the flattened block
    /// matrices; `*_intrinsic` columns are mean squared geodesic distances.
    pub metric: String,
    pub experiments: Vec<ExperimentRow>,
    pub aggregate: Aggregate,
}

/// Everything one experiment produces.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub row: ExperimentRow,
    pub icca: IccaModel,
    pub cca: CcaModel,
    /// `(dataset index, t*, s*)` of every training pair on the first pair.
    pub scatter: Vec<(usize, f64, f64)>,
    pub seconds: f64,
}

/// `(cca − icca) / cca`.
pub fn relative_improvement(cca: f64, icca: f64) -> f64 {
    (cca - icca) / cca
}

/// `|test − train| / train`.
pub fn generalization_gap(train: f64, test: f64) -> f64 {
    (test - train).abs() / train
}

fn embed(points: &[GroupElement]) -> Vec<Vec<f64>> {
    points.iter().map(GroupElement::embedding).collect()
}

/// Largest orthogonality or determinant error over the blocks of a flat
/// ambient vector laid out like `structure`'s embedding.
pub fn ambient_block_error(structure: &crate::lie::GroupStructure, flat: &[f64]) -> f64 {
    use crate::lie::BlockKind;
    use nalgebra::{Matrix2, Matrix3};
    let mut off = 0;
    let mut worst: f64 = 0.0;
    for kind in structure.blocks() {
        let d = kind.ambient_dim();
        let e = &flat[off..off + d];
        let err = match kind {
            BlockKind::So2 => {
                let m = Matrix2::from_row_slice(e);
                let orth = (m.transpose() * m - Matrix2::identity()).abs().max();
                orth.max((m.determinant() - 1.0).abs())
            }
            BlockKind::So3 => {
                let m = Matrix3::from_row_slice(e);
                let orth = (m.transpose() * m - Matrix3::identity()).abs().max();
                orth.max((m.determinant() - 1.0).abs())
            }
        };
        worst = worst.max(err);
        off += d;
    }
    worst
}

pub fn run_on_dataset(
    data: &PairedDataset,
    experiment: usize,
    k: usize,
    opts: &IccaOptions,
) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let (xtr, ytr) = data.train();
    let (xte, yte) = data.test();

    let model = icca::fit(&xtr, &ytr, k, opts)?;
    let icca_train = mse_groups(&model.reconstruct_many(&xtr)?, &ytr)?;
    let icca_test_pred = model.reconstruct_many(&xte)?;
    let icca_test = mse_groups(&icca_test_pred, &yte)?;

    let (extr, eytr) = (embed(&xtr), embed(&ytr));
    let cca = fit_euclidean_cca(&extr, &eytr, k)?;
    let cca_train = mse_ambient(&cca.predict_many(&extr)?, &ytr)?;
    let cca_test_pred = cca.predict_many(&embed(&xte))?;
    let cca_test = mse_ambient(&cca_test_pred, &yte)?;

    let structure = data.structure();
    let scatter = data
        .train_idx
        .par_iter()
        .zip(xtr.par_iter().zip(&ytr))
        .map(|(&i, (x, y))| Ok((i, model.input_times(x)?[0], model.output_times(y)?[0])))
        .collect::<Result<Vec<_>>>()?;

    let trace = &model.loss_trace[0];
    let first = &model.pairs[0];
    let row = ExperimentRow {
        experiment,
        seed: data.noise.seed,
        n_train: xtr.len(),
        n_test: xte.len(),
        icca_train_mse: icca_train.ambient,
        icca_test_mse: icca_test.ambient,
        icca_train_mse_intrinsic: icca_train.intrinsic,
        icca_test_mse_intrinsic: icca_test.intrinsic,
        cca_train_mse: cca_train,
        cca_test_mse: cca_test,
        train_improvement: relative_improvement(cca_train, icca_train.ambient),
        test_improvement: relative_improvement(cca_test, icca_test.ambient),
        icca_generalization_gap: generalization_gap(icca_train.ambient, icca_test.ambient),
        cca_generalization_gap: generalization_gap(cca_train, cca_test),
        time_regression_r2: first.regression.r2,
        slope: first.regression.slope,
        intercept: first.regression.intercept,
        initial_loss: trace[0].1,
        final_loss: first.pair_loss,
        iterations: trace.last().map_or(0, |t| t.0),
        converged: model.flags.converged,
        icca_test_off_manifold: icca_test_pred.iter().filter(|g| !g.is_valid(MANIFOLD_TOL)).count(),
        cca_test_off_manifold: cca_test_pred
            .iter()
            .filter(|p| ambient_block_error(structure, p) > OFF_MANIFOLD_TOL)
            .count(),
    };
    Ok(ExperimentOutcome {
        row,
        icca: model,
        cca,
        scatter,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(cfg: &ExperimentConfig, experiment: usize) -> Result<ExperimentOutcome> {
    run_on_dataset(&cfg.dataset(experiment)?, experiment, cfg.k, &cfg.icca_options())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn aggregate(rows: &[ExperimentRow]) -> Aggregate {
    let avg = |f: fn(&ExperimentRow) -> f64| mean(rows.iter().map(f));
    let icca_train = avg(|r| r.icca_train_mse);
    let icca_test = avg(|r| r.icca_test_mse);
    let cca_train = avg(|r| r.cca_train_mse);
    let cca_test = avg(|r| r.cca_test_mse);
    Aggregate {
        icca_train_mse: icca_train,
        icca_test_mse: icca_test,
        icca_train_mse_intrinsic: avg(|r| r.icca_train_mse_intrinsic),
        icca_test_mse_intrinsic: avg(|r| r.icca_test_mse_intrinsic),
        cca_train_mse: cca_train,
        cca_test_mse: cca_test,
        train_improvement: relative_improvement(cca_train, icca_train),
        test_improvement: relative_improvement(cca_test, icca_test),
        icca_generalization_gap: generalization_gap(icca_train, icca_test),
        cca_generalization_gap: generalization_gap(cca_train, cca_test),
        mean_time_regression_r2: avg(|r| r.time_regression_r2),
        min_time_regression_r2: rows.iter().map(|r| r.time_regression_r2).fold(f64::INFINITY, f64::min),
        all_converged: rows.iter().all(|r| r.converged),
    }
}

/// Result of [`compare`]: the report plus per-experiment artifacts.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub outcomes: Vec<ExperimentOutcome>,
}

/// Runs every experiment (concurrently) and aggregates the results.
pub fn compare(cfg: &ExperimentConfig) -> Result<Comparison> {
    cfg.validate()?;
    let outcomes = (0..cfg.experiments)
        .into_par_iter()
        .map(|e| run_experiment(cfg, e))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ExperimentRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    Ok(Comparison {
        report: ComparisonReport {
            format_version: FORMAT_VERSION,
            config: cfg.clone(),
            metric: "ambient per-entry MSE; *_intrinsic = mean squared Riemannian distance".into(),
            aggregate: aggregate(&rows),
            experiments: rows,
        },
        outcomes,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Writes `report.json`, `mse.csv`, `scatter.csv`, `loss.csv` and
/// `timing.json` into `dir`.
pub fn write_comparison(c: &Comparison, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    io::save_json(&c.report, &dir.join("report.json"))?;

    let mut w = create(&dir.join("mse.csv"))?;
    writeln!(w, "experiment,method,split,mse")?;
    for r in &c.report.experiments {
        let e = r.experiment;
        writeln!(w, "{e},icca,train,{}", r.icca_train_mse)?;
        writeln!(w, "{e},icca,test,{}", r.icca_test_mse)?;
        writeln!(w, "{e},cca,train,{}", r.cca_train_mse)?;
        writeln!(w, "{e},cca,test,{}", r.cca_test_mse)?;
        writeln!(w, "{e},icca_intrinsic,train,{}", r.icca_train_mse_intrinsic)?;
        writeln!(w, "{e},icca_intrinsic,test,{}", r.icca_test_mse_intrinsic)?;
    }
    w.flush()?;

    let mut w = create(&dir.join("scatter.csv"))?;
    writeln!(w, "experiment,i,t_star,s_star")?;
    for o in &c.outcomes {
        for (i, t, s) in &o.scatter {
            writeln!(w, "{},{i},{t},{s}", o.row.experiment)?;
        }
    }
    w.flush()?;

    let mut w = create(&dir.join("loss.csv"))?;
    writeln!(w, "experiment,pair,iteration,loss")?;
    for o in &c.outcomes {
        for (p, trace) in o.icca.loss_trace.iter().enumerate() {
            for (it, loss) in trace {
                writeln!(w, "{},{p},{it},{loss}", o.row.experiment)?;
            }
        }
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Timing {
        experiment: usize,
        seconds: f64,
    }
    let timing: Vec<Timing> = c
        .outcomes
        .iter()
        .map(|o| Timing {
            experiment: o.row.experiment,
            seconds: o.seconds,
        })
        .collect();
    io::save_json(&timing, &dir.join("timing.json"))
}

/// File name of experiment `e`'s dataset.
pub fn dataset_file(e: usize) -> String {
    format!("experiment_{e:02}.jsonl")
}

/// Writes one dataset per experiment plus the effective `config.txt`.
pub fn generate_all(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    (0..cfg.experiments)
        .into_par_iter()
        .map(|e| {
            let path = dir.join(dataset_file(e));
            io::save_dataset(&cfg.dataset(e)?, &path)?;
            Ok(path)
        })
        .collect()
}

/// Per-split errors of a saved model on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub split: String,
    pub n: usize,
    pub mse: f64,
    /// Mean squared Riemannian distance; ICCA only.
    pub mse_intrinsic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub rows: Vec<EvalRow>,
}

pub fn evaluate(data: &PairedDataset, model: &io::ModelFile) -> Result<EvalReport> {
    let splits = [("train", data.train()), ("test", data.test())];
    let mut rows = Vec::new();
    match model {
        io::ModelFile::Icca(f) => {
            let m: IccaModel = f.clone().try_into()?;
            m.structure.check_same(data.structure())?;
            for (name, (x, y)) in &splits {
                if x.is_empty() {
                    continue;
                }
                let e = mse_groups(&m.reconstruct_many(x)?, y)?;
                rows.push(EvalRow {
                    method: "icca".into(),
                    split: (*name).into(),
                    n: x.len(),
                    mse: e.ambient,
                    mse_intrinsic: Some(e.intrinsic),
                });
            }
        }
        io::ModelFile::Cca(f) => {
            let (m, s) = f.clone().into_model()?;
            s.check_same(data.structure())?;
            for (name, (x, y)) in &splits {
                if x.is_empty() {
                    continue;
                }
                rows.push(EvalRow {
                    method: "cca".into(),
                    split: (*name).into(),
                    n: x.len(),
                    mse: mse_ambient(&m.predict_many(&embed(x))?, y)?,
                    mse_intrinsic: None,
                });
            }
        }
    }
    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        rows,
    })
}

/// Which model `fit` produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Icca,
    Cca,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icca" => Ok(Method::Icca),
            "cca" => Ok(Method::Cca),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

/// Fits on the training split; returns the model file and whether the fit
/// converged.
pub fn fit_dataset(data: &PairedDataset, method: Method, k: usize, opts: &IccaOptions) -> Result<(io::ModelFile, bool)> {
    let (x, y) = data.train();
    match method {
        Method::Icca => {
            let m = icca::fit(&x, &y, k, opts)?;
            let converged = m.flags.converged;
            Ok((io::ModelFile::Icca((&m).into()), converged))
        }
        Method::Cca => {
            let m = fit_euclidean_cca(&embed(&x), &embed(&y), k)?;
            Ok((io::ModelFile::Cca(io::CcaFile::new(&m, data.structure())), true))
        }
    }
}
