//! File formats: JSON-lines datasets, JSON model files and CSV exports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cca::{CcaComponent, CcaModel};
use crate::datagen::{ChainSpec, NoiseSpec, PairedDataset};
use crate::error::{Error, Result};
use crate::icca::{CanonicalPair, FitFlags, IccaModel, Mode, TimeRegression};
use crate::lie::{log_map, AlgebraVector, GroupElement, GroupStructure};

pub const FORMAT_VERSION: u32 = 1;

fn check_version(v: u32) -> Result<()> {
    if v != FORMAT_VERSION {
        return Err(Error::InvalidInput(format!("unsupported format_version {v}")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    n: usize,
    structure: GroupStructure,
    base_config: GroupElement,
    actions: Vec<Vec<f64>>,
    noise: NoiseSpec,
    split_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    i: usize,
    x: GroupElement,
    y: GroupElement,
    split: Split,
}

fn split_of(d: &PairedDataset) -> Vec<Split> {
    let mut split = vec![Split::Test; d.x.len()];
    for &i in &d.train_idx {
        split[i] = Split::Train;
    }
    split
}

pub fn write_dataset<W: Write>(d: &PairedDataset, mut w: W) -> Result<()> {
    let header = DatasetHeader {
        format_version: FORMAT_VERSION,
        n: d.x.len(),
        structure: d.spec.structure.clone(),
        base_config: d.spec.base_config.clone(),
        actions: d.spec.actions.iter().map(|a| a.coords().to_vec()).collect(),
        noise: d.noise,
        split_ratio: d.split_ratio,
    };
    serde_json::to_writer(&mut w, &header)?;
    writeln!(w)?;
    for (i, split) in split_of(d).into_iter().enumerate() {
        let rec = PairRecord {
            i,
            x: d.x[i].clone(),
            y: d.y[i].clone(),
            split,
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<PairedDataset> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::InvalidInput("empty dataset file".into()))??;
    let header: DatasetHeader = serde_json::from_str(&first)?;
    check_version(header.format_version)?;
    let actions = header
        .actions
        .into_iter()
        .map(|c| AlgebraVector::new(header.structure.clone(), c))
        .collect::<Result<Vec<_>>>()?;
    let (mut x, mut y) = (Vec::with_capacity(header.n), Vec::with_capacity(header.n));
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord = serde_json::from_str(&line)?;
        if rec.i != x.len() {
            return Err(Error::InvalidInput(format!("record {} out of order", rec.i)));
        }
        header.structure.check_same(rec.x.structure())?;
        header.structure.check_same(rec.y.structure())?;
        match rec.split {
            Split::Train => train_idx.push(rec.i),
            Split::Test => test_idx.push(rec.i),
        }
        x.push(rec.x);
        y.push(rec.y);
    }
    if x.len() != header.n {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: header.n,
        });
    }
    Ok(PairedDataset {
        x,
        y,
        train_idx,
        test_idx,
        spec: ChainSpec {
            structure: header.structure,
            base_config: header.base_config,
            actions,
        },
        noise: header.noise,
        split_ratio: header.split_ratio,
    })
}

pub fn save_dataset(d: &PairedDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(d, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<PairedDataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Algebra coordinates of both views: `i,split,view,c0..c{d-1}`.
pub fn write_dataset_csv<W: Write>(d: &PairedDataset, mut w: W) -> Result<()> {
    let dim = d.spec.structure.algebra_dim();
    let cols: Vec<String> = (0..dim).map(|c| format!("c{c}")).collect();
    writeln!(w, "i,split,view,{}", cols.join(","))?;
    for (i, split) in split_of(d).into_iter().enumerate() {
        for (view, g) in [("x", &d.x[i]), ("y", &d.y[i])] {
            let c: Vec<String> = log_map(g)?.coords().iter().map(f64::to_string).collect();
            writeln!(w, "{i},{},{view},{}", split.as_str(), c.join(","))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecordFile {
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub loss: f64,
    pub converged: bool,
    pub degenerate: bool,
    pub regression_degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IccaFile {
    pub format_version: u32,
    pub mode: Mode,
    pub structure: GroupStructure,
    pub mu_x: GroupElement,
    pub mu_y: GroupElement,
    pub pairs: Vec<PairRecordFile>,
    /// One `[[iteration, loss], …]` list per pair.
    pub loss_trace: Vec<Vec<(usize, f64)>>,
    pub flags: FitFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaComponentFile {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub correlation: f64,
    pub slope: f64,
    pub intercept: f64,
    pub loading: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcaFile {
    pub format_version: u32,
    pub structure: GroupStructure,
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub components: Vec<CcaComponentFile>,
}

/// A fitted model of either method, tagged by `"method"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ModelFile {
    Icca(IccaFile),
    Cca(CcaFile),
}

impl From<&IccaModel> for IccaFile {
    fn from(m: &IccaModel) -> Self {
        IccaFile {
            format_version: FORMAT_VERSION,
            mode: m.mode,
            structure: m.structure.clone(),
            mu_x: m.mu_x.clone(),
            mu_y: m.mu_y.clone(),
            pairs: m
                .pairs
                .iter()
                .map(|p| PairRecordFile {
                    v: p.v.coords().to_vec(),
                    u: p.u.coords().to_vec(),
                    slope: p.regression.slope,
                    intercept: p.regression.intercept,
                    r2: p.regression.r2,
                    loss: p.pair_loss,
                    converged: p.converged,
                    degenerate: p.degenerate,
                    regression_degenerate: p.regression.degenerate,
                })
                .collect(),
            loss_trace: m.loss_trace.clone(),
            flags: m.flags.clone(),
        }
    }
}

impl TryFrom<IccaFile> for IccaModel {
    type Error = Error;

    fn try_from(f: IccaFile) -> Result<Self> {
        check_version(f.format_version)?;
        if f.pairs.is_empty() {
            return Err(Error::InvalidInput("model has no pairs".into()));
        }
        f.structure.check_same(f.mu_x.structure())?;
        f.structure.check_same(f.mu_y.structure())?;
        let pairs = f
            .pairs
            .into_iter()
            .map(|p| {
                let v = AlgebraVector::new(f.structure.clone(), p.v)?;
                let u = AlgebraVector::new(f.structure.clone(), p.u)?;
                crate::stats::check_unit(&v)?;
                crate::stats::check_unit(&u)?;
                Ok(CanonicalPair {
                    v,
                    u,
                    regression: TimeRegression {
                        slope: p.slope,
                        intercept: p.intercept,
                        r2: p.r2,
                        degenerate: p.regression_degenerate,
                    },
                    pair_loss: p.loss,
                    converged: p.converged,
                    degenerate: p.degenerate,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(IccaModel {
            structure: f.structure,
            mu_x: f.mu_x,
            mu_y: f.mu_y,
            pairs,
            loss_trace: f.loss_trace,
            mode: f.mode,
            flags: f.flags,
        })
    }
}

impl CcaFile {
    pub fn new(m: &CcaModel, structure: &GroupStructure) -> Self {
        CcaFile {
            format_version: FORMAT_VERSION,
            structure: structure.clone(),
            mean_x: m.mean_x.clone(),
            mean_y: m.mean_y.clone(),
            components: m
                .components
                .iter()
                .map(|c| CcaComponentFile {
                    a: c.a.clone(),
                    b: c.b.clone(),
                    correlation: c.correlation,
                    slope: c.slope,
                    intercept: c.intercept,
                    loading: c.loading.clone(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<(CcaModel, GroupStructure)> {
        check_version(self.format_version)?;
        let d = self.structure.ambient_dim();
        if self.mean_x.len() != d || self.mean_y.len() != d {
            return Err(Error::StructureMismatch(format!(
                "CCA means have length {} and {}, structure needs {d}",
                self.mean_x.len(),
                self.mean_y.len()
            )));
        }
        let components = self
            .components
            .into_iter()
            .map(|c| {
                if c.a.len() != d || c.b.len() != d || c.loading.len() != d {
                    return Err(Error::LengthMismatch { left: c.a.len(), right: d });
                }
                Ok(CcaComponent {
                    a: c.a,
                    b: c.b,
                    correlation: c.correlation,
                    slope: c.slope,
                    intercept: c.intercept,
                    loading: c.loading,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            CcaModel {
                mean_x: self.mean_x,
                mean_y: self.mean_y,
                components,
            },
            self.structure,
        ))
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// `pair,iteration,loss`, ordered by pair then iteration.
pub fn write_loss_csv<W: Write>(trace: &[Vec<(usize, f64)>], mut w: W) -> Result<()> {
    writeln!(w, "pair,iteration,loss")?;
    for (p, t) in trace.iter().enumerate() {
        for (it, loss) in t {
            writeln!(w, "{p},{it},{loss}")?;
        }
    }
    Ok(())
}
