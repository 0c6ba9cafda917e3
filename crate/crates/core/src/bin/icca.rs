use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use icca::harness::{self, ExperimentConfig, Method};
use icca::icca::Mode;
use icca::io;

/// Intrinsic CCA experiments on a synthetic articulated hand.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one JSON-lines dataset per experiment.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Also export algebra coordinates as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Fit a model on the training split of a dataset.
    Fit {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved model on both splits of a dataset.
    Eval {
        dataset: PathBuf,
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full ICCA vs CCA comparison.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// A one-experiment, 60-pair comparison.
    Smoke {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    experiments: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Time update: paper or joint.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// icca or cca (fit only).
    #[arg(long, default_value = "icca")]
    method: String,
}

impl Common {
    fn config(&self) -> icca::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.experiments {
            cfg.experiments = v;
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = &self.mode {
            cfg.mode = v.parse::<Mode>()?;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        Ok(cfg)
    }
}

enum Outcome {
    Done,
    Unconverged,
}

fn compare(cfg: &ExperimentConfig) -> icca::Result<Outcome> {
    let c = harness::compare(cfg)?;
    harness::write_comparison(&c, &cfg.out)?;
    let a = &c.report.aggregate;
    println!("{:>10} {:>12} {:>12}", "", "train MSE", "test MSE");
    println!("{:>10} {:>12.6e} {:>12.6e}", "ICCA", a.icca_train_mse, a.icca_test_mse);
    println!("{:>10} {:>12.6e} {:>12.6e}", "CCA", a.cca_train_mse, a.cca_test_mse);
    println!(
        "improvement: train {:.2}%  test {:.2}%",
        100.0 * a.train_improvement,
        100.0 * a.test_improvement
    );
    println!(
        "train-test gap: ICCA {:.2}%  CCA {:.2}%",
        100.0 * a.icca_generalization_gap,
        100.0 * a.cca_generalization_gap
    );
    println!("time regression R²: mean {:.4}  min {:.4}", a.mean_time_regression_r2, a.min_time_regression_r2);
    println!("reports written to {}", cfg.out.display());
    Ok(if a.all_converged { Outcome::Done } else { Outcome::Unconverged })
}

fn fit(dataset: &Path, common: &Common) -> icca::Result<Outcome> {
    let cfg = common.config()?;
    let method: Method = common.method.parse()?;
    let data = io::load_dataset(dataset)?;
    let (model, converged) = harness::fit_dataset(&data, method, cfg.k, &cfg.icca_options())?;
    std::fs::create_dir_all(&cfg.out)?;
    io::save_json(&model, &cfg.out.join("model.json"))?;
    if let io::ModelFile::Icca(m) = &model {
        let f = std::fs::File::create(cfg.out.join("loss.csv"))?;
        io::write_loss_csv(&m.loss_trace, std::io::BufWriter::new(f))?;
    }
    println!("model written to {}", cfg.out.join("model.json").display());
    Ok(if converged { Outcome::Done } else { Outcome::Unconverged })
}

fn eval(dataset: &Path, model: &Path, common: &Common) -> icca::Result<Outcome> {
    let cfg = common.config()?;
    let data = io::load_dataset(dataset)?;
    let report = harness::evaluate(&data, &io::load_model(model)?)?;
    std::fs::create_dir_all(&cfg.out)?;
    io::save_json(&report, &cfg.out.join("eval.json"))?;
    for r in &report.rows {
        match r.mse_intrinsic {
            Some(i) => println!("{} {:>5} n={:<5} mse {:.6e}  intrinsic {:.6e}", r.method, r.split, r.n, r.mse, i),
            None => println!("{} {:>5} n={:<5} mse {:.6e}", r.method, r.split, r.n, r.mse),
        }
    }
    Ok(Outcome::Done)
}

fn run(cli: Cli) -> icca::Result<Outcome> {
    match cli.cmd {
        Command::Generate { common, csv } => {
            let cfg = common.config()?;
            for path in harness::generate_all(&cfg, &cfg.out)? {
                if csv {
                    let data = io::load_dataset(&path)?;
                    let f = std::fs::File::create(path.with_extension("csv"))?;
                    io::write_dataset_csv(&data, std::io::BufWriter::new(f))?;
                }
                println!("{}", path.display());
            }
            Ok(Outcome::Done)
        }
        Command::Fit { dataset, common } => fit(&dataset, &common),
        Command::Eval { dataset, model, common } => eval(&dataset, &model, &common),
        Command::Compare { common } => compare(&common.config()?),
        Command::Smoke { common } => {
            let mut cfg = common.config()?;
            cfg.experiments = common.experiments.unwrap_or(1);
            cfg.n = common.n.unwrap_or(60);
            compare(&cfg)
        }
    }
}

/// Help and version requests succeed; malformed arguments are errors.
fn usage_code(e: &clap::Error) -> u8 {
    if e.use_stderr() { 1 } else { 0 }
}

/// Exit status: 0 done, 2 some fit unconverged, 1 any error (bad usage included).
fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return usage_code(&e);
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => 0,
        Ok(Outcome::Unconverged) => {
            eprintln!("warning: some fits did not converge");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(main_with(std::env::args_os()))
}

#[cfg(test)]
mod tests {
    use std::time::Instant;

    use icca::datagen::{ChainSpec, NoiseSpec, PairedDataset};
    use icca::harness::EvalReport;
    use icca::io::ModelFile;
    use icca::lie::{AlgebraVector, GroupElement, GroupStructure};
    use icca::stats::riemannian_distance;

    use super::*;

    fn icca(args: &[&str]) -> u8 {
        main_with(std::iter::once("icca").chain(args.iter().copied()))
    }

    fn p(path: &Path) -> &str {
        path.to_str().unwrap()
    }

    /// Noiseless rank-1 pairs `x = exp(t v0)`, `y = exp(slope · t v0)`.
    fn planted(slope: f64, n: usize) -> PairedDataset {
        let s = GroupStructure::so2(4).unwrap();
        let v0 = AlgebraVector::new(s.clone(), vec![0.5, -0.5, 0.5, 0.5]).unwrap();
        let ts: Vec<f64> = (0..n).map(|i| -0.4 + 0.8 * i as f64 / (n - 1) as f64).collect();
        PairedDataset {
            x: ts.iter().map(|t| v0.scaled(*t).exp()).collect(),
            y: ts.iter().map(|t| v0.scaled(slope * t).exp()).collect(),
            train_idx: (0..n).filter(|i| i % 3 != 2).collect(),
            test_idx: (0..n).filter(|i| i % 3 == 2).collect(),
            spec: ChainSpec {
                base_config: GroupElement::identity(&s),
                structure: s,
                actions: Vec::new(),
            },
            noise: NoiseSpec {
                config_sigma2: 0.0,
                action_sigma: 0.0,
                seed: 0,
            },
            split_ratio: 2.0 / 3.0,
        }
    }

    fn load_eval(path: &Path) -> EvalReport {
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    }

    #[test]
    fn generate_is_deterministic_and_sized() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            assert_eq!(icca(&["generate", "--n", "30", "--experiments", "1", "--csv", "--out", p(d.path())]), 0);
        }
        let file = a.path().join("experiment_00.jsonl");
        let text = std::fs::read_to_string(&file).unwrap();
        assert_eq!(text.lines().count(), 31);
        assert_eq!(text, std::fs::read_to_string(b.path().join("experiment_00.jsonl")).unwrap());
        let d = io::load_dataset(&file).unwrap();
        assert_eq!((d.train_idx.len(), d.test_idx.len()), (20, 10));
        assert!(a.path().join("experiment_00.csv").exists());
        assert!(a.path().join("config.txt").exists());
    }

    #[test]
    fn fit_eval_roundtrip_on_generated_data() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path();
        assert_eq!(icca(&["generate", "--n", "45", "--experiments", "1", "--out", p(out)]), 0);
        let data = out.join("experiment_00.jsonl");

        let icca_dir = out.join("icca");
        let code = icca(&["fit", p(&data), "--out", p(&icca_dir)]);
        assert!(code == 0 || code == 2, "exit {code}");
        let loss = std::fs::read_to_string(icca_dir.join("loss.csv")).unwrap();
        let mut lines = loss.lines();
        assert_eq!(lines.next(), Some("pair,iteration,loss"));
        let keys: Vec<(usize, usize)> = lines
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap())
            })
            .collect();
        assert!(!keys.is_empty());
        assert!(keys.windows(2).all(|w| w[0] < w[1]));

        let model = icca_dir.join("model.json");
        assert!(matches!(io::load_model(&model).unwrap(), ModelFile::Icca(_)));
        let e1 = out.join("e1");
        let e2 = out.join("e2");
        assert_eq!(icca(&["eval", p(&data), p(&model), "--out", p(&e1)]), 0);
        assert_eq!(icca(&["eval", p(&data), p(&model), "--out", p(&e2)]), 0);
        let r1 = std::fs::read(e1.join("eval.json")).unwrap();
        assert_eq!(r1, std::fs::read(e2.join("eval.json")).unwrap());
        let rep = load_eval(&e1.join("eval.json"));
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows.iter().all(|r| r.mse.is_finite() && r.mse_intrinsic.is_some()));

        let cca_dir = out.join("cca");
        assert_eq!(icca(&["fit", p(&data), "--method", "cca", "--out", p(&cca_dir)]), 0);
        match io::load_model(&cca_dir.join("model.json")).unwrap() {
            ModelFile::Cca(m) => assert_eq!(m.components.len(), 1),
            other => panic!("expected a CCA model, got {other:?}"),
        }
        assert_eq!(icca(&["eval", p(&data), p(&cca_dir.join("model.json")), "--out", p(&out.join("e3"))]), 0);
    }

    #[test]
    fn planted_data_is_fit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("planted.jsonl");
        io::save_dataset(&planted(1.0, 60), &data).unwrap();
        let fit_dir = dir.path().join("fit");
        assert_eq!(icca(&["fit", p(&data), "--out", p(&fit_dir)]), 0);
        let ModelFile::Icca(m) = io::load_model(&fit_dir.join("model.json")).unwrap() else {
            panic!("expected an ICCA model");
        };
        assert!(m.pairs[0].loss < 1e-6, "{}", m.pairs[0].loss);
        assert_eq!(icca(&["eval", p(&data), p(&fit_dir.join("model.json")), "--out", p(&fit_dir)]), 0);
        let rep = load_eval(&fit_dir.join("eval.json"));
        let test = rep.rows.iter().find(|r| r.split == "test").unwrap();
        assert!(test.mse < 1e-8 && test.mse_intrinsic.unwrap() < 1e-8, "{test:?}");
    }

    #[test]
    fn mean_predictor_error_is_the_spread_about_the_mean() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("planted.jsonl");
        let data = planted(2.0, 45);
        io::save_dataset(&data, &data_path).unwrap();
        let fit_dir = dir.path().join("fit");
        assert_eq!(icca(&["fit", p(&data_path), "--out", p(&fit_dir)]), 0);

        let ModelFile::Icca(mut m) = io::load_model(&fit_dir.join("model.json")).unwrap() else {
            panic!("expected an ICCA model");
        };
        for pair in &mut m.pairs {
            pair.slope = 0.0;
            pair.intercept = 0.0;
        }
        let mu_y = m.mu_y.clone();
        let flat = dir.path().join("mean_model.json");
        io::save_json(&ModelFile::Icca(m), &flat).unwrap();
        assert_eq!(icca(&["eval", p(&data_path), p(&flat), "--out", p(dir.path())]), 0);
        let rep = load_eval(&dir.path().join("eval.json"));
        for (split, idx) in [("train", &data.train_idx), ("test", &data.test_idx)] {
            let expected = idx
                .iter()
                .map(|&i| riemannian_distance(&mu_y, &data.y[i]).unwrap().powi(2))
                .sum::<f64>()
                / idx.len() as f64;
            let row = rep.rows.iter().find(|r| r.split == split).unwrap();
            assert!((row.mse_intrinsic.unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn smoke_run_is_fast_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let code = icca(&["smoke", "--out", p(dir.path())]);
        assert!(start.elapsed().as_secs_f64() < 60.0);
        assert!(code == 0 || code == 2, "exit {code}");
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report["format_version"], 1);
        let agg = &report["aggregate"];
        let (ci, cc) = (agg["icca_test_mse"].as_f64().unwrap(), agg["cca_test_mse"].as_f64().unwrap());
        assert!((agg["test_improvement"].as_f64().unwrap() - (cc - ci) / cc).abs() < 1e-12);
        let scatter = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
        assert_eq!(scatter.lines().count(), 1 + 40);
        let mse = std::fs::read_to_string(dir.path().join("mse.csv")).unwrap();
        assert!(mse.starts_with("experiment,method,split,mse\n"));
    }

    #[test]
    fn hard_errors_exit_with_one() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.jsonl");
        assert_eq!(icca(&["fit", p(&missing), "--out", p(dir.path())]), 1);
        let usage = |args: &[&str]| Cli::try_parse_from(args).map_or_else(|e| usage_code(&e), |_| 0);
        assert_eq!(usage(&["icca", "fit", "--frobnicate"]), 1);
        assert_eq!(usage(&["icca", "--help"]), 0);
        assert_eq!(icca(&["smoke", "--mode", "sideways", "--out", p(dir.path())]), 1);
        assert_eq!(icca(&["generate", "--n", "30", "--experiments", "1", "--out", p(dir.path())]), 0);
        let data = dir.path().join("experiment_00.jsonl");
        assert_eq!(icca(&["fit", p(&data), "--method", "pls", "--out", p(dir.path())]), 1);

        // model of one structure evaluated on data of another
        let other = dir.path().join("planted.jsonl");
        io::save_dataset(&planted(1.0, 30), &other).unwrap();
        let fit_dir = dir.path().join("fit");
        assert_eq!(icca(&["fit", p(&other), "--out", p(&fit_dir)]), 0);
        assert_eq!(icca(&["eval", p(&data), p(&fit_dir.join("model.json")), "--out", p(dir.path())]), 1);
    }

    #[test]
    fn config_file_with_flag_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.conf");
        std::fs::write(&cfg, "# tiny\nexperiments = 1\nn = 24\nseed = 5\n").unwrap();
        let out = dir.path().join("g");
        assert_eq!(icca(&["generate", "--config", p(&cfg), "--n", "36", "--out", p(&out)]), 0);
        let d = io::load_dataset(&out.join("experiment_00.jsonl")).unwrap();
        assert_eq!(d.x.len(), 36);
        let written = std::fs::read_to_string(out.join("config.txt")).unwrap();
        assert!(written.contains("seed = 5") && written.contains("n = 36"));
    }
}
