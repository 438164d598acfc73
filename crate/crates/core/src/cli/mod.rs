//! The `triplesurv` command line.
//!
//! Subcommands:
//!
//! * `prepare`: split one CSV 3:1:1 and write the pieces plus the grid.
//! * `train`: fit a model; writes `checkpoint.txt`, `history.csv`,
//!   `config.resolved.txt`, `grid.txt` (and `test.csv` when it split the
//!   data itself).
//! * `evaluate`: score a checkpoint on a CSV; writes `report.csv`,
//!   `tdauc.csv`, `brier.csv` and `tdauc.svg`.
//! * `ablate`: train the six loss combinations on one split and write
//!   `ablation.csv`.
//! * `synth`: write a synthetic dataset (`synth.csv`) and its oracle risks
//!   (`oracle.txt`).
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a configuration
//! or input validation failure.

pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    build_time_grid, load_csv_raw, split_dataset, write_csv, Standardizer, SurvivalDataset, TimeGrid,
};
use crate::error::{Error, Result};
use crate::losses::{LossWeights, PairwiseLoss};
use crate::matrix::Matrix;
use crate::metrics::{default_time_grid, evaluate, select_cutoff, EvalReport};
use crate::model::{predict_pmfs, predict_risk, read_checkpoint, write_checkpoint, Checkpoint, Pmf};
use crate::synth::{generate, oracle_text};
use crate::training::{fit, history_csv, FitResult};

pub use config::{ExperimentConfig, RawConfig};

#[derive(Debug, Parser)]
#[command(name = "triplesurv", version, about = "Discrete-time survival models with the TripleSurv loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a CSV into train/validation/test files and write the time grid.
    Prepare(CommonArgs),
    /// Train a model and write checkpoint, history, resolved config and grid.
    Train(CommonArgs),
    /// Evaluate a checkpoint on a CSV (C-index, IBS, TDAUC, HR).
    Evaluate(EvalArgs),
    /// Train the six loss-component combinations and tabulate test metrics.
    Ablate(CommonArgs),
    /// Generate a synthetic censored dataset with known latent risk.
    Synth(CommonArgs),
}

/// Flags shared by every subcommand. Bins are 1-based throughout.
#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Flat key=value config file ('#' comments).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV (training data, or the single file to split).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub time_col: Option<String>,
    #[arg(long)]
    pub event_col: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any config key; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint file written by `train`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Grid file written by `train` (defaults to grid.txt beside the checkpoint).
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

impl CommonArgs {
    /// Defaults, then the config file, then flags, then `--set`.
    pub fn resolve(&self) -> Result<RawConfig> {
        let mut raw = RawConfig::default();
        if let Some(p) = &self.config {
            raw.merge_file(p)?;
        }
        let flags: [(&str, Option<String>); 5] = [
            ("data", self.data.as_ref().map(|p| p.display().to_string())),
            ("time_col", self.time_col.clone()),
            ("event_col", self.event_col.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("seed", self.seed.map(|s| s.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                raw.set(k, &v)?;
            }
        }
        for a in &self.set {
            raw.assign(a)?;
        }
        Ok(raw)
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::MissingColumn(_)
        | Error::Parse { .. }
        | Error::Csv(_)
        | Error::DegenerateGrid(_)
        | Error::InvalidBounds { .. } => 2,
        _ => 1,
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Prepare(a) => a.resolve().and_then(|r| cmd_prepare(&r)),
        Command::Train(a) => a.resolve().and_then(|r| cmd_train(&r).map(|_| ())),
        Command::Evaluate(a) => a.common.resolve().and_then(|mut r| {
            if let Some(c) = &a.checkpoint {
                r.set("checkpoint", &c.display().to_string())?;
            }
            if let Some(g) = &a.grid {
                r.set("grid", &g.display().to_string())?;
            }
            cmd_evaluate(&r).map(|_| ())
        }),
        Command::Ablate(a) => a.resolve().and_then(|r| cmd_ablate(&r).map(|_| ())),
        Command::Synth(a) => a.resolve().and_then(|r| cmd_synth(&r)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn require_file(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| Error::Config(format!("`{key}` is required")))?;
    if !p.is_file() {
        return Err(Error::Config(format!("`{key}`: no such file {}", p.display())));
    }
    Ok(p)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

/// Raw (unscaled) train/validation/test data.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: SurvivalDataset,
    pub val: SurvivalDataset,
    pub test: Option<SurvivalDataset>,
    /// Whether the test set was carved out of `data` here.
    pub split_here: bool,
}

pub fn load_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    let data = require_file(&cfg.data, "data")?;
    let load = |p: &Path| load_csv_raw(p, &cfg.time_col, &cfg.event_col);
    let splits = match &cfg.val_data {
        Some(_) => {
            let test = match &cfg.test_data {
                Some(_) => Some(load(&require_file(&cfg.test_data, "test_data")?)?),
                None => None,
            };
            Splits {
                train: load(&data)?,
                val: load(&require_file(&cfg.val_data, "val_data")?)?,
                test,
                split_here: false,
            }
        }
        None => {
            let (train, val, test) = split_dataset(&load(&data)?, cfg.split, cfg.seed)?;
            Splits {
                train,
                val,
                test: Some(test),
                split_here: true,
            }
        }
    };
    for other in std::iter::once(&splits.val).chain(&splits.test) {
        if other.feature_names != splits.train.feature_names {
            return Err(Error::Config("feature columns differ between data files".into()));
        }
    }
    Ok(splits)
}

/// Standardized, gridded training and validation data. Scaler and grid are
/// fitted on the training part only.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: SurvivalDataset,
    pub val: SurvivalDataset,
    pub grid: TimeGrid,
    pub scaler: Standardizer,
}

pub fn prepare(splits: &Splits, k_bins: usize) -> Result<Prepared> {
    let mut train = splits.train.clone();
    let mut val = splits.val.clone();
    let scaler = Standardizer::fit(&train.samples)?;
    scaler.apply(&mut train.samples)?;
    scaler.apply(&mut val.samples)?;
    train.scaler = Some(scaler.clone());
    val.scaler = Some(scaler.clone());
    let grid = build_time_grid(&train, k_bins)?;
    train.bin(&grid);
    val.bin(&grid);
    Ok(Prepared {
        train,
        val,
        grid,
        scaler,
    })
}

fn features(ds: &SurvivalDataset) -> Result<Matrix> {
    let rows: Vec<&[f64]> = ds.samples.iter().map(|s| s.features.as_slice()).collect();
    Matrix::from_rows(&rows)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub fit: FitResult,
    pub grid: TimeGrid,
}

/// Fit on prepared data and pick the high/low risk cutoff on the training
/// set.
pub fn train_model(cfg: &ExperimentConfig, data: &Prepared, weights: &LossWeights) -> Result<TrainOutcome> {
    let model = cfg.model_config(data.train.n_features())?;
    let result = fit(&data.train, &data.val, &model, weights, &cfg.train)?;
    let risks: Vec<f64> = predict_pmfs(&result.best_params, &features(&data.train)?)?
        .iter()
        .map(predict_risk)
        .collect();
    let t_norm: Vec<f64> = data.train.samples.iter().map(|s| data.grid.normalize(s.time)).collect();
    let cutoff = select_cutoff(&risks, &t_norm, &data.train.events()).ok();
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: result.best_params.clone(),
            feature_names: data.train.feature_names.clone(),
            scaler: Some(data.scaler.clone()),
            risk_cutoff: cutoff,
        },
        fit: result,
        grid: data.grid.clone(),
    })
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn write_train_artifacts(dir: &Path, raw: &RawConfig, outcome: &TrainOutcome) -> Result<()> {
    create_out(dir)?;
    write_checkpoint(dir.join("checkpoint.txt"), &outcome.checkpoint)?;
    write_text(dir.join("history.csv"), &history_csv(&outcome.fit.history))?;
    write_text(dir.join("config.resolved.txt"), &raw.to_text())?;
    write_text(dir.join("grid.txt"), &outcome.grid.to_text())?;
    Ok(())
}

pub fn cmd_prepare(raw: &RawConfig) -> Result<()> {
    let cfg = ExperimentConfig::from_raw(raw)?;
    let splits = load_splits(&cfg)?;
    let grid = build_time_grid(&splits.train, cfg.k_bins)?;
    create_out(&cfg.out)?;
    let (tc, ec) = (&cfg.time_col, &cfg.event_col);
    write_csv(&splits.train, cfg.out.join("train.csv"), tc, ec)?;
    write_csv(&splits.val, cfg.out.join("val.csv"), tc, ec)?;
    if let Some(test) = &splits.test {
        write_csv(test, cfg.out.join("test.csv"), tc, ec)?;
    }
    write_text(cfg.out.join("grid.txt"), &grid.to_text())?;
    write_text(cfg.out.join("config.resolved.txt"), &raw.to_text())?;
    for (name, ds) in [("train", Some(&splits.train)), ("val", Some(&splits.val)), ("test", splits.test.as_ref())] {
        if let Some(ds) = ds {
            println!("{name}: {} samples, censor rate {:.3}", ds.len(), ds.censor_rate());
        }
    }
    Ok(())
}

pub fn cmd_train(raw: &RawConfig) -> Result<TrainOutcome> {
    let cfg = ExperimentConfig::from_raw(raw)?;
    let splits = load_splits(&cfg)?;
    let data = prepare(&splits, cfg.k_bins)?;
    let outcome = train_model(&cfg, &data, &cfg.weights)?;
    write_train_artifacts(&cfg.out, raw, &outcome)?;
    if let (true, Some(test)) = (splits.split_here, &splits.test) {
        write_csv(test, cfg.out.join("test.csv"), &cfg.time_col, &cfg.event_col)?;
    }
    if let Some(dropped) = outcome.fit.history.first().map(|r| r.dropped).filter(|&d| d > 0) {
        eprintln!("note: dropped {dropped} sample(s) per epoch in a size-1 final batch");
    }
    match (outcome.fit.best_epoch, outcome.fit.best_c_index) {
        (Some(e), Some(c)) => println!("best validation C-index {c:.4} at epoch {e}"),
        _ => println!("no epochs run; wrote initial parameters"),
    }
    Ok(outcome)
}

/// Score a checkpoint on raw (unscaled) data.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, grid: &TimeGrid, data: &SurvivalDataset) -> Result<EvalReport> {
    let k = ckpt.params.config.k_bins;
    if grid.k_bins != k {
        return Err(Error::Config(format!(
            "grid has {} bins but the checkpoint expects {k}",
            grid.k_bins
        )));
    }
    if !ckpt.feature_names.is_empty() && ckpt.feature_names != data.feature_names {
        return Err(Error::Config(format!(
            "feature columns {:?} do not match the checkpoint's {:?}",
            data.feature_names, ckpt.feature_names
        )));
    }
    let mut ds = data.clone();
    if let Some(sc) = &ckpt.scaler {
        sc.apply(&mut ds.samples)?;
    }
    let pmfs: Vec<Pmf> = predict_pmfs(&ckpt.params, &features(&ds)?)?;
    let scores: Vec<f64> = pmfs.iter().map(predict_risk).collect();
    let t_norm: Vec<f64> = ds.samples.iter().map(|s| grid.normalize(s.time)).collect();
    let t_grid = default_time_grid(k, grid.normalized_t_max());
    evaluate(&pmfs, &scores, &t_norm, &ds.events(), &t_grid, ckpt.risk_cutoff)
}

fn write_eval_artifacts(dir: &Path, model: &str, report: &EvalReport) -> Result<()> {
    create_out(dir)?;
    write_text(dir.join("report.csv"), &report.report_csv(model))?;
    write_text(dir.join("tdauc.csv"), &report.tdauc_csv())?;
    write_text(dir.join("brier.csv"), &report.brier_csv())?;
    let svg = plot::line_plot_svg(&report.tdauc_curve, "Time-dependent AUC", "normalized time", "TDAUC");
    write_text(dir.join("tdauc.svg"), &svg)?;
    Ok(())
}

pub fn cmd_evaluate(raw: &RawConfig) -> Result<EvalReport> {
    let cfg = ExperimentConfig::from_raw(raw)?;
    let ckpt_path = require_file(&cfg.checkpoint, "checkpoint")?;
    let grid_path = cfg
        .grid
        .clone()
        .unwrap_or_else(|| ckpt_path.with_file_name("grid.txt"));
    let grid_path = require_file(&Some(grid_path), "grid")?;
    let data = require_file(&cfg.data, "data")?;
    let ckpt = read_checkpoint(&ckpt_path)?;
    let grid = TimeGrid::from_text(&std::fs::read_to_string(&grid_path)?)?;
    let ds = load_csv_raw(&data, &cfg.time_col, &cfg.event_col)?;
    let report = evaluate_checkpoint(&ckpt, &grid, &ds)?;
    let model = format!("triplesurv-{}", ckpt.params.config.head.as_str());
    write_eval_artifacts(&cfg.out, &model, &report)?;
    print!("{}", report.report_csv(&model));
    Ok(report)
}

/// One ablation configuration: which loss components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationRow {
    pub name: &'static str,
    pub mle: bool,
    pub rank: bool,
    pub tapr: bool,
    pub calibration: bool,
}

const fn row(name: &'static str, mle: bool, rank: bool, tapr: bool, calibration: bool) -> AblationRow {
    AblationRow {
        name,
        mle,
        rank,
        tapr,
        calibration,
    }
}

pub const ABLATION_ROWS: [AblationRow; 6] = [
    row("mle", true, false, false, false),
    row("rank", false, true, false, false),
    row("tapr", false, false, true, false),
    row("mle_rank", true, true, false, false),
    row("mle_tapr", true, false, true, false),
    row("mle_tapr_cal", true, false, true, true),
];

impl AblationRow {
    /// `base` with the excluded components' weights set to zero.
    pub fn weights(&self, base: &LossWeights) -> LossWeights {
        let pair = self.rank || self.tapr;
        LossWeights {
            alpha: if self.mle { base.alpha } else { 0.0 },
            beta: if pair { base.beta } else { 0.0 },
            gamma: if self.calibration { base.gamma } else { 0.0 },
            pairwise: if self.rank { PairwiseLoss::Rank } else { PairwiseLoss::Tapr },
            ..base.clone()
        }
    }

    /// `--set` overrides that make `train` reproduce this row.
    pub fn overrides(&self, base: &LossWeights) -> Vec<String> {
        let w = self.weights(base);
        vec![
            format!("alpha={}", w.alpha),
            format!("beta={}", w.beta),
            format!("gamma={}", w.gamma),
            format!("pairwise={}", w.pairwise.as_str()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub row: AblationRow,
    pub report: EvalReport,
    pub best_epoch: Option<usize>,
}

pub const ABLATION_HEADER: &str = "row,mle,rank,tapr,calibration,c_index,ibs,m_tdauc,best_epoch";

pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut s = format!("{ABLATION_HEADER}\n");
    for r in results {
        let b = |x: bool| x as u8;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.row.name,
            b(r.row.mle),
            b(r.row.rank),
            b(r.row.tapr),
            b(r.row.calibration),
            r.report.c_index,
            r.report.ibs,
            r.report.m_tdauc,
            r.best_epoch.map(|e| e.to_string()).unwrap_or_default()
        );
    }
    s
}

/// Train every row on one shared split and score it on the test part.
/// Each row's training artifacts go to `<out>/<row>/`.
pub fn cmd_ablate(raw: &RawConfig) -> Result<Vec<AblationResult>> {
    let cfg = ExperimentConfig::from_raw(raw)?;
    let splits = load_splits(&cfg)?;
    let test = splits
        .test
        .clone()
        .ok_or_else(|| Error::Config("ablate needs a test set (single `data` file or `test_data`)".into()))?;
    let data = prepare(&splits, cfg.k_bins)?;
    create_out(&cfg.out)?;
    let mut results = Vec::new();
    for r in ABLATION_ROWS {
        let mut row_raw = raw.clone();
        for o in r.overrides(&cfg.weights) {
            row_raw.assign(&o)?;
        }
        let row_cfg = ExperimentConfig::from_raw(&row_raw)?;
        let outcome = train_model(&row_cfg, &data, &row_cfg.weights)?;
        write_train_artifacts(&cfg.out.join(r.name), &row_raw, &outcome)?;
        let report = evaluate_checkpoint(&outcome.checkpoint, &outcome.grid, &test)?;
        println!("{:<14} c_index={:.4} ibs={:.4} m_tdauc={:.4}", r.name, report.c_index, report.ibs, report.m_tdauc);
        results.push(AblationResult {
            row: r,
            report,
            best_epoch: outcome.fit.best_epoch,
        });
    }
    write_text(cfg.out.join("ablation.csv"), &ablation_csv(&results))?;
    write_text(cfg.out.join("config.resolved.txt"), &raw.to_text())?;
    Ok(results)
}

pub fn cmd_synth(raw: &RawConfig) -> Result<()> {
    let cfg = ExperimentConfig::from_raw(raw)?;
    let (ds, risks) = generate(&cfg.synth)?;
    create_out(&cfg.out)?;
    write_csv(&ds, cfg.out.join("synth.csv"), &cfg.time_col, &cfg.event_col)?;
    write_text(cfg.out.join("oracle.txt"), &oracle_text(&cfg.synth, &risks))?;
    write_text(cfg.out.join("config.resolved.txt"), &raw.to_text())?;
    println!(
        "wrote {} samples ({} features, censor rate {:.3})",
        ds.len(),
        ds.n_features(),
        ds.censor_rate()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_rows_match_component_grid() {
        let base = LossWeights::default();
        let mle = ABLATION_ROWS[0].weights(&base);
        assert_eq!((mle.alpha, mle.beta, mle.gamma), (1.0, 0.0, 0.0));
        let rank = ABLATION_ROWS[1].weights(&base);
        assert_eq!((rank.alpha, rank.beta, rank.pairwise), (0.0, 1.0, PairwiseLoss::Rank));
        let full = ABLATION_ROWS[5].weights(&base);
        assert_eq!(full, base);
        for r in ABLATION_ROWS {
            r.weights(&base).validate().unwrap();
        }
    }

    #[test]
    fn flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("c.txt");
        std::fs::write(&cfg_path, "seed=3\nepochs=9\ntime_col=T\n").unwrap();
        let args = CommonArgs {
            config: Some(cfg_path),
            seed: Some(4),
            set: vec!["seed=5".into()],
            ..CommonArgs::default()
        };
        let raw = args.resolve().unwrap();
        assert_eq!(raw.get("seed"), "5");
        assert_eq!(raw.get("epochs"), "9");
        assert_eq!(raw.get("time_col"), "T");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::MissingColumn("time".into())), 2);
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 1);
    }
}
