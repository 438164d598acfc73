// Train the six loss-component combinations on one split and compare
// test metrics.

use triplesurv::cli::{
    ablation_csv, evaluate_checkpoint, load_splits, prepare, train_model, AblationResult, ExperimentConfig,
    RawConfig, ABLATION_ROWS,
};
use triplesurv::data::write_csv;
use triplesurv::synth::{generate, SynthConfig};

pub fn run_example() -> triplesurv::Result<()> {
    let dir = std::env::temp_dir().join(format!("triplesurv_ablation_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("synth.csv");
    let (ds, _) = generate(&SynthConfig {
        n_samples: 600,
        seed: 11,
        ..SynthConfig::default()
    })?;
    write_csv(&ds, &csv, "time", "event")?;

    let mut raw = RawConfig::default();
    raw.set("data", &csv.display().to_string())?;
    raw.assign("epochs=15")?;
    let cfg = ExperimentConfig::from_raw(&raw)?;
    let splits = load_splits(&cfg)?;
    let data = prepare(&splits, cfg.k_bins)?;
    let test = splits.test.clone().expect("single file is split three ways");

    let mut results = Vec::new();
    for row in ABLATION_ROWS {
        let weights = row.weights(&cfg.weights);
        let outcome = train_model(&cfg, &data, &weights)?;
        let report = evaluate_checkpoint(&outcome.checkpoint, &outcome.grid, &test)?;
        results.push(AblationResult {
            row,
            report,
            best_epoch: outcome.fit.best_epoch,
        });
    }
    print!("{}", ablation_csv(&results));
    std::fs::remove_dir_all(dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
