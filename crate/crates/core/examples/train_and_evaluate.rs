// End to end: synthetic data, 3:1:1 split, training with validation
// C-index model selection, then test-set metrics against the oracle.

use triplesurv::cli::{evaluate_checkpoint, prepare, train_model, ExperimentConfig, RawConfig, Splits};
use triplesurv::data::split_indices;
use triplesurv::synth::{bayes_c_index, generate, SynthConfig};

pub fn run_example() -> triplesurv::Result<()> {
    let (ds, risks) = generate(&SynthConfig {
        n_samples: 1000,
        seed: 3,
        ..SynthConfig::default()
    })?;
    let [a, b, c] = split_indices(ds.len(), (0.6, 0.2, 0.2), 3)?;
    let (train, val, test) = (ds.subset(&a), ds.subset(&b), ds.subset(&c));
    let test_oracle: Vec<f64> = c.iter().map(|&i| risks[i]).collect();

    let mut raw = RawConfig::default();
    raw.assign("epochs=40")?;
    raw.assign("eval_every=5")?;
    let cfg = ExperimentConfig::from_raw(&raw)?;
    let splits = Splits {
        train,
        val,
        test: Some(test.clone()),
        split_here: true,
    };
    let data = prepare(&splits, cfg.k_bins)?;
    let outcome = train_model(&cfg, &data, &cfg.weights)?;
    for r in outcome.fit.history.iter().filter(|r| r.val_c_index.is_some()) {
        println!(
            "epoch {:>3} lr {:.5} loss {:>9.4} val C-index {:.4}",
            r.epoch,
            r.lr,
            r.loss,
            r.val_c_index.unwrap_or(f64::NAN)
        );
    }
    let report = evaluate_checkpoint(&outcome.checkpoint, &outcome.grid, &test)?;
    let bayes = bayes_c_index(&test_oracle, &test.times(), &test.events())?;
    println!(
        "test: C-index {:.4} (oracle {bayes:.4}), IBS {:.4}, mTDAUC {:.4}, HR {:.3}",
        report.c_index, report.ibs, report.m_tdauc, report.hr
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
