// Generate censored data with a known latent risk and write it as CSV.

use triplesurv::data::write_csv;
use triplesurv::synth::{bayes_c_index, generate, Baseline, RiskModel, SynthConfig};

pub fn run_example() -> triplesurv::Result<()> {
    for (risk_model, baseline) in [
        (RiskModel::Linear, Baseline::Exponential),
        (RiskModel::Quadratic, Baseline::Weibull { shape: 1.5 }),
    ] {
        let cfg = SynthConfig {
            n_samples: 2000,
            risk_model,
            baseline,
            target_censor_rate: 0.4,
            seed: 42,
            ..SynthConfig::default()
        };
        let (ds, risks) = generate(&cfg)?;
        println!(
            "{risk_model}/{baseline}: {} samples, censor rate {:.3}, bayes C-index {:.4}",
            ds.len(),
            ds.censor_rate(),
            bayes_c_index(&risks, &ds.times(), &ds.events())?
        );
    }

    let (ds, _) = generate(&SynthConfig { n_samples: 5, n_features: 2, ..SynthConfig::default() })?;
    let path = std::env::temp_dir().join("triplesurv_synth_example.csv");
    write_csv(&ds, &path, "time", "event")?;
    print!("{}", std::fs::read_to_string(&path)?);
    std::fs::remove_file(path)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
