// Censoring-aware metrics on the generator's own risk scores.

use triplesurv::metrics::{
    c_index, hazard_ratio, ibs, kaplan_meier, log_rank, m_tdauc, select_cutoff, KmTarget,
};
use triplesurv::model::Pmf;
use triplesurv::synth::{generate, SynthConfig};

pub fn run_example() -> triplesurv::Result<()> {
    let (ds, risks) = generate(&SynthConfig {
        n_samples: 800,
        n_features: 4,
        target_censor_rate: 0.3,
        seed: 7,
        ..SynthConfig::default()
    })?;
    let t_max = ds.times().into_iter().fold(0.0, f64::max);
    let times: Vec<f64> = ds.times().iter().map(|t| t / (t_max * 1.001)).collect();
    let events = ds.events();

    let km = kaplan_meier(&times, &events, KmTarget::Event)?;
    println!("Kaplan-Meier: S(0.1) = {:.3}, S(0.3) = {:.3}", km.eval(0.1), km.eval(0.3));

    println!("C-index of the latent risk: {:.4}", c_index(&risks, &times, &events)?);
    let grid: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
    println!("mean TDAUC: {:.4}", m_tdauc(&risks, &times, &events, &grid)?);

    // a constant forecast: half the mass in the first bin, half in the last
    let mut probs = vec![0.0; 10];
    probs[0] = 0.5;
    probs[9] = 0.5;
    let flat = vec![Pmf::new(probs)?; ds.len()];
    let ibs_grid: Vec<f64> = (0..=8).map(|k| k as f64 / 10.0).collect();
    println!("IBS of a constant 0.5 forecast: {:.4}", ibs(&flat, &times, &events, &ibs_grid)?);

    let cutoff = select_cutoff(&risks, &times, &events)?;
    let hr = hazard_ratio(&risks, &times, &events, cutoff)?;
    let (hi, lo): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| risks[i] > cutoff);
    let pick = |idx: &[usize]| -> (Vec<f64>, Vec<bool>) { idx.iter().map(|&i| (times[i], events[i])).unzip() };
    let ((th, eh), (tl, el)) = (pick(&hi), pick(&lo));
    println!(
        "cutoff {cutoff:.3}: {} high / {} low, log-rank {:.2}, HR {:.3}",
        hi.len(),
        lo.len(),
        log_rank(&th, &eh, &tl, &el)?,
        hr.value
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
