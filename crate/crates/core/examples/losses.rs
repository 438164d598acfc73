// The three loss components on a hand-built batch, alone and combined.

use triplesurv::data::BinnedSample;
use triplesurv::losses::{triplesurv_loss, LikelihoodMode, LossWeights, PairwiseLoss};
use triplesurv::model::{cat_head, Pmf};

fn sample(t_norm: f64, event: bool) -> BinnedSample {
    BinnedSample {
        features: vec![],
        t_norm,
        bin: (t_norm * 5.0).floor() as usize + 1,
        event,
    }
}

pub fn run_example() -> triplesurv::Result<()> {
    let batch = vec![
        sample(0.05, true),
        sample(0.35, true),
        sample(0.55, false),
        sample(0.65, true),
        sample(0.85, false),
    ];
    // early events get mass early, late samples get mass late
    let pmfs = [
        [3.0, 1.0, 0.0, -1.0, -2.0],
        [1.0, 2.0, 1.0, 0.0, -1.0],
        [0.0, 0.5, 1.5, 1.0, 0.5],
        [-1.0, 0.0, 1.0, 2.0, 1.0],
        [-2.0, -1.0, 0.0, 1.0, 3.0],
    ]
    .iter()
    .map(|z| cat_head(z))
    .collect::<triplesurv::Result<Vec<Pmf>>>()?;

    let configs = [
        ("likelihood (prob)", LossWeights { beta: 0.0, gamma: 0.0, ..LossWeights::default() }),
        (
            "likelihood (log)",
            LossWeights { beta: 0.0, gamma: 0.0, likelihood_mode: LikelihoodMode::LogProb, ..LossWeights::default() },
        ),
        ("tapr only", LossWeights { alpha: 0.0, gamma: 0.0, ..LossWeights::default() }),
        (
            "rank only",
            LossWeights { alpha: 0.0, gamma: 0.0, pairwise: PairwiseLoss::Rank, ..LossWeights::default() },
        ),
        ("calibration only", LossWeights { alpha: 0.0, beta: 0.0, ..LossWeights::default() }),
        ("triplesurv", LossWeights::default()),
    ];
    for (name, w) in configs {
        let l = triplesurv_loss(&pmfs, &batch, &w)?;
        let c = l.components;
        println!(
            "{name:<18} total = {:>8.4}  (lik {:.4}, pair {:.4}, cal {:.4})",
            l.value, c.likelihood, c.pairwise, c.calibration
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
