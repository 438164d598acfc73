// Cat and MTLR heads: network outputs to a distribution over time bins,
// then to a risk score and a survival curve.

use triplesurv::model::{cat_head, mtlr_head, predict_risk, predict_survival, Pmf};

fn show(name: &str, pmf: &Pmf) {
    let probs: Vec<String> = pmf.probs().iter().map(|p| format!("{p:.3}")).collect();
    let survival: Vec<String> = (0..=pmf.k_bins())
        .map(|k| format!("{:.2}", predict_survival(pmf, k)))
        .collect();
    println!("{name:<5} p = [{}]  risk = {:.4}", probs.join(", "), predict_risk(pmf));
    println!("{:<5} S = [{}]", "", survival.join(", "));
}

pub fn run_example() -> triplesurv::Result<()> {
    show("cat", &cat_head(&[2.0, 1.0, 0.0, -1.0, -2.0])?);
    show("cat", &cat_head(&[-2.0, -1.0, 0.0, 1.0, 2.0])?);
    // K = 5 bins from K - 1 = 4 outputs
    show("mtlr", &mtlr_head(&[0.0, 0.0, 0.0, 0.0])?);
    show("mtlr", &mtlr_head(&[1.5, 0.5, -0.5, -1.0])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
