// Save a model to the text checkpoint format and load it back.

use triplesurv::matrix::Matrix;
use triplesurv::model::{init_params, predict_risks, read_checkpoint, write_checkpoint, Checkpoint, Head, ModelConfig};

pub fn run_example() -> triplesurv::Result<()> {
    let cfg = ModelConfig {
        input_dim: 3,
        hidden_dim: 4,
        n_blocks: 1,
        dropout_rate: 0.2,
        head: Head::Mtlr,
        k_bins: 5,
    };
    let ckpt = Checkpoint {
        params: init_params(&cfg, 1)?,
        feature_names: vec!["age".into(), "dose".into(), "stage".into()],
        scaler: None,
        risk_cutoff: None,
    };
    let path = std::env::temp_dir().join(format!("triplesurv_ckpt_{}.txt", std::process::id()));
    write_checkpoint(&path, &ckpt)?;
    let back = read_checkpoint(&path)?;
    std::fs::remove_file(&path)?;

    let x = Matrix::from_rows(&[[0.1, -1.0, 2.0], [1.0, 0.5, -0.3]])?;
    println!("{} parameters", cfg.param_count());
    println!("risks before save: {:?}", predict_risks(&ckpt.params, &x)?);
    println!("risks after load:  {:?}", predict_risks(&back.params, &x)?);
    println!("identical: {}", back == ckpt);
    Ok(())
}

#[allow(dead_code)]
fn main() -> triplesurv::Result<()> {
    run_example()
}
