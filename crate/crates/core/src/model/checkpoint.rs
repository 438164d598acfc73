//! Plain-text checkpoint format.
//!
//! ```text
//! triplesurv-checkpoint 1
//! head cat
//! input_dim 10
//! hidden_dim 32
//! n_blocks 2
//! dropout 0.2
//! k_bins 20
//! updates 1800
//! feature <name>                  (one line per covariate, in column order)
//! scaler_mean <v> <v> ...         (optional)
//! scaler_std <v> <v> ...          (optional)
//! risk_cutoff <v>                 (optional)
//! tensor <name> <rows> <cols>
//! <cols values>                   (repeated <rows> times, row-major)
//! ...
//! end
//! ```
//!
//! Tensors appear in [`ModelParams::trainable`] order followed by each
//! block's `running_mean` / `running_var`. Values use Rust's shortest
//! round-trip exponent formatting, so reading a checkpoint back is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{Head, ModelConfig, ModelParams};
use crate::data::Standardizer;
use crate::error::{Error, Result};

const MAGIC: &str = "triplesurv-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub feature_names: Vec<String>,
    pub scaler: Option<Standardizer>,
    /// High/low risk cutoff chosen on the training set.
    pub risk_cutoff: Option<f64>,
}

fn write_values(out: &mut String, vals: &[f64]) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:e}");
    }
    out.push('\n');
}

fn tensors(params: &ModelParams) -> Vec<(String, usize, usize, Vec<f64>)> {
    let mut shapes = vec![
        (params.input.weight.rows(), params.input.weight.cols()),
        (1, params.input.bias.len()),
    ];
    for b in &params.blocks {
        let h = b.norm.scale.len();
        shapes.extend([(b.linear.weight.rows(), b.linear.weight.cols()), (1, h), (1, h), (1, h)]);
    }
    shapes.extend([
        (params.output.weight.rows(), params.output.weight.cols()),
        (1, params.output.bias.len()),
    ]);
    let mut out: Vec<_> = params
        .trainable()
        .into_iter()
        .zip(shapes)
        .map(|((name, t), (r, c))| (name, r, c, t.to_vec()))
        .collect();
    for (l, b) in params.blocks.iter().enumerate() {
        let h = b.norm.running_mean.len();
        out.push((format!("block{l}.running_mean"), 1, h, b.norm.running_mean.clone()));
        out.push((format!("block{l}.running_var"), 1, h, b.norm.running_var.clone()));
    }
    out
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let c = &p.config;
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "head {}", c.head.as_str());
        let _ = writeln!(s, "input_dim {}", c.input_dim);
        let _ = writeln!(s, "hidden_dim {}", c.hidden_dim);
        let _ = writeln!(s, "n_blocks {}", c.n_blocks);
        let _ = writeln!(s, "dropout {:e}", c.dropout_rate);
        let _ = writeln!(s, "k_bins {}", c.k_bins);
        let _ = writeln!(s, "updates {}", p.updates);
        for f in &self.feature_names {
            let _ = writeln!(s, "feature {f}");
        }
        if let Some(sc) = &self.scaler {
            s.push_str("scaler_mean ");
            write_values(&mut s, &sc.means);
            s.push_str("scaler_std ");
            write_values(&mut s, &sc.stds);
        }
        if let Some(c) = self.risk_cutoff {
            let _ = writeln!(s, "risk_cutoff {c:e}");
        }
        for (name, rows, cols, vals) in tensors(p) {
            let _ = writeln!(s, "tensor {name} {rows} {cols}");
            for r in 0..rows {
                write_values(&mut s, &vals[r * cols..(r + 1) * cols]);
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines().enumerate().peekable();
        let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
        match header.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
            _ => return Err(bad(format!("unrecognized header `{header}`"))),
        }
        let parse_vals = |line: &str, lineno: usize| -> Result<Vec<f64>> {
            line.split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| bad(format!("line {}: `{t}`: {e}", lineno + 1)))
                })
                .collect()
        };

        let mut head = None;
        let mut dims = [None; 4]; // input, hidden, blocks, k
        let mut dropout = None;
        let mut updates = 0;
        let mut feature_names = Vec::new();
        let mut scaler_mean = None;
        let mut scaler_std = None;
        let mut risk_cutoff = None;
        let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
        let mut ended = false;

        while let Some((lineno, line)) = lines.next() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let int = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))
            };
            match key {
                "head" => head = Some(rest.trim().parse::<Head>()?),
                "input_dim" => dims[0] = Some(int(rest)?),
                "hidden_dim" => dims[1] = Some(int(rest)?),
                "n_blocks" => dims[2] = Some(int(rest)?),
                "k_bins" => dims[3] = Some(int(rest)?),
                "dropout" => dropout = Some(parse_vals(rest, lineno)?.first().copied().unwrap_or(f64::NAN)),
                "updates" => updates = int(rest)? as u64,
                "feature" => feature_names.push(rest.to_string()),
                "scaler_mean" => scaler_mean = Some(parse_vals(rest, lineno)?),
                "scaler_std" => scaler_std = Some(parse_vals(rest, lineno)?),
                "risk_cutoff" => risk_cutoff = parse_vals(rest, lineno)?.first().copied(),
                "tensor" => {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    if parts.len() != 3 {
                        return Err(bad(format!("line {}: malformed tensor header", lineno + 1)));
                    }
                    let (rows, cols) = (int(parts[1])?, int(parts[2])?);
                    let mut vals = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (ln, row) = lines
                            .next()
                            .ok_or_else(|| bad(format!("tensor {} truncated", parts[0])))?;
                        let v = parse_vals(row, ln)?;
                        if v.len() != cols {
                            return Err(bad(format!(
                                "line {}: expected {cols} values, found {}",
                                ln + 1,
                                v.len()
                            )));
                        }
                        vals.extend(v);
                    }
                    tensors.push((parts[0].to_string(), vals));
                }
                "end" => {
                    ended = true;
                    break;
                }
                "" => {}
                other => return Err(bad(format!("line {}: unknown key `{other}`", lineno + 1))),
            }
        }
        if !ended {
            return Err(bad("missing `end` marker".into()));
        }
        let missing = |what: &str| bad(format!("missing `{what}`"));
        let config = ModelConfig {
            input_dim: dims[0].ok_or_else(|| missing("input_dim"))?,
            hidden_dim: dims[1].ok_or_else(|| missing("hidden_dim"))?,
            n_blocks: dims[2].ok_or_else(|| missing("n_blocks"))?,
            dropout_rate: dropout.ok_or_else(|| missing("dropout"))?,
            head: head.ok_or_else(|| missing("head"))?,
            k_bins: dims[3].ok_or_else(|| missing("k_bins"))?,
        };
        let mut params = super::init_params(&config, 0)?;
        params.updates = updates;

        let expected = self::tensors(&params);
        if expected.len() != tensors.len() {
            return Err(bad(format!(
                "expected {} tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((ename, _, _, evals), (name, vals)) in expected.iter().zip(&tensors) {
            if ename != name || evals.len() != vals.len() {
                return Err(bad(format!(
                    "tensor `{name}` ({} values) does not match expected `{ename}` ({})",
                    vals.len(),
                    evals.len()
                )));
            }
        }
        let mut it = tensors.into_iter().map(|(_, v)| v);
        for slot in params.trainable_mut() {
            slot.copy_from_slice(&it.next().expect("count checked"));
        }
        for b in &mut params.blocks {
            b.norm.running_mean = it.next().expect("count checked");
            b.norm.running_var = it.next().expect("count checked");
        }

        if feature_names.len() != config.input_dim && !feature_names.is_empty() {
            return Err(bad(format!(
                "{} feature names for input_dim {}",
                feature_names.len(),
                config.input_dim
            )));
        }
        let scaler = match (scaler_mean, scaler_std) {
            (Some(means), Some(stds)) if means.len() == config.input_dim && stds.len() == config.input_dim => {
                Some(Standardizer { means, stds })
            }
            (None, None) => None,
            _ => return Err(bad("scaler_mean/scaler_std malformed".into())),
        };
        Ok(Self {
            params,
            feature_names,
            scaler,
            risk_cutoff,
        })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_text())?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, Head, ModelConfig};

    fn sample() -> Checkpoint {
        let cfg = ModelConfig {
            input_dim: 2,
            hidden_dim: 4,
            n_blocks: 2,
            dropout_rate: 0.2,
            head: Head::Mtlr,
            k_bins: 6,
        };
        let mut params = init_params(&cfg, 9).unwrap();
        params.blocks[1].norm.running_var[2] = 1.234_567_890_123e-7;
        params.updates = 17;
        Checkpoint {
            params,
            feature_names: vec!["age".into(), "blood pressure".into()],
            scaler: Some(Standardizer {
                means: vec![0.1, -3.0],
                stds: vec![1.0, 1e-4],
            }),
            risk_cutoff: Some(0.437),
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let c = sample();
        let text = c.to_text();
        assert!(text.starts_with("triplesurv-checkpoint 1\n"));
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_corruption() {
        let text = sample().to_text();
        assert!(Checkpoint::from_text(&text.replace("triplesurv-checkpoint 1", "other 1")).is_err());
        assert!(Checkpoint::from_text(&text.replace("\nend\n", "\n")).is_err());
        assert!(Checkpoint::from_text(&text.replace("hidden_dim 4", "hidden_dim 5")).is_err());
    }
}
