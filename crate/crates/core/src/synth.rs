//! Synthetic right-censored data with a known latent risk.
//!
//! Event times follow a proportional-hazards model: the baseline hazard is
//! scaled by `exp(r(x))`, so a larger latent risk means a stochastically
//! earlier event. Censoring is exponential and independent of `x`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::data::{Sample, SurvivalDataset};
use crate::error::{Error, Result};
use crate::metrics::c_index;

/// Baseline rate of the event-time distribution.
const BASE_RATE: f64 = 0.1;
/// Allowed gap between the realized and requested censoring rate.
pub const CENSOR_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskModel {
    /// `r(x) = w·x`
    Linear,
    /// `r(x) = w·x + x'Qx`
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    Exponential,
    Weibull { shape: f64 },
}

impl Baseline {
    pub const DEFAULT_WEIBULL_SHAPE: f64 = 1.5;
}

impl std::str::FromStr for RiskModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(RiskModel::Linear),
            "quadratic" => Ok(RiskModel::Quadratic),
            other => Err(Error::Config(format!("unknown risk model `{other}` (linear|quadratic)"))),
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    /// `exponential`, `weibull` (shape 1.5) or `weibull:<shape>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.split_once(':') {
            None if lower == "exponential" => Ok(Baseline::Exponential),
            None if lower == "weibull" => Ok(Baseline::Weibull {
                shape: Self::DEFAULT_WEIBULL_SHAPE,
            }),
            Some(("weibull", k)) => {
                let shape: f64 = k
                    .parse()
                    .map_err(|e| Error::Config(format!("weibull shape `{k}`: {e}")))?;
                Ok(Baseline::Weibull { shape })
            }
            _ => Err(Error::Config(format!(
                "unknown baseline `{s}` (exponential|weibull|weibull:<shape>)"
            ))),
        }
    }
}

impl std::fmt::Display for RiskModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RiskModel::Linear => "linear",
            RiskModel::Quadratic => "quadratic",
        })
    }
}

impl std::fmt::Display for Baseline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Baseline::Exponential => f.write_str("exponential"),
            Baseline::Weibull { shape } => write!(f, "weibull:{shape}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_features: usize,
    pub risk_model: RiskModel,
    pub baseline: Baseline,
    /// Requested fraction of censored samples, in `[0, 1)`.
    pub target_censor_rate: f64,
    pub seed: u64,
    /// Multiplier on `w` and `Q`; `0` gives a pure-noise risk.
    pub risk_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            n_features: 10,
            risk_model: RiskModel::Linear,
            baseline: Baseline::Exponential,
            target_censor_rate: 0.4,
            seed: 0,
            risk_scale: 1.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_features == 0 {
            return Err(Error::Synth("n_samples and n_features must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.target_censor_rate) {
            return Err(Error::Synth(format!(
                "target_censor_rate must be in [0, 1), got {}",
                self.target_censor_rate
            )));
        }
        if let Baseline::Weibull { shape } = self.baseline {
            if !(shape.is_finite() && shape > 0.0) {
                return Err(Error::Synth(format!("weibull shape must be > 0, got {shape}")));
            }
        }
        if !self.risk_scale.is_finite() {
            return Err(Error::Synth("risk_scale must be finite".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    let e: f64 = rng.sample(Exp1);
    e.max(f64::MIN_POSITIVE)
}

fn censored_fraction(ratios: &[f64], rate: f64) -> f64 {
    ratios.iter().filter(|&&q| q < rate).count() as f64 / ratios.len() as f64
}

/// Censoring rate that hits `target` on the realized draws.
///
/// With `C = e / λ` a sample is censored iff `λ > e / T`, so the censored
/// fraction is a step function of `λ`; bisection runs on `log λ`.
fn tune_censoring(ratios: &[f64], target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let rate = censored_fraction(ratios, mid.exp());
        let err = (rate - target).abs();
        if err < best.0 {
            best = (err, mid.exp());
        }
        if rate < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > CENSOR_TOLERANCE {
        return Err(Error::Synth(format!(
            "censor rate {target} unattainable on {} samples (closest gap {:.4})",
            ratios.len(),
            best.0
        )));
    }
    Ok(best.1)
}

/// Draw a dataset and the latent risk of every sample.
///
/// Features are standard normal, `w ~ N(0, 1/d)` and `Q` is a symmetric
/// matrix with entries `~ N(0, 1/(4d²))`.
pub fn generate(config: &SynthConfig) -> Result<(SurvivalDataset, Vec<f64>)> {
    config.validate()?;
    let d = config.n_features;
    let n = config.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let w: Vec<f64> = (0..d)
        .map(|_| config.risk_scale * normal(&mut rng) / (d as f64).sqrt())
        .collect();
    let mut q = vec![0.0; d * d];
    if config.risk_model == RiskModel::Quadratic {
        for i in 0..d {
            for j in i..d {
                let v = config.risk_scale * normal(&mut rng) / (2.0 * d as f64);
                q[i * d + j] = v;
                q[j * d + i] = v;
            }
        }
    }

    let mut features = Vec::with_capacity(n);
    let mut risks = Vec::with_capacity(n);
    let mut event_times = Vec::with_capacity(n);
    let mut censor_draws = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let mut r: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        if config.risk_model == RiskModel::Quadratic {
            for i in 0..d {
                for j in 0..d {
                    r += x[i] * q[i * d + j] * x[j];
                }
            }
        }
        // inverse of S(t) = exp(-H0(t)·e^r)
        let h = exp1(&mut rng) / r.exp();
        let t = match config.baseline {
            Baseline::Exponential => h / BASE_RATE,
            Baseline::Weibull { shape } => h.powf(1.0 / shape) / BASE_RATE,
        };
        features.push(x);
        risks.push(r);
        event_times.push(t.max(f64::MIN_POSITIVE));
        censor_draws.push(exp1(&mut rng));
    }

    let censor_rate = if config.target_censor_rate == 0.0 {
        0.0
    } else {
        let ratios: Vec<f64> = censor_draws.iter().zip(&event_times).map(|(e, t)| e / t).collect();
        tune_censoring(&ratios, config.target_censor_rate)?
    };

    let samples = features
        .into_iter()
        .zip(event_times.iter().zip(&censor_draws))
        .map(|(x, (&t, &e))| {
            let c = if censor_rate > 0.0 { e / censor_rate } else { f64::INFINITY };
            if c < t {
                Sample::new(x, c, false)
            } else {
                Sample::new(x, t, true)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let names = (0..d).map(|j| format!("x{j}")).collect();
    Ok((SurvivalDataset::new(samples, names)?, risks))
}

/// C-index of the generator's own latent risk: the ceiling for any model
/// trained on this data.
pub fn bayes_c_index(oracle_risks: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    c_index(oracle_risks, times, events)
}

/// Sidecar text recording the generator settings and one oracle risk per
/// CSV row.
pub fn oracle_text(config: &SynthConfig, risks: &[f64]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# seed={}", config.seed);
    let _ = writeln!(s, "# n_samples={}", config.n_samples);
    let _ = writeln!(s, "# n_features={}", config.n_features);
    let _ = writeln!(s, "# risk_model={}", config.risk_model);
    let _ = writeln!(s, "# baseline={}", config.baseline);
    let _ = writeln!(s, "# target_censor_rate={}", config.target_censor_rate);
    let _ = writeln!(s, "# risk_scale={}", config.risk_scale);
    s.push_str("oracle_risk\n");
    for r in risks {
        let _ = writeln!(s, "{r}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, censor: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            n_samples: n,
            n_features: 5,
            target_censor_rate: censor,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, ra) = generate(&cfg(200, 0.3, 4)).unwrap();
        let (b, rb) = generate(&cfg(200, 0.3, 4)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(ra, rb);
        let (c, _) = generate(&cfg(200, 0.3, 5)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn zero_target_disables_censoring() {
        let (ds, _) = generate(&cfg(500, 0.0, 1)).unwrap();
        assert!(ds.samples.iter().all(|s| s.event));
    }

    #[test]
    fn censor_rate_hits_target() {
        for (target, baseline) in [
            (0.4, Baseline::Exponential),
            (0.7, Baseline::Weibull { shape: 1.5 }),
            (0.1, Baseline::Exponential),
        ] {
            let c = SynthConfig {
                baseline,
                ..cfg(10_000, target, 11)
            };
            let (ds, _) = generate(&c).unwrap();
            assert!((ds.censor_rate() - target).abs() <= CENSOR_TOLERANCE, "{}", ds.censor_rate());
        }
    }

    #[test]
    fn unattainable_rate_errors() {
        assert!(matches!(generate(&cfg(3, 0.5, 0)), Err(Error::Synth(_))));
        assert!(generate(&cfg(10, 1.0, 0)).is_err());
    }

    #[test]
    fn noise_risk_is_uninformative() {
        let c = SynthConfig {
            risk_scale: 0.0,
            ..cfg(2000, 0.3, 2)
        };
        let (ds, r) = generate(&c).unwrap();
        let bayes = bayes_c_index(&r, &ds.times(), &ds.events()).unwrap();
        assert_eq!(bayes, 0.5);
    }

    #[test]
    fn bayes_c_index_in_open_unit_interval_and_rank_invariant() {
        let (ds, r) = generate(&cfg(10_000, 0.4, 3)).unwrap();
        let (t, e) = (ds.times(), ds.events());
        let c = bayes_c_index(&r, &t, &e).unwrap();
        assert!(c > 0.5 && c < 1.0, "{c}");
        let transformed: Vec<f64> = r.iter().map(|x| (2.0 * x).exp() + 3.0).collect();
        assert_eq!(bayes_c_index(&transformed, &t, &e).unwrap(), c);
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            out[i] = rank as f64;
        }
        out
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn higher_risk_means_earlier_events() {
        use rand::seq::SliceRandom;
        for model in [RiskModel::Linear, RiskModel::Quadratic] {
            let c = SynthConfig {
                risk_model: model,
                baseline: Baseline::Weibull { shape: 1.5 },
                ..cfg(10_000, 0.4, 8)
            };
            let (ds, r) = generate(&c).unwrap();
            let (rs, ts): (Vec<f64>, Vec<f64>) = ds
                .samples
                .iter()
                .zip(&r)
                .filter(|(s, _)| s.event)
                .map(|(s, &r)| (r, s.time))
                .unzip();
            let (rr, rt) = (ranks(&rs), ranks(&ts));
            let rho = pearson(&rr, &rt);
            assert!(rho < 0.0);
            // permutation test: no shuffled ordering gets as negative
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut shuffled = rt.clone();
            let as_extreme = (0..200)
                .filter(|_| {
                    shuffled.shuffle(&mut rng);
                    pearson(&rr, &shuffled) <= rho
                })
                .count();
            assert_eq!(as_extreme, 0, "{model:?}: rho={rho}");
        }
    }

    #[test]
    fn baseline_parsing() {
        assert_eq!("weibull".parse::<Baseline>().unwrap(), Baseline::Weibull { shape: 1.5 });
        assert_eq!("Weibull:2".parse::<Baseline>().unwrap(), Baseline::Weibull { shape: 2.0 });
        assert_eq!("exponential".parse::<Baseline>().unwrap(), Baseline::Exponential);
        assert!("gamma".parse::<Baseline>().is_err());
        let b = Baseline::Weibull { shape: 2.5 };
        assert_eq!(b.to_string().parse::<Baseline>().unwrap(), b);
    }
}
