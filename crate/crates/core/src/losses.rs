//! Training objectives over a minibatch of per-sample [`Pmf`]s.
//!
//! Every loss returns its value together with the exact gradient with
//! respect to its inputs. Accumulation always runs in ascending sample
//! index, so results are reproducible bit for bit.
//!
//! The combined objective is
//!
//! ```text
//! L = -α·likelihood  ±  β·pairwise  +  γ·calibration
//! ```
//!
//! where the pairwise term is either the time-adaptive pairwise rank loss
//! (TAPR) or the plain rank loss. Under [`PairwiseSign::Concordant`] the
//! pairwise term is a penalty `exp(-σ·[gap])` added with `+β`; under
//! [`PairwiseSign::Verbatim`] it is the reward `exp(σ·[gap])` added with
//! `-β`. Either way gradient descent pushes comparable pairs towards
//! concordance.

use crate::data::BinnedSample;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{bin_midpoints, predict_risk, Pmf};

/// Floor applied inside `ln` in [`LikelihoodMode::LogProb`].
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMode {
    /// Mean of the probabilities themselves (bounded in `[0, 1]`).
    Prob,
    /// Mean log-probability, floored at [`LOG_FLOOR`].
    LogProb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseSign {
    Concordant,
    Verbatim,
}

impl PairwiseSign {
    /// Sign `s` inside `exp(s·σ·…)`.
    fn exponent_sign(self) -> f64 {
        match self {
            PairwiseSign::Concordant => -1.0,
            PairwiseSign::Verbatim => 1.0,
        }
    }

    /// Sign with which the pairwise term enters the total loss.
    pub fn total_sign(self) -> f64 {
        match self {
            PairwiseSign::Concordant => 1.0,
            PairwiseSign::Verbatim => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseLoss {
    Tapr,
    Rank,
}

macro_rules! parse_enum {
    ($ty:ty, $what:literal, { $($s:literal => $v:expr),+ $(,)? }) => {
        impl std::str::FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($v),)+
                    other => Err(Error::Config(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
    };
}

parse_enum!(LikelihoodMode, "likelihood_mode", { "prob" => LikelihoodMode::Prob, "logprob" => LikelihoodMode::LogProb });
parse_enum!(PairwiseSign, "pairwise_sign", { "concordant" => PairwiseSign::Concordant, "verbatim" => PairwiseSign::Verbatim });
parse_enum!(PairwiseLoss, "pairwise", { "tapr" => PairwiseLoss::Tapr, "rank" => PairwiseLoss::Rank });

impl LikelihoodMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LikelihoodMode::Prob => "prob",
            LikelihoodMode::LogProb => "logprob",
        }
    }
}

impl PairwiseSign {
    pub fn as_str(self) -> &'static str {
        match self {
            PairwiseSign::Concordant => "concordant",
            PairwiseSign::Verbatim => "verbatim",
        }
    }
}

impl PairwiseLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            PairwiseLoss::Tapr => "tapr",
            PairwiseLoss::Rank => "rank",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub rho: f64,
    /// Number of calibration intervals `G`.
    pub g_bins: usize,
    pub likelihood_mode: LikelihoodMode,
    pub pairwise_sign: PairwiseSign,
    /// Which pairwise term `β` weights.
    pub pairwise: PairwiseLoss,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            sigma: 1.0,
            rho: 0.5,
            g_bins: 10,
            likelihood_mode: LikelihoodMode::Prob,
            pairwise_sign: PairwiseSign::Concordant,
            pairwise: PairwiseLoss::Tapr,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("rho", self.rho)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(Error::Config(format!("sigma must be in (0, 1], got {}", self.sigma)));
        }
        if self.g_bins == 0 {
            return Err(Error::Config("calib_bins must be >= 1".into()));
        }
        if self.alpha == 0.0 && self.beta == 0.0 && self.gamma == 0.0 {
            return Err(Error::Config("alpha, beta and gamma are all zero".into()));
        }
        Ok(())
    }
}

/// Index pairs `(i, j)` with `δ_i = 1` and `t_j > t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparablePairs {
    pub pairs: Vec<(usize, usize)>,
    /// `|A¹|`, the number of events in the batch.
    pub n_events: usize,
}

impl ComparablePairs {
    pub fn from_batch(batch: &[BinnedSample]) -> Self {
        let mut pairs = Vec::new();
        let mut n_events = 0;
        for (i, a) in batch.iter().enumerate() {
            if !a.event {
                continue;
            }
            n_events += 1;
            for (j, b) in batch.iter().enumerate() {
                if b.t_norm > a.t_norm {
                    pairs.push((i, j));
                }
            }
        }
        Self { pairs, n_events }
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// `G` contiguous intervals `[a_g, b_g)` covering `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBins {
    edges: Vec<f64>,
}

impl CalibrationBins {
    pub fn equal_width(g: usize) -> Result<Self> {
        if g == 0 {
            return Err(Error::Config("need at least one calibration interval".into()));
        }
        Ok(Self {
            edges: (0..=g).map(|i| i as f64 / g as f64).collect(),
        })
    }

    /// Custom edges; must start at 0, end at 1 and increase strictly.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        let ok = edges.len() >= 2
            && edges[0] == 0.0
            && *edges.last().unwrap() == 1.0
            && edges.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(Error::Config(format!("invalid calibration edges {edges:?}")));
        }
        Ok(Self { edges })
    }

    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn interval(&self, g: usize) -> (f64, f64) {
        (self.edges[g], self.edges[g + 1])
    }
}

/// Value and gradient of a pairwise term. `no_pairs` is set when the batch
/// had no comparable pair (value and gradient are then zero).
#[derive(Debug, Clone, PartialEq)]
pub struct PairTerm<G> {
    pub value: f64,
    pub grad: G,
    pub no_pairs: bool,
}

fn check_batch(pmfs: &[Pmf], batch: &[BinnedSample]) -> Result<usize> {
    if pmfs.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{} pmfs for {} samples",
            pmfs.len(),
            batch.len()
        )));
    }
    let k = pmfs.first().map_or(0, Pmf::k_bins);
    if pmfs.iter().any(|p| p.k_bins() != k) {
        return Err(Error::Shape("pmfs disagree on the number of bins".into()));
    }
    if let Some(s) = batch.iter().find(|s| s.bin == 0 || s.bin > k) {
        return Err(Error::OutOfRange {
            what: format!("bin index must be in 1..={k}"),
            value: s.bin as f64,
        });
    }
    Ok(k)
}

/// Mean per-sample likelihood: `p_k` for events, `1 - Σ_{i≤k} p_i` for
/// censored samples (`k` = the sample's bin). `LogProb` takes the log of
/// each term with floor [`LOG_FLOOR`].
pub fn likelihood_loss(
    pmfs: &[Pmf],
    batch: &[BinnedSample],
    mode: LikelihoodMode,
) -> Result<(f64, Matrix)> {
    let k_bins = check_batch(pmfs, batch)?;
    let n = batch.len();
    let mut grad = Matrix::zeros(n, k_bins);
    if n == 0 {
        return Ok((0.0, grad));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for (i, (pmf, s)) in pmfs.iter().zip(batch).enumerate() {
        let p = pmf.probs();
        let k = s.bin;
        let term = if s.event { p[k - 1] } else { 1.0 - pmf.cdf(k) };
        let (value, dterm) = match mode {
            LikelihoodMode::Prob => (term, 1.0),
            LikelihoodMode::LogProb if term > LOG_FLOOR => (term.ln(), 1.0 / term),
            LikelihoodMode::LogProb => (LOG_FLOOR.ln(), 0.0),
        };
        total += value;
        let row = grad.row_mut(i);
        if s.event {
            row[k - 1] = dterm * inv_n;
        } else {
            row[..k].iter_mut().for_each(|g| *g = -dterm * inv_n);
        }
    }
    Ok((total * inv_n, grad))
}

/// Time-adaptive pairwise rank loss over risks:
/// `(1/|A¹|) Σ exp(s·σ·[(risk_i - risk_j) - ρ·(t_j - t_i)])`
/// with `s = -1` ([`PairwiseSign::Concordant`]) or `+1` (`Verbatim`).
/// Gradient is with respect to `risks`.
pub fn tapr_loss(
    risks: &[f64],
    batch: &[BinnedSample],
    sigma: f64,
    rho: f64,
    sign: PairwiseSign,
) -> Result<PairTerm<Vec<f64>>> {
    if risks.len() != batch.len() {
        return Err(Error::Shape(format!("{} risks for {} samples", risks.len(), batch.len())));
    }
    let pairs = ComparablePairs::from_batch(batch);
    let mut grad = vec![0.0; risks.len()];
    if pairs.is_empty() {
        return Ok(PairTerm {
            value: 0.0,
            grad,
            no_pairs: true,
        });
    }
    let s = sign.exponent_sign();
    let norm = 1.0 / pairs.n_events as f64;
    let mut total = 0.0;
    for &(i, j) in &pairs.pairs {
        let gap = (risks[i] - risks[j]) - rho * (batch[j].t_norm - batch[i].t_norm);
        let e = (s * sigma * gap).exp();
        total += e;
        let d = s * sigma * e * norm;
        grad[i] += d;
        grad[j] -= d;
    }
    Ok(PairTerm {
        value: total * norm,
        grad,
        no_pairs: false,
    })
}

/// Rank loss on the CDF at the earlier sample's event bin:
/// `(1/|A¹|) Σ exp(s·σ·(F_i(k_i) - F_j(k_i)))`. Gradient is with respect to
/// the pmfs.
pub fn rank_loss(
    pmfs: &[Pmf],
    batch: &[BinnedSample],
    sigma: f64,
    sign: PairwiseSign,
) -> Result<PairTerm<Matrix>> {
    let k_bins = check_batch(pmfs, batch)?;
    let pairs = ComparablePairs::from_batch(batch);
    let mut grad = Matrix::zeros(batch.len(), k_bins);
    if pairs.is_empty() {
        return Ok(PairTerm {
            value: 0.0,
            grad,
            no_pairs: true,
        });
    }
    let s = sign.exponent_sign();
    let norm = 1.0 / pairs.n_events as f64;
    let mut total = 0.0;
    for &(i, j) in &pairs.pairs {
        let k = batch[i].bin;
        let e = (s * sigma * (pmfs[i].cdf(k) - pmfs[j].cdf(k))).exp();
        total += e;
        let d = s * sigma * e * norm;
        grad.row_mut(i)[..k].iter_mut().for_each(|g| *g += d);
        grad.row_mut(j)[..k].iter_mut().for_each(|g| *g -= d);
    }
    Ok(PairTerm {
        value: total * norm,
        grad,
        no_pairs: false,
    })
}

/// Predicted vs observed failure fraction per calibration interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInterval {
    pub pred: f64,
    pub obse: f64,
}

/// Per-interval `(pred_g, obse_g)`; `None` where a denominator is zero.
pub fn calibration_table(
    pmfs: &[Pmf],
    batch: &[BinnedSample],
    bins: &CalibrationBins,
) -> Result<Vec<Option<CalibrationInterval>>> {
    let k_bins = check_batch(pmfs, batch)?;
    let mids = bin_midpoints(k_bins);
    let mut out = Vec::with_capacity(bins.len());
    for g in 0..bins.len() {
        let (a, b) = bins.interval(g);
        let (num, den) = interval_mass(pmfs, &mids, a, b);
        let at_risk = batch.iter().filter(|s| s.t_norm >= a).count();
        let failed = batch
            .iter()
            .filter(|s| s.event && a <= s.t_norm && s.t_norm < b)
            .count();
        out.push((den > 0.0 && at_risk > 0).then(|| CalibrationInterval {
            pred: num / den,
            obse: failed as f64 / at_risk as f64,
        }));
    }
    Ok(out)
}

/// Predicted mass inside `[a, b)` and at or beyond `a`, summed over samples.
fn interval_mass(pmfs: &[Pmf], mids: &[f64], a: f64, b: f64) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for pmf in pmfs {
        for (p, &m) in pmf.probs().iter().zip(mids) {
            if m >= a {
                den += p;
                if m < b {
                    num += p;
                }
            }
        }
    }
    (num, den)
}

/// `(1/G') Σ_g (pred_g - obse_g)²` over the `G'` intervals with non-zero
/// denominators. `obse_g` is a constant; the gradient flows through
/// `pred_g` only.
pub fn calibration_loss(
    pmfs: &[Pmf],
    batch: &[BinnedSample],
    bins: &CalibrationBins,
) -> Result<(f64, Matrix)> {
    let table = calibration_table(pmfs, batch, bins)?;
    let k_bins = pmfs.first().map_or(0, Pmf::k_bins);
    let mids = bin_midpoints(k_bins);
    let mut grad = Matrix::zeros(batch.len(), k_bins);
    let used = table.iter().flatten().count();
    if used == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / used as f64;
    let mut total = 0.0;
    // d pred_g / d p_k = [k ∈ I_g]/den - num·[m_k ≥ a_g]/den², same for every sample
    let mut dp = vec![0.0; k_bins];
    for (g, entry) in table.iter().enumerate() {
        let Some(c) = entry else { continue };
        let diff = c.pred - c.obse;
        total += diff * diff;
        let (a, b) = bins.interval(g);
        let (num, den) = interval_mass(pmfs, &mids, a, b);
        let outer = 2.0 * diff * inv;
        for (k, &m) in mids.iter().enumerate() {
            if m >= a {
                let inside = if m < b { 1.0 / den } else { 0.0 };
                dp[k] += outer * (inside - num / (den * den));
            }
        }
    }
    for r in 0..batch.len() {
        grad.row_mut(r).copy_from_slice(&dp);
    }
    Ok((total * inv, grad))
}

/// Raw (unweighted) component values of one evaluation of the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentValues {
    pub likelihood: f64,
    pub pairwise: f64,
    pub calibration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripleSurvLoss {
    pub value: f64,
    /// `∂L/∂p`, one row per sample.
    pub grad: Matrix,
    pub components: ComponentValues,
    pub no_pairs: bool,
}

/// The weighted objective and its gradient with respect to the pmfs. The
/// TAPR gradient is chained through `∂risk/∂p_k = -t_bin_k`.
pub fn triplesurv_loss(
    pmfs: &[Pmf],
    batch: &[BinnedSample],
    weights: &LossWeights,
) -> Result<TripleSurvLoss> {
    weights.validate()?;
    let k_bins = check_batch(pmfs, batch)?;
    let n = batch.len();
    let mut grad = Matrix::zeros(n, k_bins);
    let mut value = 0.0;

    let (lik, lik_grad) = likelihood_loss(pmfs, batch, weights.likelihood_mode)?;
    if weights.alpha > 0.0 {
        value += -weights.alpha * lik;
        axpy(&mut grad, -weights.alpha, &lik_grad);
    }

    let (pair_value, pair_grad, no_pairs) = match weights.pairwise {
        PairwiseLoss::Tapr => {
            let risks: Vec<f64> = pmfs.iter().map(predict_risk).collect();
            let t = tapr_loss(&risks, batch, weights.sigma, weights.rho, weights.pairwise_sign)?;
            let mids = bin_midpoints(k_bins);
            let mut g = Matrix::zeros(n, k_bins);
            for (i, gr) in t.grad.iter().enumerate() {
                for (x, m) in g.row_mut(i).iter_mut().zip(&mids) {
                    *x = -gr * m;
                }
            }
            (t.value, g, t.no_pairs)
        }
        PairwiseLoss::Rank => {
            let t = rank_loss(pmfs, batch, weights.sigma, weights.pairwise_sign)?;
            (t.value, t.grad, t.no_pairs)
        }
    };
    if weights.beta > 0.0 {
        let coef = weights.pairwise_sign.total_sign() * weights.beta;
        value += coef * pair_value;
        axpy(&mut grad, coef, &pair_grad);
    }

    let bins = CalibrationBins::equal_width(weights.g_bins)?;
    let (cal, cal_grad) = calibration_loss(pmfs, batch, &bins)?;
    if weights.gamma > 0.0 {
        value += weights.gamma * cal;
        axpy(&mut grad, weights.gamma, &cal_grad);
    }

    Ok(TripleSurvLoss {
        value,
        grad,
        components: ComponentValues {
            likelihood: lik,
            pairwise: pair_value,
            calibration: cal,
        },
        no_pairs,
    })
}

fn axpy(acc: &mut Matrix, a: f64, x: &Matrix) {
    for (y, v) in acc.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *y += a * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cat_head, risk_gradient};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(t_norm: f64, bin: usize, event: bool) -> BinnedSample {
        BinnedSample {
            features: vec![],
            t_norm,
            bin,
            event,
        }
    }

    fn pmf(p: &[f64]) -> Pmf {
        Pmf::new(p.to_vec()).unwrap()
    }

    #[test]
    fn likelihood_branches() {
        let (v, _) = likelihood_loss(&[pmf(&[0.1, 0.6, 0.3])], &[s(0.5, 2, true)], LikelihoodMode::Prob).unwrap();
        assert!((v - 0.6).abs() < 1e-15);
        let (v, g) = likelihood_loss(&[pmf(&[0.3, 0.7])], &[s(0.2, 1, false)], LikelihoodMode::Prob).unwrap();
        assert!((v - 0.7).abs() < 1e-15);
        assert_eq!(g.row(0), &[-1.0, 0.0]);
        let one_hot = [pmf(&[0.0, 1.0, 0.0])];
        let b = [s(0.5, 2, true)];
        assert_eq!(likelihood_loss(&one_hot, &b, LikelihoodMode::Prob).unwrap().0, 1.0);
        assert_eq!(likelihood_loss(&one_hot, &b, LikelihoodMode::LogProb).unwrap().0, 0.0);
        // floored log term contributes no gradient
        let (v, g) = likelihood_loss(&[pmf(&[0.0, 1.0])], &[s(0.2, 1, true)], LikelihoodMode::LogProb).unwrap();
        assert_eq!(v, LOG_FLOOR.ln());
        assert_eq!(g.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn tapr_values() {
        let batch = [s(0.2, 1, true), s(0.6, 2, false)];
        let t = tapr_loss(&[0.5, 0.5], &batch, 1.0, 0.0, PairwiseSign::Concordant).unwrap();
        assert_eq!(t.value, 1.0);
        let batch = [s(0.2, 1, true), s(0.4, 2, false)];
        let t = tapr_loss(&[0.7, 0.5], &batch, 1.0, 1.0, PairwiseSign::Verbatim).unwrap();
        assert!((t.value - 1.0).abs() < 1e-15);
        let none = tapr_loss(&[0.1, 0.2], &[s(0.2, 1, false), s(0.4, 2, false)], 1.0, 1.0, PairwiseSign::Concordant).unwrap();
        assert!(none.no_pairs && none.value == 0.0 && none.grad == vec![0.0, 0.0]);
    }

    #[test]
    fn rank_values() {
        // F_i(k_i) = 1, F_j(k_i) = 0
        let pmfs = [pmf(&[1.0, 0.0]), pmf(&[0.0, 1.0])];
        let batch = [s(0.2, 1, true), s(0.7, 2, true)];
        let r = rank_loss(&pmfs, &batch, 1.0, PairwiseSign::Concordant).unwrap();
        // two events in A¹, one comparable pair
        assert!((r.value - (-1.0f64).exp() / 2.0).abs() < 1e-15);
        let tie = rank_loss(&[pmf(&[0.5, 0.5]), pmf(&[0.5, 0.5])], &[s(0.2, 1, true), s(0.7, 2, false)], 0.7, PairwiseSign::Verbatim).unwrap();
        assert_eq!(tie.value, 1.0);
        let none = rank_loss(&pmfs, &[s(0.2, 1, false), s(0.7, 2, false)], 1.0, PairwiseSign::Concordant).unwrap();
        assert!(none.no_pairs);
    }

    #[test]
    fn calibration_single_interval() {
        let bins = CalibrationBins::equal_width(1).unwrap();
        let pmfs = [pmf(&[0.2, 0.3, 0.5]), pmf(&[0.6, 0.2, 0.2])];
        let (v, g) = calibration_loss(&pmfs, &[s(0.1, 1, true), s(0.5, 2, true)], &bins).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
        let (v, _) = calibration_loss(&pmfs, &[s(0.1, 1, true), s(0.5, 2, false)], &bins).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn calibration_skips_empty_risk_sets() {
        let bins = CalibrationBins::equal_width(4).unwrap();
        let pmfs = [pmf(&[0.5, 0.5, 0.0, 0.0]), pmf(&[0.25, 0.25, 0.25, 0.25])];
        let batch = [s(0.1, 1, true), s(0.3, 2, true)];
        let table = calibration_table(&pmfs, &batch, &bins).unwrap();
        assert!(table[2].is_none() && table[3].is_none());
        let (v, _) = calibration_loss(&pmfs, &batch, &bins).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn weights_validation() {
        let mut w = LossWeights::default();
        assert!(w.validate().is_ok());
        w.sigma = 0.0;
        assert!(w.validate().is_err());
        w.sigma = 1.5;
        assert!(w.validate().is_err());
        let zero = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..LossWeights::default()
        };
        assert!(matches!(zero.validate(), Err(Error::Config(_))));
        assert_eq!("LogProb".parse::<LikelihoodMode>().unwrap(), LikelihoodMode::LogProb);
        assert!("nope".parse::<PairwiseSign>().is_err());
    }

    fn random_batch(n: usize, k: usize, seed: u64) -> (Vec<Pmf>, Vec<BinnedSample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pmfs = Vec::new();
        let mut batch = Vec::new();
        for _ in 0..n {
            let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
            pmfs.push(cat_head(&logits).unwrap());
            let t: f64 = rng.random_range(0.0..(k as f64 - 1.0) / k as f64);
            let bin = (t * k as f64).floor() as usize + 1;
            batch.push(s(t, bin, rng.random_bool(0.6)));
        }
        (pmfs, batch)
    }

    /// Perturb raw pmf entries (no renormalization) and difference the loss.
    fn fd_pmf_grad(
        pmfs: &[Pmf],
        f: &dyn Fn(&[Pmf]) -> f64,
        analytic: &Matrix,
    ) {
        let h = 1e-6;
        for i in 0..pmfs.len() {
            for k in 0..pmfs[i].k_bins() {
                let bump = |d: f64| {
                    let mut ps: Vec<Pmf> = pmfs.to_vec();
                    let mut raw = ps[i].probs().to_vec();
                    raw[k] += d;
                    ps[i] = Pmf::from_raw(raw);
                    f(&ps)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let a = analytic.get(i, k);
                let denom = a.abs().max(fd.abs()).max(1e-7);
                assert!((a - fd).abs() / denom < 1e-5, "sample {i} bin {k}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn component_gradients_match_finite_differences() {
        let (pmfs, batch) = random_batch(9, 5, 3);
        for mode in [LikelihoodMode::Prob, LikelihoodMode::LogProb] {
            let (_, g) = likelihood_loss(&pmfs, &batch, mode).unwrap();
            fd_pmf_grad(&pmfs, &|p| likelihood_loss(p, &batch, mode).unwrap().0, &g);
        }
        for sign in [PairwiseSign::Concordant, PairwiseSign::Verbatim] {
            let r = rank_loss(&pmfs, &batch, 0.8, sign).unwrap();
            fd_pmf_grad(&pmfs, &|p| rank_loss(p, &batch, 0.8, sign).unwrap().value, &r.grad);
        }
        let bins = CalibrationBins::equal_width(3).unwrap();
        let (_, g) = calibration_loss(&pmfs, &batch, &bins).unwrap();
        fd_pmf_grad(&pmfs, &|p| calibration_loss(p, &batch, &bins).unwrap().0, &g);
        for pairwise in [PairwiseLoss::Tapr, PairwiseLoss::Rank] {
            let w = LossWeights {
                alpha: 0.7,
                beta: 1.3,
                gamma: 2.0,
                sigma: 0.6,
                rho: 0.4,
                g_bins: 4,
                pairwise,
                ..LossWeights::default()
            };
            let l = triplesurv_loss(&pmfs, &batch, &w).unwrap();
            fd_pmf_grad(&pmfs, &|p| triplesurv_loss(p, &batch, &w).unwrap().value, &l.grad);
        }
    }

    #[test]
    fn tapr_gradient_matches_finite_differences() {
        let (pmfs, batch) = random_batch(8, 6, 21);
        let risks: Vec<f64> = pmfs.iter().map(predict_risk).collect();
        for sign in [PairwiseSign::Concordant, PairwiseSign::Verbatim] {
            let t = tapr_loss(&risks, &batch, 0.9, 0.3, sign).unwrap();
            for i in 0..risks.len() {
                let h = 1e-6;
                let mut up = risks.clone();
                up[i] += h;
                let mut dn = risks.clone();
                dn[i] -= h;
                let fd = (tapr_loss(&up, &batch, 0.9, 0.3, sign).unwrap().value
                    - tapr_loss(&dn, &batch, 0.9, 0.3, sign).unwrap().value)
                    / (2.0 * h);
                assert!((t.grad[i] - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn degenerate_weights_reduce_to_likelihood() {
        let (pmfs, batch) = random_batch(12, 5, 8);
        let w = LossWeights {
            alpha: 0.8,
            beta: 0.0,
            gamma: 0.0,
            ..LossWeights::default()
        };
        let l = triplesurv_loss(&pmfs, &batch, &w).unwrap();
        let (lik, g) = likelihood_loss(&pmfs, &batch, w.likelihood_mode).unwrap();
        assert_eq!(l.value, -0.8 * lik);
        for (a, b) in l.grad.as_slice().iter().zip(g.as_slice()) {
            assert_eq!(*a, -0.8 * b);
        }
    }

    #[test]
    fn pairwise_only_gradient_is_scaled_pair_gradient() {
        let pmfs = [pmf(&[0.2, 0.5, 0.3]), pmf(&[0.1, 0.3, 0.6])];
        let batch = [s(0.2, 1, true), s(0.6, 2, false)];
        let w = LossWeights {
            alpha: 0.0,
            beta: 1.7,
            gamma: 0.0,
            pairwise_sign: PairwiseSign::Verbatim,
            ..LossWeights::default()
        };
        let l = triplesurv_loss(&pmfs, &batch, &w).unwrap();
        let risks: Vec<f64> = pmfs.iter().map(predict_risk).collect();
        let t = tapr_loss(&risks, &batch, w.sigma, w.rho, w.pairwise_sign).unwrap();
        let dr = risk_gradient(3);
        for i in 0..2 {
            for k in 0..3 {
                let expect = -1.7 * t.grad[i] * dr[k];
                assert!((l.grad.get(i, k) - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn losses_are_permutation_invariant() {
        let (pmfs, batch) = random_batch(10, 5, 5);
        let w = LossWeights::default();
        let base = triplesurv_loss(&pmfs, &batch, &w).unwrap();
        let order = [3, 7, 0, 9, 1, 5, 2, 8, 4, 6];
        let p2: Vec<Pmf> = order.iter().map(|&i| pmfs[i].clone()).collect();
        let b2: Vec<BinnedSample> = order.iter().map(|&i| batch[i].clone()).collect();
        let perm = triplesurv_loss(&p2, &b2, &w).unwrap();
        assert!((base.value - perm.value).abs() < 1e-12);
        for (r, &i) in order.iter().enumerate() {
            for k in 0..5 {
                assert!((perm.grad.get(r, k) - base.grad.get(i, k)).abs() < 1e-12);
            }
        }
    }
}
