//! Output heads: network outputs → probability mass over the time bins.

use crate::error::{Error, Result};

/// Probability mass over `K` time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Validating constructor: entries must be non-negative and sum to one
    /// within `1e-9`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("pmf needs at least one bin".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::OutOfRange {
                what: "pmf entries must be finite and >= 0".into(),
                value: probs.iter().copied().find(|p| !p.is_finite() || *p < 0.0).unwrap_or(f64::NAN),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfRange {
                what: "pmf must sum to 1".into(),
                value: total,
            });
        }
        Ok(Self { probs })
    }

    /// Unvalidated constructor for finite-difference probes that step off
    /// the simplex.
    #[cfg(test)]
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k_bins(&self) -> usize {
        self.probs.len()
    }

    /// `F(k) = Σ_{i ≤ k} p_i` for 1-based `k` (`F(0) = 0`).
    pub fn cdf(&self, k: usize) -> f64 {
        self.probs[..k.min(self.probs.len())].iter().sum()
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", v[i]))),
        None => Ok(()),
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|x| *x /= s);
    e
}

/// Softmax over `K` logits.
pub fn cat_head(logits: &[f64]) -> Result<Pmf> {
    check_finite(logits, "logit")?;
    if logits.is_empty() {
        return Err(Error::Empty("cat head needs K >= 1 logits".into()));
    }
    Ok(Pmf {
        probs: softmax(logits),
    })
}

/// MTLR over `K - 1` outputs `φ`.
///
/// `p_k ∝ exp(Σ_{j≥k} φ_j)` for `k < K` and `p_K ∝ 1`, i.e. a softmax over
/// the suffix sums of `φ` with a trailing zero.
pub fn mtlr_head(phi: &[f64]) -> Result<Pmf> {
    check_finite(phi, "phi")?;
    Ok(Pmf {
        probs: softmax(&mtlr_scores(phi)),
    })
}

fn mtlr_scores(phi: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; phi.len() + 1];
    for j in (0..phi.len()).rev() {
        s[j] = s[j + 1] + phi[j];
    }
    s
}

/// Vector–Jacobian product of the softmax: `p ⊙ (g - ⟨g, p⟩)`.
fn softmax_vjp(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter().zip(grad_p).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// `∂L/∂logits` given `∂L/∂p` for the Cat head.
pub fn cat_head_backward(pmf: &Pmf, grad_p: &[f64]) -> Vec<f64> {
    softmax_vjp(&pmf.probs, grad_p)
}

/// `∂L/∂φ` given `∂L/∂p` for the MTLR head. `φ_j` enters every score
/// `s_k` with `k ≤ j`, so the gradient is a prefix sum.
pub fn mtlr_head_backward(pmf: &Pmf, grad_p: &[f64]) -> Vec<f64> {
    let gs = softmax_vjp(&pmf.probs, grad_p);
    let mut out = Vec::with_capacity(gs.len() - 1);
    let mut acc = 0.0;
    for g in &gs[..gs.len() - 1] {
        acc += g;
        out.push(acc);
    }
    out
}

/// Which head sits on top of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Cat,
    Mtlr,
}

impl Head {
    /// Number of network outputs for `k_bins` bins.
    pub fn output_dim(self, k_bins: usize) -> usize {
        match self {
            Head::Cat => k_bins,
            Head::Mtlr => k_bins - 1,
        }
    }

    pub fn pmf(self, outputs: &[f64]) -> Result<Pmf> {
        match self {
            Head::Cat => cat_head(outputs),
            Head::Mtlr => mtlr_head(outputs),
        }
    }

    pub fn backward(self, pmf: &Pmf, grad_p: &[f64]) -> Vec<f64> {
        match self {
            Head::Cat => cat_head_backward(pmf, grad_p),
            Head::Mtlr => mtlr_head_backward(pmf, grad_p),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Head::Cat => "cat",
            Head::Mtlr => "mtlr",
        }
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cat" => Ok(Head::Cat),
            "mtlr" => Ok(Head::Mtlr),
            other => Err(Error::Config(format!("unknown head `{other}` (cat|mtlr)"))),
        }
    }
}

/// Bin midpoints `(2k - 1) / (2K)` for `k = 1..=K`.
pub fn bin_midpoints(k_bins: usize) -> Vec<f64> {
    (1..=k_bins)
        .map(|k| (2 * k - 1) as f64 / (2 * k_bins) as f64)
        .collect()
}

/// `risk = 1 - Σ_k p_k · t_bin_k`: one minus the expected normalized event
/// time. Lies in `[1/(2K), (2K-1)/(2K)]`.
///
/// Evaluated as `(1 - Σ p_k) + Σ p_k · (1 - t_bin_k)`, the same function,
/// so that one-hot pmfs hit both bounds exactly.
pub fn predict_risk(pmf: &Pmf) -> f64 {
    let k = pmf.k_bins();
    let mass: f64 = pmf.probs.iter().sum();
    let upper: f64 = pmf
        .probs
        .iter()
        .enumerate()
        .map(|(i, p)| p * (2 * (k - i) - 1) as f64 / (2 * k) as f64)
        .sum();
    (1.0 - mass) + upper
}

/// `∂risk/∂p_k = -t_bin_k`.
pub fn risk_gradient(k_bins: usize) -> Vec<f64> {
    bin_midpoints(k_bins).into_iter().map(|m| -m).collect()
}

/// Survival beyond bin `k`: `Σ_{i > k} p_i = 1 - F(k)`, clamped to `[0, 1]`.
/// `k = 0` gives 1.
pub fn predict_survival(pmf: &Pmf, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k >= pmf.k_bins() {
        return 0.0;
    }
    let tail: f64 = pmf.probs[k..].iter().sum();
    tail.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn cat_cases() {
        let p = cat_head(&[0.3; 5]).unwrap();
        assert!(close(p.probs(), &[0.2; 5], 1e-15));
        let p = cat_head(&[1000.0, 0.0, 0.0]).unwrap();
        assert!(close(p.probs(), &[1.0, 0.0, 0.0], 1e-300));
        let a = cat_head(&[0.1, -2.0, 3.0]).unwrap();
        let b = cat_head(&[7.1, 5.0, 10.0]).unwrap();
        assert!(close(a.probs(), b.probs(), 1e-15));
        assert!(cat_head(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn mtlr_cases() {
        let p = mtlr_head(&[0.0]).unwrap();
        assert!(close(p.probs(), &[0.5, 0.5], 1e-12));
        let p = mtlr_head(&[0.0, 0.0]).unwrap();
        assert!(close(p.probs(), &[1.0 / 3.0; 3], 1e-12));
        // direct evaluation of the closed form
        let phi = [0.4, -1.3, 0.7];
        let suffix = |k: usize| phi[k..].iter().sum::<f64>();
        let z = 1.0 + (0..3).map(|i| suffix(i).exp()).sum::<f64>();
        let expect: Vec<f64> = (0..3).map(|k| suffix(k).exp() / z).chain([1.0 / z]).collect();
        assert!(close(mtlr_head(&phi).unwrap().probs(), &expect, 1e-15));
        assert!(mtlr_head(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn risk_and_survival() {
        let mut onehot = vec![0.0; 10];
        onehot[0] = 1.0;
        assert_eq!(predict_risk(&Pmf::new(onehot.clone()).unwrap()), 0.95);
        onehot.reverse();
        assert_eq!(predict_risk(&Pmf::new(onehot).unwrap()), 0.05);
        let uniform = Pmf::new(vec![0.1; 10]).unwrap();
        assert!((predict_risk(&uniform) - 0.5).abs() < 1e-15);

        assert_eq!(predict_survival(&uniform, 10), 0.0);
        assert!((predict_survival(&uniform, 5) - 0.5).abs() < 1e-15);
        assert_eq!(predict_survival(&Pmf::new(vec![0.3, 0.7]).unwrap(), 1), 0.7);
        assert_eq!(predict_survival(&uniform, 0), 1.0);
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![1.5, -0.5]).is_err());
        assert!(Pmf::new(vec![]).is_err());
    }

    fn fd_jacobian_check(head: Head, inputs: &[f64]) {
        let pmf = head.pmf(inputs).unwrap();
        let k = pmf.k_bins();
        for out in 0..k {
            let mut g = vec![0.0; k];
            g[out] = 1.0;
            let analytic = head.backward(&pmf, &g);
            for i in 0..inputs.len() {
                let h = 1e-6;
                let mut up = inputs.to_vec();
                up[i] += h;
                let mut dn = inputs.to_vec();
                dn[i] -= h;
                let fd = (head.pmf(&up).unwrap().probs()[out] - head.pmf(&dn).unwrap().probs()[out])
                    / (2.0 * h);
                let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (analytic[i] - fd).abs() / denom <= 1e-6,
                    "{head:?} dp{out}/dz{i}: {} vs {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn head_jacobians_match_finite_differences() {
        fd_jacobian_check(Head::Cat, &[0.3, -0.8, 1.1, 0.0, 0.25]);
        fd_jacobian_check(Head::Mtlr, &[0.3, -0.8, 1.1, 0.05]);
    }
}
