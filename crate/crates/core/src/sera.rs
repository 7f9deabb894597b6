//! Sparsity-exploited reranking: raw p-values, screening, kernel estimation
//! of the non-null fraction along the auxiliary statistic, p-value
//! weighting, and the threshold search. Operates on plain slices so it can
//! be applied to any paired (primary, auxiliary) statistic field.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Kernel used for the sparsity-level estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    /// K(x/h) / K(0): normalized so the self term contributes exactly 1.
    fn ratio(&self, delta: f64, h: f64) -> f64 {
        let z = delta / h;
        match self {
            Kernel::Gaussian => (-0.5 * z * z).exp(),
            Kernel::Epanechnikov => (1.0 - z * z).max(0.0),
        }
    }
}

/// Bandwidth rule for the kernel estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Normal-scale plug-in h = 1.06 * sd(U) * M^{-1/5}; falls back to 1
    /// when the auxiliary values are constant.
    NormalScale,
    Fixed(f64),
}

/// Configuration of the reranking procedure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeraConfig {
    pub alpha: f64,
    /// BH level used when screening for tau (default 0.9).
    pub screen_level: f64,
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    /// Truncation constant keeping pi_hat inside (0, 1).
    pub trunc_xi: f64,
}

impl SeraConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = SeraConfig {
            alpha,
            screen_level: 0.9,
            kernel: Kernel::Gaussian,
            bandwidth: Bandwidth::NormalScale,
            trunc_xi: 1e-5,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "level must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(self.screen_level > 0.0 && self.screen_level < 1.0) {
            return Err(Error::Domain(format!(
                "screen level must lie in (0,1), got {}",
                self.screen_level
            )));
        }
        if !(self.trunc_xi > 0.0 && self.trunc_xi < 0.5) {
            return Err(Error::Domain(format!(
                "truncation constant must lie in (0,0.5), got {}",
                self.trunc_xi
            )));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::Domain(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

/// Full output of one reranking run.
#[derive(Debug, Clone)]
pub struct DecisionSet {
    pub p: Vec<f64>,
    pub pi_hat: Vec<f64>,
    pub w: Vec<f64>,
    pub p_w: Vec<f64>,
    /// Selected rank; 0 means nothing is rejected.
    pub q_hat: usize,
    pub reject: Vec<bool>,
    pub tau: f64,
    /// Set when the screening BH pass rejected nothing and tau fell back.
    pub tau_fallback: bool,
}

impl DecisionSet {
    pub fn rejections(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }
}

/// Two-sided normal p-values p = 2(1 - Phi(|t|)), clamped into [0, 1].
pub fn p_values(t: &[f64]) -> Result<Vec<f64>> {
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite primary statistic".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(t.iter()
        .map(|&v| (2.0 * (1.0 - normal.cdf(v.abs()))).clamp(0.0, 1.0))
        .collect())
}

/// Screening threshold: BH at `level`; tau is the largest passing p-value,
/// falling back to 0.5 when BH rejects nothing. The screen mask flags
/// hypotheses with p > tau.
pub fn screen_tau(p: &[f64], level: f64) -> Result<(f64, Vec<bool>, bool)> {
    let m = p.len();
    if m == 0 {
        return Err(Error::Domain("empty p-value field".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "screen level must lie in (0,1), got {level}"
        )));
    }
    let mut sorted: Vec<f64> = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let mut k_hat = 0usize;
    for (k, &v) in sorted.iter().enumerate() {
        if v <= level * (k + 1) as f64 / m as f64 {
            k_hat = k + 1;
        }
    }
    let (tau, fallback) = if k_hat == 0 { (0.5, true) } else { (sorted[k_hat - 1], false) };
    let mask = p.iter().map(|&v| v > tau).collect();
    Ok((tau, mask, fallback))
}

fn resolve_bandwidth(u: &[f64], cfg: &SeraConfig) -> Result<f64> {
    match cfg.bandwidth {
        Bandwidth::Fixed(h) => {
            if h > 0.0 {
                Ok(h)
            } else {
                Err(Error::Domain(format!("bandwidth must be positive, got {h}")))
            }
        }
        Bandwidth::NormalScale => {
            let m = u.len() as f64;
            let mean = u.iter().sum::<f64>() / m;
            let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let sd = var.sqrt();
            if sd == 0.0 {
                Ok(1.0)
            } else {
                Ok(1.06 * sd * m.powf(-0.2))
            }
        }
    }
}

/// Kernel estimate of the non-null fraction at each auxiliary value:
/// pi_hat(U) = 1 - [sum over screened of v] / [(1 - tau) * sum over all of v]
/// with v the normalized kernel of the difference in U; the self term is
/// included in both sums. Truncated into [xi, 1 - xi].
pub fn estimate_pi(
    u: &[f64],
    screen_mask: &[bool],
    tau: f64,
    cfg: &SeraConfig,
) -> Result<Vec<f64>> {
    let m = u.len();
    if m < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 hypotheses, got {m}"
        )));
    }
    if screen_mask.len() != m {
        return Err(Error::Shape("screen mask not aligned with U".into()));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite auxiliary statistic".into()));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::Domain(format!("tau must lie in [0,1), got {tau}")));
    }
    let h = resolve_bandwidth(u, cfg)?;
    let xi = cfg.trunc_xi;
    let kernel = cfg.kernel;
    Ok((0..m)
        .into_par_iter()
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..m {
                let v = kernel.ratio(u[i] - u[j], h);
                den += v;
                if screen_mask[j] {
                    num += v;
                }
            }
            let pi = if den > 0.0 { 1.0 - num / ((1.0 - tau) * den) } else { 1.0 };
            pi.clamp(xi, 1.0 - xi)
        })
        .collect())
}

/// Reranking and thresholding: weight the p-values by pi/(1 - pi), sort
/// ascending with index order breaking ties, and pick the largest rank q
/// with q^{-1} (sum of pi_hat) p_w_(q) <= alpha.
pub fn sera_decide(p: &[f64], pi_hat: &[f64], alpha: f64) -> Result<DecisionSet> {
    let m = p.len();
    if pi_hat.len() != m {
        return Err(Error::Shape("pi_hat not aligned with p".into()));
    }
    if m == 0 {
        return Err(Error::Domain("empty p-value field".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0,1), got {alpha}")));
    }
    if pi_hat.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Domain("pi_hat must lie strictly inside (0,1)".into()));
    }
    let w: Vec<f64> = pi_hat.iter().map(|&v| v / (1.0 - v)).collect();
    let p_w: Vec<f64> = p.iter().zip(&w).map(|(&pv, &wv)| pv / wv).collect();
    let pi_sum: f64 = pi_hat.iter().sum();

    let mut order: Vec<usize> = (0..m).collect();
    // stable sort keeps index (lexicographic pair) order on ties
    order.sort_by(|&a, &b| p_w[a].partial_cmp(&p_w[b]).expect("finite weighted p"));
    let mut q_hat = 0usize;
    for (rank0, &idx) in order.iter().enumerate() {
        let q = rank0 + 1;
        if pi_sum * p_w[idx] / q as f64 <= alpha {
            q_hat = q;
        }
    }
    let mut reject = vec![false; m];
    for &idx in order.iter().take(q_hat) {
        reject[idx] = true;
    }
    if q_hat >= 1 {
        // estimated-FDP guarantee at the chosen rank
        debug_assert!(pi_sum * p_w[order[q_hat - 1]] / q_hat as f64 <= alpha);
    }
    Ok(DecisionSet {
        p: p.to_vec(),
        pi_hat: pi_hat.to_vec(),
        w,
        p_w,
        q_hat,
        reject,
        tau: f64::NAN,
        tau_fallback: false,
    })
}

/// The full pipeline on a (T, U) field: p-values, screening, sparsity
/// estimation, decision.
pub fn sera_run(t: &[f64], u: &[f64], cfg: &SeraConfig) -> Result<DecisionSet> {
    cfg.validate()?;
    let p = p_values(t)?;
    let (tau, mask, fallback) = screen_tau(&p, cfg.screen_level)?;
    let pi_hat = estimate_pi(u, &mask, tau, cfg)?;
    let mut ds = sera_decide(&p, &pi_hat, cfg.alpha)?;
    ds.tau = tau;
    ds.tau_fallback = fallback;
    Ok(ds)
}

/// Plain Benjamini-Hochberg on raw p-values (the comparison baseline).
pub fn bh_decide(p: &[f64], alpha: f64) -> Result<Vec<bool>> {
    let m = p.len();
    if m == 0 {
        return Err(Error::Domain("empty p-value field".into()));
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let mut cutoff = -1.0;
    for (k, &v) in sorted.iter().enumerate() {
        if v <= alpha * (k + 1) as f64 / m as f64 {
            cutoff = v;
        }
    }
    Ok(p.iter().map(|&v| v <= cutoff).collect())
}
