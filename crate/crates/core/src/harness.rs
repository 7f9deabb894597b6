//! Evaluation against ground truth and the Monte Carlo experiment runner:
//! structure generation per replication, sampling, full pipeline, and
//! aggregation into an FDR / power table.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::sera::{bh_decide, p_values, sera_run, DecisionSet, SeraConfig};
use crate::simgen::{
    derive_seed, gen_mean, gen_structure, sample_group, split_pair, stream_rng,
    truth_from_targets, GroundTruth, StructureModel,
};
use crate::stats_corr::{corr_estimates, stat_pairs, GroupEstimates, StatField};
use crate::stats_pcorr::{nodewise_regress, pcorr_estimates, LambdaRule};
use crate::tensor::DenseTensor;
use crate::transform::transform_group;

/// Which dependence structure is compared across groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Mode-of-interest correlations.
    Corr,
    /// Mode-of-interest partial correlations (node-wise lasso route).
    Pcorr,
}

impl Scenario {
    pub fn from_name(name: &str) -> Result<Scenario> {
        match name.trim().to_ascii_lowercase().as_str() {
            "corr" => Ok(Scenario::Corr),
            "pcorr" => Ok(Scenario::Pcorr),
            other => Err(Error::Usage(format!("unknown scenario: {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Corr => "corr",
            Scenario::Pcorr => "pcorr",
        }
    }
}

/// Mode-of-interest structure design for the two groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeDesign {
    /// Two independently specified structures.
    Pair(StructureModel, StructureModel),
    /// One base structure split into two overlapping variants.
    Split(StructureModel),
}

impl ModeDesign {
    pub fn name(&self) -> String {
        match self {
            ModeDesign::Pair(a, b) => format!("{}-vs-{}", a.name(), b.name()),
            ModeDesign::Split(b) => format!("split:{}", b.name()),
        }
    }
}

/// Nuisance-mode covariance setting: group 1 and group 2 structures applied
/// to every mode other than the mode of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NuisanceSetting {
    /// AR4 for group 1, AR5 for group 2.
    Ar,
    /// MA3 for group 1, MA4 for group 2.
    Ma,
}

impl NuisanceSetting {
    pub fn from_name(name: &str) -> Result<NuisanceSetting> {
        match name.trim().to_ascii_lowercase().as_str() {
            "ar" => Ok(NuisanceSetting::Ar),
            "ma" => Ok(NuisanceSetting::Ma),
            other => Err(Error::Usage(format!("unknown nuisance setting: {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NuisanceSetting::Ar => "ar",
            NuisanceSetting::Ma => "ma",
        }
    }

    /// (group 1, group 2) nuisance structure models.
    pub fn models(&self) -> (StructureModel, StructureModel) {
        match self {
            NuisanceSetting::Ar => (StructureModel::Ar(0.4), StructureModel::Ar(0.5)),
            NuisanceSetting::Ma => (StructureModel::Ma(3), StructureModel::Ma(4)),
        }
    }
}

/// Methods the runner can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    TSera,
    TSeraOracle,
    TBh,
}

impl Method {
    pub fn from_name(name: &str) -> Result<Method> {
        match name.trim().to_ascii_lowercase().as_str() {
            "t-sera" => Ok(Method::TSera),
            "t-sera-oracle" => Ok(Method::TSeraOracle),
            "t-bh" => Ok(Method::TBh),
            other => Err(Error::Usage(format!("unknown method: {other}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::TSera => "t-sera",
            Method::TSeraOracle => "t-sera-oracle",
            Method::TBh => "t-bh",
        }
    }
}

/// One decision set scored against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// False rejections / max(rejections, 1).
    pub fdp: f64,
    /// True rejections / signal count; None when there are no signals.
    pub power: Option<f64>,
    pub rejections: usize,
}

/// Scores a rejection mask against the ground truth.
pub fn evaluate(reject: &[bool], truth: &GroundTruth) -> Result<Evaluation> {
    if reject.len() != truth.mask.values().len() {
        return Err(Error::Shape(format!(
            "decision field has {} entries, truth has {}",
            reject.len(),
            truth.mask.values().len()
        )));
    }
    let rejections = reject.iter().filter(|&&r| r).count();
    let true_rej = reject
        .iter()
        .zip(truth.mask.values())
        .filter(|&(&r, &t)| r && t)
        .count();
    let false_rej = rejections - true_rej;
    let signals = truth.signal_count();
    Ok(Evaluation {
        fdp: false_rej as f64 / (rejections.max(1)) as f64,
        power: (signals > 0).then(|| true_rej as f64 / signals as f64),
        rejections,
    })
}

/// Options for running the full detection pipeline on two groups.
#[derive(Debug, Clone)]
pub struct DetectOptions {
    pub scenario: Scenario,
    pub sera: SeraConfig,
    pub lambda: LambdaRule,
    /// Known nuisance covariances per group (oracle mode), in mode order
    /// with the mode of interest skipped.
    pub oracle_nuisances: Option<(Vec<SymMatrix>, Vec<SymMatrix>)>,
}

impl DetectOptions {
    pub fn new(scenario: Scenario, alpha: f64) -> Result<Self> {
        Ok(DetectOptions {
            scenario,
            sera: SeraConfig::new(alpha)?,
            lambda: LambdaRule::Auto,
            oracle_nuisances: None,
        })
    }
}

/// Full pipeline output for one pair of groups.
#[derive(Debug, Clone)]
pub struct Detection {
    pub estimates: (GroupEstimates, GroupEstimates),
    pub stats: StatField,
    pub decisions: DecisionSet,
    pub conditioning_warning: bool,
}

/// Transformation, estimation, statistic pairs, and the reranking decision
/// for two observation groups.
pub fn detect(
    group1: &[DenseTensor],
    group2: &[DenseTensor],
    k_star: usize,
    opts: &DetectOptions,
) -> Result<Detection> {
    let (n1, n2) = match &opts.oracle_nuisances {
        Some((a, b)) => (Some(a.as_slice()), Some(b.as_slice())),
        None => (None, None),
    };
    let tg1 = transform_group(group1, k_star, n1)?;
    let tg2 = transform_group(group2, k_star, n2)?;
    let estimate = |tg: &crate::transform::TransformedGroup| -> Result<GroupEstimates> {
        match opts.scenario {
            Scenario::Corr => corr_estimates(tg),
            Scenario::Pcorr => {
                let fit = nodewise_regress(tg, opts.lambda)?;
                Ok(pcorr_estimates(tg, &fit)?.estimates)
            }
        }
    };
    let e1 = estimate(&tg1)?;
    let e2 = estimate(&tg2)?;
    let stats = stat_pairs(&e1, &e2)?;
    let decisions = sera_run(stats.t.values(), stats.u.values(), &opts.sera)?;
    Ok(Detection {
        estimates: (e1, e2),
        stats,
        decisions,
        conditioning_warning: tg1.conditioning_warning || tg2.conditioning_warning,
    })
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub shape: Vec<usize>,
    pub n1: usize,
    pub n2: usize,
    pub k_star: usize,
    pub scenario: Scenario,
    pub design: ModeDesign,
    pub nuisance: NuisanceSetting,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub lambda: LambdaRule,
    /// When set, wall-clock seconds are reported; off by default so reruns
    /// are byte-identical.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shape.len() < 2 {
            return Err(Error::Domain("need at least 2 tensor modes".into()));
        }
        if self.shape.iter().any(|&m| m < 2) {
            return Err(Error::Domain("every mode size must be >= 2".into()));
        }
        if self.k_star >= self.shape.len() {
            return Err(Error::Index(format!(
                "mode of interest {} out of range for order {}",
                self.k_star,
                self.shape.len()
            )));
        }
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::Domain("both groups need at least 2 observations".into()));
        }
        if self.replications == 0 {
            return Err(Error::Domain("need at least one replication".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no methods selected".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "level must lie in (0,1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-method aggregate over the successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub fdr: f64,
    pub fdr_se: f64,
    /// None when no replication had any true signal.
    pub power: Option<f64>,
    pub power_se: Option<f64>,
    pub mean_rejections: f64,
    /// None when timing is disabled.
    pub seconds: Option<f64>,
}

/// Full experiment output.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<MethodSummary>,
    pub replications_used: usize,
    /// (replication index, derived seed, message) for each failure.
    pub failures: Vec<(usize, u64, String)>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// One replication: generate structures and data, run every requested
/// method on the shared draws, score against the truth.
fn run_replication(
    cfg: &ExperimentConfig,
    rep: usize,
) -> Result<Vec<(Method, Evaluation)>> {
    let mut rng = stream_rng(cfg.seed, rep as u64);
    let order = cfg.shape.len();
    let mk = cfg.shape[cfg.k_star];

    // mode-of-interest structures and the alteration mask
    let (p1, p2, truth) = match cfg.design {
        ModeDesign::Pair(a, b) => {
            let p1 = gen_structure(a, mk, &mut rng)?;
            let p2 = gen_structure(b, mk, &mut rng)?;
            let truth = truth_from_targets(&p1, &p2)?;
            (p1, p2, truth)
        }
        ModeDesign::Split(base) => {
            let sp = split_pair(base, mk, &mut rng)?;
            (sp.sigma1, sp.sigma2, sp.truth)
        }
    };
    // in the partial-correlation scenario the structures are precision
    // matrices; sampling needs their inverses
    let (s1_star, s2_star) = match cfg.scenario {
        Scenario::Corr => (p1, p2),
        Scenario::Pcorr => (p1.try_inverse()?, p2.try_inverse()?),
    };

    let (nm1, nm2) = cfg.nuisance.models();
    let mut sigmas1 = Vec::with_capacity(order);
    let mut sigmas2 = Vec::with_capacity(order);
    let mut nuis1 = Vec::new();
    let mut nuis2 = Vec::new();
    for k in 0..order {
        if k == cfg.k_star {
            sigmas1.push(s1_star.clone());
            sigmas2.push(s2_star.clone());
        } else {
            let a = gen_structure(nm1, cfg.shape[k], &mut rng)?;
            let b = gen_structure(nm2, cfg.shape[k], &mut rng)?;
            sigmas1.push(a.clone());
            sigmas2.push(b.clone());
            nuis1.push(a);
            nuis2.push(b);
        }
    }

    let mean1 = gen_mean(&cfg.shape, 3.0, &mut rng)?;
    let mean2 = gen_mean(&cfg.shape, 2.0, &mut rng)?;
    let group1 = sample_group(&mean1, &sigmas1, cfg.n1, &mut rng)?;
    let group2 = sample_group(&mean2, &sigmas2, cfg.n2, &mut rng)?;

    let mut base_opts = DetectOptions::new(cfg.scenario, cfg.alpha)?;
    base_opts.lambda = cfg.lambda;

    // the data-driven detection is shared by T-SERA and T-BH
    let need_data = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::TSera | Method::TBh));
    let data_det = if need_data {
        Some(detect(&group1, &group2, cfg.k_star, &base_opts)?)
    } else {
        None
    };
    let oracle_det = if cfg.methods.contains(&Method::TSeraOracle) {
        let mut opts = base_opts.clone();
        opts.oracle_nuisances = Some((nuis1, nuis2));
        Some(detect(&group1, &group2, cfg.k_star, &opts)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let reject: Vec<bool> = match method {
            Method::TSera => data_det.as_ref().unwrap().decisions.reject.clone(),
            Method::TSeraOracle => oracle_det.as_ref().unwrap().decisions.reject.clone(),
            Method::TBh => {
                let det = data_det.as_ref().unwrap();
                let p = p_values(det.stats.t.values())?;
                bh_decide(&p, cfg.alpha)?
            }
        };
        out.push((method, evaluate(&reject, &truth)?));
    }
    Ok(out)
}

/// Runs all replications in parallel with counter-based seeding and folds
/// the per-method scores in replication order. Fails when more than 5% of
/// replications error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let reps: Vec<(usize, Result<Vec<(Method, Evaluation)>>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| (r, run_replication(cfg, r)))
        .collect();

    let mut failures = Vec::new();
    let mut per_method: Vec<Vec<Evaluation>> = vec![Vec::new(); cfg.methods.len()];
    for (rep, outcome) in reps {
        match outcome {
            Ok(scored) => {
                for (slot, (_, ev)) in scored.into_iter().enumerate() {
                    per_method[slot].push(ev);
                }
            }
            Err(e) => failures.push((rep, derive_seed(cfg.seed, rep as u64), e.to_string())),
        }
    }
    if failures.len() * 20 > cfg.replications {
        return Err(Error::NonConvergence(format!(
            "{} of {} replications failed (first: rep {} seed {}: {})",
            failures.len(),
            cfg.replications,
            failures[0].0,
            failures[0].1,
            failures[0].2
        )));
    }
    let used = cfg.replications - failures.len();
    if used == 0 {
        return Err(Error::NonConvergence("every replication failed".into()));
    }
    let elapsed = start.elapsed().as_secs_f64();

    let rows = cfg
        .methods
        .iter()
        .zip(&per_method)
        .map(|(&method, evs)| {
            let fdps: Vec<f64> = evs.iter().map(|e| e.fdp).collect();
            let (fdr, fdr_se) = mean_se(&fdps);
            let powers: Vec<f64> = evs.iter().filter_map(|e| e.power).collect();
            let (power, power_se) = if powers.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_se(&powers);
                (Some(m), Some(s))
            };
            let mean_rejections =
                evs.iter().map(|e| e.rejections as f64).sum::<f64>() / evs.len() as f64;
            MethodSummary {
                method,
                fdr,
                fdr_se,
                power,
                power_se,
                mean_rejections,
                seconds: cfg.timing.then_some(elapsed),
            }
        })
        .collect();
    Ok(ExperimentResult { rows, replications_used: used, failures })
}

/// Kolmogorov-Smirnov statistic against the uniform distribution on [0,1].
pub fn ks_uniform_statistic(p: &[f64]) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let hi = (i + 1) as f64 / n - v;
            let lo = v - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0f64, f64::max)
}
