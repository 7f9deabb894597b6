//! File formats (tensor files, group manifests, plain-text configs, result
//! CSVs) and the command-line surface: simulate, test, bench, sera.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{
    detect, run_experiment, DetectOptions, ExperimentConfig, Method, ModeDesign,
    NuisanceSetting, Scenario,
};
use crate::linalg::SymMatrix;
use crate::sera::{estimate_pi, p_values, screen_tau, sera_decide, SeraConfig};
use crate::simgen::{gen_mean, gen_structure, sample_group, split_pair, stream_rng,
    truth_from_targets, GroundTruth, StructureModel};
use crate::stats_pcorr::LambdaRule;
use crate::tensor::DenseTensor;

// ---------------------------------------------------------------------------
// tensor files

/// Writes a tensor in the v1 text format: a `tensor v1` header, a shape
/// line, then the values in last-index-fastest order at 17 significant
/// digits.
pub fn write_tensor(t: &DenseTensor, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("tensor v1\n");
    out.push_str("shape:");
    for m in t.shape() {
        write!(out, " {m}").unwrap();
    }
    out.push('\n');
    for row in t.data().chunks(8) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Reads a v1 tensor file.
pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty tensor file".into() })?;
    if header.trim() != "tensor v1" {
        return Err(Error::Parse { line: 1, msg: format!("bad header: {header:?}") });
    }
    let (_, shape_line) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 2, msg: "missing shape line".into() })?;
    let rest = shape_line
        .trim()
        .strip_prefix("shape:")
        .ok_or_else(|| Error::Parse { line: 2, msg: format!("bad shape line: {shape_line:?}") })?;
    let shape: Vec<usize> = rest
        .split_whitespace()
        .map(|tok| {
            tok.parse::<usize>()
                .map_err(|_| Error::Parse { line: 2, msg: format!("bad mode size: {tok:?}") })
        })
        .collect::<Result<_>>()?;
    if shape.is_empty() || shape.iter().any(|&m| m == 0) {
        return Err(Error::Parse { line: 2, msg: "shape must list positive sizes".into() });
    }
    let expected: usize = shape.iter().product();
    let mut data = Vec::with_capacity(expected);
    for (idx, line) in lines {
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("bad value: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("non-finite value: {tok}"),
                });
            }
            data.push(v);
        }
    }
    if data.len() != expected {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("shape declares {expected} values, file has {}", data.len()),
        });
    }
    DenseTensor::new(shape, data)
}

/// Reads a symmetric matrix stored as an order-2 tensor file.
pub fn read_matrix(path: &Path) -> Result<SymMatrix> {
    let t = read_tensor(path)?;
    if t.order() != 2 || t.shape()[0] != t.shape()[1] {
        return Err(Error::Shape(format!(
            "{}: expected a square order-2 tensor, got shape {:?}",
            path.display(),
            t.shape()
        )));
    }
    let m = t.shape()[0];
    Ok(SymMatrix::from_fn(m, |i, j| {
        0.5 * (t.get(&[i, j]).unwrap() + t.get(&[j, i]).unwrap())
    }))
}

/// Writes a symmetric matrix as an order-2 tensor file.
pub fn write_matrix(s: &SymMatrix, path: &Path) -> Result<()> {
    let m = s.dim();
    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            data.push(s.get(i, j));
        }
    }
    write_tensor(&DenseTensor::new(vec![m, m], data)?, path)
}

// ---------------------------------------------------------------------------
// manifests

/// Reads a group manifest: one tensor file path per line (relative paths
/// resolve against the manifest's directory), blank lines and `#` comments
/// skipped. Requires at least two observations of one common shape.
pub fn read_manifest(path: &Path) -> Result<Vec<DenseTensor>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut group = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let entry = line.trim();
        if entry.is_empty() || entry.starts_with('#') {
            continue;
        }
        let mut p = PathBuf::from(entry);
        if p.is_relative() {
            p = base.join(p);
        }
        let t = read_tensor(&p)?;
        if let Some(first) = group.first() {
            let f: &DenseTensor = first;
            if f.shape() != t.shape() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!(
                        "shape {:?} does not match the group shape {:?}",
                        t.shape(),
                        f.shape()
                    ),
                });
            }
        }
        group.push(t);
    }
    if group.len() < 2 {
        return Err(Error::Domain(format!(
            "{}: a group needs at least 2 observations, found {}",
            path.display(),
            group.len()
        )));
    }
    Ok(group)
}

/// Writes a manifest listing the given paths relative to the manifest dir.
pub fn write_manifest(paths: &[PathBuf], manifest: &Path) -> Result<()> {
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut out = String::new();
    for p in paths {
        let rel = p.strip_prefix(base).unwrap_or(p);
        out.push_str(&rel.to_string_lossy());
        out.push('\n');
    }
    atomic_write(manifest, out.as_bytes())
}

// ---------------------------------------------------------------------------
// plain-text config

/// Ordered plain-text configuration: `[section]` headers over `key = value`
/// lines; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Config {
    pub sections: Vec<(String, Vec<(String, String)>)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut current: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: idx + 1,
                    msg: format!("unterminated section header: {raw:?}"),
                })?;
                cfg.sections.push((name.trim().to_string(), Vec::new()));
                current = Some(cfg.sections.len() - 1);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got {raw:?}"),
            })?;
            let slot = match current {
                Some(s) => s,
                None => {
                    cfg.sections.push((String::new(), Vec::new()));
                    current = Some(cfg.sections.len() - 1);
                    cfg.sections.len() - 1
                }
            };
            cfg.sections[slot]
                .1
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            if !name.is_empty() {
                writeln!(out, "[{name}]").unwrap();
            }
            for (k, v) in entries {
                writeln!(out, "{k} = {v}").unwrap();
            }
        }
        out
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|(name, _)| name == section)
            .flat_map(|(_, entries)| entries.iter())
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.get(section, key).ok_or_else(|| {
            Error::Usage(format!("config is missing `{key}` in section [{section}]"))
        })
    }
}

/// FNV-1a hash of the canonical config text, for provenance headers.
pub fn config_hash(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------------------
// experiment config file

fn parse_lambda(text: &str) -> Result<LambdaRule> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("auto") {
        return Ok(LambdaRule::Auto);
    }
    if let Some(c) = t.strip_prefix("c=") {
        let c: f64 = c
            .parse()
            .map_err(|_| Error::Usage(format!("bad penalty scale: {text:?}")))?;
        if !(c > 0.0) {
            return Err(Error::Usage(format!("penalty scale must be positive: {text:?}")));
        }
        return Ok(LambdaRule::Scaled(c));
    }
    let v: f64 = t
        .parse()
        .map_err(|_| Error::Usage(format!("bad penalty value: {text:?}")))?;
    if !(v > 0.0) {
        return Err(Error::Usage(format!("penalty must be positive: {text:?}")));
    }
    Ok(LambdaRule::Fixed(v))
}

fn render_lambda(rule: LambdaRule) -> String {
    match rule {
        LambdaRule::Auto => "auto".into(),
        LambdaRule::Scaled(c) => format!("c={c}"),
        LambdaRule::Fixed(v) => format!("{v}"),
    }
}

/// Parses the mode-of-interest design: `<s1>-vs-<s2>` or `split:<base>`.
pub fn parse_design(text: &str) -> Result<ModeDesign> {
    let t = text.trim();
    if let Some(base) = t.strip_prefix("split:") {
        return Ok(ModeDesign::Split(StructureModel::from_name(base)?));
    }
    if let Some((a, b)) = t.split_once("-vs-") {
        return Ok(ModeDesign::Pair(
            StructureModel::from_name(a)?,
            StructureModel::from_name(b)?,
        ));
    }
    Err(Error::Usage(format!(
        "bad design {text:?}: expected `<s1>-vs-<s2>` or `split:<base>`"
    )))
}

fn parse_bool(text: &str) -> Result<bool> {
    match text.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(Error::Usage(format!("bad boolean: {other:?}"))),
    }
}

/// Reads an experiment description from an `[experiment]` config section.
pub fn experiment_from_config(cfg: &Config) -> Result<ExperimentConfig> {
    let s = "experiment";
    let shape: Vec<usize> = cfg
        .require(s, "shape")?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Usage(format!("bad mode size: {t:?}")))
        })
        .collect::<Result<_>>()?;
    let parse_usize = |key: &str| -> Result<usize> {
        cfg.require(s, key)?
            .parse()
            .map_err(|_| Error::Usage(format!("bad value for `{key}`")))
    };
    let mode = parse_usize("mode")?;
    if mode == 0 || mode > shape.len() {
        return Err(Error::Usage(format!(
            "mode must be between 1 and {}, got {mode}",
            shape.len()
        )));
    }
    let methods: Vec<Method> = cfg
        .require(s, "methods")?
        .split([' ', ','])
        .filter(|t| !t.is_empty())
        .map(Method::from_name)
        .collect::<Result<_>>()?;
    let ec = ExperimentConfig {
        shape,
        n1: parse_usize("n1")?,
        n2: parse_usize("n2")?,
        k_star: mode - 1,
        scenario: Scenario::from_name(cfg.require(s, "scenario")?)?,
        design: parse_design(cfg.require(s, "design")?)?,
        nuisance: NuisanceSetting::from_name(cfg.require(s, "nuisance")?)?,
        methods,
        replications: parse_usize("replications")?,
        alpha: cfg
            .require(s, "alpha")?
            .parse()
            .map_err(|_| Error::Usage("bad value for `alpha`".into()))?,
        seed: cfg
            .require(s, "seed")?
            .parse()
            .map_err(|_| Error::Usage("bad value for `seed`".into()))?,
        lambda: match cfg.get(s, "lambda") {
            Some(v) => parse_lambda(v)?,
            None => LambdaRule::Auto,
        },
        timing: match cfg.get(s, "timing") {
            Some(v) => parse_bool(v)?,
            None => false,
        },
    };
    ec.validate()?;
    Ok(ec)
}

/// Renders an experiment description back into config text (round trip).
pub fn experiment_to_config(ec: &ExperimentConfig) -> Config {
    let shape = ec
        .shape
        .iter()
        .map(|m| m.to_string())
        .collect::<Vec<_>>()
        .join(" ");
    let methods = ec
        .methods
        .iter()
        .map(|m| m.name().to_string())
        .collect::<Vec<_>>()
        .join(" ");
    Config {
        sections: vec![(
            "experiment".into(),
            vec![
                ("shape".into(), shape),
                ("n1".into(), ec.n1.to_string()),
                ("n2".into(), ec.n2.to_string()),
                ("mode".into(), (ec.k_star + 1).to_string()),
                ("scenario".into(), ec.scenario.name().into()),
                ("design".into(), ec.design.name()),
                ("nuisance".into(), ec.nuisance.name().into()),
                ("methods".into(), methods),
                ("replications".into(), ec.replications.to_string()),
                ("alpha".into(), ec.alpha.to_string()),
                ("seed".into(), ec.seed.to_string()),
                ("lambda".into(), render_lambda(ec.lambda)),
                ("timing".into(), if ec.timing { "on".into() } else { "off".into() }),
            ],
        )],
    }
}

// ---------------------------------------------------------------------------
// atomic writes and CSV plumbing

/// Writes a file via a temporary sibling and an atomic rename, so readers
/// never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Provenance comment header for output CSVs.
fn csv_header(config_text: &str, seed: Option<u64>) -> String {
    let mut out = String::new();
    writeln!(out, "# tool: tsera {}", crate::VERSION).unwrap();
    writeln!(out, "# config: {:016x}", config_hash(config_text)).unwrap();
    match seed {
        Some(s) => writeln!(out, "# seed: {s}").unwrap(),
        None => writeln!(out, "# seed: NA").unwrap(),
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".into(),
    }
}

// ---------------------------------------------------------------------------
// CLI

#[derive(Parser, Debug)]
#[command(
    name = "tsera",
    version,
    about = "Two-sample alteration detection for one tensor mode's dependence structure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate simulated observation groups and their ground truth.
    Simulate(SimulateArgs),
    /// Run the detection pipeline on two observation groups.
    Test(TestArgs),
    /// Run a Monte Carlo experiment and summarize FDR / power per method.
    Bench(BenchArgs),
    /// Run the reranking procedure on externally supplied statistic pairs.
    Sera(SeraArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Experiment config file ([experiment] section).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Manifest listing group-1 tensor files.
    #[arg(long)]
    group1: PathBuf,
    /// Manifest listing group-2 tensor files.
    #[arg(long)]
    group2: PathBuf,
    /// Mode of interest (1-based).
    #[arg(long)]
    mode: usize,
    /// corr or pcorr.
    #[arg(long, default_value = "corr")]
    scenario: String,
    /// Target FDR level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Known nuisance covariance files, comma separated: the K-1 group-1
    /// matrices in mode order, then the K-1 group-2 matrices.
    #[arg(long, value_delimiter = ',')]
    oracle_sigmas: Vec<PathBuf>,
    /// Penalty rule for pcorr: auto, a positive value, or c=<scale>.
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Experiment config file ([experiment] section).
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SeraArgs {
    /// CSV with columns T,U or p,U (header required).
    #[arg(long)]
    pairs: PathBuf,
    /// Target FDR level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

/// Parses and runs a CLI invocation (first element is the program name).
pub fn run_cli<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp
                    | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.to_string())),
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Sera(a) => cmd_sera(&a),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let cfg = Config::parse(&text)?;
    let ec = experiment_from_config(&cfg)?;
    let mut rng = stream_rng(ec.seed, 0);
    let mk = ec.shape[ec.k_star];

    let (p1, p2, truth) = match ec.design {
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
    let (s1_star, s2_star) = match ec.scenario {
        Scenario::Corr => (p1, p2),
        Scenario::Pcorr => (p1.try_inverse()?, p2.try_inverse()?),
    };
    let (nm1, nm2) = ec.nuisance.models();
    let mut sigmas1 = Vec::new();
    let mut sigmas2 = Vec::new();
    for k in 0..ec.shape.len() {
        if k == ec.k_star {
            sigmas1.push(s1_star.clone());
            sigmas2.push(s2_star.clone());
        } else {
            sigmas1.push(gen_structure(nm1, ec.shape[k], &mut rng)?);
            sigmas2.push(gen_structure(nm2, ec.shape[k], &mut rng)?);
        }
    }
    let mean1 = gen_mean(&ec.shape, 3.0, &mut rng)?;
    let mean2 = gen_mean(&ec.shape, 2.0, &mut rng)?;
    let group1 = sample_group(&mean1, &sigmas1, ec.n1, &mut rng)?;
    let group2 = sample_group(&mean2, &sigmas2, ec.n2, &mut rng)?;

    let dir = &args.out;
    for (g, group) in [(1usize, &group1), (2, &group2)] {
        let mut paths = Vec::new();
        for (i, obs) in group.iter().enumerate() {
            let p = dir.join(format!("group{g}/obs_{:03}.tensor", i + 1));
            write_tensor(obs, &p)?;
            paths.push(p);
        }
        write_manifest(&paths, &dir.join(format!("group{g}.manifest")))?;
    }
    for k in (0..ec.shape.len()).filter(|&k| k != ec.k_star) {
        write_matrix(&sigmas1[k], &dir.join(format!("sigma_g1_mode{}.tensor", k + 1)))?;
        write_matrix(&sigmas2[k], &dir.join(format!("sigma_g2_mode{}.tensor", k + 1)))?;
    }
    write_truth_csv(&truth, &text, ec.seed, &dir.join("truth.csv"))?;
    atomic_write(&dir.join("config.txt"), experiment_to_config(&ec).render().as_bytes())?;
    println!(
        "wrote {} + {} observations, manifests, nuisance matrices, and truth.csv to {}",
        ec.n1,
        ec.n2,
        dir.display()
    );
    Ok(())
}

fn write_truth_csv(truth: &GroundTruth, cfg_text: &str, seed: u64, path: &Path) -> Result<()> {
    let mut out = csv_header(cfg_text, Some(seed));
    out.push_str("i,j,signal\n");
    for (i, j, sig) in truth.mask.iter_pairs() {
        writeln!(out, "{},{},{}", i + 1, j + 1, u8::from(sig)).unwrap();
    }
    atomic_write(path, out.as_bytes())
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    let group1 = read_manifest(&args.group1)?;
    let group2 = read_manifest(&args.group2)?;
    let order = group1[0].order();
    if args.mode == 0 || args.mode > order {
        return Err(Error::Usage(format!(
            "mode must be between 1 and {order}, got {}",
            args.mode
        )));
    }
    let k_star = args.mode - 1;
    let scenario = Scenario::from_name(&args.scenario)?;
    let mut opts = DetectOptions::new(scenario, args.alpha)?;
    opts.lambda = parse_lambda(&args.lambda)?;
    if !args.oracle_sigmas.is_empty() {
        let want = 2 * (order - 1);
        if args.oracle_sigmas.len() != want {
            return Err(Error::Usage(format!(
                "expected {want} nuisance covariance files (group 1 then group 2), got {}",
                args.oracle_sigmas.len()
            )));
        }
        let mats: Vec<SymMatrix> = args
            .oracle_sigmas
            .iter()
            .map(|p| read_matrix(p))
            .collect::<Result<_>>()?;
        let (a, b) = mats.split_at(order - 1);
        opts.oracle_nuisances = Some((a.to_vec(), b.to_vec()));
    }
    let det = detect(&group1, &group2, k_star, &opts)?;
    if det.conditioning_warning {
        eprintln!("warning: nuisance covariance estimate was poorly conditioned");
    }

    let cfg_text = format!(
        "test group1={} group2={} mode={} scenario={} alpha={} lambda={}",
        args.group1.display(),
        args.group2.display(),
        args.mode,
        scenario.name(),
        args.alpha,
        args.lambda
    );
    let mut out = csv_header(&cfg_text, None);
    out.push_str("i,j,rho1,rho2,T,U,p,pi_hat,p_weighted,reject\n");
    let d = &det.decisions;
    for (idx, (i, j, t)) in det.stats.t.iter_pairs().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            j + 1,
            det.estimates.0.rho.get(i, j),
            det.estimates.1.rho.get(i, j),
            t,
            det.stats.u.values()[idx],
            d.p[idx],
            d.pi_hat[idx],
            d.p_w[idx],
            u8::from(d.reject[idx])
        )
        .unwrap();
    }
    atomic_write(&args.out, out.as_bytes())?;
    println!(
        "{} of {} pairs rejected at level {} (tau = {})",
        d.rejections(),
        d.reject.len(),
        args.alpha,
        d.tau
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(format!("{}: {e}", args.config.display())))?;
    let cfg = Config::parse(&text)?;
    let ec = experiment_from_config(&cfg)?;
    let canonical = experiment_to_config(&ec).render();
    let res = run_experiment(&ec)?;

    let mut out = csv_header(&canonical, Some(ec.seed));
    out.push_str(
        "method,scenario,design,R,fdr,fdr_se,power,power_se,mean_rejections,seconds,master_seed\n",
    );
    for row in &res.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.method.name(),
            ec.scenario.name(),
            ec.design.name(),
            res.replications_used,
            row.fdr,
            row.fdr_se,
            fmt_opt(row.power),
            fmt_opt(row.power_se),
            row.mean_rejections,
            fmt_opt(row.seconds),
            ec.seed
        )
        .unwrap();
    }
    for (rep, seed, msg) in &res.failures {
        writeln!(out, "# failed replication {rep} (seed {seed}): {msg}").unwrap();
    }
    atomic_write(&args.out, out.as_bytes())?;
    for row in &res.rows {
        println!(
            "{}: fdr = {:.4}, power = {}, mean rejections = {:.2}",
            row.method.name(),
            row.fdr,
            row.power.map_or("NA".into(), |p| format!("{p:.4}")),
            row.mean_rejections
        );
    }
    Ok(())
}

fn cmd_sera(args: &SeraArgs) -> Result<()> {
    let text = fs::read_to_string(&args.pairs)
        .map_err(|e| Error::Io(format!("{}: {e}", args.pairs.display())))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hidx, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty pairs file".into() })?;
    let cols: Vec<String> = header
        .split(',')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let t_col = cols.iter().position(|c| c == "t");
    let p_col = cols.iter().position(|c| c == "p");
    let u_col = cols.iter().position(|c| c == "u").ok_or_else(|| Error::Parse {
        line: hidx + 1,
        msg: "pairs file needs a U column".into(),
    })?;
    let primary = t_col.or(p_col).ok_or_else(|| Error::Parse {
        line: hidx + 1,
        msg: "pairs file needs a T or p column".into(),
    })?;
    let primary_is_t = t_col.is_some();

    let mut prim = Vec::new();
    let mut u = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < cols.len() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let parse = |tok: &str| -> Result<f64> {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                msg: format!("bad value: {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("non-finite value: {tok}"),
                });
            }
            Ok(v)
        };
        prim.push(parse(fields[primary])?);
        u.push(parse(fields[u_col])?);
    }

    let cfg = SeraConfig::new(args.alpha)?;
    let p = if primary_is_t { p_values(&prim)? } else { prim.clone() };
    if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Domain("p-values must lie in [0,1]".into()));
    }
    let (tau, mask, fallback) = screen_tau(&p, cfg.screen_level)?;
    let pi_hat = estimate_pi(&u, &mask, tau, &cfg)?;
    let ds = sera_decide(&p, &pi_hat, cfg.alpha)?;

    let cfg_text = format!("sera pairs={} alpha={}", args.pairs.display(), args.alpha);
    let mut out = csv_header(&cfg_text, None);
    out.push_str("index,p,U,pi_hat,p_weighted,reject\n");
    for idx in 0..p.len() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            idx + 1,
            p[idx],
            u[idx],
            ds.pi_hat[idx],
            ds.p_w[idx],
            u8::from(ds.reject[idx])
        )
        .unwrap();
    }
    atomic_write(&args.out, out.as_bytes())?;
    println!(
        "{} of {} hypotheses rejected at level {} (tau = {}{})",
        ds.rejections(),
        p.len(),
        args.alpha,
        tau,
        if fallback { ", screening fallback" } else { "" }
    );
    Ok(())
}
