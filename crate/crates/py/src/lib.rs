//! Python bindings: dense tensors, the two-group detection pipeline, the
//! reranking procedure on plain statistic vectors, and the simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tsera::{
    bh_decide, detect, sample_group, sera_run, DenseTensor, DetectOptions, Error,
    LambdaRule, ModeDesign, NuisanceSetting, Scenario, SeraConfig,
};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Usage(_) | Error::Domain(_) | Error::Shape(_) | Error::Index(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A dense tensor with the last index varying fastest.
#[pyclass(name = "Tensor")]
#[derive(Clone)]
struct PyTensor {
    inner: DenseTensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, values: Vec<f64>) -> PyResult<Self> {
        Ok(PyTensor { inner: DenseTensor::new(shape, values).map_err(to_py_err)? })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        self.inner.get(&index).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

/// Outcome of the reranking procedure.
#[pyclass(name = "SeraResult")]
struct PySeraResult {
    #[pyo3(get)]
    p: Vec<f64>,
    #[pyo3(get)]
    pi_hat: Vec<f64>,
    #[pyo3(get)]
    p_weighted: Vec<f64>,
    #[pyo3(get)]
    reject: Vec<bool>,
    #[pyo3(get)]
    tau: f64,
    #[pyo3(get)]
    q_hat: usize,
}

#[pymethods]
impl PySeraResult {
    fn rejections(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }
}

/// Full detection output: one entry per coordinate pair (i < j, 1-based),
/// in lexicographic order.
#[pyclass(name = "DetectionResult")]
struct PyDetection {
    #[pyo3(get)]
    pairs: Vec<(usize, usize)>,
    #[pyo3(get)]
    rho1: Vec<f64>,
    #[pyo3(get)]
    rho2: Vec<f64>,
    #[pyo3(get)]
    t: Vec<f64>,
    #[pyo3(get)]
    u: Vec<f64>,
    #[pyo3(get)]
    p: Vec<f64>,
    #[pyo3(get)]
    pi_hat: Vec<f64>,
    #[pyo3(get)]
    p_weighted: Vec<f64>,
    #[pyo3(get)]
    reject: Vec<bool>,
    #[pyo3(get)]
    tau: f64,
}

#[pymethods]
impl PyDetection {
    fn rejections(&self) -> usize {
        self.reject.iter().filter(|&&r| r).count()
    }
}

fn parse_lambda(text: &str) -> PyResult<LambdaRule> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("auto") {
        return Ok(LambdaRule::Auto);
    }
    if let Some(c) = t.strip_prefix("c=") {
        let c: f64 = c
            .parse()
            .map_err(|_| PyValueError::new_err(format!("bad penalty scale: {text:?}")))?;
        return Ok(LambdaRule::Scaled(c));
    }
    let v: f64 = t
        .parse()
        .map_err(|_| PyValueError::new_err(format!("bad penalty: {text:?}")))?;
    Ok(LambdaRule::Fixed(v))
}

/// Runs the full two-group pipeline. `mode` is 1-based; `scenario` is
/// "corr" or "pcorr".
#[pyfunction]
#[pyo3(signature = (group1, group2, mode, scenario="corr", alpha=0.05, lam="auto"))]
fn run_detect(
    group1: Vec<PyTensor>,
    group2: Vec<PyTensor>,
    mode: usize,
    scenario: &str,
    alpha: f64,
    lam: &str,
) -> PyResult<PyDetection> {
    if mode == 0 {
        return Err(PyValueError::new_err("mode is 1-based"));
    }
    let g1: Vec<DenseTensor> = group1.into_iter().map(|t| t.inner).collect();
    let g2: Vec<DenseTensor> = group2.into_iter().map(|t| t.inner).collect();
    let mut opts =
        DetectOptions::new(Scenario::from_name(scenario).map_err(to_py_err)?, alpha)
            .map_err(to_py_err)?;
    opts.lambda = parse_lambda(lam)?;
    let det = detect(&g1, &g2, mode - 1, &opts).map_err(to_py_err)?;
    let pairs: Vec<(usize, usize)> =
        det.stats.t.iter_pairs().map(|(i, j, _)| (i + 1, j + 1)).collect();
    let (rho1, rho2): (Vec<f64>, Vec<f64>) = det
        .stats
        .t
        .iter_pairs()
        .map(|(i, j, _)| (det.estimates.0.rho.get(i, j), det.estimates.1.rho.get(i, j)))
        .unzip();
    Ok(PyDetection {
        pairs,
        rho1,
        rho2,
        t: det.stats.t.values().to_vec(),
        u: det.stats.u.values().to_vec(),
        p: det.decisions.p.clone(),
        pi_hat: det.decisions.pi_hat.clone(),
        p_weighted: det.decisions.p_w.clone(),
        reject: det.decisions.reject.clone(),
        tau: det.decisions.tau,
    })
}

/// Runs the reranking procedure on a primary/auxiliary statistic field.
#[pyfunction]
#[pyo3(signature = (t, u, alpha=0.05))]
fn sera(t: Vec<f64>, u: Vec<f64>, alpha: f64) -> PyResult<PySeraResult> {
    let cfg = SeraConfig::new(alpha).map_err(to_py_err)?;
    let ds = sera_run(&t, &u, &cfg).map_err(to_py_err)?;
    Ok(PySeraResult {
        p: ds.p.clone(),
        pi_hat: ds.pi_hat.clone(),
        p_weighted: ds.p_w.clone(),
        reject: ds.reject.clone(),
        tau: ds.tau,
        q_hat: ds.q_hat,
    })
}

/// Classical step-up baseline on raw p-values.
#[pyfunction]
#[pyo3(signature = (p, alpha=0.05))]
fn bh(p: Vec<f64>, alpha: f64) -> PyResult<Vec<bool>> {
    bh_decide(&p, alpha).map_err(to_py_err)
}

/// Draws two simulated observation groups plus the ground-truth signal
/// mask over 1-based coordinate pairs of the mode of interest.
#[pyfunction]
#[pyo3(signature = (shape, n1, n2, mode, scenario="corr", design="band-vs-hub", nuisance="ar", seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    shape: Vec<usize>,
    n1: usize,
    n2: usize,
    mode: usize,
    scenario: &str,
    design: &str,
    nuisance: &str,
    seed: u64,
) -> PyResult<(Vec<PyTensor>, Vec<PyTensor>, Vec<(usize, usize)>)> {
    if mode == 0 || mode > shape.len() {
        return Err(PyValueError::new_err(format!(
            "mode must be between 1 and {}",
            shape.len()
        )));
    }
    let k_star = mode - 1;
    let scenario = Scenario::from_name(scenario).map_err(to_py_err)?;
    let design = tsera::cli_io::parse_design(design).map_err(to_py_err)?;
    let setting = NuisanceSetting::from_name(nuisance).map_err(to_py_err)?;
    let mut rng = tsera::stream_rng(seed, 0);
    let mk = shape[k_star];

    let (p1, p2, truth) = match design {
        ModeDesign::Pair(a, b) => {
            let p1 = tsera::gen_structure(a, mk, &mut rng).map_err(to_py_err)?;
            let p2 = tsera::gen_structure(b, mk, &mut rng).map_err(to_py_err)?;
            let truth =
                tsera::simgen::truth_from_targets(&p1, &p2).map_err(to_py_err)?;
            (p1, p2, truth)
        }
        ModeDesign::Split(base) => {
            let sp = tsera::split_pair(base, mk, &mut rng).map_err(to_py_err)?;
            (sp.sigma1, sp.sigma2, sp.truth)
        }
    };
    let (s1, s2) = match scenario {
        Scenario::Corr => (p1, p2),
        Scenario::Pcorr => (
            p1.try_inverse().map_err(to_py_err)?,
            p2.try_inverse().map_err(to_py_err)?,
        ),
    };
    let (nm1, nm2) = setting.models();
    let mut sigmas1 = Vec::new();
    let mut sigmas2 = Vec::new();
    for k in 0..shape.len() {
        if k == k_star {
            sigmas1.push(s1.clone());
            sigmas2.push(s2.clone());
        } else {
            sigmas1.push(tsera::gen_structure(nm1, shape[k], &mut rng).map_err(to_py_err)?);
            sigmas2.push(tsera::gen_structure(nm2, shape[k], &mut rng).map_err(to_py_err)?);
        }
    }
    let mean1 = tsera::gen_mean(&shape, 3.0, &mut rng).map_err(to_py_err)?;
    let mean2 = tsera::gen_mean(&shape, 2.0, &mut rng).map_err(to_py_err)?;
    let g1 = sample_group(&mean1, &sigmas1, n1, &mut rng).map_err(to_py_err)?;
    let g2 = sample_group(&mean2, &sigmas2, n2, &mut rng).map_err(to_py_err)?;

    let signals: Vec<(usize, usize)> = truth
        .mask
        .iter_pairs()
        .filter(|&(_, _, s)| s)
        .map(|(i, j, _)| (i + 1, j + 1))
        .collect();
    Ok((
        g1.into_iter().map(|t| PyTensor { inner: t }).collect(),
        g2.into_iter().map(|t| PyTensor { inner: t }).collect(),
        signals,
    ))
}

#[pymodule]
fn tsera_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PySeraResult>()?;
    m.add_class::<PyDetection>()?;
    m.add_function(wrap_pyfunction!(run_detect, m)?)?;
    m.add_function(wrap_pyfunction!(sera, m)?)?;
    m.add_function(wrap_pyfunction!(bh, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("__version__", tsera::VERSION)?;
    Ok(())
}
