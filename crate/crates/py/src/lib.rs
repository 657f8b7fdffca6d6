use num_complex::Complex64 as C64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vq_core::cli;
use vq_core::model;
use vq_core::mps::{product_state, MpsState, TrotterOrder};
use vq_core::polaron::{self, ModeBasis};
use vq_core::quench::{self, EvolveOptions, QuenchSchedule};
use vq_core::spectrum::{self, EigenRecord, Label, SearchOptions};
use vq_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParam { .. } | Error::DimensionCap { .. } | Error::InfiniteLifetime => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "ModelParams", module = "vqpy", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (omega=1.0, j_hop=0.4, n_sites=400, delta=0.3, g=0.5, qubit_site=None))]
    fn new(omega: f64, j_hop: f64, n_sites: usize, delta: f64, g: f64, qubit_site: Option<usize>) -> PyResult<Self> {
        let inner = model::ModelParams { omega, j_hop, n_sites, delta, g, qubit_site: qubit_site.unwrap_or(n_sites / 2) };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }
    #[getter]
    fn j_hop(&self) -> f64 {
        self.inner.j_hop
    }
    #[getter]
    fn n_sites(&self) -> usize {
        self.inner.n_sites
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    #[getter]
    fn g(&self) -> f64 {
        self.inner.g
    }
    #[getter]
    fn qubit_site(&self) -> usize {
        self.inner.qubit_site
    }

    /// Copy with a different coupling.
    fn with_g(&self, g: f64) -> PyResult<Self> {
        let inner = self.inner.with_g(g);
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn dispersion(&self, k: f64) -> f64 {
        model::dispersion(&self.inner, k)
    }

    fn coupling_gk(&self) -> Vec<f64> {
        model::coupling_gk(&self.inner)
    }

    /// `(gap_bottom, band_top, v_max)`.
    fn band(&self) -> (f64, f64, f64) {
        let b = self.inner.band();
        (b.gap_bottom, b.band_top, b.v_max)
    }

    /// Emitter lifetime, or `None` when the gap lies outside the band.
    fn decay_time_tau(&self) -> PyResult<Option<f64>> {
        Ok(model::decay_time_tau(&self.inner).map_err(to_py)?.value())
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("ModelParams(omega={}, j_hop={}, n_sites={}, delta={}, g={}, qubit_site={})", p.omega, p.j_hop, p.n_sites, p.delta, p.g, p.qubit_site)
    }
}

#[pyclass(name = "PolaronSolution", module = "vqpy", frozen)]
struct PyPolaronSolution {
    inner: polaron::PolaronSolution,
}

#[pymethods]
impl PyPolaronSolution {
    #[getter]
    fn delta_r(&self) -> f64 {
        self.inner.delta_r
    }
    #[getter]
    fn e_gs(&self) -> f64 {
        self.inner.e_gs
    }
    #[getter]
    fn f_k(&self) -> Vec<f64> {
        self.inner.f_k.clone()
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn excited_probability(&self) -> PyResult<f64> {
        polaron::excited_probability(&self.inner).map_err(to_py)
    }

    fn fidelity_to_bare(&self) -> f64 {
        polaron::fidelity_to_bare(&self.inner)
    }

    /// Real-space amplitudes `f_x`, one per site.
    fn fx(&self) -> Vec<C64> {
        polaron::polaron_fx(&self.inner)
    }

    /// `(E1, E2)` from the one- and two-excitation sectors.
    fn bound_state_energies(&self, py: Python<'_>) -> PyResult<(f64, f64)> {
        let sol = self.inner.clone();
        py.detach(move || polaron::bound_state_energies(&sol)).map_err(to_py)
    }
}

fn parse_basis(basis: &str) -> PyResult<ModeBasis> {
    match basis {
        "periodic" => Ok(ModeBasis::Periodic),
        "open-chain" => Ok(ModeBasis::OpenChain),
        other => Err(PyValueError::new_err(format!("basis must be 'periodic' or 'open-chain', got {other:?}"))),
    }
}

#[pyfunction]
#[pyo3(signature = (params, tol=1e-12, max_iter=10_000, basis="periodic"))]
fn solve_polaron(params: &PyModelParams, tol: f64, max_iter: usize, basis: &str) -> PyResult<PyPolaronSolution> {
    let opts = polaron::SolverOptions { tol, max_iter, basis: parse_basis(basis)?, ..Default::default() };
    let inner = polaron::solve_polaron_with(&params.inner, &opts).map_err(to_py)?;
    Ok(PyPolaronSolution { inner })
}

/// Lowest exact eigenvalues overall and per parity sector.
#[pyfunction]
fn exact_minima<'py>(py: Python<'py>, params: &PyModelParams, n_max: usize) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner;
    let m = py.detach(move || model::exact_sector_minima(&p, n_max)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("ground", m.ground)?;
    d.set_item("even", m.even)?;
    d.set_item("odd", m.odd)?;
    d.set_item("second_even", m.second_even)?;
    Ok(d)
}

#[pyclass(name = "EigenState", module = "vqpy", frozen)]
struct PyEigenState {
    inner: EigenRecord,
}

#[pymethods]
impl PyEigenState {
    #[getter]
    fn label(&self) -> &'static str {
        match self.inner.label {
            Label::Gs => "GS",
            Label::E1 => "E1",
            Label::E2 => "E2",
        }
    }
    #[getter]
    fn energy(&self) -> f64 {
        self.inner.energy
    }
    #[getter]
    fn parity(&self) -> i8 {
        self.inner.parity
    }
    /// `⟨a_x†a_x⟩` on every site.
    #[getter]
    fn profile(&self) -> Vec<f64> {
        self.inner.n_x_profile.clone()
    }
    /// Photon-number probabilities `P(n)`.
    #[getter]
    fn histogram(&self) -> Vec<f64> {
        self.inner.histogram.probabilities.clone()
    }
    #[getter]
    fn max_bond(&self) -> usize {
        self.inner.state.max_bond()
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.diagnostics.converged
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.diagnostics.warnings.clone()
    }

    /// Writes the state as a binary checkpoint.
    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.state.save(&path).map_err(to_py)
    }
}

fn order(trotter_order: u8) -> PyResult<TrotterOrder> {
    match trotter_order {
        2 => Ok(TrotterOrder::Second),
        4 => Ok(TrotterOrder::Fourth),
        o => Err(PyValueError::new_err(format!("trotter_order must be 2 or 4, got {o}"))),
    }
}

/// Ground state and the two lowest bound states.
#[pyfunction]
#[pyo3(signature = (params, n_max=5, d_max=20, dt_schedule=None, energy_tol=1e-7, seed=0, trotter_order=2))]
fn find_spectrum(
    py: Python<'_>,
    params: &PyModelParams,
    n_max: usize,
    d_max: usize,
    dt_schedule: Option<Vec<f64>>,
    energy_tol: f64,
    seed: u64,
    trotter_order: u8,
) -> PyResult<Vec<PyEigenState>> {
    let d = SearchOptions::default();
    let opts = SearchOptions {
        n_max,
        d_max,
        dt_schedule: dt_schedule.unwrap_or(d.dt_schedule.clone()),
        energy_tol,
        seed,
        order: order(trotter_order)?,
        ..d
    };
    let p = params.inner;
    let recs = py.detach(move || spectrum::find_spectrum(&p, &opts)).map_err(to_py)?;
    Ok(recs.into_iter().map(|inner| PyEigenState { inner }).collect())
}

#[pyclass(name = "QuenchResult", module = "vqpy", frozen)]
struct PyQuenchResult {
    series: quench::TimeSeries,
}

#[pymethods]
impl PyQuenchResult {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.series.times.clone()
    }
    /// One row of `⟨a_x†a_x⟩` per sample.
    #[getter]
    fn n_x(&self) -> Vec<Vec<f64>> {
        self.series.n_x.clone()
    }
    #[getter]
    fn p_qb(&self) -> Vec<f64> {
        self.series.p_qb.clone()
    }
    #[getter]
    fn energy(&self) -> Vec<f64> {
        self.series.energy.clone()
    }
    #[getter]
    fn parity(&self) -> Vec<f64> {
        self.series.parity.clone()
    }
    #[getter]
    fn norm_correction(&self) -> Vec<f64> {
        self.series.norm_correction.clone()
    }
    #[getter]
    fn max_step_norm_correction(&self) -> f64 {
        self.series.max_step_norm_correction
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.series.warnings.clone()
    }
}

/// Coupling quench from the vacuum, or detuning quench from the ground state
/// at `delta_far`.
#[pyfunction]
#[pyo3(signature = (params, t_off, t_end, protocol="coupling", dt=0.05, delta_far=10.0, n_max=5, d_max=20, sample_every=10, trotter_order=2))]
#[allow(clippy::too_many_arguments)]
fn run_quench(
    py: Python<'_>,
    params: &PyModelParams,
    t_off: f64,
    t_end: f64,
    protocol: &str,
    dt: f64,
    delta_far: f64,
    n_max: usize,
    d_max: usize,
    sample_every: usize,
    trotter_order: u8,
) -> PyResult<PyQuenchResult> {
    let p = params.inner;
    let detuning = match protocol {
        "coupling" => false,
        "detuning" => true,
        other => return Err(PyValueError::new_err(format!("protocol must be 'coupling' or 'detuning', got {other:?}"))),
    };
    let opts = EvolveOptions { n_max, d_max, sample_every, order: order(trotter_order)?, ..Default::default() };
    let series = py
        .detach(move || -> vq_core::Result<quench::TimeSeries> {
            let (schedule, initial) = if detuning {
                let search = SearchOptions { n_max, d_max, ..Default::default() };
                let gs = spectrum::find_eigenstate(&p.with_delta(delta_far), &search, Label::Gs, &[])?;
                (QuenchSchedule::detuning(p.g, p.delta, delta_far, t_off, t_end, dt), gs.state.convert::<C64>())
            } else {
                let vac: MpsState = product_state(&p, n_max, &vec![0; p.n_sites], d_max)?;
                (QuenchSchedule::coupling(p.g, p.delta, t_off, t_end, dt), vac)
            };
            Ok(quench::evolve(&initial, &schedule, &p, &opts)?.series)
        })
        .map_err(to_py)?;
    Ok(PyQuenchResult { series })
}

/// Validates a JSON run configuration and returns it with defaults filled in.
#[pyfunction]
fn parse_config(text: &str) -> PyResult<String> {
    let cfg = cli::parse_config(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    serde_json::to_string(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Runs a JSON configuration; returns the final status and the files written.
#[pyfunction]
fn run_config(py: Python<'_>, text: &str) -> PyResult<(String, Vec<String>)> {
    let cfg = cli::parse_config(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let out = py.detach(move || cli::run(&cfg)).map_err(|e| PyRuntimeError::new_err(format!("{e:#}")))?;
    let status = serde_json::to_value(out.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    Ok((status, out.files))
}

#[pymodule]
fn vqpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyPolaronSolution>()?;
    m.add_class::<PyEigenState>()?;
    m.add_class::<PyQuenchResult>()?;
    m.add_function(wrap_pyfunction!(solve_polaron, m)?)?;
    m.add_function(wrap_pyfunction!(exact_minima, m)?)?;
    m.add_function(wrap_pyfunction!(find_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(run_quench, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
