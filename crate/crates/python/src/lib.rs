//! Python bindings: friction solves, scenarios, simulation, entropy ledger,
//! audits and the proof-machinery utilities.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use maxwell_stefan::cli::{self, commands, output};
use maxwell_stefan::{self as ms, BinaryDiffusivities, EntropyReport, Error};

create_exception!(maxwell_stefan, MaxwellStefanError, PyValueError);
create_exception!(maxwell_stefan, StabilityFailure, MaxwellStefanError);

fn to_py(e: Error) -> PyErr {
    if e.is_stability_failure() {
        StabilityFailure::new_err(e.to_string())
    } else {
        MaxwellStefanError::new_err(e.to_string())
    }
}

fn diffusivities(d: Vec<Vec<f64>>) -> PyResult<BinaryDiffusivities> {
    BinaryDiffusivities::new(&d).map_err(to_py)
}

fn json_value<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Friction matrix `A(c)` as nested lists.
#[pyfunction]
fn friction_matrix(c: Vec<f64>, d: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let a = ms::assemble_friction_matrix(&c, &diffusivities(d)?).map_err(to_py)?;
    Ok(a.to_rows())
}

/// Constrained solve `A m = P b`, `m ⊥ √c`. Returns `(m, defect, condition)`.
#[pyfunction]
fn bott_duffin_solve(c: Vec<f64>, d: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<(Vec<f64>, f64, f64)> {
    let a = ms::assemble_friction_matrix(&c, &diffusivities(d)?).map_err(to_py)?;
    let sol = ms::bott_duffin_solve(&a, &b).map_err(to_py)?;
    Ok((sol.m, sol.defect, sol.condition))
}

/// Minimal-norm least-squares solution of `A m = b`.
#[pyfunction]
fn moore_penrose_solve(c: Vec<f64>, d: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Vec<f64>> {
    let a = ms::assemble_friction_matrix(&c, &diffusivities(d)?).map_err(to_py)?;
    if b.len() != a.n() {
        return Err(MaxwellStefanError::new_err(format!("b has {} entries, expected {}", b.len(), a.n())));
    }
    Ok(ms::moore_penrose_solve(&a, &b))
}

#[pyfunction]
fn dissipation_density(c: Vec<f64>, m: Vec<f64>, d: Vec<Vec<f64>>) -> PyResult<f64> {
    let d = diffusivities(d)?;
    if c.len() != d.n_species() || m.len() != d.n_species() {
        return Err(MaxwellStefanError::new_err("c, m and D must have matching sizes"));
    }
    Ok(ms::dissipation_density(&c, &m, &d))
}

#[pyclass(name = "Scenario", module = "maxwell_stefan", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: ms::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Parses the `key = value` scenario format.
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: cli::parse_scenario(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyScenario {
            inner: commands::load_scenario(&path, None).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        cli::format_scenario(&self.inner)
    }

    /// Same scenario on `2^levels` times as many cells.
    fn refined(&self, levels: u32) -> Self {
        PyScenario {
            inner: self.inner.refined(levels),
        }
    }

    /// Copy with the applied fluxes scaled by `1 - fraction`.
    fn with_flux_truncation(&self, fraction: f64) -> PyResult<Self> {
        let mut inner = self.inner.clone();
        inner.flux_truncation = fraction;
        inner.validate().map_err(to_py)?;
        Ok(PyScenario { inner })
    }

    #[getter]
    fn n_species(&self) -> usize {
        self.inner.n_species
    }

    #[getter]
    fn cells(&self) -> usize {
        self.inner.grid.num_cells()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.grid.domain_length()
    }

    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }

    #[getter]
    fn cfl(&self) -> f64 {
        self.inner.cfl
    }

    #[getter]
    fn preset(&self) -> &'static str {
        self.inner.initial.name()
    }

    #[getter]
    fn diffusivities(&self) -> Vec<Vec<f64>> {
        self.inner.d.to_matrix()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(species={}, cells={}, preset={}, t_end={})",
            self.inner.n_species,
            self.inner.grid.num_cells(),
            self.inner.initial.name(),
            self.inner.t_end
        )
    }
}

#[pyclass(name = "Trajectory", module = "maxwell_stefan", frozen)]
struct PyTrajectory {
    inner: ms::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn n_species(&self) -> usize {
        self.inner.n_species
    }

    /// Snapshot times.
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times()
    }

    #[getter]
    fn cell_centers(&self) -> Vec<f64> {
        (0..self.inner.grid.num_cells()).map(|k| self.inner.grid.cell_center(k)).collect()
    }

    /// Which species moved against their own gradient at some face.
    #[getter]
    fn uphill(&self) -> Vec<bool> {
        self.inner.uphill.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.snapshots.len()
    }

    /// Concentrations of snapshot `index` as rows `[c_1, …, c_n]` per cell.
    fn state(&self, index: isize) -> PyResult<Vec<Vec<f64>>> {
        let len = self.inner.snapshots.len() as isize;
        let k = if index < 0 { index + len } else { index };
        if !(0..len).contains(&k) {
            return Err(pyo3::exceptions::PyIndexError::new_err("snapshot index out of range"));
        }
        Ok(self.inner.snapshots[k as usize].state.concentrations.to_rows())
    }

    /// Per-step entropy ledger as a dict of equal-length lists.
    fn entropy_report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = EntropyReport::from_trajectory(&self.inner);
        let out = PyDict::new(py);
        out.set_item("t", r.times)?;
        out.set_item("entropy", r.entropy)?;
        out.set_item("dissipation_rate", r.dissipation_rate)?;
        out.set_item("cumulative_dissipation", r.cumulative_dissipation)?;
        out.set_item("residual", r.residual)?;
        out.set_item("pairing_gap", r.pairing_gap)?;
        out.set_item("repair_magnitude", self.inner.repair_log.clone())?;
        Ok(out)
    }

    /// `H(t) + ∫₀ᵗ D − H(0)` at every step.
    fn anomalous_residual(&self) -> Vec<f64> {
        ms::anomalous_residual(&self.inner)
    }

    /// Run-level diagnostics (the contents of `run_summary.json`).
    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_value(py, &output::run_summary_json(&self.inner))
    }

    /// Definition audit (the contents of `audit_report.json`).
    #[pyo3(signature = (continuity_threshold = maxwell_stefan::weak_form::DEFAULT_CONTINUITY_THRESHOLD))]
    fn audit<'py>(&self, py: Python<'py>, continuity_threshold: f64) -> PyResult<Bound<'py, PyAny>> {
        let report = ms::weak_form::audit_definition_with(&self.inner, continuity_threshold).map_err(to_py)?;
        json_value(py, &output::audit_report_json(&report))
    }

    fn entropy_series_csv(&self) -> String {
        output::entropy_series_csv(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Trajectory(steps={}, snapshots={}, dt={:e})",
            self.inner.n_steps,
            self.inner.snapshots.len(),
            self.inner.dt
        )
    }
}

#[pyfunction]
fn simulate(py: Python<'_>, scenario: &PyScenario) -> PyResult<PyTrajectory> {
    let sc = scenario.inner.clone();
    let inner = py.detach(move || ms::simulate(&sc)).map_err(to_py)?;
    Ok(PyTrajectory { inner })
}

/// Refinement study; one dict per level with residual norms and orders.
#[pyfunction]
fn refine<'py>(py: Python<'py>, scenario: &PyScenario, levels: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sc = scenario.inner.clone();
    let table = py.detach(move || commands::refine_scenario(&sc, levels)).map_err(to_py)?;
    let (ro, lo, wo, bo) = (table.residual_orders(), table.l2_orders(), table.weak_orders(), table.renorm_orders());
    let mut rows = Vec::with_capacity(table.levels.len());
    for (k, l) in table.levels.iter().enumerate() {
        let row = PyDict::new(py);
        row.set_item("level", l.level)?;
        row.set_item("cells", l.cells)?;
        row.set_item("steps", l.steps)?;
        row.set_item("dt", l.dt)?;
        row.set_item("sup_abs_residual", l.sup_abs_residual)?;
        row.set_item("residual_order", ro[k])?;
        row.set_item("l2_error", l.l2_error)?;
        row.set_item("l2_order", lo[k])?;
        row.set_item("weak_residual_norm", l.weak_residual_norm)?;
        row.set_item("weak_order", wo[k])?;
        row.set_item("renorm_residual_norm", l.renorm_residual_norm)?;
        row.set_item("renorm_order", bo[k])?;
        rows.push(row);
    }
    Ok(rows)
}

/// Runs a scenario file and writes the outputs into `out_dir`.
#[pyfunction]
#[pyo3(signature = (scenario_path, out_dir, emit = None))]
fn run<'py>(py: Python<'py>, scenario_path: PathBuf, out_dir: PathBuf, emit: Option<Vec<String>>) -> PyResult<Bound<'py, PyAny>> {
    let mut config = commands::RunConfig::new(scenario_path, out_dir);
    if let Some(emit) = emit {
        config.emit = emit.iter().map(|e| commands::Emit::parse(e)).collect::<Result<_, _>>().map_err(to_py)?;
    }
    let outcome = py.detach(move || commands::run(&config)).map_err(to_py)?;
    json_value(py, &output::run_summary_json(&outcome.trajectory))
}

#[pyfunction]
fn eta_sigma(t: f64, sigma: f64, horizon: f64) -> PyResult<f64> {
    ms::eta_sigma(t, sigma, horizon).map_err(to_py)
}

#[pyfunction]
fn mollify_time(signal: Vec<f64>, spacing: f64, epsilon: f64) -> PyResult<Vec<f64>> {
    ms::mollify_time(&signal, spacing, epsilon).map_err(to_py)
}

/// Returns `(lhs, rhs, gap)`.
#[pyfunction]
fn mol_commutation_check(v: Vec<f64>, phi: Vec<f64>, spacing: f64, epsilon: f64) -> PyResult<(f64, f64, f64)> {
    let c = ms::mol_commutation_check(&v, &phi, spacing, epsilon).map_err(to_py)?;
    Ok((c.lhs, c.rhs, c.gap))
}

/// Friction-matrix property suite; returns a summary dict.
#[pyfunction]
#[pyo3(signature = (seed = 0, cases = 1000))]
fn run_fuzz<'py>(py: Python<'py>, seed: u64, cases: usize) -> PyResult<Bound<'py, PyDict>> {
    let report = py.detach(move || cli::run_fuzz(seed, cases)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("passed", report.passed())?;
    out.set_item("cases", cases)?;
    out.set_item("max_kernel_ratio", report.structure.max_kernel_ratio)?;
    out.set_item("min_quadratic", report.structure.min_quadratic)?;
    out.set_item("max_quadratic_rel_error", report.structure.max_quadratic_rel_error)?;
    out.set_item("max_oracle_rel_difference", report.oracle.max_rel_difference)?;
    let failures: Vec<String> = report.structure.failures.into_iter().chain(report.oracle.failures).collect();
    out.set_item("failures", failures)?;
    Ok(out)
}

#[pymodule(name = "maxwell_stefan")]
fn maxwell_stefan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("MaxwellStefanError", py.get_type::<MaxwellStefanError>())?;
    m.add("StabilityFailure", py.get_type::<StabilityFailure>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(friction_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(bott_duffin_solve, m)?)?;
    m.add_function(wrap_pyfunction!(moore_penrose_solve, m)?)?;
    m.add_function(wrap_pyfunction!(dissipation_density, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(refine, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(eta_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(mollify_time, m)?)?;
    m.add_function(wrap_pyfunction!(mol_commutation_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_fuzz, m)?)?;
    Ok(())
}
