//! Python bindings: configs, simulations, audits and the verify suite.

use std::collections::BTreeMap;

use phplate::actuation::Actuation;
use phplate::config::{parse_config, Mode, RunConfig};
use phplate::grid::Field;
use phplate::simulate::{Audit, AuditRecord, Simulation as CoreSimulation};
use phplate::verify::run_suite;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: phplate::Error) -> PyErr {
    match e {
        phplate::Error::Divergence { .. } | phplate::Error::Solver(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows(f: &Field) -> Vec<Vec<f64>> {
    f.values().rows().into_iter().map(|r| r.to_vec()).collect()
}

type Columns = BTreeMap<&'static str, Vec<f64>>;

fn record_columns(records: &[AuditRecord]) -> Columns {
    let col = |f: fn(&AuditRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    BTreeMap::from([
        ("t", col(|r| r.t)),
        ("H", col(|r| r.h)),
        ("H_c", col(|r| r.h_c)),
        ("H_cl", col(|r| r.h_cl)),
        ("H_err", col(|r| r.h_err)),
        ("H_err_d", col(|r| r.h_err_d)),
        ("C1", col(|r| r.casimir[0])),
        ("C2", col(|r| r.casimir[1])),
        ("u1", col(|r| r.inputs[0])),
        ("u2", col(|r| r.inputs[1])),
        ("port_power", col(|r| r.port_power)),
        ("port_power_measured", col(|r| r.port_power_measured)),
        ("w_probe", col(|r| r.w_probe)),
        ("w_hat_probe", col(|r| r.w_hat_probe)),
    ])
}

/// Run configuration, parsed from `key = value` text.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(text).map_err(to_py)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.name()
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.inner.mode = Mode::parse(mode).map_err(to_py)?;
        Ok(())
    }

    #[getter]
    fn grid_size(&self) -> (usize, usize) {
        (self.inner.n1, self.inner.n2)
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.sim.dt
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.inner.sim.t_final
    }

    #[setter]
    fn set_t_final(&mut self, t: f64) -> PyResult<()> {
        let mut c = self.inner.clone();
        c.sim.t_final = t;
        c.validate().map_err(to_py)?;
        self.inner = c;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(mode={}, N1={}, N2={}, dt={}, T={})",
            self.inner.mode.name(),
            self.inner.n1,
            self.inner.n2,
            self.inner.sim.dt,
            self.inner.sim.t_final
        )
    }
}

/// A simulation advanced step by step or run to the final time.
#[pyclass(name = "Simulation")]
struct Simulation {
    inner: CoreSimulation,
}

#[pymethods]
impl Simulation {
    #[new]
    fn new(config: &Config) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSimulation::new(&config.inner).map_err(to_py)?,
        })
    }

    fn step(&mut self) -> PyResult<()> {
        self.inner.step().map_err(to_py)
    }

    /// Runs to the final time and returns the audit as named columns.
    fn run(&mut self) -> PyResult<Columns> {
        let audit: Audit = self.inner.run(|_, _| {}).map_err(to_py)?;
        Ok(record_columns(&audit.records))
    }

    /// Energy audit of the current state.
    fn audit(&self) -> PyResult<BTreeMap<&'static str, f64>> {
        let r = self.inner.audit().map_err(to_py)?;
        Ok(record_columns(&[r])
            .into_iter()
            .map(|(k, v)| (k, v[0]))
            .collect())
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }

    #[getter]
    fn steps_taken(&self) -> usize {
        self.inner.steps_taken()
    }

    fn deflection(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.plant().w)
    }

    fn momentum(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.plant().p)
    }

    fn observer_deflection(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.observer().map(|o| rows(&o.w))
    }

    fn controller_state(&self) -> [f64; 4] {
        self.inner.controller().xc
    }
}

/// Runs `config` to the end and returns the audit columns.
#[pyfunction]
fn run(config: &Config) -> PyResult<Columns> {
    Simulation::new(config)?.run()
}

/// Runs the property suite; returns `(name, passed, measured, allowed)` rows.
#[pyfunction]
#[pyo3(signature = (config, threads = None))]
fn verify(
    py: Python<'_>,
    config: &Config,
    threads: Option<usize>,
) -> PyResult<Vec<(&'static str, bool, String, String)>> {
    let cfg = config.inner.clone();
    let res = py.detach(move || run_suite(&cfg, threads)).map_err(to_py)?;
    Ok(res
        .into_iter()
        .map(|r| (r.name, r.pass, r.measured, r.allowed))
        .collect())
}

/// Actuator profiles and desired edge shape sampled on the grid.
#[pyfunction]
fn profile(config: &Config) -> PyResult<Columns> {
    let c = &config.inner;
    let g = c.grid().map_err(to_py)?;
    let a = Actuation::sample(&g, &c.actuator, &c.equilibrium).map_err(to_py)?;
    Ok(BTreeMap::from([
        ("z1", (0..g.n1()).map(|i| g.z1(i)).collect()),
        ("lambda_bottom", a.lambda_bottom.values),
        ("lambda_top", a.lambda_top.values),
        ("w_d_bottom", a.desired_bottom.values),
        ("w_d_top", a.desired_top.values),
    ]))
}

#[pymodule]
fn phplate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    Ok(())
}
