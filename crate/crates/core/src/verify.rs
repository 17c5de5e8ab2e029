//! Property suite run by `phplate verify`: stencil oracles, conservation,
//! monotonicity, invariant drift and refinement ratios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{InitialShape, Mode, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{BoundaryConditions, Edge, EdgeCondition, Field, Grid, MultiIndex};
use crate::plate::PortEvaluation;
use crate::simulate::{run, System};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PHPLATE_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub measured: String,
    pub allowed: String,
}

impl CheckResult {
    fn new(name: &'static str, pass: bool, measured: String, allowed: &str) -> Self {
        Self {
            name,
            pass,
            measured,
            allowed: allowed.to_string(),
        }
    }
}

type Check = fn(&RunConfig) -> Result<CheckResult>;

const CHECKS: &[(&str, Check)] = &[
    ("stencil oracle", stencil_oracle),
    ("assembled operator", assembled_operator),
    ("open-loop conservation", conservation),
    ("mode-(1,1) frequency", modal_frequency),
    ("power balance refinement", power_balance),
    ("time order", time_order),
    ("closed-loop dissipativity", closed_loop),
    ("observer error energy", observer_energy),
];

/// Names of the checks in execution order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Thread count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{s}`"
            ))),
        },
    }
}

/// Runs every check, at most `threads` at a time. A check that errors is
/// reported as a failure carrying the error text.
pub fn run_suite(cfg: &RunConfig, threads: Option<usize>) -> Result<Vec<CheckResult>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        CHECKS
            .par_iter()
            .map(|(name, f)| {
                f(cfg).unwrap_or_else(|e| CheckResult::new(name, false, e.to_string(), "no error"))
            })
            .collect()
    }))
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Biharmonic of `(z¹)⁴` and `(z¹)²(z²)²` on a grid with dyadic spacing, so
/// that the samples carry no rounding.
fn stencil_oracle(cfg: &RunConfig) -> Result<CheckResult> {
    let g = Grid::new(
        cfg.n1,
        cfg.n2,
        (cfg.n1 - 1) as f64 / 32.0,
        (cfg.n2 - 1) as f64 / 32.0,
    )?;
    let mut worst: f64 = 0.0;
    let cases: [(fn(f64, f64) -> f64, f64); 2] =
        [(|x, _| x.powi(4), 24.0), (|x, y| x * x * y * y, 8.0)];
    for (f, exact) in cases {
        let w = Field::from_fn(&g, f);
        let mut parts = Vec::new();
        for (a, b, c) in [(4, 0, 1.0), (2, 2, 2.0), (0, 4, 1.0)] {
            parts.push((g.partial_interior(&w, MultiIndex::new(a, b))?, c));
        }
        for i in 2..g.n1() - 2 {
            for j in 2..g.n2() - 2 {
                let bih: f64 = parts
                    .iter()
                    .map(|(d, c)| c * d.values[[i - d.offset.0, j - d.offset.1]])
                    .sum();
                worst = worst.max((bih - exact).abs() / exact);
            }
        }
    }
    Ok(CheckResult::new(
        "stencil oracle",
        worst <= 1e-9,
        format!("{worst:.3e}"),
        "<= 1e-9",
    ))
}

fn assembled_operator(cfg: &RunConfig) -> Result<CheckResult> {
    let mut c = cfg.clone();
    c.mode = Mode::ControlledObserver;
    c.input.amplitude = [0.5, 0.25];
    c.input.omega = 1.0;
    let sys = System::new(&c)?;
    let l = sys.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut x: Vec<f64> = (0..l.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for k in 0..l.n {
            if sys.plate.dirichlet_mask()[k] {
                for off in [l.w(), l.p(), l.w_hat(), l.p_hat()] {
                    x[off + k] = 0.0;
                }
            }
        }
        let a = sys.rhs(0.3, &x);
        let b = sys.modular_rhs(0.3, &x)?;
        let scale = max_abs(b.iter().copied());
        worst = worst.max(max_abs(a.iter().zip(&b).map(|(u, v)| u - v)) / scale);
    }
    Ok(CheckResult::new(
        "assembled operator",
        worst <= 1e-12,
        format!("{worst:.3e}"),
        "<= 1e-12 relative",
    ))
}

fn clamped_free() -> Result<BoundaryConditions> {
    BoundaryConditions::new(&[
        (Edge::Left, EdgeCondition::Clamped),
        (Edge::Bottom, EdgeCondition::Free),
        (Edge::Right, EdgeCondition::Free),
        (Edge::Top, EdgeCondition::Free),
    ])
}

fn conservation(cfg: &RunConfig) -> Result<CheckResult> {
    let mut c = cfg.clone();
    c.mode = Mode::OpenLoop;
    c.bc = clamped_free()?;
    c.input = Default::default();
    c.initial.p_amp = 1.0;
    c.sim.t_final = 5.0;
    let (_, audit) = run(&c)?;
    let h0 = audit.records[0].h;
    let rel = (audit.records.last().map_or(h0, |r| r.h) - h0).abs() / h0;
    Ok(CheckResult::new(
        "open-loop conservation",
        rel <= 1e-8,
        format!("{rel:.3e}"),
        "|H(5) - H(0)|/H(0) <= 1e-8",
    ))
}

fn modal_frequency(cfg: &RunConfig) -> Result<CheckResult> {
    let mut c = cfg.clone();
    c.mode = Mode::OpenLoop;
    c.bc = BoundaryConditions::simply_supported();
    c.input = Default::default();
    c.initial.w_shape = InitialShape::Mode11;
    c.initial.w_amp = 1e-3;
    c.initial.p_amp = 0.0;
    c.sim.t_final = 2.0;
    c.sim.record_every = 1;
    let mut sim = crate::simulate::Simulation::new(&c)?;
    let centre = (c.n1 / 2, c.n2 / 2);
    let mut prev: Option<(f64, f64)> = None;
    let mut crossings = Vec::new();
    sim.run(|s, r| {
        let w = s.plant().w.get(centre.0, centre.1);
        if let Some((t0, w0)) = prev {
            if w0 != 0.0 && w0.signum() != w.signum() {
                crossings.push(t0 + (r.t - t0) * w0 / (w0 - w));
            }
        }
        prev = Some((r.t, w));
    })?;
    if crossings.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: crossings.len(),
        });
    }
    let n = crossings.len();
    let omega = std::f64::consts::PI * (n - 1) as f64 / (crossings[n - 1] - crossings[0]);
    let p = c.plate;
    let pi2 = std::f64::consts::PI.powi(2);
    let exact = (p.d_e / p.rho_a).sqrt() * pi2 * (1.0 / (p.l1 * p.l1) + 1.0 / (p.l2 * p.l2));
    let rel = (omega - exact).abs() / exact;
    Ok(CheckResult::new(
        "mode-(1,1) frequency",
        rel <= 0.02,
        format!("{omega:.6} vs {exact:.6} ({rel:.2e})"),
        "<= 2% relative",
    ))
}

fn power_balance(cfg: &RunConfig) -> Result<CheckResult> {
    let residual = |n: usize| -> Result<f64> {
        let mut c = cfg.clone();
        c.mode = Mode::OpenLoop;
        c.n1 = n;
        c.n2 = n;
        c.input = Default::default();
        c.input.amplitude = [1.0, 0.0];
        c.input.omega = 2.0 * std::f64::consts::PI;
        c.sim.t_final = 1.0;
        c.sim.record_every = 1;
        let (_, audit) = run(&c)?;
        Ok(max_abs(
            audit.power_balance_residual(PortEvaluation::Measured)?,
        ))
    };
    let ratio = residual(21)? / residual(41)?;
    Ok(CheckResult::new(
        "power balance refinement",
        (3.0..=5.0).contains(&ratio),
        format!("{ratio:.3}"),
        "21 -> 41 ratio in [3, 5]",
    ))
}

fn time_order(cfg: &RunConfig) -> Result<CheckResult> {
    let state_at = |dt: f64| -> Result<Vec<f64>> {
        let mut c = cfg.clone();
        c.mode = Mode::OpenLoop;
        c.n1 = 17;
        c.n2 = 17;
        c.bc = BoundaryConditions::simply_supported();
        c.input = Default::default();
        c.initial.w_shape = InitialShape::Mode11;
        c.initial.w_amp = 1.0;
        c.sim.t_final = 0.256;
        c.sim.dt = dt;
        c.sim.record_every = 1000;
        Ok(run(&c)?.0.state().to_vec())
    };
    let reference = state_at(0.5e-3)?;
    let err = |x: Vec<f64>| max_abs(x.iter().zip(&reference).map(|(a, b)| a - b));
    let ratio = err(state_at(8e-3)?) / err(state_at(4e-3)?);
    Ok(CheckResult::new(
        "time order",
        (3.5..=4.6).contains(&ratio),
        format!("{ratio:.3}"),
        "dt halving ratio ~4",
    ))
}

fn closed_loop(cfg: &RunConfig) -> Result<CheckResult> {
    let mut c = cfg.clone();
    c.mode = Mode::Controlled;
    let (_, audit) = run(&c)?;
    let eps = 10.0 * c.sim.solver_tol * audit.records[0].h_cl;
    let rise = audit.max_increase(|r| r.h_cl);
    let drift = audit.casimir_drift();
    let xc = audit.max_abs_xc();
    let casimir_ok = (0..2).all(|l| drift[l] <= c.tol_casimir.max(1e-3 * xc[l]));
    Ok(CheckResult::new(
        "closed-loop dissipativity",
        rise <= eps && casimir_ok,
        format!(
            "H_cl rise {rise:.2e}, Casimir drift ({:.2e}, {:.2e})",
            drift[0], drift[1]
        ),
        &format!("rise <= {eps:.2e}, drift <= tol_casimir"),
    ))
}

fn observer_energy(cfg: &RunConfig) -> Result<CheckResult> {
    let mut c = cfg.clone();
    c.mode = Mode::ControlledObserver;
    let (_, audit) = run(&c)?;
    let h0 = audit.records[0].h_err_d;
    let eps = 10.0 * c.sim.solver_tol * h0;
    let rise = audit.max_increase(|r| r.h_err_d);
    Ok(CheckResult::new(
        "observer error energy",
        rise <= eps,
        format!("rise {rise:.2e}"),
        &format!("<= {eps:.2e}"),
    ))
}
