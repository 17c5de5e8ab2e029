//! Run configuration: a flat `key = value` file with `#` comments.
//!
//! Values use TOML scalar syntax, so strings are quoted
//! (`mode = "controlled"`). Every key is optional; omitted keys take the
//! defaults listed in [`KEYS`].

use toml::Value;

use crate::actuation::{ActuatorParams, EquilibriumParams};
use crate::controller::ControllerParams;
use crate::error::{Error, Result};
use crate::grid::{BoundaryConditions, Edge, EdgeCondition, Grid, PlateParams};
use crate::observer::{quarter_node, DiracMode};

/// Which subsystems are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    OpenLoop,
    Controlled,
    ControlledObserver,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "open-loop" => Ok(Mode::OpenLoop),
            "controlled" => Ok(Mode::Controlled),
            "controlled-observer" => Ok(Mode::ControlledObserver),
            _ => Err(Error::Parse(format!(
                "unknown mode `{s}` (expected open-loop, controlled or controlled-observer)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::OpenLoop => "open-loop",
            Mode::Controlled => "controlled",
            Mode::ControlledObserver => "controlled-observer",
        }
    }
}

/// Time integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub solver_tol: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 40.0,
            record_every: 10,
            solver_tol: 1e-12,
        }
    }
}

/// Open-loop voltages `u^λ(t) = constant_λ + amplitude_λ sin(ω t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OpenLoopInput {
    pub constant: [f64; 2],
    pub amplitude: [f64; 2],
    pub omega: f64,
}

impl OpenLoopInput {
    pub fn at(&self, t: f64) -> [f64; 2] {
        let s = (self.omega * t).sin();
        [
            self.constant[0] + self.amplitude[0] * s,
            self.constant[1] + self.amplitude[1] * s,
        ]
    }
}

/// Initial plate deflection shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialShape {
    #[default]
    Zero,
    /// `sin(π z¹/L1) sin(π z²/L2)`.
    Mode11,
    /// `(z¹/L1)²`.
    Parabola,
}

/// Initial plant state: `w = w_amp · shape`, `p = p_amp · (z¹/L1)²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialState {
    pub w_shape: InitialShape,
    pub w_amp: f64,
    pub p_amp: f64,
}

/// Observer gains and initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub k1: f64,
    pub k2: f64,
    pub kd11: f64,
    pub kd22: f64,
    pub dirac: DiracMode,
    /// Observer starts at `ŵ = −d (z¹)²`.
    pub d_init: f64,
    /// When false the correction terms are forced to zero.
    pub inject: bool,
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self {
            k1: 2000.0,
            k2: 2000.0,
            kd11: 2000.0,
            kd22: 2000.0,
            dirac: DiracMode::Node,
            d_init: 0.05,
            inject: true,
        }
    }
}

/// Everything needed to set up and run one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub plate: PlateParams,
    pub n1: usize,
    pub n2: usize,
    pub bc: BoundaryConditions,
    pub actuator: ActuatorParams,
    pub equilibrium: EquilibriumParams,
    /// Set-points are filled in from the actuation at setup.
    pub controller: ControllerParams,
    pub observer: ObserverGains,
    pub sim: SimConfig,
    pub mode: Mode,
    pub input: OpenLoopInput,
    pub initial: InitialState,
    pub tol_casimir: f64,
    /// Simulated time between deflection snapshots; 0 disables them.
    pub snapshot_every: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plate: PlateParams::default(),
            n1: 41,
            n2: 41,
            bc: BoundaryConditions::plate(),
            actuator: ActuatorParams::default(),
            equilibrium: EquilibriumParams::default(),
            controller: ControllerParams::default(),
            observer: ObserverGains::default(),
            sim: SimConfig::default(),
            mode: Mode::Controlled,
            input: OpenLoopInput::default(),
            initial: InitialState::default(),
            tol_casimir: 1e-3,
            snapshot_every: 10.0,
        }
    }
}

/// Documented keys with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("rho_A", "mass per unit area, > 0 (default 1)"),
    ("D_E", "flexural rigidity, > 0 (default 1)"),
    ("nu", "Poisson ratio, 0 <= nu < 0.5 (default 0.2)"),
    ("L1", "plate length along z1, > 0 (default 1)"),
    ("L2", "plate length along z2, > 0 (default 1)"),
    ("N1", "nodes along z1, >= 9 and N1 = 1 mod 4 (default 41)"),
    ("N2", "nodes along z2, >= 9 (default 41)"),
    (
        "bc_left",
        "clamped | free | actuated | simply-supported (default clamped)",
    ),
    ("bc_bottom", "edge condition (default actuated)"),
    ("bc_right", "edge condition (default free)"),
    ("bc_top", "edge condition (default actuated)"),
    ("Psi", "actuator amplitude (default 1)"),
    ("sigma", "actuator sharpness, > 0 (default 10)"),
    ("a", "target curvature coefficient, > 0 (default 0.1368)"),
    ("b", "target slope, > 0 (default 0.1315)"),
    ("c1", "energy-shaping stiffness, > 0 (default 5)"),
    ("c2", "energy-shaping stiffness, > 0 (default 5)"),
    ("Jc34", "controller interconnection (default 1)"),
    ("Rc33", "controller dissipation, PSD block (default 15)"),
    ("Rc34", "controller dissipation, PSD block (default 1)"),
    ("Rc44", "controller dissipation, PSD block (default 15)"),
    ("Gc31", "controller input map (default 1)"),
    ("Gc32", "controller input map (default 0)"),
    ("Gc41", "controller input map (default 0)"),
    ("Gc42", "controller input map (default 1)"),
    ("Mc33", "controller energy matrix, PD block (default 25)"),
    ("Mc34", "controller energy matrix, PD block (default 5)"),
    ("Mc44", "controller energy matrix, PD block (default 25)"),
    ("us1", "steady-state voltage (default -1)"),
    ("us2", "steady-state voltage (default -1)"),
    ("k1", "observer energy-shaping gain, > 0 (default 2000)"),
    ("k2", "observer energy-shaping gain, > 0 (default 2000)"),
    ("Kd11", "observer damping gain, > 0 (default 2000)"),
    ("Kd22", "observer damping gain, > 0 (default 2000)"),
    ("dirac", "node | hat (default node)"),
    (
        "d_obs",
        "observer initial curvature d in -d z1^2, finite (default 0.05)",
    ),
    ("inject", "observer correction on/off (default true)"),
    ("dt", "time step, > 0 (default 1e-3)"),
    ("T", "final time, T = 0 or T >= dt (default 40)"),
    ("record_every", "audit cadence in steps, >= 1 (default 10)"),
    ("solver_tol", "linear-solve tolerance, > 0 (default 1e-12)"),
    (
        "tol_casimir",
        "allowed relative Casimir drift, > 0 (default 1e-3)",
    ),
    (
        "snapshot_every",
        "time between snapshots, >= 0, 0 disables (default 10)",
    ),
    (
        "mode",
        "open-loop | controlled | controlled-observer (default controlled)",
    ),
    ("u1_const", "open-loop constant voltage (default 0)"),
    ("u2_const", "open-loop constant voltage (default 0)"),
    ("u1_amp", "open-loop sinusoid amplitude (default 0)"),
    ("u2_amp", "open-loop sinusoid amplitude (default 0)"),
    (
        "u_omega",
        "open-loop sinusoid angular frequency (default 0)",
    ),
    ("init_w", "zero | mode11 | parabola (default zero)"),
    ("init_w_amp", "initial deflection amplitude (default 0)"),
    (
        "init_p_amp",
        "initial momentum amplitude, p = amp (z1/L1)^2 (default 0)",
    ),
];

fn line_of(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |n| n + 1)
}

struct Reader<'a> {
    text: &'a str,
    table: toml::Table,
}

impl Reader<'_> {
    fn err(&self, key: &str, msg: String) -> Error {
        Error::Parse(format!("line {}: `{key}`: {msg}", line_of(self.text, key)))
    }

    fn float(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
        let v = match self.table.get(key) {
            None => return Ok(default),
            Some(Value::Float(f)) => *f,
            Some(Value::Integer(i)) => *i as f64,
            Some(other) => {
                return Err(self.err(key, format!("expected a number, got {other}")));
            }
        };
        if !v.is_finite() || !ok(v) {
            return Err(self.err(key, format!("value {v} out of range ({range})")));
        }
        Ok(v)
    }

    fn any(&self, key: &str, default: f64) -> Result<f64> {
        self.float(key, default, |_| true, "finite")
    }

    fn int(
        &self,
        key: &str,
        default: usize,
        ok: impl Fn(i64) -> bool,
        range: &str,
    ) -> Result<usize> {
        let v = match self.table.get(key) {
            None => return Ok(default),
            Some(Value::Integer(i)) => *i,
            Some(other) => return Err(self.err(key, format!("expected an integer, got {other}"))),
        };
        if !ok(v) {
            return Err(self.err(key, format!("value {v} out of range ({range})")));
        }
        Ok(v as usize)
    }

    fn string(&self, key: &str) -> Result<Option<&str>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(other) => Err(self.err(key, format!("expected a quoted string, got {other}"))),
        }
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.table.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(self.err(key, format!("expected true or false, got {other}"))),
        }
    }

    fn edge(&self, key: &str, default: EdgeCondition) -> Result<EdgeCondition> {
        Ok(match self.string(key)? {
            None => default,
            Some("clamped") => EdgeCondition::Clamped,
            Some("free") => EdgeCondition::Free,
            Some("actuated") => EdgeCondition::Actuated,
            Some("simply-supported") => EdgeCondition::SimplySupported,
            Some(s) => {
                return Err(self.err(
                    key,
                    format!("unknown condition `{s}` (clamped, free, actuated, simply-supported)"),
                ))
            }
        })
    }
}

/// Parses and validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
    for key in table.keys() {
        if !KEYS.iter().any(|(k, _)| k == key) {
            return Err(Error::Parse(format!(
                "line {}: unknown key `{key}`",
                line_of(text, key)
            )));
        }
    }
    let r = Reader { text, table };
    let d = RunConfig::default();
    let pos = |v: f64| v > 0.0;

    let plate = PlateParams {
        rho_a: r.float("rho_A", d.plate.rho_a, pos, "> 0")?,
        d_e: r.float("D_E", d.plate.d_e, pos, "> 0")?,
        nu: r.float(
            "nu",
            d.plate.nu,
            |v| (0.0..0.5).contains(&v),
            "0 <= nu < 0.5",
        )?,
        l1: r.float("L1", d.plate.l1, pos, "> 0")?,
        l2: r.float("L2", d.plate.l2, pos, "> 0")?,
    };
    let n1 = r.int(
        "N1",
        d.n1,
        |v| v >= 9 && (v - 1) % 4 == 0,
        ">= 9 and N1 = 1 mod 4",
    )?;
    let n2 = r.int("N2", d.n2, |v| v >= 9, ">= 9")?;
    let bc = BoundaryConditions::new(&[
        (Edge::Left, r.edge("bc_left", EdgeCondition::Clamped)?),
        (Edge::Bottom, r.edge("bc_bottom", EdgeCondition::Actuated)?),
        (Edge::Right, r.edge("bc_right", EdgeCondition::Free)?),
        (Edge::Top, r.edge("bc_top", EdgeCondition::Actuated)?),
    ])?;
    let actuator = ActuatorParams {
        psi: r.any("Psi", d.actuator.psi)?,
        sigma: r.float("sigma", d.actuator.sigma, pos, "> 0")?,
    };
    let equilibrium = EquilibriumParams {
        a: r.float("a", d.equilibrium.a, pos, "> 0")?,
        b: r.float("b", d.equilibrium.b, pos, "> 0")?,
    };
    let dc = d.controller;
    let controller = ControllerParams {
        c1: r.float("c1", dc.c1, pos, "> 0")?,
        c2: r.float("c2", dc.c2, pos, "> 0")?,
        jc34: r.any("Jc34", dc.jc34)?,
        rc33: r.float(
            "Rc33",
            dc.rc33,
            |v| v >= 0.0,
            ">= 0, R_c block positive semidefinite",
        )?,
        rc34: r.any("Rc34", dc.rc34)?,
        rc44: r.float(
            "Rc44",
            dc.rc44,
            |v| v >= 0.0,
            ">= 0, R_c block positive semidefinite",
        )?,
        g31: r.any("Gc31", dc.g31)?,
        g32: r.any("Gc32", dc.g32)?,
        g41: r.any("Gc41", dc.g41)?,
        g42: r.any("Gc42", dc.g42)?,
        mc33: r.float("Mc33", dc.mc33, pos, "> 0, M_c block positive definite")?,
        mc34: r.any("Mc34", dc.mc34)?,
        mc44: r.float("Mc44", dc.mc44, pos, "> 0, M_c block positive definite")?,
        us1: r.any("us1", dc.us1)?,
        us2: r.any("us2", dc.us2)?,
        xd1: 0.0,
        xd2: 0.0,
    };
    if controller.rc33 * controller.rc44 < controller.rc34 * controller.rc34 {
        return Err(r.err(
            "Rc34",
            format!(
                "value {} out of range (Rc34^2 <= Rc33 Rc44 for a positive semidefinite R_c block)",
                controller.rc34
            ),
        ));
    }
    if controller.mc33 * controller.mc44 <= controller.mc34 * controller.mc34 {
        return Err(r.err(
            "Mc34",
            format!(
                "value {} out of range (Mc34^2 < Mc33 Mc44 for a positive definite M_c block)",
                controller.mc34
            ),
        ));
    }
    let dirac = match r.string("dirac")? {
        None | Some("node") => DiracMode::Node,
        Some("hat") => DiracMode::Hat,
        Some(s) => return Err(r.err("dirac", format!("unknown value `{s}` (node, hat)"))),
    };
    let observer = ObserverGains {
        k1: r.float("k1", d.observer.k1, pos, "> 0")?,
        k2: r.float("k2", d.observer.k2, pos, "> 0")?,
        kd11: r.float("Kd11", d.observer.kd11, pos, "> 0")?,
        kd22: r.float("Kd22", d.observer.kd22, pos, "> 0")?,
        dirac,
        d_init: r.any("d_obs", d.observer.d_init)?,
        inject: r.boolean("inject", true)?,
    };
    let dt = r.float("dt", d.sim.dt, pos, "> 0")?;
    let t_final = r.float(
        "T",
        d.sim.t_final,
        |v| v == 0.0 || v >= dt,
        "T = 0 or T >= dt",
    )?;
    let sim = SimConfig {
        dt,
        t_final,
        record_every: r.int("record_every", d.sim.record_every, |v| v >= 1, ">= 1")?,
        solver_tol: r.float("solver_tol", d.sim.solver_tol, pos, "> 0")?,
    };
    let mode = match r.string("mode")? {
        None => d.mode,
        Some(s) => Mode::parse(s).map_err(|e| r.err("mode", e.to_string()))?,
    };
    let input = OpenLoopInput {
        constant: [r.any("u1_const", 0.0)?, r.any("u2_const", 0.0)?],
        amplitude: [r.any("u1_amp", 0.0)?, r.any("u2_amp", 0.0)?],
        omega: r.any("u_omega", 0.0)?,
    };
    let w_shape = match r.string("init_w")? {
        None | Some("zero") => InitialShape::Zero,
        Some("mode11") => InitialShape::Mode11,
        Some("parabola") => InitialShape::Parabola,
        Some(s) => {
            return Err(r.err(
                "init_w",
                format!("unknown shape `{s}` (zero, mode11, parabola)"),
            ))
        }
    };
    let initial = InitialState {
        w_shape,
        w_amp: r.any("init_w_amp", 0.0)?,
        p_amp: r.any("init_p_amp", 0.0)?,
    };
    let cfg = RunConfig {
        plate,
        n1,
        n2,
        bc,
        actuator,
        equilibrium,
        controller,
        observer,
        sim,
        mode,
        input,
        initial,
        tol_casimir: r.float("tol_casimir", d.tol_casimir, pos, "> 0")?,
        snapshot_every: r.float("snapshot_every", d.snapshot_every, |v| v >= 0.0, ">= 0")?,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::for_plate(&self.plate, self.n1, self.n2)
    }

    /// Re-checks every module-level invariant.
    pub fn validate(&self) -> Result<()> {
        self.plate.validate()?;
        let g = self.grid()?;
        quarter_node(&g)?;
        self.actuator.validate()?;
        self.equilibrium.validate()?;
        self.controller.validate()?;
        let s = &self.sim;
        crate::error::check(s.dt > 0.0, "dt", s.dt, "must be > 0")?;
        crate::error::check(
            s.t_final == 0.0 || s.t_final >= s.dt,
            "T",
            s.t_final,
            "must be 0 or >= dt",
        )?;
        crate::error::check(
            s.solver_tol > 0.0,
            "solver_tol",
            s.solver_tol,
            "must be > 0",
        )?;
        crate::error::check(
            s.record_every >= 1,
            "record_every",
            s.record_every as f64,
            "must be >= 1",
        )?;
        Ok(())
    }

    /// Renders the configuration in the file format accepted by
    /// [`parse_config`].
    pub fn to_text(&self) -> String {
        let cond = |c: EdgeCondition| match c {
            EdgeCondition::Clamped => "clamped",
            EdgeCondition::Free => "free",
            EdgeCondition::Actuated => "actuated",
            EdgeCondition::SimplySupported => "simply-supported",
        };
        let c = &self.controller;
        let o = &self.observer;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        let f = |v: f64| format!("{v:e}");
        put("rho_A", f(self.plate.rho_a));
        put("D_E", f(self.plate.d_e));
        put("nu", f(self.plate.nu));
        put("L1", f(self.plate.l1));
        put("L2", f(self.plate.l2));
        put("N1", self.n1.to_string());
        put("N2", self.n2.to_string());
        put("bc_left", format!("\"{}\"", cond(self.bc.get(Edge::Left))));
        put(
            "bc_bottom",
            format!("\"{}\"", cond(self.bc.get(Edge::Bottom))),
        );
        put(
            "bc_right",
            format!("\"{}\"", cond(self.bc.get(Edge::Right))),
        );
        put("bc_top", format!("\"{}\"", cond(self.bc.get(Edge::Top))));
        put("Psi", f(self.actuator.psi));
        put("sigma", f(self.actuator.sigma));
        put("a", f(self.equilibrium.a));
        put("b", f(self.equilibrium.b));
        for (k, v) in [
            ("c1", c.c1),
            ("c2", c.c2),
            ("Jc34", c.jc34),
            ("Rc33", c.rc33),
            ("Rc34", c.rc34),
            ("Rc44", c.rc44),
            ("Gc31", c.g31),
            ("Gc32", c.g32),
            ("Gc41", c.g41),
            ("Gc42", c.g42),
            ("Mc33", c.mc33),
            ("Mc34", c.mc34),
            ("Mc44", c.mc44),
            ("us1", c.us1),
            ("us2", c.us2),
            ("k1", o.k1),
            ("k2", o.k2),
            ("Kd11", o.kd11),
            ("Kd22", o.kd22),
        ] {
            put(k, f(v));
        }
        put(
            "dirac",
            match o.dirac {
                DiracMode::Node => "\"node\"".into(),
                DiracMode::Hat => "\"hat\"".into(),
            },
        );
        put("d_obs", f(o.d_init));
        put("inject", o.inject.to_string());
        put("dt", f(self.sim.dt));
        put("T", f(self.sim.t_final));
        put("record_every", self.sim.record_every.to_string());
        put("solver_tol", f(self.sim.solver_tol));
        put("tol_casimir", f(self.tol_casimir));
        put("snapshot_every", f(self.snapshot_every));
        put("mode", format!("\"{}\"", self.mode.name()));
        put("u1_const", f(self.input.constant[0]));
        put("u2_const", f(self.input.constant[1]));
        put("u1_amp", f(self.input.amplitude[0]));
        put("u2_amp", f(self.input.amplitude[1]));
        put("u_omega", f(self.input.omega));
        put(
            "init_w",
            match self.initial.w_shape {
                InitialShape::Zero => "\"zero\"".into(),
                InitialShape::Mode11 => "\"mode11\"".into(),
                InitialShape::Parabola => "\"parabola\"".into(),
            },
        );
        put("init_w_amp", f(self.initial.w_amp));
        put("init_p_amp", f(self.initial.p_amp));
        s
    }
}
