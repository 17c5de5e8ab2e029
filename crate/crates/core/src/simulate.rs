//! Assembly and time integration of the coupled linear system
//! plant ⊕ (observer) ⊕ controller, and the energy audit.
//!
//! The state vector is laid out as `[w, p, ŵ, p̂, x_c]`; the observer block
//! is present only in controlled-observer mode and `x_c` only in the
//! controlled modes. The dynamics are `ẋ = A x + b(t)`, advanced with the
//! implicit midpoint rule
//!
//! ```text
//! (I − h/2 A) x⁺ = (I + h/2 A) x + h b(t + h/2).
//! ```
//!
//! `A` splits into a block-diagonal part (plate field blocks and the
//! controller's own dynamics) plus a coupling of rank at most six. Each
//! field block reduces to one symmetric positive definite band solve; the
//! coupling is handled with the Woodbury identity, and the result is
//! refined against the assembled sparse `A`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use sprs::{CsMat, TriMat};

use crate::actuation::Actuation;
use crate::config::{InitialShape, Mode, OpenLoopInput, RunConfig, SimConfig};
use crate::controller::{
    casimirs, controller_rhs, hc, interconnect, plant_inputs, ControllerParams, ControllerState,
};
use crate::error::{Error, Result};
use crate::grid::{Edge, EdgeLoads, EdgeProfile, Field, Grid};
use crate::linalg::BandedCholesky;
use crate::observer::{
    correction_terms, error_energies, initial_observer, observer_loads, Measurements,
    ObserverParams,
};
use crate::plate::{PlantState, Plate, PortEvaluation};

/// Offsets of the blocks inside the state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub observer: bool,
    pub controller: bool,
}

impl Layout {
    pub fn w(&self) -> usize {
        0
    }
    pub fn p(&self) -> usize {
        self.n
    }
    pub fn w_hat(&self) -> usize {
        2 * self.n
    }
    pub fn p_hat(&self) -> usize {
        3 * self.n
    }
    pub fn xc(&self) -> usize {
        if self.observer {
            4 * self.n
        } else {
            2 * self.n
        }
    }
    pub fn len(&self) -> usize {
        self.xc() + if self.controller { 4 } else { 0 }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Start offsets of the plate-like field blocks.
    fn fields(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(self.w(), self.p())];
        if self.observer {
            v.push((self.w_hat(), self.p_hat()));
        }
        v
    }
}

/// Rank-one term `col · rowᵀ` of the coupling part of `A`.
#[derive(Debug, Clone)]
struct Coupling {
    col: Vec<(usize, f64)>,
    row: Vec<(usize, f64)>,
}

/// The coupled model with everything that does not change in time.
#[derive(Debug, Clone)]
pub struct System {
    pub plate: Plate,
    pub act: Actuation,
    pub ctrl: ControllerParams,
    pub obs: ObserverParams,
    pub mode: Mode,
    pub input: OpenLoopInput,
    /// Observer correction on; when off `k̂ ≡ 0`.
    pub inject: bool,
    layout: Layout,
    couplings: Vec<Coupling>,
    /// Load columns per unit plant input λ.
    input_cols: [Vec<(usize, f64)>; 2],
    a: CsMat<f64>,
}

impl System {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let plate = Plate::new(grid, cfg.plate, cfg.bc)?;
        let act = Actuation::sample(&grid, &cfg.actuator, &cfg.equilibrium)?;
        for edge in [Edge::Bottom, Edge::Top] {
            if cfg.mode != Mode::OpenLoop
                && cfg.bc.get(edge) != crate::grid::EdgeCondition::Actuated
            {
                return Err(Error::Config(format!(
                    "controlled modes need an actuated `{}` edge",
                    edge.name()
                )));
            }
        }
        let ctrl = cfg.controller.with_setpoints(act.setpoints(&grid));
        ctrl.validate()?;
        let mut obs = ObserverParams::for_grid(&grid)?;
        obs.k1 = cfg.observer.k1;
        obs.k2 = cfg.observer.k2;
        obs.kd11 = cfg.observer.kd11;
        obs.kd22 = cfg.observer.kd22;
        obs.dirac = cfg.observer.dirac;
        obs.validate(&grid)?;
        let layout = Layout {
            n: grid.len(),
            observer: cfg.mode == Mode::ControlledObserver,
            controller: cfg.mode != Mode::OpenLoop,
        };
        let mut sys = Self {
            plate,
            act,
            ctrl,
            obs,
            mode: cfg.mode,
            input: cfg.input,
            inject: cfg.observer.inject,
            layout,
            couplings: Vec::new(),
            input_cols: [Vec::new(), Vec::new()],
            a: CsMat::zero((0, 0)),
        };
        sys.input_cols = [sys.input_column(Edge::Bottom), sys.input_column(Edge::Top)];
        sys.couplings = sys.build_couplings();
        sys.a = sys.assemble();
        Ok(sys)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn grid(&self) -> &Grid {
        self.plate.grid()
    }

    /// The assembled system matrix `A`.
    pub fn matrix(&self) -> &CsMat<f64> {
        &self.a
    }

    /// Momentum-rate contribution of a unit voltage on `edge`, in every
    /// field block that receives the plant input.
    fn input_column(&self, edge: Edge) -> Vec<(usize, f64)> {
        let g = self.grid();
        let lam = match edge {
            Edge::Bottom => &self.act.lambda_bottom,
            _ => &self.act.lambda_top,
        };
        let mut col = Vec::new();
        if self.plate.bc().get(edge) != crate::grid::EdgeCondition::Actuated {
            return col;
        }
        for &(_, p0) in &self.layout.fields() {
            for t in 0..g.edge_len(edge) {
                let (i, j) = g.edge_local(edge, t as isize, 0);
                let k = g.node(i as usize, j as usize);
                if !self.plate.dirichlet_mask()[k] {
                    let v = g.edge_weight(edge, t) * lam.values[t] / self.plate.weights()[k];
                    col.push((p0 + k, v));
                }
            }
        }
        col
    }

    /// `∫ Λ_λ v` over the edge as a row acting on the block at `off`.
    fn lambda_row(&self, edge: Edge, off: usize, scale: f64) -> Vec<(usize, f64)> {
        let g = self.grid();
        let lam = match edge {
            Edge::Bottom => &self.act.lambda_bottom,
            _ => &self.act.lambda_top,
        };
        (0..g.edge_len(edge))
            .filter_map(|t| {
                let (i, j) = g.edge_local(edge, t as isize, 0);
                let k = g.node(i as usize, j as usize);
                let v = scale * g.edge_weight(edge, t) * lam.values[t];
                (v != 0.0).then_some((off + k, v))
            })
            .collect()
    }

    fn build_couplings(&self) -> Vec<Coupling> {
        let l = self.layout;
        let mut out = Vec::new();
        if !l.controller {
            return out;
        }
        let c = &self.ctrl;
        let xc = l.xc();
        let rho_a = self.plate.params().rho_a;
        // Plant input u_λ = −y_c,λ, linear part in x_c.
        let gains = [(c.c1, c.g31, c.g41), (c.c2, c.g32, c.g42)];
        for (lam, &(cl, g3, g4)) in gains.iter().enumerate() {
            let mut row = vec![(xc + lam, -cl)];
            let r3 = -(g3 * c.mc33 + g4 * c.mc34);
            let r4 = -(g3 * c.mc34 + g4 * c.mc44);
            if r3 != 0.0 {
                row.push((xc + 2, r3));
            }
            if r4 != 0.0 {
                row.push((xc + 3, r4));
            }
            out.push(Coupling {
                col: self.input_cols[lam].clone(),
                row,
            });
        }
        // Controller input u_c,λ = ∫ Λ_λ p/ρA (or p̂ with the observer).
        let src = if l.observer { l.p_hat() } else { l.p() };
        for (lam, edge) in [Edge::Bottom, Edge::Top].into_iter().enumerate() {
            let (g3, g4) = if lam == 0 {
                (c.g31, c.g41)
            } else {
                (c.g32, c.g42)
            };
            let mut col = vec![(xc + lam, 1.0)];
            if g3 != 0.0 {
                col.push((xc + 2, g3));
            }
            if g4 != 0.0 {
                col.push((xc + 3, g4));
            }
            out.push(Coupling {
                col,
                row: self.lambda_row(edge, src, 1.0 / rho_a),
            });
        }
        // Observer error injection at the measurement points.
        if l.observer && self.inject {
            let g = self.grid();
            for (edge, m, k, kd) in [
                (Edge::Bottom, self.obs.meas1, self.obs.k1, self.obs.kd11),
                (Edge::Top, self.obs.meas2, self.obs.k2, self.obs.kd22),
            ] {
                let stencil = self.obs.stencil(m);
                let mut col = Vec::new();
                let mut row = Vec::new();
                for &(t, w) in &stencil {
                    let (i, j) = g.edge_local(edge, t as isize, 0);
                    let node = g.node(i as usize, j as usize);
                    if !self.plate.dirichlet_mask()[node] {
                        col.push((l.p_hat() + node, -w / self.plate.weights()[node]));
                    }
                }
                // k̂ = −k (ȳ − ŵ) − Kd (y − p̂/ρA)
                for (off, coef) in [
                    (l.w(), -k),
                    (l.w_hat(), k),
                    (l.p(), -kd / rho_a),
                    (l.p_hat(), kd / rho_a),
                ] {
                    for &(t, w) in &stencil {
                        let (i, j) = g.edge_local(edge, t as isize, 0);
                        row.push((off + g.node(i as usize, j as usize), coef * w));
                    }
                }
                out.push(Coupling { col, row });
            }
        }
        out
    }

    /// Controller dynamics block acting on `(x₃, x₄)` through `∂₃H_c, ∂₄H_c`.
    fn controller_block(&self) -> Matrix4<f64> {
        let c = &self.ctrl;
        let mut m = Matrix4::zeros();
        // d3 = Mc33 x3 + Mc34 x4, d4 = Mc34 x3 + Mc44 x4
        let r3 = (-c.rc33, c.jc34 - c.rc34);
        let r4 = (-c.jc34 - c.rc34, -c.rc44);
        m[(2, 2)] = r3.0 * c.mc33 + r3.1 * c.mc34;
        m[(2, 3)] = r3.0 * c.mc34 + r3.1 * c.mc44;
        m[(3, 2)] = r4.0 * c.mc33 + r4.1 * c.mc34;
        m[(3, 3)] = r4.0 * c.mc34 + r4.1 * c.mc44;
        m
    }

    /// Constant-in-state part of the controller's `ẋ₃, ẋ₄` (none: the
    /// offsets only enter through the plant input).
    fn assemble(&self) -> CsMat<f64> {
        let l = self.layout;
        let len = l.len();
        let rho_a = self.plate.params().rho_a;
        let k = self.plate.stiffness();
        let mask = self.plate.dirichlet_mask();
        let wts = self.plate.weights();
        let mut t = TriMat::with_capacity((len, len), 2 * k.nnz() + 4 * l.n + 1024);
        for (w0, p0) in l.fields() {
            for node in 0..l.n {
                if !mask[node] {
                    t.add_triplet(w0 + node, p0 + node, 1.0 / rho_a);
                }
            }
            for (row, vec) in k.outer_iterator().enumerate() {
                for (col, v) in vec.iter() {
                    t.add_triplet(p0 + row, w0 + col, -v / wts[row]);
                }
            }
        }
        if l.controller {
            let m = self.controller_block();
            for r in 0..4 {
                for c in 0..4 {
                    if m[(r, c)] != 0.0 {
                        t.add_triplet(l.xc() + r, l.xc() + c, m[(r, c)]);
                    }
                }
            }
        }
        for cp in &self.couplings {
            for &(r, cv) in &cp.col {
                for &(c, rv) in &cp.row {
                    t.add_triplet(r, c, cv * rv);
                }
            }
        }
        t.to_csr()
    }

    /// Plant inputs applied at time `t` for state `x`.
    pub fn inputs(&self, t: f64, x: &[f64]) -> [f64; 2] {
        match self.mode {
            Mode::OpenLoop => self.input.at(t),
            _ => plant_inputs(&self.controller_state(x), &self.ctrl),
        }
    }

    /// Offset vector `b(t)`.
    pub fn offset(&self, t: f64) -> Vec<f64> {
        let mut b = vec![0.0; self.layout.len()];
        let u = match self.mode {
            Mode::OpenLoop => self.input.at(t),
            _ => {
                let c = &self.ctrl;
                [c.c1 * c.xd1 + c.us1, c.c2 * c.xd2 + c.us2]
            }
        };
        for (lam, col) in self.input_cols.iter().enumerate() {
            for &(r, v) in col {
                b[r] += u[lam] * v;
            }
        }
        b
    }

    /// `A x + b(t)`.
    pub fn rhs(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = self.offset(t);
        sprs::prod::mul_acc_mat_vec_csr(self.a.view(), x, &mut out[..]);
        out
    }

    /// The same right-hand side built from the modular plate, controller
    /// and observer functions.
    pub fn modular_rhs(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let l = self.layout;
        let g = *self.grid();
        let rho_a = self.plate.params().rho_a;
        let plant = self.plant_state(x);
        let u = self.inputs(t, x);
        let loads = self.edge_loads(u);
        let mut out = vec![0.0; l.len()];
        let (wd, pd) = self.plate.plant_rhs(&plant, &loads)?;
        out[l.w()..l.w() + l.n].copy_from_slice(wd.as_slice());
        out[l.p()..l.p() + l.n].copy_from_slice(pd.as_slice());
        if l.observer {
            let obs = self.observer_state(x).expect("observer");
            let khat = if self.inject {
                let m = Measurements::from_plant(&g, &plant, &self.obs, rho_a);
                correction_terms(&g, &m, &obs, &self.obs, rho_a)
            } else {
                [0.0, 0.0]
            };
            let loads = observer_loads(&g, &self.act, u, khat, &self.obs);
            let (wd, pd) = self.plate.plant_rhs(&obs, &loads)?;
            out[l.w_hat()..l.w_hat() + l.n].copy_from_slice(wd.as_slice());
            out[l.p_hat()..l.p_hat() + l.n].copy_from_slice(pd.as_slice());
        }
        if l.controller {
            let src = if l.observer {
                self.observer_state(x).expect("observer").p
            } else {
                plant.p.clone()
            };
            let uc = interconnect(&g, &src, &self.act, rho_a);
            let xd = controller_rhs(&self.controller_state(x), uc, &self.ctrl);
            out[l.xc()..l.xc() + 4].copy_from_slice(&xd);
        }
        Ok(out)
    }

    /// Applied shear `Λ_λ u_λ` on the actuated edges.
    pub fn edge_loads(&self, u: [f64; 2]) -> EdgeLoads {
        let mut loads = EdgeLoads::none();
        for (edge, lam, v) in [
            (Edge::Bottom, &self.act.lambda_bottom, u[0]),
            (Edge::Top, &self.act.lambda_top, u[1]),
        ] {
            if self.plate.bc().get(edge) == crate::grid::EdgeCondition::Actuated {
                loads.set(EdgeProfile {
                    edge,
                    values: lam.values.iter().map(|l| l * v).collect(),
                });
            }
        }
        loads
    }

    pub fn plant_state(&self, x: &[f64]) -> PlantState {
        let l = self.layout;
        let g = self.grid();
        PlantState {
            w: Field::from_flat(g, &x[l.w()..l.w() + l.n]).expect("finite"),
            p: Field::from_flat(g, &x[l.p()..l.p() + l.n]).expect("finite"),
        }
    }

    pub fn observer_state(&self, x: &[f64]) -> Option<PlantState> {
        let l = self.layout;
        let g = self.grid();
        l.observer.then(|| PlantState {
            w: Field::from_flat(g, &x[l.w_hat()..l.w_hat() + l.n]).expect("finite"),
            p: Field::from_flat(g, &x[l.p_hat()..l.p_hat() + l.n]).expect("finite"),
        })
    }

    pub fn controller_state(&self, x: &[f64]) -> ControllerState {
        let l = self.layout;
        if !l.controller {
            return ControllerState::default();
        }
        let mut xc = [0.0; 4];
        xc.copy_from_slice(&x[l.xc()..l.xc() + 4]);
        ControllerState { xc }
    }

    /// Initial state: plant per `init`, controller Casimirs zero, observer
    /// at `ŵ = −d (z¹)²`.
    pub fn initial_state(&self, cfg: &RunConfig) -> Vec<f64> {
        let l = self.layout;
        let g = *self.grid();
        let (l1, l2) = (g.l1(), g.l2());
        let pi = std::f64::consts::PI;
        let init = cfg.initial;
        let shape = |x: f64, y: f64| match init.w_shape {
            InitialShape::Zero => 0.0,
            InitialShape::Mode11 => (pi * x / l1).sin() * (pi * y / l2).sin(),
            InitialShape::Parabola => (x / l1).powi(2),
        };
        let mut w = Field::from_fn(&g, |x, y| init.w_amp * shape(x, y));
        let mut p = Field::from_fn(&g, |x, _| init.p_amp * (x / l1).powi(2));
        let mask = self.plate.dirichlet_mask();
        for k in 0..l.n {
            if mask[k] {
                w.as_slice_mut()[k] = 0.0;
                p.as_slice_mut()[k] = 0.0;
            }
        }
        let mut x = vec![0.0; l.len()];
        x[l.w()..l.w() + l.n].copy_from_slice(w.as_slice());
        x[l.p()..l.p() + l.n].copy_from_slice(p.as_slice());
        if l.observer {
            let mut o = initial_observer(&g, cfg.observer.d_init);
            for k in 0..l.n {
                if mask[k] {
                    o.w.as_slice_mut()[k] = 0.0;
                }
            }
            x[l.w_hat()..l.w_hat() + l.n].copy_from_slice(o.w.as_slice());
            x[l.p_hat()..l.p_hat() + l.n].copy_from_slice(o.p.as_slice());
        }
        if l.controller {
            let c = casimirs(&g, &w, &ControllerState::default(), &self.act);
            x[l.xc()] = -c[0];
            x[l.xc() + 1] = -c[1];
        }
        x
    }

    /// Closed-loop equilibrium of the controlled plant with zero Casimir
    /// offsets: `p = 0`, `x₃ = x₄ = 0`, `K w = f(u)`, `x_c^λ = ∫ Λ_λ w`.
    pub fn closed_loop_equilibrium(&self) -> Result<Vec<f64>> {
        let l = self.layout;
        if !l.controller {
            return Err(Error::Config("equilibrium needs a controlled mode".into()));
        }
        let g = *self.grid();
        let unit = [
            self.static_deflection([1.0, 0.0])?,
            self.static_deflection([0.0, 1.0])?,
        ];
        let dummy = ControllerState::default();
        let s = [
            casimirs(&g, &unit[0], &dummy, &self.act).map(|v| -v),
            casimirs(&g, &unit[1], &dummy, &self.act).map(|v| -v),
        ];
        // (I + C S) u = u_s + C x_d, with S[λ][μ] = ∫ Λ_λ w_μ.
        let c = &self.ctrl;
        let m = nalgebra::Matrix2::new(
            1.0 + c.c1 * s[0][0],
            c.c1 * s[1][0],
            c.c2 * s[0][1],
            1.0 + c.c2 * s[1][1],
        );
        let rhs = nalgebra::Vector2::new(c.us1 + c.c1 * c.xd1, c.us2 + c.c2 * c.xd2);
        let u = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular equilibrium system".into()))?;
        let mut x = vec![0.0; l.len()];
        for k in 0..l.n {
            let w = u[0] * unit[0].as_slice()[k] + u[1] * unit[1].as_slice()[k];
            x[l.w() + k] = w;
            if l.observer {
                x[l.w_hat() + k] = w;
            }
        }
        let w = Field::from_flat(&g, &x[l.w()..l.w() + l.n])?;
        let cs = casimirs(&g, &w, &dummy, &self.act);
        x[l.xc()] = -cs[0];
        x[l.xc() + 1] = -cs[1];
        Ok(x)
    }

    /// Static deflection `K w = f(u)` under constant voltages.
    pub fn static_deflection(&self, u: [f64; 2]) -> Result<Field> {
        let f = self.plate.load_vector(&self.edge_loads(u))?;
        static_solve(&self.plate, &f)
    }

    /// Factorizes the implicit-midpoint operator for step `h`.
    pub fn stepper(&self, h: f64, tol: f64) -> Result<Stepper> {
        Stepper::new(self, h, tol)
    }
}

/// Solves `K w = f` on the unconstrained nodes.
pub fn static_solve(plate: &Plate, f: &[f64]) -> Result<Field> {
    let n = plate.grid().len();
    let mask = plate.dirichlet_mask();
    let mut t = TriMat::new((n, n));
    for (r, vec) in plate.stiffness().outer_iterator().enumerate() {
        for (c, v) in vec.iter() {
            t.add_triplet(r, c, *v);
        }
    }
    for (k, &m) in mask.iter().enumerate() {
        if m {
            t.add_triplet(k, k, 1.0);
        }
    }
    let chol = BandedCholesky::factor(&t.to_csr()).map_err(|e| {
        Error::Config(format!(
            "stiffness is singular for these boundary conditions ({e})"
        ))
    })?;
    let mut w: Vec<f64> = f
        .iter()
        .zip(mask)
        .map(|(v, m)| if *m { 0.0 } else { *v })
        .collect();
    chol.solve_in_place(&mut w);
    Field::from_flat(plate.grid(), &w)
}

/// Factorized implicit-midpoint operator.
#[derive(Debug, Clone)]
pub struct Stepper {
    h: f64,
    tol: f64,
    layout: Layout,
    rho_a: f64,
    chol: BandedCholesky,
    stiffness: CsMat<f64>,
    weights: Vec<f64>,
    mask: Vec<bool>,
    ctrl_inv: Matrix4<f64>,
    couplings: Vec<Coupling>,
    z: Vec<Vec<f64>>,
    cap_inv: DMatrix<f64>,
    a: CsMat<f64>,
}

impl Stepper {
    fn new(sys: &System, h: f64, tol: f64) -> Result<Self> {
        crate::error::check(h > 0.0, "dt", h, "must be > 0")?;
        let l = sys.layout;
        let rho_a = sys.plate.params().rho_a;
        let gamma = h * h / (4.0 * rho_a);
        let k = sys.plate.stiffness();
        let wts = sys.plate.weights();
        let mask = sys.plate.dirichlet_mask();
        let mut t = TriMat::new((l.n, l.n));
        for (r, vec) in k.outer_iterator().enumerate() {
            for (c, v) in vec.iter() {
                t.add_triplet(r, c, gamma * v);
            }
        }
        for node in 0..l.n {
            t.add_triplet(node, node, if mask[node] { 1.0 } else { wts[node] });
        }
        let chol = BandedCholesky::factor(&t.to_csr()).map_err(|e| {
            Error::Config(format!("implicit operator could not be factorized ({e})"))
        })?;
        let ctrl_inv = if l.controller {
            (Matrix4::identity() - sys.controller_block() * (0.5 * h))
                .try_inverse()
                .ok_or_else(|| Error::Config("singular controller block".into()))?
        } else {
            Matrix4::identity()
        };
        let mut st = Self {
            h,
            tol,
            layout: l,
            rho_a,
            chol,
            stiffness: k.clone(),
            weights: wts.to_vec(),
            mask: mask.to_vec(),
            ctrl_inv,
            couplings: sys.couplings.clone(),
            z: Vec::new(),
            cap_inv: DMatrix::zeros(0, 0),
            a: sys.a.clone(),
        };
        let r = st.couplings.len();
        let mut z = Vec::with_capacity(r);
        for cp in &st.couplings {
            let mut v = vec![0.0; l.len()];
            for &(i, c) in &cp.col {
                v[i] += c;
            }
            st.block_solve(&mut v);
            z.push(v);
        }
        let mut cap = DMatrix::<f64>::identity(r, r);
        for i in 0..r {
            for (j, zj) in z.iter().enumerate() {
                let dot: f64 = st.couplings[i].row.iter().map(|&(k, c)| c * zj[k]).sum();
                cap[(i, j)] -= 0.5 * h * dot;
            }
        }
        st.cap_inv = cap
            .try_inverse()
            .ok_or_else(|| Error::Config("singular coupling capacitance matrix".into()))?;
        st.z = z;
        Ok(st)
    }

    pub fn dt(&self) -> f64 {
        self.h
    }

    /// Solves the block-diagonal part `(I − h/2 A₀) y = r` in place.
    fn block_solve(&self, r: &mut [f64]) {
        let l = self.layout;
        let n = l.n;
        let h = self.h;
        let c = 0.5 * h / self.rho_a;
        let mut kw = vec![0.0; n];
        for (w0, p0) in l.fields() {
            let mut s = vec![0.0; n];
            for k in 0..n {
                s[k] = if self.mask[k] {
                    r[w0 + k]
                } else {
                    self.weights[k] * (r[w0 + k] + c * r[p0 + k])
                };
            }
            self.chol.solve_in_place(&mut s);
            kw.iter_mut().for_each(|v| *v = 0.0);
            sprs::prod::mul_acc_mat_vec_csr(self.stiffness.view(), &s[..], &mut kw[..]);
            for k in 0..n {
                if !self.mask[k] {
                    r[p0 + k] -= 0.5 * h * kw[k] / self.weights[k];
                }
                r[w0 + k] = s[k];
            }
        }
        if l.controller {
            let o = l.xc();
            let v = self.ctrl_inv * Vector4::new(r[o], r[o + 1], r[o + 2], r[o + 3]);
            r[o..o + 4].copy_from_slice(v.as_slice());
        }
    }

    /// Solves `(I − h/2 A) x = r` without refinement.
    fn solve_once(&self, r: &mut [f64]) {
        self.block_solve(r);
        if self.couplings.is_empty() {
            return;
        }
        let t = DVector::from_iterator(
            self.couplings.len(),
            self.couplings
                .iter()
                .map(|cp| 0.5 * self.h * cp.row.iter().map(|&(k, c)| c * r[k]).sum::<f64>()),
        );
        let s = &self.cap_inv * t;
        for (zi, si) in self.z.iter().zip(s.iter()) {
            for (x, z) in r.iter_mut().zip(zi) {
                *x += si * z;
            }
        }
    }

    /// `(I − h/2 A) x`.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut ax = vec![0.0; x.len()];
        sprs::prod::mul_acc_mat_vec_csr(self.a.view(), x, &mut ax[..]);
        x.iter()
            .zip(&ax)
            .map(|(x, a)| x - 0.5 * self.h * a)
            .collect()
    }

    /// `‖ |I − h/2 A| |x| + |rhs| ‖∞`, the size of the terms whose roundoff
    /// bounds the attainable residual.
    fn residual_scale(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut m: f64 = 0.0;
        for (i, row) in self.a.outer_iterator().enumerate() {
            let mut s = x[i].abs() + rhs[i].abs();
            for (j, v) in row.iter() {
                s += 0.5 * self.h * (v * x[j]).abs();
            }
            m = m.max(s);
        }
        m
    }

    /// Solves `(I − h/2 A) x = rhs` with iterative refinement; the
    /// normwise backward error must reach `solver_tol`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = rhs.to_vec();
        self.solve_once(&mut x);
        let mut rn = f64::INFINITY;
        let mut bound = 0.0;
        for it in 0..=3 {
            let mx = self.apply(&x);
            let mut res: Vec<f64> = rhs.iter().zip(&mx).map(|(r, m)| r - m).collect();
            rn = inf_norm(&res);
            bound = self.tol * self.residual_scale(&x, rhs);
            if rn <= bound || it == 3 {
                break;
            }
            self.solve_once(&mut res);
            for (x, d) in x.iter_mut().zip(&res) {
                *x += d;
            }
        }
        if rn <= bound {
            Ok(x)
        } else {
            Err(Error::Solver(format!(
                "residual {rn:e} above tolerance {bound:e} after refinement"
            )))
        }
    }

    /// One implicit-midpoint step from `t`.
    pub fn step(&self, sys: &System, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let mut ax = vec![0.0; x.len()];
        sprs::prod::mul_acc_mat_vec_csr(self.a.view(), x, &mut ax[..]);
        let b = sys.offset(t + 0.5 * self.h);
        let rhs: Vec<f64> = x
            .iter()
            .zip(&ax)
            .zip(&b)
            .map(|((x, a), b)| x + 0.5 * self.h * a + self.h * b)
            .collect();
        self.solve(&rhs)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// One row of the energy audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRecord {
    pub step: usize,
    pub t: f64,
    /// Plate energy ℋ.
    pub h: f64,
    pub h_c: f64,
    pub h_cl: f64,
    /// Observer error energies `H̃`, `H̃_d` (zero without observer).
    pub h_err: f64,
    pub h_err_d: f64,
    pub casimir: [f64; 2],
    pub xc: [f64; 4],
    pub inputs: [f64; 2],
    /// Boundary power from the applied shear.
    pub port_power: f64,
    /// Boundary power from extrapolated shear and moments.
    pub port_power_measured: f64,
    pub w_meas1: f64,
    pub w_meas2: f64,
    /// `w(L1, L2/2)` and the observer's estimate of it.
    pub w_probe: f64,
    pub w_hat_probe: f64,
}

/// Recorded audit series.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub dt: f64,
    pub record_every: usize,
    pub records: Vec<AuditRecord>,
}

impl Audit {
    /// Records on the regular cadence (the final record may fall between).
    fn regular(&self) -> Vec<&AuditRecord> {
        self.records
            .iter()
            .filter(|r| r.step % self.record_every == 0)
            .collect()
    }

    /// Power-balance residual on the regularly spaced records.
    pub fn power_balance_residual(&self, eval: PortEvaluation) -> Result<Vec<f64>> {
        let recs = self.regular();
        let h: Vec<f64> = recs.iter().map(|r| r.h).collect();
        let p: Vec<f64> = recs
            .iter()
            .map(|r| match eval {
                PortEvaluation::Prescribed => r.port_power,
                PortEvaluation::Measured => r.port_power_measured,
            })
            .collect();
        crate::plate::power_balance_residual(&h, &p, self.dt * self.record_every as f64)
    }

    /// `max_t |C^λ(t) − C^λ(0)|` for λ = 1, 2.
    pub fn casimir_drift(&self) -> [f64; 2] {
        let Some(first) = self.records.first() else {
            return [0.0, 0.0];
        };
        let mut d = [0.0_f64; 2];
        for r in &self.records {
            for l in 0..2 {
                d[l] = d[l].max((r.casimir[l] - first.casimir[l]).abs());
            }
        }
        d
    }

    /// `max_t |x_c^λ(t)|` for λ = 1, 2.
    pub fn max_abs_xc(&self) -> [f64; 2] {
        let mut m = [0.0_f64; 2];
        for r in &self.records {
            for l in 0..2 {
                m[l] = m[l].max(r.xc[l].abs());
            }
        }
        m
    }

    /// Largest increase of a recorded quantity between consecutive records.
    pub fn max_increase(&self, f: impl Fn(&AuditRecord) -> f64) -> f64 {
        self.records
            .windows(2)
            .map(|w| f(&w[1]) - f(&w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A running simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub system: System,
    pub sim: SimConfig,
    stepper: Stepper,
    x: Vec<f64>,
    t: f64,
    step: usize,
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let system = System::new(cfg)?;
        let x = system.initial_state(cfg);
        Self::with_state(system, cfg.sim, x)
    }

    pub fn with_state(system: System, sim: SimConfig, x: Vec<f64>) -> Result<Self> {
        if x.len() != system.layout().len() {
            return Err(Error::ShapeMismatch {
                expected: (system.layout().len(), 1),
                actual: (x.len(), 1),
            });
        }
        let stepper = system.stepper(sim.dt, sim.solver_tol)?;
        Ok(Self {
            system,
            sim,
            stepper,
            x,
            t: 0.0,
            step: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn plant(&self) -> PlantState {
        self.system.plant_state(&self.x)
    }

    pub fn observer(&self) -> Option<PlantState> {
        self.system.observer_state(&self.x)
    }

    pub fn controller(&self) -> ControllerState {
        self.system.controller_state(&self.x)
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<()> {
        let next = self.stepper.step(&self.system, self.t, &self.x)?;
        self.step += 1;
        self.t = self.step as f64 * self.sim.dt;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.step,
                t: self.t,
            });
        }
        self.x = next;
        Ok(())
    }

    /// Audit quantities for the current state.
    pub fn audit(&self) -> Result<AuditRecord> {
        let sys = &self.system;
        let g = *sys.grid();
        let plant = self.plant();
        let xc = self.controller();
        let u = sys.inputs(self.t, &self.x);
        let loads = sys.edge_loads(u);
        let h = sys.plate.total_energy(&plant);
        let h_c = if sys.layout.controller {
            hc(&xc, &sys.ctrl)
        } else {
            0.0
        };
        let (h_err, h_err_d) = match self.observer() {
            Some(o) => error_energies(&sys.plate, &plant, &o, &sys.obs),
            None => (0.0, 0.0),
        };
        let casimir = if sys.layout.controller {
            casimirs(&g, &plant.w, &xc, &sys.act)
        } else {
            [0.0, 0.0]
        };
        let probe = (g.n1() - 1, (g.n2() - 1) / 2);
        Ok(AuditRecord {
            step: self.step,
            t: self.t,
            h,
            h_c,
            h_cl: h + h_c,
            h_err,
            h_err_d,
            casimir,
            xc: xc.xc,
            inputs: u,
            port_power: sys
                .plate
                .port_power(&plant, &loads, PortEvaluation::Prescribed)?,
            port_power_measured: sys
                .plate
                .port_power(&plant, &loads, PortEvaluation::Measured)?,
            w_meas1: plant.w.get(sys.obs.meas1, 0),
            w_meas2: plant.w.get(sys.obs.meas2, g.n2() - 1),
            w_probe: plant.w.get(probe.0, probe.1),
            w_hat_probe: self.observer().map_or(0.0, |o| o.w.get(probe.0, probe.1)),
        })
    }

    /// Runs to `T`, recording every `record_every` steps and at the end.
    /// `on_record` sees the simulation after each record is taken.
    pub fn run(&mut self, mut on_record: impl FnMut(&Simulation, &AuditRecord)) -> Result<Audit> {
        let n_steps = (self.sim.t_final / self.sim.dt).round() as usize;
        let mut records = Vec::new();
        let rec = self.audit()?;
        on_record(self, &rec);
        records.push(rec);
        while self.step < n_steps {
            self.step()?;
            if self.step % self.sim.record_every == 0 || self.step == n_steps {
                let rec = self.audit()?;
                on_record(self, &rec);
                records.push(rec);
            }
        }
        Ok(Audit {
            dt: self.sim.dt,
            record_every: self.sim.record_every,
            records,
        })
    }
}

/// Convenience wrapper: set up from `cfg` and run to the end.
pub fn run(cfg: &RunConfig) -> Result<(Simulation, Audit)> {
    let mut sim = Simulation::new(cfg)?;
    let audit = sim.run(|_, _| {})?;
    Ok((sim, audit))
}
