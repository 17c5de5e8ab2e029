//! Boundary observer: a copy of the plate driven by the same inputs, with
//! error injection at one point on each actuated edge.

use crate::actuation::Actuation;
use crate::error::{check, Error, Result};
use crate::grid::{Edge, EdgeLoads, EdgeProfile, Field, Grid};
use crate::plate::{PlantState, Plate};

/// Spatial shape of the point injection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiracMode {
    /// All weight on the measurement node.
    #[default]
    Node,
    /// Weights ¼, ½, ¼ on the measurement node and its two neighbours. The
    /// measurement is the same weighted average, so injection and sensing
    /// stay collocated.
    Hat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverParams {
    pub k1: f64,
    pub k2: f64,
    pub kd11: f64,
    pub kd22: f64,
    /// Measurement node index along ∂B₂ and ∂B₄.
    pub meas1: usize,
    pub meas2: usize,
    pub dirac: DiracMode,
}

impl ObserverParams {
    /// Default gains with both measurement points at `z¹ = 3 L1 / 4`.
    pub fn for_grid(grid: &Grid) -> Result<Self> {
        let m = quarter_node(grid)?;
        Ok(Self {
            k1: 2000.0,
            k2: 2000.0,
            kd11: 2000.0,
            kd22: 2000.0,
            meas1: m,
            meas2: m,
            dirac: DiracMode::Node,
        })
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check(self.k1 > 0.0, "k1", self.k1, "must be > 0")?;
        check(self.k2 > 0.0, "k2", self.k2, "must be > 0")?;
        check(self.kd11 > 0.0, "Kd11", self.kd11, "must be > 0")?;
        check(self.kd22 > 0.0, "Kd22", self.kd22, "must be > 0")?;
        for (name, m) in [("meas1", self.meas1), ("meas2", self.meas2)] {
            check(
                m >= 1 && m + 1 < grid.n1(),
                name,
                m as f64,
                "measurement node must be an interior node of the edge",
            )?;
        }
        Ok(())
    }

    /// Injection weights `(node, weight)` along the edge; they sum to one.
    pub fn stencil(&self, m: usize) -> Vec<(usize, f64)> {
        match self.dirac {
            DiracMode::Node => vec![(m, 1.0)],
            DiracMode::Hat => vec![(m - 1, 0.25), (m, 0.5), (m + 1, 0.25)],
        }
    }

    /// Point value of `f` at the measurement location on `edge`.
    pub fn sample(&self, grid: &Grid, f: &Field, edge: Edge) -> f64 {
        let m = match edge {
            Edge::Top => self.meas2,
            _ => self.meas1,
        };
        self.stencil(m)
            .into_iter()
            .map(|(t, c)| {
                let (i, j) = grid.edge_local(edge, t as isize, 0);
                c * f.get(i as usize, j as usize)
            })
            .sum()
    }
}

/// Index of the node at `z¹ = 3 L1 / 4`; requires `N1 ≡ 1 (mod 4)`.
pub fn quarter_node(grid: &Grid) -> Result<usize> {
    let n1 = grid.n1();
    if (n1 - 1) % 4 != 0 {
        return Err(Error::InvalidParameter {
            name: "N1",
            value: n1 as f64,
            reason: "N1 - 1 must be divisible by 4 so that z1 = 3 L1/4 is a grid node".into(),
        });
    }
    Ok(3 * (n1 - 1) / 4)
}

/// Deflections and velocities at the two measurement points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurements {
    pub ybar1: f64,
    pub ybar2: f64,
    pub y1: f64,
    pub y2: f64,
}

impl Measurements {
    pub fn from_plant(grid: &Grid, s: &PlantState, p: &ObserverParams, rho_a: f64) -> Self {
        Self {
            ybar1: p.sample(grid, &s.w, Edge::Bottom),
            ybar2: p.sample(grid, &s.w, Edge::Top),
            y1: p.sample(grid, &s.p, Edge::Bottom) / rho_a,
            y2: p.sample(grid, &s.p, Edge::Top) / rho_a,
        }
    }
}

/// Observer initial condition `ŵ = −d (z¹)²`, `p̂ = 0`.
pub fn initial_observer(grid: &Grid, d: f64) -> PlantState {
    PlantState {
        w: Field::from_fn(grid, |x, _| -d * x * x),
        p: Field::zeros(grid),
    }
}

/// Correction terms `k̂ = β̂ + γ̂`: energy shaping on the deflection error
/// plus damping injection on the velocity error.
pub fn correction_terms(
    grid: &Grid,
    m: &Measurements,
    obs: &PlantState,
    p: &ObserverParams,
    rho_a: f64,
) -> [f64; 2] {
    let w1 = p.sample(grid, &obs.w, Edge::Bottom);
    let w2 = p.sample(grid, &obs.w, Edge::Top);
    let v1 = p.sample(grid, &obs.p, Edge::Bottom) / rho_a;
    let v2 = p.sample(grid, &obs.p, Edge::Top) / rho_a;
    [
        -p.k1 * (m.ybar1 - w1) - p.kd11 * (m.y1 - v1),
        -p.k2 * (m.ybar2 - w2) - p.kd22 * (m.y2 - v2),
    ]
}

/// Applied shear on the observer's actuated edges: `Λ u − δ k̂`.
pub fn observer_loads(
    grid: &Grid,
    act: &Actuation,
    u: [f64; 2],
    khat: [f64; 2],
    p: &ObserverParams,
) -> EdgeLoads {
    let mut bottom: Vec<f64> = act.lambda_bottom.values.iter().map(|l| l * u[0]).collect();
    let mut top: Vec<f64> = act.lambda_top.values.iter().map(|l| l * u[1]).collect();
    for (t, c) in p.stencil(p.meas1) {
        bottom[t] -= c * khat[0] / grid.edge_weight(Edge::Bottom, t);
    }
    for (t, c) in p.stencil(p.meas2) {
        top[t] -= c * khat[1] / grid.edge_weight(Edge::Top, t);
    }
    EdgeLoads::none()
        .with(EdgeProfile {
            edge: Edge::Bottom,
            values: bottom,
        })
        .with(EdgeProfile {
            edge: Edge::Top,
            values: top,
        })
}

/// Observer dynamics: the plate equations with the corrected edge shear.
pub fn observer_rhs(
    plate: &Plate,
    s: &PlantState,
    act: &Actuation,
    u: [f64; 2],
    khat: [f64; 2],
    p: &ObserverParams,
) -> Result<(Field, Field)> {
    let loads = observer_loads(plate.grid(), act, u, khat, p);
    plate.plant_rhs(s, &loads)
}

/// Error energy `H̃` and the shaped error energy
/// `H̃_d = H̃ + (k₁/2) w̃(m₁)² + (k₂/2) w̃(m₂)²`.
pub fn error_energies(
    plate: &Plate,
    plant: &PlantState,
    obs: &PlantState,
    p: &ObserverParams,
) -> (f64, f64) {
    let g = plate.grid();
    let err = PlantState {
        w: Field::from_array(plant.w.values() - obs.w.values()).expect("finite"),
        p: Field::from_array(plant.p.values() - obs.p.values()).expect("finite"),
    };
    let h = plate.total_energy(&err);
    let e1 = p.sample(g, &err.w, Edge::Bottom);
    let e2 = p.sample(g, &err.w, Edge::Top);
    (h, h + 0.5 * p.k1 * e1 * e1 + 0.5 * p.k2 * e2 * e2)
}
