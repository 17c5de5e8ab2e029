//! Actuator characteristics, the desired equilibrium and the controller
//! set-points derived from them.

use crate::error::{check, Result};
use crate::grid::{Edge, EdgeProfile, Grid};

/// Shape of the shear actuators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorParams {
    /// Amplitude Ψ.
    pub psi: f64,
    /// Sharpness σ (1/m).
    pub sigma: f64,
}

impl Default for ActuatorParams {
    fn default() -> Self {
        Self {
            psi: DEFAULT_PSI,
            sigma: 10.0,
        }
    }
}

/// Default actuator amplitude `Ψ`.
pub const DEFAULT_PSI: f64 = 1.0;

impl ActuatorParams {
    pub fn validate(&self) -> Result<()> {
        check(self.sigma > 0.0, "sigma", self.sigma, "must be > 0")?;
        check(self.psi.is_finite(), "Psi", self.psi, "must be finite")
    }
}

/// Coefficients of the piecewise quadratic/linear target deflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumParams {
    pub a: f64,
    pub b: f64,
}

impl Default for EquilibriumParams {
    fn default() -> Self {
        Self {
            a: 0.1368,
            b: 0.1315,
        }
    }
}

impl EquilibriumParams {
    pub fn validate(&self) -> Result<()> {
        check(self.a > 0.0, "a", self.a, "must be > 0")?;
        check(self.b > 0.0, "b", self.b, "must be > 0")
    }
}

/// `tanh(x) sech²(x)`.
fn ts2(x: f64) -> f64 {
    let s = 1.0 / x.cosh();
    x.tanh() * s * s
}

/// Actuator profile `Λ(z¹) = −Ψ d²/d(z¹)² [tanh(σz¹) − tanh(σ(z¹ − L1/2))]`,
/// evaluated in closed form.
pub fn lambda_profile(z1: f64, params: &ActuatorParams, l1: f64) -> f64 {
    let s = params.sigma;
    2.0 * params.psi * s * s * (ts2(s * z1) - ts2(s * (z1 - 0.5 * l1)))
}

/// The window `tanh(σz¹) − tanh(σ(z¹ − L1/2))` whose negative second
/// derivative, scaled by Ψ, is the actuator profile.
pub fn actuator_window(z1: f64, params: &ActuatorParams, l1: f64) -> f64 {
    let s = params.sigma;
    (s * z1).tanh() - (s * (z1 - 0.5 * l1)).tanh()
}

/// Target deflection along the actuated edges: `a z²` up to `L1/2`, then
/// the linear continuation `b (z − L1/2) + a L1²/4`.
pub fn desired_profile(z1: f64, params: &EquilibriumParams, l1: f64) -> f64 {
    let half = 0.5 * l1;
    if z1 < half {
        params.a * z1 * z1
    } else {
        params.b * (z1 - half) + params.a * half * half
    }
}

/// `x_c^{λ,d} = ∫ Λ_λ w^d` on the two actuated edges.
pub fn controller_setpoints(
    grid: &Grid,
    lambda: (&EdgeProfile, &EdgeProfile),
    desired: (&EdgeProfile, &EdgeProfile),
) -> (f64, f64) {
    let prod = |l: &EdgeProfile, d: &EdgeProfile| EdgeProfile {
        edge: l.edge,
        values: l.values.iter().zip(&d.values).map(|(a, b)| a * b).collect(),
    };
    (
        grid.integrate_edge(&prod(lambda.0, desired.0)),
        grid.integrate_edge(&prod(lambda.1, desired.1)),
    )
}

/// Actuator and target profiles sampled on the actuated edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Actuation {
    pub lambda_bottom: EdgeProfile,
    pub lambda_top: EdgeProfile,
    pub desired_bottom: EdgeProfile,
    pub desired_top: EdgeProfile,
}

impl Actuation {
    pub fn sample(grid: &Grid, act: &ActuatorParams, eq: &EquilibriumParams) -> Result<Self> {
        act.validate()?;
        eq.validate()?;
        let l1 = grid.l1();
        let lam = |edge| EdgeProfile::from_fn(grid, edge, |z| lambda_profile(z, act, l1));
        let des = |edge| EdgeProfile::from_fn(grid, edge, |z| desired_profile(z, eq, l1));
        Ok(Self {
            lambda_bottom: lam(Edge::Bottom),
            lambda_top: lam(Edge::Top),
            desired_bottom: des(Edge::Bottom),
            desired_top: des(Edge::Top),
        })
    }

    pub fn setpoints(&self, grid: &Grid) -> (f64, f64) {
        controller_setpoints(
            grid,
            (&self.lambda_bottom, &self.lambda_top),
            (&self.desired_bottom, &self.desired_top),
        )
    }
}
