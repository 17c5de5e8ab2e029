//! Four-state port-Hamiltonian boundary controller.
//!
//! States 1 and 2 integrate the collocated plate velocities weighted by the
//! actuator profiles, which makes `x_c^λ − ∫ Λ_λ w` a structural invariant.
//! States 3 and 4 form a dissipative block that injects damping.

use crate::actuation::Actuation;
use crate::error::{check, Error, Result};
use crate::grid::{EdgeProfile, Field, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub c1: f64,
    pub c2: f64,
    pub jc34: f64,
    pub rc33: f64,
    pub rc34: f64,
    pub rc44: f64,
    pub g31: f64,
    pub g32: f64,
    pub g41: f64,
    pub g42: f64,
    pub mc33: f64,
    pub mc34: f64,
    pub mc44: f64,
    pub us1: f64,
    pub us2: f64,
    /// Set-points `x_c^{1,d}`, `x_c^{2,d}`.
    pub xd1: f64,
    pub xd2: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            c1: 5.0,
            c2: 5.0,
            jc34: 1.0,
            rc33: 15.0,
            rc34: 1.0,
            rc44: 15.0,
            g31: 1.0,
            g32: 0.0,
            g41: 0.0,
            g42: 1.0,
            mc33: 25.0,
            mc34: 5.0,
            mc44: 25.0,
            us1: -1.0,
            us2: -1.0,
            xd1: 0.0,
            xd2: 0.0,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        check(self.c1 > 0.0, "c1", self.c1, "must be > 0")?;
        check(self.c2 > 0.0, "c2", self.c2, "must be > 0")?;
        check(
            self.rc33 >= 0.0,
            "Rc33",
            self.rc33,
            "R_c block must be positive semidefinite",
        )?;
        check(
            self.rc44 >= 0.0,
            "Rc44",
            self.rc44,
            "R_c block must be positive semidefinite",
        )?;
        let det_r = self.rc33 * self.rc44 - self.rc34 * self.rc34;
        check(
            det_r >= 0.0,
            "Rc34",
            self.rc34,
            "R_c block must be positive semidefinite",
        )?;
        check(
            self.mc33 > 0.0,
            "Mc33",
            self.mc33,
            "M_c block must be positive definite",
        )?;
        let det_m = self.mc33 * self.mc44 - self.mc34 * self.mc34;
        check(
            det_m > 0.0,
            "Mc34",
            self.mc34,
            "M_c block must be positive definite",
        )?;
        for (name, v) in [
            ("Jc34", self.jc34),
            ("Gc31", self.g31),
            ("Gc32", self.g32),
            ("Gc41", self.g41),
            ("Gc42", self.g42),
            ("us1", self.us1),
            ("us2", self.us2),
            ("xc1_d", self.xd1),
            ("xc2_d", self.xd2),
        ] {
            check(v.is_finite(), name, v, "must be finite")?;
        }
        Ok(())
    }

    pub fn with_setpoints(mut self, xd: (f64, f64)) -> Self {
        self.xd1 = xd.0;
        self.xd2 = xd.1;
        self
    }

    /// State at which the gradient of `H_c` vanishes.
    pub fn minimum(&self) -> ControllerState {
        ControllerState {
            xc: [
                self.xd1 + self.us1 / self.c1,
                self.xd2 + self.us2 / self.c2,
                0.0,
                0.0,
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerState {
    pub xc: [f64; 4],
}

impl ControllerState {
    pub fn new(xc: [f64; 4]) -> Result<Self> {
        if xc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("controller state must be finite".into()));
        }
        Ok(Self { xc })
    }
}

/// Controller energy `H_c`.
pub fn hc(x: &ControllerState, p: &ControllerParams) -> f64 {
    let [x1, x2, x3, x4] = x.xc;
    let e1 = x1 - p.xd1 - p.us1 / p.c1;
    let e2 = x2 - p.xd2 - p.us2 / p.c2;
    0.5 * p.c1 * e1 * e1
        + 0.5 * p.c2 * e2 * e2
        + 0.5 * (p.mc33 * x3 * x3 + 2.0 * p.mc34 * x3 * x4 + p.mc44 * x4 * x4)
}

/// `∂H_c/∂x_c`.
pub fn hc_gradient(x: &ControllerState, p: &ControllerParams) -> [f64; 4] {
    let [x1, x2, x3, x4] = x.xc;
    [
        p.c1 * (x1 - p.xd1) - p.us1,
        p.c2 * (x2 - p.xd2) - p.us2,
        p.mc33 * x3 + p.mc34 * x4,
        p.mc34 * x3 + p.mc44 * x4,
    ]
}

/// Collocated outputs `y_c = G_cᵀ ∂H_c`.
pub fn controller_outputs(x: &ControllerState, p: &ControllerParams) -> [f64; 2] {
    let g = hc_gradient(x, p);
    [
        g[0] + p.g31 * g[2] + p.g41 * g[3],
        g[1] + p.g32 * g[2] + p.g42 * g[3],
    ]
}

/// Plant inputs from the power-conserving interconnection, `u = −y_c`.
pub fn plant_inputs(x: &ControllerState, p: &ControllerParams) -> [f64; 2] {
    let y = controller_outputs(x, p);
    [-y[0], -y[1]]
}

/// `ẋ_c = (J_c − R_c) ∂H_c + G_c u_c`.
pub fn controller_rhs(x: &ControllerState, uc: [f64; 2], p: &ControllerParams) -> [f64; 4] {
    let g = hc_gradient(x, p);
    [
        uc[0],
        uc[1],
        -p.rc33 * g[2] + (p.jc34 - p.rc34) * g[3] + p.g31 * uc[0] + p.g32 * uc[1],
        (-p.jc34 - p.rc34) * g[2] - p.rc44 * g[3] + p.g41 * uc[0] + p.g42 * uc[1],
    ]
}

/// Rate of change of `H_c` due to its dissipative block alone,
/// `−(∂₃, ∂₄) R (∂₃, ∂₄)ᵀ`.
pub fn controller_dissipation(x: &ControllerState, p: &ControllerParams) -> f64 {
    let g = hc_gradient(x, p);
    -(p.rc33 * g[2] * g[2] + 2.0 * p.rc34 * g[2] * g[3] + p.rc44 * g[3] * g[3])
}

fn weighted_edge_integral(grid: &Grid, lambda: &EdgeProfile, f: &Field) -> f64 {
    let trace = f.edge(grid, lambda.edge);
    lambda
        .values
        .iter()
        .zip(&trace.values)
        .enumerate()
        .map(|(t, (l, v))| grid.edge_weight(lambda.edge, t) * l * v)
        .sum()
}

/// Controller inputs `u_c^λ = ∫ Λ_λ p/ρA` on the actuated edges.
pub fn interconnect(grid: &Grid, p: &Field, act: &Actuation, rho_a: f64) -> [f64; 2] {
    [
        weighted_edge_integral(grid, &act.lambda_bottom, p) / rho_a,
        weighted_edge_integral(grid, &act.lambda_top, p) / rho_a,
    ]
}

/// Casimir values `C^λ = x_c^λ − ∫ Λ_λ w`.
pub fn casimirs(grid: &Grid, w: &Field, x: &ControllerState, act: &Actuation) -> [f64; 2] {
    [
        x.xc[0] - weighted_edge_integral(grid, &act.lambda_bottom, w),
        x.xc[1] - weighted_edge_integral(grid, &act.lambda_top, w),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actuation::{ActuatorParams, EquilibriumParams};
    use crate::grid::Edge;
    use approx::assert_relative_eq;

    fn params() -> ControllerParams {
        ControllerParams::default().with_setpoints((0.37, -0.21))
    }

    #[test]
    fn gradient_vanishes_at_minimum() {
        let p = params();
        let g = hc_gradient(&p.minimum(), &p);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        assert!(controller_outputs(&p.minimum(), &p)
            .iter()
            .all(|v| v.abs() < 1e-15));
        assert!(hc(&p.minimum(), &p).abs() < 1e-30);
    }

    #[test]
    fn gradient_at_setpoint() {
        let p = params();
        let x = ControllerState {
            xc: [p.xd1, p.xd2, 0.0, 0.0],
        };
        let g = hc_gradient(&x, &p);
        assert_eq!(g, [1.0, 1.0, 0.0, 0.0]);
        assert_eq!(controller_outputs(&x, &p), [1.0, 1.0]);
        assert_eq!(plant_inputs(&x, &p), [p.us1, p.us2]);
    }

    #[test]
    fn damping_block_gradient() {
        let p = params();
        let g = hc_gradient(
            &ControllerState {
                xc: [0.0, 0.0, 1.0, 0.0],
            },
            &p,
        );
        assert_eq!((g[2], g[3]), (25.0, 5.0));
    }

    #[test]
    fn rhs_input_map() {
        let p = params();
        let x = p.minimum();
        assert_eq!(controller_rhs(&x, [0.0, 0.0], &p), [0.0; 4]);
        assert_eq!(controller_rhs(&x, [1.0, 0.0], &p), [1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn energy_rate_without_input() {
        let p = params();
        let x = ControllerState {
            xc: [0.3, -0.8, 0.05, -0.02],
        };
        let g = hc_gradient(&x, &p);
        let xd = controller_rhs(&x, [0.0, 0.0], &p);
        let rate: f64 = g.iter().zip(&xd).map(|(a, b)| a * b).sum();
        assert_relative_eq!(rate, controller_dissipation(&x, &p), max_relative = 1e-13);
        assert!(rate <= 0.0);
    }

    #[test]
    fn rejects_indefinite_blocks() {
        let mut p = params();
        p.rc33 = -1.0;
        assert!(matches!(
            p.validate(),
            Err(Error::InvalidParameter { name: "Rc33", .. })
        ));
        let mut p = params();
        p.mc34 = 30.0;
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
    }

    #[test]
    fn interconnect_integrates_profile() {
        let g = Grid::new(161, 41, 1.0, 1.0).unwrap();
        let act = Actuation::sample(
            &g,
            &ActuatorParams {
                psi: 1.0,
                sigma: 10.0,
            },
            &EquilibriumParams::default(),
        )
        .unwrap();
        assert_eq!(interconnect(&g, &Field::zeros(&g), &act, 1.0), [0.0, 0.0]);
        let uc = interconnect(&g, &Field::constant(&g, 1.0), &act, 1.0);
        let exact = 10.0 * (1.0 - 1.0 / 10.0_f64.cosh().powi(2));
        assert!((uc[0] - exact).abs() < 1e-3 * exact, "{} vs {exact}", uc[0]);
        assert_eq!(uc[0], uc[1]);
    }

    #[test]
    fn casimir_boundary_derivative_cancels_profile() {
        // δC/δw on the edge, normalized by the quadrature weight, equals −Λ.
        let g = Grid::new(21, 21, 1.0, 1.0).unwrap();
        let act = Actuation::sample(
            &g,
            &ActuatorParams::default(),
            &EquilibriumParams::default(),
        )
        .unwrap();
        let x = ControllerState::default();
        let w0 = Field::zeros(&g);
        let c0 = casimirs(&g, &w0, &x, &act);
        for t in 0..21 {
            let mut w = w0.clone();
            w.set(t, 0, 1.0);
            let c = casimirs(&g, &w, &x, &act);
            let grad = (c[0] - c0[0]) / g.edge_weight(Edge::Bottom, t);
            assert!((grad + act.lambda_bottom.values[t]).abs() < 1e-12);
            assert_eq!(c[1], c0[1]);
        }
    }
}
