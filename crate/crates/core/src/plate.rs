//! The Kirchhoff-Love plate: energy, dynamics, boundary quantities and the
//! power-balance audit.
//!
//! The bending energy is discretized as a weighted sum of squared discrete
//! curvatures. Normal curvatures live on the nodes (trapezoid weights) and
//! the twist lives on the cell centres:
//!
//! ```text
//! V_h = Σ_nodes W ½D (a² + b² + 2ν a b) + Σ_cells dz1 dz2 D (1 − ν) c²
//! ```
//!
//! `a` and `b` are three-point second differences whose out-of-domain
//! neighbours are eliminated with the boundary relations (even reflection on
//! clamped edges, zero on simply supported edges, `M = 0` on free and
//! actuated edges). The restoring force is the exact gradient `K w` of this
//! energy, so the semi-discrete system is Hamiltonian with the stiffness `K`
//! and the discrete power balance holds identically. Away from the corners
//! `K w / W` coincides with the 13-point biharmonic applied to the
//! ghost-extended field of [`extend_with_bc`].

use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::grid::{
    extend_extrapolated, extend_with_bc, BoundaryConditions, Edge, EdgeCondition, EdgeLoads,
    EdgeProfile, ExtendedField, Field, Grid, MultiIndex, PlateParams,
};

/// Deflection `w` and momentum density `p = ρA ẇ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub w: Field,
    pub p: Field,
}

impl PlantState {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            w: Field::zeros(grid),
            p: Field::zeros(grid),
        }
    }
}

/// Shear forces and bending moments on the four edges, using the globally
/// oriented formulas (`Q₁`, `M₁` on the z²-normal edges, `Q₂`, `M₂` on the
/// z¹-normal edges).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryQuantities {
    pub q1_bottom: EdgeProfile,
    pub q1_top: EdgeProfile,
    pub m1_bottom: EdgeProfile,
    pub m1_top: EdgeProfile,
    pub q2_left: EdgeProfile,
    pub q2_right: EdgeProfile,
    pub m2_left: EdgeProfile,
    pub m2_right: EdgeProfile,
}

impl BoundaryQuantities {
    /// Shear and moment profiles on `edge`.
    pub fn on(&self, edge: Edge) -> (&EdgeProfile, &EdgeProfile) {
        match edge {
            Edge::Bottom => (&self.q1_bottom, &self.m1_bottom),
            Edge::Top => (&self.q1_top, &self.m1_top),
            Edge::Left => (&self.q2_left, &self.m2_left),
            Edge::Right => (&self.q2_right, &self.m2_right),
        }
    }
}

/// How the boundary-port power is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortEvaluation {
    /// Applied shear times edge velocity, with the same quadrature the
    /// scheme uses. The discrete power balance then closes up to the time
    /// integrator.
    Prescribed,
    /// Shear and moment reconstructed from the computed deflection by
    /// polynomial extrapolation, independent of the boundary closure. The
    /// mismatch measures the spatial consistency of the scheme.
    Measured,
}

/// Linear functional on node values, at most three terms.
#[derive(Debug, Clone, Copy, Default)]
struct Form {
    idx: [usize; 3],
    coef: [f64; 3],
    len: usize,
}

impl Form {
    fn push(&mut self, k: usize, c: f64) {
        self.idx[self.len] = k;
        self.coef[self.len] = c;
        self.len += 1;
    }

    fn terms(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(move |n| (self.idx[n], self.coef[n]))
    }

    #[inline]
    fn eval(&self, w: &[f64]) -> f64 {
        self.terms().map(|(k, c)| c * w[k]).sum()
    }
}

/// Discretized plate with fixed geometry, material and boundary conditions.
#[derive(Debug, Clone)]
pub struct Plate {
    grid: Grid,
    params: PlateParams,
    bc: BoundaryConditions,
    curv1: Vec<Form>,
    curv2: Vec<Form>,
    weights: Vec<f64>,
    dirichlet: Vec<bool>,
    stiffness: CsMat<f64>,
}

impl Plate {
    pub fn new(grid: Grid, params: PlateParams, bc: BoundaryConditions) -> Result<Self> {
        params.validate()?;
        if (grid.l1() - params.l1).abs() > 1e-12 * params.l1
            || (grid.l2() - params.l2).abs() > 1e-12 * params.l2
        {
            return Err(Error::Config(
                "grid extent does not match plate dimensions".into(),
            ));
        }
        let n = grid.len();
        let mut dirichlet = vec![false; n];
        let mut weights = vec![0.0; n];
        for i in 0..grid.n1() {
            for j in 0..grid.n2() {
                let k = grid.node(i, j);
                dirichlet[k] = bc.is_dirichlet_node(&grid, i, j);
                weights[k] = grid.node_weight(i, j);
            }
        }
        let mut plate = Self {
            grid,
            params,
            bc,
            curv1: Vec::with_capacity(n),
            curv2: Vec::with_capacity(n),
            weights,
            dirichlet,
            stiffness: CsMat::zero((n, n)),
        };
        for i in 0..grid.n1() {
            for j in 0..grid.n2() {
                let a = plate.curvature_form(i, j, true);
                let b = plate.curvature_form(i, j, false);
                plate.curv1.push(a);
                plate.curv2.push(b);
            }
        }
        plate.stiffness = plate.assemble_stiffness();
        Ok(plate)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn params(&self) -> &PlateParams {
        &self.params
    }
    pub fn bc(&self) -> &BoundaryConditions {
        &self.bc
    }

    /// Stiffness matrix `K`, the Hessian of the discrete bending energy.
    /// Rows and columns of constrained nodes are empty.
    pub fn stiffness(&self) -> &CsMat<f64> {
        &self.stiffness
    }

    /// Trapezoid weight of every node, in node order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Whether each node carries a homogeneous Dirichlet constraint.
    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    /// Discrete normal curvature at `(i, j)` along z¹ (`along_z1`) or z².
    fn curvature_form(&self, i: usize, j: usize, along_z1: bool) -> Form {
        let g = &self.grid;
        let (n1, n2) = g.shape();
        let (pos, len, h) = if along_z1 {
            (i, n1, g.dz1())
        } else {
            (j, n2, g.dz2())
        };
        let node_at = |s: usize| {
            if along_z1 {
                g.node(s, j)
            } else {
                g.node(i, s)
            }
        };
        let (first, last) = if along_z1 {
            (Edge::Left, Edge::Right)
        } else {
            (Edge::Bottom, Edge::Top)
        };
        // Edges running parallel to the curvature direction through this node.
        let on_parallel = |cond: fn(EdgeCondition) -> bool| {
            if along_z1 {
                (j == 0 && cond(self.bc.get(Edge::Bottom)))
                    || (j + 1 == n2 && cond(self.bc.get(Edge::Top)))
            } else {
                (i == 0 && cond(self.bc.get(Edge::Left)))
                    || (i + 1 == n1 && cond(self.bc.get(Edge::Right)))
            }
        };

        let mut raw = Form::default();
        if on_parallel(EdgeCondition::is_dirichlet) {
            // Curvature along a constrained line vanishes.
        } else if pos > 0 && pos + 1 < len {
            let s = 1.0 / (h * h);
            raw.push(node_at(pos - 1), s);
            raw.push(node_at(pos), -2.0 * s);
            raw.push(node_at(pos + 1), s);
        } else {
            let (edge, inward) = if pos == 0 {
                (first, 1)
            } else {
                (last, pos - 1)
            };
            match self.bc.get(edge) {
                EdgeCondition::Clamped => {
                    let s = 2.0 / (h * h);
                    raw.push(node_at(pos), -s);
                    raw.push(node_at(inward), s);
                }
                EdgeCondition::SimplySupported => {}
                EdgeCondition::Free | EdgeCondition::Actuated => {
                    let corner = on_parallel(|_| true);
                    if !corner {
                        let ht = if along_z1 { g.dz2() } else { g.dz1() };
                        let s = -self.params.nu / (ht * ht);
                        let tnode = |t: usize| {
                            if along_z1 {
                                g.node(i, t)
                            } else {
                                g.node(t, j)
                            }
                        };
                        let t = if along_z1 { j } else { i };
                        raw.push(tnode(t - 1), s);
                        raw.push(tnode(t), -2.0 * s);
                        raw.push(tnode(t + 1), s);
                    }
                }
            }
        }
        let mut out = Form::default();
        for (k, c) in raw.terms() {
            if !self.dirichlet[k] {
                out.push(k, c);
            }
        }
        out
    }

    /// Cell twist `(w₁₁ − w₁₀ − w₀₁ + w₀₀)/(dz1 dz2)` with constrained
    /// nodes dropped.
    fn twist_form(&self, i: usize, j: usize) -> ([usize; 4], [f64; 4]) {
        let g = &self.grid;
        let s = 1.0 / (g.dz1() * g.dz2());
        let idx = [
            g.node(i, j),
            g.node(i + 1, j),
            g.node(i, j + 1),
            g.node(i + 1, j + 1),
        ];
        let mut coef = [s, -s, -s, s];
        for (c, k) in coef.iter_mut().zip(idx) {
            if self.dirichlet[k] {
                *c = 0.0;
            }
        }
        (idx, coef)
    }

    fn assemble_stiffness(&self) -> CsMat<f64> {
        let n = self.grid.len();
        let d = self.params.d_e;
        let nu = self.params.nu;
        let mut t = TriMat::with_capacity((n, n), 40 * n);
        for k in 0..n {
            let wd = self.weights[k] * d;
            let (a, b) = (&self.curv1[k], &self.curv2[k]);
            for (p, cp) in a.terms() {
                for (q, cq) in a.terms() {
                    t.add_triplet(p, q, wd * cp * cq);
                }
                for (q, cq) in b.terms() {
                    t.add_triplet(p, q, wd * nu * cp * cq);
                    t.add_triplet(q, p, wd * nu * cp * cq);
                }
            }
            for (p, cp) in b.terms() {
                for (q, cq) in b.terms() {
                    t.add_triplet(p, q, wd * cp * cq);
                }
            }
        }
        let g = &self.grid;
        let cell = 2.0 * g.dz1() * g.dz2() * d * (1.0 - nu);
        for i in 0..g.n1() - 1 {
            for j in 0..g.n2() - 1 {
                let (idx, coef) = self.twist_form(i, j);
                for p in 0..4 {
                    for q in 0..4 {
                        let v = cell * coef[p] * coef[q];
                        if v != 0.0 {
                            t.add_triplet(idx[p], idx[q], v);
                        }
                    }
                }
            }
        }
        t.to_csr()
    }

    /// Nodal normal curvatures `(a, b)` of `w` as used by the energy.
    pub fn curvatures(&self, w: &Field) -> (Field, Field) {
        let ws = w.as_slice();
        let a: Vec<f64> = self.curv1.iter().map(|f| f.eval(ws)).collect();
        let b: Vec<f64> = self.curv2.iter().map(|f| f.eval(ws)).collect();
        (
            Field::from_flat(&self.grid, &a).expect("grid"),
            Field::from_flat(&self.grid, &b).expect("grid"),
        )
    }

    /// Squared cell twist `c²` for every cell, `(N1 − 1) x (N2 − 1)`.
    fn twist_squared(&self, w: &[f64]) -> ndarray::Array2<f64> {
        let g = &self.grid;
        ndarray::Array2::from_shape_fn((g.n1() - 1, g.n2() - 1), |(i, j)| {
            let (idx, coef) = self.twist_form(i, j);
            let c: f64 = (0..4).map(|m| coef[m] * w[idx[m]]).sum();
            c * c
        })
    }

    /// Energy density `p²/(2ρA) + 𝒱` at every node.
    ///
    /// The twist contribution at a node is the mean of `D(1 − ν) c²` over
    /// the adjacent cells, so that [`Grid::integrate_domain`] of the density
    /// equals [`Plate::total_energy`] exactly.
    pub fn hamiltonian_density(&self, s: &PlantState) -> Field {
        let g = &self.grid;
        let (d, nu, rho_a) = (self.params.d_e, self.params.nu, self.params.rho_a);
        let ws = s.w.as_slice();
        let c2 = self.twist_squared(ws);
        let (n1, n2) = g.shape();
        let mut out = Field::zeros(g);
        for i in 0..n1 {
            for j in 0..n2 {
                let k = g.node(i, j);
                let a = self.curv1[k].eval(ws);
                let b = self.curv2[k].eval(ws);
                let mut twist = 0.0;
                let mut count = 0.0;
                for ci in i.saturating_sub(1)..i.min(n1 - 2) + 1 {
                    for cj in j.saturating_sub(1)..j.min(n2 - 2) + 1 {
                        twist += c2[[ci, cj]];
                        count += 1.0;
                    }
                }
                let p = s.p.get(i, j);
                let v = 0.5 * d * (a * a + b * b + 2.0 * nu * a * b)
                    + d * (1.0 - nu) * twist / count
                    + p * p / (2.0 * rho_a);
                out.set(i, j, v);
            }
        }
        out
    }

    /// Discrete bending energy `V_h(w)`.
    pub fn potential_energy(&self, w: &Field) -> f64 {
        let g = &self.grid;
        let (d, nu) = (self.params.d_e, self.params.nu);
        let ws = w.as_slice();
        let mut v = 0.0;
        for k in 0..g.len() {
            let a = self.curv1[k].eval(ws);
            let b = self.curv2[k].eval(ws);
            v += self.weights[k] * 0.5 * d * (a * a + b * b + 2.0 * nu * a * b);
        }
        v + g.dz1() * g.dz2() * d * (1.0 - nu) * self.twist_squared(ws).sum()
    }

    pub fn kinetic_energy(&self, p: &Field) -> f64 {
        let ps = p.as_slice();
        ps.iter()
            .zip(&self.weights)
            .map(|(p, w)| w * p * p)
            .sum::<f64>()
            / (2.0 * self.params.rho_a)
    }

    /// Total energy `ℋ = T + V_h`.
    pub fn total_energy(&self, s: &PlantState) -> f64 {
        self.kinetic_energy(&s.p) + self.potential_energy(&s.w)
    }

    /// `K w`, the gradient of the bending energy.
    pub fn energy_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        sprs::prod::mul_acc_mat_vec_csr(self.stiffness.view(), w, &mut out[..]);
        out
    }

    /// Nodal forces `f_k` from applied edge shear, integrated with the
    /// trapezoid weight of the edge. Constrained nodes receive nothing.
    pub fn load_vector(&self, loads: &EdgeLoads) -> Result<Vec<f64>> {
        loads.validate(&self.grid, &self.bc)?;
        let mut f = vec![0.0; self.grid.len()];
        for edge in Edge::ALL {
            if let Some(v) = loads.get(edge) {
                for (t, load) in v.iter().enumerate() {
                    let (i, j) = self.grid.edge_local(edge, t as isize, 0);
                    let k = self.grid.node(i as usize, j as usize);
                    if !self.dirichlet[k] {
                        f[k] += self.grid.edge_weight(edge, t) * load;
                    }
                }
            }
        }
        Ok(f)
    }

    /// Right-hand side of `ẇ = p/ρA`, `ṗ = −δ_w𝒱 + applied shear`.
    pub fn plant_rhs(&self, s: &PlantState, loads: &EdgeLoads) -> Result<(Field, Field)> {
        s.w.check_grid(&self.grid)?;
        s.p.check_grid(&self.grid)?;
        let f = self.load_vector(loads)?;
        let kw = self.energy_gradient(s.w.as_slice());
        let rho_a = self.params.rho_a;
        let mut wdot = s.p.scaled(1.0 / rho_a);
        let mut pdot = Field::zeros(&self.grid);
        let pd = pdot.as_slice_mut();
        for k in 0..pd.len() {
            if !self.dirichlet[k] {
                pd[k] = (f[k] - kw[k]) / self.weights[k];
            }
        }
        let wd = wdot.as_slice_mut();
        for k in 0..wd.len() {
            if self.dirichlet[k] {
                wd[k] = 0.0;
            }
        }
        Ok((wdot, pdot))
    }

    /// `D (w_[40] + 2 w_[22] + w_[04])` on the ghost-extended field.
    pub fn ghost_biharmonic(&self, w: &Field, loads: &EdgeLoads) -> Result<Field> {
        let e = extend_with_bc(&self.grid, w, &self.bc, loads, &self.params)?;
        let d40 = e.partial(MultiIndex::new(4, 0))?;
        let d22 = e.partial(MultiIndex::new(2, 2))?;
        let d04 = e.partial(MultiIndex::new(0, 4))?;
        let mut out = d40.values() + &(d22.values() * 2.0) + d04.values();
        out *= self.params.d_e;
        Field::from_array(out)
    }

    /// Boundary quantities reconstructed from `w` by extrapolation.
    pub fn measured_boundary_quantities(&self, w: &Field) -> Result<BoundaryQuantities> {
        let e = extend_extrapolated(&self.grid, w)?;
        boundary_quantities(&e, &self.params)
    }

    /// Power flowing into the plate through its boundary.
    pub fn port_power(
        &self,
        s: &PlantState,
        loads: &EdgeLoads,
        eval: PortEvaluation,
    ) -> Result<f64> {
        let wdot = s.p.scaled(1.0 / self.params.rho_a);
        match eval {
            PortEvaluation::Prescribed => {
                let f = self.load_vector(loads)?;
                Ok(f.iter()
                    .zip(wdot.as_slice())
                    .zip(&self.dirichlet)
                    .filter(|(_, d)| !**d)
                    .map(|((f, v), _)| f * v)
                    .sum())
            }
            PortEvaluation::Measured => {
                let bq = self.measured_boundary_quantities(&s.w)?;
                let ev = extend_extrapolated(&self.grid, &wdot)?;
                let g = &self.grid;
                let mut total = 0.0;
                for edge in Edge::ALL {
                    let (q, m) = bq.on(edge);
                    let slope = match edge {
                        Edge::Bottom | Edge::Top => MultiIndex::new(0, 1),
                        Edge::Left | Edge::Right => MultiIndex::new(1, 0),
                    };
                    let mut density = Vec::with_capacity(q.len());
                    for t in 0..q.len() {
                        let (i, j) = g.edge_local(edge, t as isize, 0);
                        let (i, j) = (i as usize, j as usize);
                        let v = wdot.get(i, j);
                        let vn = ev.partial_at(slope, i, j)?;
                        density.push(q.values[t] * v + m.values[t] * vn);
                    }
                    total += edge.orientation()
                        * g.integrate_edge(&EdgeProfile {
                            edge,
                            values: density,
                        });
                }
                Ok(total)
            }
        }
    }
}

/// Evaluates the shear and moment relations on every edge of a
/// ghost-extended deflection:
///
/// ```text
/// Q₁ =  D (w_[03] + (2 − ν) w_[21])     M₁ = −D (w_[02] + ν w_[20])
/// Q₂ = −D (w_[30] + (2 − ν) w_[12])     M₂ =  D (w_[20] + ν w_[02])
/// ```
pub fn boundary_quantities(e: &ExtendedField, params: &PlateParams) -> Result<BoundaryQuantities> {
    let g = *e.grid();
    let (d, nu) = (params.d_e, params.nu);
    let at = |edge: Edge, index: MultiIndex| -> Result<Vec<f64>> {
        (0..g.edge_len(edge))
            .map(|t| {
                let (i, j) = g.edge_local(edge, t as isize, 0);
                e.partial_at(index, i as usize, j as usize)
            })
            .collect()
    };
    let combine = |edge: Edge, x: Vec<f64>, y: Vec<f64>, s: f64, c: f64| EdgeProfile {
        edge,
        values: x.iter().zip(&y).map(|(x, y)| s * (x + c * y)).collect(),
    };
    let q1 = |edge| -> Result<EdgeProfile> {
        Ok(combine(
            edge,
            at(edge, MultiIndex::new(0, 3))?,
            at(edge, MultiIndex::new(2, 1))?,
            d,
            2.0 - nu,
        ))
    };
    let m1 = |edge| -> Result<EdgeProfile> {
        Ok(combine(
            edge,
            at(edge, MultiIndex::new(0, 2))?,
            at(edge, MultiIndex::new(2, 0))?,
            -d,
            nu,
        ))
    };
    let q2 = |edge| -> Result<EdgeProfile> {
        Ok(combine(
            edge,
            at(edge, MultiIndex::new(3, 0))?,
            at(edge, MultiIndex::new(1, 2))?,
            -d,
            2.0 - nu,
        ))
    };
    let m2 = |edge| -> Result<EdgeProfile> {
        Ok(combine(
            edge,
            at(edge, MultiIndex::new(2, 0))?,
            at(edge, MultiIndex::new(0, 2))?,
            d,
            nu,
        ))
    };
    Ok(BoundaryQuantities {
        q1_bottom: q1(Edge::Bottom)?,
        q1_top: q1(Edge::Top)?,
        m1_bottom: m1(Edge::Bottom)?,
        m1_top: m1(Edge::Top)?,
        q2_left: q2(Edge::Left)?,
        q2_right: q2(Edge::Right)?,
        m2_left: m2(Edge::Left)?,
        m2_right: m2(Edge::Right)?,
    })
}

/// Residual of the discrete power balance at every interior sample:
/// `(H[n+1] − H[n−1]) / 2dt − (P[n−1] + 2 P[n] + P[n+1]) / 4`.
pub fn power_balance_residual(energy: &[f64], port_power: &[f64], dt: f64) -> Result<Vec<f64>> {
    if energy.len() != port_power.len() {
        return Err(Error::ShapeMismatch {
            expected: (energy.len(), 1),
            actual: (port_power.len(), 1),
        });
    }
    if energy.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: energy.len(),
        });
    }
    crate::error::check(dt > 0.0, "dt", dt, "must be > 0")?;
    Ok((1..energy.len() - 1)
        .map(|n| {
            (energy[n + 1] - energy[n - 1]) / (2.0 * dt)
                - 0.25 * (port_power[n - 1] + 2.0 * port_power[n] + port_power[n + 1])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn plate(n: usize, bc: BoundaryConditions) -> Plate {
        let params = PlateParams::default();
        Plate::new(Grid::for_plate(&params, n, n).unwrap(), params, bc).unwrap()
    }

    #[test]
    fn zero_state_zero_energy() {
        let pl = plate(11, BoundaryConditions::plate());
        let s = PlantState::zeros(pl.grid());
        assert!(pl
            .hamiltonian_density(&s)
            .values()
            .iter()
            .all(|v| *v == 0.0));
        assert_eq!(pl.total_energy(&s), 0.0);
    }

    #[test]
    fn uniform_momentum() {
        let pl = plate(11, BoundaryConditions::plate());
        let g = *pl.grid();
        let s = PlantState {
            w: Field::zeros(&g),
            p: Field::constant(&g, 1.0),
        };
        assert!(pl
            .hamiltonian_density(&s)
            .values()
            .iter()
            .all(|v| (*v - 0.5).abs() < 1e-15));
        assert_relative_eq!(pl.total_energy(&s), 0.5, epsilon = 1e-14);
        let (wd, pd) = pl.plant_rhs(&s, &EdgeLoads::none()).unwrap();
        // Clamped nodes are held.
        assert_eq!(wd.get(0, 4), 0.0);
        assert_eq!(wd.get(3, 4), 1.0);
        assert!(pd.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn parabola_density_in_interior() {
        let pl = plate(11, BoundaryConditions::plate());
        let g = *pl.grid();
        let s = PlantState {
            w: Field::from_fn(&g, |x, _| x * x),
            p: Field::zeros(&g),
        };
        let h = pl.hamiltonian_density(&s);
        for i in 0..10 {
            for j in 1..10 {
                assert_relative_eq!(h.get(i, j), 2.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn density_integrates_to_total_energy() {
        let pl = plate(13, BoundaryConditions::plate());
        let g = *pl.grid();
        let s = PlantState {
            w: Field::from_fn(&g, |x, y| x * x * (1.0 + y) + 0.1 * (3.0 * x * y).sin()),
            p: Field::from_fn(&g, |x, y| x - y),
        };
        assert_relative_eq!(
            g.integrate_domain(&pl.hamiltonian_density(&s)),
            pl.total_energy(&s),
            max_relative = 1e-13
        );
    }

    #[test]
    fn quartic_biharmonic_probe() {
        let pl = plate(21, BoundaryConditions::plate());
        let g = *pl.grid();
        let s = PlantState {
            w: Field::from_fn(&g, |x, _| x.powi(4)),
            p: Field::zeros(&g),
        };
        let (_, pd) = pl.plant_rhs(&s, &EdgeLoads::none()).unwrap();
        for i in 2..19 {
            for j in 2..19 {
                assert_relative_eq!(pd.get(i, j), -24.0, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn sine_mode_is_eigenvector() {
        let pl = plate(21, BoundaryConditions::simply_supported());
        let g = *pl.grid();
        let w = Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin());
        let s = PlantState {
            w: w.clone(),
            p: Field::zeros(&g),
        };
        let (_, pd) = pl.plant_rhs(&s, &EdgeLoads::none()).unwrap();
        let lam = 4.0 * PI.powi(4);
        for i in 1..20 {
            for j in 1..20 {
                assert_relative_eq!(pd.get(i, j), -lam * w.get(i, j), max_relative = 1e-2);
            }
        }
    }

    #[test]
    fn sine_mode_energy() {
        // ∫ V for sin(πx) sin(πy) on the unit square: the ν terms cancel
        // and D π⁴ / 2 remains.
        let exact = PI.powi(4) / 2.0;
        let err = |n| {
            let pl = plate(n, BoundaryConditions::simply_supported());
            let g = *pl.grid();
            let s = PlantState {
                w: Field::from_fn(&g, |x, y| (PI * x).sin() * (PI * y).sin()),
                p: Field::zeros(&g),
            };
            (pl.total_energy(&s) - exact).abs()
        };
        let (e1, e2) = (err(21), err(41));
        assert!(e1 / exact < 1e-2);
        let r = e2 / e1;
        assert!((0.2..0.3).contains(&r), "ratio {r}");
    }

    #[test]
    fn stiffness_matches_ghost_biharmonic_away_from_corners() {
        let params = PlateParams::default();
        let g = Grid::for_plate(&params, 17, 17).unwrap();
        let bc = BoundaryConditions::plate();
        let pl = Plate::new(g, params, bc).unwrap();
        let w = Field::from_fn(&g, |x, y| {
            if x == 0.0 {
                0.0
            } else {
                x * x * (1.0 + 0.3 * y) + 0.2 * (2.0 * x + y).sin() * x
            }
        });
        let bottom = EdgeProfile::from_fn(&g, Edge::Bottom, |s| (3.0 * s).cos());
        let top = EdgeProfile::from_fn(&g, Edge::Top, |s| s * s - 0.5);
        let loads = EdgeLoads::none().with(bottom).with(top);
        let s = PlantState {
            w: w.clone(),
            p: Field::zeros(&g),
        };
        let (_, pd) = pl.plant_rhs(&s, &loads).unwrap();
        let bih = pl.ghost_biharmonic(&w, &loads).unwrap();
        let scale = bih.max_abs();
        for i in 1..17 {
            for j in 0..17 {
                let near_i = i < 3 || i > 13;
                let near_j = j < 3 || j > 13;
                if near_i && near_j {
                    continue;
                }
                assert!(
                    (pd.get(i, j) + bih.get(i, j)).abs() < 1e-9 * scale,
                    "node ({i},{j}): {} vs {}",
                    pd.get(i, j),
                    -bih.get(i, j)
                );
            }
        }
    }

    #[test]
    fn stiffness_symmetric_psd() {
        let pl = plate(11, BoundaryConditions::plate());
        let k = pl.stiffness();
        let dense = k.to_dense();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                assert!(
                    (dense[[i, j]] - dense[[j, i]]).abs() < 1e-9 * dense[[i, i]].abs().max(1.0)
                );
            }
        }
        let g = *pl.grid();
        let w = Field::from_fn(&g, |x, y| x * (5.0 * y).sin() + x * x);
        let kw = pl.energy_gradient(w.as_slice());
        let quad: f64 = kw.iter().zip(w.as_slice()).map(|(a, b)| a * b).sum();
        assert_relative_eq!(0.5 * quad, pl.potential_energy(&w), max_relative = 1e-12);
    }

    #[test]
    fn boundary_quantity_examples() {
        let params = PlateParams::default();
        let g = Grid::for_plate(&params, 11, 11).unwrap();
        let e = extend_extrapolated(&g, &Field::from_fn(&g, |_, y| y.powi(3))).unwrap();
        let bq = boundary_quantities(&e, &params).unwrap();
        for v in bq.q1_bottom.values.iter().chain(&bq.q1_top.values) {
            assert_relative_eq!(*v, 6.0, max_relative = 1e-9);
        }
        let e = extend_extrapolated(&g, &Field::from_fn(&g, |x, _| x * x)).unwrap();
        let bq = boundary_quantities(&e, &params).unwrap();
        for v in bq.m1_bottom.values.iter().chain(&bq.m1_top.values) {
            assert_relative_eq!(*v, -0.4, max_relative = 1e-9);
        }
        for v in bq.m2_left.values.iter().chain(&bq.m2_right.values) {
            assert_relative_eq!(*v, 2.0, max_relative = 1e-9);
        }
        let e = extend_extrapolated(&g, &Field::zeros(&g)).unwrap();
        let bq = boundary_quantities(&e, &params).unwrap();
        for edge in Edge::ALL {
            let (q, m) = bq.on(edge);
            assert_eq!(q.max_abs() + m.max_abs(), 0.0);
        }
    }

    #[test]
    fn free_edge_ghosts_satisfy_relations() {
        // Right edge free; w = x² leaves both M₂ and Q₂ to the ghosts.
        let params = PlateParams::default();
        let g = Grid::for_plate(&params, 13, 13).unwrap();
        let e = extend_with_bc(
            &g,
            &Field::from_fn(&g, |x, _| x * x),
            &BoundaryConditions::plate(),
            &EdgeLoads::none(),
            &params,
        )
        .unwrap();
        let bq = boundary_quantities(&e, &params).unwrap();
        for t in 1..12 {
            assert!(bq.m2_right.values[t].abs() < 1e-10);
            assert!(bq.q2_right.values[t].abs() < 1e-10);
        }
    }

    #[test]
    fn actuated_edge_reproduces_applied_shear() {
        let params = PlateParams::default();
        let g = Grid::for_plate(&params, 13, 13).unwrap();
        let w = Field::from_fn(&g, |x, y| x * x * (1.0 + y * y));
        let loads = EdgeLoads::none()
            .with(EdgeProfile::from_fn(&g, Edge::Bottom, |s| s.sin()))
            .with(EdgeProfile::from_fn(&g, Edge::Top, |s| 2.0 + s));
        let e = extend_with_bc(&g, &w, &BoundaryConditions::plate(), &loads, &params).unwrap();
        let bq = boundary_quantities(&e, &params).unwrap();
        for t in 1..12 {
            let s = g.z1(t);
            assert!((bq.q1_bottom.values[t] - s.sin()).abs() < 1e-9);
            // Force in +w on the top edge is −Q₁ in the global orientation.
            assert!((bq.q1_top.values[t] + 2.0 + s).abs() < 1e-9);
            assert!(bq.m1_bottom.values[t].abs() < 1e-10);
            assert!(bq.m1_top.values[t].abs() < 1e-10);
        }
    }

    #[test]
    fn residual_needs_three_samples() {
        assert_eq!(
            power_balance_residual(&[0.0, 0.0], &[0.0, 0.0], 0.1).unwrap_err(),
            Error::InsufficientData { needed: 3, got: 2 }
        );
        let r = power_balance_residual(&[0.0; 5], &[0.0; 5], 0.1).unwrap();
        assert_eq!(r, vec![0.0; 3]);
    }
}
