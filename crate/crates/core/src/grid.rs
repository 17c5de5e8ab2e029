//! Uniform node-centred grid on the rectangle `[0, L1] x [0, L2]`.
//!
//! Nodes are indexed `(i, j)` with `i` running along z¹ and `j` along z².
//! A [`Field`] stores one sample per node in an `N1 x N2` array; the flat
//! node index used by the assembled operators is `k = i * N2 + j`.
//!
//! The four edges follow the plate numbering:
//!
//! ```text
//!            Top (∂B₄, z² = L2)
//!          +--------------------+
//!   Left   |                    |  Right
//!  (∂B₁)   |                    |  (∂B₃)
//!  z¹ = 0  |                    |  z¹ = L1
//!          +--------------------+
//!           Bottom (∂B₂, z² = 0)
//! ```
//!
//! Ghost-extended fields carry two extra layers of nodes on every side so
//! that the central stencils for derivatives up to fourth order can be
//! evaluated at every grid node.

use ndarray::Array2;

use crate::error::{check, Error, Result};

/// Number of ghost layers carried by an [`ExtendedField`].
pub const GHOST: usize = 2;

/// Smallest admissible node count per direction.
pub const MIN_NODES: usize = 9;

/// Physical constants of the plate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateParams {
    /// Mass per unit area ρA.
    pub rho_a: f64,
    /// Flexural rigidity D_E.
    pub d_e: f64,
    /// Poisson ratio ν.
    pub nu: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Default for PlateParams {
    fn default() -> Self {
        Self {
            rho_a: 1.0,
            d_e: 1.0,
            nu: 0.2,
            l1: 1.0,
            l2: 1.0,
        }
    }
}

impl PlateParams {
    pub fn new(rho_a: f64, d_e: f64, nu: f64, l1: f64, l2: f64) -> Result<Self> {
        let p = Self {
            rho_a,
            d_e,
            nu,
            l1,
            l2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.rho_a > 0.0, "rho_A", self.rho_a, "must be > 0")?;
        check(self.d_e > 0.0, "D_E", self.d_e, "must be > 0")?;
        check(
            (0.0..0.5).contains(&self.nu),
            "nu",
            self.nu,
            "must satisfy 0 <= nu < 0.5",
        )?;
        check(self.l1 > 0.0, "L1", self.l1, "must be > 0")?;
        check(self.l2 > 0.0, "L2", self.l2, "must be > 0")?;
        Ok(())
    }
}

/// Uniform tensor-product grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
    dz1: f64,
    dz2: f64,
}

impl Grid {
    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        check(n1 >= MIN_NODES, "N1", n1 as f64, "must be >= 9")?;
        check(n2 >= MIN_NODES, "N2", n2 as f64, "must be >= 9")?;
        check(l1 > 0.0, "L1", l1, "must be > 0")?;
        check(l2 > 0.0, "L2", l2, "must be > 0")?;
        Ok(Self {
            n1,
            n2,
            l1,
            l2,
            dz1: l1 / (n1 - 1) as f64,
            dz2: l2 / (n2 - 1) as f64,
        })
    }

    pub fn for_plate(params: &PlateParams, n1: usize, n2: usize) -> Result<Self> {
        Self::new(n1, n2, params.l1, params.l2)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }
    pub fn n2(&self) -> usize {
        self.n2
    }
    pub fn l1(&self) -> f64 {
        self.l1
    }
    pub fn l2(&self) -> f64 {
        self.l2
    }
    pub fn dz1(&self) -> f64 {
        self.dz1
    }
    pub fn dz2(&self) -> f64 {
        self.dz2
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }
    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Node coordinate, rounded once.
    pub fn z1(&self, i: usize) -> f64 {
        i as f64 * self.l1 / (self.n1 - 1) as f64
    }
    pub fn z2(&self, j: usize) -> f64 {
        j as f64 * self.l2 / (self.n2 - 1) as f64
    }

    /// Flat node index.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.n2 + j
    }

    /// Inverse of [`Grid::node`].
    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k / self.n2, k % self.n2)
    }

    /// Trapezoid weight of node `i` along z¹.
    pub fn weight1(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n1 {
            0.5 * self.dz1
        } else {
            self.dz1
        }
    }

    /// Trapezoid weight of node `j` along z².
    pub fn weight2(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n2 {
            0.5 * self.dz2
        } else {
            self.dz2
        }
    }

    /// 2D trapezoid weight of node `(i, j)`.
    pub fn node_weight(&self, i: usize, j: usize) -> f64 {
        self.weight1(i) * self.weight2(j)
    }

    /// 1D trapezoid weight of the `t`-th node along `edge`.
    pub fn edge_weight(&self, edge: Edge, t: usize) -> f64 {
        match edge {
            Edge::Bottom | Edge::Top => self.weight1(t),
            Edge::Left | Edge::Right => self.weight2(t),
        }
    }

    /// Number of nodes along `edge`.
    pub fn edge_len(&self, edge: Edge) -> usize {
        match edge {
            Edge::Bottom | Edge::Top => self.n1,
            Edge::Left | Edge::Right => self.n2,
        }
    }

    /// Spacing normal to `edge`.
    pub fn normal_spacing(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left | Edge::Right => self.dz1,
            Edge::Bottom | Edge::Top => self.dz2,
        }
    }

    /// Spacing along `edge`.
    pub fn tangential_spacing(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Left | Edge::Right => self.dz2,
            Edge::Bottom | Edge::Top => self.dz1,
        }
    }

    /// Coordinate along `edge` of its `t`-th node.
    pub fn edge_coordinate(&self, edge: Edge, t: usize) -> f64 {
        match edge {
            Edge::Bottom | Edge::Top => self.z1(t),
            Edge::Left | Edge::Right => self.z2(t),
        }
    }

    /// Maps edge-local coordinates to (possibly ghost) grid indices.
    ///
    /// `t` runs along the edge in the direction of increasing z¹ or z²;
    /// `n` is the depth measured inward from the edge, negative values
    /// address ghost layers.
    #[inline]
    pub fn edge_local(&self, edge: Edge, t: isize, n: isize) -> (isize, isize) {
        let last1 = self.n1 as isize - 1;
        let last2 = self.n2 as isize - 1;
        match edge {
            Edge::Left => (n, t),
            Edge::Right => (last1 - n, t),
            Edge::Bottom => (t, n),
            Edge::Top => (t, last2 - n),
        }
    }

    /// Node index on `edge` closest to coordinate `s` along it.
    pub fn nearest_edge_node(&self, edge: Edge, s: f64) -> usize {
        let h = self.tangential_spacing(edge);
        let t = (s / h).round().max(0.0) as usize;
        t.min(self.edge_len(edge) - 1)
    }

    /// 2D trapezoid quadrature; exact for bilinear integrands.
    pub fn integrate_domain(&self, f: &Field) -> f64 {
        let v = f.values();
        let mut sum = 0.0;
        for i in 0..self.n1 {
            let w1 = self.weight1(i);
            let mut row = 0.0;
            for j in 0..self.n2 {
                row += self.weight2(j) * v[[i, j]];
            }
            sum += w1 * row;
        }
        sum
    }

    /// 1D trapezoid quadrature along an edge.
    pub fn integrate_edge(&self, g: &EdgeProfile) -> f64 {
        g.values
            .iter()
            .enumerate()
            .map(|(t, v)| self.edge_weight(g.edge, t) * v)
            .sum()
    }

    /// Central-difference derivative at the nodes where the stencil fits
    /// inside the field (no ghost information).
    pub fn partial_interior(&self, f: &Field, index: MultiIndex) -> Result<InteriorDerivative> {
        let (c1, r1) = stencil(index.d1)?;
        let (c2, r2) = stencil(index.d2)?;
        let (n1, n2) = f.shape();
        if n1 < 2 * r1 + 1 || n2 < 2 * r2 + 1 {
            return Err(Error::GridSize {
                n1,
                n2,
                reach: r1.max(r2),
            });
        }
        let scale = 1.0 / (self.dz1.powi(index.d1 as i32) * self.dz2.powi(index.d2 as i32));
        let v = f.values();
        let out = Array2::from_shape_fn((n1 - 2 * r1, n2 - 2 * r2), |(a, b)| {
            let (i, j) = (a + r1, b + r2);
            let mut s = Dot2::default();
            for (p, cp) in c1.iter().enumerate() {
                if *cp == 0.0 {
                    continue;
                }
                for (q, cq) in c2.iter().enumerate() {
                    if *cq == 0.0 {
                        continue;
                    }
                    s.add(cp * cq, v[[i + p - r1, j + q - r2]]);
                }
            }
            s.value() * scale
        });
        Ok(InteriorDerivative {
            offset: (r1, r2),
            values: out,
        })
    }
}

/// One side of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// ∂B₁, z¹ = 0.
    Left,
    /// ∂B₂, z² = 0.
    Bottom,
    /// ∂B₃, z¹ = L1.
    Right,
    /// ∂B₄, z² = L2.
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Bottom, Edge::Right, Edge::Top];

    pub fn index(self) -> usize {
        match self {
            Edge::Left => 0,
            Edge::Bottom => 1,
            Edge::Right => 2,
            Edge::Top => 3,
        }
    }

    /// Edges meeting this one at its first (`t = 0`) and last node.
    pub fn neighbours(self) -> (Edge, Edge) {
        match self {
            Edge::Bottom | Edge::Top => (Edge::Left, Edge::Right),
            Edge::Left | Edge::Right => (Edge::Bottom, Edge::Top),
        }
    }

    /// Sign converting the globally oriented boundary relations (Q₁, M₁ as
    /// written for z² = 0 and Q₂, M₂ as written for z¹ = L1) into the
    /// outward-oriented port quantities of this edge.
    pub fn orientation(self) -> f64 {
        match self {
            Edge::Bottom | Edge::Right => 1.0,
            Edge::Left | Edge::Top => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Edge::Left => "left",
            Edge::Bottom => "bottom",
            Edge::Right => "right",
            Edge::Top => "top",
        }
    }
}

/// Boundary condition on one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCondition {
    /// w = 0 and zero normal slope.
    Clamped,
    /// Q = 0 and M = 0.
    Free,
    /// Q prescribed by an applied shear profile, M = 0.
    Actuated,
    /// w = 0 and M = 0. Used only for verification against analytic modes.
    SimplySupported,
}

impl EdgeCondition {
    /// Whether edge nodes carry a homogeneous Dirichlet constraint on w.
    pub fn is_dirichlet(self) -> bool {
        matches!(
            self,
            EdgeCondition::Clamped | EdgeCondition::SimplySupported
        )
    }
}

/// A complete, consistent set of edge conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryConditions {
    conds: [EdgeCondition; 4],
}

impl BoundaryConditions {
    /// Builds a condition set from per-edge assignments; each edge must be
    /// given exactly once.
    pub fn new(assignments: &[(Edge, EdgeCondition)]) -> Result<Self> {
        let mut conds: [Option<EdgeCondition>; 4] = [None; 4];
        for &(edge, cond) in assignments {
            let slot = &mut conds[edge.index()];
            if slot.is_some() {
                return Err(Error::Config(format!(
                    "edge `{}` specified more than once",
                    edge.name()
                )));
            }
            *slot = Some(cond);
        }
        let mut out = [EdgeCondition::Free; 4];
        for edge in Edge::ALL {
            out[edge.index()] = conds[edge.index()].ok_or_else(|| {
                Error::Config(format!("edge `{}` has no boundary condition", edge.name()))
            })?;
        }
        Ok(Self { conds: out })
    }

    /// Clamped at ∂B₁, free at ∂B₃, shear-actuated at ∂B₂ and ∂B₄.
    pub fn plate() -> Self {
        Self {
            conds: [
                EdgeCondition::Clamped,
                EdgeCondition::Actuated,
                EdgeCondition::Free,
                EdgeCondition::Actuated,
            ],
        }
    }

    pub fn simply_supported() -> Self {
        Self {
            conds: [EdgeCondition::SimplySupported; 4],
        }
    }

    pub fn get(&self, edge: Edge) -> EdgeCondition {
        self.conds[edge.index()]
    }

    /// Whether node `(i, j)` lies on an edge with a Dirichlet constraint.
    pub fn is_dirichlet_node(&self, grid: &Grid, i: usize, j: usize) -> bool {
        (i == 0 && self.get(Edge::Left).is_dirichlet())
            || (i + 1 == grid.n1() && self.get(Edge::Right).is_dirichlet())
            || (j == 0 && self.get(Edge::Bottom).is_dirichlet())
            || (j + 1 == grid.n2() && self.get(Edge::Top).is_dirichlet())
    }
}

/// Derivative multi-index `[d1 d2]`: `d1` derivatives along z¹, `d2` along z².
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiIndex {
    pub d1: usize,
    pub d2: usize,
}

impl MultiIndex {
    pub const fn new(d1: usize, d2: usize) -> Self {
        Self { d1, d2 }
    }
    pub fn order(self) -> usize {
        self.d1 + self.d2
    }
}

/// Central-difference coefficients and reach for a 1D derivative of the
/// given order, second-order accurate.
/// Compensated dot product: stencil sums cancel heavily, so the rounding
/// of each product and partial sum is carried along.
#[derive(Default)]
struct Dot2 {
    sum: f64,
    err: f64,
}

impl Dot2 {
    fn add(&mut self, a: f64, x: f64) {
        let p = a * x;
        let pe = a.mul_add(x, -p);
        let s = self.sum + p;
        let z = s - self.sum;
        let se = (self.sum - (s - z)) + (p - z);
        self.sum = s;
        self.err += pe + se;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

fn stencil(order: usize) -> Result<(&'static [f64], usize)> {
    Ok(match order {
        0 => (&[1.0], 0),
        1 => (&[-0.5, 0.0, 0.5], 1),
        2 => (&[1.0, -2.0, 1.0], 1),
        3 => (&[-0.5, 1.0, 0.0, -1.0, 0.5], 2),
        4 => (&[1.0, -4.0, 6.0, -4.0, 1.0], 2),
        _ => return Err(Error::UnsupportedOrder { order }),
    })
}

fn check_order(index: MultiIndex) -> Result<()> {
    if index.order() > 4 {
        return Err(Error::UnsupportedOrder {
            order: index.order(),
        });
    }
    Ok(())
}

/// Scalar samples on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    values: Array2<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: Array2::zeros(grid.shape()),
        }
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            values: Array2::from_elem(grid.shape(), c),
        }
    }

    /// Samples `f(z1, z2)` at every node.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            values: Array2::from_shape_fn(grid.shape(), |(i, j)| f(grid.z1(i), grid.z2(j))),
        }
    }

    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("field contains non-finite values".into()));
        }
        Ok(Self {
            values: values.as_standard_layout().to_owned(),
        })
    }

    /// Builds a field from a flat vector in node order.
    pub fn from_flat(grid: &Grid, data: &[f64]) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.shape(),
                actual: (data.len(), 1),
            });
        }
        Self::from_array(Array2::from_shape_vec(grid.shape(), data.to_vec()).expect("shape"))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Flat view in node order.
    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice().expect("standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [f64] {
        self.values.as_slice_mut().expect("standard layout")
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[[i, j]] = v;
    }

    /// Trace of the field along an edge.
    pub fn edge(&self, grid: &Grid, edge: Edge) -> EdgeProfile {
        let values = (0..grid.edge_len(edge))
            .map(|t| {
                let (i, j) = grid.edge_local(edge, t as isize, 0);
                self.values[[i as usize, j as usize]]
            })
            .collect();
        EdgeProfile { edge, values }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: &self.values * s,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.shape() != grid.shape() {
            return Err(Error::ShapeMismatch {
                expected: grid.shape(),
                actual: self.shape(),
            });
        }
        Ok(())
    }
}

/// Samples along one edge, ordered by increasing edge coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProfile {
    pub edge: Edge,
    pub values: Vec<f64>,
}

impl EdgeProfile {
    pub fn new(grid: &Grid, edge: Edge, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.edge_len(edge) {
            return Err(Error::ShapeMismatch {
                expected: (grid.edge_len(edge), 1),
                actual: (values.len(), 1),
            });
        }
        Ok(Self { edge, values })
    }

    pub fn zeros(grid: &Grid, edge: Edge) -> Self {
        Self {
            edge,
            values: vec![0.0; grid.edge_len(edge)],
        }
    }

    pub fn from_fn(grid: &Grid, edge: Edge, f: impl Fn(f64) -> f64) -> Self {
        Self {
            edge,
            values: (0..grid.edge_len(edge))
                .map(|t| f(grid.edge_coordinate(edge, t)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Result of [`Grid::partial_interior`]: values at nodes
/// `(offset.0 + a, offset.1 + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorDerivative {
    pub offset: (usize, usize),
    pub values: Array2<f64>,
}

/// Applied shear (force density in the +w direction) on actuated edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeLoads {
    loads: [Option<Vec<f64>>; 4],
}

impl EdgeLoads {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, profile: EdgeProfile) -> Self {
        self.loads[profile.edge.index()] = Some(profile.values);
        self
    }

    pub fn set(&mut self, profile: EdgeProfile) {
        self.loads[profile.edge.index()] = Some(profile.values);
    }

    pub fn get(&self, edge: Edge) -> Option<&[f64]> {
        self.loads[edge.index()].as_deref()
    }

    /// Load at the `t`-th node of `edge`, zero if none is applied.
    pub fn at(&self, edge: Edge, t: usize) -> f64 {
        self.get(edge).map_or(0.0, |v| v[t])
    }

    pub(crate) fn validate(&self, grid: &Grid, bc: &BoundaryConditions) -> Result<()> {
        for edge in Edge::ALL {
            if let Some(v) = self.get(edge) {
                if bc.get(edge) != EdgeCondition::Actuated {
                    return Err(Error::Config(format!(
                        "shear applied on non-actuated edge `{}`",
                        edge.name()
                    )));
                }
                if v.len() != grid.edge_len(edge) {
                    return Err(Error::ShapeMismatch {
                        expected: (grid.edge_len(edge), 1),
                        actual: (v.len(), 1),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Field with two ghost layers on every side.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField {
    grid: Grid,
    values: Array2<f64>,
}

impl ExtendedField {
    fn from_interior(grid: &Grid, f: &Field) -> Self {
        let mut values = Array2::zeros((grid.n1() + 2 * GHOST, grid.n2() + 2 * GHOST));
        values
            .slice_mut(ndarray::s![
                GHOST..GHOST + grid.n1(),
                GHOST..GHOST + grid.n2()
            ])
            .assign(f.values());
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, i: isize, j: isize) -> f64 {
        self.values[[(i + GHOST as isize) as usize, (j + GHOST as isize) as usize]]
    }

    #[inline]
    fn put(&mut self, i: isize, j: isize, v: f64) {
        self.values[[(i + GHOST as isize) as usize, (j + GHOST as isize) as usize]] = v;
    }

    #[inline]
    fn at_edge(&self, edge: Edge, t: isize, n: isize) -> f64 {
        let (i, j) = self.grid.edge_local(edge, t, n);
        self.at(i, j)
    }

    #[inline]
    fn put_edge(&mut self, edge: Edge, t: isize, n: isize, v: f64) {
        let (i, j) = self.grid.edge_local(edge, t, n);
        self.put(i, j, v);
    }

    /// The field restricted to the real nodes.
    pub fn interior(&self) -> Field {
        let g = &self.grid;
        Field {
            values: self
                .values
                .slice(ndarray::s![GHOST..GHOST + g.n1(), GHOST..GHOST + g.n2()])
                .to_owned(),
        }
    }

    /// Raw array including ghosts; entry `[i + 2, j + 2]` is node `(i, j)`.
    pub fn raw(&self) -> &Array2<f64> {
        &self.values
    }

    /// Central-difference derivative evaluated at every grid node.
    pub fn partial(&self, index: MultiIndex) -> Result<Field> {
        check_order(index)?;
        let (c1, r1) = stencil(index.d1)?;
        let (c2, r2) = stencil(index.d2)?;
        let g = &self.grid;
        let scale = 1.0 / (g.dz1().powi(index.d1 as i32) * g.dz2().powi(index.d2 as i32));
        let values = Array2::from_shape_fn(g.shape(), |(i, j)| {
            let mut s = Dot2::default();
            for (p, cp) in c1.iter().enumerate() {
                if *cp == 0.0 {
                    continue;
                }
                for (q, cq) in c2.iter().enumerate() {
                    if *cq == 0.0 {
                        continue;
                    }
                    let a = i as isize + p as isize - r1 as isize;
                    let b = j as isize + q as isize - r2 as isize;
                    s.add(cp * cq, self.at(a, b));
                }
            }
            s.value() * scale
        });
        Ok(Field { values })
    }

    /// Value of a derivative at a single node.
    pub fn partial_at(&self, index: MultiIndex, i: usize, j: usize) -> Result<f64> {
        check_order(index)?;
        let (c1, r1) = stencil(index.d1)?;
        let (c2, r2) = stencil(index.d2)?;
        let g = &self.grid;
        let mut s = Dot2::default();
        for (p, cp) in c1.iter().enumerate() {
            for (q, cq) in c2.iter().enumerate() {
                let a = i as isize + p as isize - r1 as isize;
                let b = j as isize + q as isize - r2 as isize;
                s.add(cp * cq, self.at(a, b));
            }
        }
        Ok(s.value() / (g.dz1().powi(index.d1 as i32) * g.dz2().powi(index.d2 as i32)))
    }
}

/// Fourth-degree polynomial extrapolation one node beyond `f0`, from the
/// samples `f0..f4` marching away from the boundary.
#[inline]
fn extrapolate4(f: [f64; 5]) -> f64 {
    5.0 * f[0] - 10.0 * f[1] + 10.0 * f[2] - 5.0 * f[3] + f[4]
}

#[inline]
fn extrapolate3(f: [f64; 4]) -> f64 {
    4.0 * f[0] - 6.0 * f[1] + 4.0 * f[2] - f[3]
}

/// Extends `w` by polynomial extrapolation, without any boundary-condition
/// information. Exact for polynomials of degree at most four in each
/// variable; used to measure boundary quantities of a computed solution.
pub fn extend_extrapolated(grid: &Grid, w: &Field) -> Result<ExtendedField> {
    w.check_grid(grid)?;
    let mut e = ExtendedField::from_interior(grid, w);
    let (n1, n2) = (grid.n1() as isize, grid.n2() as isize);
    for i in 0..n1 {
        for (start, dir) in [(0isize, 1isize), (n2 - 1, -1)] {
            for layer in 1..=GHOST as isize {
                let base = start - dir * (layer - 1);
                let f = [0, 1, 2, 3, 4].map(|s| e.at(i, base + dir * s));
                e.put(i, start - dir * layer, extrapolate4(f));
            }
        }
    }
    for j in -(GHOST as isize)..n2 + GHOST as isize {
        for (start, dir) in [(0isize, 1isize), (n1 - 1, -1)] {
            for layer in 1..=GHOST as isize {
                let base = start - dir * (layer - 1);
                let f = [0, 1, 2, 3, 4].map(|s| e.at(base + dir * s, j));
                e.put(start - dir * layer, j, extrapolate4(f));
            }
        }
    }
    Ok(e)
}

/// Extends `w` with ghost layers chosen so the discrete boundary relations
/// hold at the edge nodes:
///
/// * clamped: edge row forced to zero, even reflection (zero slope);
/// * simply supported: edge row forced to zero, odd reflection;
/// * free / actuated: first layer from `M = 0`, second layer from the
///   shear relation with the applied load (zero on free edges).
///
/// `loads` gives the shear force density in the +w direction on actuated
/// edges. Ghosts in the diagonal corner regions average the two edge-wise
/// extrapolations.
pub fn extend_with_bc(
    grid: &Grid,
    w: &Field,
    bc: &BoundaryConditions,
    loads: &EdgeLoads,
    params: &PlateParams,
) -> Result<ExtendedField> {
    w.check_grid(grid)?;
    loads.validate(grid, bc)?;
    let nu = params.nu;
    let mut e = ExtendedField::from_interior(grid, w);

    for edge in Edge::ALL {
        if bc.get(edge).is_dirichlet() {
            for t in 0..grid.edge_len(edge) as isize {
                e.put_edge(edge, t, 0, 0.0);
            }
        }
    }

    // First ghost layer.
    for edge in Edge::ALL {
        let nt = grid.edge_len(edge) as isize;
        let hn = grid.normal_spacing(edge);
        let ht = grid.tangential_spacing(edge);
        let (first, last) = edge.neighbours();
        for t in 0..nt {
            let w0 = e.at_edge(edge, t, 0);
            let w1 = e.at_edge(edge, t, 1);
            let g = match bc.get(edge) {
                EdgeCondition::Clamped => w1,
                EdgeCondition::SimplySupported => -w1,
                EdgeCondition::Free | EdgeCondition::Actuated => {
                    let end = if t == 0 {
                        Some(first)
                    } else if t == nt - 1 {
                        Some(last)
                    } else {
                        None
                    };
                    match end {
                        // The constrained line continues past the corner.
                        Some(other) if bc.get(other).is_dirichlet() => 0.0,
                        // Both bending moments vanish at a free corner.
                        Some(_) => 2.0 * w0 - w1,
                        None => {
                            let wtt = (e.at_edge(edge, t - 1, 0) - 2.0 * w0
                                + e.at_edge(edge, t + 1, 0))
                                / (ht * ht);
                            2.0 * w0 - w1 - nu * hn * hn * wtt
                        }
                    }
                }
            };
            e.put_edge(edge, t, -1, g);
        }
    }

    fill_corners(&mut e, bc, &[(1, 1)]);

    // Second ghost layer.
    for edge in Edge::ALL {
        let nt = grid.edge_len(edge) as isize;
        let hn = grid.normal_spacing(edge);
        let ht = grid.tangential_spacing(edge);
        let (first, last) = edge.neighbours();
        for t in 0..nt {
            let g = match bc.get(edge) {
                EdgeCondition::Clamped => e.at_edge(edge, t, 2),
                EdgeCondition::SimplySupported => -e.at_edge(edge, t, 2),
                EdgeCondition::Free | EdgeCondition::Actuated => {
                    let other = if t == 0 {
                        Some(first)
                    } else if t == nt - 1 {
                        Some(last)
                    } else {
                        None
                    };
                    if other.is_some_and(|o| bc.get(o).is_dirichlet()) {
                        0.0
                    } else {
                        let force = loads.at(edge, t as usize);
                        let wn = |s: isize| {
                            (e.at_edge(edge, s, 1) - e.at_edge(edge, s, -1)) / (2.0 * hn)
                        };
                        let wntt = (wn(t - 1) - 2.0 * wn(t) + wn(t + 1)) / (ht * ht);
                        let wnnn = force / params.d_e - (2.0 - nu) * wntt;
                        e.at_edge(edge, t, 2) - 2.0 * e.at_edge(edge, t, 1)
                            + 2.0 * e.at_edge(edge, t, -1)
                            - 2.0 * hn.powi(3) * wnnn
                    }
                }
            };
            e.put_edge(edge, t, -2, g);
        }
    }

    fill_corners(&mut e, bc, &[(1, 2), (2, 1), (2, 2)]);
    Ok(e)
}

/// Fills diagonal ghost nodes `(−a, −b)` (relative to each corner) by
/// averaging the extrapolation across each of the two meeting edges.
fn fill_corners(e: &mut ExtendedField, bc: &BoundaryConditions, depths: &[(isize, isize)]) {
    let g = e.grid;
    let (l1, l2) = (g.n1() as isize - 1, g.n2() as isize - 1);
    // (edge normal to z¹, edge normal to z², corner i, corner j, inward di, inward dj)
    let corners = [
        (Edge::Left, Edge::Bottom, 0, 0, 1, 1),
        (Edge::Right, Edge::Bottom, l1, 0, -1, 1),
        (Edge::Left, Edge::Top, 0, l2, 1, -1),
        (Edge::Right, Edge::Top, l1, l2, -1, -1),
    ];
    for &(a, b) in depths {
        for &(ex, ey, ci, cj, di, dj) in &corners {
            let gi = ci - di * a;
            let gj = cj - dj * b;
            // Across the z¹-normal edge, along the ghost row gj.
            let across_x = match bc.get(ex) {
                EdgeCondition::Clamped => e.at(ci + di * a, gj),
                EdgeCondition::SimplySupported => -e.at(ci + di * a, gj),
                _ => {
                    let start = gi + di;
                    extrapolate3([0, 1, 2, 3].map(|s| e.at(start + di * s, gj)))
                }
            };
            // Across the z²-normal edge, along the ghost column gi.
            let across_y = match bc.get(ey) {
                EdgeCondition::Clamped => e.at(gi, cj + dj * b),
                EdgeCondition::SimplySupported => -e.at(gi, cj + dj * b),
                _ => {
                    let start = gj + dj;
                    extrapolate3([0, 1, 2, 3].map(|s| e.at(gi, start + dj * s)))
                }
            };
            e.put(gi, gj, 0.5 * (across_x + across_y));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> Grid {
        Grid::new(n, n, 1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(
            Grid::new(8, 20, 1.0, 1.0),
            Err(Error::InvalidParameter { name: "N1", .. })
        ));
        assert!(Grid::new(9, 9, 1.0, 1.0).is_ok());
    }

    #[test]
    fn plate_params_ranges() {
        assert!(PlateParams::new(1.0, 1.0, 0.7, 1.0, 1.0).is_err());
        assert!(PlateParams::new(0.0, 1.0, 0.2, 1.0, 1.0).is_err());
        assert!(PlateParams::new(1.0, 1.0, 0.0, 1.0, 1.0).is_ok());
    }

    #[test]
    fn quartic_fourth_derivative_is_exact() {
        let g = unit(21);
        let f = Field::from_fn(&g, |x, _| x.powi(4));
        let d = g.partial_interior(&f, MultiIndex::new(4, 0)).unwrap();
        for v in d.values.iter() {
            assert_relative_eq!(*v, 24.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn first_and_mixed_derivatives() {
        let g = Grid::new(13, 17, 1.0, 2.0).unwrap();
        let f = Field::from_fn(&g, |_, y| y);
        let d = g.partial_interior(&f, MultiIndex::new(0, 1)).unwrap();
        assert!(d.values.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let f = Field::from_fn(&g, |x, y| x * x * y * y);
        let d = g.partial_interior(&f, MultiIndex::new(2, 2)).unwrap();
        assert_eq!(d.offset, (1, 1));
        assert!(d.values.iter().all(|v| (v - 4.0).abs() < 1e-9));
    }

    #[test]
    fn unsupported_order() {
        let g = unit(11);
        let f = Field::zeros(&g);
        assert_eq!(
            g.partial_interior(&f, MultiIndex::new(5, 0)).unwrap_err(),
            Error::UnsupportedOrder { order: 5 }
        );
        let e = extend_extrapolated(&g, &f).unwrap();
        assert!(matches!(
            e.partial(MultiIndex::new(3, 2)),
            Err(Error::UnsupportedOrder { order: 5 })
        ));
    }

    #[test]
    fn stencil_larger_than_field() {
        let g = unit(11);
        let f = Field::from_array(Array2::zeros((3, 11))).unwrap();
        assert!(matches!(
            g.partial_interior(&f, MultiIndex::new(4, 0)),
            Err(Error::GridSize { .. })
        ));
    }

    #[test]
    fn quadrature() {
        let g = unit(9);
        assert_relative_eq!(g.integrate_domain(&Field::constant(&g, 1.0)), 1.0);
        assert_eq!(g.integrate_domain(&Field::zeros(&g)), 0.0);
        assert_relative_eq!(
            g.integrate_domain(&Field::from_fn(&g, |x, y| x * y)),
            0.25,
            epsilon = 1e-15
        );
        let e = EdgeProfile::from_fn(&g, Edge::Bottom, |_| 1.0);
        assert_relative_eq!(g.integrate_edge(&e), 1.0);
        let e = EdgeProfile::from_fn(&g, Edge::Bottom, |s| s);
        assert_relative_eq!(g.integrate_edge(&e), 0.5, epsilon = 1e-15);
        assert_eq!(g.integrate_edge(&EdgeProfile::zeros(&g, Edge::Left)), 0.0);
    }

    #[test]
    fn duplicate_edge_is_config_error() {
        let r = BoundaryConditions::new(&[
            (Edge::Left, EdgeCondition::Clamped),
            (Edge::Left, EdgeCondition::Free),
            (Edge::Right, EdgeCondition::Free),
            (Edge::Top, EdgeCondition::Free),
            (Edge::Bottom, EdgeCondition::Free),
        ]);
        assert!(matches!(r, Err(Error::Config(_))));
        let r = BoundaryConditions::new(&[(Edge::Left, EdgeCondition::Clamped)]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn zero_field_has_zero_ghosts() {
        let g = unit(11);
        let e = extend_with_bc(
            &g,
            &Field::zeros(&g),
            &BoundaryConditions::plate(),
            &EdgeLoads::none()
                .with(EdgeProfile::zeros(&g, Edge::Bottom))
                .with(EdgeProfile::zeros(&g, Edge::Top)),
            &PlateParams::default(),
        )
        .unwrap();
        assert!(e.raw().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn clamped_edge_reflects() {
        let g = unit(11);
        let w = Field::from_fn(&g, |x, y| 0.3 + x + y * y);
        let e = extend_with_bc(
            &g,
            &w,
            &BoundaryConditions::plate(),
            &EdgeLoads::none(),
            &PlateParams::default(),
        )
        .unwrap();
        for j in 0..11 {
            assert_eq!(e.at(0, j), 0.0);
            assert_eq!(e.at(-1, j), e.at(1, j));
            assert_eq!(e.at(-2, j), e.at(2, j));
        }
        assert_eq!(e.interior().get(5, 5), w.get(5, 5));
    }

    #[test]
    fn loads_on_free_edge_rejected() {
        let g = unit(11);
        let r = extend_with_bc(
            &g,
            &Field::zeros(&g),
            &BoundaryConditions::plate(),
            &EdgeLoads::none().with(EdgeProfile::zeros(&g, Edge::Right)),
            &PlateParams::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn extrapolation_exact_on_quartics() {
        let g = Grid::new(11, 13, 1.0, 1.5).unwrap();
        let f = |x: f64, y: f64| x.powi(4) - 2.0 * x * y.powi(3) + y.powi(2) + 0.5;
        let e = extend_extrapolated(&g, &Field::from_fn(&g, f)).unwrap();
        for i in -2..13 {
            for j in -2..15 {
                let x = i as f64 * g.dz1();
                let y = j as f64 * g.dz2();
                assert_relative_eq!(e.at(i, j), f(x, y), epsilon = 1e-9);
            }
        }
    }
}
