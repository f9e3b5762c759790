//! Finite element spaces and matrix assembly: lowest-order Raviart–Thomas
//! fluxes, piecewise constants, and conforming P1 (scalar and vector).
//!
//! All coefficients are piecewise constant, so every integrand is a
//! polynomial on each cell and every rule below is exact.

use thiserror::Error;

use crate::mesh::{FacetLabel, Mesh, Point2};
use crate::sparse::{SparseMatrix, TripletBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssembleError {
    #[error("no boundary facet carries the label '{0}'")]
    LabelAbsent(FacetLabel),
    #[error("no degrees of freedom remain after eliminating Dirichlet vertices")]
    EmptyDofSet,
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
}

/// Symmetric 2×2 matrix stored as `[[a, b], [b, c]]`.
pub type Sym2 = [[f64; 2]; 2];

fn sym2_eigs(m: &Sym2) -> (f64, f64) {
    let (a, b, c) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    (mean - rad, mean + rad)
}

fn sym2_inv(m: &Sym2) -> Sym2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

fn apply(m: &Sym2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Piecewise-constant diffusion `A` and reaction `γ`, one value per cell,
/// with global lower bounds `a0 <= λ_min(A)` and `gamma0 <= γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    a: Vec<Sym2>,
    a_inv: Vec<Sym2>,
    gamma: Vec<f64>,
    a0: f64,
    gamma0: f64,
}

impl CoefficientField {
    /// Builds the field and takes the sharpest admissible `a0` and `gamma0`.
    pub fn new(a: Vec<Sym2>, gamma: Vec<f64>) -> Result<Self, AssembleError> {
        if a.len() != gamma.len() {
            return Err(AssembleError::Length {
                expected: a.len(),
                got: gamma.len(),
            });
        }
        let mut a0 = f64::INFINITY;
        for (t, m) in a.iter().enumerate() {
            if m[0][1] != m[1][0] || !m.iter().flatten().all(|v| v.is_finite()) {
                return Err(AssembleError::InvalidCoefficient(format!(
                    "A on cell {t} is not a finite symmetric matrix"
                )));
            }
            let (lo, _) = sym2_eigs(m);
            if !(lo > 0.0) {
                return Err(AssembleError::InvalidCoefficient(format!(
                    "A on cell {t} is not positive definite"
                )));
            }
            a0 = a0.min(lo);
        }
        let mut gamma0 = f64::INFINITY;
        for (t, &g) in gamma.iter().enumerate() {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(AssembleError::InvalidCoefficient(format!(
                    "gamma on cell {t} is negative or not finite"
                )));
            }
            gamma0 = gamma0.min(g);
        }
        if a.is_empty() {
            a0 = 1.0;
            gamma0 = 0.0;
        }
        let a_inv = a.iter().map(sym2_inv).collect();
        Ok(Self {
            a,
            a_inv,
            gamma,
            a0,
            gamma0,
        })
    }

    /// `A = I`, `γ = 0`.
    pub fn identity(m: &Mesh) -> Self {
        let n = m.num_cells();
        Self::new(vec![[[1.0, 0.0], [0.0, 1.0]]; n], vec![0.0; n]).expect("identity is valid")
    }

    /// Scalar `A = alpha I` and constant `γ`.
    pub fn constant(m: &Mesh, alpha: f64, gamma: f64) -> Result<Self, AssembleError> {
        let n = m.num_cells();
        Self::new(vec![[[alpha, 0.0], [0.0, alpha]]; n], vec![gamma; n])
    }

    /// Coefficients of the square test problem, read from region tags:
    /// `A = (2 + sign(x1 x2)) I` and `γ = 4 + 1{|x2| > 1/2}`. The tag is
    /// `3 * quadrant + strip` with quadrants counted counterclockwise from
    /// `x1, x2 > 0` and strips numbered top to bottom.
    pub fn square_fig3(m: &Mesh) -> Result<Self, AssembleError> {
        let mut a = Vec::with_capacity(m.num_cells());
        let mut gamma = Vec::with_capacity(m.num_cells());
        for c in m.cells() {
            let (quadrant, strip) = (c.region / 3, c.region % 3);
            if quadrant > 3 {
                return Err(AssembleError::InvalidCoefficient(format!(
                    "region tag {} is not a square_fig3 tag",
                    c.region
                )));
            }
            let alpha = if quadrant % 2 == 0 { 3.0 } else { 1.0 };
            a.push([[alpha, 0.0], [0.0, alpha]]);
            gamma.push(if strip == 1 { 4.0 } else { 5.0 });
        }
        Self::new(a, gamma)
    }

    /// Replaces the global bounds with smaller admissible ones.
    pub fn with_bounds(mut self, a0: f64, gamma0: f64) -> Result<Self, AssembleError> {
        if !(a0 > 0.0) || a0 > self.a0 {
            return Err(AssembleError::InvalidCoefficient(format!(
                "a0 = {a0} must lie in (0, {}]",
                self.a0
            )));
        }
        if !(gamma0 >= 0.0) || gamma0 > self.gamma0 {
            return Err(AssembleError::InvalidCoefficient(format!(
                "gamma0 = {gamma0} must lie in [0, {}]",
                self.gamma0
            )));
        }
        self.a0 = a0;
        self.gamma0 = gamma0;
        Ok(self)
    }

    pub fn num_cells(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self, t: usize) -> &Sym2 {
        &self.a[t]
    }

    pub fn a_inv(&self, t: usize) -> &Sym2 {
        &self.a_inv[t]
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    fn check(&self, m: &Mesh) -> Result<(), AssembleError> {
        if self.a.len() != m.num_cells() {
            return Err(AssembleError::Length {
                expected: m.num_cells(),
                got: self.a.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Rt0,
    P0Cells,
    P0BoundaryFacets(FacetLabel),
    P1,
    P1Vector,
}

/// Entity-to-dof numbering. Entities are edges, cells, boundary facets or
/// vertices depending on the space; eliminated entities map to `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub kind: SpaceKind,
    pub num_dofs: usize,
    pub components: usize,
    entity_dof: Vec<Option<usize>>,
}

impl DofMap {
    pub fn rt0(m: &Mesh) -> Self {
        Self::identity_map(SpaceKind::Rt0, m.num_edges())
    }

    pub fn p0_cells(m: &Mesh) -> Self {
        Self::identity_map(SpaceKind::P0Cells, m.num_cells())
    }

    /// One dof per boundary facet with the label, numbered in facet order.
    pub fn p0_boundary_facets(m: &Mesh, label: FacetLabel) -> Self {
        let mut next = 0;
        let entity_dof = m
            .boundary()
            .iter()
            .map(|f| {
                (f.label == label).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self {
            kind: SpaceKind::P0BoundaryFacets(label),
            num_dofs: next,
            components: 1,
            entity_dof,
        }
    }

    /// Vertex dofs with every vertex on a Dirichlet facet removed.
    pub fn p1(m: &Mesh) -> Self {
        Self::vertex_map(m, SpaceKind::P1, 1)
    }

    /// Two dofs per free vertex, ordered `(x, y)` per vertex.
    pub fn p1_vector(m: &Mesh) -> Self {
        Self::vertex_map(m, SpaceKind::P1Vector, 2)
    }

    fn identity_map(kind: SpaceKind, n: usize) -> Self {
        Self {
            kind,
            num_dofs: n,
            components: 1,
            entity_dof: (0..n).map(Some).collect(),
        }
    }

    fn vertex_map(m: &Mesh, kind: SpaceKind, components: usize) -> Self {
        let mut fixed = vec![false; m.num_vertices()];
        for f in m.boundary() {
            if f.label == FacetLabel::Dirichlet {
                fixed[f.vertices[0]] = true;
                fixed[f.vertices[1]] = true;
            }
        }
        let mut next = 0;
        let entity_dof: Vec<Option<usize>> = fixed
            .iter()
            .map(|&fx| {
                (!fx).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        Self {
            kind,
            num_dofs: next * components,
            components,
            entity_dof,
        }
    }

    /// Dof of component `comp` on `entity`, if it is not eliminated.
    pub fn dof(&self, entity: usize, comp: usize) -> Option<usize> {
        self.entity_dof[entity].map(|d| d * self.components + comp)
    }

    pub fn num_entities(&self) -> usize {
        self.entity_dof.len()
    }
}

/// Values of the three global RT0 basis functions of cell `t` at `x`,
/// ordered by local edge (opposite local vertex `k`).
pub fn rt0_basis(m: &Mesh, t: usize, x: Point2) -> [[f64; 2]; 3] {
    let p = m.cell_points(t);
    let area = m.cell_area(t);
    let signs = m.cell_edge_signs(t);
    let edges = m.cell_edges(t);
    let mut out = [[0.0; 2]; 3];
    for k in 0..3 {
        let c = signs[k] * m.edge_length(edges[k]) / (2.0 * area);
        out[k] = [c * (x.x - p[k].x), c * (x.y - p[k].y)];
    }
    out
}

/// Element matrix `∫_T (A⁻¹ φ_i)·φ_j` with the edge-midpoint rule.
pub fn rt0_local_mass(m: &Mesh, c: &CoefficientField, t: usize) -> [[f64; 3]; 3] {
    let p = m.cell_points(t);
    let area = m.cell_area(t);
    let ainv = c.a_inv(t);
    let mut k = [[0.0; 3]; 3];
    for q in 0..3 {
        let x = p[(q + 1) % 3].midpoint(p[(q + 2) % 3]);
        let phi = rt0_basis(m, t, x);
        for i in 0..3 {
            let aphi = apply(ainv, phi[i]);
            for j in 0..3 {
                k[i][j] += area / 3.0 * (aphi[0] * phi[j][0] + aphi[1] * phi[j][1]);
            }
        }
    }
    k
}

/// `M_σ[e, f] = ∫ (A⁻¹ φ_e)·φ_f`, size `#edges`.
pub fn rt0_mass(m: &Mesh, c: &CoefficientField) -> Result<SparseMatrix, AssembleError> {
    c.check(m)?;
    let mut b = TripletBuilder::with_capacity(m.num_edges(), m.num_edges(), 9 * m.num_cells());
    for t in 0..m.num_cells() {
        let k = rt0_local_mass(m, c, t);
        let e = m.cell_edges(t);
        for i in 0..3 {
            for j in 0..3 {
                b.push(e[i], e[j], k[i][j]);
            }
        }
    }
    Ok(b.build_symmetric())
}

/// `B[T, e] = ∫_T div φ_e = ±|e|`, size `#cells × #edges`.
pub fn div_matrix(m: &Mesh) -> SparseMatrix {
    let mut b = TripletBuilder::with_capacity(m.num_cells(), m.num_edges(), 3 * m.num_cells());
    for t in 0..m.num_cells() {
        let e = m.cell_edges(t);
        let s = m.cell_edge_signs(t);
        for k in 0..3 {
            b.push(t, e[k], s[k] * m.edge_length(e[k]));
        }
    }
    b.build()
}

/// Diagonal matrix with entries `weight(T) |T|`.
pub fn p0_mass(m: &Mesh, weight: &[f64]) -> Result<SparseMatrix, AssembleError> {
    if weight.len() != m.num_cells() {
        return Err(AssembleError::Length {
            expected: m.num_cells(),
            got: weight.len(),
        });
    }
    let d: Vec<f64> = (0..m.num_cells())
        .map(|t| weight[t] * m.cell_area(t))
        .collect();
    Ok(SparseMatrix::from_diagonal(&d))
}

/// `N[F, e] = ∫_F φ_e·n`: `±|F|` on the edge under facet `F`, with the sign
/// taken against the outward normal. Rows follow
/// [`DofMap::p0_boundary_facets`].
pub fn boundary_trace_matrix(m: &Mesh, label: FacetLabel) -> Result<SparseMatrix, AssembleError> {
    let facets = m.facets_with_label(label);
    if facets.is_empty() {
        return Err(AssembleError::LabelAbsent(label));
    }
    let mut b = TripletBuilder::new(facets.len(), m.num_edges());
    for (row, &f) in facets.iter().enumerate() {
        let e = m.facet_edge(f);
        let t = m.facet_cell(f);
        let k = m
            .cell_edges(t)
            .iter()
            .position(|&x| x == e)
            .expect("facet edge belongs to its cell");
        b.push(row, e, m.cell_edge_signs(t)[k] * m.edge_length(e));
    }
    Ok(b.build())
}

/// Degrees of freedom of the RT0 interpolant: the mean normal flux of
/// `field` across each edge, by 3-point Gauss quadrature along the edge.
pub fn rt0_interpolate(m: &Mesh, field: impl Fn(Point2) -> [f64; 2]) -> Vec<f64> {
    let (gx, gw) = crate::quadrature::gauss_legendre(3);
    m.edges()
        .iter()
        .map(|&[a, b]| {
            let (pa, pb) = (m.points()[a], m.points()[b]);
            let len = pa.dist(pb);
            // clockwise rotation of the unit tangent
            let n = [(pb.y - pa.y) / len, -(pb.x - pa.x) / len];
            gx.iter()
                .zip(&gw)
                .map(|(&s, &w)| {
                    let x = Point2::new(pa.x + s * (pb.x - pa.x), pa.y + s * (pb.y - pa.y));
                    let f = field(x);
                    w * (f[0] * n[0] + f[1] * n[1])
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum P1Kind {
    /// `∫ A∇u·∇v`
    Stiffness,
    /// `∫ A∇u·∇v + γuv`
    StiffnessWithReaction,
    /// `∫ uv`
    Mass,
    /// `∫ uv` over Steklov facets
    BoundaryMass,
    /// `∫ Cε(u):ε(v)` with `C(E) = 2μE + κ tr(E) I`
    ElasticStiffness { mu: f64, kappa: f64 },
    /// `∫ u·v` for vector fields
    VectorMass,
}

impl P1Kind {
    fn is_vector(self) -> bool {
        matches!(self, P1Kind::ElasticStiffness { .. } | P1Kind::VectorMass)
    }
}

/// Gradients of the barycentric coordinates of a triangle.
pub fn barycentric_gradients(p: [Point2; 3], area: f64) -> [[f64; 2]; 3] {
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let a = p[(i + 1) % 3];
        let b = p[(i + 2) % 3];
        g[i] = [(a.y - b.y) / (2.0 * area), (b.x - a.x) / (2.0 * area)];
    }
    g
}

/// Element matrix of a P1 form on cell `t`. Scalar kinds give 3×3 blocks,
/// vector kinds 6×6 blocks ordered `(vertex, component)`.
pub fn p1_local(m: &Mesh, c: &CoefficientField, t: usize, kind: P1Kind) -> Vec<Vec<f64>> {
    let p = m.cell_points(t);
    let area = m.cell_area(t);
    let g = barycentric_gradients(p, area);
    let mass = |i: usize, j: usize| area / 12.0 * if i == j { 2.0 } else { 1.0 };
    match kind {
        P1Kind::Stiffness | P1Kind::StiffnessWithReaction => {
            let a = c.a(t);
            let gamma = if kind == P1Kind::StiffnessWithReaction {
                c.gamma()[t]
            } else {
                0.0
            };
            (0..3)
                .map(|i| {
                    (0..3)
                        .map(|j| {
                            let ag = apply(a, g[j]);
                            area * (g[i][0] * ag[0] + g[i][1] * ag[1]) + gamma * mass(i, j)
                        })
                        .collect()
                })
                .collect()
        }
        P1Kind::Mass => (0..3)
            .map(|i| (0..3).map(|j| mass(i, j)).collect())
            .collect(),
        P1Kind::BoundaryMass => vec![vec![0.0; 3]; 3],
        P1Kind::VectorMass => {
            let mut k = vec![vec![0.0; 6]; 6];
            for i in 0..3 {
                for j in 0..3 {
                    for d in 0..2 {
                        k[2 * i + d][2 * j + d] = mass(i, j);
                    }
                }
            }
            k
        }
        P1Kind::ElasticStiffness { mu, kappa } => {
            // engineering strain (ε11, ε22, 2ε12) of each basis field
            let mut strain = [[0.0; 3]; 6];
            for i in 0..3 {
                strain[2 * i] = [g[i][0], 0.0, g[i][1]];
                strain[2 * i + 1] = [0.0, g[i][1], g[i][0]];
            }
            let d = [
                [2.0 * mu + kappa, kappa, 0.0],
                [kappa, 2.0 * mu + kappa, 0.0],
                [0.0, 0.0, mu],
            ];
            let mut k = vec![vec![0.0; 6]; 6];
            for a in 0..6 {
                for b in 0..6 {
                    let mut s = 0.0;
                    for r in 0..3 {
                        for q in 0..3 {
                            s += strain[a][r] * d[r][q] * strain[b][q];
                        }
                    }
                    k[a][b] = area * s;
                }
            }
            k
        }
    }
}

/// Assembles a conforming P1 form on the dofs of [`DofMap::p1`] (scalar
/// kinds) or [`DofMap::p1_vector`] (vector kinds). Dirichlet vertices are
/// eliminated for every kind so that the matrices of one problem share a
/// numbering.
pub fn p1_operator(
    m: &Mesh,
    c: &CoefficientField,
    kind: P1Kind,
) -> Result<(SparseMatrix, DofMap), AssembleError> {
    c.check(m)?;
    let map = if kind.is_vector() {
        DofMap::p1_vector(m)
    } else {
        DofMap::p1(m)
    };
    if map.num_dofs == 0 {
        return Err(AssembleError::EmptyDofSet);
    }
    let n = map.num_dofs;
    let mut b = TripletBuilder::new(n, n);
    if kind == P1Kind::BoundaryMass {
        let facets = m.facets_with_label(FacetLabel::Steklov);
        if facets.is_empty() {
            return Err(AssembleError::LabelAbsent(FacetLabel::Steklov));
        }
        for f in facets {
            let v = m.boundary()[f].vertices;
            let len = m.points()[v[0]].dist(m.points()[v[1]]);
            for i in 0..2 {
                for j in 0..2 {
                    if let (Some(di), Some(dj)) = (map.dof(v[i], 0), map.dof(v[j], 0)) {
                        b.push(di, dj, len / 6.0 * if i == j { 2.0 } else { 1.0 });
                    }
                }
            }
        }
        return Ok((b.build_symmetric(), map));
    }
    let comps = map.components;
    for t in 0..m.num_cells() {
        let k = p1_local(m, c, t, kind);
        let v = m.cells()[t].vertices;
        let local_dof = |a: usize| map.dof(v[a / comps], a % comps);
        for a in 0..3 * comps {
            let Some(da) = local_dof(a) else { continue };
            for bb in 0..3 * comps {
                if let Some(db) = local_dof(bb) {
                    b.push(da, db, k[a][bb]);
                }
            }
        }
    }
    Ok((b.build_symmetric(), map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::parse_mesh;

    fn unit_square(label: &str) -> Mesh {
        parse_mesh(&format!(
            "vertices 4\n0 0\n1 0\n1 1\n0 1\ncells 2\n0 1 2 0\n0 2 3 0\nboundary 4\n\
             0 1 {label}\n1 2 {label}\n2 3 {label}\n3 0 {label}\n"
        ))
        .unwrap()
    }

    #[test]
    fn basis_has_unit_normal_flux() {
        let m = unit_square("dirichlet");
        for t in 0..2 {
            let p = m.cell_points(t);
            let edges = m.cell_edges(t);
            for k in 0..3 {
                let (a, b) = (p[(k + 1) % 3], p[(k + 2) % 3]);
                let [lo, hi] = m.edges()[edges[k]];
                let (pl, ph) = (m.points()[lo], m.points()[hi]);
                let len = pl.dist(ph);
                let n = [(ph.y - pl.y) / len, -(ph.x - pl.x) / len];
                let phi = rt0_basis(&m, t, a.midpoint(b));
                let flux = phi[k][0] * n[0] + phi[k][1] * n[1];
                assert!((flux - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn div_rows_and_interior_column() {
        let m = unit_square("dirichlet");
        let b = div_matrix(&m);
        for t in 0..2 {
            let s: f64 = b.row(t).map(|(_, v)| v.abs()).sum();
            assert!((s - (2.0 + 2f64.sqrt())).abs() < 1e-14);
        }
        let diag = m.edges().iter().position(|&e| e == [0, 2]).unwrap();
        let col: Vec<f64> = (0..2).map(|t| b.get(t, diag)).collect();
        assert!(col[0] * col[1] < 0.0);
    }

    #[test]
    fn interpolant_of_constant_field_is_divergence_free() {
        let m = unit_square("dirichlet");
        let tau = rt0_interpolate(&m, |_| [0.3, -1.7]);
        let div = div_matrix(&m).mul_vec(&tau);
        assert!(div.iter().all(|d| d.abs() < 1e-14));
    }

    #[test]
    fn trace_of_radial_field() {
        let m = unit_square("steklov");
        let n = boundary_trace_matrix(&m, FacetLabel::Steklov).unwrap();
        assert_eq!(n.nnz(), 4);
        assert!(n.values().iter().all(|v| (v.abs() - 1.0).abs() < 1e-15));
        // (x - 1/2, y - 1/2)/2 has outward flux 1/4 across each unit side
        let tau = rt0_interpolate(&m, |p| [(p.x - 0.5) / 2.0, (p.y - 0.5) / 2.0]);
        let flux = n.mul_vec(&tau);
        assert!(flux.iter().all(|f| (f - 0.25).abs() < 1e-14), "{flux:?}");
        assert_eq!(
            boundary_trace_matrix(&m, FacetLabel::Neumann),
            Err(AssembleError::LabelAbsent(FacetLabel::Neumann))
        );
    }

    #[test]
    fn square_coefficients() {
        let m = crate::mesh::builtin_mesh(crate::mesh::BuiltinMesh::SquareFig3);
        let c = CoefficientField::square_fig3(&m).unwrap();
        assert_eq!(c.a0(), 1.0);
        assert_eq!(c.gamma0(), 4.0);
        for t in 0..m.num_cells() {
            let [a, b, d] = m.cell_points(t);
            let cx = (a.x + b.x + d.x) / 3.0;
            let cy = (a.y + b.y + d.y) / 3.0;
            let alpha = 2.0 + (cx * cy).signum();
            assert_eq!(c.a(t)[0][0], alpha);
            let g = if cy.abs() > 0.5 { 5.0 } else { 4.0 };
            assert_eq!(c.gamma()[t], g);
        }
    }

    #[test]
    fn coefficient_validation() {
        assert!(CoefficientField::new(vec![[[1.0, 2.0], [2.0, 1.0]]], vec![0.0]).is_err());
        assert!(CoefficientField::new(vec![[[1.0, 0.0], [0.0, 1.0]]], vec![-1.0]).is_err());
        let c = CoefficientField::new(vec![[[2.0, 0.0], [0.0, 3.0]]], vec![1.0]).unwrap();
        assert!(c.clone().with_bounds(2.5, 0.0).is_err());
        assert!(c.with_bounds(1.5, 0.5).is_ok());
    }
}
