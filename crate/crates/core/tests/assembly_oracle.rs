//! Assembly checked against a slow dense reassembly that derives edge
//! orientations from geometry and integrates with closed-form formulas.

use eigbound::assemble::*;
use eigbound::mesh::*;
use eigbound::sparse::{Cholesky, SparseMatrix};
use nalgebra::DMatrix;

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn edge_index(m: &Mesh, a: usize, b: usize) -> usize {
    let key = [a.min(b), a.max(b)];
    m.edges().iter().position(|&e| e == key).unwrap()
}

/// `+1` if the global normal of edge `(a,b)` points away from the cell.
fn geometric_sign(m: &Mesh, t: usize, a: usize, b: usize) -> f64 {
    let [lo, hi] = [a.min(b), a.max(b)];
    let (pl, ph) = (m.points()[lo], m.points()[hi]);
    let n = [ph.y - pl.y, -(ph.x - pl.x)];
    let p = m.cell_points(t);
    let cx = (p[0].x + p[1].x + p[2].x) / 3.0;
    let cy = (p[0].y + p[1].y + p[2].y) / 3.0;
    let mid = pl.midpoint(ph);
    ((mid.x - cx) * n[0] + (mid.y - cy) * n[1]).signum()
}

/// `∫_T f g` for linear `f`, `g` given by vertex values.
fn p1_product(area: f64, f: [f64; 3], g: [f64; 3]) -> f64 {
    let diag: f64 = (0..3).map(|i| f[i] * g[i]).sum();
    let sf: f64 = f.iter().sum();
    let sg: f64 = g.iter().sum();
    area / 12.0 * (diag + sf * sg)
}

fn oracle_rt0_mass(m: &Mesh, c: &CoefficientField) -> (DMatrix<f64>, DMatrix<f64>) {
    let ne = m.num_edges();
    let mut mass = DMatrix::zeros(ne, ne);
    let mut div = DMatrix::zeros(m.num_cells(), ne);
    for t in 0..m.num_cells() {
        let v = m.cells()[t].vertices;
        let p = m.cell_points(t);
        let area = 0.5
            * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x)).abs();
        // basis k is opposite vertex k; component values at the three vertices
        let mut comps = Vec::new();
        let mut ids = Vec::new();
        for k in 0..3 {
            let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
            let e = edge_index(m, a, b);
            let s = geometric_sign(m, t, a, b);
            let len = m.points()[a].dist(m.points()[b]);
            let scale = s * len / (2.0 * area);
            let fx = [0, 1, 2].map(|i| scale * (p[i].x - p[k].x));
            let fy = [0, 1, 2].map(|i| scale * (p[i].y - p[k].y));
            comps.push((fx, fy));
            ids.push(e);
            div[(t, e)] += s * len;
        }
        let ai = c.a_inv(t);
        for i in 0..3 {
            let (fx, fy) = comps[i];
            let ax = [0, 1, 2].map(|q| ai[0][0] * fx[q] + ai[0][1] * fy[q]);
            let ay = [0, 1, 2].map(|q| ai[1][0] * fx[q] + ai[1][1] * fy[q]);
            for j in 0..3 {
                let (gx, gy) = comps[j];
                mass[(ids[i], ids[j])] += p1_product(area, ax, gx) + p1_product(area, ay, gy);
            }
        }
    }
    (mass, div)
}

/// Scalar `A = αI` stiffness from the cotangent formula plus `γ` mass.
fn oracle_p1(m: &Mesh, c: &CoefficientField, with_gamma: bool) -> DMatrix<f64> {
    let nv = m.num_vertices();
    let mut k = DMatrix::zeros(nv, nv);
    for t in 0..m.num_cells() {
        let v = m.cells()[t].vertices;
        let p = m.cell_points(t);
        let area = m.cell_area(t);
        let alpha = c.a(t)[0][0];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let o = (i + 2) % 3;
            let (u, w) = (
                [p[i].x - p[o].x, p[i].y - p[o].y],
                [p[j].x - p[o].x, p[j].y - p[o].y],
            );
            let cot = (u[0] * w[0] + u[1] * w[1]) / (u[0] * w[1] - u[1] * w[0]).abs();
            let val = -0.5 * alpha * cot;
            k[(v[i], v[j])] += val;
            k[(v[j], v[i])] += val;
            k[(v[i], v[i])] -= val;
            k[(v[j], v[j])] -= val;
        }
        if with_gamma {
            for i in 0..3 {
                for j in 0..3 {
                    k[(v[i], v[j])] += c.gamma()[t] * area / 12.0 * if i == j { 2.0 } else { 1.0 };
                }
            }
        }
    }
    k
}

fn restrict(full: &DMatrix<f64>, map: &DofMap) -> DMatrix<f64> {
    let free: Vec<usize> = (0..map.num_entities())
        .filter(|&v| map.dof(v, 0).is_some())
        .collect();
    DMatrix::from_fn(free.len(), free.len(), |i, j| full[(free[i], free[j])])
}

fn small_meshes() -> Vec<(Mesh, CoefficientField)> {
    let l = builtin_mesh(BuiltinMesh::LshapeFig1);
    let s = builtin_mesh(BuiltinMesh::SquareFig3);
    let c = builtin_mesh(BuiltinMesh::CookFig4);
    vec![
        (l.clone(), CoefficientField::identity(&l)),
        (s.clone(), CoefficientField::square_fig3(&s).unwrap()),
        (c.clone(), CoefficientField::identity(&c)),
    ]
}

#[test]
fn reference_triangle_rt0_mass_matches_exact_integrals() {
    let m = parse_mesh(
        "vertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2 0\nboundary 3\n0 1 dirichlet\n1 2 dirichlet\n2 0 dirichlet\n",
    )
    .unwrap();
    let k = rt0_local_mass(&m, &CoefficientField::identity(&m), 0);
    // exact values of ∫ ψ_i·ψ_j for the unsigned basis ψ_k = |e_k|/(2|T|)(x − p_k)
    let exact = [
        [1.0 / 3.0, 0.0, 0.0],
        [0.0, 1.0 / 3.0, -1.0 / 6.0],
        [0.0, -1.0 / 6.0, 1.0 / 3.0],
    ];
    let s = m.cell_edge_signs(0);
    for i in 0..3 {
        for j in 0..3 {
            assert!((k[i][j] - s[i] * s[j] * exact[i][j]).abs() < 1e-15);
        }
    }
}

#[test]
fn reference_triangle_p1_stiffness() {
    let m = parse_mesh(
        "vertices 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2 0\nboundary 3\n0 1 neumann\n1 2 neumann\n2 0 neumann\n",
    )
    .unwrap();
    let (k, _) = p1_operator(&m, &CoefficientField::identity(&m), P1Kind::Stiffness).unwrap();
    let exact = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    for i in 0..3 {
        for j in 0..3 {
            assert!((k.get(i, j) - exact[i][j]).abs() < 1e-15);
        }
    }
}

#[test]
fn rt0_and_div_match_dense_oracle() {
    for (m, c) in small_meshes() {
        assert!(m.num_cells() <= 50);
        let (mo, bo) = oracle_rt0_mass(&m, &c);
        let ms = rt0_mass(&m, &c).unwrap();
        assert_eq!(ms.symmetry_defect(), 0.0);
        assert!(rel_diff(&ms.to_dense(), &mo) < 1e-13);
        assert!(rel_diff(&div_matrix(&m).to_dense(), &bo) < 1e-13);
    }
}

#[test]
fn p1_matches_cotangent_oracle() {
    for (m, c) in small_meshes() {
        for (kind, with_gamma) in [
            (P1Kind::Stiffness, false),
            (P1Kind::StiffnessWithReaction, true),
        ] {
            let (k, map) = p1_operator(&m, &c, kind).unwrap();
            assert_eq!(k.symmetry_defect(), 0.0);
            let oracle = restrict(&oracle_p1(&m, &c, with_gamma), &map);
            assert!(rel_diff(&k.to_dense(), &oracle) < 1e-13);
            assert!(Cholesky::factor(&k).is_ok());
        }
    }
}

#[test]
fn rt0_mass_is_spd_and_scales_with_a() {
    let m = builtin_mesh(BuiltinMesh::LshapeFig1);
    let id = rt0_mass(&m, &CoefficientField::identity(&m)).unwrap();
    assert!(Cholesky::factor(&id).is_ok());
    let eig = id.to_dense().symmetric_eigen();
    assert!(eig.eigenvalues.min() > 0.0);
    let alpha = 3.5;
    let scaled = rt0_mass(&m, &CoefficientField::constant(&m, alpha, 0.0).unwrap()).unwrap();
    assert!(rel_diff(&scaled.to_dense(), &(id.to_dense() / alpha)) < 1e-14);
}

#[test]
fn p0_mass_examples() {
    let m = builtin_mesh(BuiltinMesh::LshapeFig1);
    let ones = p0_mass(&m, &vec![1.0; m.num_cells()]).unwrap();
    let trace: f64 = ones.diagonal().iter().sum();
    assert!((trace - 3.0).abs() < 1e-14);
    let zero = p0_mass(&m, &vec![0.0; m.num_cells()]).unwrap();
    assert!(zero.values().iter().all(|&v| v == 0.0));

    let s = builtin_mesh(BuiltinMesh::SquareFig3);
    let c = CoefficientField::square_fig3(&s).unwrap();
    let g = p0_mass(&s, c.gamma()).unwrap();
    for t in 0..s.num_cells() {
        let p = s.cell_points(t);
        let cy = (p[0].y + p[1].y + p[2].y) / 3.0;
        let weight = if cy.abs() > 0.5 { 5.0 } else { 4.0 };
        assert!((g.get(t, t) - weight * s.cell_area(t)).abs() < 1e-15);
    }
}

#[test]
fn divergence_theorem_for_constant_fields() {
    for b in BuiltinMesh::ALL {
        let m = refine_times(&builtin_mesh(b), 1).with_boundary_label(FacetLabel::Steklov);
        let n = boundary_trace_matrix(&m, FacetLabel::Steklov).unwrap();
        assert_eq!(n.nrows(), m.boundary().len());
        for field in [[1.0, 0.0], [0.0, 1.0], [-0.7, 2.3]] {
            let tau = rt0_interpolate(&m, |_| field);
            let volume: f64 = div_matrix(&m).mul_vec(&tau).iter().sum();
            let flux: f64 = n.mul_vec(&tau).iter().sum();
            let scale = m.max_diameter() * m.boundary().len() as f64;
            assert!(
                (volume - flux).abs() < 1e-12 * scale,
                "{}: {volume} vs {flux}",
                b.name()
            );
        }
    }
}

#[test]
fn interpolant_of_linear_field_has_constant_divergence() {
    // (x, y) lies in RT0 with divergence 2 on every cell
    let m = builtin_mesh(BuiltinMesh::SquareFig3);
    let tau = rt0_interpolate(&m, |p| [p.x, p.y]);
    let div = div_matrix(&m).mul_vec(&tau);
    for t in 0..m.num_cells() {
        assert!((div[t] / m.cell_area(t) - 2.0).abs() < 1e-13);
    }
}

#[test]
fn assembly_is_local_and_scales() {
    let m = builtin_mesh(BuiltinMesh::CookFig4);
    let s = 0.37;
    let ms = rt0_mass(&m, &CoefficientField::identity(&m)).unwrap();
    let scaled_mesh = m.scaled(s);
    let mss = rt0_mass(&scaled_mesh, &CoefficientField::identity(&scaled_mesh)).unwrap();
    assert!(rel_diff(&mss.to_dense(), &(ms.to_dense() * (s * s))) < 1e-13);
    // no coupling between edges that share no cell
    for (i, j, v) in ms.triplets() {
        if v != 0.0 {
            let ci = m.edge_cells(i);
            let cj = m.edge_cells(j);
            assert!(ci
                .iter()
                .flatten()
                .any(|t| cj.iter().flatten().any(|u| u == t)));
        }
    }
    // refining once then assembling equals the sum of child element matrices
    let r = refine_red(&m);
    let c = CoefficientField::identity(&r);
    let global = rt0_mass(&r, &c).unwrap().to_dense();
    let mut summed = DMatrix::zeros(r.num_edges(), r.num_edges());
    for t in 0..r.num_cells() {
        let k = rt0_local_mass(&r, &c, t);
        let e = r.cell_edges(t);
        for i in 0..3 {
            for j in 0..3 {
                summed[(e[i], e[j])] += k[i][j];
            }
        }
    }
    assert!(rel_diff(&global, &summed) < 1e-15);
}

#[test]
fn elastic_stiffness_annihilates_rigid_motions() {
    let m = builtin_mesh(BuiltinMesh::CookFig4).with_boundary_label(FacetLabel::Neumann);
    let c = CoefficientField::identity(&m);
    let (k, map) = p1_operator(
        &m,
        &c,
        P1Kind::ElasticStiffness {
            mu: 1.0,
            kappa: 100.0,
        },
    )
    .unwrap();
    assert_eq!(map.num_dofs, 2 * m.num_vertices());
    let scale = k.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for r in [
        |_: Point2| [1.0, 0.0],
        |_: Point2| [0.0, 1.0],
        |p: Point2| [-p.y / 60.0, p.x / 60.0],
    ] {
        let mut x = vec![0.0; map.num_dofs];
        for (v, &p) in m.points().iter().enumerate() {
            let u = r(p);
            x[map.dof(v, 0).unwrap()] = u[0];
            x[map.dof(v, 1).unwrap()] = u[1];
        }
        let kx = k.mul_vec(&x);
        assert!(kx.iter().all(|v| v.abs() < 1e-12 * scale));
    }
}

#[test]
fn p1_mass_partition_of_unity() {
    let m = parse_mesh(
        "vertices 4\n0 0\n1 0\n1 1\n0 1\ncells 2\n0 1 2 0\n0 2 3 0\nboundary 4\n0 1 neumann\n1 2 neumann\n2 3 neumann\n3 0 neumann\n",
    )
    .unwrap();
    let (mass, _) = p1_operator(&m, &CoefficientField::identity(&m), P1Kind::Mass).unwrap();
    let total: f64 = mass.values().iter().sum();
    assert!((total - 1.0).abs() < 1e-15);
    let dir = m.with_boundary_label(FacetLabel::Dirichlet);
    assert_eq!(
        p1_operator(&dir, &CoefficientField::identity(&dir), P1Kind::Mass).unwrap_err(),
        AssembleError::EmptyDofSet
    );
}

#[test]
fn boundary_mass_and_dump_round_trip() {
    let m = builtin_mesh(BuiltinMesh::LshapeFig1Steklov);
    let (bm, _) = p1_operator(&m, &CoefficientField::identity(&m), P1Kind::BoundaryMass).unwrap();
    let total: f64 = bm.values().iter().sum();
    assert!((total - 8.0).abs() < 1e-14, "perimeter of the L-shape is 8");
    let text = rt0_mass(&m, &CoefficientField::identity(&m))
        .unwrap()
        .to_coordinate_text();
    let back = SparseMatrix::read_coordinate_text(text.as_bytes()).unwrap();
    let orig = rt0_mass(&m, &CoefficientField::identity(&m)).unwrap();
    assert_eq!(back.to_dense(), orig.to_dense());
}
