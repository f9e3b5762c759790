use eigbound::mesh::*;
use proptest::prelude::*;

fn triangle_mesh(p: [(f64, f64); 3]) -> Option<Mesh> {
    let text = format!(
        "vertices 3\n{} {}\n{} {}\n{} {}\ncells 1\n0 1 2 0\nboundary 3\n0 1 dirichlet\n1 2 neumann\n2 0 steklov\n",
        p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1
    );
    parse_mesh(&text).ok()
}

fn point_on_segment(p: Point2, a: Point2, b: Point2) -> bool {
    let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let len = a.dist(b);
    let t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (len * len);
    cross.abs() <= 1e-12 * len * len && (-1e-12..=1.0 + 1e-12).contains(&t)
}

#[test]
fn builtin_meshes_are_valid_and_round_trip() {
    for b in BuiltinMesh::ALL {
        let m = builtin_mesh(b);
        for k in 0..2 {
            let r = refine_times(&m, k);
            let back = parse_mesh(&write_mesh(&r)).unwrap();
            assert_eq!(back, r, "{} refined {k} times", b.name());
            assert_eq!(
                2 * r.num_edges(),
                3 * r.num_cells() + r.boundary().len(),
                "edge count identity on {}",
                b.name()
            );
        }
    }
}

#[test]
fn lshape_refined_four_times() {
    let m = refine_times(&builtin_mesh(BuiltinMesh::LshapeFig1), 4);
    let h = m.max_diameter() * 2f64.sqrt();
    assert!((h - 2f64.powi(-4)).abs() < 1e-15);
    assert_eq!(m.num_cells(), 24 * 256);
}

#[test]
fn cook_cell_area_by_shoelace() {
    let m = builtin_mesh(BuiltinMesh::CookFig4);
    let pts = m.points();
    // the cell through a1, a13, a12 (0-based 0, 12, 11)
    let t = m
        .cells()
        .iter()
        .position(|c| {
            let mut v = c.vertices;
            v.sort();
            v == [0, 11, 12]
        })
        .expect("cell a1 a13 a12 exists");
    let (a, b, c) = (pts[0], pts[12], pts[11]);
    let shoelace =
        0.5 * ((a.x * b.y - b.x * a.y) + (b.x * c.y - c.x * b.y) + (c.x * a.y - a.x * c.y)).abs();
    let g = cell_geometry(&m, t).unwrap();
    assert!((g.area - shoelace).abs() < 1e-12 * shoelace);
    assert!(g.inradius < g.diameter);
}

#[test]
fn cook_labels_and_diameter() {
    let m = builtin_mesh(BuiltinMesh::CookFig4);
    for f in m.boundary() {
        let [a, b] = f.vertices;
        let on_left = m.points()[a].x == 0.0 && m.points()[b].x == 0.0;
        let expected = if on_left {
            FacetLabel::Dirichlet
        } else {
            FacetLabel::Neumann
        };
        assert_eq!(f.label, expected);
    }
    let h = m.max_diameter();
    assert!((h - 33.14).abs() / 33.14 < 1e-2, "h = {h}");
}

#[test]
fn equilateral_geometry() {
    let tri = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(0.5, 3f64.sqrt() / 2.0),
    ];
    let g = triangle_geometry(tri).unwrap();
    assert!((g.inradius - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-15);
    let d = inscribed_param_d(&tri, g.incenter).unwrap();
    assert!((d - 0.5).abs() < 1e-14);
}

#[test]
fn unknown_builtin_name() {
    assert!("lshape_fig9".parse::<BuiltinMesh>().is_err());
    assert_eq!(
        "cook_fig4".parse::<BuiltinMesh>().unwrap(),
        BuiltinMesh::CookFig4
    );
}

fn coord() -> impl Strategy<Value = f64> {
    -10.0f64..10.0
}

proptest! {
    #[test]
    fn refinement_conserves_area_and_halves_h(
        p in [(coord(), coord()), (coord(), coord()), (coord(), coord())],
        k in 1usize..4,
    ) {
        let Some(m) = triangle_mesh(p) else { return Ok(()) };
        prop_assume!(m.cell_area(0) > 1e-3 * m.max_diameter().powi(2));
        let r = refine_times(&m, k);
        let rel = (r.total_area() - m.total_area()).abs() / m.total_area();
        prop_assert!(rel <= 1e-13);
        let expected = m.max_diameter() / 2f64.powi(k as i32);
        prop_assert!((r.max_diameter() - expected).abs() <= 1e-14 * m.max_diameter());
        prop_assert_eq!(2 * r.num_edges(), 3 * r.num_cells() + r.boundary().len());
    }

    #[test]
    fn refined_facets_lie_on_parent_facets(k in 1usize..3, which in 0usize..4) {
        let m = builtin_mesh(BuiltinMesh::ALL[which]);
        let r = refine_times(&m, k);
        for f in r.boundary() {
            let (a, b) = (r.points()[f.vertices[0]], r.points()[f.vertices[1]]);
            let parent = m.boundary().iter().find(|pf| {
                let (pa, pb) = (m.points()[pf.vertices[0]], m.points()[pf.vertices[1]]);
                point_on_segment(a, pa, pb) && point_on_segment(b, pa, pb)
            });
            prop_assert!(parent.is_some());
            prop_assert_eq!(parent.unwrap().label, f.label);
        }
    }

    #[test]
    fn param_d_is_similarity_invariant(
        p in [(coord(), coord()), (coord(), coord()), (coord(), coord())],
        s in 0.01f64..100.0,
        angle in 0.0f64..std::f64::consts::TAU,
        shift in (coord(), coord()),
    ) {
        let pts = p.map(|(x, y)| Point2::new(x, y));
        let Some(g) = triangle_geometry(pts) else { return Ok(()) };
        prop_assume!(g.inradius > 1e-2 * g.diameter);
        let d = inscribed_param_d(&pts, g.incenter).unwrap();
        let (c, sn) = (angle.cos(), angle.sin());
        let moved = pts.map(|q| Point2::new(
            s * (c * q.x - sn * q.y) + shift.0,
            s * (sn * q.x + c * q.y) + shift.1,
        ));
        let gm = triangle_geometry(moved).unwrap();
        let dm = inscribed_param_d(&moved, gm.incenter).unwrap();
        prop_assert!((d - dm).abs() <= 1e-12);
        prop_assert!(d > 0.0 && d <= 1.0);
        prop_assert!((triangle_param_d(&g, pts) - d).abs() <= 1e-12);
    }

    #[test]
    fn write_parse_round_trip(
        p in [(coord(), coord()), (coord(), coord()), (coord(), coord())],
        k in 0usize..3,
    ) {
        let Some(m) = triangle_mesh(p) else { return Ok(()) };
        let r = refine_times(&m, k);
        prop_assert_eq!(parse_mesh(&write_mesh(&r)).unwrap(), r);
    }
}
