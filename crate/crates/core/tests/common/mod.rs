//! Independent dense oracles shared by the integration tests.
#![allow(dead_code)]

use eigbound::assemble::{boundary_trace_matrix, div_matrix, p0_mass, rt0_mass, CoefficientField};
use eigbound::mesh::{FacetLabel, Mesh, Point2};
use nalgebra::DMatrix;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let total: f64 = a.iter().map(|v| v * v).sum();
        if off <= 1e-30 * total {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

fn sqrt_diag_sandwich(inner: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let n = d.len();
    let m = DMatrix::from_fn(n, n, |i, j| d[i].sqrt() * inner[(i, j)] * d[j].sqrt());
    (&m + m.transpose()) * 0.5
}

/// Mixed eigenvalues from the full saddle matrix `[M_σ Bᵀ; B −C]`: the
/// `u` block of `−K⁻¹` is `S⁻¹`, so the eigenvalues of
/// `M_ℓ^{1/2} (−K⁻¹)_{uu} M_ℓ^{1/2}` are the reciprocals `1/λ`.
pub fn mixed_saddle_eigs(m: &Mesh, c: &CoefficientField) -> Vec<f64> {
    let ms = rt0_mass(m, c).unwrap().to_dense();
    let b = div_matrix(m).to_dense();
    let cm = p0_mass(m, c.gamma()).unwrap().to_dense();
    let (ne, nc) = (m.num_edges(), m.num_cells());
    let mut k = DMatrix::zeros(ne + nc, ne + nc);
    k.view_mut((0, 0), (ne, ne)).copy_from(&ms);
    k.view_mut((ne, 0), (nc, ne)).copy_from(&b);
    k.view_mut((0, ne), (ne, nc)).copy_from(&b.transpose());
    k.view_mut((ne, ne), (nc, nc)).copy_from(&(-cm));
    let kinv = k.lu().try_inverse().expect("saddle matrix is invertible");
    let uu = -kinv.view((ne, ne), (nc, nc)).into_owned();
    let areas: Vec<f64> = (0..nc).map(|t| m.cell_area(t)).collect();
    let mut lams: Vec<f64> = jacobi_eigenvalues(&sqrt_diag_sandwich(&uu, &areas))
        .into_iter()
        .filter(|&x| x > 0.0)
        .map(|x| 1.0 / x)
        .collect();
    lams.sort_by(|a, b| a.total_cmp(b));
    lams
}

/// Steklov eigenvalues from the three-field system in `(σ, u, η)`:
/// `[M_σ Bᵀ −Nᵀ; B −M_0 0; −N 0 0]` with `η` the boundary trace.
pub fn steklov_saddle_eigs(m: &Mesh) -> Vec<f64> {
    let id = CoefficientField::identity(m);
    let ms = rt0_mass(m, &id).unwrap().to_dense();
    let b = div_matrix(m).to_dense();
    let m0 = p0_mass(m, &vec![1.0; m.num_cells()]).unwrap().to_dense();
    let n = boundary_trace_matrix(m, FacetLabel::Steklov)
        .unwrap()
        .to_dense();
    let (ne, nc, nf) = (m.num_edges(), m.num_cells(), n.nrows());
    let dim = ne + nc + nf;
    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (ne, ne)).copy_from(&ms);
    k.view_mut((ne, 0), (nc, ne)).copy_from(&b);
    k.view_mut((0, ne), (ne, nc)).copy_from(&b.transpose());
    k.view_mut((ne, ne), (nc, nc)).copy_from(&(-m0));
    k.view_mut((ne + nc, 0), (nf, ne)).copy_from(&(-&n));
    k.view_mut((0, ne + nc), (ne, nf))
        .copy_from(&(-n.transpose()));
    let kinv = k
        .lu()
        .try_inverse()
        .expect("three-field matrix is invertible");
    let gg = -kinv.view((ne + nc, ne + nc), (nf, nf)).into_owned();
    let lens: Vec<f64> = m
        .facets_with_label(FacetLabel::Steklov)
        .iter()
        .map(|&f| m.edge_length(m.facet_edge(f)))
        .collect();
    let mut lams: Vec<f64> = jacobi_eigenvalues(&sqrt_diag_sandwich(&gg, &lens))
        .into_iter()
        .filter(|&x| x > 0.0)
        .map(|x| 1.0 / x)
        .collect();
    lams.sort_by(|a, b| a.total_cmp(b));
    lams
}

/// Polynomial test functions vanishing on the boundary of each builtin
/// domain, with their gradients.
pub fn bubble(name: &str) -> (fn(Point2) -> f64, fn(Point2) -> [f64; 2]) {
    match name {
        "square" => (
            |p| (1.0 - p.x * p.x) * (1.0 - p.y * p.y),
            |p| {
                [
                    -2.0 * p.x * (1.0 - p.y * p.y),
                    -2.0 * p.y * (1.0 - p.x * p.x),
                ]
            },
        ),
        "lshape" => (
            |p| p.x * p.y * (1.0 - p.x * p.x) * (1.0 - p.y * p.y),
            |p| {
                [
                    p.y * (1.0 - p.y * p.y) * (1.0 - 3.0 * p.x * p.x),
                    p.x * (1.0 - p.x * p.x) * (1.0 - 3.0 * p.y * p.y),
                ]
            },
        ),
        "cook" => (
            |p| cook_factors(p).iter().product::<f64>() * COOK_SCALE,
            |p| {
                let f = cook_factors(p);
                // d/dx and d/dy of each linear factor
                let dx = [1.0, -1.0, 44.0, 16.0];
                let dy = [0.0, 0.0, -48.0, -48.0];
                let mut g = [0.0; 2];
                for i in 0..4 {
                    let others: f64 = (0..4).filter(|&j| j != i).map(|j| f[j]).product();
                    g[0] += dx[i] * others;
                    g[1] += dy[i] * others;
                }
                [g[0] * COOK_SCALE, g[1] * COOK_SCALE]
            },
        ),
        other => panic!("no test function for {other}"),
    }
}

const COOK_SCALE: f64 = 1e-9;

fn cook_factors(p: Point2) -> [f64; 4] {
    [
        p.x,
        48.0 - p.x,
        44.0 * p.x - 48.0 * p.y,
        16.0 * p.x - 48.0 * p.y + 2112.0,
    ]
}
