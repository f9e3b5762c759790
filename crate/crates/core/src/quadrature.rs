//! Gauss–Legendre rules on intervals and collapsed (Duffy) rules on triangles.

use crate::mesh::Point2;

/// Gauss–Legendre nodes and weights on `[0, 1]` with `n` points, exact for
/// polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "need at least one quadrature point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Rule on the reference triangle `{(s,t): s,t >= 0, s+t <= 1}` exact for
/// polynomials of total degree `degree`. Weights sum to 1/2.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<(f64, f64)>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn with_degree(degree: usize) -> Self {
        // the collapse adds one power of (1 - s) to the integrand
        let n = (degree + 2).div_ceil(2).max(1);
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let s = x[i];
                let t = x[j] * (1.0 - s);
                points.push((s, t));
                weights.push(w[i] * w[j] * (1.0 - s));
            }
        }
        Self { points, weights }
    }

    /// Physical points and weights on the triangle `p`.
    pub fn mapped(&self, p: [Point2; 3]) -> impl Iterator<Item = (Point2, f64)> + '_ {
        let (ax, ay) = (p[1].x - p[0].x, p[1].y - p[0].y);
        let (bx, by) = (p[2].x - p[0].x, p[2].y - p[0].y);
        let jac = (ax * by - ay * bx).abs();
        let o = p[0];
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(&(s, t), &w)| {
                (
                    Point2::new(o.x + s * ax + t * bx, o.y + s * ay + t * by),
                    w * jac,
                )
            })
    }
}
