//! Generalized symmetric eigensolvers and the problem drivers built on them.
//!
//! Every pencil is reduced to "largest `θ` of `P x = θ Q x`" with `Q`
//! symmetric positive definite, and solved either densely (small sizes) or
//! by Lanczos in the `Q` inner product with full reorthogonalization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::assemble::{
    div_matrix, p0_mass, p1_operator, rt0_basis, rt0_mass, AssembleError, CoefficientField, P1Kind,
};
use crate::mesh::{FacetLabel, Mesh, Point2};
use crate::quadrature::TriangleRule;
use crate::sparse::{Cholesky, SparseError, SparseMatrix, TripletBuilder};

#[derive(Debug, Error)]
pub enum SpectraError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Assemble(#[from] AssembleError),
    #[error(
        "no convergence after {iterations} iterations (worst relative residual {residual:.3e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular pencil: neither matrix is positive definite")]
    SingularPencil,
    #[error("requested {requested} eigenvalues but the pencil has only {available} finite ones")]
    TooFewEigenvalues { requested: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (relative defect {0:.3e})")]
    NotSymmetric(f64),
    #[error("mesh has no Steklov facets")]
    NoSteklovFacets,
    #[error("the mixed scalar driver needs an all-Dirichlet boundary, found a '{0}' facet")]
    UnsupportedBoundary(FacetLabel),
    #[error("invalid solver option: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Dense for small pencils, Lanczos otherwise.
    Auto,
    Dense,
    Lanczos,
}

/// Pencils up to this size take the dense path under [`SolverMethod::Auto`].
pub const DENSE_AUTO_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target `‖Kx − λMx‖ <= tol ‖Kx‖`.
    pub tol: f64,
    /// Cap on Lanczos steps.
    pub max_iterations: usize,
    /// Number of eigenvalues requested.
    pub num_eigs: usize,
    pub seed: u64,
    pub method: SolverMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 1000,
            num_eigs: 1,
            seed: 0x00c0_ffee_5eed_1234,
            method: SolverMethod::Auto,
        }
    }
}

impl SolveOptions {
    pub fn with_eigs(mut self, j: usize) -> Self {
        self.num_eigs = j;
        self
    }

    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self
    }

    fn validate(&self) -> Result<(), SpectraError> {
        if !(self.tol > 0.0) {
            return Err(SpectraError::InvalidOptions(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iterations == 0 {
            return Err(SpectraError::InvalidOptions(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }

    fn use_dense(&self, n: usize) -> bool {
        match self.method {
            SolverMethod::Dense => true,
            SolverMethod::Lanczos => false,
            SolverMethod::Auto => n <= DENSE_AUTO_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Requested eigenvalues in the order of the request (ascending for
    /// the smallest ones, descending for the largest ones).
    pub eigenvalues: Vec<f64>,
    /// Relative residual of each eigenpair.
    pub residuals: Vec<f64>,
    pub dof_count: usize,
    /// Number of finite eigenvalues of the pencil.
    pub finite_count: usize,
    /// Eigenvectors normalized in the `M` inner product.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectrumResult {
    /// Eigenvectors as columns of a coordinate text matrix.
    pub fn eigenvectors_to_text(&self) -> String {
        let rows = self.eigenvectors.first().map_or(0, Vec::len);
        let mut b = TripletBuilder::new(rows, self.eigenvectors.len());
        for (j, v) in self.eigenvectors.iter().enumerate() {
            for (i, &x) in v.iter().enumerate() {
                if x != 0.0 {
                    b.push(i, j, x);
                }
            }
        }
        b.build().to_coordinate_text()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

type Op<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;
type FallibleOp<'a> = &'a dyn Fn(&[f64]) -> Result<Vec<f64>, SpectraError>;

/// "Largest `θ` of `P x = θ Q x`" in operator form. `residual` maps a Ritz
/// pair to the relative residual of the caller's original pencil.
struct LanczosProblem<'a> {
    n: usize,
    apply_p: Op<'a>,
    apply_q: Op<'a>,
    solve_q: FallibleOp<'a>,
    residual: &'a dyn Fn(f64, &[f64]) -> f64,
}

struct RitzPair {
    theta: f64,
    vector: Vec<f64>,
    residual: f64,
}

const CHECK_EVERY: usize = 8;

fn lanczos_largest(
    prob: &LanczosProblem<'_>,
    nev: usize,
    opts: &SolveOptions,
) -> Result<Vec<RitzPair>, SpectraError> {
    let n = prob.n;
    if nev == 0 {
        return Ok(Vec::new());
    }
    if nev > n {
        return Err(SpectraError::TooFewEigenvalues {
            requested: nev,
            available: n,
        });
    }
    let max_steps = opts.max_iterations.min(n).max(nev);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut q_basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let (mut v, mut qv) = fresh_start(prob, &basis, &q_basis, &mut rng)?;
    let mut scale = 0.0f64;

    loop {
        let j = basis.len();
        basis.push(v);
        q_basis.push(qv);
        let pv = (prob.apply_p)(&basis[j]);
        let mut w = (prob.solve_q)(&pv)?;
        let mut a = 0.0;
        for _ in 0..2 {
            let coeffs: Vec<f64> = q_basis.iter().map(|qb| dot(qb, &w)).collect();
            for (c, b) in coeffs.iter().zip(&basis) {
                axpy(-c, b, &mut w);
            }
            a += coeffs[j];
        }
        alpha.push(a);
        let qw = (prob.apply_q)(&w);
        let b = dot(&w, &qw).max(0.0).sqrt();
        scale = scale.max(a.abs()).max(b);
        let m = j + 1;
        let breakdown = b <= 1e-12 * scale;
        let exhausted = m >= n || m >= max_steps;

        if exhausted || breakdown || (m >= nev && m.is_multiple_of(CHECK_EVERY)) {
            if m >= nev {
                let pairs = ritz_pairs(prob, &basis, &alpha, &beta, nev);
                let worst = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
                if worst <= opts.tol {
                    return Ok(pairs);
                }
                if exhausted {
                    return Err(SpectraError::NoConvergence {
                        iterations: m,
                        residual: worst,
                    });
                }
            } else if exhausted {
                return Err(SpectraError::NoConvergence {
                    iterations: m,
                    residual: f64::INFINITY,
                });
            }
        }

        if breakdown {
            beta.push(0.0);
            let (nv, nqv) = fresh_start(prob, &basis, &q_basis, &mut rng)?;
            v = nv;
            qv = nqv;
        } else {
            beta.push(b);
            v = w.iter().map(|x| x / b).collect();
            qv = qw.iter().map(|x| x / b).collect();
        }
    }
}

fn fresh_start(
    prob: &LanczosProblem<'_>,
    basis: &[Vec<f64>],
    q_basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, Vec<f64>), SpectraError> {
    for _ in 0..4 {
        let mut r: Vec<f64> = (0..prob.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let raw = norm(&r);
        for _ in 0..2 {
            let coeffs: Vec<f64> = q_basis.iter().map(|qb| dot(qb, &r)).collect();
            for (c, b) in coeffs.iter().zip(basis) {
                axpy(-c, b, &mut r);
            }
        }
        if norm(&r) <= 1e-10 * raw {
            continue;
        }
        let qr = (prob.apply_q)(&r);
        let nq = dot(&r, &qr).sqrt();
        if nq.is_finite() && nq > 0.0 {
            return Ok((
                r.iter().map(|x| x / nq).collect(),
                qr.iter().map(|x| x / nq).collect(),
            ));
        }
    }
    Err(SpectraError::NoConvergence {
        iterations: basis.len(),
        residual: f64::INFINITY,
    })
}

fn ritz_pairs(
    prob: &LanczosProblem<'_>,
    basis: &[Vec<f64>],
    alpha: &[f64],
    beta: &[f64],
    nev: usize,
) -> Vec<RitzPair> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    order
        .into_iter()
        .take(nev)
        .map(|k| {
            let theta = eig.eigenvalues[k];
            let mut x = vec![0.0; prob.n];
            for (i, b) in basis.iter().enumerate() {
                axpy(eig.eigenvectors[(i, k)], b, &mut x);
            }
            let residual = (prob.residual)(theta, &x);
            RitzPair {
                theta,
                vector: x,
                residual,
            }
        })
        .collect()
}

/// Dense solve of `K x = λ M x` for symmetric `K`, `M` with at least one of
/// them positive definite. Returns all finite eigenvalues ascending with
/// `M`-normalized eigenvectors as columns.
pub fn dense_generalized_eig(
    k: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, DMatrix<f64>), SpectraError> {
    let n = k.nrows();
    if (k.ncols(), m.nrows(), m.ncols()) != (n, n, n) {
        return Err(SpectraError::Dimension(
            "pencil matrices differ in size".into(),
        ));
    }
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let reduce = |l: &DMatrix<f64>, a: &DMatrix<f64>| -> DMatrix<f64> {
        let x = l.solve_lower_triangular(a).expect("nonsingular factor");
        let c = l
            .solve_lower_triangular(&x.transpose())
            .expect("nonsingular factor");
        (&c + c.transpose()) * 0.5
    };
    let back = |l: &DMatrix<f64>, y: &DMatrix<f64>| -> DMatrix<f64> {
        l.transpose()
            .solve_upper_triangular(y)
            .expect("nonsingular factor")
    };
    let mut pairs: Vec<(f64, DVector<f64>)>;
    if let Some(ch) = m.clone().cholesky() {
        let l = ch.l();
        let eig = reduce(&l, k).symmetric_eigen();
        let x = back(&l, &eig.eigenvectors);
        pairs = (0..n)
            .map(|i| (eig.eigenvalues[i], x.column(i).into_owned()))
            .collect();
    } else if let Some(ch) = k.clone().cholesky() {
        let l = ch.l();
        let eig = reduce(&l, m).symmetric_eigen();
        let x = back(&l, &eig.eigenvectors);
        let tmax = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        let cut = 1e-12 * tmax;
        pairs = (0..n)
            .filter(|&i| eig.eigenvalues[i] > cut)
            .map(|i| {
                let theta = eig.eigenvalues[i];
                // x is K-normalized; rescale to xᵀMx = 1
                let v = x.column(i) / theta.sqrt();
                (1.0 / theta, v)
            })
            .collect();
    } else {
        return Err(SpectraError::SingularPencil);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vecs = DMatrix::zeros(n, pairs.len());
    for (j, (_, v)) in pairs.iter().enumerate() {
        vecs.set_column(j, v);
    }
    Ok((pairs.into_iter().map(|p| p.0).collect(), vecs))
}

fn relative_residual(kx: &[f64], mx: &[f64], lambda: f64) -> f64 {
    let r: f64 = kx
        .iter()
        .zip(mx)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let d = norm(kx);
    if d == 0.0 {
        if r == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        r / d
    }
}

fn check_pencil(k: &SparseMatrix, m: &SparseMatrix) -> Result<(), SpectraError> {
    let n = k.nrows();
    if k.ncols() != n || m.nrows() != n || m.ncols() != n {
        return Err(SpectraError::Dimension(format!(
            "K is {}x{}, M is {}x{}",
            k.nrows(),
            k.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    for a in [k, m] {
        let d = a.symmetry_defect();
        if d > 1e-14 {
            return Err(SpectraError::NotSymmetric(d));
        }
    }
    Ok(())
}

/// Selected eigenpairs of `K x = λ M x` for symmetric positive
/// (semi)definite `K`, `M`.
///
/// On the iterative path `finite_count` is `n` when `M` is positive
/// definite and otherwise the number of nonzero rows of `M`.
pub fn generalized_sym_eig(
    k: &SparseMatrix,
    m: &SparseMatrix,
    opts: &SolveOptions,
    which: Which,
) -> Result<SpectrumResult, SpectraError> {
    opts.validate()?;
    check_pencil(k, m)?;
    let n = k.nrows();
    let nev = opts.num_eigs;

    let finish = |lams: Vec<f64>, vecs: Vec<Vec<f64>>, finite: usize| {
        let residuals = lams
            .iter()
            .zip(&vecs)
            .map(|(&l, x)| relative_residual(&k.mul_vec(x), &m.mul_vec(x), l))
            .collect::<Vec<_>>();
        let worst = residuals.iter().cloned().fold(0.0, f64::max);
        if worst > opts.tol {
            return Err(SpectraError::NoConvergence {
                iterations: 0,
                residual: worst,
            });
        }
        Ok(SpectrumResult {
            eigenvalues: lams,
            residuals,
            dof_count: n,
            finite_count: finite,
            eigenvectors: vecs,
        })
    };

    if opts.use_dense(n) {
        let (lams, vecs) = dense_generalized_eig(&k.to_dense(), &m.to_dense())?;
        let finite = lams.len();
        if nev > finite {
            return Err(SpectraError::TooFewEigenvalues {
                requested: nev,
                available: finite,
            });
        }
        let idx: Vec<usize> = match which {
            Which::Smallest => (0..nev).collect(),
            Which::Largest => (0..nev).map(|i| finite - 1 - i).collect(),
        };
        let sel_l = idx.iter().map(|&i| lams[i]).collect();
        let sel_v = idx
            .iter()
            .map(|&i| vecs.column(i).iter().copied().collect())
            .collect();
        return finish(sel_l, sel_v, finite);
    }

    match which {
        Which::Smallest => {
            let chol = Cholesky::factor(k).map_err(|_| SpectraError::SingularPencil)?;
            let finite = match Cholesky::factor(m) {
                Ok(_) => n,
                Err(_) => m.nonzero_rows(),
            };
            if nev > finite {
                return Err(SpectraError::TooFewEigenvalues {
                    requested: nev,
                    available: finite,
                });
            }
            let apply_p = |x: &[f64]| m.mul_vec(x);
            let apply_q = |x: &[f64]| k.mul_vec(x);
            let solve_q = |x: &[f64]| Ok(chol.solve(x));
            let residual = |theta: f64, x: &[f64]| {
                relative_residual(&k.mul_vec(x), &m.mul_vec(x), 1.0 / theta)
            };
            let prob = LanczosProblem {
                n,
                apply_p: &apply_p,
                apply_q: &apply_q,
                solve_q: &solve_q,
                residual: &residual,
            };
            let pairs = lanczos_largest(&prob, nev, opts)?;
            let mut lams = Vec::new();
            let mut vecs = Vec::new();
            for p in pairs {
                if !(p.theta > 0.0) {
                    return Err(SpectraError::TooFewEigenvalues {
                        requested: nev,
                        available: lams.len(),
                    });
                }
                let s = dot(&p.vector, &m.mul_vec(&p.vector)).sqrt();
                lams.push(1.0 / p.theta);
                vecs.push(p.vector.iter().map(|v| v / s).collect());
            }
            finish(lams, vecs, finite)
        }
        Which::Largest => {
            let chol = Cholesky::factor(m).map_err(|_| SpectraError::SingularPencil)?;
            let apply_p = |x: &[f64]| k.mul_vec(x);
            let apply_q = |x: &[f64]| m.mul_vec(x);
            let solve_q = |x: &[f64]| Ok(chol.solve(x));
            let residual =
                |theta: f64, x: &[f64]| relative_residual(&k.mul_vec(x), &m.mul_vec(x), theta);
            let prob = LanczosProblem {
                n,
                apply_p: &apply_p,
                apply_q: &apply_q,
                solve_q: &solve_q,
                residual: &residual,
            };
            let pairs = lanczos_largest(&prob, nev, opts)?;
            let lams = pairs.iter().map(|p| p.theta).collect();
            let vecs = pairs.into_iter().map(|p| p.vector).collect();
            finish(lams, vecs, n)
        }
    }
}

/// Preconditioned conjugate gradients; `precond` applies an approximate
/// inverse.
fn pcg(
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SpectraError> {
    let bn = norm(b);
    let mut x = vec![0.0; b.len()];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best = f64::INFINITY;
    for it in 0..max_iter {
        let ap = apply_a(&p);
        let step = rz / dot(&p, &ap);
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        let rn = norm(&r) / bn;
        best = best.min(rn);
        if rn <= rtol {
            return Ok(x);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let gamma = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + gamma * *p);
        if it > 20 && rn > 0.5 * best && rn < 1e-10 {
            // stagnated at rounding level
            return Ok(x);
        }
    }
    Err(SpectraError::NoConvergence {
        iterations: max_iter,
        residual: best,
    })
}

fn inner_rtol(opts: &SolveOptions) -> f64 {
    (opts.tol * 1e-4).clamp(1e-14, 1e-11)
}

/// Smallest eigenvalues of the mixed scalar problem, in Schur form
/// `(B M_σ⁻¹ Bᵀ + C) u = λ M_ℓ u` on piecewise constants. `M_σ⁻¹` is only
/// ever applied through a sparse Cholesky factor.
pub fn mixed_eigs_scalar(
    m: &Mesh,
    c: &CoefficientField,
    opts: &SolveOptions,
) -> Result<SpectrumResult, SpectraError> {
    opts.validate()?;
    if let Some(f) = m
        .boundary()
        .iter()
        .find(|f| f.label != FacetLabel::Dirichlet)
    {
        return Err(SpectraError::UnsupportedBoundary(f.label));
    }
    let n = m.num_cells();
    let nev = opts.num_eigs;
    if nev > n {
        return Err(SpectraError::TooFewEigenvalues {
            requested: nev,
            available: n,
        });
    }
    let m_sigma = rt0_mass(m, c)?;
    let b = div_matrix(m);
    let c_mat = p0_mass(m, c.gamma())?;
    let m_ell: Vec<f64> = (0..n).map(|t| m.cell_area(t)).collect();
    let chol = Cholesky::factor(&m_sigma)?;
    let c_diag = c_mat.diagonal();
    let apply_s = |u: &[f64]| -> Vec<f64> {
        let g = chol.solve(&b.tr_mul_vec(u));
        let mut y = b.mul_vec(&g);
        y.iter_mut()
            .zip(c_diag.iter().zip(u))
            .for_each(|(y, (c, u))| *y += c * u);
        y
    };
    let residual = |lam: f64, u: &[f64]| {
        let su = apply_s(u);
        let mu: Vec<f64> = u.iter().zip(&m_ell).map(|(u, w)| u * w).collect();
        relative_residual(&su, &mu, lam)
    };

    let (lams, vecs): (Vec<f64>, Vec<Vec<f64>>) = if opts.use_dense(n) {
        let mut s = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            s.set_column(j, &DVector::from_vec(apply_s(&e)));
            e[j] = 0.0;
        }
        let s = (&s + s.transpose()) * 0.5;
        let ml = DMatrix::from_diagonal(&DVector::from_vec(m_ell.clone()));
        let (all, x) = dense_generalized_eig(&s, &ml)?;
        (
            all[..nev].to_vec(),
            (0..nev)
                .map(|j| x.column(j).iter().copied().collect())
                .collect(),
        )
    } else {
        // preconditioner: lump M_σ to its diagonal
        let inv_diag: Vec<f64> = m_sigma.diagonal().iter().map(|d| 1.0 / d).collect();
        let mut tb = TripletBuilder::with_capacity(n, n, 9 * n);
        for e in 0..m.num_edges() {
            let cells = m.edge_cells(e);
            for &ti in cells.iter().flatten() {
                for &tj in cells.iter().flatten() {
                    tb.push(ti, tj, b.get(ti, e) * inv_diag[e] * b.get(tj, e));
                }
            }
        }
        for t in 0..n {
            tb.push(t, t, c_diag[t]);
        }
        let approx = Cholesky::factor(&tb.build_symmetric())?;
        let rtol = inner_rtol(opts);
        let apply_p =
            |u: &[f64]| -> Vec<f64> { u.iter().zip(&m_ell).map(|(u, w)| u * w).collect() };
        let precond = |r: &[f64]| approx.solve(r);
        let solve_q = |f: &[f64]| pcg(&apply_s, &precond, f, rtol, 2000);
        let lres = |theta: f64, u: &[f64]| residual(1.0 / theta, u);
        let prob = LanczosProblem {
            n,
            apply_p: &apply_p,
            apply_q: &apply_s,
            solve_q: &solve_q,
            residual: &lres,
        };
        let pairs = lanczos_largest(&prob, nev, opts)?;
        let mut lams = Vec::new();
        let mut vecs = Vec::new();
        for p in pairs {
            let s: f64 = p
                .vector
                .iter()
                .zip(&m_ell)
                .map(|(u, w)| u * u * w)
                .sum::<f64>()
                .sqrt();
            lams.push(1.0 / p.theta);
            vecs.push(p.vector.iter().map(|v| v / s).collect());
        }
        (lams, vecs)
    };

    let residuals: Vec<f64> = lams
        .iter()
        .zip(&vecs)
        .map(|(&l, u)| residual(l, u))
        .collect();
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(SpectraError::NoConvergence {
            iterations: 0,
            residual: worst,
        });
    }
    Ok(SpectrumResult {
        eigenvalues: lams,
        residuals,
        dof_count: n,
        finite_count: n,
        eigenvectors: vecs,
    })
}

/// `K[e, f] = (φ_e, φ_f) + (div φ_e, div φ_f)` on RT0 with `A = I`.
pub fn steklov_flux_form(m: &Mesh) -> Result<SparseMatrix, SpectraError> {
    let mass = rt0_mass(m, &CoefficientField::identity(m))?;
    let b = div_matrix(m);
    let mut tb = TripletBuilder::with_capacity(m.num_edges(), m.num_edges(), 9 * m.num_cells());
    for t in 0..m.num_cells() {
        let area = m.cell_area(t);
        let row: Vec<(usize, f64)> = b.row(t).collect();
        for &(e, be) in &row {
            for &(f, bf) in &row {
                tb.push(e, f, be * bf / area);
            }
        }
    }
    let mut k = mass.add_scaled(&tb.build_symmetric(), 1.0, 1.0);
    k = k.add_scaled(&k.transpose(), 0.5, 0.5);
    Ok(k)
}

/// Steklov eigenvalues of `−Δw + w = 0`, `∂w/∂n = λ w` from the flux-only
/// form `(σ, τ) + (div σ, div τ) = λ⁻¹ (σ·n, τ·n)_Γ`.
///
/// RT0 dofs on Neumann facets are fixed to zero, the remaining dofs off the
/// Steklov boundary are condensed out, and the largest `ν = 1/λ` of
/// `S y = ν D y` with `D = diag(|F|)` give the smallest `λ`.
pub fn steklov_eigs(m: &Mesh, opts: &SolveOptions) -> Result<SpectrumResult, SpectraError> {
    opts.validate()?;
    let steklov = m.facets_with_label(FacetLabel::Steklov);
    if steklov.is_empty() {
        return Err(SpectraError::NoSteklovFacets);
    }
    let nb = steklov.len();
    let nev = opts.num_eigs;
    if nev > nb {
        return Err(SpectraError::TooFewEigenvalues {
            requested: nev,
            available: nb,
        });
    }
    let k = steklov_flux_form(m)?;
    let mut role = vec![0u8; m.num_edges()]; // 0 interior, 1 steklov, 2 fixed
    let bdofs: Vec<usize> = steklov.iter().map(|&f| m.facet_edge(f)).collect();
    for &e in &bdofs {
        role[e] = 1;
    }
    for f in m.facets_with_label(FacetLabel::Neumann) {
        role[m.facet_edge(f)] = 2;
    }
    let idofs: Vec<usize> = (0..m.num_edges()).filter(|&e| role[e] == 0).collect();
    let k_ii = k.submatrix(&idofs, &idofs);
    let k_ib = k.submatrix(&idofs, &bdofs);
    let k_bb = k.submatrix(&bdofs, &bdofs);
    let chol = Cholesky::factor(&k_ii)?;
    let d: Vec<f64> = bdofs.iter().map(|&e| m.edge_length(e)).collect();
    let apply_s = |y: &[f64]| -> Vec<f64> {
        let z = chol.solve(&k_ib.mul_vec(y));
        let mut out = k_bb.mul_vec(y);
        axpy(-1.0, &k_ib.tr_mul_vec(&z), &mut out);
        out
    };
    let residual = |nu: f64, y: &[f64]| {
        let dy: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a * b).collect();
        relative_residual(&apply_s(y), &dy, nu)
    };

    let (nus, vecs): (Vec<f64>, Vec<Vec<f64>>) = if opts.use_dense(nb) {
        let mut s = DMatrix::zeros(nb, nb);
        let mut e = vec![0.0; nb];
        for j in 0..nb {
            e[j] = 1.0;
            s.set_column(j, &DVector::from_vec(apply_s(&e)));
            e[j] = 0.0;
        }
        let s = (&s + s.transpose()) * 0.5;
        let dm = DMatrix::from_diagonal(&DVector::from_vec(d.clone()));
        let (all, x) = dense_generalized_eig(&s, &dm)?;
        (
            (0..nev).map(|i| all[nb - 1 - i]).collect(),
            (0..nev)
                .map(|i| x.column(nb - 1 - i).iter().copied().collect())
                .collect(),
        )
    } else {
        let apply_q = |y: &[f64]| -> Vec<f64> { y.iter().zip(&d).map(|(a, b)| a * b).collect() };
        let solve_q = |y: &[f64]| Ok(y.iter().zip(&d).map(|(a, b)| a / b).collect());
        let prob = LanczosProblem {
            n: nb,
            apply_p: &apply_s,
            apply_q: &apply_q,
            solve_q: &solve_q,
            residual: &residual,
        };
        let pairs = lanczos_largest(&prob, nev, opts)?;
        (
            pairs.iter().map(|p| p.theta).collect(),
            pairs.into_iter().map(|p| p.vector).collect(),
        )
    };
    let residuals: Vec<f64> = nus
        .iter()
        .zip(&vecs)
        .map(|(&nu, y)| residual(nu, y))
        .collect();
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.tol {
        return Err(SpectraError::NoConvergence {
            iterations: 0,
            residual: worst,
        });
    }
    // expand boundary vectors to full flux vectors
    let eigenvectors = vecs
        .iter()
        .map(|y| {
            let z = chol.solve(&k_ib.mul_vec(y));
            let mut full = vec![0.0; m.num_edges()];
            for (&e, &v) in bdofs.iter().zip(y) {
                full[e] = v;
            }
            for (&e, &v) in idofs.iter().zip(&z) {
                full[e] = -v;
            }
            full
        })
        .collect();
    Ok(SpectrumResult {
        eigenvalues: nus.iter().map(|nu| 1.0 / nu).collect(),
        residuals,
        dof_count: m.num_edges(),
        finite_count: nb,
        eigenvectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpperProblem {
    /// `∫ ∇u·∇v = λ ∫ uv` with `A` from the coefficients.
    Laplace,
    /// `∫ A∇u·∇v + γuv = λ ∫ uv`.
    Elliptic,
    /// `∫ A∇u·∇v + γuv = λ ∫_Γ uv` over Steklov facets.
    Steklov,
    /// `∫ Cε(u):ε(v) = λ ∫ u·v`.
    Elasticity { mu: f64, kappa: f64 },
}

/// Smallest eigenvalues of a conforming P1 discretization. By the
/// Rayleigh–Ritz principle they bound the exact eigenvalues from above.
pub fn p1_upper_eigs(
    m: &Mesh,
    problem: UpperProblem,
    c: &CoefficientField,
    opts: &SolveOptions,
) -> Result<SpectrumResult, SpectraError> {
    let (k, mm) = match problem {
        UpperProblem::Laplace => (
            p1_operator(m, c, P1Kind::Stiffness)?.0,
            p1_operator(m, c, P1Kind::Mass)?.0,
        ),
        UpperProblem::Elliptic => (
            p1_operator(m, c, P1Kind::StiffnessWithReaction)?.0,
            p1_operator(m, c, P1Kind::Mass)?.0,
        ),
        UpperProblem::Steklov => (
            p1_operator(m, c, P1Kind::StiffnessWithReaction)?.0,
            p1_operator(m, c, P1Kind::BoundaryMass)?.0,
        ),
        UpperProblem::Elasticity { mu, kappa } => (
            p1_operator(m, c, P1Kind::ElasticStiffness { mu, kappa })?.0,
            p1_operator(m, c, P1Kind::VectorMass)?.0,
        ),
    };
    generalized_sym_eig(&k, &mm, opts, Which::Smallest)
}

/// Discrete gradient `g` of piecewise constants: `M_σ g = −Bᵀ v`.
pub fn discrete_gradient(
    m: &Mesh,
    c: &CoefficientField,
    v: &[f64],
) -> Result<Vec<f64>, SpectraError> {
    if v.len() != m.num_cells() {
        return Err(SpectraError::Dimension(format!(
            "expected {} cell values, got {}",
            m.num_cells(),
            v.len()
        )));
    }
    let chol = Cholesky::factor(&rt0_mass(m, c)?)?;
    let rhs: Vec<f64> = div_matrix(m).tr_mul_vec(v).iter().map(|x| -x).collect();
    Ok(chol.solve(&rhs))
}

/// Projection of a vector field onto RT0, orthogonal in
/// `(σ, τ) ↦ ∫ (A⁻¹σ)·τ`: solves `M_σ p = r`, `r_e = ∫ (A⁻¹ field)·φ_e`.
/// The load is integrated with a rule exact to total degree `quad_degree`.
pub fn a_project_field(
    m: &Mesh,
    c: &CoefficientField,
    field: impl Fn(Point2) -> [f64; 2],
    quad_degree: usize,
) -> Result<Vec<f64>, SpectraError> {
    let rule = TriangleRule::with_degree(quad_degree);
    let mut r = vec![0.0; m.num_edges()];
    for t in 0..m.num_cells() {
        let edges = m.cell_edges(t);
        let ainv = c.a_inv(t);
        for (x, w) in rule.mapped(m.cell_points(t)) {
            let f = field(x);
            let af = [
                ainv[0][0] * f[0] + ainv[0][1] * f[1],
                ainv[1][0] * f[0] + ainv[1][1] * f[1],
            ];
            let phi = rt0_basis(m, t, x);
            for k in 0..3 {
                r[edges[k]] += w * (af[0] * phi[k][0] + af[1] * phi[k][1]);
            }
        }
    }
    let chol = Cholesky::factor(&rt0_mass(m, c)?)?;
    Ok(chol.solve(&r))
}

/// Cell averages of a scalar function, integrated to total degree
/// `quad_degree`.
pub fn cell_averages(m: &Mesh, u: impl Fn(Point2) -> f64, quad_degree: usize) -> Vec<f64> {
    let rule = TriangleRule::with_degree(quad_degree);
    (0..m.num_cells())
        .map(|t| {
            let s: f64 = rule.mapped(m.cell_points(t)).map(|(x, w)| w * u(x)).sum();
            s / m.cell_area(t)
        })
        .collect()
}
