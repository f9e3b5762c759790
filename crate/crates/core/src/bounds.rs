//! Explicit constants and the guaranteed lower-bound transforms.
//!
//! A discrete mixed eigenvalue `λ_h` and a computable `δ` with
//! `‖u − P_h u‖ <= δ (energy norm of u)` give the guaranteed lower bound
//! `λ_h / (1 + δ² λ_h)` for the exact eigenvalue of the same index.

use std::f64::consts::PI;

use thiserror::Error;

use crate::mesh::{cell_geometry, triangle_param_d, FacetLabel, Mesh, MeshError};

/// First positive root of the Bessel function `J_1`.
pub const BESSEL_J11: f64 = 3.831_705_970_207_512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("lambda_h = {lambda_h} is below the shift gamma0 = {gamma0}")]
    BelowShift { lambda_h: f64, gamma0: f64 },
    #[error("mesh has no Steklov facets")]
    NoSteklovFacets,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("inconsistent input lengths: {0} levels, {1} delta values")]
    Length(usize, usize),
    #[error("level {level}: {msg}")]
    Invariant { level: usize, msg: String },
}

/// `λ_h / (1 + δ² λ_h)`. Increasing in `λ_h`, decreasing in `δ²`, and
/// below both `λ_h` and `1/δ²`.
pub fn lb_transform(lambda_h: f64, delta_sq: f64) -> f64 {
    debug_assert!(lambda_h >= 0.0 && delta_sq >= 0.0);
    if lambda_h == 0.0 {
        return 0.0;
    }
    lambda_h / (1.0 + delta_sq * lambda_h)
}

/// Shifted bound `(λ_h + γ0 x) / (1 + x)` with `x = (λ_h − γ0) δ²`, which
/// equals `γ0 + lb_transform(λ_h − γ0, δ²)`.
pub fn lb_transform_shifted(lambda_h: f64, delta_sq: f64, gamma0: f64) -> Result<f64, BoundsError> {
    if !(gamma0 >= 0.0) || !(delta_sq >= 0.0) {
        return Err(BoundsError::OutOfRange(format!(
            "need gamma0 >= 0 and delta_sq >= 0, got {gamma0} and {delta_sq}"
        )));
    }
    if !(lambda_h >= gamma0) {
        return Err(BoundsError::BelowShift { lambda_h, gamma0 });
    }
    let x = (lambda_h - gamma0) * delta_sq;
    Ok((lambda_h + gamma0 * x) / (1.0 + x))
}

/// Which constant bounds the cellwise Poincaré inequality for mean-free
/// functions on convex cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantChoice {
    /// `h/π`, valid on any convex cell.
    Pi,
    /// `h/j_{1,1}`, sharper on triangles.
    BesselJ11,
}

impl ConstantChoice {
    pub fn value(self) -> f64 {
        match self {
            ConstantChoice::Pi => PI,
            ConstantChoice::BesselJ11 => BESSEL_J11,
        }
    }
}

/// Lower bound on the elasticity tensor used in the elasticity `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StiffnessFloor {
    /// `2μ`, the smallest eigenvalue of `C(E) = 2μE + κ tr(E) I`.
    TwoMu,
    /// `μ`, a weaker floor that gives a larger `δ`.
    Mu,
}

impl StiffnessFloor {
    fn factor(self) -> f64 {
        match self {
            StiffnessFloor::TwoMu => 2.0,
            StiffnessFloor::Mu => 1.0,
        }
    }
}

/// Face measure entering the trace constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFaceMeasure {
    /// The facet length `|F|`.
    Facet,
    /// The cell diameter `h_T >= |F|`.
    CellDiameter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundProblem {
    Laplace,
    Elliptic,
    Elasticity,
    Steklov,
}

/// Inputs from which `δ²` is evaluated, kept for auditing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ingredients {
    Laplace {
        h: f64,
        constant: ConstantChoice,
    },
    Elliptic {
        h: f64,
        a0: f64,
    },
    Elasticity {
        mu: f64,
        floor: StiffnessFloor,
        /// Cell attaining the maximum of `C_K(T) h_T`.
        cell: usize,
        korn: f64,
        h_t: f64,
    },
    Steklov {
        /// Faces per cell.
        faces: usize,
        /// Boundary facet attaining the maximum.
        facet: usize,
        face_measure: TraceFaceMeasure,
        meas_f: f64,
        meas_t: f64,
        h_t: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaBound {
    pub delta_sq: f64,
    pub problem: BoundProblem,
    pub ingredients: Ingredients,
}

impl DeltaBound {
    fn from_ingredients(problem: BoundProblem, ingredients: Ingredients) -> Self {
        let mut d = Self {
            delta_sq: 0.0,
            problem,
            ingredients,
        };
        d.delta_sq = d.recompute();
        d
    }

    /// Re-evaluates `δ²` from the stored ingredients.
    pub fn recompute(&self) -> f64 {
        match self.ingredients {
            Ingredients::Laplace { h, constant } => (h / constant.value()).powi(2),
            Ingredients::Elliptic { h, a0 } => h * h / (a0 * PI * PI),
            Ingredients::Elasticity {
                mu,
                floor,
                korn,
                h_t,
                ..
            } => (korn * h_t / ((floor.factor() * mu).sqrt() * PI)).powi(2),
            Ingredients::Steklov {
                faces,
                face_measure,
                meas_f,
                meas_t,
                h_t,
                ..
            } => {
                let f = match face_measure {
                    TraceFaceMeasure::Facet => meas_f,
                    TraceFaceMeasure::CellDiameter => h_t,
                };
                (faces as f64 - 1.0) * trace_const_unchecked(f, meas_t, h_t, 2).powi(2)
            }
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta_sq.sqrt()
    }
}

pub fn delta_laplace(h: f64, constant: ConstantChoice) -> Result<DeltaBound, BoundsError> {
    if !(h > 0.0) {
        return Err(BoundsError::OutOfRange(format!(
            "h must be positive, got {h}"
        )));
    }
    Ok(DeltaBound::from_ingredients(
        BoundProblem::Laplace,
        Ingredients::Laplace { h, constant },
    ))
}

pub fn delta_elliptic(h: f64, a0: f64) -> Result<DeltaBound, BoundsError> {
    if !(h > 0.0) || !(a0 > 0.0) {
        return Err(BoundsError::OutOfRange(format!(
            "h and a0 must be positive, got {h} and {a0}"
        )));
    }
    Ok(DeltaBound::from_ingredients(
        BoundProblem::Elliptic,
        Ingredients::Elliptic { h, a0 },
    ))
}

fn check_d(d: f64) -> Result<(), BoundsError> {
    if d > 0.0 && d <= 1.0 {
        Ok(())
    } else {
        Err(BoundsError::OutOfRange(format!(
            "d must lie in (0, 1], got {d}"
        )))
    }
}

/// Bound on the constant of the right inverse of the divergence on a convex
/// cell with inscribed-ball parameter `d`: `√(2/d² (1 + √(1 − d²)))`.
pub fn cdiv_bound(d: f64) -> Result<f64, BoundsError> {
    check_d(d)?;
    Ok((2.0 / (d * d) * (1.0 + (1.0 - d * d).sqrt())).sqrt())
}

/// Local Korn constant on a convex cell: `√(1 + 4/d² (1 + √(1 − d²)))`.
pub fn korn_bound(d: f64) -> Result<f64, BoundsError> {
    check_d(d)?;
    Ok((1.0 + 4.0 / (d * d) * (1.0 + (1.0 - d * d).sqrt())).sqrt())
}

/// `δ = max_T C_K(T) h_T / (√(f μ) π)` with `f = 2` for
/// [`StiffnessFloor::TwoMu`] and `f = 1` for [`StiffnessFloor::Mu`].
pub fn delta_elasticity(
    m: &Mesh,
    mu: f64,
    floor: StiffnessFloor,
) -> Result<DeltaBound, BoundsError> {
    if !(mu > 0.0) {
        return Err(BoundsError::OutOfRange(format!(
            "mu must be positive, got {mu}"
        )));
    }
    if m.num_cells() == 0 {
        return Err(BoundsError::OutOfRange("mesh has no cells".into()));
    }
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0, 0.0);
    for t in 0..m.num_cells() {
        let g = cell_geometry(m, t)?;
        let korn = korn_bound(triangle_param_d(&g, m.cell_points(t)))?;
        let v = korn * g.diameter;
        if v > best.0 {
            best = (v, t, korn, g.diameter);
        }
    }
    Ok(DeltaBound::from_ingredients(
        BoundProblem::Elasticity,
        Ingredients::Elasticity {
            mu,
            floor,
            cell: best.1,
            korn: best.2,
            h_t: best.3,
        },
    ))
}

fn trace_const_unchecked(meas_f: f64, meas_t: f64, h_t: f64, n: usize) -> f64 {
    let nf = n as f64;
    (meas_f / meas_t).sqrt() * h_t * ((nf + 2.0 * PI) / (nf * PI * PI)).sqrt()
}

/// Trace inequality constant `√(|F|/|T|) h_T √((n + 2π)/(n π²))` for a
/// face `F` of a simplex `T` in `n` dimensions.
pub fn trace_const(meas_f: f64, meas_t: f64, h_t: f64, n: usize) -> Result<f64, BoundsError> {
    if !(meas_f > 0.0 && meas_t > 0.0 && h_t > 0.0) || n < 2 {
        return Err(BoundsError::OutOfRange(format!(
            "need positive measures and n >= 2, got |F|={meas_f}, |T|={meas_t}, h_T={h_t}, n={n}"
        )));
    }
    Ok(trace_const_unchecked(meas_f, meas_t, h_t, n))
}

/// Steklov `δ` on a triangle mesh: `√(m − 1)` times the largest trace
/// constant over Steklov facets and their cells, with `m = 3` faces.
pub fn delta_steklov(m: &Mesh, face_measure: TraceFaceMeasure) -> Result<DeltaBound, BoundsError> {
    delta_steklov_with_faces(m, face_measure, 3)
}

pub fn delta_steklov_with_faces(
    m: &Mesh,
    face_measure: TraceFaceMeasure,
    faces: usize,
) -> Result<DeltaBound, BoundsError> {
    if faces < 2 {
        return Err(BoundsError::OutOfRange(format!(
            "need at least two faces, got {faces}"
        )));
    }
    let facets = m.facets_with_label(FacetLabel::Steklov);
    if facets.is_empty() {
        return Err(BoundsError::NoSteklovFacets);
    }
    let mut best: Option<(f64, Ingredients)> = None;
    for f in facets {
        let t = m.facet_cell(f);
        let g = cell_geometry(m, t)?;
        let meas_f = m.edge_length(m.facet_edge(f));
        let ing = Ingredients::Steklov {
            faces,
            facet: f,
            face_measure,
            meas_f,
            meas_t: g.area,
            h_t: g.diameter,
        };
        let probe = DeltaBound {
            delta_sq: 0.0,
            problem: BoundProblem::Steklov,
            ingredients: ing,
        }
        .recompute();
        if best.is_none_or(|(b, _)| probe > b) {
            best = Some((probe, ing));
        }
    }
    let (_, ing) = best.expect("at least one facet");
    Ok(DeltaBound::from_ingredients(BoundProblem::Steklov, ing))
}

/// One row of a bound table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub level: usize,
    pub h: f64,
    pub lambda_h: f64,
    pub delta_sq: f64,
    pub lower: f64,
    pub upper: Option<f64>,
    pub gamma0: f64,
}

/// Discrete data of one refinement level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelData {
    pub level: usize,
    pub h: f64,
    pub lambda_h: f64,
    pub upper: Option<f64>,
}

/// Applies the (shifted, when `gamma0 > 0`) transform level by level and
/// checks `lower <= lambda_h` and `lower <= upper`.
pub fn assemble_report(
    levels: &[LevelData],
    deltas: &[DeltaBound],
    gamma0: f64,
) -> Result<Vec<BoundReport>, BoundsError> {
    if levels.len() != deltas.len() {
        return Err(BoundsError::Length(levels.len(), deltas.len()));
    }
    levels
        .iter()
        .zip(deltas)
        .map(|(l, d)| {
            let lower = if gamma0 > 0.0 {
                lb_transform_shifted(l.lambda_h, d.delta_sq, gamma0)?
            } else {
                lb_transform(l.lambda_h, d.delta_sq)
            };
            if !(lower <= l.lambda_h) {
                return Err(BoundsError::Invariant {
                    level: l.level,
                    msg: format!("lower bound {lower} exceeds lambda_h {}", l.lambda_h),
                });
            }
            if let Some(u) = l.upper {
                if !(lower <= u) {
                    return Err(BoundsError::Invariant {
                        level: l.level,
                        msg: format!("lower bound {lower} exceeds upper bound {u}"),
                    });
                }
            }
            Ok(BoundReport {
                level: l.level,
                h: l.h,
                lambda_h: l.lambda_h,
                delta_sq: d.delta_sq,
                lower,
                upper: l.upper,
                gamma0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_examples() {
        assert_eq!(lb_transform(3.0, 0.0), 3.0);
        assert_eq!(lb_transform(0.0, 5.0), 0.0);
        let lb = lb_transform(9.61746, 1.97887e-4);
        assert!((lb - 9.59919).abs() < 1e-5);
        let s = lb_transform_shifted(13.4656, 0.0506606, 4.0).unwrap();
        assert!((s - 10.3977).abs() < 1e-4);
        assert!(matches!(
            lb_transform_shifted(3.0, 0.1, 4.0),
            Err(BoundsError::BelowShift { .. })
        ));
    }

    #[test]
    fn constants() {
        let d = 1.0 / (4.0 + 2.0 * 2f64.sqrt()).sqrt();
        assert!((cdiv_bound(d).unwrap() - 5.1259).abs() < 5e-4);
        assert!((korn_bound(d).unwrap() - 7.318).abs() < 5e-4);
        assert!((cdiv_bound(1.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((korn_bound(1.0).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(cdiv_bound(0.0).is_err());
        assert!(korn_bound(1.5).is_err());
    }

    #[test]
    fn delta_laplace_values() {
        let d = delta_laplace(PI, ConstantChoice::Pi).unwrap();
        assert!((d.delta_sq - 1.0).abs() < 1e-15);
        let b = delta_laplace(PI, ConstantChoice::BesselJ11).unwrap();
        assert!(b.delta_sq < d.delta_sq);
        assert!(delta_laplace(0.0, ConstantChoice::Pi).is_err());
    }

    #[test]
    fn trace_const_leg() {
        let v = trace_const(1.0, 0.5, 2f64.sqrt(), 2).unwrap();
        assert!((v - 1.29557).abs() < 1e-5);
        assert!(trace_const(0.0, 1.0, 1.0, 2).is_err());
    }
}
