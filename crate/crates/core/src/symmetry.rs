//! The transverse-symmetry criterion: the pairing `⟨dn(u)|dν(v)⟩` must be
//! symmetric in `(u, v)` at every boundary point.
//!
//! The defect at a point is the largest antisymmetric part over pairs of an
//! orthonormal tangent basis. Fields of metric-normal or form-normal type
//! make it vanish identically; generic custom fields do not.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::ray_intersect;
use crate::geom::QuadraticForm;
use crate::reflect::{DerivativeMode, TransverseField};
use crate::surface::{tangent_basis, ImplicitSurface};

/// Symmetry defect at `q`: the maximum over orthonormal tangent-basis pairs
/// `(u, v)` of `|⟨dn(u)|dν(v)⟩ − ⟨dn(v)|dν(u)⟩|`.
pub fn symmetry_defect(
    surface: &ImplicitSurface,
    field: &TransverseField,
    q: &DVector<f64>,
    mode: DerivativeMode,
) -> Result<f64> {
    let q = surface.project(q)?;
    let n = surface.unit_normal(&q)?;
    let basis = tangent_basis(&n);
    symmetry_defect_in_basis(surface, field, &q, &basis, mode)
}

/// Same defect, in a caller-supplied orthonormal tangent basis.
pub fn symmetry_defect_in_basis(
    surface: &ImplicitSurface,
    field: &TransverseField,
    q: &DVector<f64>,
    basis: &[DVector<f64>],
    mode: DerivativeMode,
) -> Result<f64> {
    let dn: Vec<DVector<f64>> = basis
        .iter()
        .map(|u| surface.normal_derivative(q, u))
        .collect::<Result<_>>()?;
    let dnu: Vec<DVector<f64>> = basis
        .iter()
        .map(|u| field.nu_derivative(surface, q, u, mode))
        .collect::<Result<_>>()?;
    let mut worst = 0.0f64;
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            let defect = (dn[i].dot(&dnu[j]) - dn[j].dot(&dnu[i])).abs();
            worst = worst.max(defect);
        }
    }
    Ok(worst)
}

/// Derivative-norm scale used to keep the symmetry tolerance meaningful on
/// highly curved tables: `max(1, ‖dn‖·‖dν‖)` over the tangent basis.
pub fn defect_scale(
    surface: &ImplicitSurface,
    field: &TransverseField,
    q: &DVector<f64>,
    mode: DerivativeMode,
) -> Result<f64> {
    let q = surface.project(q)?;
    let n = surface.unit_normal(&q)?;
    let basis = tangent_basis(&n);
    let mut dn_norm = 0.0f64;
    let mut dnu_norm = 0.0f64;
    for u in &basis {
        dn_norm = dn_norm.max(surface.normal_derivative(&q, u)?.norm());
        dnu_norm = dnu_norm.max(field.nu_derivative(surface, &q, u, mode)?.norm());
    }
    Ok((dn_norm * dnu_norm).max(1.0))
}

/// Closed-form pairing `⟨dν(x)|dn(y)⟩` for a form-normal field
/// `ν = Mn/⟨Mn|n⟩`: with `λ = 1/⟨Mn|n⟩`,
///
/// ```text
/// ⟨dν(x)|dn(y)⟩ = λ ⟨M dn(x)|dn(y)⟩ − 2λ² ⟨Mn|dn(x)⟩⟨Mn|dn(y)⟩
/// ```
///
/// which is symmetric in `(x, y)` because `M` is.
pub fn q_normal_pairing(
    form: &QuadraticForm,
    surface: &ImplicitSurface,
    q: &DVector<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let n = surface.unit_normal(q)?;
    let m = form.inverse()?;
    let mn = &m * &n;
    let s = mn.dot(&n);
    if s.abs() < crate::reflect::TRANSVERSALITY_FLOOR {
        return Err(Error::LightLikeNormal);
    }
    let lambda = 1.0 / s;
    let dnx = surface.normal_derivative(q, x)?;
    let dny = surface.normal_derivative(q, y)?;
    Ok(lambda * (&m * &dnx).dot(&dny) - 2.0 * lambda * lambda * mn.dot(&dnx) * mn.dot(&dny))
}

/// Result of a whole-surface symmetry scan.
#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub symmetric: bool,
    pub worst_defect: f64,
    pub worst_point: Vec<f64>,
    #[serde(skip_serializing_if = "is_zero")]
    pub skipped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// Scan the surface with a deterministic low-discrepancy sample of boundary
/// points (rays from `anchor` along Halton-generated directions) and test
/// the defect against `tol` scaled by the local derivative norms. Points
/// where the field is undefined (light-like locus) are skipped and counted.
pub fn is_l_symmetric(
    surface: &ImplicitSurface,
    field: &TransverseField,
    anchor: &DVector<f64>,
    samples: usize,
    tol: f64,
    mode: DerivativeMode,
    seed: u64,
) -> Result<SymmetryReport> {
    if samples == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    if surface.value(anchor)? >= 0.0 {
        return Err(Error::Input("anchor must be strictly interior".into()));
    }
    let d = surface.dimension();
    let mut worst_defect = -1.0f64;
    let mut worst_point = DVector::zeros(d);
    let mut skipped = 0usize;
    let mut symmetric = true;
    for k in 0..samples {
        let dir = halton_direction(d, k as u64 + seed.wrapping_mul(samples as u64) + 1);
        let Ok((q, _)) = ray_intersect(surface, anchor, &dir, None) else {
            skipped += 1;
            continue;
        };
        match symmetry_defect(surface, field, &q, mode) {
            Ok(defect) => {
                let scale = defect_scale(surface, field, &q, mode)?;
                if defect > tol * scale {
                    symmetric = false;
                }
                if defect > worst_defect {
                    worst_defect = defect;
                    worst_point = q;
                }
            }
            Err(Error::LightLikeNormal) => {
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if worst_defect < 0.0 {
        return Err(Error::Numerical(
            "no usable sample points on the surface".into(),
        ));
    }
    Ok(SymmetryReport {
        symmetric,
        worst_defect,
        worst_point: worst_point.iter().cloned().collect(),
        skipped,
    })
}

// ── Deterministic direction sampling ───────────────────────────────────────

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn halton(index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Rational approximation of the standard normal quantile (Acklam).
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p > 1.0 - 0.02425 {
        -normal_quantile(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Deterministic near-uniform direction on the unit sphere in dimension `d`.
pub(crate) fn halton_direction(d: usize, index: u64) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    loop {
        for i in 0..d {
            v[i] = normal_quantile(halton(index, PRIMES[i % PRIMES.len()]));
        }
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}
