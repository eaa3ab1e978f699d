//! Reflection laws and the transverse line fields that parametrize them.
//!
//! Every law is realized through the same linear involution: fix the tangent
//! hyperplane pointwise and negate the transverse direction `ν` normalized so
//! that `⟨ν|n⟩ = 1`. The Euclidean mirror law takes `ν = n`; a constant
//! nondegenerate form `Q` takes `ν` along the `Q`-orthogonal line; custom
//! fields supply `ν` componentwise as expressions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geom::QuadraticForm;
use crate::surface::ImplicitSurface;

/// Threshold on `⟨w|n⟩` under which a transverse direction counts as
/// tangent/light-like and the reflection is undefined.
pub const TRANSVERSALITY_FLOOR: f64 = 1e-9;
/// Threshold on `|⟨v|n⟩|` under which an incoming ray counts as grazing.
pub const GRAZING_FLOOR: f64 = 1e-9;

/// How field derivatives are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Closed-form derivatives (exact up to the surface Hessian).
    Analytic,
    /// Central differences of the field along projected tangent offsets,
    /// step `1e-5·(1 + |q|)`.
    FiniteDifference,
}

/// A field of transverse lines over a surface, encoded by the direction `ν`
/// with `⟨ν|n⟩ = 1`.
#[derive(Debug, Clone)]
pub enum TransverseField {
    /// `ν = n`: the Euclidean mirror law.
    Euclidean,
    /// `ν` spans the `Q`-orthogonal line to the tangent plane.
    QNormal(QuadraticForm),
    /// `ν` from user expressions, renormalized at evaluation time.
    Custom(Vec<Expression>),
}

impl TransverseField {
    /// The normalized transverse direction at a surface point.
    pub fn nu(&self, surface: &ImplicitSurface, q: &DVector<f64>) -> Result<DVector<f64>> {
        let n = surface.unit_normal(q)?;
        match self {
            TransverseField::Euclidean => Ok(n),
            TransverseField::QNormal(form) => nu_from_q_normal(form, &n),
            TransverseField::Custom(components) => {
                let w = eval_components(components, q)?;
                normalize_against(&w, &n)
            }
        }
    }

    /// Derivative `dν(u)` of the field along a tangent direction `u` at `q`.
    pub fn nu_derivative(
        &self,
        surface: &ImplicitSurface,
        q: &DVector<f64>,
        u: &DVector<f64>,
        mode: DerivativeMode,
    ) -> Result<DVector<f64>> {
        match mode {
            DerivativeMode::FiniteDifference => {
                let h = 1e-5 * (1.0 + q.norm());
                let qp = surface.project(&(q + h * u))?;
                let qm = surface.project(&(q - h * u))?;
                Ok((self.nu(surface, &qp)? - self.nu(surface, &qm)?) / (2.0 * h))
            }
            DerivativeMode::Analytic => match self {
                TransverseField::Euclidean => surface.normal_derivative(q, u),
                TransverseField::QNormal(form) => {
                    let n = surface.unit_normal(q)?;
                    let dn = surface.normal_derivative(q, u)?;
                    let m = form.inverse()?;
                    let mn = &m * &n;
                    let s = mn.dot(&n);
                    if s.abs() < TRANSVERSALITY_FLOOR {
                        return Err(Error::LightLikeNormal);
                    }
                    let lambda = 1.0 / s;
                    let mdn = &m * &dn;
                    Ok(lambda * &mdn - 2.0 * lambda * lambda * mn.dot(&dn) * &mn)
                }
                TransverseField::Custom(components) => {
                    let n = surface.unit_normal(q)?;
                    let dn = surface.normal_derivative(q, u)?;
                    let w = eval_components(components, q)?;
                    let s = w.dot(&n);
                    if s.abs() < TRANSVERSALITY_FLOOR * (1.0 + w.norm()) {
                        return Err(Error::LightLikeNormal);
                    }
                    // Jacobian of the raw field applied to u.
                    let mut jw_u = DVector::zeros(q.len());
                    for (i, component) in components.iter().enumerate() {
                        let (_, grad) = component.eval_with_gradient(q)?;
                        jw_u[i] = grad.dot(u);
                    }
                    let ds = jw_u.dot(&n) + w.dot(&dn);
                    Ok(&jw_u / s - &w * (ds / (s * s)))
                }
            },
        }
    }
}

fn eval_components(components: &[Expression], q: &DVector<f64>) -> Result<DVector<f64>> {
    if components.len() != q.len() {
        return Err(Error::Input(format!(
            "field has {} components, point has dimension {}",
            components.len(),
            q.len()
        )));
    }
    let mut w = DVector::zeros(q.len());
    for (i, component) in components.iter().enumerate() {
        w[i] = component.eval(q)?;
    }
    Ok(w)
}

fn normalize_against(w: &DVector<f64>, n: &DVector<f64>) -> Result<DVector<f64>> {
    let s = w.dot(n);
    if s.abs() < TRANSVERSALITY_FLOOR * (1.0 + w.norm()) {
        return Err(Error::LightLikeNormal);
    }
    Ok(w / s)
}

/// The transverse direction of the `Q`-orthogonal line: `ν = Mn / ⟨Mn|n⟩`
/// with `M` the inverse matrix of `Q`. Fails when the normal is light-like.
pub fn nu_from_q(
    form: &QuadraticForm,
    surface: &ImplicitSurface,
    q: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = surface.unit_normal(q)?;
    nu_from_q_normal(form, &n)
}

fn nu_from_q_normal(form: &QuadraticForm, n: &DVector<f64>) -> Result<DVector<f64>> {
    let m = form.inverse()?;
    let mn = &m * n;
    let s = mn.dot(n);
    if s.abs() < TRANSVERSALITY_FLOOR {
        return Err(Error::LightLikeNormal);
    }
    Ok(mn / s)
}

/// The projective reflection: the unique nontrivial linear involution fixing
/// the tangent hyperplane pointwise and negating `ν`. Input and output
/// directions are unit vectors.
pub fn projective_reflect(
    v: &DVector<f64>,
    n: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let vn = v.dot(n);
    if vn.abs() < GRAZING_FLOOR {
        return Err(Error::GrazingHit);
    }
    let reflected = v - 2.0 * vn * nu;
    let norm = reflected.norm();
    if norm < 1e-14 {
        return Err(Error::Numerical("reflected direction vanished".into()));
    }
    Ok(reflected / norm)
}

/// Reflection with respect to a constant nondegenerate form: negate the
/// `Q`-normal component of `v`. `n_q` spans the `Q`-orthogonal line to the
/// tangent plane; it need not be normalized.
pub fn pseudo_reflect(
    v: &DVector<f64>,
    form: &QuadraticForm,
    n_q: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n_hat = n_q.normalize();
    let qnn = form.apply(&n_hat, &n_hat);
    if qnn.abs() < TRANSVERSALITY_FLOOR {
        return Err(Error::LightLikeNormal);
    }
    let reflected = v - (2.0 * form.apply(v, &n_hat) / qnn) * &n_hat;
    let norm = reflected.norm();
    if norm < 1e-14 {
        return Err(Error::Numerical("reflected direction vanished".into()));
    }
    Ok(reflected / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{cross_ratio, CentralQuadric, OrientedLine};
    use crate::surface::{ImplicitSurface, SurfaceField};
    use approx::assert_relative_eq;
    use rand::{rngs::StdRng, Rng, SeedableRng};

    fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    fn minkowski() -> QuadraticForm {
        QuadraticForm::diagonal(&[1.0, 1.0, -1.0]).unwrap()
    }

    #[test]
    fn euclidean_mirror() {
        let n = v3(0.0, 0.0, 1.0);
        let v = v3(1.0, 0.0, -1.0) / 2.0f64.sqrt();
        let out = projective_reflect(&v, &n, &n).unwrap();
        let want = v3(1.0, 0.0, 1.0) / 2.0f64.sqrt();
        assert_relative_eq!((out - want).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn projective_reflection_with_slanted_field() {
        let n = v3(0.0, 0.0, 1.0);
        let nu = v3(1.0, 0.0, 1.0);
        let v = v3(0.0, 0.0, -1.0);
        let out = projective_reflect(&v, &n, &nu).unwrap();
        let want = v3(2.0, 0.0, 1.0).normalize();
        assert_relative_eq!((out - want).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reflection_laws_are_involutions() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..1000 {
            let n = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            // Transverse nu with ⟨ν|n⟩ = 1.
            let mut w = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if w.dot(&n).abs() < 0.2 {
                w += &n;
            }
            let nu = &w / w.dot(&n);
            let v = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            if v.dot(&n).abs() < 1e-3 {
                continue;
            }
            let once = projective_reflect(&v, &n, &nu).unwrap();
            let twice = projective_reflect(&once, &n, &nu).unwrap();
            assert!(
                (twice - &v).norm() <= 1e-10,
                "projective law not involutive"
            );

            let q = minkowski();
            let n_q = q.inverse().unwrap() * &n;
            if q.apply(&n_q.normalize(), &n_q.normalize()).abs() < 1e-2 {
                continue;
            }
            let once = pseudo_reflect(&v, &q, &n_q).unwrap();
            let twice = pseudo_reflect(&once, &q, &n_q).unwrap();
            assert!((twice - &v).norm() <= 1e-10, "pseudo law not involutive");
        }
    }

    #[test]
    fn tangential_part_is_fixed() {
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..200 {
            let n = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let mut t = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            t -= &n * t.dot(&n);
            if t.norm() < 1e-3 {
                continue;
            }
            let mut w = v3(0.3, -0.2, 0.9);
            if w.dot(&n).abs() < 0.2 {
                w += 2.0 * &n;
            }
            let nu = &w / w.dot(&n);
            // Reflect t + s·ν without normalization: the tangential part
            // must come back unchanged, the ν part negated.
            let s = 0.7;
            let input = &t + s * &nu;
            let reflected = &input - 2.0 * input.dot(&n) * &nu;
            let want = &t - s * &nu;
            assert!((reflected - want).norm() <= 1e-10);
        }
    }

    #[test]
    fn q_normal_direction_on_slanted_plane() {
        // Plane z = 2x has Euclidean normal (−2, 0, 1)/√5; the Q-orthogonal
        // direction for diag(1,1,−1) is ∝ (2, 0, 1) and ν = (−2,0,−1)·√5/3.
        let n = v3(-2.0, 0.0, 1.0) / 5.0f64.sqrt();
        let m = minkowski().inverse().unwrap();
        let mn = &m * &n;
        let s = mn.dot(&n);
        assert_relative_eq!(s, 3.0 / 5.0, epsilon = 1e-12);
        let nu = mn / s;
        let want = v3(-2.0, 0.0, -1.0) * (5.0f64.sqrt() / 3.0);
        assert_relative_eq!((nu.clone() - want).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(nu.dot(&n), 1.0, epsilon = 1e-12);
        // ν spans the Q-orthogonal of the tangent plane: Q(ν, t) = 0 for
        // tangent directions t.
        let q = minkowski();
        for t in [v3(1.0, 0.0, 2.0), v3(0.0, 1.0, 0.0)] {
            assert_relative_eq!(q.apply(&nu, &t), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn light_like_plane_is_rejected() {
        // Plane z = x: the Q-orthogonal direction (1,0,1) is light-like.
        let n = v3(-1.0, 0.0, 1.0) / 2.0f64.sqrt();
        let m = minkowski().inverse().unwrap();
        let mn = &m * &n;
        assert!(mn.dot(&n).abs() < 1e-12);
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        // Find the light-like point on the ellipsoid in the x-z plane:
        // x²/16 + y²/4 = z² with x²/4 + z² = 1.
        let x = 4.0 / 5.0f64.sqrt();
        let z = 1.0 / 5.0f64.sqrt();
        let q_pt = v3(x, 0.0, z);
        assert!(matches!(
            nu_from_q(&minkowski(), &surface, &q_pt),
            Err(Error::LightLikeNormal)
        ));
    }

    #[test]
    fn pseudo_reflection_example() {
        let v = v3(0.0, 0.0, 1.0);
        let n_q = v3(2.0, 0.0, 1.0);
        let out = pseudo_reflect(&v, &minkowski(), &n_q).unwrap();
        let want = v3(4.0 / 3.0, 0.0, 5.0 / 3.0).normalize();
        assert_relative_eq!((out - want).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pseudo_law_reduces_to_mirror_for_identity_form() {
        let mut rng = StdRng::seed_from_u64(8);
        let id = QuadraticForm::identity(3);
        for _ in 0..200 {
            let n = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let v = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            if v.dot(&n).abs() < 1e-3 {
                continue;
            }
            let mirror = projective_reflect(&v, &n, &n).unwrap();
            let pseudo = pseudo_reflect(&v, &id, &n).unwrap();
            assert!((mirror - pseudo).norm() <= 1e-12);
        }
    }

    #[test]
    fn pseudo_law_matches_projective_law_through_nu() {
        let mut rng = StdRng::seed_from_u64(9);
        let q = minkowski();
        let m = q.inverse().unwrap();
        let mut checked = 0;
        while checked < 1000 {
            let n = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let mn = &m * &n;
            if mn.dot(&n).abs() < 0.05 {
                continue; // keep to the space-time region
            }
            let v = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            if v.dot(&n).abs() < 1e-3 {
                continue;
            }
            let nu = &mn / mn.dot(&n);
            let a = projective_reflect(&v, &n, &nu).unwrap();
            let b = pseudo_reflect(&v, &q, &mn).unwrap();
            assert!((a - b).norm() <= 1e-10);
            checked += 1;
        }
    }

    #[test]
    fn isotropy_class_is_preserved() {
        let mut rng = StdRng::seed_from_u64(10);
        let q = minkowski();
        let m = q.inverse().unwrap();
        let mut checked = 0;
        while checked < 500 {
            let n = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let n_q = &m * &n;
            let n_hat = n_q.normalize();
            if q.apply(&n_hat, &n_hat).abs() < 0.05 {
                continue;
            }
            let v = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            if v.dot(&n).abs() < 1e-3 {
                continue;
            }
            // Sign of Q(v,v) before normalization: compare unnormalized
            // reflections to dodge the scale factor.
            let qvv = q.apply(&v, &v);
            let reflected = &v - (2.0 * q.apply(&v, &n_hat) / q.apply(&n_hat, &n_hat)) * &n_hat;
            let qrr = q.apply(&reflected, &reflected);
            assert!(
                (qvv - qrr).abs() <= 1e-10 * qvv.abs().max(1.0),
                "Q-length not preserved: {qvv} vs {qrr}"
            );
            checked += 1;
        }
    }

    #[test]
    fn reflection_quadruple_is_harmonic() {
        let mut rng = StdRng::seed_from_u64(11);
        let origin = v3(1.3, -0.4, 0.2);
        let mut checked = 0;
        while checked < 300 {
            let n = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let mut w = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if w.dot(&n).abs() < 0.2 {
                w += &n;
            }
            let nu = &w / w.dot(&n);
            let v = v3(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let vn = v.dot(&n);
            if vn.abs() < 1e-2 {
                continue;
            }
            let tangent = &v - vn * &nu;
            if tangent.norm() < 1e-2 {
                continue;
            }
            let out = projective_reflect(&v, &n, &nu).unwrap();
            let lines = [
                OrientedLine::new(origin.clone(), v.clone()).unwrap(),
                OrientedLine::new(origin.clone(), out).unwrap(),
                OrientedLine::new(origin.clone(), tangent).unwrap(),
                OrientedLine::new(origin.clone(), nu.clone()).unwrap(),
            ];
            let c = cross_ratio(&lines).unwrap();
            assert!((c + 1.0).abs() <= 1e-10, "cross-ratio {c} is not harmonic");
            checked += 1;
        }
    }

    #[test]
    fn euclidean_field_nu_is_normal() {
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        let q = surface.project(&v3(1.1, 0.9, 0.3)).unwrap();
        let nu = TransverseField::Euclidean.nu(&surface, &q).unwrap();
        let n = surface.unit_normal(&q).unwrap();
        assert_relative_eq!((nu.clone() - &n).norm(), 0.0, epsilon = 1e-12);
        // The identity form routes through the same direction.
        let through_form = nu_from_q(&QuadraticForm::identity(3), &surface, &q).unwrap();
        assert_relative_eq!((through_form - n).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn custom_field_is_renormalized() {
        use crate::expr::parse_expression;
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[1.0, 1.0, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        // Raw field 3·q has ⟨w|n⟩ = 3 on the unit sphere; nu must come back
        // normalized to ⟨ν|n⟩ = 1.
        let field = TransverseField::Custom(vec![
            parse_expression("3*x1", 3).unwrap(),
            parse_expression("3*x2", 3).unwrap(),
            parse_expression("3*x3", 3).unwrap(),
        ]);
        let q = v3(0.0, 1.0, 0.0);
        let nu = field.nu(&surface, &q).unwrap();
        let n = surface.unit_normal(&q).unwrap();
        assert_relative_eq!(nu.dot(&n), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn analytic_and_fd_field_derivatives_agree() {
        use crate::expr::parse_expression;
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        let fields = [
            TransverseField::Euclidean,
            TransverseField::QNormal(minkowski()),
            TransverseField::Custom(vec![
                parse_expression("x1 + 0.2*x2", 3).unwrap(),
                parse_expression("x2", 3).unwrap(),
                parse_expression("x3 + x2^2", 3).unwrap(),
            ]),
        ];
        let q = surface.project(&v3(1.2, 0.8, 0.4)).unwrap();
        let n = surface.unit_normal(&q).unwrap();
        let basis = crate::surface::tangent_basis(&n);
        for field in &fields {
            for u in &basis {
                let a = field
                    .nu_derivative(&surface, &q, u, DerivativeMode::Analytic)
                    .unwrap();
                let f = field
                    .nu_derivative(&surface, &q, u, DerivativeMode::FiniteDifference)
                    .unwrap();
                assert!(
                    (&a - &f).norm() <= 1e-5 * (1.0 + a.norm()),
                    "derivative mismatch: analytic {a:?} vs fd {f:?}"
                );
            }
        }
    }

    #[test]
    fn grazing_direction_is_rejected() {
        let n = v3(0.0, 0.0, 1.0);
        let v = v3(1.0, 0.0, 0.0);
        assert!(matches!(
            projective_reflect(&v, &n, &n),
            Err(Error::GrazingHit)
        ));
    }
}
