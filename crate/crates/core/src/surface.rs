//! Differential geometry of the table boundary: implicit surfaces, normals,
//! shape operator and principal curvature data.
//!
//! Surfaces are level sets `F = 0` with an orientation sign fixing the
//! billiard interior on the side where `F < 0`; the unit normal then points
//! away from the interior. With that convention the unit sphere (interior
//! inside) has outward normal and principal curvatures `+1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geom::CentralQuadric;

/// Gradient-norm floor below which a point counts as singular.
pub const GRADIENT_FLOOR: f64 = 1e-8;
/// Newton projection target residual.
pub const PROJECTION_TOL: f64 = 1e-11;
/// Largest residual accepted for a point claimed to be on the surface.
pub const ON_SURFACE_TOL: f64 = 1e-9;
/// Relative threshold for flagging a degenerate second fundamental form.
pub const DEGENERACY_TOL: f64 = 1e-6;

/// Defining function of an implicit surface.
#[derive(Debug, Clone)]
pub enum SurfaceField {
    /// `xᵀAx − 1` with exact gradient and Hessian.
    Quadric(CentralQuadric),
    /// A parsed expression; gradient is exact, the Hessian comes from
    /// central differences of the gradient.
    Implicit(Expression),
}

/// A hypersurface `{F = 0}` with an orientation sign `σ ∈ {+1, −1}`; the
/// billiard interior is the side where `σ·F < 0`.
#[derive(Debug, Clone)]
pub struct ImplicitSurface {
    field: SurfaceField,
    dimension: usize,
    sigma: f64,
}

/// Principal curvature data at a surface point: outward unit normal,
/// orthonormal principal directions, curvatures sorted descending and the
/// second fundamental form expressed in the principal basis.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub normal: DVector<f64>,
    pub basis: Vec<DVector<f64>>,
    pub curvatures: Vec<f64>,
    pub second_fundamental: DMatrix<f64>,
}

impl CurvatureData {
    /// True when the smallest principal curvature is negligible against the
    /// largest; degenerate data gates the cone analysis.
    pub fn is_degenerate(&self) -> bool {
        let max = self.curvatures.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        let min = self
            .curvatures
            .iter()
            .fold(f64::INFINITY, |m, k| m.min(k.abs()));
        min <= DEGENERACY_TOL * max.max(1.0)
    }
}

impl ImplicitSurface {
    pub fn new(field: SurfaceField, sigma: f64) -> Result<Self> {
        if sigma != 1.0 && sigma != -1.0 {
            return Err(Error::Input("orientation sign must be +1 or -1".into()));
        }
        let dimension = match &field {
            SurfaceField::Quadric(q) => q.dimension(),
            SurfaceField::Implicit(e) => e.dimension(),
        };
        if dimension < 2 {
            return Err(Error::Input("surface needs dimension >= 2".into()));
        }
        Ok(ImplicitSurface {
            field,
            dimension,
            sigma,
        })
    }

    /// Choose the orientation so that `interior` lies on the negative side.
    pub fn oriented_with_interior(field: SurfaceField, interior: &DVector<f64>) -> Result<Self> {
        let mut surface = Self::new(field, 1.0)?;
        let value = surface.value(interior)?;
        if value.abs() < 1e-12 {
            return Err(Error::Input(
                "interior point lies on the surface; cannot orient".into(),
            ));
        }
        if value > 0.0 {
            surface.sigma = -1.0;
        }
        Ok(surface)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn orientation(&self) -> f64 {
        self.sigma
    }

    pub fn field(&self) -> &SurfaceField {
        &self.field
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Input(format!(
                "point has dimension {}, surface expects {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// Oriented value `σ·F(x)`; negative strictly inside the table.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        match &self.field {
            SurfaceField::Quadric(q) => Ok(self.sigma * (q.eval(x)? - 1.0)),
            SurfaceField::Implicit(e) => Ok(self.sigma * e.eval(x)?),
        }
    }

    /// Oriented gradient `σ·∇F(x)`.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    pub fn value_and_gradient(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.check_dim(x)?;
        match &self.field {
            SurfaceField::Quadric(q) => {
                Ok((self.sigma * (q.eval(x)? - 1.0), self.sigma * q.gradient(x)))
            }
            SurfaceField::Implicit(e) => {
                let (v, g) = e.eval_with_gradient(x)?;
                Ok((self.sigma * v, self.sigma * g))
            }
        }
    }

    /// Hessian of the oriented defining function. Exact for quadrics; for
    /// expressions it is assembled from central differences of the exact
    /// gradient with step `1e-5·(1 + |x|)`.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        match &self.field {
            SurfaceField::Quadric(q) => Ok(self.sigma * 2.0 * q.matrix()),
            SurfaceField::Implicit(e) => {
                let h = 1e-5 * (1.0 + x.norm());
                let d = self.dimension;
                let mut hess = DMatrix::zeros(d, d);
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let (_, gp) = e.eval_with_gradient(&xp)?;
                    let (_, gm) = e.eval_with_gradient(&xm)?;
                    let col = (gp - gm) / (2.0 * h);
                    hess.column_mut(j).copy_from(&(self.sigma * col));
                }
                // Symmetrize: finite differences break symmetry at rounding level.
                let sym = 0.5 * (&hess + hess.transpose());
                Ok(sym)
            }
        }
    }

    /// Newton-project `x` onto the surface (at most 10 steps along the
    /// gradient direction).
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut q = x.clone();
        for _ in 0..10 {
            let (value, grad) = self.value_and_gradient(&q)?;
            if value.abs() <= PROJECTION_TOL {
                return Ok(q);
            }
            let g2 = grad.norm_squared();
            if g2.sqrt() < GRADIENT_FLOOR {
                return Err(Error::SingularPoint);
            }
            q -= grad * (value / g2);
        }
        let residual = self.value(&q)?;
        if residual.abs() <= ON_SURFACE_TOL {
            Ok(q)
        } else {
            Err(Error::Input(format!(
                "point is off the surface after projection: |F| = {:.3e}",
                residual.abs()
            )))
        }
    }

    /// Outward unit normal at `q` (the point is projected first).
    pub fn unit_normal(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let q = self.project(q)?;
        let grad = self.gradient(&q)?;
        let norm = grad.norm();
        if norm < GRADIENT_FLOOR {
            return Err(Error::SingularPoint);
        }
        Ok(grad / norm)
    }

    /// Derivative of the unit normal field along a tangent direction `u`:
    /// `dn(u) = (I − n nᵀ) H u / |∇F|`.
    pub fn normal_derivative(&self, q: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let grad = self.gradient(q)?;
        let norm = grad.norm();
        if norm < GRADIENT_FLOOR {
            return Err(Error::SingularPoint);
        }
        let n = grad / norm;
        let hu = self.hessian(q)? * u;
        Ok((&hu - &n * n.dot(&hu)) / norm)
    }

    /// Second fundamental form `II(uᵢ, uⱼ) = ⟨dn(uᵢ)|uⱼ⟩` in the given
    /// orthonormal tangent basis.
    pub fn shape_operator_matrix(
        &self,
        q: &DVector<f64>,
        basis: &[DVector<f64>],
    ) -> Result<DMatrix<f64>> {
        let grad = self.gradient(q)?;
        let norm = grad.norm();
        if norm < GRADIENT_FLOOR {
            return Err(Error::SingularPoint);
        }
        let hess = self.hessian(q)?;
        let m = basis.len();
        let mut ii = DMatrix::zeros(m, m);
        for (j, uj) in basis.iter().enumerate() {
            let huj = &hess * uj;
            for (i, ui) in basis.iter().enumerate() {
                // ⟨dn(uⱼ)|uᵢ⟩; the projector drops against tangent vectors.
                ii[(i, j)] = ui.dot(&huj) / norm;
            }
        }
        Ok(ii)
    }

    /// Principal curvature data at `q` (projected onto the surface first).
    pub fn curvature_data(&self, q: &DVector<f64>) -> Result<CurvatureData> {
        let q = self.project(q)?;
        let normal = self.unit_normal(&q)?;
        let frame = tangent_basis(&normal);
        let ii = self.shape_operator_matrix(&q, &frame)?;
        let sym = 0.5 * (&ii + ii.transpose());
        let eigen = sym.symmetric_eigen();

        let m = frame.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            eigen.eigenvalues[b]
                .partial_cmp(&eigen.eigenvalues[a])
                .expect("finite eigenvalues")
        });

        let mut curvatures = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        for &k in &order {
            curvatures.push(eigen.eigenvalues[k]);
            let col = eigen.eigenvectors.column(k);
            let mut dir = DVector::zeros(self.dimension);
            for (i, u) in frame.iter().enumerate() {
                dir += u * col[i];
            }
            basis.push(dir.normalize());
        }

        // Express II in the principal basis; numerically near-diagonal.
        let second_fundamental = self.shape_operator_matrix(&q, &basis)?;
        Ok(CurvatureData {
            normal,
            basis,
            curvatures,
            second_fundamental,
        })
    }
}

/// Deterministic orthonormal completion of the unit vector `n` to a basis of
/// its orthogonal complement.
pub fn tangent_basis(n: &DVector<f64>) -> Vec<DVector<f64>> {
    let d = n.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d - 1);
    for k in 0..d {
        if basis.len() == d - 1 {
            break;
        }
        let mut candidate = DVector::zeros(d);
        candidate[k] = 1.0;
        candidate -= n * n[k];
        for b in &basis {
            let dot = candidate.dot(b);
            candidate -= b * dot;
        }
        let norm = candidate.norm();
        if norm > 1e-6 {
            basis.push(candidate / norm);
        }
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use approx::assert_relative_eq;

    fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    fn unit_sphere() -> ImplicitSurface {
        ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[1.0, 1.0, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap()
    }

    fn ellipsoid() -> ImplicitSurface {
        ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn sphere_normal_is_radial_outward() {
        let s = unit_sphere();
        let n = s.unit_normal(&v3(0.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!((n - v3(0.0, 0.0, 1.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipsoid_normal_at_vertex() {
        let s = ellipsoid();
        let n = s.unit_normal(&v3(2.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!((n - v3(1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn far_off_surface_point_is_rejected() {
        let s = unit_sphere();
        // Newton projection from the center has a vanishing gradient.
        assert!(matches!(
            s.unit_normal(&v3(0.0, 0.0, 0.0)),
            Err(Error::SingularPoint)
        ));
        // Just off the center the first Newton step overshoots to radius
        // ~1/(2ε) and ten iterations cannot come back: off-surface input.
        assert!(matches!(
            s.project(&v3(1e-4, 0.0, 0.0)),
            Err(Error::Input(_))
        ));
        // Ordinary exterior points project back fine.
        let e = parse_expression("x3 - x1^2 - x2^2", 3).unwrap();
        let paraboloid = ImplicitSurface::new(SurfaceField::Implicit(e), 1.0).unwrap();
        assert!(paraboloid.unit_normal(&v3(0.0, 0.0, 1.0)).is_ok());
    }

    #[test]
    fn sphere_curvature_is_identity() {
        let s = unit_sphere();
        let data = s.curvature_data(&v3(0.6, -0.3, 0.7)).unwrap();
        assert_eq!(data.curvatures.len(), 2);
        for k in &data.curvatures {
            assert_relative_eq!(*k, 1.0, epsilon = 1e-9);
        }
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(data.second_fundamental[(i, j)], want, epsilon = 1e-9);
            }
        }
        assert!(!data.is_degenerate());
    }

    #[test]
    fn sphere_radii_scale_curvature() {
        for radius in [0.5, 1.0, 3.0] {
            let s = ImplicitSurface::oriented_with_interior(
                SurfaceField::Quadric(CentralQuadric::diagonal(&[
                    1.0 / (radius * radius),
                    1.0 / (radius * radius),
                    1.0 / (radius * radius),
                ])),
                &v3(0.0, 0.0, 0.0),
            )
            .unwrap();
            let data = s.curvature_data(&v3(radius, 0.0, 0.0)).unwrap();
            for k in &data.curvatures {
                assert_relative_eq!(*k, 1.0 / radius, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn cylinder_is_degenerate() {
        let s = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[1.0, 1.0, 0.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        let data = s.curvature_data(&v3(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(data.curvatures[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(data.curvatures[1], 0.0, epsilon = 1e-9);
        assert!(data.is_degenerate());
    }

    #[test]
    fn ellipsoid_vertex_curvatures_match_graph_oracle() {
        // At (2,0,0) the surface is the graph x1 = g(x2,x3) with
        // g = 2·sqrt(1 - x2²/2 - x3²); an independent second-difference
        // oracle on g gives the principal curvatures.
        let g = |y: f64, z: f64| 2.0 * (1.0 - y * y / 2.0 - z * z).sqrt();
        let h = 1e-4;
        let gyy = (g(h, 0.0) - 2.0 * g(0.0, 0.0) + g(-h, 0.0)) / (h * h);
        let gzz = (g(0.0, h) - 2.0 * g(0.0, 0.0) + g(0.0, -h)) / (h * h);
        // Outward normal is +e1 and the gradient of g vanishes at the
        // vertex, so the curvatures are -g_yy and -g_zz.
        let oracle = {
            let mut ks = [-gyy, -gzz];
            ks.sort_by(|a, b| b.partial_cmp(a).unwrap());
            ks
        };

        let s = ellipsoid();
        let data = s.curvature_data(&v3(2.0, 0.0, 0.0)).unwrap();
        assert!(data.curvatures.iter().all(|&k| k > 0.0));
        assert_relative_eq!(data.curvatures[0], oracle[0], epsilon = 1e-5);
        assert_relative_eq!(data.curvatures[1], oracle[1], epsilon = 1e-5);
        // Frozen values from the oracle: 2 and 1.
        assert_relative_eq!(data.curvatures[0], 2.0, epsilon = 1e-6);
        assert_relative_eq!(data.curvatures[1], 1.0, epsilon = 1e-6);

        // Principal basis is orthonormal and diagonalizes II.
        for (i, u) in data.basis.iter().enumerate() {
            for (j, v) in data.basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(u.dot(v), want, epsilon = 1e-10);
            }
            assert_relative_eq!(u.dot(&data.normal), 0.0, epsilon = 1e-10);
        }
        assert_relative_eq!(data.second_fundamental[(0, 1)], 0.0, epsilon = 1e-8);
        assert_relative_eq!(data.second_fundamental[(1, 0)], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn second_fundamental_form_is_symmetric_on_random_tables() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(3);
        let exprs = [
            "x1^2/4 + x2^2/2 + x3^2 - 1 + 0.1*sin(x1)*cos(x2)",
            "x1^2 + x2^2 + x3^2 - 1 + 0.05*sinh(x3/2)",
        ];
        for text in exprs {
            let e = parse_expression(text, 3).unwrap();
            let s = ImplicitSurface::oriented_with_interior(
                SurfaceField::Implicit(e),
                &v3(0.0, 0.0, 0.0),
            )
            .unwrap();
            for _ in 0..250 {
                let raw = v3(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if raw.norm() < 0.1 {
                    continue;
                }
                // Walk outward until a sign change, then project.
                let dir = raw.normalize();
                let mut probe = dir.clone();
                let mut tries = 0;
                while s.value(&probe).unwrap() < 0.0 && tries < 60 {
                    probe += 0.1 * &dir;
                    tries += 1;
                }
                let Ok(q) = s.project(&probe) else { continue };
                let n = s.unit_normal(&q).unwrap();
                let basis = tangent_basis(&n);
                let ii = s.shape_operator_matrix(&q, &basis).unwrap();
                let asym = (&ii - ii.transpose()).amax();
                assert!(asym <= 1e-8, "II asymmetry {asym} at {q:?} on {text}");
            }
        }
    }

    #[test]
    fn curvature_trace_is_rotation_invariant() {
        // Compare Σkᵢ on an ellipsoid against a rotated copy.
        let angle = 0.73_f64;
        let (c, s_) = (angle.cos(), angle.sin());
        let rot = DMatrix::from_row_slice(3, 3, &[c, -s_, 0.0, s_, c, 0.0, 0.0, 0.0, 1.0]);
        let a = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.25, 0.5, 1.0]));
        let a_rot = &rot * &a * rot.transpose();

        let base = ellipsoid();
        let rotated = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::new(a_rot).unwrap()),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();

        for probe in [v3(2.0, 0.0, 0.0), v3(0.0, 1.4, 0.1), v3(1.0, 0.7, 0.5)] {
            let q = base.project(&probe).unwrap();
            let k_base: f64 = base.curvature_data(&q).unwrap().curvatures.iter().sum();
            let q_rot = &rot * &q;
            let k_rot: f64 = rotated
                .curvature_data(&q_rot)
                .unwrap()
                .curvatures
                .iter()
                .sum();
            assert_relative_eq!(k_base, k_rot, epsilon = 1e-6);
        }
    }

    #[test]
    fn degeneracy_flag_threshold() {
        // k = (1, t): flag exactly when t <= 1e-6·max(1, 1).
        let data = |k2: f64| CurvatureData {
            normal: v3(0.0, 0.0, 1.0),
            basis: vec![v3(1.0, 0.0, 0.0), v3(0.0, 1.0, 0.0)],
            curvatures: vec![1.0, k2],
            second_fundamental: DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, k2])),
        };
        assert!(data(0.9e-6).is_degenerate());
        assert!(!data(1.1e-6).is_degenerate());
    }
}
