//! Partial-cone analysis in dimension 3: adapted frames, the admissibility
//! matrix and its discriminant, eigen-direction curve integration, conic
//! fitting and the symmetric ⇔ quadratic-cone dichotomy.
//!
//! At a boundary point with nondegenerate curvature, the lines through the
//! point tangent to a caustic trace a curve in the plane parallel to the
//! tangent plane at height 1. In centered coordinates `(X, Y)` that curve is
//! tangent to an eigenvector field of a 2×2 matrix built from the transverse
//! field's first-order data; the curve is a conic for every start exactly
//! when `k₂·b = k₁·c`.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reflect::{DerivativeMode, TransverseField};
use crate::surface::ImplicitSurface;

/// Rigid motion into the adapted frame of a surface point: the point goes to
/// the origin, the principal directions to the x- and y-axes and the outward
/// normal to the z-axis.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    rotation: Matrix3<f64>,
    origin: Vector3<f64>,
    /// Principal curvatures (k₁, k₂), sorted descending.
    pub curvatures: (f64, f64),
}

impl AdaptedFrame {
    pub fn to_frame_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (x - self.origin)
    }

    pub fn to_frame_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn from_frame_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * v
    }

    pub fn origin(&self) -> &Vector3<f64> {
        &self.origin
    }
}

fn to_vector3(v: &DVector<f64>) -> Result<Vector3<f64>> {
    if v.len() != 3 {
        return Err(Error::Input("cone analysis requires dimension 3".into()));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

/// Build the adapted frame at `q`. Fails on degenerate second fundamental
/// forms, which gate the whole cone analysis.
pub fn adapted_frame(surface: &ImplicitSurface, q: &DVector<f64>) -> Result<AdaptedFrame> {
    if surface.dimension() != 3 {
        return Err(Error::Input("cone analysis requires dimension 3".into()));
    }
    let q = surface.project(q)?;
    let data = surface.curvature_data(&q)?;
    if data.is_degenerate() {
        return Err(Error::DegenerateSecondFundamentalForm);
    }
    let u1 = to_vector3(&data.basis[0])?;
    let mut u2 = to_vector3(&data.basis[1])?;
    let n = to_vector3(&data.normal)?;
    // Keep the frame right-handed; flipping a principal direction is free.
    if u1.cross(&u2).dot(&n) < 0.0 {
        u2 = -u2;
    }
    let rotation = Matrix3::from_rows(&[u1.transpose(), u2.transpose(), n.transpose()]);
    Ok(AdaptedFrame {
        rotation,
        origin: to_vector3(&q)?,
        curvatures: (data.curvatures[0], data.curvatures[1]),
    })
}

/// Adapted-frame data of the transverse field at a point: the transverse
/// direction slope `(ν₁, ν₂)`, its tangential derivative components
/// `(a, b, c, d)` and the principal curvatures.
///
/// In the frame, `ν = (ν₁, ν₂, 1)` and the derivatives along the principal
/// directions satisfy `dν(u₁) + k₁ν₁ν = (a, b, 0)` and
/// `dν(u₂) + k₂ν₂ν = (c, d, 0)`; the vanishing third components are a
/// consequence of `⟨ν|n⟩ ≡ 1` and come back as a consistency residual.
#[derive(Debug, Clone, Copy)]
pub struct ConeCoefficients {
    pub nu1: f64,
    pub nu2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub k1: f64,
    pub k2: f64,
    /// Largest reconstructed component that should vanish identically.
    pub residual: f64,
}

impl ConeCoefficients {
    /// Antisymmetry of the field data: zero exactly in the symmetric case.
    pub fn symmetry_defect(&self) -> f64 {
        (self.k2 * self.b - self.k1 * self.c).abs()
    }
}

/// Consistency residual above which the coefficients are rejected.
pub const COEFFICIENT_RESIDUAL_TOL: f64 = 1e-5;

pub fn cone_coefficients(
    surface: &ImplicitSurface,
    field: &TransverseField,
    q: &DVector<f64>,
    mode: DerivativeMode,
) -> Result<ConeCoefficients> {
    let frame = adapted_frame(surface, q)?;
    let q = surface.project(q)?;
    let (k1, k2) = frame.curvatures;

    let nu = field.nu(surface, &q)?;
    let nu_frame = frame.to_frame_vector(&to_vector3(&nu)?);
    let mut residual = (nu_frame[2] - 1.0).abs();

    let u1 = frame.from_frame_vector(&Vector3::x());
    let u2 = frame.from_frame_vector(&Vector3::y());
    let as_dvector = |v: &Vector3<f64>| DVector::from_vec(vec![v[0], v[1], v[2]]);

    let dnu1 = field.nu_derivative(surface, &q, &as_dvector(&u1), mode)?;
    let dnu2 = field.nu_derivative(surface, &q, &as_dvector(&u2), mode)?;
    let row1 = frame.to_frame_vector(&to_vector3(&dnu1)?) + k1 * nu_frame[0] * nu_frame;
    let row2 = frame.to_frame_vector(&to_vector3(&dnu2)?) + k2 * nu_frame[1] * nu_frame;
    residual = residual.max(row1[2].abs()).max(row2[2].abs());
    if residual > COEFFICIENT_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "cone coefficient consistency residual {residual:.3e}"
        )));
    }
    Ok(ConeCoefficients {
        nu1: nu_frame[0],
        nu2: nu_frame[1],
        a: row1[0],
        b: row1[1],
        c: row2[0],
        d: row2[1],
        k1,
        k2,
        residual,
    })
}

/// The 2×2 matrix whose eigenvectors are the admissible hyperplane normals
/// at centered cone coordinates `(x, y)`:
///
/// ```text
/// [ a + k₁x²   b + k₁xy ]
/// [ c + k₂xy   d + k₂y² ]
/// ```
pub fn admissibility_matrix(cc: &ConeCoefficients, x: f64, y: f64) -> Matrix2<f64> {
    Matrix2::new(
        cc.a + cc.k1 * x * x,
        cc.b + cc.k1 * x * y,
        cc.c + cc.k2 * x * y,
        cc.d + cc.k2 * y * y,
    )
}

/// Discriminant of the characteristic polynomial of the admissibility
/// matrix; its zero set is the degenerate locus of the direction field.
pub fn discriminant_delta(cc: &ConeCoefficients, x: f64, y: f64) -> f64 {
    let diag = cc.d - cc.a + cc.k2 * y * y - cc.k1 * x * x;
    diag * diag + 4.0 * (cc.b + cc.k1 * x * y) * (cc.c + cc.k2 * x * y)
}

/// Residual of the direction equation at position `(x, y)` with velocity
/// `(dx, dy)`:
///
/// ```text
/// (d − a + k₂y² − k₁x²)·dx·dy + (b + k₁xy)·dx² − (c + k₂xy)·dy²
/// ```
pub fn ode_residual(cc: &ConeCoefficients, x: f64, y: f64, dx: f64, dy: f64) -> f64 {
    (cc.d - cc.a + cc.k2 * y * y - cc.k1 * x * x) * dx * dy + (cc.b + cc.k1 * x * y) * dx * dx
        - (cc.c + cc.k2 * x * y) * dy * dy
}

fn eigen2(m: &Matrix2<f64>) -> Option<[(f64, Vector2<f64>); 2]> {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr - 4.0 * det;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let plus = 0.5 * (tr + sq);
    let minus = 0.5 * (tr - sq);
    let vector_for = |lambda: f64| -> Vector2<f64> {
        let r1 = Vector2::new(m[(0, 1)], lambda - m[(0, 0)]);
        let r2 = Vector2::new(lambda - m[(1, 1)], m[(1, 0)]);
        let v = if r1.norm() >= r2.norm() { r1 } else { r2 };
        if v.norm() < 1e-300 {
            // Scalar matrix: any direction is an eigenvector.
            Vector2::new(1.0, 0.0)
        } else {
            v.normalize()
        }
    };
    Some([(plus, vector_for(plus)), (minus, vector_for(minus))])
}

/// Real admissible directions above `ξ`: eigenpairs `(η, α)` of the
/// admissibility matrix at `ξ` with `⟨η|ξ⟩ ≠ 0`. Complex eigenvalues give an
/// empty list. The count never exceeds `d − 1 = 2`.
pub fn admissible_directions(cc: &ConeCoefficients, xi: &Vector2<f64>) -> Vec<(Vector2<f64>, f64)> {
    let m = admissibility_matrix(cc, xi[0], xi[1]);
    let Some(pairs) = eigen2(&m) else {
        return Vec::new();
    };
    let xi_norm = xi.norm();
    pairs
        .into_iter()
        .filter(|(_, eta)| {
            if xi_norm < 1e-300 {
                true
            } else {
                eta.dot(xi).abs() > 1e-12 * xi_norm
            }
        })
        .map(|(alpha, eta)| (eta, alpha))
        .collect()
}

/// Eigenvalue branch the curve integrator follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Larger eigenvalue.
    Plus,
    /// Smaller eigenvalue.
    Minus,
}

/// Controls for [`integrate_cone_curve_with`].
#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub steps: usize,
    pub step_size: f64,
    /// Stop when the discriminant drops to this level (the degenerate
    /// locus, where the branches merge and the direction field stiffens).
    pub stop_delta: f64,
    /// Stop when the curve leaves this radius.
    pub escape_radius: f64,
    /// Stop after this much cumulative turning. Unbounded by default; the
    /// classifier caps it at one lap (a closed section needs 2π) to block
    /// drift accumulation from repeated traversals.
    pub max_turning: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            steps: 6000,
            step_size: 0.0075,
            stop_delta: 1e-6,
            escape_radius: 30.0,
            max_turning: f64::INFINITY,
        }
    }
}

/// Unit direction of the chosen eigenvector branch at `p`, sign-aligned with
/// `guide`. The curve tangent is the quarter-turn of the eigenvector.
fn branch_direction(
    cc: &ConeCoefficients,
    p: &Vector2<f64>,
    branch: Branch,
    guide: Option<&Vector2<f64>>,
    stop_delta: f64,
) -> Option<Vector2<f64>> {
    if discriminant_delta(cc, p[0], p[1]) <= stop_delta {
        return None;
    }
    let m = admissibility_matrix(cc, p[0], p[1]);
    let pairs = eigen2(&m)?;
    let eta = match branch {
        Branch::Plus => pairs[0].1,
        Branch::Minus => pairs[1].1,
    };
    // Quarter turn: tangent directions are rotated eigenvectors.
    let mut w = Vector2::new(-eta[1], eta[0]);
    if let Some(g) = guide {
        if w.dot(g) < 0.0 {
            w = -w;
        }
    }
    Some(w)
}

/// Integrate the eigen-direction field of the chosen branch from `start`
/// with classical fourth-order steps. Stops at the degenerate locus, at the
/// escape radius, on closure, or after `steps`.
pub fn integrate_cone_curve(
    cc: &ConeCoefficients,
    start: Vector2<f64>,
    branch: Branch,
    steps: usize,
    step_size: f64,
) -> Result<Vec<Vector2<f64>>> {
    let opts = IntegrationOptions {
        steps,
        step_size,
        ..IntegrationOptions::default()
    };
    integrate_cone_curve_with(cc, start, branch, &opts, 1.0)
}

/// As [`integrate_cone_curve`], with full options and an initial direction
/// sign (`-1.0` traces the other way along the same branch).
pub fn integrate_cone_curve_with(
    cc: &ConeCoefficients,
    start: Vector2<f64>,
    branch: Branch,
    opts: &IntegrationOptions,
    initial_sign: f64,
) -> Result<Vec<Vector2<f64>>> {
    if discriminant_delta(cc, start[0], start[1]) <= opts.stop_delta {
        return Err(Error::DegenerateField);
    }
    let h = opts.step_size;
    let mut points = Vec::with_capacity(opts.steps + 1);
    points.push(start);
    let mut p = start;
    let Some(mut guide) = branch_direction(cc, &p, branch, None, opts.stop_delta) else {
        return Err(Error::DegenerateField);
    };
    guide *= initial_sign;
    let mut turning = 0.0;
    for step in 0..opts.steps {
        let Some(k1) = branch_direction(cc, &p, branch, Some(&guide), opts.stop_delta) else {
            break;
        };
        let Some(k2) =
            branch_direction(cc, &(p + 0.5 * h * k1), branch, Some(&k1), opts.stop_delta)
        else {
            break;
        };
        let Some(k3) =
            branch_direction(cc, &(p + 0.5 * h * k2), branch, Some(&k1), opts.stop_delta)
        else {
            break;
        };
        let Some(k4) = branch_direction(cc, &(p + h * k3), branch, Some(&k1), opts.stop_delta)
        else {
            break;
        };
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        turning += k1.dot(&guide).clamp(-1.0, 1.0).acos();
        guide = k1;
        points.push(p);
        if p.norm() > opts.escape_radius || turning > opts.max_turning {
            break;
        }
        if step > 20 && (p - start).norm() < 1.5 * h {
            points.push(start);
            break;
        }
    }
    Ok(points)
}

// ── Conic fitting ──────────────────────────────────────────────────────────

/// Least-squares conic through a point set: unit-norm coefficients
/// `(A, B, C, D, E, F)` of `Ax² + Bxy + Cy² + Dx + Ey + F` and the RMS
/// algebraic residual on centered, scaled points.
#[derive(Debug, Clone, Serialize)]
pub struct ConicFit {
    pub coefficients: [f64; 6],
    pub residual: f64,
}

impl ConicFit {
    /// Center of the fitted conic, when it is a central conic.
    pub fn center(&self) -> Option<(f64, f64)> {
        let [a, b, c, d, e, _] = self.coefficients;
        let det = 4.0 * a * c - b * b;
        if det.abs() < 1e-12 {
            return None;
        }
        Some(((b * e - 2.0 * c * d) / det, (b * d - 2.0 * a * e) / det))
    }
}

pub fn conic_fit(points: &[Vector2<f64>]) -> Result<ConicFit> {
    let n = points.len();
    if n < 8 {
        return Err(Error::Input(format!(
            "conic fit needs at least 8 points, got {n}"
        )));
    }
    // Center and scale to RMS radius √2.
    let mut mean = Vector2::zeros();
    for p in points {
        mean += p;
    }
    mean /= n as f64;
    let rms = (points
        .iter()
        .map(|p| (p - mean).norm_squared())
        .sum::<f64>()
        / n as f64)
        .sqrt();
    if rms < 1e-12 {
        return Err(Error::Numerical("all points coincide".into()));
    }
    let scale = rms / 2.0f64.sqrt();

    let mut design = DMatrix::zeros(n, 6);
    for (row, p) in points.iter().enumerate() {
        let x = (p[0] - mean[0]) / scale;
        let y = (p[1] - mean[1]) / scale;
        design[(row, 0)] = x * x;
        design[(row, 1)] = x * y;
        design[(row, 2)] = y * y;
        design[(row, 3)] = x;
        design[(row, 4)] = y;
        design[(row, 5)] = 1.0;
    }
    let svd = design.svd(false, true);
    let sigma = &svd.singular_values;
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[i].partial_cmp(&sigma[j]).expect("finite singulars"));
    let smallest = order[0];
    let second = order[1];
    if sigma[second] <= 1e-10 * sigma[order[5]].max(1.0) {
        return Err(Error::Numerical(
            "rank-deficient design: conic is not unique".into(),
        ));
    }
    let c_norm: Vec<f64> = v_t.row(smallest).iter().cloned().collect();
    let residual = sigma[smallest] / (n as f64).sqrt();

    // Map back to the original coordinates and renormalize.
    let (a, b, c, d, e, f) = (
        c_norm[0], c_norm[1], c_norm[2], c_norm[3], c_norm[4], c_norm[5],
    );
    let (mx, my) = (mean[0], mean[1]);
    let s = scale;
    let a0 = a / (s * s);
    let b0 = b / (s * s);
    let c0 = c / (s * s);
    let d0 = -(2.0 * a * mx + b * my) / (s * s) + d / s;
    let e0 = -(b * mx + 2.0 * c * my) / (s * s) + e / s;
    let f0 = (a * mx * mx + b * mx * my + c * my * my) / (s * s) - (d * mx + e * my) / s + f;
    let mut coefficients = [a0, b0, c0, d0, e0, f0];
    let norm = coefficients.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut coefficients {
        *v /= norm;
    }
    Ok(ConicFit {
        coefficients,
        residual,
    })
}

// ── Conic-solution residual oracle ─────────────────────────────────────────

/// Which trigonometric conic parametrization to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicKind {
    /// `(r₁ cos t, r₂ cos(t + φ))`.
    Ellipse,
    /// `(r₁ cosh t, r₂ cosh(t + φ))`.
    Hyperbola,
}

/// Result of substituting a trigonometric conic into the normalized
/// direction equation `(e + y² − x²)x'y' + (b + xy)x'² − (c + xy)y'² = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct ConicOdeCheck {
    /// Closed-form obstruction constants for the ellipse kind: all three
    /// vanish exactly when the parametrized ellipse solves the equation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks: Option<[f64; 3]>,
    /// Maximum absolute equation residual over the sample grid.
    pub max_residual: f64,
}

/// Substitute the conic parametrization into the direction equation with
/// coefficients `(b, c, e)` and report the obstruction. For the ellipse kind
/// the residual decomposes into three constants against the basis
/// `{cos², sin², sin·cos}`; the hyperbola kind is checked numerically on a
/// grid.
pub fn conic_ode_residual(
    b: f64,
    c: f64,
    e: f64,
    r1: f64,
    r2: f64,
    phi: f64,
    kind: ConicKind,
) -> Result<ConicOdeCheck> {
    if r1 == 0.0 || r2 == 0.0 {
        return Err(Error::Input("conic radii must be nonzero".into()));
    }
    let grid = 256;
    match kind {
        ConicKind::Ellipse => {
            if phi.sin().abs() < 1e-12 {
                return Err(Error::Input(
                    "ellipse phase must not be a multiple of pi".into(),
                ));
            }
            let (sin, cos) = phi.sin_cos();
            let k1 = r1 * r2.powi(3) * sin * sin * cos + c * r2 * r2 * sin * sin;
            let k2 = b * r1 * r1 + e * r1 * r2 * cos - c * r2 * r2 * cos * cos
                + r1 * r2.powi(3) * sin * sin * cos;
            let k3 = e * r1 * r2 * sin
                - r1.powi(3) * r2 * sin
                - 2.0 * c * r2 * r2 * sin * cos
                - r1 * r2.powi(3) * sin * (cos * cos - sin * sin);
            let mut max_residual = 0.0f64;
            for i in 0..grid {
                let t = 2.0 * std::f64::consts::PI * i as f64 / grid as f64;
                let x = r1 * t.cos();
                let y = r2 * (t + phi).cos();
                let dx = -r1 * t.sin();
                let dy = -r2 * (t + phi).sin();
                let residual =
                    (e + y * y - x * x) * dx * dy + (b + x * y) * dx * dx - (c + x * y) * dy * dy;
                max_residual = max_residual.max(residual.abs());
            }
            Ok(ConicOdeCheck {
                ks: Some([k1, k2, k3]),
                max_residual,
            })
        }
        ConicKind::Hyperbola => {
            if phi == 0.0 {
                return Err(Error::Input("hyperbola phase must be nonzero".into()));
            }
            let mut max_residual = 0.0f64;
            for i in 0..=grid {
                let t = -2.0 + 4.0 * i as f64 / grid as f64;
                let x = r1 * t.cosh();
                let y = r2 * (t + phi).cosh();
                let dx = r1 * t.sinh();
                let dy = r2 * (t + phi).sinh();
                let residual =
                    (e + y * y - x * x) * dx * dy + (b + x * y) * dx * dx - (c + x * y) * dy * dy;
                max_residual = max_residual.max(residual.abs());
            }
            Ok(ConicOdeCheck {
                ks: None,
                max_residual,
            })
        }
    }
}

// ── Dichotomy ──────────────────────────────────────────────────────────────

/// Conic-fit outcome for one integrated branch.
#[derive(Debug, Clone, Serialize)]
pub struct BranchReport {
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConeVerdict {
    #[serde(rename = "quadratic-cone")]
    QuadraticCone,
    #[serde(rename = "non-conic")]
    NonConic,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

/// Verdict of the partial-cone classification at a point.
#[derive(Debug, Clone, Serialize)]
pub struct DichotomyReport {
    pub sym_defect: f64,
    pub branches: Vec<BranchReport>,
    pub verdict: ConeVerdict,
}

/// Controls for [`classify_partial_cone`].
#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    pub integration: IntegrationOptions,
    /// Accept as conic at or below this fit residual.
    pub accept: f64,
    /// Reject as non-conic at or above this fit residual.
    pub reject: f64,
    /// Minimum polyline points for a trustworthy fit.
    pub min_points: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            integration: IntegrationOptions::default(),
            accept: 1e-6,
            reject: 1e-3,
            min_points: 64,
        }
    }
}

/// Integrate both eigen-direction branches from several starts off the
/// degenerate locus, fit conics to the longest arcs and classify: all
/// residuals at or below the accept threshold mean a quadratic cone, any
/// residual at or above the reject threshold means non-conic, anything else
/// is inconclusive.
pub fn classify_partial_cone(
    cc: &ConeCoefficients,
    opts: &ClassifyOptions,
) -> Result<DichotomyReport> {
    // Keep the integrator out of the stiff zone around the degenerate
    // locus (direction-field derivatives blow up as the branches merge, and
    // steps taken there dominate the accumulated error), and cap the arc at
    // one lap so closed sections cannot pile up traversal drift.
    let coeff_scale = cc.a.abs().max(cc.b.abs()).max(cc.c.abs()).max(cc.d.abs());
    let integration = IntegrationOptions {
        stop_delta: opts
            .integration
            .stop_delta
            .max(0.02 * (1.0 + coeff_scale * coeff_scale)),
        max_turning: opts
            .integration
            .max_turning
            .min(2.0 * std::f64::consts::PI + 0.5),
        ..opts.integration.clone()
    };
    let starts = candidate_starts(cc, &integration);
    let mut branches = Vec::new();
    let mut resolved = 0usize;
    for branch in [Branch::Plus, Branch::Minus] {
        let mut best: Option<Vec<Vector2<f64>>> = None;
        for &start in &starts {
            let mut arc: Vec<Vector2<f64>> = Vec::new();
            if let Ok(back) = integrate_cone_curve_with(cc, start, branch, &integration, -1.0) {
                arc.extend(back.into_iter().rev());
            }
            match integrate_cone_curve_with(cc, start, branch, &integration, 1.0) {
                Ok(forward) => {
                    if arc.is_empty() {
                        arc = forward;
                    } else {
                        arc.extend(forward.into_iter().skip(1));
                    }
                }
                Err(_) => continue,
            }
            if best.as_ref().is_none_or(|b| arc.len() > b.len()) {
                best = Some(arc);
            }
        }
        // Branches without a usable arc are left out of the report; the
        // verdict degrades to inconclusive unless another branch already
        // rejects.
        if let Some(arc) = best {
            if arc.len() >= opts.min_points {
                let fit = conic_fit(&arc)?;
                branches.push(BranchReport {
                    residual: fit.residual,
                    points: arc.len(),
                });
                resolved += 1;
            }
        }
    }
    let worst = branches.iter().map(|b| b.residual).fold(0.0f64, f64::max);
    let verdict = if worst >= opts.reject {
        ConeVerdict::NonConic
    } else if resolved == 2 && worst <= opts.accept {
        ConeVerdict::QuadraticCone
    } else {
        ConeVerdict::Inconclusive
    };
    Ok(DichotomyReport {
        sym_defect: cc.symmetry_defect(),
        branches,
        verdict,
    })
}

fn candidate_starts(cc: &ConeCoefficients, opts: &IntegrationOptions) -> Vec<Vector2<f64>> {
    // Radii where the curvature quartic dominates the raw coefficients keep
    // the discriminant positive for most angles.
    let coeff_scale = cc.a.abs().max(cc.b.abs()).max(cc.c.abs()).max(cc.d.abs());
    let k_min = cc.k1.abs().min(cc.k2.abs()).max(1e-6);
    let base = (2.0 * (1.0 + coeff_scale) / k_min).sqrt();
    let mut starts = Vec::new();
    for radius_factor in [0.35, 0.6, 1.0, 1.5] {
        let radius = base * radius_factor;
        for i in 0..8 {
            let angle = 0.37 + std::f64::consts::PI * i as f64 / 4.0;
            let p = Vector2::new(radius * angle.cos(), radius * angle.sin());
            if discriminant_delta(cc, p[0], p[1]) > 100.0 * opts.stop_delta {
                starts.push(p);
            }
        }
    }
    starts
}

/// End-to-end dichotomy at a surface point: compute the adapted-frame
/// coefficients, integrate and classify. The verdict must agree with the
/// symmetry defect; the report carries both so callers can verify.
pub fn symmetric_dichotomy(
    surface: &ImplicitSurface,
    field: &TransverseField,
    q: &DVector<f64>,
    mode: DerivativeMode,
    opts: &ClassifyOptions,
) -> Result<DichotomyReport> {
    let cc = cone_coefficients(surface, field, q, mode)?;
    classify_partial_cone(&cc, opts)
}
