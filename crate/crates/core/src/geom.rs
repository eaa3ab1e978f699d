//! Exact-formula layer: quadratic forms, central quadrics, pseudo-confocal
//! pencils, oriented lines, tangency and cross-ratio.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Determinant floor under which a form counts as degenerate.
pub const DET_FLOOR: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Input(format!("{what} matrix must be square")));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Input(format!(
                    "{what} matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

// ── Quadratic forms ────────────────────────────────────────────────────────

/// A symmetric bilinear form on the ambient space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    matrix: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&matrix, "quadratic form")?;
        if matrix.nrows() < 2 {
            return Err(Error::Input("quadratic form needs dimension >= 2".into()));
        }
        Ok(QuadraticForm { matrix })
    }

    pub fn identity(dimension: usize) -> Self {
        QuadraticForm {
            matrix: DMatrix::identity(dimension, dimension),
        }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(entries)))
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The bilinear pairing `xᵀ Q y`.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.matrix * y)[(0, 0)]
    }

    /// Inverse matrix; fails when the form is degenerate.
    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        let det = self.matrix.determinant();
        if det.abs() < DET_FLOOR {
            return Err(Error::Numerical(
                "quadratic form is degenerate: |det| below floor".into(),
            ));
        }
        self.matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("quadratic form inversion failed".into()))
    }
}

// ── Central quadrics ───────────────────────────────────────────────────────

/// The level set `{x : xᵀ A x = 1}` of a symmetric matrix `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralQuadric {
    a: DMatrix<f64>,
}

impl CentralQuadric {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&a, "quadric")?;
        Ok(CentralQuadric { a })
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        CentralQuadric {
            a: DMatrix::from_diagonal(&DVector::from_row_slice(entries)),
        }
    }

    pub fn dimension(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Evaluate `xᵀ A x`; the value is 1 exactly on the quadric.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::Input(format!(
                "point has dimension {}, quadric expects {}",
                x.len(),
                self.dimension()
            )));
        }
        Ok((x.transpose() * &self.a * x)[(0, 0)])
    }

    /// Gradient of `xᵀ A x − 1`.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * &self.a * x
    }
}

// ── Oriented lines ─────────────────────────────────────────────────────────

/// A line with base point and unit direction. Orientation matters for the
/// billiard flow; tangency ignores it.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientedLine {
    point: DVector<f64>,
    direction: DVector<f64>,
}

impl OrientedLine {
    pub fn new(point: DVector<f64>, direction: DVector<f64>) -> Result<Self> {
        if point.len() != direction.len() {
            return Err(Error::Input(
                "line point/direction dimension mismatch".into(),
            ));
        }
        let norm = direction.norm();
        if norm < 1e-14 {
            return Err(Error::Input("line direction is numerically zero".into()));
        }
        Ok(OrientedLine {
            point,
            direction: direction / norm,
        })
    }

    pub fn point(&self) -> &DVector<f64> {
        &self.point
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        &self.point + t * &self.direction
    }
}

// ── Pseudo-confocal pencils ────────────────────────────────────────────────

/// Serialized pencil description: semi-axis parameters plus the count of
/// positive-signature coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PencilConfig {
    pub a: Vec<f64>,
    pub r: usize,
}

/// The one-parameter family of quadrics with diagonal entries
/// `1/(aᵢ − λ)` on the first `r` axes and `1/(aᵢ + λ)` on the rest.
/// `r = d` reproduces the classical Euclidean confocal family.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoConfocalPencil {
    a: Vec<f64>,
    r: usize,
}

impl PseudoConfocalPencil {
    pub fn new(a: Vec<f64>, r: usize) -> Result<Self> {
        if a.len() < 2 {
            return Err(Error::Input("pencil needs dimension >= 2".into()));
        }
        if a.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Input(
                "pencil parameters must be strictly positive".into(),
            ));
        }
        if r > a.len() {
            return Err(Error::Input(format!(
                "signature count r = {r} exceeds dimension {}",
                a.len()
            )));
        }
        Ok(PseudoConfocalPencil { a, r })
    }

    pub fn from_config(config: &PencilConfig) -> Result<Self> {
        Self::new(config.a.clone(), config.r)
    }

    pub fn dimension(&self) -> usize {
        self.a.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.a
    }

    pub fn signature(&self) -> usize {
        self.r
    }

    /// Pole of the pencil on axis `i`: the parameter at which the `i`-th
    /// denominator vanishes.
    pub fn pole(&self, i: usize) -> f64 {
        if i < self.r {
            self.a[i]
        } else {
            -self.a[i]
        }
    }

    /// Denominator `sᵢ(λ)` of axis `i`.
    fn denominator(&self, i: usize, lambda: f64) -> f64 {
        if i < self.r {
            self.a[i] - lambda
        } else {
            self.a[i] + lambda
        }
    }

    /// The member quadric at parameter `lambda`.
    pub fn member(&self, lambda: f64) -> Result<CentralQuadric> {
        let d = self.dimension();
        let mut diag = Vec::with_capacity(d);
        for i in 0..d {
            let s = self.denominator(i, lambda);
            if s.abs() <= 1e-9 * self.a[i].max(1.0) {
                return Err(Error::DegenerateMember { lambda, index: i });
            }
            diag.push(1.0 / s);
        }
        Ok(CentralQuadric::diagonal(&diag))
    }
}

// ── Tangency ───────────────────────────────────────────────────────────────

/// Tangency test of a line against a central quadric: returns
/// `(pᵀAu)² − (uᵀAu)(pᵀAp − 1)`. Zero means tangent; positive secant;
/// negative exterior.
pub fn tangency_discriminant(quadric: &CentralQuadric, line: &OrientedLine) -> f64 {
    let a = quadric.matrix();
    let p = line.point();
    let u = line.direction();
    let pau = (p.transpose() * a * u)[(0, 0)];
    let uau = (u.transpose() * a * u)[(0, 0)];
    let pap = (p.transpose() * a * p)[(0, 0)];
    pau * pau - uau * (pap - 1.0)
}

/// One root of the tangency polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRoot {
    pub lambda: f64,
    /// True when the root lies within the pole tolerance of a pencil pole;
    /// such roots touch degenerate members and carry larger polishing error.
    pub at_pole: bool,
}

/// Options for the tangency-spectrum root finder.
#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    /// Number of grid nodes for the sign-change scan.
    pub grid_points: usize,
    /// The scan covers `[-(max aᵢ) - margin, (max aᵢ) + margin]`;
    /// `None` uses `max(1, max aᵢ)`.
    pub margin: Option<f64>,
    /// Roots within this distance of a pole (relative to `max(1, |pole|)`)
    /// are flagged.
    pub pole_tolerance: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            grid_points: 2048,
            margin: None,
            pole_tolerance: 1e-7,
        }
    }
}

/// The tangency polynomial for a line against the pencil, with denominators
/// cleared over the coordinates the line actually involves.
///
/// Writing `sᵢ(λ)` for the axis denominators and restricting all sums to the
/// active set (coordinates where `pᵢ` or `uᵢ` is nonzero), the discriminant
/// times the product of active denominators collapses to
///
/// ```text
/// h(λ) = Σᵢ uᵢ² Πⱼ≠ᵢ sⱼ  −  Σᵢ<ⱼ (pᵢuⱼ − pⱼuᵢ)² Πₖ∉{i,j} sₖ
/// ```
///
/// a polynomial of degree (#active − 1) whose roots are the tangency
/// parameters. The cross terms absorb the cancellations that otherwise make
/// pointwise evaluation unstable near poles.
struct ClearedTangency<'a> {
    pencil: &'a PseudoConfocalPencil,
    active: Vec<usize>,
    p: DVector<f64>,
    u: DVector<f64>,
}

impl<'a> ClearedTangency<'a> {
    fn new(pencil: &'a PseudoConfocalPencil, line: &OrientedLine) -> Self {
        let p = line.point().clone();
        let u = line.direction().clone();
        let p_tol = 1e-12 * (1.0 + p.amax());
        let u_tol = 1e-12;
        let active = (0..pencil.dimension())
            .filter(|&i| p[i].abs() > p_tol || u[i].abs() > u_tol)
            .collect();
        ClearedTangency {
            pencil,
            active,
            p,
            u,
        }
    }

    fn eval(&self, lambda: f64) -> f64 {
        let s: Vec<f64> = self
            .active
            .iter()
            .map(|&i| self.pencil.denominator(i, lambda))
            .collect();
        let n = self.active.len();
        let mut value = 0.0;
        for (k, &i) in self.active.iter().enumerate() {
            let mut prod = self.u[i] * self.u[i];
            for (l, _) in self.active.iter().enumerate() {
                if l != k {
                    prod *= s[l];
                }
            }
            value += prod;
        }
        for k in 0..n {
            for l in (k + 1)..n {
                let (i, j) = (self.active[k], self.active[l]);
                let w = self.p[i] * self.u[j] - self.p[j] * self.u[i];
                if w == 0.0 {
                    continue;
                }
                let mut prod = w * w;
                for (m, _) in self.active.iter().enumerate() {
                    if m != k && m != l {
                        prod *= s[m];
                    }
                }
                value -= prod;
            }
        }
        value
    }
}

/// All real tangency parameters of `line` against the pencil, sorted
/// ascending. Roots coinciding with pencil poles are flagged, not dropped.
pub fn tangency_spectrum(
    pencil: &PseudoConfocalPencil,
    line: &OrientedLine,
) -> Result<Vec<SpectrumRoot>> {
    tangency_spectrum_with(pencil, line, &SpectrumOptions::default())
}

pub fn tangency_spectrum_with(
    pencil: &PseudoConfocalPencil,
    line: &OrientedLine,
    options: &SpectrumOptions,
) -> Result<Vec<SpectrumRoot>> {
    if line.point().len() != pencil.dimension() {
        return Err(Error::Input("line/pencil dimension mismatch".into()));
    }
    let cleared = ClearedTangency::new(pencil, line);
    if cleared.active.is_empty() {
        return Err(Error::Input("line has no active coordinates".into()));
    }
    let a_max = pencil.parameters().iter().cloned().fold(0.0, f64::max);
    let margin = options.margin.unwrap_or_else(|| a_max.max(1.0));
    let lo = -(a_max + margin);
    let hi = a_max + margin;
    let n = options.grid_points.max(16);
    let step = (hi - lo) / n as f64;

    let mut values = Vec::with_capacity(n + 1);
    for k in 0..=n {
        values.push(cleared.eval(lo + step * k as f64));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::Numerical(
            "tangency polynomial vanishes identically on the scan grid".into(),
        ));
    }

    let mut roots: Vec<f64> = Vec::new();
    for k in 0..n {
        let (fa, fb) = (values[k], values[k + 1]);
        if fa == 0.0 {
            roots.push(lo + step * k as f64);
            continue;
        }
        if fa * fb < 0.0 {
            let mut a = lo + step * k as f64;
            let mut b = a + step;
            let mut va = fa;
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                let vm = cleared.eval(mid);
                if vm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if va * vm < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    va = vm;
                }
            }
            roots.push(0.5 * (a + b));
        }
    }
    if values[n] == 0.0 {
        roots.push(hi);
    }

    // Merge near-duplicates from adjacent brackets.
    roots.sort_by(|x, y| x.partial_cmp(y).expect("finite roots"));
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * x.abs().max(1.0));

    let poles: Vec<f64> = (0..pencil.dimension()).map(|i| pencil.pole(i)).collect();
    let spectrum = roots
        .into_iter()
        .map(|lambda| {
            let at_pole = poles
                .iter()
                .any(|&p| (lambda - p).abs() <= options.pole_tolerance * p.abs().max(1.0));
            SpectrumRoot { lambda, at_pole }
        })
        .collect();
    Ok(spectrum)
}

// ── Cross-ratio ────────────────────────────────────────────────────────────

/// Relative tolerance for the concurrency and coplanarity checks.
const CROSS_RATIO_TOL: f64 = 1e-8;

/// Cross-ratio of four concurrent coplanar lines, read as points of the
/// projective line of their pencil. Returns `f64::INFINITY` when the fourth
/// harmonic degenerates.
pub fn cross_ratio(lines: &[OrientedLine; 4]) -> Result<f64> {
    let dim = lines[0].point().len();
    if lines.iter().any(|l| l.point().len() != dim) {
        return Err(Error::Input(
            "cross-ratio lines have mixed dimensions".into(),
        ));
    }

    // Common point: least-squares intersection of the four lines.
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for line in lines {
        let u = line.direction();
        let proj = DMatrix::identity(dim, dim) - u * u.transpose();
        rhs += &proj * line.point();
        m += proj;
    }
    let vertex = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Input("lines do not meet in a single point".into()))?;
    let scale = 1.0 + lines.iter().map(|l| l.point().norm()).fold(0.0, f64::max);
    for line in lines {
        let w = &vertex - line.point();
        let u = line.direction();
        let off = (&w - u * w.dot(u)).norm();
        if off > CROSS_RATIO_TOL * scale {
            return Err(Error::Input(format!(
                "lines are not concurrent: offset {off:.3e}"
            )));
        }
    }

    // Coplanarity: the four directions must span a 2-plane.
    let mut dirs = DMatrix::<f64>::zeros(4, dim);
    for (k, line) in lines.iter().enumerate() {
        dirs.row_mut(k).copy_from(&line.direction().transpose());
    }
    let svd = dirs.clone().svd(false, true);
    let sigma = &svd.singular_values;
    if sigma.len() < 2 || sigma[1] <= CROSS_RATIO_TOL * sigma[0] {
        return Err(Error::Input(
            "line pencil is degenerate (all parallel)".into(),
        ));
    }
    if sigma.len() > 2 && sigma[2] > CROSS_RATIO_TOL * sigma[0] {
        return Err(Error::Input(format!(
            "lines are not coplanar: residual {:.3e}",
            sigma[2] / sigma[0]
        )));
    }
    let v_t = svd.v_t.as_ref().expect("svd requested v_t");
    let basis1 = v_t.row(0).transpose();
    let basis2 = v_t.row(1).transpose();

    let coords: Vec<(f64, f64)> = lines
        .iter()
        .map(|l| (l.direction().dot(&basis1), l.direction().dot(&basis2)))
        .collect();
    let wedge = |a: (f64, f64), b: (f64, f64)| a.0 * b.1 - a.1 * b.0;
    let numerator = wedge(coords[0], coords[2]) * wedge(coords[1], coords[3]);
    let denominator = wedge(coords[0], coords[3]) * wedge(coords[1], coords[2]);
    if denominator.abs() <= 1e-14 * numerator.abs().max(1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(numerator / denominator)
}
