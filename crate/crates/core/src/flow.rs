//! Ray-boundary intersection and the iterated billiard flow.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geom::OrientedLine;
use crate::reflect::TransverseField;
use crate::surface::{ImplicitSurface, SurfaceField};

/// Relative launch offset to avoid re-hitting the departure point.
pub const T_MIN_FACTOR: f64 = 1e-8;
/// Hit polish target.
pub const HIT_TOL: f64 = 1e-11;
/// Incidence threshold: hits with `|⟨v|n⟩|` below it terminate as grazing.
pub const GRAZING_INCIDENCE: f64 = 1e-7;

/// March controls for non-quadric boundaries.
#[derive(Debug, Clone)]
pub struct MarchOptions {
    /// Maximum chord stepped over in one probe.
    pub max_chord: f64,
    /// Give up (escape) past this flight length.
    pub t_max: f64,
}

impl Default for MarchOptions {
    fn default() -> Self {
        MarchOptions {
            max_chord: 0.1,
            t_max: 1e3,
        }
    }
}

/// A billiard table: boundary surface, transverse field and an interior
/// point that fixes the orientation.
#[derive(Debug, Clone)]
pub struct BilliardTable {
    pub surface: ImplicitSurface,
    pub field: TransverseField,
    pub interior_point: DVector<f64>,
}

impl BilliardTable {
    pub fn new(
        surface: ImplicitSurface,
        field: TransverseField,
        interior_point: DVector<f64>,
    ) -> Result<Self> {
        let value = surface.value(&interior_point)?;
        if value >= 0.0 {
            return Err(Error::Input(
                "interior point is not strictly inside the table".into(),
            ));
        }
        let table = BilliardTable {
            surface,
            field,
            interior_point,
        };
        // The field must be transverse somewhere on the boundary; probe the
        // axis directions and require at least one good sample. (Pseudo
        // tables legitimately carry light-like belts, so partial failures
        // are allowed.)
        let d = table.surface.dimension();
        let mut good = 0;
        let mut probed = 0;
        for i in 0..d {
            for sign in [1.0, -1.0] {
                let mut dir = DVector::zeros(d);
                dir[i] = sign;
                if let Ok((q, _)) = ray_intersect(&table.surface, &table.interior_point, &dir, None)
                {
                    probed += 1;
                    if table.field.nu(&table.surface, &q).is_ok() {
                        good += 1;
                    }
                }
            }
        }
        if probed > 0 && good == 0 {
            return Err(Error::Input(
                "transverse field is undefined at every probed boundary point".into(),
            ));
        }
        Ok(table)
    }
}

/// Why an orbit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// All requested reflections were computed.
    Completed,
    /// The ray left the table without re-hitting the boundary.
    Escape,
    /// A hit fell below the incidence threshold.
    GrazingHit,
    /// The transverse direction was light-like at a hit point.
    LightLikeNormal,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Escape => "escape",
            Termination::GrazingHit => "grazing-hit",
            Termination::LightLikeNormal => "light-like-normal",
        }
    }
}

/// One reflection event.
#[derive(Debug, Clone)]
pub struct ReflectionEvent {
    pub point: DVector<f64>,
    pub incoming: DVector<f64>,
    pub outgoing: DVector<f64>,
    /// Flight length from the previous point.
    pub flight: f64,
}

/// An ordered sequence of reflection events.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub events: Vec<ReflectionEvent>,
    pub status: Termination,
}

impl Trajectory {
    /// The supporting lines of the flight segments: the incoming chord of
    /// the first event followed by every outgoing chord.
    pub fn segment_lines(&self) -> Vec<OrientedLine> {
        let mut lines = Vec::with_capacity(self.events.len() + 1);
        if let Some(first) = self.events.first() {
            lines.push(
                OrientedLine::new(first.point.clone(), first.incoming.clone())
                    .expect("unit incoming direction"),
            );
        }
        for event in &self.events {
            lines.push(
                OrientedLine::new(event.point.clone(), event.outgoing.clone())
                    .expect("unit outgoing direction"),
            );
        }
        lines
    }

    /// Serialize as CSV with header `step,t,qx1..,vix1..,vox1..` and 17
    /// significant digits, deterministically.
    pub fn to_csv(&self) -> String {
        let d = self
            .events
            .first()
            .map(|e| e.point.len())
            .unwrap_or_default();
        let mut out = String::new();
        out.push_str("step,t");
        for i in 1..=d {
            let _ = write!(out, ",qx{i}");
        }
        for i in 1..=d {
            let _ = write!(out, ",vix{i}");
        }
        for i in 1..=d {
            let _ = write!(out, ",vox{i}");
        }
        out.push('\n');
        for (step, event) in self.events.iter().enumerate() {
            let _ = write!(out, "{step},{:.16e}", event.flight);
            for value in event.point.iter() {
                let _ = write!(out, ",{value:.16e}");
            }
            for value in event.incoming.iter() {
                let _ = write!(out, ",{value:.16e}");
            }
            for value in event.outgoing.iter() {
                let _ = write!(out, ",{value:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parse a trajectory previously written by [`Trajectory::to_csv`]. The
    /// termination status is not stored in the CSV and comes back as
    /// `Completed`.
    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Input("empty trajectory file".into()))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.len() < 2 || columns[0] != "step" || columns[1] != "t" {
            return Err(Error::Input("malformed trajectory header".into()));
        }
        if !(columns.len() - 2).is_multiple_of(3) {
            return Err(Error::Input("malformed trajectory header".into()));
        }
        let d = (columns.len() - 2) / 3;
        if d == 0 {
            return Err(Error::Input("trajectory has zero dimension".into()));
        }
        let mut events = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() {
                return Err(Error::Input(format!(
                    "row {lineno}: expected {} fields, found {}",
                    columns.len(),
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("row {lineno}: bad number `{s}`")))
            };
            let flight = parse(fields[1])?;
            let read_vec = |offset: usize| -> Result<DVector<f64>> {
                let mut v = DVector::zeros(d);
                for i in 0..d {
                    v[i] = parse(fields[2 + offset * d + i])?;
                }
                Ok(v)
            };
            let point = read_vec(0)?;
            let incoming = read_vec(1)?;
            let outgoing = read_vec(2)?;
            events.push(ReflectionEvent {
                point,
                incoming,
                outgoing,
                flight,
            });
        }
        Ok(Trajectory {
            events,
            status: Termination::Completed,
        })
    }
}

/// First boundary crossing of the ray `p + t v` with `t` past the launch
/// offset, polished to `|F| ≤ 1e-11`. Quadric boundaries use the closed-form
/// quadratic; expression boundaries march and bisect.
pub fn ray_intersect(
    surface: &ImplicitSurface,
    p: &DVector<f64>,
    v: &DVector<f64>,
    march: Option<&MarchOptions>,
) -> Result<(DVector<f64>, f64)> {
    let v = v.normalize();
    let t_min = T_MIN_FACTOR * (1.0 + p.norm());
    let t = match surface.field() {
        SurfaceField::Quadric(quadric) => {
            let a = quadric.matrix();
            let av = a * &v;
            let c2 = v.dot(&av);
            let c1 = p.dot(&av);
            let c0 = (p.transpose() * a * p)[(0, 0)] - 1.0;
            smallest_quadratic_root(c2, 2.0 * c1, c0, t_min).ok_or(Error::Escape)?
        }
        SurfaceField::Implicit(_) => {
            let default_march = MarchOptions::default();
            let opts = march.unwrap_or(&default_march);
            march_to_crossing(surface, p, &v, t_min, opts)?
        }
    };

    // Newton polish along the ray.
    let mut t = t;
    for _ in 0..40 {
        let x = p + t * &v;
        let (value, grad) = surface.value_and_gradient(&x)?;
        if value.abs() <= HIT_TOL {
            break;
        }
        let slope = grad.dot(&v);
        if slope.abs() < 1e-14 {
            break;
        }
        t -= value / slope;
    }
    let q = p + t * &v;
    let residual = surface.value(&q)?;
    if residual.abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "hit polish stalled at |F| = {:.3e}",
            residual.abs()
        )));
    }
    let n = surface.unit_normal(&q)?;
    if v.dot(&n).abs() < GRAZING_INCIDENCE {
        return Err(Error::GrazingHit);
    }
    Ok((q, t))
}

fn smallest_quadratic_root(a: f64, b: f64, c: f64, t_min: f64) -> Option<f64> {
    let mut roots: Vec<f64> = Vec::with_capacity(2);
    if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            return None;
        }
        roots.push(-c / b);
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        // Numerically stable pairing.
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            roots.push(0.0);
        } else {
            roots.push(q / a);
            roots.push(c / q);
        }
    }
    roots
        .into_iter()
        .filter(|t| *t > t_min && t.is_finite())
        .fold(None, |best, t| match best {
            Some(b) if b <= t => Some(b),
            _ => Some(t),
        })
}

fn march_to_crossing(
    surface: &ImplicitSurface,
    p: &DVector<f64>,
    v: &DVector<f64>,
    t_min: f64,
    opts: &MarchOptions,
) -> Result<f64> {
    let step = opts.max_chord.max(1e-6);
    let mut t_prev = t_min;
    let mut f_prev = surface.value(&(p + t_prev * v))?;
    if f_prev > 0.0 {
        // Departing outward from the surface: treat the tiny positive
        // residual as still inside.
        if f_prev > 1e-9 {
            return Err(Error::Input(
                "ray does not depart into the table interior".into(),
            ));
        }
        f_prev = -f_prev.abs();
    }
    let mut t = t_prev + step;
    while t <= opts.t_max {
        let f = surface.value(&(p + t * v))?;
        if f == 0.0 {
            return Ok(t);
        }
        if f_prev < 0.0 && f > 0.0 {
            // Bisect the bracket.
            let (mut lo, mut hi) = (t_prev, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = surface.value(&(p + mid * v))?;
                if fm > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        t_prev = t;
        f_prev = f;
        t += step;
    }
    Err(Error::Escape)
}

/// Iterate the billiard flow from `(p0, v0)` for at most `n` reflections.
/// Clean physical terminations (escape, grazing, light-like) are recorded in
/// the trajectory status; malformed input and numerical breakdowns are
/// returned as errors.
pub fn orbit(
    table: &BilliardTable,
    p0: &DVector<f64>,
    v0: &DVector<f64>,
    n: usize,
) -> Result<Trajectory> {
    orbit_with(table, p0, v0, n, None)
}

pub fn orbit_with(
    table: &BilliardTable,
    p0: &DVector<f64>,
    v0: &DVector<f64>,
    n: usize,
    march: Option<&MarchOptions>,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::Input("orbit needs at least one reflection".into()));
    }
    if table.surface.value(p0)? >= 0.0 {
        return Err(Error::Input("orbit start is not strictly interior".into()));
    }
    let norm = v0.norm();
    if norm < 1e-14 {
        return Err(Error::Input("orbit direction is numerically zero".into()));
    }
    let mut p = p0.clone();
    let mut v = v0 / norm;
    let mut events = Vec::with_capacity(n);
    let mut status = Termination::Completed;
    for _ in 0..n {
        let (q, t) = match ray_intersect(&table.surface, &p, &v, march) {
            Ok(hit) => hit,
            Err(Error::Escape) => {
                status = Termination::Escape;
                break;
            }
            Err(Error::GrazingHit) => {
                status = Termination::GrazingHit;
                break;
            }
            Err(e) => return Err(e),
        };
        let normal = table.surface.unit_normal(&q)?;
        let nu = match table.field.nu(&table.surface, &q) {
            Ok(nu) => nu,
            Err(Error::LightLikeNormal) => {
                status = Termination::LightLikeNormal;
                break;
            }
            Err(e) => return Err(e),
        };
        let outgoing = match crate::reflect::projective_reflect(&v, &normal, &nu) {
            Ok(v) => v,
            Err(Error::GrazingHit) => {
                status = Termination::GrazingHit;
                break;
            }
            Err(e) => return Err(e),
        };
        events.push(ReflectionEvent {
            point: q.clone(),
            incoming: v.clone(),
            outgoing: outgoing.clone(),
            flight: t,
        });
        p = q;
        v = outgoing;
    }
    Ok(Trajectory { events, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::geom::{CentralQuadric, QuadraticForm};
    use approx::assert_relative_eq;

    fn v3(a: f64, b: f64, c: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b, c])
    }

    fn sphere_table() -> BilliardTable {
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[1.0, 1.0, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        BilliardTable::new(surface, TransverseField::Euclidean, v3(0.0, 0.0, 0.0)).unwrap()
    }

    fn ellipsoid_table() -> BilliardTable {
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        BilliardTable::new(surface, TransverseField::Euclidean, v3(0.0, 0.0, 0.0)).unwrap()
    }

    #[test]
    fn sphere_axis_ray() {
        let table = sphere_table();
        let (q, t) =
            ray_intersect(&table.surface, &v3(0.0, 0.0, 0.0), &v3(0.0, 0.0, 1.0), None).unwrap();
        assert_relative_eq!(t, 1.0, epsilon = 1e-12);
        assert_relative_eq!((q - v3(0.0, 0.0, 1.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn ellipsoid_axis_ray_closed_form() {
        let table = ellipsoid_table();
        let (q, t) =
            ray_intersect(&table.surface, &v3(0.0, 0.0, 0.0), &v3(1.0, 0.0, 0.0), None).unwrap();
        assert_relative_eq!(t, 2.0, epsilon = 1e-12);
        assert_relative_eq!((q - v3(2.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn unbounded_graph_escapes() {
        let e = parse_expression("x3 - x1^2", 3).unwrap();
        let surface =
            ImplicitSurface::oriented_with_interior(SurfaceField::Implicit(e), &v3(2.0, 0.0, 3.0))
                .unwrap();
        // From below the graph, heading flat away from it: F decreases
        // forever, no crossing.
        let result = ray_intersect(&surface, &v3(2.0, 0.0, 3.0), &v3(1.0, 0.0, 0.0), None);
        assert!(matches!(result, Err(Error::Escape)));
    }

    #[test]
    fn period_two_diameter_orbit() {
        let table = sphere_table();
        let traj = orbit(&table, &v3(0.0, 0.0, 0.0), &v3(1.0, 0.0, 0.0), 8).unwrap();
        assert_eq!(traj.status, Termination::Completed);
        assert_eq!(traj.events.len(), 8);
        for (k, event) in traj.events.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_relative_eq!(
                (&event.point - sign * v3(1.0, 0.0, 0.0)).norm(),
                0.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn events_stay_on_surface_and_chain() {
        let table = ellipsoid_table();
        let traj = orbit(&table, &v3(0.1, -0.2, 0.3), &v3(0.7, 0.4, -0.2), 50).unwrap();
        assert_eq!(traj.status, Termination::Completed);
        let mut prev = v3(0.1, -0.2, 0.3);
        for event in &traj.events {
            assert!(table.surface.value(&event.point).unwrap().abs() <= 1e-9);
            let chained = &prev + event.flight * &event.incoming;
            assert!((chained - &event.point).norm() <= 1e-8);
            prev = event.point.clone();
        }
    }

    #[test]
    fn euclidean_incidence_equals_reflection() {
        let table = ellipsoid_table();
        let traj = orbit(&table, &v3(0.0, 0.0, 0.0), &v3(0.3, 0.5, 0.8), 40).unwrap();
        for event in &traj.events {
            let n = table.surface.unit_normal(&event.point).unwrap();
            let cos_in = event.incoming.dot(&n);
            let cos_out = event.outgoing.dot(&n);
            assert!((cos_in + cos_out).abs() <= 1e-10);
        }
    }

    #[test]
    fn euclidean_flight_is_reversible() {
        let table = ellipsoid_table();
        let start = v3(0.2, 0.1, -0.3);
        let dir = v3(0.5, -0.7, 0.4);
        let forward = orbit(&table, &start, &dir, 50).unwrap();
        assert_eq!(forward.status, Termination::Completed);

        // Step slightly back inside along the final outgoing chord and shoot
        // the reversed direction: the first bounce re-hits the final point,
        // whose Euclidean reflection retraces the orbit backwards. The step
        // must exceed the relaunch offset or the re-hit is skipped.
        let last = forward.events.last().unwrap();
        let back_start = &last.point + 1e-6 * &last.outgoing;
        let backward = orbit(&table, &back_start, &(-last.outgoing.clone()), 50).unwrap();
        assert_eq!(backward.status, Termination::Completed);
        let n = forward.events.len();
        for (k, event) in backward.events.iter().enumerate() {
            let mirror = &forward.events[n - 1 - k];
            assert!(
                (&event.point - &mirror.point).norm() <= 1e-7,
                "reversal diverged at bounce {k}"
            );
        }
    }

    #[test]
    fn light_like_hit_terminates_cleanly() {
        let surface = ImplicitSurface::oriented_with_interior(
            SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
            &v3(0.0, 0.0, 0.0),
        )
        .unwrap();
        let field = TransverseField::QNormal(QuadraticForm::diagonal(&[1.0, 1.0, -1.0]).unwrap());
        let table = BilliardTable::new(surface, field, v3(0.0, 0.0, 0.0)).unwrap();
        // Aim straight at the light-like point (4/√5, 0, 1/√5).
        let target = v3(4.0 / 5.0f64.sqrt(), 0.0, 1.0 / 5.0f64.sqrt());
        let traj = orbit(&table, &v3(0.0, 0.0, 0.0), &target, 10).unwrap();
        assert_eq!(traj.status, Termination::LightLikeNormal);
        assert!(traj.events.is_empty());
    }

    #[test]
    fn march_finds_crossing_on_bumpy_table() {
        let e = parse_expression(
            "x1^2/4 + x2^2/2 + x3^2 - 1 + 0.05*sin(3*x1)*cos(2*x2)*sin(2*x3)",
            3,
        )
        .unwrap();
        let surface =
            ImplicitSurface::oriented_with_interior(SurfaceField::Implicit(e), &v3(0.0, 0.0, 0.0))
                .unwrap();
        let table =
            BilliardTable::new(surface, TransverseField::Euclidean, v3(0.0, 0.0, 0.0)).unwrap();
        let traj = orbit(&table, &v3(0.05, -0.1, 0.0), &v3(0.4, 0.6, 0.5), 25).unwrap();
        assert_eq!(traj.status, Termination::Completed);
        for event in &traj.events {
            assert!(table.surface.value(&event.point).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let table = ellipsoid_table();
        let traj = orbit(&table, &v3(0.0, 0.1, 0.0), &v3(0.2, 0.9, -0.1), 12).unwrap();
        let csv = traj.to_csv();
        let parsed = Trajectory::from_csv(&csv).unwrap();
        assert_eq!(parsed.events.len(), traj.events.len());
        for (a, b) in parsed.events.iter().zip(&traj.events) {
            assert_eq!(a.flight, b.flight);
            assert_eq!(a.point, b.point);
            assert_eq!(a.incoming, b.incoming);
            assert_eq!(a.outgoing, b.outgoing);
        }
        // Deterministic bytes.
        assert_eq!(csv, traj.to_csv());
    }

    #[test]
    fn orbit_rejects_exterior_start() {
        let table = sphere_table();
        assert!(matches!(
            orbit(&table, &v3(2.0, 0.0, 0.0), &v3(1.0, 0.0, 0.0), 5),
            Err(Error::Input(_))
        ));
    }
}
