//! Numerical laboratory for billiards with generalized reflection laws.
//!
//! The crate covers three reflection laws on tables in `ℝᵈ` — the Euclidean
//! mirror law, reflection with respect to a constant nondegenerate quadratic
//! form, and the projective law induced by a field of transverse lines — and
//! the verification machinery around their caustics:
//!
//! - [`geom`]: quadrics, pseudo-confocal pencils, line tangency spectra and
//!   cross-ratios;
//! - [`expr`]: expression parsing with exact forward-mode gradients for
//!   user-defined surfaces and fields;
//! - [`surface`]: implicit surfaces, normals, shape operator, principal
//!   curvatures;
//! - [`reflect`]: the reflection laws and transverse fields;
//! - [`flow`]: ray-boundary intersection and orbit iteration;
//! - [`caustic`]: conservation of tangency spectra along orbits;
//! - [`symmetry`]: the transverse-symmetry criterion;
//! - [`cone`]: adapted frames, the partial-cone direction field and the
//!   symmetric ⇔ quadratic-cone dichotomy.
//!
//! ```
//! use billiards::caustic::conservation_report;
//! use billiards::flow::{orbit, BilliardTable};
//! use billiards::geom::{CentralQuadric, PseudoConfocalPencil};
//! use billiards::reflect::TransverseField;
//! use billiards::surface::{ImplicitSurface, SurfaceField};
//! use nalgebra::DVector;
//!
//! let center = DVector::from_vec(vec![0.0, 0.0, 0.0]);
//! let surface = ImplicitSurface::oriented_with_interior(
//!     SurfaceField::Quadric(CentralQuadric::diagonal(&[0.25, 0.5, 1.0])),
//!     &center,
//! )?;
//! let table = BilliardTable::new(surface, TransverseField::Euclidean, center.clone())?;
//!
//! let direction = DVector::from_vec(vec![1.0, 0.3, 0.2]);
//! let trajectory = orbit(&table, &center, &direction, 50)?;
//!
//! // Chords of the ellipsoid stay tangent to the same two confocal
//! // quadrics bounce after bounce.
//! let pencil = PseudoConfocalPencil::new(vec![4.0, 2.0, 1.0], 3)?;
//! let report = conservation_report(&trajectory, &pencil, 1e-8)?;
//! assert!(report.pass);
//! assert_eq!(report.slots.len(), 2);
//! # Ok::<(), billiards::Error>(())
//! ```

pub mod caustic;
pub mod cone;
pub mod error;
pub mod expr;
pub mod flow;
pub mod geom;
pub mod reflect;
pub mod surface;
pub mod symmetry;

pub use error::{Error, Result};
