//! Caustic verification: conservation of pencil tangency spectra along
//! orbits and tangency to a fixed quadric.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::geom::{
    tangency_discriminant, tangency_spectrum_with, CentralQuadric, PseudoConfocalPencil,
    SpectrumOptions,
};

/// One conserved spectral slot: its baseline parameter and the maximum
/// relative drift observed along the trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct SlotReport {
    pub lambda0: f64,
    pub max_dev: f64,
}

/// Conservation report for a trajectory against a pencil. Deviations are
/// relative: `|λ(k) − λ(0)| / max(1, |λ(0)|)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConservationReport {
    pub slots: Vec<SlotReport>,
    pub pass: bool,
    pub segments: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub mismatched_segments: Vec<usize>,
}

/// Per-segment tangency spectra paired across segments by value proximity.
/// Pole-flagged roots participate in pairing but are excluded from the
/// pass/fail deviation.
pub fn conservation_report(
    trajectory: &Trajectory,
    pencil: &PseudoConfocalPencil,
    tolerance: f64,
) -> Result<ConservationReport> {
    conservation_report_with(trajectory, pencil, tolerance, &SpectrumOptions::default())
}

pub fn conservation_report_with(
    trajectory: &Trajectory,
    pencil: &PseudoConfocalPencil,
    tolerance: f64,
    options: &SpectrumOptions,
) -> Result<ConservationReport> {
    if trajectory.events.len() < 2 {
        return Err(Error::Input(
            "conservation needs a trajectory with at least two events".into(),
        ));
    }
    let lines = trajectory.segment_lines();
    let mut spectra = Vec::with_capacity(lines.len());
    for line in &lines {
        let roots = tangency_spectrum_with(pencil, line, options)?;
        let clean: Vec<f64> = roots
            .iter()
            .filter(|r| !r.at_pole)
            .map(|r| r.lambda)
            .collect();
        spectra.push(clean);
    }

    let baseline = &spectra[0];
    let mut slots: Vec<SlotReport> = baseline
        .iter()
        .map(|&lambda0| SlotReport {
            lambda0,
            max_dev: 0.0,
        })
        .collect();
    let mut mismatched = Vec::new();
    for (k, spectrum) in spectra.iter().enumerate().skip(1) {
        if spectrum.len() != baseline.len() {
            mismatched.push(k);
        }
        for slot in slots.iter_mut() {
            // Nearest-value pairing; ties broken by order.
            let nearest = spectrum
                .iter()
                .map(|&l| (l - slot.lambda0).abs())
                .fold(f64::INFINITY, f64::min);
            if nearest.is_finite() {
                let dev = nearest / slot.lambda0.abs().max(1.0);
                if dev > slot.max_dev {
                    slot.max_dev = dev;
                }
            } else {
                mismatched.push(k);
            }
        }
    }
    mismatched.sort_unstable();
    mismatched.dedup();
    let pass = slots.iter().all(|s| s.max_dev <= tolerance) && mismatched.is_empty();
    Ok(ConservationReport {
        slots,
        pass,
        segments: lines.len(),
        mismatched_segments: mismatched,
    })
}

/// Tangency-to-a-fixed-quadric report.
#[derive(Debug, Clone, Serialize)]
pub struct TangencyReport {
    pub residuals: Vec<f64>,
    pub pass: bool,
}

/// Check that every flight segment stays tangent to `quadric`. The first
/// segment must already be tangent within `1e-8`.
pub fn caustic_tangency_check(
    trajectory: &Trajectory,
    quadric: &CentralQuadric,
    tolerance: f64,
) -> Result<TangencyReport> {
    let lines = trajectory.segment_lines();
    if lines.is_empty() {
        return Err(Error::Input("empty trajectory".into()));
    }
    let first = tangency_discriminant(quadric, &lines[0]).abs();
    if first > 1e-8 {
        return Err(Error::Input(format!(
            "first segment is not tangent to the quadric: |disc| = {first:.3e}"
        )));
    }
    let residuals: Vec<f64> = lines
        .iter()
        .map(|line| tangency_discriminant(quadric, line).abs())
        .collect();
    let pass = residuals.iter().all(|&r| r <= tolerance);
    Ok(TangencyReport { residuals, pass })
}
