//! Near-field / far-field boundary calculators.
//!
//! Closed forms follow the classical phase-error construction: the planar
//! approximation is accepted once the worst element phase error drops below
//! `pi / 8`, which gives `2 D^2 / lambda` for a single array and
//! `2 (D_tx + D_rx)^2 / lambda` for a MIMO link. Numeric variants evaluate
//! the exact geometry instead of the second-order Taylor bound.

use std::f64::consts::PI;

use serde::Serialize;

use crate::model::{ArrayGeometry, PolarPoint};
use crate::propagation::{phase_discrepancy, planar_steering, spherical_steering};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Default phase-error threshold.
pub const PHASE_THRESHOLD: f64 = PI / 8.0;

/// Default normalized gain floor of the effective Rayleigh distance.
pub const DEFAULT_GAIN_FLOOR: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundaryCriterion {
    #[serde(rename = "PHASE_PI_OVER_8")]
    PhasePiOver8,
    GainThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub closed_form: f64,
    pub numeric: Option<f64>,
    pub criterion: BoundaryCriterion,
    pub inputs: BoundaryInputs,
}

/// Echo of whatever inputs produced a report. Unused fields stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BoundaryInputs {
    pub scenario: String,
    pub aperture_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aperture_rx_m: Option<f64>,
    pub wavelength_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d1_m: Option<f64>,
}

/// `2 D^2 / lambda`.
pub fn rayleigh_distance(aperture: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_aperture(aperture, "aperture")?;
    Ok(2.0 * aperture * aperture / lambda)
}

/// `2 (D_tx + D_rx)^2 / lambda`.
pub fn mimo_rayleigh_distance(d_tx: f64, d_rx: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_aperture(d_tx, "tx aperture")?;
    check_aperture(d_rx, "rx aperture")?;
    let sum = d_tx + d_rx;
    Ok(2.0 * sum * sum / lambda)
}

/// Effective distance of a two-hop RIS link, `d1 d2 / (d1 + d2)`.
///
/// The link is near-field whenever this value is below the RIS Rayleigh
/// distance. An infinite `d1` collapses to the single-hop distance `d2`.
pub fn ris_effective_distance(d1: f64, d2: f64) -> Result<f64> {
    for (label, d) in [("d1", d1), ("d2", d2)] {
        if !(d > 0.0) {
            return Err(Error::invalid(format!("{label} must be > 0, got {d}")));
        }
    }
    Ok(match (d1.is_infinite(), d2.is_infinite()) {
        (true, true) => f64::INFINITY,
        (true, false) => d2,
        (false, true) => d1,
        (false, false) => d1 * d2 / (d1 + d2),
    })
}

/// True when the RIS cascade at `(d1, d2)` lies inside the near-field region.
pub fn ris_is_near_field(aperture: f64, lambda: f64, d1: f64, d2: f64) -> Result<bool> {
    Ok(ris_effective_distance(d1, d2)? < rayleigh_distance(aperture, lambda)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RisThreshold {
    /// Every `d2` below this value is near-field.
    Bounded(f64),
    /// `d1` is already inside the Rayleigh distance, so every `d2` is near-field.
    Unbounded,
}

/// Solves `d1 d2 / (d1 + d2) = 2 D^2 / lambda` for `d2`.
pub fn ris_boundary_d2(aperture: f64, lambda: f64, d1: f64) -> Result<RisThreshold> {
    if !(d1 > 0.0) {
        return Err(Error::invalid(format!("d1 must be > 0, got {d1}")));
    }
    let r = rayleigh_distance(aperture, lambda)?;
    if d1 <= r {
        return Ok(RisThreshold::Unbounded);
    }
    if d1.is_infinite() {
        return Ok(RisThreshold::Bounded(r));
    }
    Ok(RisThreshold::Bounded(r * d1 / (d1 - r)))
}

/// Distance at which the exact worst-element phase error equals `pi / 8`.
pub fn numeric_phase_boundary(geom: &ArrayGeometry, f: f64, theta: f64) -> Result<f64> {
    numeric_phase_boundary_at(geom, f, theta, PHASE_THRESHOLD)
}

/// [`numeric_phase_boundary`] with a custom phase threshold.
///
/// Bisects on `r` in `[aperture, 1e4 * 2 D^2 / lambda]` to a relative
/// tolerance of `1e-6`. When the discrepancy at `r = aperture` is already below
/// the threshold (very small arrays), the lower bracket is pulled in to just
/// outside the array hull.
pub fn numeric_phase_boundary_at(geom: &ArrayGeometry, f: f64, theta: f64, threshold: f64) -> Result<f64> {
    let d = geom.aperture();
    if !(d > 0.0) {
        return Err(Error::invalid("numeric boundary needs an aperture > 0"));
    }
    if !(threshold > 0.0) {
        return Err(Error::invalid("phase threshold must be > 0"));
    }
    let lambda = SPEED_OF_LIGHT / f;
    let disc = |r: f64| -> Result<f64> { phase_discrepancy(geom, f, &PolarPoint::new(theta, r)?) };

    let mut lo = d;
    if disc(lo)? < threshold {
        lo = 0.5 * d * (1.0 + 1e-9);
    }
    let mut hi = 1e4 * rayleigh_distance(d, lambda)?;
    let (d_lo, d_hi) = (disc(lo)?, disc(hi)?);
    if !(d_lo >= threshold && d_hi <= threshold) {
        return Err(Error::numeric(
            "phase boundary not bracketed",
            format!("r in [{lo}, {hi}] gives discrepancy [{d_lo}, {d_hi}], target {threshold}"),
        ));
    }
    while (hi - lo) > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if disc(mid)? > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Normalized gain of a far-field beam toward `theta` on the true spherical
/// response at `(theta, r)`.
fn steering_gain(geom: &ArrayGeometry, f: f64, theta: f64, r: f64) -> Result<f64> {
    let pl = planar_steering(geom, f, theta)?;
    let sph = spherical_steering(geom, f, &PolarPoint::new(theta, r)?)?;
    Ok(sph.entries.dotc(&pl.entries).norm() / geom.len() as f64)
}

const ERD_SAMPLES: usize = 512;

/// Smallest distance beyond which a far-field beam keeps at least
/// `gain_floor` of its ideal normalized gain.
///
/// The gain curve is sampled on a logarithmic grid from the array hull to
/// `1e4` Rayleigh distances; it must be non-decreasing over the part that
/// matters (from the last sample below the floor outward), otherwise a
/// numeric error carrying the sampled curve is returned.
pub fn effective_rayleigh_distance(geom: &ArrayGeometry, f: f64, theta: f64, gain_floor: f64) -> Result<f64> {
    if !(gain_floor > 0.0 && gain_floor < 1.0) {
        return Err(Error::invalid(format!(
            "gain_floor must lie in (0, 1), got {gain_floor}"
        )));
    }
    let d = geom.aperture();
    if d == 0.0 {
        return Ok(0.0);
    }
    let lambda = SPEED_OF_LIGHT / f;
    let lo = 0.5 * d * (1.0 + 1e-6);
    let hi = 1e4 * rayleigh_distance(d, lambda)?.max(d);
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..ERD_SAMPLES)
        .map(|i| lo * (ratio * i as f64 / (ERD_SAMPLES - 1) as f64).exp())
        .collect();
    let gains = grid
        .iter()
        .map(|&r| steering_gain(geom, f, theta, r))
        .collect::<Result<Vec<_>>>()?;

    let Some(last_below) = gains.iter().rposition(|&g| g < gain_floor) else {
        return Ok(lo);
    };
    if last_below == ERD_SAMPLES - 1 {
        return Err(Error::numeric(
            "gain floor not reached within the search range",
            format!("gain at r = {hi} m is {}", gains[last_below]),
        ));
    }
    let tail = &gains[last_below..];
    if tail.windows(2).any(|w| w[1] + 1e-12 < w[0]) {
        let curve: Vec<String> = grid[last_below..]
            .iter()
            .zip(tail)
            .map(|(r, g)| format!("{r:.6e}:{g:.9}"))
            .collect();
        return Err(Error::numeric(
            "gain-vs-distance curve is not monotone",
            curve.join(","),
        ));
    }

    let (mut a, mut b) = (grid[last_below], grid[last_below + 1]);
    while (b - a) > 1e-9 * b {
        let mid = 0.5 * (a + b);
        if steering_gain(geom, f, theta, mid)? < gain_floor {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(b)
}

/// Closed-form SIMO/MISO report, with a numeric check when a geometry is supplied.
pub fn simo_report(aperture: f64, lambda: f64, numeric: Option<(&ArrayGeometry, f64)>) -> Result<BoundaryReport> {
    let closed_form = rayleigh_distance(aperture, lambda)?;
    let (numeric, theta) = match numeric {
        Some((geom, theta)) => (
            Some(numeric_phase_boundary(geom, SPEED_OF_LIGHT / lambda, theta)?),
            Some(theta),
        ),
        None => (None, None),
    };
    Ok(BoundaryReport {
        closed_form,
        numeric,
        criterion: BoundaryCriterion::PhasePiOver8,
        inputs: BoundaryInputs {
            scenario: "simo".into(),
            aperture_m: aperture,
            wavelength_m: lambda,
            theta_rad: theta,
            ..Default::default()
        },
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("wavelength must be > 0, got {lambda}")));
    }
    Ok(())
}

fn check_aperture(d: f64, label: &str) -> Result<()> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!("{label} must be >= 0, got {d}")));
    }
    Ok(())
}
