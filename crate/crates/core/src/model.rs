//! Geometric and spectral configuration shared by every other module.
//!
//! Arrays lie in the x (ULA) or x-y (UPA) plane, centered at the origin. A
//! [`PolarPoint`] `(theta, r)` maps to `(r sin(theta), 0, r cos(theta))`, so
//! `theta` is measured off boresight (the z axis).

use std::f64::consts::FRAC_PI_2;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Explicit 3D element positions of an antenna array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    name: String,
    elements: Vec<Point3<f64>>,
    aperture: f64,
}

impl ArrayGeometry {
    /// Builds a geometry from arbitrary positions. The aperture is the maximum
    /// pairwise element distance.
    pub fn new(name: impl Into<String>, elements: Vec<Point3<f64>>) -> Result<Self> {
        validate_elements(&elements)?;
        let aperture = max_pairwise_distance(&elements);
        Ok(Self {
            name: name.into(),
            elements,
            aperture,
        })
    }

    fn with_aperture(name: String, elements: Vec<Point3<f64>>, aperture: f64) -> Result<Self> {
        validate_elements(&elements)?;
        Ok(Self {
            name,
            elements,
            aperture,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn elements(&self) -> &[Point3<f64>] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Maximum distance between any two elements, in meters.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// x coordinates of all elements, in order.
    pub fn x_coords(&self) -> impl Iterator<Item = f64> + '_ {
        self.elements.iter().map(|p| p.x)
    }

    /// Returns a copy with every element shifted by `offset`. The aperture is
    /// recomputed from the shifted positions.
    pub fn translated(&self, offset: [f64; 3]) -> Result<Self> {
        let elements = self
            .elements
            .iter()
            .map(|p| Point3::new(p.x + offset[0], p.y + offset[1], p.z + offset[2]))
            .collect();
        Self::new(self.name.clone(), elements)
    }

    /// Checks that a finite polar point lies outside the array hull, taken as
    /// the sphere of radius `aperture / 2` about the origin.
    pub(crate) fn check_outside(&self, p: &PolarPoint) -> Result<()> {
        if p.is_far_field() {
            return Ok(());
        }
        if p.r() <= self.aperture / 2.0 {
            return Err(Error::domain(format!(
                "point at r = {} m lies inside the hull of array `{}` (aperture {} m)",
                p.r(),
                self.name,
                self.aperture
            )));
        }
        Ok(())
    }
}

fn validate_elements(elements: &[Point3<f64>]) -> Result<()> {
    if elements.is_empty() {
        return Err(Error::invalid("array must contain at least one element"));
    }
    if let Some(i) = elements
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        return Err(Error::invalid(format!("element {i} has non-finite coordinates")));
    }
    let mut sorted: Vec<[u64; 3]> = elements
        .iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("element positions must be unique"));
    }
    Ok(())
}

fn max_pairwise_distance(elements: &[Point3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in elements.iter().enumerate() {
        for b in &elements[i + 1..] {
            best = best.max(nalgebra::distance(a, b));
        }
    }
    best
}

/// Uniform linear array of `n` elements along the x axis, centered at the origin.
pub fn build_ula(n: usize, spacing: f64) -> Result<ArrayGeometry> {
    if n == 0 {
        return Err(Error::invalid("ULA element count must be >= 1"));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid(format!("ULA spacing must be > 0, got {spacing}")));
    }
    let mid = (n as f64 - 1.0) / 2.0;
    let elements = (0..n)
        .map(|i| Point3::new((i as f64 - mid) * spacing, 0.0, 0.0))
        .collect();
    ArrayGeometry::with_aperture(format!("ula{n}"), elements, (n as f64 - 1.0) * spacing)
}

/// Uniform planar array in the x-y plane, centered at the origin. The
/// aperture is the panel diagonal.
pub fn build_upa(nx: usize, ny: usize, spacing_x: f64, spacing_y: f64) -> Result<ArrayGeometry> {
    if nx == 0 || ny == 0 {
        return Err(Error::invalid("UPA element counts must be >= 1"));
    }
    for (label, s) in [("spacing_x", spacing_x), ("spacing_y", spacing_y)] {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::invalid(format!("UPA {label} must be > 0, got {s}")));
        }
    }
    let mx = (nx as f64 - 1.0) / 2.0;
    let my = (ny as f64 - 1.0) / 2.0;
    let mut elements = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            elements.push(Point3::new(
                (ix as f64 - mx) * spacing_x,
                (iy as f64 - my) * spacing_y,
                0.0,
            ));
        }
    }
    let wx = (nx as f64 - 1.0) * spacing_x;
    let wy = (ny as f64 - 1.0) * spacing_y;
    ArrayGeometry::with_aperture(format!("upa{nx}x{ny}"), elements, wx.hypot(wy))
}

/// Center frequency, bandwidth and subcarrier layout of a (possibly wideband) carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierConfig {
    center_frequency: f64,
    bandwidth: f64,
    num_subcarriers: usize,
    propagation_speed: f64,
}

impl CarrierConfig {
    pub fn new(center_frequency: f64, bandwidth: f64, num_subcarriers: usize) -> Result<Self> {
        Self::with_speed(center_frequency, bandwidth, num_subcarriers, SPEED_OF_LIGHT)
    }

    /// Narrowband carrier: zero bandwidth, one subcarrier.
    pub fn narrowband(center_frequency: f64) -> Result<Self> {
        Self::new(center_frequency, 0.0, 1)
    }

    pub fn with_speed(
        center_frequency: f64,
        bandwidth: f64,
        num_subcarriers: usize,
        propagation_speed: f64,
    ) -> Result<Self> {
        if !(center_frequency > 0.0 && center_frequency.is_finite()) {
            return Err(Error::invalid(format!(
                "center_frequency must be > 0, got {center_frequency}"
            )));
        }
        if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid(format!("bandwidth must be >= 0, got {bandwidth}")));
        }
        if bandwidth >= 2.0 * center_frequency {
            return Err(Error::invalid(
                "bandwidth must be < 2 * center_frequency so every subcarrier is positive",
            ));
        }
        if num_subcarriers == 0 {
            return Err(Error::invalid("num_subcarriers must be >= 1"));
        }
        if !(propagation_speed > 0.0 && propagation_speed.is_finite()) {
            return Err(Error::invalid(format!(
                "propagation_speed must be > 0, got {propagation_speed}"
            )));
        }
        Ok(Self {
            center_frequency,
            bandwidth,
            num_subcarriers,
            propagation_speed,
        })
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn num_subcarriers(&self) -> usize {
        self.num_subcarriers
    }

    pub fn propagation_speed(&self) -> f64 {
        self.propagation_speed
    }

    /// Wavenumber `2 pi f / c` at an arbitrary frequency.
    pub fn wavenumber(&self, frequency: f64) -> f64 {
        2.0 * std::f64::consts::PI * frequency / self.propagation_speed
    }
}

/// Wavelength at the center frequency.
pub fn wavelength(carrier: &CarrierConfig) -> f64 {
    carrier.propagation_speed / carrier.center_frequency
}

/// Subcarrier frequencies spanning `[fc - B/2, fc + B/2]`, endpoints included.
pub fn subcarrier_frequencies(carrier: &CarrierConfig) -> Vec<f64> {
    let m = carrier.num_subcarriers;
    let fc = carrier.center_frequency;
    if m == 1 {
        return vec![fc];
    }
    let lo = fc - carrier.bandwidth / 2.0;
    let step = carrier.bandwidth / (m as f64 - 1.0);
    (0..m)
        .map(|i| {
            // Mirror the upper half so the list is exactly symmetric about fc.
            let j = m - 1 - i;
            if i <= j {
                lo + i as f64 * step
            } else {
                2.0 * fc - (lo + j as f64 * step)
            }
        })
        .collect()
}

/// A location relative to an array center: angle off boresight and distance.
/// `r = inf` is the far-field sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    theta: f64,
    r: f64,
}

impl PolarPoint {
    pub fn new(theta: f64, r: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > -FRAC_PI_2 && theta < FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "theta must lie strictly inside (-pi/2, pi/2), got {theta}"
            )));
        }
        if !(r > 0.0) {
            return Err(Error::invalid(format!("distance must be > 0, got {r}")));
        }
        Ok(Self { theta, r })
    }

    pub fn from_degrees(theta_deg: f64, r: f64) -> Result<Self> {
        Self::new(theta_deg.to_radians(), r)
    }

    pub fn far_field(theta: f64) -> Result<Self> {
        Self::new(theta, f64::INFINITY)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn is_far_field(&self) -> bool {
        self.r.is_infinite()
    }

    /// Cartesian image `(r sin theta, 0, r cos theta)`. Only meaningful for finite `r`.
    pub fn to_cartesian(&self) -> Point3<f64> {
        Point3::new(self.r * self.theta.sin(), 0.0, self.r * self.theta.cos())
    }
}

/// Per-path amplitude law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// Unit modulus everywhere; phase-only studies.
    #[default]
    Unit,
    /// Friis amplitude `lambda / (4 pi d)`.
    FreeSpace,
}
