//! Narrowband beamfocusing/beamsteering and wideband PS / TTD beamformers.
//!
//! Gain is `|sum_n a_n(p) w_n| / sqrt(N)` for unit-norm weights, so a matched
//! beam scores 1 and every value lies in `[0, 1]`.

use std::f64::consts::TAU;
use std::ops::Range;

use nalgebra::{DMatrix, Point3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{subcarrier_frequencies, ArrayGeometry, CarrierConfig, PolarPoint};
use crate::propagation::{
    array_response, array_response_with_speed, element_distances, planar_steering, spherical_steering,
};
use crate::{CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamDesign {
    Focus(PolarPoint),
    /// Steering angle in radians.
    Steer(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarrowbandBeamformer {
    /// Unit-norm weights.
    pub weights: CVector,
    pub design: BeamDesign,
    pub frequency: f64,
}

/// Conjugate spherical response, normalized: focuses energy at `p`.
pub fn focus_weights(geom: &ArrayGeometry, f: f64, p: &PolarPoint) -> Result<NarrowbandBeamformer> {
    if p.is_far_field() {
        return Err(Error::domain("beamfocusing needs a finite focal distance"));
    }
    let a = spherical_steering(geom, f, p)?;
    Ok(NarrowbandBeamformer {
        weights: a.normalized().map(|z| z.conj()),
        design: BeamDesign::Focus(*p),
        frequency: f,
    })
}

/// Conjugate planar response, normalized: steers energy toward `theta` at all distances.
pub fn steer_weights(geom: &ArrayGeometry, f: f64, theta: f64) -> Result<NarrowbandBeamformer> {
    let a = planar_steering(geom, f, theta)?;
    Ok(NarrowbandBeamformer {
        weights: a.normalized().map(|z| z.conj()),
        design: BeamDesign::Steer(theta),
        frequency: f,
    })
}

fn check_weights(geom: &ArrayGeometry, w: &CVector) -> Result<()> {
    if w.len() != geom.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} elements",
            w.len(),
            geom.len()
        )));
    }
    Ok(())
}

fn response_gain(a: &CVector, w: &CVector) -> f64 {
    let s: Complex64 = a.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
    (s.norm() / (a.len() as f64).sqrt()).min(1.0)
}

/// Normalized received energy of `w` at `p`; far-field points use the planar response.
pub fn gain(geom: &ArrayGeometry, f: f64, w: &NarrowbandBeamformer, p: &PolarPoint) -> Result<f64> {
    check_weights(geom, &w.weights)?;
    let a = array_response(geom, f, p)?;
    Ok(response_gain(&a.entries, &w.weights))
}

/// Gain over a polar grid. Row `i` is `angles[i]`, column `j` is `distances[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMap {
    pub angles: Vec<f64>,
    pub distances: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl GainMap {
    /// `(row, col)` of the largest value; the first one in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if self.values[(i, j)] > self.values[best] {
                    best = (i, j);
                }
            }
        }
        best
    }
}

fn check_grids(angles: &[f64], distances: &[f64]) -> Result<()> {
    if angles.is_empty() || distances.is_empty() {
        return Err(Error::invalid("gain-map grids must be non-empty"));
    }
    Ok(())
}

fn map_with<F>(angles: &[f64], distances: &[f64], cell: F) -> Result<DMatrix<f64>>
where
    F: Fn(&PolarPoint) -> Result<f64> + Sync,
{
    let rows = angles
        .par_iter()
        .map(|&theta| {
            distances
                .iter()
                .map(|&r| cell(&PolarPoint::new(theta, r)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(angles.len(), distances.len(), |i, j| rows[i][j]))
}

/// Gain of a narrowband beamformer at every grid point (angles in radians, distances in meters).
pub fn gain_map(
    geom: &ArrayGeometry,
    f: f64,
    w: &NarrowbandBeamformer,
    angles: &[f64],
    distances: &[f64],
) -> Result<GainMap> {
    check_grids(angles, distances)?;
    check_weights(geom, &w.weights)?;
    let values = map_with(angles, distances, |p| {
        Ok(response_gain(&array_response(geom, f, p)?.entries, &w.weights))
    })?;
    Ok(GainMap {
        angles: angles.to_vec(),
        distances: distances.to_vec(),
        values,
    })
}

/// Frequency-flat phase shifts plus one true-time delay per contiguous subarray.
///
/// Effective weights at frequency `f` are
/// `exp(j ps_n) exp(-j 2 pi f t_l(n)) / sqrt(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WidebandBeamformer {
    ps_phases: Vec<f64>,
    ttd_delays: Vec<f64>,
    partition: Vec<Range<usize>>,
    target: PolarPoint,
}

impl WidebandBeamformer {
    pub fn ps_phases(&self) -> &[f64] {
        &self.ps_phases
    }

    /// Seconds, one per subarray, smallest equal to 0.
    pub fn ttd_delays(&self) -> &[f64] {
        &self.ttd_delays
    }

    pub fn partition(&self) -> &[Range<usize>] {
        &self.partition
    }

    pub fn target(&self) -> PolarPoint {
        self.target
    }

    pub fn len(&self) -> usize {
        self.ps_phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ps_phases.is_empty()
    }

    /// Unit-norm effective weights at frequency `f`.
    pub fn weights_at(&self, f: f64) -> CVector {
        let scale = 1.0 / (self.len() as f64).sqrt();
        let mut w = CVector::zeros(self.len());
        for (block, &t) in self.partition.iter().zip(&self.ttd_delays) {
            for n in block.clone() {
                w[n] = Complex64::from_polar(scale, self.ps_phases[n] - TAU * f * t);
            }
        }
        w
    }
}

/// Phase-shifter-only design matched to the spherical response at the carrier.
pub fn ps_wideband(geom: &ArrayGeometry, carrier: &CarrierConfig, p: &PolarPoint) -> Result<WidebandBeamformer> {
    let n = geom.len();
    let partition: Vec<Range<usize>> = (0..n).map(|i| i..i + 1).collect();
    design_with_partition(geom, carrier, p, partition, false)
}

/// Phase-delay focusing with `num_subarrays` contiguous equal subarrays.
///
/// Each subarray gets a true-time delay that aligns its center toward `p`
/// across the band; phase shifters inside the subarray compensate the exact
/// spherical phase at the carrier relative to the subarray center.
pub fn ttd_pdf(
    geom: &ArrayGeometry,
    carrier: &CarrierConfig,
    p: &PolarPoint,
    num_subarrays: usize,
) -> Result<WidebandBeamformer> {
    let n = geom.len();
    if num_subarrays == 0 || !n.is_multiple_of(num_subarrays) {
        return Err(Error::invalid(format!(
            "{num_subarrays} subarrays do not divide {n} antennas"
        )));
    }
    let size = n / num_subarrays;
    let partition: Vec<Range<usize>> = (0..num_subarrays).map(|l| l * size..(l + 1) * size).collect();
    design_with_partition(geom, carrier, p, partition, true)
}

fn design_with_partition(
    geom: &ArrayGeometry,
    carrier: &CarrierConfig,
    p: &PolarPoint,
    partition: Vec<Range<usize>>,
    delays: bool,
) -> Result<WidebandBeamformer> {
    if p.is_far_field() {
        return Err(Error::domain("wideband focusing needs a finite target distance"));
    }
    let distances = element_distances(geom, p)?;
    let kc = carrier.wavenumber(carrier.center_frequency());
    let target = p.to_cartesian();

    let mut ps_phases = vec![0.0; geom.len()];
    let mut ttd_delays = Vec::with_capacity(partition.len());
    for block in &partition {
        let r_l = if delays {
            let members = &geom.elements()[block.clone()];
            let sum = members.iter().fold(Point3::origin(), |acc, e| acc + e.coords);
            (sum / members.len() as f64 - target).norm()
        } else {
            p.r()
        };
        for n in block.clone() {
            ps_phases[n] = kc * (distances[n] - r_l);
        }
        ttd_delays.push(r_l);
    }
    // A subarray closer to the target must wait longer: t_l = (max r - r_l) / c.
    let far = ttd_delays.iter().copied().fold(f64::MIN, f64::max);
    for t in &mut ttd_delays {
        *t = if delays {
            (far - *t) / carrier.propagation_speed()
        } else {
            0.0
        };
    }
    Ok(WidebandBeamformer {
        ps_phases,
        ttd_delays,
        partition,
        target: *p,
    })
}

fn wideband_gain_at(
    geom: &ArrayGeometry,
    carrier: &CarrierConfig,
    wb: &WidebandBeamformer,
    f: f64,
    p: &PolarPoint,
) -> Result<f64> {
    let a = array_response_with_speed(geom, f, p, carrier.propagation_speed())?;
    Ok(response_gain(&a.entries, &wb.weights_at(f)))
}

/// `(frequency, gain)` at every subcarrier, in ascending frequency.
pub fn gain_vs_frequency(
    geom: &ArrayGeometry,
    carrier: &CarrierConfig,
    wb: &WidebandBeamformer,
    p: &PolarPoint,
) -> Result<Vec<(f64, f64)>> {
    if wb.len() != geom.len() {
        return Err(Error::invalid("beamformer and geometry sizes differ"));
    }
    subcarrier_frequencies(carrier)
        .into_par_iter()
        .map(|f| Ok((f, wideband_gain_at(geom, carrier, wb, f, p)?)))
        .collect()
}

/// Grid location of the strongest gain at one subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FocalPoint {
    pub frequency: f64,
    pub angle_index: usize,
    pub distance_index: usize,
    pub theta: f64,
    pub r: f64,
    pub gain: f64,
}

/// Per-subcarrier argmax of the wideband gain map.
pub fn focal_point_map(
    geom: &ArrayGeometry,
    carrier: &CarrierConfig,
    wb: &WidebandBeamformer,
    angles: &[f64],
    distances: &[f64],
) -> Result<Vec<FocalPoint>> {
    check_grids(angles, distances)?;
    if wb.len() != geom.len() {
        return Err(Error::invalid("beamformer and geometry sizes differ"));
    }
    subcarrier_frequencies(carrier)
        .into_iter()
        .map(|f| {
            let values = map_with(angles, distances, |p| wideband_gain_at(geom, carrier, wb, f, p))?;
            let map = GainMap {
                angles: angles.to_vec(),
                distances: distances.to_vec(),
                values,
            };
            let (i, j) = map.argmax();
            Ok(FocalPoint {
                frequency: f,
                angle_index: i,
                distance_index: j,
                theta: angles[i],
                r: distances[j],
                gain: map.values[(i, j)],
            })
        })
        .collect()
}
