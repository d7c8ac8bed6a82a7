//! Array responses and channel synthesis.
//!
//! Narrowband functions take a frequency in Hz and use [`SPEED_OF_LIGHT`];
//! wideband functions use the carrier's propagation speed.

use nalgebra::{Point3, Rotation3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{subcarrier_frequencies, AmplitudeModel, ArrayGeometry, CarrierConfig, PolarPoint};
use crate::{CMatrix, CVector, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SteeringModel {
    Spherical,
    Planar,
}

/// Unit-modulus array response at one frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: CVector,
    pub frequency: f64,
    pub model: SteeringModel,
}

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The response scaled to unit Euclidean norm.
    pub fn normalized(&self) -> CVector {
        let n = self.entries.len() as f64;
        self.entries.unscale(n.sqrt())
    }
}

/// Complex channel matrix, `rx x tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub entries: CMatrix,
    pub frequency: f64,
    pub tag: String,
}

/// One propagation path: complex gain and location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub gain: Complex64,
    pub point: PolarPoint,
}

/// Phase factor `exp(-j phase)`.
#[inline]
pub(crate) fn cis_neg(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, -s)
}

/// Distances from every element to the Cartesian image of `p`.
pub fn element_distances(geom: &ArrayGeometry, p: &PolarPoint) -> Result<Vec<f64>> {
    if p.is_far_field() {
        return Err(Error::UnsupportedModel(
            "element distances are undefined for a far-field location".into(),
        ));
    }
    geom.check_outside(p)?;
    let src = p.to_cartesian();
    Ok(geom.elements().iter().map(|e| nalgebra::distance(e, &src)).collect())
}

/// Exact spherical-wave response, `exp(-j 2 pi f (r_n - r) / c)`.
pub fn spherical_steering(geom: &ArrayGeometry, f: f64, p: &PolarPoint) -> Result<SteeringVector> {
    spherical_with_speed(geom, f, p, SPEED_OF_LIGHT)
}

fn spherical_with_speed(geom: &ArrayGeometry, f: f64, p: &PolarPoint, speed: f64) -> Result<SteeringVector> {
    let k = 2.0 * std::f64::consts::PI * f / speed;
    let distances = element_distances(geom, p)?;
    let entries = CVector::from_iterator(distances.len(), distances.iter().map(|&rn| cis_neg(k * (rn - p.r()))));
    Ok(SteeringVector {
        entries,
        frequency: f,
        model: SteeringModel::Spherical,
    })
}

/// First-order (planar wavefront) response, `exp(+j 2 pi f x_n sin(theta) / c)`.
pub fn planar_steering(geom: &ArrayGeometry, f: f64, theta: f64) -> Result<SteeringVector> {
    planar_with_speed(geom, f, theta, SPEED_OF_LIGHT)
}

fn planar_with_speed(geom: &ArrayGeometry, f: f64, theta: f64, speed: f64) -> Result<SteeringVector> {
    // Validates the angle range.
    PolarPoint::far_field(theta)?;
    let k = 2.0 * std::f64::consts::PI * f / speed;
    let s = theta.sin();
    let entries = CVector::from_iterator(geom.len(), geom.x_coords().map(|x| cis_neg(-k * x * s)));
    Ok(SteeringVector {
        entries,
        frequency: f,
        model: SteeringModel::Planar,
    })
}

/// Spherical response for finite points, planar response for the far-field sentinel.
pub fn array_response(geom: &ArrayGeometry, f: f64, p: &PolarPoint) -> Result<SteeringVector> {
    if p.is_far_field() {
        planar_steering(geom, f, p.theta())
    } else {
        spherical_steering(geom, f, p)
    }
}

pub(crate) fn array_response_with_speed(
    geom: &ArrayGeometry,
    f: f64,
    p: &PolarPoint,
    speed: f64,
) -> Result<SteeringVector> {
    if p.is_far_field() {
        planar_with_speed(geom, f, p.theta(), speed)
    } else {
        spherical_with_speed(geom, f, p, speed)
    }
}

/// Largest unwrapped phase error of the planar approximation over all elements.
pub fn phase_discrepancy(geom: &ArrayGeometry, f: f64, p: &PolarPoint) -> Result<f64> {
    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
    let s = p.theta().sin();
    let distances = element_distances(geom, p)?;
    Ok(distances
        .iter()
        .zip(geom.x_coords())
        .map(|(&rn, x)| (k * ((rn - p.r()) + x * s)).abs())
        .fold(0.0, f64::max))
}

/// Narrowband multipath channel `sum_l g_l a(p_l)`.
pub fn multipath_channel(
    geom: &ArrayGeometry,
    f: f64,
    paths: &[PathSpec],
    amplitude: AmplitudeModel,
) -> Result<CVector> {
    if paths.is_empty() {
        return Err(Error::invalid("multipath channel needs at least one path"));
    }
    let lambda = SPEED_OF_LIGHT / f;
    let mut h = CVector::zeros(geom.len());
    for path in paths {
        let scale = match amplitude {
            AmplitudeModel::Unit => 1.0,
            AmplitudeModel::FreeSpace if path.point.is_far_field() => {
                return Err(Error::UnsupportedModel(
                    "free-space amplitude needs a finite path distance".into(),
                ))
            }
            AmplitudeModel::FreeSpace => lambda / (4.0 * std::f64::consts::PI * path.point.r()),
        };
        let a = array_response(geom, f, &path.point)?;
        h.axpy(path.gain * scale, &a.entries, Complex64::new(1.0, 0.0));
    }
    Ok(h)
}

/// Element-pair LoS channel between two arrays. The receive array is rotated
/// by `rx_orientation` about its own center, then placed at `rx_center`.
pub fn los_mimo_channel(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    f: f64,
    rx_center: &PolarPoint,
    rx_orientation: &Rotation3<f64>,
    amplitude: AmplitudeModel,
) -> Result<ChannelMatrix> {
    if rx_center.is_far_field() {
        return Err(Error::UnsupportedModel(
            "LoS MIMO channel needs a finite receiver distance".into(),
        ));
    }
    let center = rx_center.to_cartesian();
    let rx_pos: Vec<Point3<f64>> = rx
        .elements()
        .iter()
        .map(|e| center + rx_orientation * e.coords)
        .collect();

    let tx_hull = tx.aperture() / 2.0;
    if rx_pos.iter().any(|p| p.coords.norm() <= tx_hull) {
        return Err(Error::domain("receive array overlaps the transmit array hull"));
    }
    let rx_hull = rx.aperture() / 2.0;
    if tx.elements().iter().any(|p| nalgebra::distance(p, &center) <= rx_hull) {
        return Err(Error::domain("transmit array overlaps the receive array hull"));
    }

    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
    let lambda = SPEED_OF_LIGHT / f;
    let entries = CMatrix::from_fn(rx_pos.len(), tx.len(), |m, n| {
        let d = nalgebra::distance(&rx_pos[m], &tx.elements()[n]);
        let a = match amplitude {
            AmplitudeModel::Unit => 1.0,
            AmplitudeModel::FreeSpace => lambda / (4.0 * std::f64::consts::PI * d),
        };
        cis_neg(k * d) * a
    });
    Ok(ChannelMatrix {
        entries,
        frequency: f,
        tag: format!("los-mimo {}x{} at r={} m", rx.len(), tx.len(), rx_center.r()),
    })
}

/// BS-RIS-UE cascade and its two hops.
#[derive(Debug, Clone)]
pub struct CascadedRisChannel {
    /// `ris x bs` element-pair channel of the first hop.
    pub bs_ris: CMatrix,
    /// RIS response toward the UE.
    pub ris_ue: CVector,
    /// End-to-end channel seen by the BS array, `G^T diag(w) a`.
    pub channel: CVector,
}

/// Cascaded BS-RIS-UE channel with UNIT amplitudes. Both locations are given
/// relative to the RIS center; the BS array keeps its own orientation.
pub fn cascaded_ris_channel(
    bs: &ArrayGeometry,
    ris: &ArrayGeometry,
    ue: &PolarPoint,
    bs_center: &PolarPoint,
    f: f64,
    ris_phases: &[Complex64],
) -> Result<CascadedRisChannel> {
    if ris_phases.len() != ris.len() {
        return Err(Error::invalid(format!(
            "RIS phase vector has {} entries, RIS has {} elements",
            ris_phases.len(),
            ris.len()
        )));
    }
    if bs_center.is_far_field() {
        return Err(Error::UnsupportedModel("BS must sit at a finite distance".into()));
    }
    ris.check_outside(bs_center)?;
    let ris_ue = spherical_steering(ris, f, ue)?.entries;

    let k = 2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT;
    let c = bs_center.to_cartesian();
    let bs_pos: Vec<Point3<f64>> = bs.elements().iter().map(|e| c + e.coords).collect();
    let bs_ris = CMatrix::from_fn(ris.len(), bs.len(), |m, n| {
        cis_neg(k * nalgebra::distance(&ris.elements()[m], &bs_pos[n]))
    });

    let weighted = CVector::from_iterator(ris.len(), ris_ue.iter().zip(ris_phases).map(|(a, w)| a * w));
    let channel = bs_ris.transpose() * weighted;
    Ok(CascadedRisChannel {
        bs_ris,
        ris_ue,
        channel,
    })
}

/// One spherical (or planar, for the far-field sentinel) response per subcarrier.
pub fn wideband_steering(geom: &ArrayGeometry, carrier: &CarrierConfig, p: &PolarPoint) -> Result<Vec<SteeringVector>> {
    if !p.is_far_field() {
        geom.check_outside(p)?;
    }
    subcarrier_frequencies(carrier)
        .into_par_iter()
        .map(|f| array_response_with_speed(geom, f, p, carrier.propagation_speed()))
        .collect()
}
