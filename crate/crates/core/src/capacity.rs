//! LoS-MIMO degrees of freedom, water-filling capacity and multi-user SDMA.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{AmplitudeModel, ArrayGeometry, CarrierConfig, PolarPoint};
use crate::propagation::{los_mimo_channel, multipath_channel, planar_steering, ChannelMatrix, PathSpec};
use crate::{CMatrix, CVector, Error, Result, Rotation3};

/// Relative power threshold for counting a spatial mode.
pub const DEFAULT_DOF_THRESHOLD: f64 = 0.01;

/// Smallest-to-largest singular value ratio below which users count as inseparable.
const RANK_TOLERANCE: f64 = 1e-10;

/// Singular values in descending order.
pub fn singular_values(h: &CMatrix) -> Vec<f64> {
    let mut sv: Vec<f64> = h.singular_values().iter().copied().collect();
    sv.sort_unstable_by(|a, b| b.total_cmp(a));
    sv
}

fn count_modes(sv: &[f64], rel_threshold: f64) -> usize {
    let top = sv[0] * sv[0];
    sv.iter().filter(|s| *s * *s >= rel_threshold * top).count()
}

fn check_threshold(rel_threshold: f64) -> Result<()> {
    if !(rel_threshold > 0.0 && rel_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "relative threshold must lie in (0, 1], got {rel_threshold}"
        )));
    }
    Ok(())
}

/// Number of modes carrying at least `rel_threshold` of the strongest mode's power,
/// i.e. `sigma_i^2 >= rel_threshold * sigma_1^2`.
pub fn effective_dof(h: &ChannelMatrix, rel_threshold: f64) -> Result<usize> {
    check_threshold(rel_threshold)?;
    let sv = singular_values(&h.entries);
    if sv.first().is_none_or(|&s| !(s > 0.0)) {
        return Err(Error::invalid("effective DoF of a zero matrix"));
    }
    Ok(count_modes(&sv, rel_threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofReport {
    pub distance: f64,
    pub singular_values: Vec<f64>,
    pub effective_dof: usize,
    pub capacity_bps_hz: f64,
    pub snr_db: f64,
}

/// Parallel arrays facing each other across `distances` (ascending, meters).
///
/// Free-space amplitudes; capacity is water-filled with the SNR referenced
/// to the strongest mode, see [`waterfilling`].
pub fn dof_vs_distance(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    carrier: &CarrierConfig,
    distances: &[f64],
    snr_db: f64,
    rel_threshold: f64,
) -> Result<Vec<DofReport>> {
    check_threshold(rel_threshold)?;
    if distances.is_empty() {
        return Err(Error::invalid("no distances given"));
    }
    if distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::invalid("distances must be positive and finite"));
    }
    if distances.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("distances must be sorted ascending"));
    }
    let f = carrier.center_frequency();
    distances
        .par_iter()
        .map(|&d| {
            let h = los_mimo_channel(
                tx,
                rx,
                f,
                &PolarPoint::new(0.0, d)?,
                &Rotation3::identity(),
                AmplitudeModel::FreeSpace,
            )?;
            let sv = singular_values(&h.entries);
            Ok(DofReport {
                distance: d,
                effective_dof: count_modes(&sv, rel_threshold),
                capacity_bps_hz: waterfilling(&sv, snr_db)?,
                singular_values: sv,
                snr_db,
            })
        })
        .collect()
}

/// `max(1, D_tx D_rx / (lambda d))`.
pub fn dof_upper_bound(d_tx: f64, d_rx: f64, lambda: f64, d: f64) -> Result<f64> {
    if [d_tx, d_rx, lambda, d].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("apertures, wavelength and distance must be positive"));
    }
    Ok((d_tx * d_rx / (lambda * d)).max(1.0))
}

/// RF chains to activate so every effective mode gets one.
pub fn recommend_rf_chains(report: &DofReport) -> usize {
    report.effective_dof
}

/// Optimal power split over parallel channels with gains `sigma_i^2`.
///
/// Total power is 1 and the noise level is `sigma_1^2 / snr`, so `snr` is the
/// receive SNR of the strongest mode at full power. Returns the per-mode
/// powers in the input order.
pub fn waterfilling_powers(singular_values: &[f64], snr_db: f64) -> Result<Vec<f64>> {
    if !snr_db.is_finite() {
        return Err(Error::invalid(format!("SNR must be finite, got {snr_db} dB")));
    }
    if singular_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("singular values must be finite and non-negative"));
    }
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::invalid("water-filling needs a positive singular value"));
    }
    let snr = 10f64.powf(snr_db / 10.0);
    // Inverse channel-to-noise ratios; zero modes never get power.
    let floors: Vec<f64> = singular_values
        .iter()
        .map(|s| {
            if *s > 0.0 {
                (top / s).powi(2) / snr
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let used = |mu: f64| floors.iter().map(|&b| (mu - b).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, floors.iter().copied().fold(f64::INFINITY, f64::min) + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if used(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let mu = 0.5 * (lo + hi);
    let mut powers: Vec<f64> = floors.iter().map(|&b| (mu - b).max(0.0)).collect();
    let total: f64 = powers.iter().sum();
    powers.iter_mut().for_each(|p| *p /= total);
    Ok(powers)
}

/// Water-filling capacity in bits/s/Hz; see [`waterfilling_powers`] for the SNR reference.
pub fn waterfilling(singular_values: &[f64], snr_db: f64) -> Result<f64> {
    let powers = waterfilling_powers(singular_values, snr_db)?;
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    let snr = 10f64.powf(snr_db / 10.0);
    Ok(singular_values
        .iter()
        .zip(&powers)
        .map(|(s, p)| (1.0 + p * snr * (s / top).powi(2)).log2())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    Zf,
    Mf,
}

fn check_users(h: &CMatrix) -> Result<()> {
    let (k, n) = h.shape();
    if k == 0 || n == 0 {
        return Err(Error::invalid("empty multi-user channel"));
    }
    if k > n {
        return Err(Error::invalid(format!("{k} users exceed {n} antennas")));
    }
    Ok(())
}

fn normalize_columns(w: &mut CMatrix) {
    for mut c in w.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= Complex64::new(norm, 0.0);
        }
    }
}

/// Zero-forcing precoder for a `K x N` channel: right pseudo-inverse with unit-norm columns.
pub fn zf_precoder(h: &CMatrix) -> Result<CMatrix> {
    check_users(h)?;
    let sv = singular_values(h);
    let (smax, smin) = (sv[0], sv[sv.len() - 1]);
    if !(smin > RANK_TOLERANCE * smax) {
        return Err(Error::numeric(
            "multi-user channel is rank deficient; users are inseparable",
            format!("singular values {sv:?}"),
        ));
    }
    let gram = h * h.adjoint();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::numeric("multi-user Gram matrix is singular", format!("singular values {sv:?}")))?;
    let mut w = h.adjoint() * inv;

    let hw = h * &w;
    let min_diag = hw.diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let k = hw.nrows();
    let leak = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| hw[(i, j)].norm())
        .fold(0.0, f64::max);
    if leak > 1e-9 * min_diag {
        return Err(Error::numeric(
            "zero-forcing residual interference too large",
            format!("max off-diagonal {leak:e}, min diagonal {min_diag:e}"),
        ));
    }
    normalize_columns(&mut w);
    Ok(w)
}

/// Matched-filter precoder: column `k` is the normalized conjugate of user `k`'s channel.
pub fn mf_precoder(h: &CMatrix) -> Result<CMatrix> {
    check_users(h)?;
    let mut w = h.adjoint();
    normalize_columns(&mut w);
    Ok(w)
}

/// Sum rate with total transmit power 1 split equally over users and noise `1/snr`.
pub fn sum_rate(h: &CMatrix, w: &CMatrix, snr_db: f64) -> Result<f64> {
    let (k, n) = h.shape();
    if w.nrows() != n || w.ncols() != k {
        return Err(Error::invalid(format!(
            "precoder is {}x{}, expected {n}x{k}",
            w.nrows(),
            w.ncols()
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::invalid("SNR is NaN"));
    }
    let noise = 10f64.powf(-snr_db / 10.0);
    let p = 1.0 / k as f64;
    let hw = h * w;
    Ok((0..k)
        .map(|i| {
            let signal = p * hw[(i, i)].norm_sqr();
            let interference: f64 = (0..k).filter(|&j| j != i).map(|j| p * hw[(i, j)].norm_sqr()).sum();
            (1.0 + signal / (interference + noise)).log2()
        })
        .sum())
}

/// `|<a, b>| / (||a|| ||b||)`.
pub fn channel_correlation(a: &CVector, b: &CVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("channels differ in length"));
    }
    let d = a.norm() * b.norm();
    if d == 0.0 {
        return Err(Error::invalid("correlation with a zero channel"));
    }
    Ok((a.dotc(b).norm() / d).min(1.0))
}

/// Users sharing one array, with their exact channels stacked as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SdmaScenario {
    pub users: Vec<PolarPoint>,
    /// `K x N`, row `k` is user `k`'s channel.
    pub channels: CMatrix,
    pub snr_db: f64,
    pub precoder: PrecoderKind,
}

impl SdmaScenario {
    pub fn new(
        geom: &ArrayGeometry,
        f: f64,
        users: &[PolarPoint],
        snr_db: f64,
        precoder: PrecoderKind,
        amplitude: AmplitudeModel,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::invalid("no users given"));
        }
        let rows = users
            .iter()
            .map(|u| {
                let path = PathSpec {
                    gain: Complex64::new(1.0, 0.0),
                    point: *u,
                };
                Ok(multipath_channel(geom, f, &[path], amplitude)?.transpose())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users: users.to_vec(),
            channels: CMatrix::from_rows(&rows),
            snr_db,
            precoder,
        })
    }

    pub fn precoder_matrix(&self) -> Result<CMatrix> {
        match self.precoder {
            PrecoderKind::Zf => zf_precoder(&self.channels),
            PrecoderKind::Mf => mf_precoder(&self.channels),
        }
    }

    pub fn sum_rate(&self) -> Result<f64> {
        sum_rate(&self.channels, &self.precoder_matrix()?, self.snr_db)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdmaReport {
    pub users: Vec<PolarPoint>,
    pub snr_db: f64,
    pub near_field_zf_rate: f64,
    pub far_field_steering_rate: f64,
    /// Largest pairwise `|<a_i, a_j>| / N` among the users' channels.
    pub channel_correlation: f64,
}

/// Same-angle users: ZF on exact spherical channels against one planar beam per user.
///
/// All users must share the angle within 0.1 degree and lie inside the
/// Rayleigh distance. Unit channel amplitudes.
pub fn sdma_compare(geom: &ArrayGeometry, f: f64, users: &[PolarPoint], snr_db: f64) -> Result<SdmaReport> {
    if users.len() < 2 {
        return Err(Error::invalid("SDMA comparison needs at least two users"));
    }
    let theta = users[0].theta();
    if users.iter().any(|u| (u.theta() - theta).abs() > 0.1f64.to_radians()) {
        return Err(Error::invalid("SDMA users must share the angle within 0.1 degree"));
    }
    let rayleigh = crate::boundaries::rayleigh_distance(geom.aperture(), crate::SPEED_OF_LIGHT / f)?;
    if let Some(u) = users.iter().find(|u| !(u.r() < rayleigh)) {
        return Err(Error::domain(format!(
            "user at {} m is not inside the Rayleigh distance {rayleigh} m",
            u.r()
        )));
    }

    let scenario = SdmaScenario::new(geom, f, users, snr_db, PrecoderKind::Zf, AmplitudeModel::Unit)?;
    let h = &scenario.channels;
    let mut correlation: f64 = 0.0;
    for i in 0..users.len() {
        for j in i + 1..users.len() {
            let a = h.row(i).transpose();
            let b = h.row(j).transpose();
            correlation = correlation.max(channel_correlation(&a, &b)?);
        }
    }

    let beams = users
        .iter()
        .map(|u| Ok(planar_steering(geom, f, u.theta())?.normalized().map(|z| z.conj())))
        .collect::<Result<Vec<_>>>()?;
    let steering = CMatrix::from_columns(&beams);

    Ok(SdmaReport {
        users: users.to_vec(),
        snr_db,
        near_field_zf_rate: scenario.sum_rate()?,
        far_field_steering_rate: sum_rate(h, &steering, snr_db)?,
        channel_correlation: correlation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundaries::mimo_rayleigh_distance;
    use crate::model::build_ula;
    use crate::propagation::spherical_steering;
    use crate::SPEED_OF_LIGHT;
    use approx::assert_relative_eq;

    const F28: f64 = 28e9;

    fn half_wave(n: usize) -> ArrayGeometry {
        build_ula(n, SPEED_OF_LIGHT / F28 / 2.0).unwrap()
    }

    fn chan(m: CMatrix) -> ChannelMatrix {
        ChannelMatrix {
            entries: m,
            frequency: F28,
            tag: String::new(),
        }
    }

    /// 1.5 m apertures at 28 GHz.
    fn big_ula() -> ArrayGeometry {
        let spacing = SPEED_OF_LIGHT / F28 / 2.0;
        build_ula((1.5 / spacing).round() as usize + 1, spacing).unwrap()
    }

    #[test]
    fn dof_trivial_cases() {
        let u = CVector::from_fn(4, |i, _| Complex64::new(i as f64 + 1.0, 0.0));
        let v = CVector::from_fn(3, |i, _| Complex64::new(0.0, i as f64 - 1.5));
        assert_eq!(effective_dof(&chan(&u * v.adjoint()), 0.01).unwrap(), 1);
        assert_eq!(effective_dof(&chan(CMatrix::identity(4, 4)), 0.01).unwrap(), 4);
        assert!(effective_dof(&chan(CMatrix::zeros(3, 3)), 0.01).is_err());
        assert!(effective_dof(&chan(CMatrix::identity(2, 2)), 0.0).is_err());
    }

    #[test]
    fn dof_scale_invariant() {
        let h = CMatrix::from_fn(5, 4, |i, j| {
            Complex64::new((i * 3 + j) as f64 % 7.0, (i + 2 * j) as f64 % 3.0)
        });
        let a = effective_dof(&chan(h.clone()), 0.01).unwrap();
        let b = effective_dof(&chan(h * Complex64::new(1e-7, 3e-7)), 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn upper_bound_examples() {
        let lambda = SPEED_OF_LIGHT / F28;
        assert_relative_eq!(
            dof_upper_bound(2.0, lambda * 5.0 / 2.0, lambda, 5.0).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let a = dof_upper_bound(1.5, 1.5, lambda, 1.0).unwrap();
        let b = dof_upper_bound(1.5, 1.5, lambda, 0.5).unwrap();
        assert_relative_eq!(b, 2.0 * a, max_relative = 1e-12);
        let v = dof_upper_bound(1.5, 1.5, lambda, 10.0).unwrap();
        assert!((v - 21.0).abs() < 0.1, "{v}");
        assert!(dof_upper_bound(0.0, 1.0, lambda, 1.0).is_err());
    }

    #[test]
    fn near_field_los_has_several_modes() {
        let g = big_ula();
        let carrier = CarrierConfig::narrowband(F28).unwrap();
        let r = dof_vs_distance(&g, &g, &carrier, &[10.0], 20.0, DEFAULT_DOF_THRESHOLD).unwrap();
        assert!(r[0].effective_dof > 1);
        assert!(r[0].singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(r[0].capacity_bps_hz > 0.0);
    }

    #[test]
    fn dof_sweep_trend() {
        let g = big_ula();
        let lambda = SPEED_OF_LIGHT / F28;
        let carrier = CarrierConfig::narrowband(F28).unwrap();
        let rm = mimo_rayleigh_distance(g.aperture(), g.aperture(), lambda).unwrap();
        let fractions = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 100.0];
        let ds: Vec<f64> = fractions.iter().map(|x| x * rm).collect();
        let reports = dof_vs_distance(&g, &g, &carrier, &ds, 20.0, DEFAULT_DOF_THRESHOLD).unwrap();
        let dofs: Vec<usize> = reports.iter().map(|r| r.effective_dof).collect();
        assert!(dofs.windows(2).all(|w| w[1] <= w[0]), "{dofs:?}");
        for r in &reports {
            if r.distance >= rm {
                assert_eq!(r.effective_dof, 1);
            }
            // Coarse grid: between roughly 0.12 and 0.26 x rm the bound clamps to 1
            // while three modes still clear the threshold.
            if r.distance <= rm {
                let bound = dof_upper_bound(g.aperture(), g.aperture(), lambda, r.distance)
                    .unwrap()
                    .ceil();
                let ratio = r.effective_dof as f64 / bound;
                assert!(
                    (0.5..=2.0).contains(&ratio),
                    "d {} dof {} bound {bound}",
                    r.distance,
                    r.effective_dof
                );
            }
            assert_eq!(recommend_rf_chains(r), r.effective_dof);
        }
        assert!(dof_vs_distance(&g, &g, &carrier, &[20.0, 10.0], 20.0, 0.01).is_err());
    }

    #[test]
    fn waterfilling_examples() {
        for snr_db in [-10.0, 0.0, 13.0] {
            let snr = 10f64.powf(snr_db / 10.0);
            assert_relative_eq!(
                waterfilling(&[2.5], snr_db).unwrap(),
                (1.0 + snr).log2(),
                epsilon = 1e-12
            );
        }
        let p = waterfilling_powers(&[1.0, 1.0], 30.0).unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(p[1], 0.5, epsilon = 1e-9);
        assert!(waterfilling(&[0.0, 0.0], 10.0).is_err());
        let p = waterfilling_powers(&[1.0, 0.0], 10.0).unwrap();
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn waterfilling_matches_grid_search() {
        let sv = [1.0, 0.6, 0.25];
        let snr_db = 6.0;
        let snr = 10f64.powf(snr_db / 10.0);
        let rate = |p: [f64; 3]| -> f64 { (0..3).map(|i| (1.0 + p[i] * snr * sv[i] * sv[i]).log2()).sum() };
        let steps = 400;
        let mut best = 0.0f64;
        for i in 0..=steps {
            for j in 0..=steps - i {
                let p = [
                    i as f64 / steps as f64,
                    j as f64 / steps as f64,
                    (steps - i - j) as f64 / steps as f64,
                ];
                best = best.max(rate(p));
            }
        }
        let wf = waterfilling(&sv, snr_db).unwrap();
        assert!(wf >= best - 1e-12);
        assert!(wf - best < 1e-4, "{wf} vs {best}");
        // Closed form: the weakest mode stays dry, the other two share one water level.
        let g = [snr * sv[0] * sv[0], snr * sv[1] * sv[1]];
        let mu = (1.0 + 1.0 / g[0] + 1.0 / g[1]) / 2.0;
        assert!(mu < 1.0 / (snr * sv[2] * sv[2]));
        let exact = (mu * g[0]).log2() + (mu * g[1]).log2();
        assert_relative_eq!(wf, exact, epsilon = 1e-12);
        assert_relative_eq!(wf, 2.437754289745577, epsilon = 1e-9);
    }

    #[test]
    fn zf_single_user_is_matched_filter() {
        let g = half_wave(32);
        let a = spherical_steering(&g, F28, &PolarPoint::new(0.2, 3.0).unwrap())
            .unwrap()
            .entries;
        let h = CMatrix::from_rows(&[a.transpose()]);
        let zf = zf_precoder(&h).unwrap();
        let mf = mf_precoder(&h).unwrap();
        assert!((zf - &mf).norm() < 1e-9);
        let snr_db = 10.0;
        assert_relative_eq!(
            sum_rate(&h, &mf, snr_db).unwrap(),
            (1.0 + 32.0 * 10.0f64).log2(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn zf_orthogonal_users() {
        let n = 16;
        let dft = |q: usize| {
            CVector::from_fn(n, |i, _| {
                Complex64::from_polar(1.0, std::f64::consts::TAU * (q * i) as f64 / n as f64)
            })
        };
        let h = CMatrix::from_rows(&[dft(1).transpose(), dft(5).transpose()]);
        let zf = zf_precoder(&h).unwrap();
        let mf = mf_precoder(&h).unwrap();
        assert!((zf - mf).norm() < 1e-9);
    }

    #[test]
    fn zf_same_angle_users() {
        let g = half_wave(256);
        let users = [PolarPoint::new(0.0, 10.0).unwrap(), PolarPoint::new(0.0, 50.0).unwrap()];
        let s = SdmaScenario::new(&g, F28, &users, 10.0, PrecoderKind::Zf, AmplitudeModel::Unit).unwrap();
        let w = s.precoder_matrix().unwrap();
        let hw = &s.channels * &w;
        for i in 0..2 {
            let j = 1 - i;
            assert!(hw[(i, j)].norm_sqr() <= 1e-12 * hw[(i, i)].norm_sqr());
            assert_relative_eq!(w.column(i).norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zf_rejects_identical_users() {
        let g = half_wave(64);
        let u = PolarPoint::new(0.1, 5.0).unwrap();
        assert!(matches!(
            sdma_compare(&g, F28, &[u, u], 10.0),
            Err(Error::Numeric { .. })
        ));
        let s = SdmaScenario::new(&g, F28, &[u, u], 10.0, PrecoderKind::Zf, AmplitudeModel::Unit).unwrap();
        let c = channel_correlation(&s.channels.row(0).transpose(), &s.channels.row(1).transpose()).unwrap();
        assert_relative_eq!(c, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pinned_two_user_rate() {
        // Two orthogonal unit users with unit-norm matched beams: each sees
        // SINR = |h w|^2 / 2 / noise = 16 / 2 * 10.
        let n = 16;
        let dft = |q: usize| {
            CVector::from_fn(n, |i, _| {
                Complex64::from_polar(1.0, std::f64::consts::TAU * (q * i) as f64 / n as f64)
            })
        };
        let h = CMatrix::from_rows(&[dft(2).transpose(), dft(7).transpose()]);
        let w = mf_precoder(&h).unwrap();
        assert_relative_eq!(sum_rate(&h, &w, 10.0).unwrap(), 2.0 * 81f64.log2(), epsilon = 1e-9);
    }

    #[test]
    fn sdma_near_field_wins() {
        let g = half_wave(256);
        let users = [PolarPoint::new(0.0, 10.0).unwrap(), PolarPoint::new(0.0, 50.0).unwrap()];
        let r = sdma_compare(&g, F28, &users, 10.0).unwrap();
        assert!(r.near_field_zf_rate > r.far_field_steering_rate, "{r:?}");
        assert!(r.channel_correlation < 1.0);

        let corr = |r2: f64| {
            sdma_compare(&g, F28, &[users[0], PolarPoint::new(0.0, r2).unwrap()], 10.0)
                .unwrap()
                .channel_correlation
        };
        let (c12, c20, c50) = (corr(12.0), corr(20.0), corr(50.0));
        assert!(c12 > c20 && c20 > c50, "{c12} {c20} {c50}");
    }

    #[test]
    fn sdma_preconditions() {
        let g = half_wave(256);
        let a = PolarPoint::new(0.0, 10.0).unwrap();
        assert!(sdma_compare(&g, F28, &[a], 10.0).is_err());
        let b = PolarPoint::new(0.1, 20.0).unwrap();
        assert!(matches!(
            sdma_compare(&g, F28, &[a, b], 10.0),
            Err(Error::InvalidArgument(_))
        ));
        let far = PolarPoint::new(0.0, 1e4).unwrap();
        assert!(matches!(sdma_compare(&g, F28, &[a, far], 10.0), Err(Error::Domain(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn waterfilling_monotone(
                sv in prop::collection::vec(0.01f64..10.0, 1..6),
                snr in -10.0f64..30.0,
                bump in 1.0f64..3.0,
            ) {
                let base = waterfilling(&sv, snr).unwrap();
                prop_assert!(base >= 0.0);
                prop_assert!(waterfilling(&sv, snr + 1.0).unwrap() >= base - 1e-12);
                // Raising a weak mode (not the reference) never hurts.
                let top = sv.iter().copied().fold(0.0, f64::max);
                let i = sv.iter().position(|&s| s < top).unwrap_or(0);
                if sv[i] < top {
                    let mut up = sv.clone();
                    up[i] = (sv[i] * bump).min(top);
                    prop_assert!(waterfilling(&up, snr).unwrap() >= base - 1e-12);
                }
                let p = waterfilling_powers(&sv, snr).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }

            #[test]
            fn same_angle_correlation_below_one(theta in -0.8f64..0.8, r1 in 3.0f64..60.0, ratio in 1.2f64..5.0) {
                let g = half_wave(128);
                let users = [PolarPoint::new(theta, r1).unwrap(), PolarPoint::new(theta, r1 * ratio).unwrap()];
                let s = SdmaScenario::new(&g, F28, &users, 10.0, PrecoderKind::Mf, AmplitudeModel::Unit).unwrap();
                let c = channel_correlation(&s.channels.row(0).transpose(), &s.channels.row(1).transpose()).unwrap();
                prop_assert!(c < 1.0 - 1e-9);
                let beam = planar_steering(&g, F28, theta).unwrap().entries;
                prop_assert!((channel_correlation(&beam, &beam).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
}
