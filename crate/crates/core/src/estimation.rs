//! Compressed-sensing channel estimation over a codebook.
//!
//! Pilots are combined through unit-modulus random phases scaled by
//! `1/sqrt(N)`, mimicking a phase-shifter analog combiner. The estimator is
//! orthogonal matching pursuit with a full least-squares refit per iteration.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::codebook::{Codebook, CodebookKind};
use crate::model::PolarPoint;
use crate::propagation::{multipath_channel, PathSpec};
use crate::scenario::ScenarioConfig;
use crate::{CMatrix, CVector, Error, Result};

/// NMSE reported for an exact estimate.
pub const NMSE_FLOOR_DB: f64 = -300.0;

/// Analog combining matrix and the noise level used with it.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSystem {
    /// `P x N`, entries `exp(j phi) / sqrt(N)`.
    pub sensing_matrix: CMatrix,
    /// Per-measurement SNR; `+inf` means noiseless.
    pub snr_db: f64,
    pub seed: u64,
}

impl PilotSystem {
    pub fn num_pilots(&self) -> usize {
        self.sensing_matrix.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub estimated_channel: CVector,
    /// Selected codeword indices, in selection order.
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    pub residual_norm: f64,
    /// Residual norm after each iteration, starting with `||y||`.
    pub residual_history: Vec<f64>,
}

fn sensing_matrix<R: Rng>(p: usize, n: usize, rng: &mut R) -> CMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    // Row-major draw order so the matrix does not depend on storage layout.
    let phases: Vec<f64> = (0..p * n)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    CMatrix::from_fn(p, n, |i, j| Complex64::from_polar(scale, phases[i * n + j]))
}

/// Draws `y = A h + n` with a fresh seeded pilot matrix.
///
/// The noise variance is `||h||^2 / (N snr)`, the expected per-measurement
/// signal power `E|a_p^H h|^2` of the unit-modulus combiner.
pub fn simulate_pilots(h: &CVector, p: usize, snr_db: f64, seed: u64) -> Result<(CVector, PilotSystem)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_pilots_with_rng(h, p, snr_db, seed, &mut rng)
}

pub(crate) fn simulate_pilots_with_rng<R: Rng>(
    h: &CVector,
    p: usize,
    snr_db: f64,
    seed: u64,
    rng: &mut R,
) -> Result<(CVector, PilotSystem)> {
    if p == 0 {
        return Err(Error::invalid("pilot count must be >= 1"));
    }
    if h.is_empty() {
        return Err(Error::invalid("channel is empty"));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("invalid SNR {snr_db} dB")));
    }
    let n = h.len();
    let a = sensing_matrix(p, n, rng);
    let mut y = &a * h;
    if snr_db.is_finite() {
        let snr = 10f64.powf(snr_db / 10.0);
        let noise_var = h.norm_squared() / (n as f64 * snr);
        let sigma = (noise_var / 2.0).sqrt();
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * sigma, im * sigma);
        }
    }
    Ok((
        y,
        PilotSystem {
            sensing_matrix: a,
            snr_db,
            seed,
        },
    ))
}

/// Orthogonal matching pursuit over the dictionary `A * codewords`.
///
/// Atoms are ranked by `|c_g^H A^H r|`; the unit-modulus combiner gives all
/// dictionary columns nearly equal norm, so no per-column rescaling is
/// applied. Stops after `sparsity` atoms or once `||r|| / ||y|| <= stop_residual`.
pub fn omp(
    y: &CVector,
    system: &PilotSystem,
    cb: &Codebook,
    sparsity: usize,
    stop_residual: f64,
) -> Result<EstimationResult> {
    let a = &system.sensing_matrix;
    let (p, n) = a.shape();
    if sparsity == 0 {
        return Err(Error::invalid("sparsity must be >= 1"));
    }
    if sparsity > p {
        return Err(Error::invalid(format!("sparsity {sparsity} exceeds pilot count {p}")));
    }
    if y.len() != p {
        return Err(Error::invalid(format!(
            "measurement length {} != pilot count {p}",
            y.len()
        )));
    }
    if cb.dimension() != n {
        return Err(Error::invalid(format!(
            "codebook dimension {} != array size {n}",
            cb.dimension()
        )));
    }

    let y_norm = y.norm();
    let mut result = EstimationResult {
        estimated_channel: CVector::zeros(n),
        support: Vec::new(),
        coefficients: Vec::new(),
        residual_norm: y_norm,
        residual_history: vec![y_norm],
    };
    if y_norm == 0.0 {
        return Ok(result);
    }

    let a_h = a.adjoint();
    let mut residual = y.clone();
    let mut atoms: Vec<CVector> = Vec::with_capacity(sparsity);
    let mut coeffs = CVector::zeros(0);

    while result.support.len() < sparsity && result.residual_norm > stop_residual * y_norm {
        let back = &a_h * &residual;
        let scores: Vec<f64> = cb.codewords().par_iter().map(|c| c.dotc(&back).norm_sqr()).collect();
        let mut best: Option<(usize, f64)> = None;
        for (g, &s) in scores.iter().enumerate() {
            if result.support.contains(&g) {
                continue;
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((g, s));
            }
        }
        let Some((g, _)) = best else { break };
        result.support.push(g);
        atoms.push(a * &cb.codewords()[g]);

        let phi = CMatrix::from_columns(&atoms);
        coeffs = least_squares(&phi, y).map_err(|diag| {
            Error::numeric(
                "singular least-squares refit",
                format!("support {:?}: {diag}", result.support),
            )
        })?;
        residual = y - &phi * &coeffs;
        result.residual_norm = residual.norm();
        result.residual_history.push(result.residual_norm);
    }

    let mut h = CVector::zeros(n);
    for (&g, &x) in result.support.iter().zip(coeffs.iter()) {
        h.axpy(x, &cb.codewords()[g], Complex64::new(1.0, 0.0));
    }
    result.estimated_channel = h;
    result.coefficients = coeffs.iter().copied().collect();
    Ok(result)
}

/// Least squares through a thin QR factorization.
fn least_squares(phi: &CMatrix, y: &CVector) -> std::result::Result<CVector, String> {
    let qr = phi.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|z| z.norm()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    if let Some(i) = diag.iter().position(|&d| !(d > 1e-12 * max)) {
        return Err(format!("|R[{i},{i}]| = {:e} vs max {max:e}", diag[i]));
    }
    let qty = qr.q().adjoint() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| "triangular solve failed".to_string())
}

/// `10 log10(||h - h_est||^2 / ||h||^2)`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse(h_true: &CVector, h_est: &CVector) -> Result<f64> {
    if h_true.len() != h_est.len() {
        return Err(Error::invalid("nmse arguments differ in length"));
    }
    let denom = h_true.norm_squared();
    if denom == 0.0 {
        return Err(Error::invalid("nmse is undefined for a zero channel"));
    }
    let ratio = (h_true - h_est).norm_squared() / denom;
    Ok(to_db(ratio))
}

fn to_db(ratio: f64) -> f64 {
    if ratio > 0.0 {
        (10.0 * ratio.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// Knobs for [`compare_codebooks`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationSettings {
    pub snrs_db: Vec<f64>,
    pub pilots: usize,
    pub sparsity: usize,
    pub stop_residual: f64,
    pub trials: usize,
    /// Half-width, in `sin(theta)`, of the window the user angle is drawn from.
    pub angle_window: f64,
}

impl EstimationSettings {
    pub fn new(snrs_db: Vec<f64>, pilots: usize, trials: usize) -> Self {
        Self {
            snrs_db,
            pilots,
            sparsity: 2,
            stop_residual: 0.0,
            trials,
            angle_window: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmseRow {
    pub distance_m: f64,
    pub snr_db: f64,
    pub codebook: String,
    pub mean_nmse_db: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmseTable {
    pub rows: Vec<NmseRow>,
}

impl NmseTable {
    pub fn get(&self, distance_m: f64, snr_db: f64, codebook: &str) -> Option<&NmseRow> {
        self.rows
            .iter()
            .find(|r| r.distance_m == distance_m && r.snr_db == snr_db && r.codebook == codebook)
    }
}

fn codebook_name(cb: &Codebook) -> &'static str {
    match cb.kind() {
        CodebookKind::Angular => "angular",
        CodebookKind::Polar => "polar",
    }
}

/// Monte-Carlo NMSE of OMP with two codebooks, one cell per (user distance, SNR).
///
/// Each trial draws a user angle uniformly in `sin(theta)` around the
/// configured user angle and a random unit-modulus path gain; the scenario's
/// extra paths are added on top. Both codebooks see the same pilots and
/// noise. Trials run in parallel on independent ChaCha streams and are summed
/// in trial order, so the table does not depend on the thread count. The
/// reported mean is over linear NMSE, converted to dB.
pub fn compare_codebooks(
    scenario: &ScenarioConfig,
    cb_far: &Codebook,
    cb_polar: &Codebook,
    settings: &EstimationSettings,
) -> Result<NmseTable> {
    if settings.trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if settings.snrs_db.is_empty() {
        return Err(Error::invalid("at least one SNR is required"));
    }
    let geom = scenario.single_array()?;
    let users = scenario.require_users()?;
    let f = scenario.carrier.center_frequency();

    let mut rows = Vec::new();
    let mut cell = 0u64;
    for user in users {
        if user.is_far_field() {
            return Err(Error::UnsupportedModel(
                "estimation users need a finite distance".into(),
            ));
        }
        for &snr_db in &settings.snrs_db {
            let per_trial = (0..settings.trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
                    rng.set_stream((cell << 32) | t as u64);
                    run_trial(scenario, geom, f, user, snr_db, settings, cb_far, cb_polar, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let trials = settings.trials as f64;
            let (far, polar) = per_trial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
            for (cb, sum) in [(cb_far, far), (cb_polar, polar)] {
                rows.push(NmseRow {
                    distance_m: user.r(),
                    snr_db,
                    codebook: codebook_name(cb).into(),
                    mean_nmse_db: to_db(sum / trials),
                    trials: settings.trials,
                });
            }
            cell += 1;
        }
    }
    Ok(NmseTable { rows })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    scenario: &ScenarioConfig,
    geom: &crate::ArrayGeometry,
    f: f64,
    user: &PolarPoint,
    snr_db: f64,
    settings: &EstimationSettings,
    cb_far: &Codebook,
    cb_polar: &Codebook,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let s0 = user.theta().sin();
    let lo = (s0 - settings.angle_window).max(-0.999);
    let hi = (s0 + settings.angle_window).min(0.999);
    let sine = lo + (hi - lo) * rng.random::<f64>();
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let mut paths = vec![PathSpec {
        gain: Complex64::from_polar(1.0, phase),
        point: PolarPoint::new(sine.asin(), user.r())?,
    }];
    paths.extend_from_slice(&scenario.paths);
    let h = multipath_channel(geom, f, &paths, scenario.amplitude_model)?;

    let (y, system) = simulate_pilots_with_rng(&h, settings.pilots, snr_db, scenario.seed, rng)?;
    let linear = |cb: &Codebook| -> Result<f64> {
        let est = omp(&y, &system, cb, settings.sparsity, settings.stop_residual)?;
        Ok((&h - &est.estimated_channel).norm_squared() / h.norm_squared())
    };
    Ok((linear(cb_far)?, linear(cb_polar)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{angular_codebook, polar_codebook};
    use crate::model::build_ula;
    use crate::propagation::spherical_steering;
    use crate::SPEED_OF_LIGHT;

    const F: f64 = 28e9;

    fn half_wave(n: usize) -> crate::ArrayGeometry {
        build_ula(n, SPEED_OF_LIGHT / F / 2.0).unwrap()
    }

    #[test]
    fn noiseless_pilots_are_exact() {
        let g = half_wave(16);
        let h = spherical_steering(&g, F, &PolarPoint::new(0.2, 1.0).unwrap())
            .unwrap()
            .entries;
        let (y, sys) = simulate_pilots(&h, 8, f64::INFINITY, 3).unwrap();
        assert_eq!(y, &sys.sensing_matrix * &h);
        for z in sys.sensing_matrix.iter() {
            assert!((z.norm() - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn pilots_are_deterministic() {
        let h = CVector::from_element(8, Complex64::new(1.0, -0.5));
        let a = simulate_pilots(&h, 5, 10.0, 99).unwrap();
        let b = simulate_pilots(&h, 5, 10.0, 99).unwrap();
        assert_eq!(a, b);
        let c = simulate_pilots(&h, 5, 10.0, 100).unwrap();
        assert_ne!(a.0, c.0);
        assert!(simulate_pilots(&h, 0, 10.0, 1).is_err());
    }

    #[test]
    fn empirical_snr_matches_target() {
        let g = half_wave(32);
        let h = spherical_steering(&g, F, &PolarPoint::new(-0.4, 2.0).unwrap())
            .unwrap()
            .entries;
        let target = 7.0;
        let (mut sig, mut noise) = (0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let (y, sys) = simulate_pilots_with_rng(&h, 1, target, 5, &mut rng).unwrap();
            let clean = &sys.sensing_matrix * &h;
            sig += clean.norm_squared();
            noise += (y - clean).norm_squared();
        }
        let measured = 10.0 * (sig / noise).log10();
        assert!((measured - target).abs() < 0.2, "{measured}");
    }

    #[test]
    fn nmse_examples() {
        let h = CVector::from_fn(6, |i, _| Complex64::new(i as f64 + 1.0, 0.5));
        assert_eq!(nmse(&h, &h).unwrap(), NMSE_FLOOR_DB);
        assert!(nmse(&h, &CVector::zeros(6)).unwrap().abs() < 1e-12);
        assert!((nmse(&h, &(&h * Complex64::new(1.1, 0.0))).unwrap() + 20.0).abs() < 1e-9);
        assert!(nmse(&CVector::zeros(6), &h).is_err());
        assert!(nmse(&h, &CVector::zeros(5)).is_err());
    }

    #[test]
    fn single_atom_exact_recovery() {
        let g = half_wave(64);
        let cb = polar_codebook(&g, F, 64, 0.5, 1.0).unwrap();
        let idx = cb.len() / 3;
        let h = cb.codewords()[idx].clone() * Complex64::new(0.3, -1.2);
        let p = (4.0 * (cb.len() as f64).ln()).ceil() as usize;
        let (y, sys) = simulate_pilots(&h, p, f64::INFINITY, 1).unwrap();
        let est = omp(&y, &sys, &cb, 1, 0.0).unwrap();
        assert_eq!(est.support, vec![idx]);
        assert!(nmse(&h, &est.estimated_channel).unwrap() <= -80.0);
    }

    #[test]
    fn zero_measurement_gives_zero_estimate() {
        let g = half_wave(16);
        let cb = angular_codebook(&g, F, 16).unwrap();
        let (_, sys) = simulate_pilots(
            &CVector::from_element(16, Complex64::new(1.0, 0.0)),
            8,
            f64::INFINITY,
            1,
        )
        .unwrap();
        let est = omp(&CVector::zeros(8), &sys, &cb, 3, 0.0).unwrap();
        assert!(est.support.is_empty());
        assert_eq!(est.estimated_channel, CVector::zeros(16));
        assert_eq!(est.residual_norm, 0.0);
    }

    #[test]
    fn omp_argument_checks() {
        let g = half_wave(16);
        let cb = angular_codebook(&g, F, 16).unwrap();
        let h = cb.codewords()[0].clone();
        let (y, sys) = simulate_pilots(&h, 4, f64::INFINITY, 1).unwrap();
        assert!(matches!(omp(&y, &sys, &cb, 5, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(omp(&y, &sys, &cb, 0, 0.0), Err(Error::InvalidArgument(_))));
        let other = angular_codebook(&half_wave(8), F, 8).unwrap();
        assert!(omp(&y, &sys, &other, 1, 0.0).is_err());
    }

    /// Supports picked at random with pairwise coherence <= `max_mu`.
    fn separated_support(cb: &Codebook, k: usize, max_mu: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut s: Vec<usize> = Vec::new();
        while s.len() < k {
            let g = rng.random_range(0..cb.len());
            if s.iter()
                .all(|&o| o != g && cb.codewords()[o].dotc(&cb.codewords()[g]).norm() <= max_mu)
            {
                s.push(g);
            }
        }
        s
    }

    #[test]
    fn three_path_polar_channel() {
        let g = half_wave(256);
        let cb = polar_codebook(&g, F, 256, 0.5, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let support = separated_support(&cb, 3, 0.5, &mut rng);
        let gains = [
            Complex64::new(1.0, 0.2),
            Complex64::new(-0.4, 0.6),
            Complex64::new(0.3, -0.3),
        ];
        let mut h = CVector::zeros(256);
        for (&s, &gain) in support.iter().zip(&gains) {
            h.axpy(gain, &cb.codewords()[s], Complex64::new(1.0, 0.0));
        }
        let (y, sys) = simulate_pilots(&h, 64, f64::INFINITY, 2).unwrap();
        let est = omp(&y, &sys, &cb, 3, 0.0).unwrap();
        assert!(nmse(&h, &est.estimated_channel).unwrap() <= -60.0);
        let mut got = est.support.clone();
        let mut want = support.clone();
        got.sort_unstable();
        want.sort_unstable();
        assert_eq!(got, want);
    }

    #[test]
    fn polar_recovery_rate() {
        // Greedy recovery on a coherent dictionary is not guaranteed; require
        // it for the large majority of separated supports.
        let g = half_wave(64);
        let cb = polar_codebook(&g, F, 64, 0.5, 0.6).unwrap();
        let mut ok = 0;
        for seed in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let support = separated_support(&cb, 4, 0.5, &mut rng);
            let mut h = CVector::zeros(64);
            for &s in &support {
                let gain =
                    Complex64::from_polar(0.5 + rng.random::<f64>(), rng.random::<f64>() * std::f64::consts::TAU);
                h.axpy(gain, &cb.codewords()[s], Complex64::new(1.0, 0.0));
            }
            let (y, sys) = simulate_pilots(&h, 48, f64::INFINITY, seed).unwrap();
            let est = omp(&y, &sys, &cb, 4, 0.0).unwrap();
            if nmse(&h, &est.estimated_channel).unwrap() <= -60.0 {
                ok += 1;
            }
        }
        assert!(ok >= 180, "{ok}/200");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn residual_non_increasing(seed in 0u64..1000, snr in 0.0f64..30.0, k in 1usize..8) {
                let g = half_wave(32);
                let cb = polar_codebook(&g, F, 32, 0.5, 0.5).unwrap();
                let h = spherical_steering(&g, F, &PolarPoint::new(0.17, 0.9).unwrap()).unwrap().entries;
                let (y, sys) = simulate_pilots(&h, 16, snr, seed).unwrap();
                let est = omp(&y, &sys, &cb, k, 0.0).unwrap();
                prop_assert!(est.residual_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            }

            #[test]
            fn single_polar_atom_recovery(seed in 0u64..1000, idx in 0usize..190) {
                let g = half_wave(64);
                let cb = polar_codebook(&g, F, 64, 0.5, 0.6).unwrap();
                let idx = idx % cb.len();
                let gain = Complex64::from_polar(0.5 + (seed % 7) as f64, seed as f64);
                let h = &cb.codewords()[idx] * gain;
                let (y, sys) = simulate_pilots(&h, 48, f64::INFINITY, seed).unwrap();
                let est = omp(&y, &sys, &cb, 1, 0.0).unwrap();
                prop_assert_eq!(&est.support, &vec![idx]);
                prop_assert!(nmse(&h, &est.estimated_channel).unwrap() <= -60.0);
            }

            #[test]
            fn orthogonal_sparse_recovery(seed in 0u64..1000, k in 1usize..5) {
                let g = half_wave(64);
                let cb = angular_codebook(&g, F, 64).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let support = separated_support(&cb, k, 0.5, &mut rng);
                let mut h = CVector::zeros(64);
                for &s in &support {
                    let gain = Complex64::from_polar(0.5 + rng.random::<f64>(), rng.random::<f64>() * std::f64::consts::TAU);
                    h.axpy(gain, &cb.codewords()[s], Complex64::new(1.0, 0.0));
                }
                let (y, sys) = simulate_pilots(&h, 48, f64::INFINITY, seed).unwrap();
                let est = omp(&y, &sys, &cb, k, 0.0).unwrap();
                prop_assert!(nmse(&h, &est.estimated_channel).unwrap() <= -60.0);
            }

            #[test]
            fn nmse_phase_invariant(phi in 0.0f64..6.3, seed in 0u64..100) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let h = CVector::from_fn(12, |_, _| Complex64::new(rng.random(), rng.random()));
                let e = CVector::from_fn(12, |_, _| Complex64::new(rng.random(), rng.random()));
                let rot = Complex64::from_polar(1.0, phi);
                let a = nmse(&h, &e).unwrap();
                let b = nmse(&(&h * rot), &(&e * rot)).unwrap();
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
