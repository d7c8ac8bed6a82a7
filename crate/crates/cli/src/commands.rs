use std::io::Write;

use nearfield_core::beamforming::{
    focal_point_map, focus_weights, gain_map, gain_vs_frequency, ps_wideband, steer_weights, ttd_pdf,
    WidebandBeamformer,
};
use nearfield_core::boundaries::{
    effective_rayleigh_distance, mimo_rayleigh_distance, numeric_phase_boundary, rayleigh_distance, ris_boundary_d2,
    simo_report, BoundaryCriterion, BoundaryInputs, BoundaryReport, RisThreshold,
};
use nearfield_core::capacity::{dof_vs_distance, sdma_compare};
use nearfield_core::codebook::{angular_codebook, codebook_coherence_profile, polar_codebook};
use nearfield_core::estimation::{compare_codebooks, EstimationSettings};
use nearfield_core::{build_ula, ArrayGeometry, Error, PolarPoint, Result, ScenarioConfig, SPEED_OF_LIGHT};

use crate::output::{format_float, Cell, OutputSet, Table};
use crate::{
    BeamsplitArgs, BoundaryArgs, BoundaryKind, Cli, CodebookArgs, CodebookChoice, Command, DesignKind, DofArgs,
    EstimateArgs, FieldmapArgs, SdmaArgs,
};

pub(crate) struct Outcome {
    pub outputs: OutputSet,
    pub seed: u64,
}

struct Ctx {
    scenario: Option<ScenarioConfig>,
    seed: u64,
}

impl Ctx {
    fn scenario(&self, command: &str) -> Result<&ScenarioConfig> {
        self.scenario.as_ref().ok_or_else(|| Error::Config {
            key: "--config".into(),
            message: format!("`{command}` needs a scenario file"),
        })
    }
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

pub(crate) fn execute(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<Outcome> {
    let scenario = match &cli.config {
        Some(path) => Some(ScenarioConfig::load(path).map_err(|e| match e {
            Error::Io { path, source } => config_error("--config", format!("cannot read {path}: {source}")),
            other => other,
        })?),
        None => None,
    };
    let seed = cli.seed.or(scenario.as_ref().map(|s| s.seed)).unwrap_or(0);
    let ctx = Ctx { scenario, seed };
    let mut outputs = OutputSet::new(&cli.out_dir)?;
    match &cli.command {
        Command::Boundary(a) => boundary(&ctx, a, &mut outputs, out)?,
        Command::Fieldmap(a) => fieldmap(&ctx, a, &mut outputs, out)?,
        Command::Codebook(a) => codebook(&ctx, a, &mut outputs, out)?,
        Command::Estimate(a) => estimate(&ctx, a, &mut outputs, out)?,
        Command::Beamsplit(a) => beamsplit(&ctx, a, &mut outputs, out)?,
        Command::Dof(a) => dof(&ctx, a, &mut outputs, out)?,
        Command::Sdma(a) => sdma(&ctx, a, &mut outputs, out)?,
    }
    Ok(Outcome { outputs, seed })
}

fn say(out: &mut dyn Write, line: String) -> Result<()> {
    writeln!(out, "{line}").map_err(|source| Error::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect()
}

fn criterion_name(c: BoundaryCriterion) -> String {
    serde_json::to_value(c)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn frequency(ctx: &Ctx, flag: Option<f64>) -> Result<f64> {
    match (flag, &ctx.scenario) {
        (Some(f), _) if f > 0.0 && f.is_finite() => Ok(f),
        (Some(f), _) => Err(config_error("--freq", format!("must be > 0, got {f}"))),
        (None, Some(s)) => Ok(s.carrier.center_frequency()),
        (None, None) => Err(config_error("--freq", "required without a scenario file")),
    }
}

fn aperture(ctx: &Ctx, flag: Option<f64>) -> Result<f64> {
    match (flag, &ctx.scenario) {
        (Some(d), _) => Ok(d),
        (None, Some(s)) => Ok(s.single_array()?.aperture()),
        (None, None) => Err(config_error("--aperture", "required without a scenario file")),
    }
}

fn boundary(ctx: &Ctx, a: &BoundaryArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let f = frequency(ctx, a.freq)?;
    let lambda = SPEED_OF_LIGHT / f;
    let mut reports = Vec::new();
    match a.kind {
        BoundaryKind::Simo => {
            let r = simo_report(aperture(ctx, a.aperture)?, lambda, None)?;
            say(out, format!("closed-form boundary: {} m", format_float(r.closed_form)))?;
            reports.push(r);
        }
        BoundaryKind::Mimo => {
            let d_tx = aperture(ctx, a.aperture)?;
            let d_rx = a.aperture_rx.unwrap_or(d_tx);
            let closed_form = mimo_rayleigh_distance(d_tx, d_rx, lambda)?;
            say(out, format!("closed-form boundary: {} m", format_float(closed_form)))?;
            reports.push(BoundaryReport {
                closed_form,
                numeric: None,
                criterion: BoundaryCriterion::PhasePiOver8,
                inputs: BoundaryInputs {
                    scenario: "mimo".into(),
                    aperture_m: d_tx,
                    aperture_rx_m: Some(d_rx),
                    wavelength_m: lambda,
                    ..Default::default()
                },
            });
        }
        BoundaryKind::Ris => {
            let d = aperture(ctx, a.aperture)?;
            let d1 =
                a.d1.ok_or_else(|| config_error("--d1", "required for `boundary ris`"))?;
            let closed_form = match ris_boundary_d2(d, lambda, d1)? {
                RisThreshold::Bounded(v) => {
                    say(out, format!("d2 threshold: {} m", format_float(v)))?;
                    v
                }
                RisThreshold::Unbounded => {
                    say(out, "d2 threshold: unbounded (every d2 is near-field)".into())?;
                    f64::INFINITY
                }
            };
            reports.push(BoundaryReport {
                closed_form,
                numeric: None,
                criterion: BoundaryCriterion::PhasePiOver8,
                inputs: BoundaryInputs {
                    scenario: "ris".into(),
                    aperture_m: d,
                    wavelength_m: lambda,
                    d1_m: Some(d1),
                    ..Default::default()
                },
            });
        }
        BoundaryKind::Numeric => {
            let geom = match (a.elements, &ctx.scenario) {
                (Some(n), _) => build_ula(n, a.spacing.unwrap_or(lambda / 2.0))?,
                (None, Some(s)) => s.single_array()?.clone(),
                (None, None) => return Err(config_error("--elements", "required without a scenario file")),
            };
            let theta = a.theta.to_radians();
            let closed_form = rayleigh_distance(geom.aperture(), lambda)?;
            let phase = numeric_phase_boundary(&geom, f, theta)?;
            let erd = effective_rayleigh_distance(&geom, f, theta, a.gain_floor)?;
            say(out, format!("closed-form boundary: {} m", format_float(closed_form)))?;
            say(out, format!("numeric pi/8 boundary: {} m", format_float(phase)))?;
            say(out, format!("effective Rayleigh distance: {} m", format_float(erd)))?;
            let inputs = BoundaryInputs {
                scenario: "numeric".into(),
                aperture_m: geom.aperture(),
                wavelength_m: lambda,
                theta_rad: Some(theta),
                ..Default::default()
            };
            reports.push(BoundaryReport {
                closed_form,
                numeric: Some(phase),
                criterion: BoundaryCriterion::PhasePiOver8,
                inputs: inputs.clone(),
            });
            reports.push(BoundaryReport {
                closed_form,
                numeric: Some(erd),
                criterion: BoundaryCriterion::GainThreshold,
                inputs,
            });
        }
    }

    let mut table = Table::new(["scenario", "criterion", "closed_form_m", "numeric_m"]);
    for r in &reports {
        table.push(vec![
            r.inputs.scenario.as_str().into(),
            criterion_name(r.criterion).into(),
            r.closed_form.into(),
            r.numeric.map_or(Cell::Text(String::new()), Cell::Num),
        ]);
    }
    outputs.csv("boundary.csv", &table)?;
    outputs.json("boundary.json", &reports)
}

fn first_user(s: &ScenarioConfig) -> Option<PolarPoint> {
    s.users.first().copied()
}

fn fieldmap(ctx: &Ctx, a: &FieldmapArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let s = ctx.scenario("fieldmap")?;
    let geom = s.single_array()?;
    let f = s.carrier.center_frequency();
    let rayleigh = rayleigh_distance(geom.aperture(), SPEED_OF_LIGHT / f)?;
    let user = first_user(s);
    let theta = match (a.theta, user) {
        (Some(t), _) => t.to_radians(),
        (None, Some(u)) => u.theta(),
        (None, None) => 0.0,
    };
    let w = match a.design {
        DesignKind::Focus => {
            let r =
                a.r.or(user.map(|u| u.r()))
                    .ok_or_else(|| config_error("--r", "focus design needs a distance (flag or first user)"))?;
            focus_weights(geom, f, &PolarPoint::new(theta, r)?)?
        }
        DesignKind::Steer => steer_weights(geom, f, theta)?,
    };
    if a.angles == 0 || a.distances == 0 {
        return Err(config_error("--angles", "grid sizes must be >= 1"));
    }
    let angles_deg = linspace(a.theta_min, a.theta_max, a.angles);
    let angles: Vec<f64> = angles_deg.iter().map(|d| d.to_radians()).collect();
    let r_min = a.r_min.unwrap_or(geom.aperture().max(f64::MIN_POSITIVE));
    let r_max = a.r_max.unwrap_or(2.0 * rayleigh);
    let distances = linspace(r_min, r_max, a.distances);
    let map = gain_map(geom, f, &w, &angles, &distances)?;

    let mut header = vec!["theta_deg/r_m".to_string()];
    header.extend(distances.iter().map(|&r| format_float(r)));
    let mut table = Table::new(header);
    for (i, &deg) in angles_deg.iter().enumerate() {
        let mut row = vec![Cell::Num(deg)];
        row.extend(map.values.row(i).iter().map(|&v| Cell::Num(v)));
        table.push(row);
    }
    outputs.csv("fieldmap.csv", &table)?;
    let (i, j) = map.argmax();
    say(
        out,
        format!(
            "peak gain {} at theta {} deg, r {} m",
            format_float(map.values[(i, j)]),
            format_float(angles_deg[i]),
            format_float(distances[j])
        ),
    )
}

fn default_r_min(geom: &ArrayGeometry, f: f64) -> Result<f64> {
    Ok(geom
        .aperture()
        .max(0.01 * rayleigh_distance(geom.aperture(), SPEED_OF_LIGHT / f)?))
}

fn codebook(ctx: &Ctx, a: &CodebookArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let s = ctx.scenario("codebook")?;
    let geom = s.single_array()?;
    let f = s.carrier.center_frequency();
    let size = a.size.unwrap_or(geom.len());
    let cb = match a.kind {
        CodebookChoice::Angular => angular_codebook(geom, f, size)?,
        CodebookChoice::Polar => {
            let r_min = a.r_min.map_or_else(|| default_r_min(geom, f), Ok)?;
            polar_codebook(geom, f, size, a.mu, r_min)?
        }
    };
    let labels = outputs.path("codebook_labels.csv");
    let entries = outputs.path("codebook_entries.csv");
    cb.export_csv(&labels, &entries)?;
    say(out, format!("{} codewords of length {}", cb.len(), cb.dimension()))?;
    if a.kind == CodebookChoice::Polar {
        let profile = codebook_coherence_profile(&cb)?;
        if let Some(m) = profile.max_adjacent_ring {
            say(out, format!("max adjacent-ring coherence {}", format_float(m)))?;
        }
        outputs.json("codebook_profile.json", &profile)?;
    }
    Ok(())
}

fn estimate(ctx: &Ctx, a: &EstimateArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let mut s = ctx.scenario("estimate")?.clone();
    s.seed = ctx.seed;
    let geom = s.single_array()?.clone();
    let f = s.carrier.center_frequency();
    let size = a.size.unwrap_or(geom.len());
    let r_min = a.r_min.map_or_else(|| default_r_min(&geom, f), Ok)?;
    let far = angular_codebook(&geom, f, size)?;
    let polar = polar_codebook(&geom, f, size, a.mu, r_min)?;
    let settings = EstimationSettings {
        snrs_db: a.snr.clone(),
        pilots: a.pilots.unwrap_or((geom.len() / 4).max(1)),
        sparsity: a.sparsity,
        stop_residual: a.stop_residual,
        trials: a.trials,
        angle_window: a.angle_window,
    };
    let table = compare_codebooks(&s, &far, &polar, &settings)?;
    let mut csv = Table::new(["distance_m", "snr_db", "codebook", "mean_nmse_db", "trials"]);
    for r in &table.rows {
        csv.push(vec![
            r.distance_m.into(),
            r.snr_db.into(),
            r.codebook.as_str().into(),
            r.mean_nmse_db.into(),
            r.trials.into(),
        ]);
        say(
            out,
            format!(
                "r {} m, snr {} dB, {}: {} dB",
                format_float(r.distance_m),
                format_float(r.snr_db),
                r.codebook,
                format_float(r.mean_nmse_db)
            ),
        )?;
    }
    outputs.csv("estimate.csv", &csv)
}

fn beamsplit(ctx: &Ctx, a: &BeamsplitArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let s = ctx.scenario("beamsplit")?;
    let geom = s.single_array()?;
    let target = s.require_users()?[0];
    let ps = ps_wideband(geom, &s.carrier, &target)?;
    let ttd = ttd_pdf(geom, &s.carrier, &target, a.subarrays)?;
    let ps_curve = gain_vs_frequency(geom, &s.carrier, &ps, &target)?;
    let ttd_curve = gain_vs_frequency(geom, &s.carrier, &ttd, &target)?;

    let mut table = Table::new(["frequency_hz", "ps_gain", "ttd_gain"]);
    for (p, t) in ps_curve.iter().zip(&ttd_curve) {
        table.push(vec![p.0.into(), p.1.into(), t.1.into()]);
    }
    outputs.csv("beamsplit.csv", &table)?;
    let min = |c: &[(f64, f64)]| c.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    say(
        out,
        format!(
            "min gain over band: ps {}, ttd {}",
            format_float(min(&ps_curve)),
            format_float(min(&ttd_curve))
        ),
    )?;

    if a.focal {
        let cells = a.focal_cells.max(1);
        let half = (cells / 2) as f64;
        let n = geom.len() as f64;
        let angles = (0..cells)
            .map(|i| {
                let sine = target.theta().sin() + (i as f64 - half) / n;
                if sine.abs() < 1.0 {
                    Ok(sine.asin())
                } else {
                    Err(config_error("--focal-cells", "focal grid leaves the visible region"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let distances: Vec<f64> = (0..cells)
            .map(|j| target.r() * (1.0 + 0.025 * (j as f64 - half)))
            .collect();
        let mut focal = Table::new(["frequency_hz", "design", "theta_deg", "r_m", "gain"]);
        for (name, wb) in [("ps", &ps), ("ttd", &ttd)] {
            focal_rows(&mut focal, name, wb, geom, s, &angles, &distances)?;
        }
        outputs.csv("beamsplit_focal.csv", &focal)?;
    }
    Ok(())
}

fn focal_rows(
    table: &mut Table,
    name: &str,
    wb: &WidebandBeamformer,
    geom: &ArrayGeometry,
    s: &ScenarioConfig,
    angles: &[f64],
    distances: &[f64],
) -> Result<()> {
    for fp in focal_point_map(geom, &s.carrier, wb, angles, distances)? {
        table.push(vec![
            fp.frequency.into(),
            name.into(),
            fp.theta.to_degrees().into(),
            fp.r.into(),
            fp.gain.into(),
        ]);
    }
    Ok(())
}

fn dof(ctx: &Ctx, a: &DofArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let s = ctx.scenario("dof")?;
    let (tx, rx) = match (s.arrays.get("tx"), s.arrays.get("rx")) {
        (Some(tx), Some(rx)) => (tx, rx),
        _ => {
            let g = s.single_array()?;
            (g, g)
        }
    };
    let f = s.carrier.center_frequency();
    let distances = match &a.distances {
        Some(d) => d.clone(),
        None => {
            let rm = mimo_rayleigh_distance(tx.aperture(), rx.aperture(), SPEED_OF_LIGHT / f)?;
            logspace(a.d_min.unwrap_or(0.01 * rm), a.d_max.unwrap_or(2.0 * rm), a.points)
        }
    };
    let reports = dof_vs_distance(tx, rx, &s.carrier, &distances, a.snr, a.threshold)?;
    let mut table = Table::new(["distance_m", "dof", "capacity_bps_hz"]);
    for r in &reports {
        table.push(vec![
            r.distance.into(),
            r.effective_dof.into(),
            r.capacity_bps_hz.into(),
        ]);
    }
    outputs.csv("dof.csv", &table)?;
    let first = &reports[0];
    say(
        out,
        format!(
            "dof {} at {} m, {} at {} m",
            first.effective_dof,
            format_float(first.distance),
            reports[reports.len() - 1].effective_dof,
            format_float(reports[reports.len() - 1].distance)
        ),
    )
}

fn sdma(ctx: &Ctx, a: &SdmaArgs, outputs: &mut OutputSet, out: &mut dyn Write) -> Result<()> {
    let s = ctx.scenario("sdma")?;
    let geom = s.single_array()?;
    let report = sdma_compare(geom, s.carrier.center_frequency(), s.require_users()?, a.snr)?;
    let mut table = Table::new(["metric", "value"]);
    table.push(vec!["near_field_zf_rate".into(), report.near_field_zf_rate.into()]);
    table.push(vec![
        "far_field_steering_rate".into(),
        report.far_field_steering_rate.into(),
    ]);
    table.push(vec!["channel_correlation".into(), report.channel_correlation.into()]);
    outputs.csv("sdma.csv", &table)?;
    outputs.json("sdma.json", &report)?;
    say(
        out,
        format!(
            "near-field ZF {} bit/s/Hz, far-field steering {} bit/s/Hz, correlation {}",
            format_float(report.near_field_zf_rate),
            format_float(report.far_field_steering_rate),
            format_float(report.channel_correlation)
        ),
    )
}
