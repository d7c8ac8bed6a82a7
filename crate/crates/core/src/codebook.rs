//! Angular (far-field) and polar-domain (near-field) codebooks.
//!
//! Both codebooks sample the angle space uniformly in `sin(theta)`. The polar
//! codebook adds distance rings per angle, built greedily from the far-field
//! ring inward: each new ring is the largest distance whose codeword has
//! coherence at most `mu_target` with the previous ring. Because coherence
//! along a spoke is governed by `1/r`, the rings come out dense near the
//! array and sparse far away.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundaries::rayleigh_distance;
use crate::model::{ArrayGeometry, PolarPoint};
use crate::propagation::array_response;
use crate::{CVector, Error, Result, SPEED_OF_LIGHT};

/// Default adjacent-ring coherence target.
pub const DEFAULT_MU_TARGET: f64 = 0.5;

const RING_SCAN_STEPS: usize = 64;
const RING_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CodebookKind {
    Angular,
    Polar,
}

/// Where a codebook came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub geometry: String,
    pub num_elements: usize,
    pub frequency: f64,
    pub mu_target: Option<f64>,
}

/// Unit-norm codewords with their polar labels.
///
/// Polar codebooks are stored spoke by spoke: for each angle, the far-field
/// ring first, then strictly decreasing distances.
#[derive(Debug, Clone)]
pub struct Codebook {
    codewords: Vec<CVector>,
    labels: Vec<PolarPoint>,
    kind: CodebookKind,
    provenance: Provenance,
}

impl Codebook {
    /// Assembles a codebook and checks its invariants.
    pub fn from_parts(
        kind: CodebookKind,
        labels: Vec<PolarPoint>,
        codewords: Vec<CVector>,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.len() != codewords.len() {
            return Err(Error::invalid("label and codeword counts differ"));
        }
        if codewords.is_empty() {
            return Err(Error::invalid("codebook is empty"));
        }
        let n = codewords[0].len();
        for (i, c) in codewords.iter().enumerate() {
            if c.len() != n {
                return Err(Error::invalid(format!("codeword {i} has length {}", c.len())));
            }
            if (c.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("codeword {i} is not unit-norm")));
            }
        }
        let mut keys: Vec<(u64, u64)> = labels.iter().map(|p| (p.theta().to_bits(), p.r().to_bits())).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("codebook labels must be unique"));
        }
        if kind == CodebookKind::Polar {
            for spoke in spokes(&labels) {
                let rs: Vec<f64> = spoke.clone().map(|i| labels[i].r()).collect();
                if !rs[0].is_infinite() {
                    return Err(Error::invalid("every polar spoke must start with a far-field ring"));
                }
                if rs.windows(2).any(|w| w[1] >= w[0]) {
                    return Err(Error::invalid("polar rings must be strictly decreasing per angle"));
                }
            }
        }
        Ok(Self {
            codewords,
            labels,
            kind,
            provenance,
        })
    }

    pub fn codewords(&self) -> &[CVector] {
        &self.codewords
    }

    pub fn labels(&self) -> &[PolarPoint] {
        &self.labels
    }

    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Length of every codeword.
    pub fn dimension(&self) -> usize {
        self.codewords[0].len()
    }

    /// Index ranges of consecutive codewords sharing one angle.
    pub fn spokes(&self) -> Vec<std::ops::Range<usize>> {
        spokes(&self.labels).collect()
    }

    /// Distances of the rings on each spoke, far-field ring included.
    pub fn rings(&self) -> Vec<(f64, Vec<f64>)> {
        self.spokes()
            .into_iter()
            .map(|s| (self.labels[s.start].theta(), s.map(|i| self.labels[i].r()).collect()))
            .collect()
    }

    /// Writes `<stem>_labels.csv` and `<stem>_entries.csv`.
    ///
    /// The labels file holds `index,kind,theta_rad,r_m` rows; the entries file
    /// holds one codeword per row as `re0,im0,re1,im1,...`. Values are printed
    /// in shortest round-trip form so a reload is exact.
    pub fn export_csv(&self, labels_path: &Path, entries_path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().from_path(labels_path)?;
        w.write_record(["index", "kind", "theta_rad", "r_m"])?;
        let kind = match self.kind {
            CodebookKind::Angular => "angular",
            CodebookKind::Polar => "polar",
        };
        for (i, p) in self.labels.iter().enumerate() {
            w.write_record([i.to_string(), kind.into(), p.theta().to_string(), p.r().to_string()])?;
        }
        w.flush().map_err(|e| io_err(labels_path, e))?;

        let mut w = csv::WriterBuilder::new().from_path(entries_path)?;
        let header: Vec<String> = (0..self.dimension())
            .flat_map(|n| [format!("re{n}"), format!("im{n}")])
            .collect();
        w.write_record(&header)?;
        for c in &self.codewords {
            w.write_record(c.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]))?;
        }
        w.flush().map_err(|e| io_err(entries_path, e))?;
        Ok(())
    }

    /// Reads a codebook written by [`Codebook::export_csv`].
    pub fn import_csv(labels_path: &Path, entries_path: &Path, provenance: Provenance) -> Result<Self> {
        let mut kind = None;
        let mut labels = Vec::new();
        let mut r = csv::Reader::from_path(labels_path)?;
        for rec in r.records() {
            let rec = rec?;
            let k = match rec.get(1) {
                Some("angular") => CodebookKind::Angular,
                Some("polar") => CodebookKind::Polar,
                other => return Err(Error::invalid(format!("unknown codebook kind {other:?}"))),
            };
            if kind.replace(k).is_some_and(|prev| prev != k) {
                return Err(Error::invalid("mixed codebook kinds in labels file"));
            }
            let theta = parse_f64(rec.get(2), labels_path)?;
            let rr = parse_f64(rec.get(3), labels_path)?;
            labels.push(PolarPoint::new(theta, rr)?);
        }
        let mut codewords = Vec::with_capacity(labels.len());
        let mut r = csv::Reader::from_path(entries_path)?;
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| parse_f64(Some(s), entries_path))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() % 2 != 0 {
                return Err(Error::invalid("entries row has an odd number of fields"));
            }
            codewords.push(CVector::from_iterator(
                vals.len() / 2,
                vals.chunks(2).map(|c| Complex64::new(c[0], c[1])),
            ));
        }
        let kind = kind.ok_or_else(|| Error::invalid("labels file is empty"))?;
        Self::from_parts(kind, labels, codewords, provenance)
    }
}

fn parse_f64(field: Option<&str>, path: &Path) -> Result<f64> {
    field
        .and_then(|s| s.trim().parse::<f64>().ok())
        .ok_or_else(|| Error::invalid(format!("malformed number in {}", path.display())))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn spokes(labels: &[PolarPoint]) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= labels.len() {
            return None;
        }
        let th = labels[start].theta();
        let end = labels[start..]
            .iter()
            .position(|p| p.theta() != th)
            .map_or(labels.len(), |k| start + k);
        let range = start..end;
        start = end;
        Some(range)
    })
}

/// `|<u, v>|` for unit-norm vectors.
pub fn coherence(u: &CVector, v: &CVector) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::invalid(format!(
            "coherence of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.dotc(v).norm().min(1.0))
}

/// Angles whose sines are uniform over `[-1 + 1/size, 1 - 1/size]`.
pub fn uniform_sine_angles(size: usize) -> Vec<f64> {
    (0..size)
        .map(|q| ((2.0 * q as f64 - size as f64 + 1.0) / size as f64).asin())
        .collect()
}

fn codeword(geom: &ArrayGeometry, f: f64, p: &PolarPoint) -> Result<CVector> {
    Ok(array_response(geom, f, p)?.normalized())
}

fn provenance(geom: &ArrayGeometry, f: f64, mu_target: Option<f64>) -> Provenance {
    Provenance {
        geometry: geom.name().to_string(),
        num_elements: geom.len(),
        frequency: f,
        mu_target,
    }
}

/// One normalized planar codeword per angle.
pub fn angular_codebook(geom: &ArrayGeometry, f: f64, size: usize) -> Result<Codebook> {
    if size == 0 {
        return Err(Error::invalid("codebook size must be >= 1"));
    }
    let labels = uniform_sine_angles(size)
        .into_iter()
        .map(PolarPoint::far_field)
        .collect::<Result<Vec<_>>>()?;
    let codewords = labels
        .iter()
        .map(|p| codeword(geom, f, p))
        .collect::<Result<Vec<_>>>()?;
    Codebook::from_parts(CodebookKind::Angular, labels, codewords, provenance(geom, f, None))
}

/// Polar-domain codebook with greedy coherence-controlled distance rings.
pub fn polar_codebook(
    geom: &ArrayGeometry,
    f: f64,
    angle_count: usize,
    mu_target: f64,
    r_min: f64,
) -> Result<Codebook> {
    if angle_count == 0 {
        return Err(Error::invalid("angle_count must be >= 1"));
    }
    if !(mu_target > 0.0 && mu_target < 1.0) {
        return Err(Error::invalid(format!("mu_target must lie in (0, 1), got {mu_target}")));
    }
    if !(r_min > geom.aperture() / 2.0) {
        return Err(Error::domain(format!(
            "r_min = {r_min} m lies inside the array hull (aperture {} m)",
            geom.aperture()
        )));
    }
    let spokes = uniform_sine_angles(angle_count)
        .into_par_iter()
        .map(|theta| spoke_rings(geom, f, theta, mu_target, r_min))
        .collect::<Result<Vec<_>>>()?;
    let (labels, codewords): (Vec<_>, Vec<_>) = spokes.into_iter().flatten().unzip();
    Codebook::from_parts(
        CodebookKind::Polar,
        labels,
        codewords,
        provenance(geom, f, Some(mu_target)),
    )
}

fn spoke_rings(geom: &ArrayGeometry, f: f64, theta: f64, mu: f64, r_min: f64) -> Result<Vec<(PolarPoint, CVector)>> {
    let far = PolarPoint::far_field(theta)?;
    let mut rings = vec![(far, codeword(geom, f, &far)?)];
    // Search in inverse distance: 0 is the far-field ring.
    let inv_max = 1.0 / r_min;
    let mut inv_prev = 0.0;
    loop {
        let prev = &rings.last().expect("non-empty").1;
        let coh =
            |inv: f64| -> Result<f64> { coherence(prev, &codeword(geom, f, &PolarPoint::new(theta, 1.0 / inv)?)?) };
        if inv_prev >= inv_max {
            break;
        }
        let step = (inv_max - inv_prev) / RING_SCAN_STEPS as f64;
        let mut bracket = None;
        for i in 1..=RING_SCAN_STEPS {
            let inv = if i == RING_SCAN_STEPS {
                inv_max
            } else {
                inv_prev + step * i as f64
            };
            if coh(inv)? <= mu {
                bracket = Some((inv - step, inv));
                break;
            }
        }
        let Some((mut lo, mut hi)) = bracket else { break };
        lo = lo.max(inv_prev);
        for _ in 0..RING_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if coh(mid)? <= mu {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let p = PolarPoint::new(theta, 1.0 / hi)?;
        rings.push((p, codeword(geom, f, &p)?));
        inv_prev = hi;
    }
    Ok(rings)
}

/// Quality summary of a polar codebook.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceProfile {
    /// `None` when no spoke has more than one ring.
    pub max_adjacent_ring: Option<f64>,
    /// Largest coherence between neighbouring angles at the same ring index.
    pub max_cross_angle: Option<f64>,
    /// Adjacent-ring coherences in ten bins of width 0.1 over `[0, 1]`.
    pub histogram: [usize; 10],
    /// Set when two adjacent rings are numerically identical codewords.
    pub duplicate_alarm: bool,
}

pub fn codebook_coherence_profile(cb: &Codebook) -> Result<CoherenceProfile> {
    if cb.kind != CodebookKind::Polar {
        return Err(Error::UnsupportedModel(
            "coherence profile is defined for polar codebooks only".into(),
        ));
    }
    let spokes = cb.spokes();
    let mut adjacent = Vec::new();
    for s in &spokes {
        for i in s.start..s.end - 1 {
            adjacent.push(coherence(&cb.codewords[i], &cb.codewords[i + 1])?);
        }
    }
    let mut cross: Option<f64> = None;
    for pair in spokes.windows(2) {
        let common = pair[0].len().min(pair[1].len());
        for s in 0..common {
            let c = coherence(&cb.codewords[pair[0].start + s], &cb.codewords[pair[1].start + s])?;
            cross = Some(cross.map_or(c, |m| m.max(c)));
        }
    }
    let mut histogram = [0usize; 10];
    for &c in &adjacent {
        histogram[((c * 10.0) as usize).min(9)] += 1;
    }
    let max_adjacent_ring = adjacent.iter().copied().reduce(f64::max);
    Ok(CoherenceProfile {
        max_adjacent_ring,
        max_cross_angle: cross,
        histogram,
        duplicate_alarm: max_adjacent_ring.is_some_and(|m| m >= 1.0 - 1e-9),
    })
}

/// Smallest distance at which the polar codebook adds near-field rings for
/// this geometry; below `r_min` a codebook degenerates to angular.
pub fn near_zone_extent(geom: &ArrayGeometry, f: f64) -> Result<f64> {
    rayleigh_distance(geom.aperture(), SPEED_OF_LIGHT / f)
}

/// Loads a codebook from a CSV pair, inferring provenance from the files.
pub fn import_codebook(labels_path: &Path, entries_path: &Path) -> Result<Codebook> {
    let file = File::open(entries_path).map_err(|e| io_err(entries_path, e))?;
    let header = BufReader::new(file)
        .lines()
        .next()
        .transpose()
        .map_err(|e| io_err(entries_path, e))?
        .unwrap_or_default();
    let dim = header.split(',').count() / 2;
    Codebook::import_csv(
        labels_path,
        entries_path,
        Provenance {
            geometry: "imported".into(),
            num_elements: dim,
            frequency: f64::NAN,
            mu_target: None,
        },
    )
}
