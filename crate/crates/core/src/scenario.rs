//! Scenario files.
//!
//! A scenario is a TOML document with nested tables. Angles are written in
//! degrees and converted to radians on load; `r = inf` marks a far-field
//! location.
//!
//! ```toml
//! seed = 7
//! amplitude_model = "unit"          # or "free_space"
//!
//! [carrier]
//! center_frequency = 28e9
//! bandwidth = 0.0
//! num_subcarriers = 1
//!
//! [arrays.bs]
//! ula = { n = 256, spacing = 0.0053534 }   # or upa = {...}, or elements = [[x, y, z], ...]
//!
//! [[users]]
//! theta = 0.0
//! r = 34.8
//!
//! [[paths]]
//! gain = [1.0, 0.0]
//! theta = 10.0
//! r = 20.0
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Point3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{build_ula, build_upa, AmplitudeModel, ArrayGeometry, CarrierConfig, PolarPoint};
use crate::propagation::PathSpec;
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub arrays: BTreeMap<String, ArrayGeometry>,
    pub carrier: CarrierConfig,
    pub users: Vec<PolarPoint>,
    pub paths: Vec<PathSpec>,
    pub seed: u64,
    pub amplitude_model: AmplitudeModel,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    seed: u64,
    #[serde(default)]
    amplitude_model: AmplitudeModel,
    carrier: CarrierFile,
    #[serde(default)]
    arrays: BTreeMap<String, ArrayFile>,
    #[serde(default)]
    users: Vec<PointFile>,
    #[serde(default)]
    paths: Vec<PathFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CarrierFile {
    center_frequency: f64,
    #[serde(default)]
    bandwidth: f64,
    #[serde(default = "one")]
    num_subcarriers: usize,
    #[serde(default = "speed_of_light")]
    propagation_speed: f64,
}

fn one() -> usize {
    1
}

fn speed_of_light() -> f64 {
    SPEED_OF_LIGHT
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elements: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ula: Option<UlaFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upa: Option<UpaFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UlaFile {
    n: usize,
    spacing: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpaFile {
    nx: usize,
    ny: usize,
    spacing_x: f64,
    spacing_y: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointFile {
    /// Degrees.
    theta: f64,
    r: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathFile {
    gain: [f64; 2],
    theta: f64,
    r: f64,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| format!("byte {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, e.message().to_string())
        })?;
        file.into_config()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Serializes with explicit element lists and angles in degrees.
    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile {
            seed: self.seed,
            amplitude_model: self.amplitude_model,
            carrier: CarrierFile {
                center_frequency: self.carrier.center_frequency(),
                bandwidth: self.carrier.bandwidth(),
                num_subcarriers: self.carrier.num_subcarriers(),
                propagation_speed: self.carrier.propagation_speed(),
            },
            arrays: self
                .arrays
                .iter()
                .map(|(name, g)| {
                    let elements = g.elements().iter().map(|p| [p.x, p.y, p.z]).collect();
                    (
                        name.clone(),
                        ArrayFile {
                            elements: Some(elements),
                            ..Default::default()
                        },
                    )
                })
                .collect(),
            users: self
                .users
                .iter()
                .map(|p| PointFile {
                    theta: p.theta().to_degrees(),
                    r: p.r(),
                })
                .collect(),
            paths: self
                .paths
                .iter()
                .map(|p| PathFile {
                    gain: [p.gain.re, p.gain.im],
                    theta: p.point.theta().to_degrees(),
                    r: p.point.r(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("scenario serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn array(&self, name: &str) -> Result<&ArrayGeometry> {
        self.arrays
            .get(name)
            .ok_or_else(|| Error::config(format!("arrays.{name}"), "array not defined"))
    }

    /// The only array when exactly one is defined.
    pub fn single_array(&self) -> Result<&ArrayGeometry> {
        match self.arrays.len() {
            1 => Ok(self.arrays.values().next().expect("len checked")),
            0 => Err(Error::config("arrays", "no array defined")),
            _ => Err(Error::config("arrays", "several arrays defined; pick one by name")),
        }
    }

    pub fn require_users(&self) -> Result<&[PolarPoint]> {
        if self.users.is_empty() {
            return Err(Error::config("users", "at least one user is required"));
        }
        Ok(&self.users)
    }
}

impl ScenarioFile {
    fn into_config(self) -> Result<ScenarioConfig> {
        let c = &self.carrier;
        let carrier =
            CarrierConfig::with_speed(c.center_frequency, c.bandwidth, c.num_subcarriers, c.propagation_speed)
                .map_err(|e| Error::config(carrier_key(c), e.to_string()))?;

        let mut arrays = BTreeMap::new();
        for (name, spec) in self.arrays {
            let key = format!("arrays.{name}");
            let geom = match (spec.elements, spec.ula, spec.upa) {
                (Some(elements), None, None) => ArrayGeometry::new(
                    name.clone(),
                    elements.into_iter().map(|[x, y, z]| Point3::new(x, y, z)).collect(),
                ),
                (None, Some(u), None) => build_ula(u.n, u.spacing),
                (None, None, Some(u)) => build_upa(u.nx, u.ny, u.spacing_x, u.spacing_y),
                _ => {
                    return Err(Error::config(
                        key,
                        "exactly one of `elements`, `ula`, `upa` must be given",
                    ))
                }
            }
            .map_err(|e| Error::config(key, e.to_string()))?
            .with_name(name.clone());
            arrays.insert(name, geom);
        }

        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(i, u)| {
                PolarPoint::from_degrees(u.theta, u.r).map_err(|e| Error::config(format!("users[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;

        let paths = self
            .paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let point = PolarPoint::from_degrees(p.theta, p.r)
                    .map_err(|e| Error::config(format!("paths[{i}]"), e.to_string()))?;
                if !(p.gain[0].is_finite() && p.gain[1].is_finite()) {
                    return Err(Error::config(format!("paths[{i}].gain"), "gain must be finite"));
                }
                Ok(PathSpec {
                    gain: Complex64::new(p.gain[0], p.gain[1]),
                    point,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ScenarioConfig {
            arrays,
            carrier,
            users,
            paths,
            seed: self.seed,
            amplitude_model: self.amplitude_model,
        })
    }
}

fn carrier_key(c: &CarrierFile) -> &'static str {
    if !(c.center_frequency > 0.0) {
        "carrier.center_frequency"
    } else if !(c.bandwidth >= 0.0) || c.bandwidth >= 2.0 * c.center_frequency {
        "carrier.bandwidth"
    } else if c.num_subcarriers == 0 {
        "carrier.num_subcarriers"
    } else {
        "carrier.propagation_speed"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SAMPLE: &str = r#"
seed = 11
amplitude_model = "free_space"

[carrier]
center_frequency = 28e9
bandwidth = 1e9
num_subcarriers = 8

[arrays.bs]
ula = { n = 16, spacing = 0.005 }

[arrays.ue]
elements = [[0.0, 0.0, 0.0], [0.01, 0.0, 0.0]]

[[users]]
theta = 30.0
r = 12.5

[[users]]
theta = -10.0
r = inf

[[paths]]
gain = [0.5, -0.25]
theta = 5.0
r = 40.0
"#;

    #[test]
    fn parses_sample() {
        let s = ScenarioConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(s.seed, 11);
        assert_eq!(s.amplitude_model, AmplitudeModel::FreeSpace);
        assert_eq!(s.carrier.num_subcarriers(), 8);
        assert_eq!(s.array("bs").unwrap().len(), 16);
        assert_eq!(s.array("ue").unwrap().len(), 2);
        assert_relative_eq!(s.users[0].theta(), 30f64.to_radians(), max_relative = 1e-15);
        assert!(s.users[1].is_far_field());
        assert_eq!(s.paths[0].gain, Complex64::new(0.5, -0.25));
    }

    #[test]
    fn round_trips_through_text() {
        let s = ScenarioConfig::from_toml_str(SAMPLE).unwrap();
        let again = ScenarioConfig::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(again.arrays, s.arrays);
        assert_eq!(again.carrier, s.carrier);
        assert_eq!(again.seed, s.seed);
        for (a, b) in again.users.iter().zip(&s.users) {
            assert_relative_eq!(a.theta(), b.theta(), max_relative = 1e-14);
            assert_eq!(a.r(), b.r());
        }
    }

    #[test]
    fn errors_name_the_key() {
        let bad = SAMPLE.replace("center_frequency = 28e9", "center_frequency = -1.0");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "carrier.center_frequency"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SAMPLE.replace("theta = 30.0", "theta = 95.0");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "users[0]"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = SAMPLE.replace("seed = 11", "");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn missing_file_reports_path() {
        let err = ScenarioConfig::load("/nonexistent/scenario.toml").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/scenario.toml"));
    }
}
