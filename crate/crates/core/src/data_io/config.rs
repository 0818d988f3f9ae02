//! Run configuration (TOML).
//!
//! Every field is optional. Omitted values fall back to the `franklin` preset
//! for the basis width and gains and to the defaults below for everything
//! else. Basis centers default to a 2×2 grid over the bounding box of the
//! planned track, and the true flow for simulations is drawn from the seed
//! unless `simulation.theta` is given. [`RunConfig::to_file`] writes a fully
//! explicit config that resolves back to the same [`RunConfig`].
//!
//! ```toml
//! preset = "franklin"          # franklin | usf-sam | usf-gansett | usf-stella
//!
//! [basis]
//! count = 4                    # only 4 (grid) unless centers/functions are given
//! sigma = 13e3                 # m
//! omega = 6.283185307179586e-6 # rad/s
//! phase = 0.0                  # rad
//! # centers = [[0.0, 0.0], ...]
//! # [[basis.functions]]        # full per-basis control
//! # center = [0.0, 0.0]
//! # sigma = 13e3
//!
//! [gains]
//! k = 0.003                    # scalar → k·I, or [[a, b], [b, c]]
//! gamma_bar = 5e-7
//! s = 0.03
//!
//! [detection]
//! v_min = 0.15
//! v_max = 0.25
//! gamma_f = 1.0
//! debounce = 1800.0            # s
//! burn_in_fraction = 0.1       # of simulation.duration, or burn_in = <s>
//!
//! [simulation]
//! duration = 604800.0
//! dt = 10.0
//! surfacing_interval = 14400.0
//! waypoints = [[...], ...]
//! [[simulation.anomalies]]
//! kind = "speed_degradation"
//! t_start = 259200.0
//! magnitude = 0.6
//! ```

use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Utc};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::detector::DetectionConfig;
use crate::error::{Error, Result};
use crate::estimator::{EstimatorGains, ObserverSettings};
use crate::flow_field::{BasisFunction, BasisSet, FlowField, FlowParameters, Vec2};
use crate::simulator::{random_flow_parameters, AnomalyInjection, AnomalyKind, HeadingPlan, NoiseConfig, SimConfig};

/// Tidal frequency shared by every preset, rad/s.
pub const TIDAL_OMEGA: f64 = 2.0 * PI * 1e-6;

/// Per-deployment basis width and gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub sigma: f64,
    pub k: f64,
    pub gamma_bar: f64,
    pub s: f64,
}

pub const PRESETS: [Preset; 4] = [
    Preset {
        name: "franklin",
        sigma: 13e3,
        k: 0.003,
        gamma_bar: 5e-7,
        s: 30e-3,
    },
    Preset {
        name: "usf-sam",
        sigma: 50e3,
        k: 0.002,
        gamma_bar: 5e-7,
        s: 7e-3,
    },
    Preset {
        name: "usf-gansett",
        sigma: 32e3,
        k: 0.003,
        gamma_bar: 1e-6,
        s: 18e-3,
    },
    Preset {
        name: "usf-stella",
        sigma: 30e3,
        k: 0.003,
        gamma_bar: 1e-7,
        s: 30e-3,
    },
];

pub fn preset(name: &str) -> Result<Preset> {
    PRESETS.iter().find(|p| p.name == name).copied().ok_or_else(|| {
        let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
        Error::validation("preset", format!("unknown preset `{name}`; expected one of {names:?}"))
    })
}

pub const DEFAULT_EPOCH: &str = "2022-10-08T00:00:00Z";

/// Default mission: seven days circling a 2 km box.
pub const DEFAULT_DURATION: f64 = 7.0 * 86400.0;

/// Peak flow speed of the seeded flow draw, m/s.
pub const DEFAULT_FLOW_MAX: f64 = 0.10;

/// Heading slew limit, rad/s (about 0.1°/s, a turning radius near 130 m at
/// 0.2 m/s).
pub const DEFAULT_TURN_RATE: f64 = 1.5e-3;

/// Square patrol whose legs are shorter than one surfacing interval, so the
/// heading changes at nearly every surfacing.
pub fn default_waypoints() -> Vec<Vec2> {
    vec![
        Vec2::new(2000.0, 0.0),
        Vec2::new(2000.0, 2000.0),
        Vec2::new(0.0, 2000.0),
        Vec2::new(0.0, 0.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainMatrix {
    Scalar(f64),
    Full([[f64; 2]; 2]),
}

impl GainMatrix {
    fn to_matrix(&self) -> Matrix2<f64> {
        match self {
            GainMatrix::Scalar(k) => Matrix2::from_diagonal_element(*k),
            GainMatrix::Full(m) => Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisFunctionSpec {
    pub center: [f64; 2],
    pub sigma: Option<f64>,
    pub omega: Option<f64>,
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functions: Option<Vec<BasisFunctionSpec>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<GainMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub online_sample_interval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub debounce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalySpec {
    pub kind: String,
    pub t_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "one")]
    pub magnitude: f64,
}

fn one() -> f64 {
    1.0
}

impl AnomalySpec {
    pub fn to_injection(&self) -> Result<AnomalyInjection> {
        let a = AnomalyInjection {
            kind: self.kind.parse::<AnomalyKind>()?,
            t_start: self.t_start,
            t_end: self.t_end,
            magnitude: self.magnitude,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn from_injection(a: &AnomalyInjection) -> Self {
        Self {
            kind: a.kind.as_str().to_string(),
            t_start: a.t_start,
            t_end: a.t_end,
            magnitude: a.magnitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surfacing_interval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_subsample: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_samples: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 2]>,
    /// Constant heading, rad. Mutually exclusive with the other plans.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
    /// `[[t, heading], ...]`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_schedule: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accept_radius: Option<f64>,
    /// Heading slew limit, rad/s; 0 turns instantly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn_rate: Option<f64>,
    /// Peak flow speed for the seeded θ draw, m/s.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_max: Option<f64>,
    /// Explicit true flow: `[[u_1, ..., u_N], [v_1, ..., v_N]]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<[Vec<f64>; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epoch: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub anomalies: Vec<AnomalySpec>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deployment: Option<String>,
    pub basis: BasisSection,
    pub gains: GainsSection,
    pub estimator: EstimatorSection,
    pub detection: DetectionSection,
    pub simulation: SimulationSection,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub deployment: String,
    pub basis: BasisSet,
    pub gains: EstimatorGains,
    pub observer: ObserverSettings,
    /// Initial speed estimate.
    pub v0: f64,
    pub detection: DetectionConfig,
    pub sim: SimConfig,
    pub injections: Vec<AnomalyInjection>,
    pub sparse_samples: bool,
    pub epoch: DateTime<Utc>,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::validation(field, "must be finite"))
    }
}

fn v2(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::parse(line, e.message().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    fn heading_plan(&self, v_true: f64, interval: f64) -> Result<HeadingPlan> {
        let s = &self.simulation;
        let given = [s.heading.is_some(), s.heading_schedule.is_some(), s.waypoints.is_some()];
        if given.iter().filter(|&&g| g).count() > 1 {
            return Err(Error::validation(
                "simulation.heading",
                "give only one of `heading`, `heading_schedule` and `waypoints`",
            ));
        }
        if let Some(h) = s.heading {
            return Ok(HeadingPlan::Constant(finite("simulation.heading", h)?));
        }
        if let Some(entries) = &s.heading_schedule {
            return Ok(HeadingPlan::Schedule(entries.iter().map(|e| (e[0], e[1])).collect()));
        }
        let points = s
            .waypoints
            .as_ref()
            .map(|w| w.iter().copied().map(v2).collect())
            .unwrap_or_else(default_waypoints);
        let accept_radius = match s.accept_radius {
            Some(r) => positive("simulation.accept_radius", r)?,
            None => 0.5 * v_true * interval,
        };
        Ok(HeadingPlan::Waypoints { points, accept_radius })
    }

    /// Apply defaults and check every invariant.
    pub fn resolve(&self) -> Result<RunConfig> {
        let preset = preset(self.preset.as_deref().unwrap_or("franklin"))?;
        let sim_s = &self.simulation;

        let v_true = positive("simulation.v_true", sim_s.v_true.unwrap_or(0.20))?;
        let duration = positive("simulation.duration", sim_s.duration.unwrap_or(DEFAULT_DURATION))?;
        let dt = positive("simulation.dt", sim_s.dt.unwrap_or(10.0))?;
        let interval = positive(
            "simulation.surfacing_interval",
            sim_s.surfacing_interval.unwrap_or(4.0 * 3600.0),
        )?;
        let seed = sim_s.seed.unwrap_or(1);
        let start = v2(sim_s.start.unwrap_or([0.0, 0.0]));
        let heading_plan = self.heading_plan(v_true, interval)?;

        // Basis.
        let b = &self.basis;
        let sigma = positive("basis.sigma", b.sigma.unwrap_or(preset.sigma))?;
        let omega = b.omega.unwrap_or(TIDAL_OMEGA);
        if !(omega.is_finite() && omega >= 0.0) {
            return Err(Error::validation("basis.omega", "must be finite and >= 0"));
        }
        let phase = finite("basis.phase", b.phase.unwrap_or(0.0))?;
        let basis = if let Some(fns) = &b.functions {
            if b.centers.is_some() {
                return Err(Error::validation("basis", "give either `centers` or `functions`"));
            }
            let bases = fns
                .iter()
                .map(|f| {
                    BasisFunction::new(
                        v2(f.center),
                        f.sigma.unwrap_or(sigma),
                        f.omega.unwrap_or(omega),
                        f.phase.unwrap_or(phase),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            BasisSet::new(bases)?
        } else if let Some(centers) = &b.centers {
            BasisSet::new(
                centers
                    .iter()
                    .map(|c| BasisFunction::new(v2(*c), sigma, omega, phase))
                    .collect::<Result<Vec<_>>>()?,
            )?
        } else {
            let (lo, hi) = heading_plan.planned_bounds(start, v_true, duration);
            BasisSet::grid_2x2(lo, hi, sigma, omega, phase)?
        };
        if let Some(n) = b.count {
            if n != basis.len() {
                return Err(Error::validation(
                    "basis.count",
                    format!("is {n} but {} basis functions are defined", basis.len()),
                ));
            }
        }

        // Gains.
        let g = &self.gains;
        let gains = EstimatorGains {
            k: g.k
                .as_ref()
                .map_or(Matrix2::from_diagonal_element(preset.k), GainMatrix::to_matrix),
            gamma_bar: positive("gains.gamma_bar", g.gamma_bar.unwrap_or(preset.gamma_bar))?,
            s: positive("gains.s", g.s.unwrap_or(preset.s))?,
        };
        gains.validate()?;

        // Detection.
        let d = &self.detection;
        let burn_in = match (d.burn_in, d.burn_in_fraction) {
            (Some(_), Some(_)) => {
                return Err(Error::validation(
                    "detection.burn_in",
                    "give either `burn_in` or `burn_in_fraction`",
                ))
            }
            (Some(b), None) => b,
            (None, f) => {
                let f = f.unwrap_or(0.1);
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::validation("detection.burn_in_fraction", "must be in [0, 1]"));
                }
                f * duration
            }
        };
        let detection = DetectionConfig {
            v_min: d.v_min.unwrap_or(0.15),
            v_max: d.v_max.unwrap_or(0.25),
            gamma_f: d.gamma_f.unwrap_or(1.0),
            debounce: d.debounce.unwrap_or(1800.0),
            burn_in,
        };
        detection.validate()?;

        let e = &self.estimator;
        let defaults = ObserverSettings::default();
        let observer = ObserverSettings {
            max_step: e.max_step.unwrap_or(defaults.max_step),
            online_sample_interval: e.online_sample_interval.unwrap_or(defaults.online_sample_interval),
            divergence_limit: e.divergence_limit.unwrap_or(defaults.divergence_limit),
        };
        observer.validate()?;
        let v0 = finite("estimator.v0", e.v0.unwrap_or(detection.midpoint()))?;

        // True flow.
        let params = match &sim_s.theta {
            Some([u, v]) => FlowParameters::from_rows(u, v)?,
            None => {
                let (lo, hi) = heading_plan.planned_bounds(start, v_true, duration);
                let pad = Vec2::repeat(0.25 * sigma);
                let flow_max = sim_s.flow_max.unwrap_or(DEFAULT_FLOW_MAX);
                random_flow_parameters(&basis, seed, flow_max, lo - pad, hi + pad, duration)?
            }
        };
        if params.ncols() != basis.len() {
            return Err(Error::validation(
                "simulation.theta",
                format!("has {} columns, basis has {}", params.ncols(), basis.len()),
            ));
        }
        let flow = FlowField::new(basis.clone(), params)?;

        let sim = SimConfig {
            flow,
            v_true,
            heading_plan,
            start,
            duration,
            dt,
            surfacing_interval: interval,
            segment_subsample: sim_s.segment_subsample.unwrap_or(3),
            seed,
            noise: NoiseConfig {
                position_std: sim_s.position_noise.unwrap_or(0.0),
                heading_std: sim_s.heading_noise.unwrap_or(0.0),
            },
            turn_rate: Some(sim_s.turn_rate.unwrap_or(DEFAULT_TURN_RATE)).filter(|&r| r != 0.0),
        };
        sim.validate()?;
        let injections = sim_s
            .anomalies
            .iter()
            .map(AnomalySpec::to_injection)
            .collect::<Result<Vec<_>>>()?;

        let epoch_str = sim_s.epoch.as_deref().unwrap_or(DEFAULT_EPOCH);
        let epoch = DateTime::parse_from_rfc3339(epoch_str)
            .map_err(|e| Error::validation("simulation.epoch", e.to_string()))?
            .with_timezone(&Utc);

        Ok(RunConfig {
            deployment: self.deployment.clone().unwrap_or_else(|| "synthetic".to_string()),
            basis,
            gains,
            observer,
            v0,
            detection,
            sim,
            injections,
            sparse_samples: sim_s.sparse_samples.unwrap_or(true),
            epoch,
        })
    }
}

/// Load and resolve a config file; `None` gives the built-in defaults.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => ConfigFile::load(p)?.resolve(),
        None => ConfigFile::default().resolve(),
    }
}

impl RunConfig {
    /// Explicit config that resolves back to `self`.
    pub fn to_file(&self) -> ConfigFile {
        let functions = self
            .basis
            .iter()
            .map(|b| BasisFunctionSpec {
                center: [b.center.x, b.center.y],
                sigma: Some(b.width),
                omega: Some(b.frequency),
                phase: Some(b.phase),
            })
            .collect();
        let k = &self.gains.k;
        let (heading, heading_schedule, waypoints, accept_radius) = match &self.sim.heading_plan {
            HeadingPlan::Constant(h) => (Some(*h), None, None, None),
            HeadingPlan::Schedule(e) => (None, Some(e.iter().map(|(t, h)| [*t, *h]).collect()), None, None),
            HeadingPlan::Waypoints { points, accept_radius } => (
                None,
                None,
                Some(points.iter().map(|p| [p.x, p.y]).collect()),
                Some(*accept_radius),
            ),
        };
        let theta = self.sim.flow.params.clone();
        ConfigFile {
            preset: None,
            deployment: Some(self.deployment.clone()),
            basis: BasisSection {
                count: Some(self.basis.len()),
                functions: Some(functions),
                ..Default::default()
            },
            gains: GainsSection {
                k: Some(GainMatrix::Full([[k[(0, 0)], k[(0, 1)]], [k[(1, 0)], k[(1, 1)]]])),
                gamma_bar: Some(self.gains.gamma_bar),
                s: Some(self.gains.s),
            },
            estimator: EstimatorSection {
                v0: Some(self.v0),
                max_step: Some(self.observer.max_step),
                online_sample_interval: Some(self.observer.online_sample_interval),
                divergence_limit: Some(self.observer.divergence_limit),
            },
            detection: DetectionSection {
                v_min: Some(self.detection.v_min),
                v_max: Some(self.detection.v_max),
                gamma_f: Some(self.detection.gamma_f),
                debounce: Some(self.detection.debounce),
                burn_in: Some(self.detection.burn_in),
                burn_in_fraction: None,
            },
            simulation: SimulationSection {
                v_true: Some(self.sim.v_true),
                duration: Some(self.sim.duration),
                dt: Some(self.sim.dt),
                surfacing_interval: Some(self.sim.surfacing_interval),
                segment_subsample: Some(self.sim.segment_subsample),
                sparse_samples: Some(self.sparse_samples),
                seed: Some(self.sim.seed),
                start: Some([self.sim.start.x, self.sim.start.y]),
                heading,
                heading_schedule,
                waypoints,
                accept_radius,
                turn_rate: Some(self.sim.turn_rate.unwrap_or(0.0)),
                flow_max: None,
                theta: Some([theta.row(0), theta.row(1)]),
                position_noise: Some(self.sim.noise.position_std),
                heading_noise: Some(self.sim.noise.heading_std),
                epoch: Some(super::table::format_epoch(&self.epoch)),
                anomalies: self.injections.iter().map(AnomalySpec::from_injection).collect(),
            },
        }
    }
}
