//! Speed-band anomaly test with flow-discrepancy false-alarm filtering.
//!
//! An anomaly is raised when the estimated glider speed `V_L` stays outside
//! `[v_min, v_max]` for at least `debounce` seconds after the burn-in window.
//! At the first violating sample the flow discrepancy
//!
//! ```text
//! p_E = ‖F_M - F_L‖ / (2 · max(F̂_Lmax, F̂_Mmax))
//! ```
//!
//! is checked; if it exceeds `gamma_f` the event is reported as a false alarm
//! instead. `F̂_Lmax` and `F̂_Mmax` are the largest flow speeds seen in the
//! series so far. Once alarmed, `V_L` must stay inside the band for `debounce`
//! seconds before a `recovered` event is emitted.

pub mod report;

use std::fmt;

use log::warn;

use crate::error::{Error, Result};
use crate::estimator::{EstimateSample, EstimateSeries};
use crate::flow_field::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub gamma_f: f64,
    /// Minimum sustained violation (or recovery) before reporting, s.
    pub debounce: f64,
    /// Samples before this time are never tested, s from epoch.
    pub burn_in: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            v_min: 0.15,
            v_max: 0.25,
            gamma_f: 1.0,
            debounce: 1800.0,
            burn_in: 0.0,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_min > 0.0) {
            return Err(Error::validation("detection.v_min", "must be > 0"));
        }
        if !(self.v_max.is_finite() && self.v_max > self.v_min) {
            return Err(Error::validation("detection.v_max", "must be greater than v_min"));
        }
        if !(self.gamma_f.is_finite() && self.gamma_f > 0.0) {
            return Err(Error::validation("detection.gamma_f", "must be > 0"));
        }
        if !(self.debounce.is_finite() && self.debounce >= 0.0) {
            return Err(Error::validation("detection.debounce", "must be >= 0"));
        }
        if !self.burn_in.is_finite() {
            return Err(Error::validation("detection.burn_in", "must be finite"));
        }
        Ok(())
    }

    pub fn in_band(&self, v: f64) -> bool {
        v >= self.v_min && v <= self.v_max
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.v_min + self.v_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Anomaly,
    FalseAlarm,
    Recovered,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Anomaly => "anomaly",
            EventKind::FalseAlarm => "false_alarm",
            EventKind::Recovered => "recovered",
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anomaly" => Ok(EventKind::Anomaly),
            "false_alarm" => Ok(EventKind::FalseAlarm),
            "recovered" => Ok(EventKind::Recovered),
            other => Err(Error::Input(format!("unknown event kind `{other}`"))),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    /// Time of the first sample of the violation (or recovery), s from epoch.
    pub t: f64,
    pub kind: EventKind,
    pub v_l: f64,
    /// `None` when no glider flow estimate covered the trigger sample.
    pub p_e: Option<f64>,
    pub detail: String,
}

/// Flow discrepancy criterion. Both maxima zero is undefined; it is reported
/// as 0 with a warning.
pub fn compute_p_e(f_m: Vec2, f_l: Vec2, f_l_max: f64, f_m_max: f64) -> f64 {
    let denom = 2.0 * f_l_max.max(f_m_max);
    if denom > 0.0 {
        (f_m - f_l).norm() / denom
    } else {
        warn!("p_E undefined: both flow maxima are zero; using 0");
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    t: f64,
    v_l: f64,
    p_e: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Nominal,
    Alarmed,
}

/// Streaming detector; feeding samples one at a time or all at once gives the
/// same events.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectionConfig,
    f_l_max: f64,
    f_m_max: f64,
    phase: Phase,
    pending: Option<Pending>,
    last_t: f64,
}

/// What the detector computed for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleVerdict {
    pub p_e: Option<f64>,
    pub event: Option<DetectionEvent>,
}

impl Detector {
    pub fn new(cfg: DetectionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            f_l_max: 0.0,
            f_m_max: 0.0,
            phase: Phase::Nominal,
            pending: None,
            last_t: f64::NEG_INFINITY,
        })
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    pub fn push(&mut self, s: &EstimateSample, f_m: Option<Vec2>) -> Result<SampleVerdict> {
        if !(s.t > self.last_t) {
            return Err(Error::Input(format!(
                "series not time-ordered: {} after {}",
                s.t, self.last_t
            )));
        }
        self.last_t = s.t;
        self.f_l_max = self.f_l_max.max(s.f_l.norm());
        let p_e = f_m.map(|m| {
            self.f_m_max = self.f_m_max.max(m.norm());
            compute_p_e(m, s.f_l, self.f_l_max, self.f_m_max)
        });

        if s.t < self.cfg.burn_in {
            return Ok(SampleVerdict { p_e, event: None });
        }
        let in_band = self.cfg.in_band(s.v_l);
        // A sample continues the pending run when it is out of band (nominal)
        // or in band (alarmed).
        let continues = match self.phase {
            Phase::Nominal => !in_band,
            Phase::Alarmed => in_band,
        };
        if !continues {
            self.pending = None;
            return Ok(SampleVerdict { p_e, event: None });
        }
        let start = *self.pending.get_or_insert(Pending {
            t: s.t,
            v_l: s.v_l,
            p_e,
        });
        if s.t - start.t < self.cfg.debounce {
            return Ok(SampleVerdict { p_e, event: None });
        }
        self.pending = None;
        let event = match self.phase {
            Phase::Nominal => {
                self.phase = Phase::Alarmed;
                let band = format!("[{}, {}]", self.cfg.v_min, self.cfg.v_max);
                match start.p_e {
                    Some(p) if p > self.cfg.gamma_f => DetectionEvent {
                        t: start.t,
                        kind: EventKind::FalseAlarm,
                        v_l: start.v_l,
                        p_e: Some(p),
                        detail: format!(
                            "V_L outside {band} but p_E {p:.4} > gamma_f {}; flow estimates disagree",
                            self.cfg.gamma_f
                        ),
                    },
                    Some(p) => DetectionEvent {
                        t: start.t,
                        kind: EventKind::Anomaly,
                        v_l: start.v_l,
                        p_e: Some(p),
                        detail: format!("V_L outside {band}"),
                    },
                    None => DetectionEvent {
                        t: start.t,
                        kind: EventKind::Anomaly,
                        v_l: start.v_l,
                        p_e: None,
                        detail: format!("V_L outside {band}; p_E unavailable (no glider flow estimate)"),
                    },
                }
            }
            Phase::Alarmed => {
                self.phase = Phase::Nominal;
                DetectionEvent {
                    t: start.t,
                    kind: EventKind::Recovered,
                    v_l: start.v_l,
                    p_e: start.p_e,
                    detail: format!("V_L back inside [{}, {}]", self.cfg.v_min, self.cfg.v_max),
                }
            }
        };
        Ok(SampleVerdict {
            p_e,
            event: Some(event),
        })
    }
}

/// Output of a one-shot detection pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detection {
    pub events: Vec<DetectionEvent>,
    /// `p_E` for each sample of the series (`None` where `F_M` is missing).
    pub p_e: Vec<Option<f64>>,
}

/// Run the detector over a whole series. `f_m_at` supplies the glider flow
/// estimate covering a given time.
pub fn detect(
    series: &EstimateSeries,
    f_m_at: impl Fn(f64) -> Option<Vec2>,
    cfg: &DetectionConfig,
) -> Result<Detection> {
    let mut det = Detector::new(cfg.clone())?;
    let mut out = Detection::default();
    for s in &series.samples {
        let v = det.push(s, f_m_at(s.t))?;
        out.p_e.push(v.p_e);
        out.events.extend(v.event);
    }
    Ok(out)
}
