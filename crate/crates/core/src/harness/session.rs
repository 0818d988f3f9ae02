use crate::data_io::RunConfig;
use crate::data_io::SparseRecord;
use crate::detector::report::{report, ReportBundle, ReportInput};
use crate::detector::{DetectionEvent, Detector};
use crate::error::Result;
use crate::estimator::{EstimateSeries, OnlineEstimator};
use crate::flow_field::Vec2;

/// Online estimation and detection over a record feed. Used both for one-shot
/// online runs and by the spool consumer, so the two agree by construction.
#[derive(Debug, Clone)]
pub struct OnlineSession {
    estimator: OnlineEstimator,
    detector: Detector,
    series: EstimateSeries,
    f_m: Vec<Option<Vec2>>,
    p_e: Vec<Option<f64>>,
    events: Vec<DetectionEvent>,
    last_end: Option<f64>,
}

impl OnlineSession {
    pub fn new(rc: &RunConfig) -> Result<Self> {
        Ok(Self {
            estimator: OnlineEstimator::new(rc.gains.clone(), rc.basis.clone(), rc.observer.clone(), rc.v0)?,
            detector: Detector::new(rc.detection.clone())?,
            series: EstimateSeries::default(),
            f_m: Vec::new(),
            p_e: Vec::new(),
            events: Vec::new(),
            last_end: None,
        })
    }

    /// End time of the last record consumed.
    pub fn last_end(&self) -> Option<f64> {
        self.last_end
    }

    /// Consume one record (local metres) and return the events it produced.
    pub fn push(&mut self, rec: &SparseRecord) -> Result<&[DetectionEvent]> {
        let before = self.events.len();
        for s in self.estimator.push(rec)? {
            let verdict = self.detector.push(&s, Some(rec.f_m))?;
            self.series.samples.push(s);
            self.f_m.push(Some(rec.f_m));
            self.p_e.push(verdict.p_e);
            self.events.extend(verdict.event);
        }
        self.last_end = Some(rec.end_t);
        Ok(&self.events[before..])
    }

    pub fn series(&self) -> &EstimateSeries {
        &self.series
    }

    pub fn events(&self) -> &[DetectionEvent] {
        &self.events
    }

    pub fn p_e(&self) -> &[Option<f64>] {
        &self.p_e
    }

    pub fn warnings(&self) -> Vec<String> {
        self.estimator.warnings().iter().map(|w| w.to_string()).collect()
    }

    pub fn report(&self, rc: &RunConfig) -> Result<ReportBundle> {
        let warnings = self.warnings();
        report(&ReportInput {
            deployment: &rc.deployment,
            mode: "online",
            epoch: rc.epoch,
            cfg: &rc.detection,
            series: &self.series,
            f_m: &self.f_m,
            p_e: &self.p_e,
            events: &self.events,
            warnings: &warnings,
        })
    }
}
