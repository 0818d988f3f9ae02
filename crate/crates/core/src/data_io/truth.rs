//! Simulator ground truth, `#version glider-truth/1`.
//!
//! One row per integration step. Each injected anomaly is declared in the
//! preamble as `#anomaly <kind> <t_start> <t_end|-> <magnitude>`, and the
//! `anomaly` column names the kinds active at that step (joined with `+`).

use std::path::Path;

use super::table::{self, expect_len, field_f64, parse_table, write_preamble, Meta};
use crate::error::{Error, Result};
use crate::flow_field::Vec2;
use crate::simulator::{AnomalyInjection, GroundTruth};

pub const TRUTH_VERSION: &str = "glider-truth/1";
const HEADER: [&str; 9] = [
    "t",
    "x",
    "y",
    "heading",
    "motion_heading",
    "speed",
    "flow_u",
    "flow_v",
    "anomaly",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub t: f64,
    pub position: Vec2,
    pub heading: f64,
    pub motion_heading: f64,
    pub speed: f64,
    pub flow: Vec2,
    pub anomaly: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TruthTable {
    pub meta: Meta,
    pub injections: Vec<AnomalyInjection>,
    pub rows: Vec<TruthRow>,
}

fn format_injection(a: &AnomalyInjection) -> String {
    let end = a.t_end.map_or_else(|| "-".to_string(), |e| e.to_string());
    format!("{} {} {} {}", a.kind.as_str(), a.t_start, end, a.magnitude)
}

fn parse_injection(value: &str) -> Result<AnomalyInjection> {
    let bad = || Error::Input(format!("bad #anomaly line `{value}`"));
    let parts: Vec<&str> = value.split_whitespace().collect();
    let [kind, start, end, magnitude] = parts[..] else {
        return Err(bad());
    };
    let num = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(bad);
    let a = AnomalyInjection {
        kind: kind.parse()?,
        t_start: num(start)?,
        t_end: if end == "-" { None } else { Some(num(end)?) },
        magnitude: num(magnitude)?,
    };
    a.validate()?;
    Ok(a)
}

impl TruthTable {
    pub fn from_ground_truth(gt: &GroundTruth, meta: &Meta) -> Self {
        let rows = (0..gt.len())
            .map(|k| TruthRow {
                t: gt.times[k],
                position: gt.positions[k],
                heading: gt.headings[k],
                motion_heading: gt.motion_headings[k],
                speed: gt.speeds[k],
                flow: gt.flows[k],
                anomaly: gt.active_anomalies(k),
            })
            .collect();
        Self {
            meta: meta.clone(),
            injections: gt.injections.clone(),
            rows,
        }
    }

    pub fn to_text(&self) -> String {
        let mut meta = self.meta.clone();
        meta.extra.extend(
            self.injections
                .iter()
                .map(|a| ("anomaly".to_string(), format_injection(a))),
        );
        let mut out = String::new();
        write_preamble(&mut out, TRUTH_VERSION, &meta);
        out.push_str(&HEADER.join(","));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.t, r.position.x, r.position.y, r.heading, r.motion_heading, r.speed, r.flow.x, r.flow.y, r.anomaly
            ));
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let tab = parse_table(bytes, TRUTH_VERSION)?;
        let mut meta = tab.meta;
        let mut injections = Vec::new();
        let mut extra = Vec::new();
        for (k, v) in meta.extra.drain(..) {
            if k == "anomaly" {
                injections.push(parse_injection(&v)?);
            } else {
                extra.push((k, v));
            }
        }
        meta.extra = extra;
        let mut rows = Vec::with_capacity(tab.rows.len());
        if let Some((line, header)) = &tab.header {
            if header != &HEADER {
                return Err(Error::parse(*line, format!("expected header {}", HEADER.join(","))));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for (line, rec) in &tab.rows {
            expect_len(rec, *line, HEADER.len())?;
            let f = |i: usize| field_f64(rec, *line, i, HEADER[i]);
            let t = f(0)?;
            if !(t > prev) {
                return Err(Error::Ordering { line: *line, t, prev });
            }
            prev = t;
            rows.push(TruthRow {
                t,
                position: Vec2::new(f(1)?, f(2)?),
                heading: f(3)?,
                motion_heading: f(4)?,
                speed: f(5)?,
                flow: Vec2::new(f(6)?, f(7)?),
                anomaly: rec[8].to_string(),
            });
        }
        Ok(Self { meta, injections, rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&table::read_bytes(path.as_ref())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        table::write_string(path.as_ref(), &self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::AnomalyKind;

    #[test]
    fn round_trip_keeps_injections() {
        let t = TruthTable {
            meta: Meta {
                extra: vec![("seed".into(), "4".into())],
                ..Default::default()
            },
            injections: vec![
                AnomalyInjection {
                    kind: AnomalyKind::SpeedDegradation,
                    t_start: 100.0,
                    t_end: None,
                    magnitude: 0.6,
                },
                AnomalyInjection {
                    kind: AnomalyKind::HeadingDisturbance,
                    t_start: 50.0,
                    t_end: Some(70.0),
                    magnitude: -0.3,
                },
            ],
            rows: vec![
                TruthRow {
                    t: 0.0,
                    position: Vec2::new(0.1, 0.2),
                    heading: 1.0,
                    motion_heading: 1.0,
                    speed: 0.2,
                    flow: Vec2::new(0.01, -0.02),
                    anomaly: String::new(),
                },
                TruthRow {
                    t: 100.0,
                    position: Vec2::new(20.0, 0.2),
                    heading: 1.0,
                    motion_heading: 1.0,
                    speed: 0.12,
                    flow: Vec2::new(0.01, -0.02),
                    anomaly: "speed_degradation".into(),
                },
            ],
        };
        let text = t.to_text();
        assert!(text.contains("#anomaly speed_degradation 100 - 0.6\n"));
        assert_eq!(TruthTable::parse(text.as_bytes()).unwrap(), t);
    }
}
