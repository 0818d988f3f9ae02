//! Estimate series and detection event files.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use super::table::{self, expect_len, field_f64, parse_table, write_preamble, write_row, Meta};
use crate::detector::{DetectionEvent, EventKind};
use crate::error::{Error, Result};
use crate::estimator::{EstimateSample, EstimateSeries};
use crate::flow_field::Vec2;

pub const SERIES_VERSION: &str = "glider-series/1";
const SERIES_HEADER: [&str; 9] = ["t", "x", "y", "x_hat", "y_hat", "clle", "v_l", "f_l_u", "f_l_v"];
const EVENTS_HEADER: [&str; 6] = ["t", "utc", "kind", "v_l", "p_e", "detail"];

pub fn series_to_text(series: &EstimateSeries, meta: &Meta) -> String {
    let mut out = String::new();
    write_preamble(&mut out, SERIES_VERSION, meta);
    out.push_str(&SERIES_HEADER.join(","));
    out.push('\n');
    for s in &series.samples {
        write_row(
            &mut out,
            &[s.t, s.x.x, s.x.y, s.x_hat.x, s.x_hat.y, s.clle, s.v_l, s.f_l.x, s.f_l.y],
        );
    }
    out
}

pub fn parse_series(bytes: &[u8]) -> Result<(Meta, EstimateSeries)> {
    let tab = parse_table(bytes, SERIES_VERSION)?;
    let (line, header) = tab
        .header
        .ok_or_else(|| Error::Input("series file has no header".into()))?;
    if header != SERIES_HEADER {
        return Err(Error::parse(
            line,
            format!("expected header {}", SERIES_HEADER.join(",")),
        ));
    }
    let mut samples = Vec::with_capacity(tab.rows.len());
    for (line, rec) in &tab.rows {
        expect_len(rec, *line, SERIES_HEADER.len())?;
        let f = |i: usize| field_f64(rec, *line, i, SERIES_HEADER[i]);
        samples.push(EstimateSample {
            t: f(0)?,
            x: Vec2::new(f(1)?, f(2)?),
            x_hat: Vec2::new(f(3)?, f(4)?),
            clle: f(5)?,
            v_l: f(6)?,
            f_l: Vec2::new(f(7)?, f(8)?),
        });
    }
    Ok((tab.meta, EstimateSeries { samples }))
}

pub fn write_series(path: impl AsRef<Path>, series: &EstimateSeries, meta: &Meta) -> Result<()> {
    table::write_string(path.as_ref(), &series_to_text(series, meta))
}

pub fn read_series(path: impl AsRef<Path>) -> Result<(Meta, EstimateSeries)> {
    parse_series(&table::read_bytes(path.as_ref())?)
}

/// Absolute time of mission time `t`.
pub fn to_utc(epoch: &DateTime<Utc>, t: f64) -> DateTime<Utc> {
    *epoch + Duration::nanoseconds((t * 1e9).round() as i64)
}

pub fn format_utc(epoch: &DateTime<Utc>, t: f64) -> String {
    table::format_epoch(&to_utc(epoch, t))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Events as CSV with columns `t,utc,kind,v_l,p_e,detail`. `p_e` is empty when
/// no dead-reckoned flow was available.
pub fn events_to_text(events: &[DetectionEvent], epoch: &DateTime<Utc>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVENTS_HEADER).expect("in-memory write");
    for e in events {
        w.write_record([
            e.t.to_string(),
            format_utc(epoch, e.t),
            e.kind.as_str().to_string(),
            e.v_l.to_string(),
            opt(e.p_e),
            e.detail.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

pub fn parse_events(bytes: &[u8]) -> Result<Vec<DetectionEvent>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != EVENTS_HEADER {
        return Err(Error::parse(1, format!("expected header {}", EVENTS_HEADER.join(","))));
    }
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        expect_len(&rec, line, EVENTS_HEADER.len())?;
        let p_e = if rec[4].trim().is_empty() {
            None
        } else {
            Some(field_f64(&rec, line, 4, "p_e")?)
        };
        events.push(DetectionEvent {
            t: field_f64(&rec, line, 0, "t")?,
            kind: rec[2]
                .parse::<EventKind>()
                .map_err(|e| Error::parse(line, e.to_string()))?,
            v_l: field_f64(&rec, line, 3, "v_l")?,
            p_e,
            detail: rec[5].to_string(),
        });
    }
    Ok(events)
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<DetectionEvent>> {
    parse_events(&table::read_bytes(path.as_ref())?)
}

/// A plain CSV table with a header row and numeric cells, as written for
/// plotting. Empty cells read as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_plot_csv(path: impl AsRef<Path>) -> Result<PlotTable> {
    let path = path.as_ref();
    let bytes = table::read_bytes(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|c| {
                let c = c.trim();
                if c.is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>()
                        .map_err(|_| Error::parse(line, format!("not a number: `{c}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(PlotTable { header, rows })
}
