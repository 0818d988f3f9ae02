//! Dense (full-resolution) and sparse (per-surfacing) deployment records.
//!
//! Dense files, `#version glider-dense/1`:
//!
//! ```text
//! #version glider-dense/1
//! #epoch 2022-10-08T00:00:00Z
//! t,x,y,heading            (or t,lat,lon,heading with an optional #origin line)
//! 0,0,0,1.5707963267948966
//! ```
//!
//! Sparse files, `#version glider-sparse/1`, have one `seg` row per surfacing
//! followed by optional `hdg,t,heading` rows holding subsampled headings from
//! inside that segment:
//!
//! ```text
//! #version glider-sparse/1
//! kind,start_t,end_t,start_x,start_y,end_x,end_y,mean_heading,fm_u,fm_v
//! seg,0,14400,0,0,2870.1,120.4,0.04,0.0123,-0.0051
//! hdg,30,0.04
//! ```
//!
//! Geodetic sparse files use `start_lat,start_lon,end_lat,end_lon` instead.
//! Times are seconds from `#epoch`; headings are radians, counter-clockwise
//! from east; velocities are m/s.

use std::f64::consts::PI;
use std::path::Path;

use super::geo::LocalFrame;
use super::table::{self, expect_len, field_f64, parse_table, write_preamble, write_row, Meta};
use crate::error::{Error, Result};
use crate::flow_field::Vec2;

pub const DENSE_VERSION: &str = "glider-dense/1";
pub const SPARSE_VERSION: &str = "glider-sparse/1";

const DENSE_LOCAL: [&str; 4] = ["t", "x", "y", "heading"];
const DENSE_GEO: [&str; 4] = ["t", "lat", "lon", "heading"];
const SPARSE_LOCAL: [&str; 10] = [
    "kind",
    "start_t",
    "end_t",
    "start_x",
    "start_y",
    "end_x",
    "end_y",
    "mean_heading",
    "fm_u",
    "fm_v",
];
const SPARSE_GEO: [&str; 10] = [
    "kind",
    "start_t",
    "end_t",
    "start_lat",
    "start_lon",
    "end_lat",
    "end_lon",
    "mean_heading",
    "fm_u",
    "fm_v",
];

/// How the position columns of a record file are to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coords {
    /// Already projected: east/north metres.
    #[default]
    Local,
    /// Degrees; positions are stored as `(lat, lon)`.
    Geodetic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseRecord {
    pub t: f64,
    /// `(x, y)` metres, or `(lat, lon)` degrees for geodetic streams.
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseStream {
    pub meta: Meta,
    pub coords: Coords,
    pub records: Vec<DenseRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingSample {
    pub t: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseRecord {
    pub start_t: f64,
    pub end_t: f64,
    pub start_fix: Vec2,
    pub end_fix: Vec2,
    pub mean_heading: f64,
    /// Glider's own dead-reckoned depth-averaged flow over the segment.
    pub f_m: Vec2,
    pub samples: Vec<HeadingSample>,
}

impl SparseRecord {
    pub fn duration(&self) -> f64 {
        self.end_t - self.start_t
    }

    /// Heading at `t`, interpolated along the shorter arc between the
    /// intra-segment samples and held constant outside them. Falls back to the
    /// segment mean when there are no samples.
    pub fn heading_at(&self, t: f64) -> f64 {
        let idx = self.samples.partition_point(|s| s.t <= t);
        match (idx.checked_sub(1).map(|i| &self.samples[i]), self.samples.get(idx)) {
            (None, None) => self.mean_heading,
            (None, Some(b)) => b.heading,
            (Some(a), None) => a.heading,
            (Some(a), Some(b)) => {
                let frac = (t - a.t) / (b.t - a.t);
                wrap_angle(a.heading + wrap_angle(b.heading - a.heading) * frac)
            }
        }
    }
}

/// Map an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseStream {
    pub meta: Meta,
    pub coords: Coords,
    pub records: Vec<SparseRecord>,
}

fn check_lat_lon(line: u64, p: &Vec2) -> Result<()> {
    if p.x.abs() > 90.0 || p.y.abs() > 180.0 {
        return Err(Error::parse(
            line,
            format!("latitude/longitude ({}, {}) out of range", p.x, p.y),
        ));
    }
    Ok(())
}

fn header_kind(line: u64, header: &[String], local: &[&str], geo: &[&str]) -> Result<Coords> {
    if header.iter().map(String::as_str).eq(local.iter().copied()) {
        Ok(Coords::Local)
    } else if header.iter().map(String::as_str).eq(geo.iter().copied()) {
        Ok(Coords::Geodetic)
    } else {
        Err(Error::parse(
            line,
            format!(
                "unexpected column header `{}`; expected `{}` or `{}`",
                header.join(","),
                local.join(","),
                geo.join(",")
            ),
        ))
    }
}

impl DenseStream {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let tbl = parse_table(bytes, DENSE_VERSION)?;
        let Some((hline, header)) = tbl.header else {
            return Ok(Self {
                meta: tbl.meta,
                coords: Coords::Local,
                records: Vec::new(),
            });
        };
        let coords = header_kind(hline, &header, &DENSE_LOCAL, &DENSE_GEO)?;
        let names = match coords {
            Coords::Local => DENSE_LOCAL,
            Coords::Geodetic => DENSE_GEO,
        };
        let mut records: Vec<DenseRecord> = Vec::with_capacity(tbl.rows.len());
        for (line, rec) in &tbl.rows {
            let line = *line;
            expect_len(rec, line, 4)?;
            let t = field_f64(rec, line, 0, names[0])?;
            let position = Vec2::new(field_f64(rec, line, 1, names[1])?, field_f64(rec, line, 2, names[2])?);
            let heading = field_f64(rec, line, 3, names[3])?;
            if coords == Coords::Geodetic {
                check_lat_lon(line, &position)?;
            }
            if let Some(prev) = records.last() {
                if t <= prev.t {
                    return Err(Error::Ordering { line, t, prev: prev.t });
                }
            }
            records.push(DenseRecord { t, position, heading });
        }
        Ok(Self {
            meta: tbl.meta,
            coords,
            records,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&table::read_bytes(path.as_ref())?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(64 + self.records.len() * 48);
        write_preamble(&mut out, DENSE_VERSION, &self.meta);
        let names = match self.coords {
            Coords::Local => DENSE_LOCAL,
            Coords::Geodetic => DENSE_GEO,
        };
        out.push_str(&names.join(","));
        out.push('\n');
        for r in &self.records {
            write_row(&mut out, &[r.t, r.position.x, r.position.y, r.heading]);
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        table::write_string(path.as_ref(), &self.to_text())
    }

    /// Local frame for geodetic streams: `#origin` if present, else the first fix.
    pub fn frame(&self) -> Result<Option<LocalFrame>> {
        frame_for(self.coords, &self.meta, self.records.first().map(|r| r.position))
    }

    /// Positions in local metres, projecting geodetic streams.
    pub fn local_positions(&self) -> Result<Vec<Vec2>> {
        match self.frame()? {
            None => Ok(self.records.iter().map(|r| r.position).collect()),
            Some(f) => self
                .records
                .iter()
                .map(|r| f.project(r.position.x, r.position.y))
                .collect(),
        }
    }
}

fn frame_for(coords: Coords, meta: &Meta, first: Option<Vec2>) -> Result<Option<LocalFrame>> {
    match coords {
        Coords::Local => Ok(None),
        Coords::Geodetic => {
            let (lat, lon) = match (meta.origin, first) {
                (Some(o), _) => o,
                (None, Some(p)) => (p.x, p.y),
                (None, None) => return Ok(None),
            };
            LocalFrame::new(lat, lon).map(Some)
        }
    }
}

impl SparseStream {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let tbl = parse_table(bytes, SPARSE_VERSION)?;
        let Some((hline, header)) = tbl.header else {
            return Ok(Self {
                meta: tbl.meta,
                coords: Coords::Local,
                records: Vec::new(),
            });
        };
        let coords = header_kind(hline, &header, &SPARSE_LOCAL, &SPARSE_GEO)?;
        let names = match coords {
            Coords::Local => SPARSE_LOCAL,
            Coords::Geodetic => SPARSE_GEO,
        };
        let mut records: Vec<SparseRecord> = Vec::new();
        for (line, rec) in &tbl.rows {
            let line = *line;
            match rec.get(0) {
                Some("seg") => {
                    expect_len(rec, line, 10)?;
                    let f = |i: usize| field_f64(rec, line, i, names[i]);
                    let r = SparseRecord {
                        start_t: f(1)?,
                        end_t: f(2)?,
                        start_fix: Vec2::new(f(3)?, f(4)?),
                        end_fix: Vec2::new(f(5)?, f(6)?),
                        mean_heading: f(7)?,
                        f_m: Vec2::new(f(8)?, f(9)?),
                        samples: Vec::new(),
                    };
                    if r.start_t >= r.end_t {
                        return Err(Error::Ordering {
                            line,
                            t: r.end_t,
                            prev: r.start_t,
                        });
                    }
                    if let Some(prev) = records.last() {
                        if r.start_t < prev.end_t {
                            return Err(Error::Ordering {
                                line,
                                t: r.start_t,
                                prev: prev.end_t,
                            });
                        }
                    }
                    if coords == Coords::Geodetic {
                        check_lat_lon(line, &r.start_fix)?;
                        check_lat_lon(line, &r.end_fix)?;
                    }
                    records.push(r);
                }
                Some("hdg") => {
                    expect_len(rec, line, 3)?;
                    let t = field_f64(rec, line, 1, "t")?;
                    let heading = field_f64(rec, line, 2, "heading")?;
                    let seg = records
                        .last_mut()
                        .ok_or_else(|| Error::parse(line, "`hdg` row before any `seg` row"))?;
                    if t < seg.start_t || t > seg.end_t {
                        return Err(Error::parse(
                            line,
                            format!(
                                "heading sample at t = {t} outside segment [{}, {}]",
                                seg.start_t, seg.end_t
                            ),
                        ));
                    }
                    if let Some(prev) = seg.samples.last() {
                        if t <= prev.t {
                            return Err(Error::Ordering { line, t, prev: prev.t });
                        }
                    }
                    seg.samples.push(HeadingSample { t, heading });
                }
                Some(other) => {
                    return Err(Error::parse(line, format!("unknown row kind `{other}`")));
                }
                None => return Err(Error::parse(line, "empty row")),
            }
        }
        Ok(Self {
            meta: tbl.meta,
            coords,
            records,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&table::read_bytes(path.as_ref())?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(128 + self.records.len() * 160);
        write_preamble(&mut out, SPARSE_VERSION, &self.meta);
        let names = match self.coords {
            Coords::Local => SPARSE_LOCAL,
            Coords::Geodetic => SPARSE_GEO,
        };
        out.push_str(&names.join(","));
        out.push('\n');
        for r in &self.records {
            out.push_str("seg,");
            write_row(
                &mut out,
                &[
                    r.start_t,
                    r.end_t,
                    r.start_fix.x,
                    r.start_fix.y,
                    r.end_fix.x,
                    r.end_fix.y,
                    r.mean_heading,
                    r.f_m.x,
                    r.f_m.y,
                ],
            );
            for s in &r.samples {
                out.push_str("hdg,");
                write_row(&mut out, &[s.t, s.heading]);
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        table::write_string(path.as_ref(), &self.to_text())
    }

    pub fn frame(&self) -> Result<Option<LocalFrame>> {
        frame_for(self.coords, &self.meta, self.records.first().map(|r| r.start_fix))
    }

    /// Copy of the stream with fixes projected into local metres.
    pub fn to_local(&self) -> Result<SparseStream> {
        let Some(frame) = self.frame()? else {
            return Ok(SparseStream {
                coords: Coords::Local,
                ..self.clone()
            });
        };
        let records = self
            .records
            .iter()
            .map(|r| {
                Ok(SparseRecord {
                    start_fix: frame.project(r.start_fix.x, r.start_fix.y)?,
                    end_fix: frame.project(r.end_fix.x, r.end_fix.y)?,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SparseStream {
            meta: self.meta.clone(),
            coords: Coords::Local,
            records,
        })
    }

    /// Glider flow estimate covering time `t`, if any segment does.
    pub fn f_m_at(&self, t: f64) -> Option<Vec2> {
        // Segments are ordered and non-overlapping; shared endpoints resolve to
        // the earlier segment.
        let idx = self.records.partition_point(|r| r.end_t < t);
        self.records
            .get(idx)
            .filter(|r| r.start_t <= t && t <= r.end_t)
            .map(|r| r.f_m)
    }
}
