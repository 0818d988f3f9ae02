//! Human-readable summary plus CSV series for plotting.
//!
//! | file             | columns                                  |
//! |------------------|------------------------------------------|
//! | `summary.txt`    | free text, event times in UTC            |
//! | `events.csv`     | `t,utc,kind,v_l,p_e,detail`              |
//! | `series.csv`     | full estimate series (`glider-series/1`) |
//! | `trajectory.csv` | `t,x,y,x_hat,y_hat`                      |
//! | `clle.csv`       | `t,clle`                                 |
//! | `flow.csv`       | `t,u_glider,u_algo,v_glider,v_algo`      |
//! | `speed.csv`      | `t,v_l,v_min,v_max`                      |
//! | `p_e.csv`        | `t,p_e`                                  |
//!
//! Missing values (no glider flow estimate) are left empty.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};

use super::{DetectionConfig, DetectionEvent, EventKind};
use crate::data_io::series::{events_to_text, format_utc, series_to_text};
use crate::data_io::Meta;
use crate::error::{Error, Result};
use crate::estimator::EstimateSeries;
use crate::flow_field::Vec2;

pub const SUMMARY_FILE: &str = "summary.txt";
pub const EVENTS_FILE: &str = "events.csv";
pub const SERIES_FILE: &str = "series.csv";

pub struct ReportInput<'a> {
    pub deployment: &'a str,
    /// `offline` or `online`.
    pub mode: &'a str,
    pub epoch: DateTime<Utc>,
    pub cfg: &'a DetectionConfig,
    pub series: &'a EstimateSeries,
    /// Glider flow estimate per sample.
    pub f_m: &'a [Option<Vec2>],
    /// `p_E` per sample.
    pub p_e: &'a [Option<f64>],
    pub events: &'a [DetectionEvent],
    pub warnings: &'a [String],
}

/// Report files held in memory, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub files: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    pub fn summary(&self) -> &str {
        self.get(SUMMARY_FILE).unwrap_or_default()
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary(inp: &ReportInput) -> String {
    let mut s = String::new();
    let cfg = inp.cfg;
    let _ = writeln!(s, "deployment: {}", inp.deployment);
    let _ = writeln!(s, "mode: {}", inp.mode);
    let _ = writeln!(s, "epoch: {}", format_utc(&inp.epoch, 0.0));
    match (inp.series.samples.first(), inp.series.samples.last()) {
        (Some(a), Some(b)) => {
            let _ = writeln!(
                s,
                "samples: {} from {} to {}",
                inp.series.len(),
                format_utc(&inp.epoch, a.t),
                format_utc(&inp.epoch, b.t)
            );
            let _ = writeln!(s, "max CLLE: {:.2} m", inp.series.max_clle());
            let _ = writeln!(s, "final CLLE: {:.2} m", b.clle);
            let _ = writeln!(s, "final V_L: {:.4} m/s", b.v_l);
        }
        _ => {
            let _ = writeln!(s, "samples: 0");
        }
    }
    let _ = writeln!(
        s,
        "speed band: [{}, {}] m/s, gamma_f {}, debounce {} s, burn-in {} s",
        cfg.v_min, cfg.v_max, cfg.gamma_f, cfg.debounce, cfg.burn_in
    );
    for w in inp.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let anomalies = inp.events.iter().filter(|e| e.kind == EventKind::Anomaly).count();
    let false_alarms = inp.events.iter().filter(|e| e.kind == EventKind::FalseAlarm).count();
    let _ = writeln!(s);
    if anomalies == 0 {
        if false_alarms == 0 {
            let _ = writeln!(s, "no anomaly detected");
        } else {
            let _ = writeln!(s, "no anomaly detected ({false_alarms} false alarm(s))");
        }
    } else {
        let _ = writeln!(s, "{anomalies} anomaly event(s) detected");
    }
    for e in inp.events {
        let p_e = e.p_e.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
        let _ = writeln!(
            s,
            "{}  {:<11} t = {} s  V_L = {:.4} m/s  p_E = {}  {}",
            format_utc(&inp.epoch, e.t),
            e.kind.as_str(),
            e.t,
            e.v_l,
            p_e,
            e.detail
        );
    }
    s
}

/// Build the bundle. `f_m` and `p_e` must have one entry per sample.
pub fn report(inp: &ReportInput) -> Result<ReportBundle> {
    let n = inp.series.len();
    if inp.f_m.len() != n || inp.p_e.len() != n {
        return Err(Error::Input(format!(
            "report needs one F_M and p_E entry per sample ({n}), got {} and {}",
            inp.f_m.len(),
            inp.p_e.len()
        )));
    }
    let mut trajectory = String::from("t,x,y,x_hat,y_hat\n");
    let mut clle = String::from("t,clle\n");
    let mut flow = String::from("t,u_glider,u_algo,v_glider,v_algo\n");
    let mut speed = String::from("t,v_l,v_min,v_max\n");
    let mut p_e = String::from("t,p_e\n");
    for ((s, f_m), p) in inp.series.samples.iter().zip(inp.f_m).zip(inp.p_e) {
        let _ = writeln!(trajectory, "{},{},{},{},{}", s.t, s.x.x, s.x.y, s.x_hat.x, s.x_hat.y);
        let _ = writeln!(clle, "{},{}", s.t, s.clle);
        let _ = writeln!(
            flow,
            "{},{},{},{},{}",
            s.t,
            opt(f_m.map(|f| f.x)),
            s.f_l.x,
            opt(f_m.map(|f| f.y)),
            s.f_l.y
        );
        let _ = writeln!(speed, "{},{},{},{}", s.t, s.v_l, inp.cfg.v_min, inp.cfg.v_max);
        let _ = writeln!(p_e, "{},{}", s.t, opt(*p));
    }
    let meta = Meta {
        epoch: Some(inp.epoch),
        ..Default::default()
    };
    Ok(ReportBundle {
        files: vec![
            (SUMMARY_FILE.into(), summary(inp)),
            (EVENTS_FILE.into(), events_to_text(inp.events, &inp.epoch)),
            (SERIES_FILE.into(), series_to_text(inp.series, &meta)),
            ("trajectory.csv".into(), trajectory),
            ("clle.csv".into(), clle),
            ("flow.csv".into(), flow),
            ("speed.csv".into(), speed),
            ("p_e.csv".into(), p_e),
        ],
    })
}
