//! File-spool transport between a record feeder and the online consumer.
//!
//! The feeder drops one sparse file per record into the spool directory as
//! `rec-NNNNNN.csv`, writing to a hidden temporary name first and renaming, so
//! the consumer never sees a partial file. Existing files are left alone, which
//! makes a restarted feeder idempotent.
//!
//! The consumer takes files in name order and records each one in a ledger
//! (`ok <name>` or `skipped <name>`) after processing it. On start-up it
//! replays the ledgered files to rebuild its state without logging anything.
//! New events are appended to the live log; since the estimator is
//! deterministic, event `k` is only logged if the log holds fewer than `k + 1`
//! events, so a crash between logging and ledgering cannot duplicate lines.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::session::OnlineSession;
use crate::data_io::records::Coords;
use crate::data_io::series::format_utc;
use crate::data_io::{Meta, RunConfig, SparseRecord, SparseStream};
use crate::detector::DetectionEvent;
use crate::error::{Error, Result};

pub const SPOOL_DIR: &str = "spool";
pub const LEDGER_FILE: &str = "consumed.ledger";
pub const LIVE_LOG_FILE: &str = "live.log";

pub fn spool_file_name(index: usize) -> String {
    format!("rec-{index:06}.csv")
}

fn is_spool_file(name: &str) -> bool {
    name.starts_with("rec-") && name.ends_with(".csv")
}

/// Writes records into the spool directory.
#[derive(Debug, Clone)]
pub struct Feeder {
    dir: PathBuf,
    meta: Meta,
    coords: Coords,
}

impl Feeder {
    pub fn new(dir: impl Into<PathBuf>, meta: Meta, coords: Coords) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, meta, coords })
    }

    /// Spool record `index`. Returns `false` if it was already there.
    pub fn emit(&self, index: usize, rec: &SparseRecord) -> Result<bool> {
        let name = spool_file_name(index);
        let path = self.dir.join(&name);
        if path.exists() {
            return Ok(false);
        }
        let text = SparseStream {
            meta: self.meta.clone(),
            coords: self.coords,
            records: vec![rec.clone()],
        }
        .to_text();
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LedgerStatus {
    Ok,
    Skipped,
}

fn read_ledger(path: &Path) -> Result<Vec<(LedgerStatus, String)>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (status, name) = l
                .split_once(' ')
                .ok_or_else(|| Error::parse(i as u64 + 1, format!("bad ledger line `{l}`")))?;
            let status = match status {
                "ok" => LedgerStatus::Ok,
                "skipped" => LedgerStatus::Skipped,
                other => return Err(Error::parse(i as u64 + 1, format!("bad ledger status `{other}`"))),
            };
            Ok((status, name.to_string()))
        })
        .collect()
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

fn count_lines(path: &Path) -> Result<usize> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t.lines().filter(|l| !l.trim().is_empty()).count()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Consumes spooled records exactly once.
pub struct Consumer {
    spool: PathBuf,
    ledger: PathBuf,
    live_log: PathBuf,
    seen: HashSet<String>,
    session: OnlineSession,
    rc: RunConfig,
    logged: usize,
}

impl Consumer {
    /// Open the consumer for `out_dir`, rebuilding state from the ledger.
    pub fn open(out_dir: &Path, rc: &RunConfig) -> Result<Self> {
        let spool = out_dir.join(SPOOL_DIR);
        fs::create_dir_all(&spool).map_err(|e| Error::io(&spool, e))?;
        let mut c = Self {
            ledger: out_dir.join(LEDGER_FILE),
            live_log: out_dir.join(LIVE_LOG_FILE),
            spool,
            seen: HashSet::new(),
            session: OnlineSession::new(rc)?,
            rc: rc.clone(),
            logged: 0,
        };
        c.logged = count_lines(&c.live_log)?;
        let entries = read_ledger(&c.ledger)?;
        if !entries.is_empty() {
            info!("rebuilding consumer state from {} ledger entries", entries.len());
        }
        for (status, name) in entries {
            if status == LedgerStatus::Ok {
                let rec = parse_spool_file(&c.spool.join(&name))?;
                c.session.push(&rec)?;
            }
            c.seen.insert(name);
        }
        Ok(c)
    }

    pub fn session(&self) -> &OnlineSession {
        &self.session
    }

    /// Consume every new file in the spool. Returns the number taken.
    pub fn poll(&mut self) -> Result<usize> {
        let mut names: Vec<String> = fs::read_dir(&self.spool)
            .map_err(|e| Error::io(&self.spool, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| is_spool_file(n) && !self.seen.contains(n))
            .collect();
        names.sort();
        for name in &names {
            self.consume(name)?;
        }
        Ok(names.len())
    }

    fn consume(&mut self, name: &str) -> Result<()> {
        let path = self.spool.join(name);
        let status = match parse_spool_file(&path) {
            Ok(rec) if self.session.last_end().is_some_and(|end| rec.start_t < end) => {
                warn!("skipping {name}: record starts before the previous one ended");
                LedgerStatus::Skipped
            }
            Ok(rec) => {
                let new: Vec<DetectionEvent> = self.session.push(&rec)?.to_vec();
                let total = self.session.events().len();
                for (k, e) in (total - new.len()..total).zip(&new) {
                    if k >= self.logged {
                        append_line(&self.live_log, &self.live_line(e, name))?;
                        self.logged = k + 1;
                    }
                }
                LedgerStatus::Ok
            }
            Err(e) => {
                warn!("skipping malformed spool file {name}: {e}");
                LedgerStatus::Skipped
            }
        };
        let tag = match status {
            LedgerStatus::Ok => "ok",
            LedgerStatus::Skipped => "skipped",
        };
        append_line(&self.ledger, &format!("{tag} {name}"))?;
        self.seen.insert(name.to_string());
        Ok(())
    }

    fn live_line(&self, e: &DetectionEvent, file: &str) -> String {
        let p_e = e.p_e.map_or_else(|| "n/a".to_string(), |p| format!("{p:.4}"));
        format!(
            "{} {} t={} V_L={:.4} p_E={} record={}",
            format_utc(&self.rc.epoch, e.t),
            e.kind.as_str(),
            e.t,
            e.v_l,
            p_e,
            file
        )
    }
}

/// Read one spooled file, which must hold exactly one record.
fn parse_spool_file(path: &Path) -> Result<SparseRecord> {
    let stream = SparseStream::read(path)?.to_local()?;
    match <[SparseRecord; 1]>::try_from(stream.records) {
        Ok([rec]) => Ok(rec),
        Err(v) => Err(Error::Input(format!(
            "{}: expected one record, found {}",
            path.display(),
            v.len()
        ))),
    }
}
