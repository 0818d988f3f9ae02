//! Command implementations behind the CLI.
//!
//! Every command writes into an output directory: its data or report files, the
//! fully resolved configuration (`config.toml`) and a `manifest.toml`.
//!
//! Exit codes: 0 no anomaly, 1 error, 2 anomaly detected, 3 false alarm only.

pub mod session;
pub mod spool;

use std::path::{Path, PathBuf};
use std::time::Duration;

use log::{info, warn};
use serde::Serialize;

use crate::data_io::records::Coords;
use crate::data_io::truth::TruthTable;
use crate::data_io::{ConfigFile, DenseStream, Meta, RunConfig, SparseStream};
use crate::detector::report::{report, ReportBundle, ReportInput};
use crate::detector::{detect, DetectionEvent, EventKind};
use crate::error::{Error, Result};
use crate::estimator::run_offline;
use crate::flow_field::{BasisSet, Vec2, DEFAULT_COVERAGE_FLOOR};
use crate::simulator::{observe, simulate, to_dense_records, to_sparse_records, AnomalyInjection};

pub use session::OnlineSession;

pub const DENSE_FILE: &str = "dense.csv";
pub const SPARSE_FILE: &str = "sparse.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Offline,
    Online,
    ReplayOnline,
}

/// What was run, on what, and where the results went.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    pub inputs: Vec<String>,
    pub out_dir: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).expect("manifest is always representable as TOML");
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    pub gamma_f: Option<f64>,
    pub anomalies: Vec<AnomalyInjection>,
}

/// Load `path` (or the defaults) and apply `ov`.
pub fn load_config_file(path: Option<&Path>, ov: &Overrides) -> Result<ConfigFile> {
    let mut cf = match path {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if ov.seed.is_some() {
        cf.simulation.seed = ov.seed;
    }
    if ov.v_min.is_some() {
        cf.detection.v_min = ov.v_min;
    }
    if ov.v_max.is_some() {
        cf.detection.v_max = ov.v_max;
    }
    if ov.gamma_f.is_some() {
        cf.detection.gamma_f = ov.gamma_f;
    }
    cf.simulation.anomalies.extend(
        ov.anomalies
            .iter()
            .map(crate::data_io::config::AnomalySpec::from_injection),
    );
    Ok(cf)
}

/// How a detection run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Nominal,
    Anomaly,
    FalseAlarmOnly,
}

impl Verdict {
    pub fn from_events(events: &[DetectionEvent]) -> Self {
        if events.iter().any(|e| e.kind == EventKind::Anomaly) {
            Verdict::Anomaly
        } else if events.iter().any(|e| e.kind == EventKind::FalseAlarm) {
            Verdict::FalseAlarmOnly
        } else {
            Verdict::Nominal
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Nominal => 0,
            Verdict::Anomaly => 2,
            Verdict::FalseAlarmOnly => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectionOutcome {
    pub events: Vec<DetectionEvent>,
    pub verdict: Verdict,
    pub bundle: ReportBundle,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Files written by [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulationOutputs {
    pub dense: PathBuf,
    pub sparse: PathBuf,
    pub truth: PathBuf,
    pub config: PathBuf,
}

/// Simulate the configured deployment and write dense, sparse and
/// ground-truth files plus the resolved config and a manifest.
pub fn cmd_simulate(rc: &RunConfig, config_path: Option<&Path>, out: &Path) -> Result<SimulationOutputs> {
    ensure_dir(out)?;
    let gt = simulate(&rc.sim, &rc.injections)?;
    let obs = observe(&gt, &rc.sim.noise, rc.sim.seed)?;
    let meta = Meta {
        epoch: Some(rc.epoch),
        origin: None,
        extra: vec![
            ("deployment".into(), rc.deployment.clone()),
            ("seed".into(), rc.sim.seed.to_string()),
        ],
    };
    let dense = to_dense_records(&gt, &obs, &meta);
    let sparse = to_sparse_records(&gt, &obs, &rc.sim, &meta, rc.sparse_samples);
    let truth = TruthTable::from_ground_truth(&gt, &meta);

    let coverage = rc.basis.coverage_check(&gt.positions, DEFAULT_COVERAGE_FLOOR);
    if !coverage.is_covered() {
        warn!(
            "{} of {} simulated positions are poorly covered by the basis (floor {})",
            coverage.flagged.len(),
            gt.len(),
            coverage.floor
        );
    }

    let outputs = SimulationOutputs {
        dense: out.join(DENSE_FILE),
        sparse: out.join(SPARSE_FILE),
        truth: out.join(TRUTH_FILE),
        config: out.join(CONFIG_FILE),
    };
    dense.write(&outputs.dense)?;
    sparse.write(&outputs.sparse)?;
    truth.write(&outputs.truth)?;
    write_file(out, CONFIG_FILE, &rc.to_file().to_toml())?;
    RunManifest {
        scenario: rc.deployment.clone(),
        mode: Mode::Simulate,
        seed: rc.sim.seed,
        config: config_path.map(display),
        inputs: Vec::new(),
        out_dir: display(out),
        outputs: [DENSE_FILE, SPARSE_FILE, TRUTH_FILE, CONFIG_FILE]
            .map(String::from)
            .to_vec(),
    }
    .write(out)?;
    info!(
        "simulated {} steps, {} surfacings into {}",
        gt.len(),
        sparse.records.len(),
        out.display()
    );
    Ok(outputs)
}

/// Resolve the config for detection on `track`. Unless the config pins the
/// basis layout, the 2×2 grid is laid over the track's bounding box.
fn resolve_for_track(
    cf: &ConfigFile,
    track: &[Vec2],
    epoch: Option<chrono::DateTime<chrono::Utc>>,
) -> Result<(RunConfig, Vec<String>)> {
    let mut rc = cf.resolve()?;
    if let Some(epoch) = epoch {
        rc.epoch = epoch;
    }
    let explicit = cf.basis.centers.is_some() || cf.basis.functions.is_some();
    if !explicit && !track.is_empty() {
        let lo = track.iter().fold(track[0], |a, p| a.inf(p));
        let hi = track.iter().fold(track[0], |a, p| a.sup(p));
        let b = rc.basis.bases()[0].clone();
        rc.basis = BasisSet::grid_2x2(lo, hi, b.width, b.frequency, b.phase)?;
    }
    let mut warnings = Vec::new();
    let coverage = rc.basis.coverage_check(track, DEFAULT_COVERAGE_FLOOR);
    if !coverage.is_covered() {
        let w = format!(
            "{} of {} positions fall below basis coverage floor {}",
            coverage.flagged.len(),
            track.len(),
            coverage.floor
        );
        warn!("{w}");
        warnings.push(w);
    }
    Ok((rc, warnings))
}

fn finish_detection(
    rc: &RunConfig,
    bundle: ReportBundle,
    events: Vec<DetectionEvent>,
    manifest: RunManifest,
    out: &Path,
) -> Result<DetectionOutcome> {
    ensure_dir(out)?;
    bundle.write(out)?;
    write_file(out, CONFIG_FILE, &rc.to_file().to_toml())?;
    manifest.write(out)?;
    let verdict = Verdict::from_events(&events);
    Ok(DetectionOutcome {
        events,
        verdict,
        bundle,
    })
}

fn bundle_names(bundle: &ReportBundle) -> Vec<String> {
    let mut names: Vec<String> = bundle.files.iter().map(|(n, _)| n.clone()).collect();
    names.push(CONFIG_FILE.into());
    names
}

/// Hindcast detection over a dense record file. `F_M` comes from the sparse
/// file when given; without it `p_E` is unavailable.
pub fn cmd_detect_offline(
    dense_path: &Path,
    sparse_path: Option<&Path>,
    cf: &ConfigFile,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<DetectionOutcome> {
    let dense = DenseStream::read(dense_path)?;
    let sparse = sparse_path
        .map(SparseStream::read)
        .transpose()?
        .map(|s| s.to_local())
        .transpose()?;
    let positions = dense.local_positions()?;
    let (rc, warnings) = resolve_for_track(cf, &positions, dense.meta.epoch)?;

    let records: Vec<_> = dense
        .records
        .iter()
        .zip(&positions)
        .map(|(r, p)| crate::data_io::DenseRecord { position: *p, ..*r })
        .collect();
    let series = run_offline(&records, &rc.gains, &rc.basis, &rc.observer, rc.v0)?;
    let f_m_at = |t: f64| sparse.as_ref().and_then(|s| s.f_m_at(t));
    let detection = detect(&series, f_m_at, &rc.detection)?;
    let f_m: Vec<Option<Vec2>> = series.samples.iter().map(|s| f_m_at(s.t)).collect();
    let bundle = report(&ReportInput {
        deployment: &rc.deployment,
        mode: "offline",
        epoch: rc.epoch,
        cfg: &rc.detection,
        series: &series,
        f_m: &f_m,
        p_e: &detection.p_e,
        events: &detection.events,
        warnings: &warnings,
    })?;
    let mut inputs = vec![display(dense_path)];
    inputs.extend(sparse_path.map(display));
    let manifest = RunManifest {
        scenario: rc.deployment.clone(),
        mode: Mode::Offline,
        seed: rc.sim.seed,
        config: config_path.map(display),
        inputs,
        out_dir: display(out),
        outputs: bundle_names(&bundle),
    };
    finish_detection(&rc, bundle, detection.events, manifest, out)
}

fn read_sparse_local(path: &Path) -> Result<SparseStream> {
    SparseStream::read(path)?.to_local()
}

/// Online detection over a whole sparse file in one pass.
pub fn cmd_detect_online(
    sparse_path: &Path,
    cf: &ConfigFile,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<DetectionOutcome> {
    let sparse = read_sparse_local(sparse_path)?;
    let (rc, _) = resolve_for_track(cf, &sparse_track(&sparse), sparse.meta.epoch)?;
    let mut session = OnlineSession::new(&rc)?;
    for rec in &sparse.records {
        session.push(rec)?;
    }
    let bundle = session.report(&rc)?;
    let manifest = RunManifest {
        scenario: rc.deployment.clone(),
        mode: Mode::Online,
        seed: rc.sim.seed,
        config: config_path.map(display),
        inputs: vec![display(sparse_path)],
        out_dir: display(out),
        outputs: bundle_names(&bundle),
    };
    finish_detection(&rc, bundle, session.events().to_vec(), manifest, out)
}

fn sparse_track(s: &SparseStream) -> Vec<Vec2> {
    s.records.iter().flat_map(|r| [r.start_fix, r.end_fix]).collect()
}

/// Which side(s) of the spool a replay runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Role {
    #[default]
    Both,
    Feeder,
    Consumer,
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Role::Both),
            "feeder" => Ok(Role::Feeder),
            "consumer" => Ok(Role::Consumer),
            other => Err(Error::validation("role", format!("unknown role `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayOptions {
    /// Seconds per record; 0 flushes the whole feed at once.
    pub cadence: f64,
    /// Sleep `cadence` wall-clock seconds per record instead of ticking logically.
    pub realtime: bool,
    pub role: Role,
    /// Stop the feeder after this many records, as if it were killed.
    pub feed_limit: Option<usize>,
}

/// Replay a sparse file through the spool directory under `out`, as a
/// dockserver would deliver it. The consumer's final report equals
/// [`cmd_detect_online`] on the same file. Returns `None` for a feeder-only run.
pub fn cmd_replay_online(
    sparse_path: &Path,
    cf: &ConfigFile,
    config_path: Option<&Path>,
    out: &Path,
    opts: &ReplayOptions,
) -> Result<Option<DetectionOutcome>> {
    if !(opts.cadence.is_finite() && opts.cadence >= 0.0) {
        return Err(Error::validation("cadence", "must be >= 0"));
    }
    ensure_dir(out)?;
    let sparse = read_sparse_local(sparse_path)?;
    let (rc, _) = resolve_for_track(cf, &sparse_track(&sparse), sparse.meta.epoch)?;
    let feed_meta = Meta {
        epoch: sparse.meta.epoch,
        origin: None,
        extra: Vec::new(),
    };
    let n = opts
        .feed_limit
        .map_or(sparse.records.len(), |l| l.min(sparse.records.len()));
    let feeder = (opts.role != Role::Consumer)
        .then(|| spool::Feeder::new(out.join(spool::SPOOL_DIR), feed_meta, Coords::Local))
        .transpose()?;
    let mut consumer = (opts.role != Role::Feeder)
        .then(|| spool::Consumer::open(out, &rc))
        .transpose()?;

    let tick = || {
        if opts.realtime && opts.cadence > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(opts.cadence));
        }
    };
    match &feeder {
        Some(f) if opts.cadence == 0.0 => {
            for (i, rec) in sparse.records[..n].iter().enumerate() {
                f.emit(i, rec)?;
            }
        }
        Some(f) => {
            for (i, rec) in sparse.records[..n].iter().enumerate() {
                if f.emit(i, rec)? {
                    tick();
                }
                if let Some(c) = consumer.as_mut() {
                    c.poll()?;
                }
            }
        }
        None => {}
    }
    let Some(mut consumer) = consumer else {
        info!("fed {n} records into {}", out.join(spool::SPOOL_DIR).display());
        return Ok(None);
    };
    consumer.poll()?;

    let session = consumer.session();
    let bundle = session.report(&rc)?;
    let manifest = RunManifest {
        scenario: rc.deployment.clone(),
        mode: Mode::ReplayOnline,
        seed: rc.sim.seed,
        config: config_path.map(display),
        inputs: vec![display(sparse_path)],
        out_dir: display(out),
        outputs: bundle_names(&bundle),
    };
    finish_detection(&rc, bundle, session.events().to_vec(), manifest, out).map(Some)
}
