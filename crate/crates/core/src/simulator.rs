//! Synthetic glider deployments.
//!
//! Horizontal kinematics `ẋ = F(x, t) + V(t) Ψ(t)` are integrated with fixed-step
//! explicit Euler. The glider surfaces every `surfacing_interval` seconds; at
//! each surfacing it reports its fixes and a dead-reckoned flow estimate, which
//! is computed from its *commanded* speed and heading and therefore absorbs any
//! speed or heading impairment as apparent flow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data_io::records::{
    wrap_angle, Coords, DenseRecord, DenseStream, HeadingSample, SparseRecord, SparseStream,
};
use crate::data_io::table::Meta;
use crate::error::{Error, Result};
use crate::estimator::heading_vector;
use crate::flow_field::{BasisSet, FlowField, FlowParameters, Vec2};

/// Positions beyond this many metres from the origin abort the run.
pub const POSITION_SANITY_BOUND: f64 = 1e7;

/// Commanded heading schedule.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadingPlan {
    Constant(f64),
    /// Piecewise constant `(t_from, heading)` entries sorted by time. The first
    /// entry also applies before its own start time.
    Schedule(Vec<(f64, f64)>),
    /// Steer towards each waypoint in turn, cycling back to the first. The
    /// bearing is recomputed from the current position at every surfacing; a
    /// waypoint is considered reached when it is within `accept_radius` at a
    /// surfacing.
    Waypoints {
        points: Vec<Vec2>,
        accept_radius: f64,
    },
}

impl HeadingPlan {
    /// Bounding box of the planned (flow-free) track.
    pub fn planned_bounds(&self, start: Vec2, speed: f64, duration: f64) -> (Vec2, Vec2) {
        let mut pts = vec![start];
        match self {
            HeadingPlan::Constant(psi) => pts.push(start + speed * duration * heading_vector(*psi)),
            HeadingPlan::Schedule(entries) => {
                let mut x = start;
                for (i, (t0, psi)) in entries.iter().enumerate() {
                    let from = if i == 0 { 0.0 } else { t0.clamp(0.0, duration) };
                    let to = entries.get(i + 1).map_or(duration, |(t1, _)| t1.clamp(0.0, duration));
                    if to > from {
                        x += speed * (to - from) * heading_vector(*psi);
                        pts.push(x);
                    }
                }
            }
            HeadingPlan::Waypoints { points, .. } => pts.extend(points.iter().copied()),
        }
        let lo = pts.iter().fold(Vec2::repeat(f64::INFINITY), |a, p| a.inf(p));
        let hi = pts.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
        (lo, hi)
    }

    fn validate(&self) -> Result<()> {
        match self {
            HeadingPlan::Constant(psi) if !psi.is_finite() => {
                Err(Error::validation("simulation.heading", "must be finite"))
            }
            HeadingPlan::Schedule(entries) => {
                if entries.is_empty() {
                    return Err(Error::validation("simulation.heading_schedule", "is empty"));
                }
                if entries.iter().any(|(t, p)| !t.is_finite() || !p.is_finite()) {
                    return Err(Error::validation("simulation.heading_schedule", "must be finite"));
                }
                if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::validation(
                        "simulation.heading_schedule",
                        "times must be strictly increasing",
                    ));
                }
                Ok(())
            }
            HeadingPlan::Waypoints { points, accept_radius } => {
                if points.is_empty() {
                    return Err(Error::validation("simulation.waypoints", "is empty"));
                }
                if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                    return Err(Error::validation("simulation.waypoints", "must be finite"));
                }
                if !(accept_radius.is_finite() && *accept_radius > 0.0) {
                    return Err(Error::validation("simulation.accept_radius", "must be > 0"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyKind {
    /// Through-water speed multiplied by `magnitude` in (0, 1].
    SpeedDegradation,
    /// Through-water speed is zero.
    SpeedDropout,
    /// Actual motion direction is offset from the recorded heading by
    /// `magnitude` radians.
    HeadingDisturbance,
}

impl AnomalyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnomalyKind::SpeedDegradation => "speed_degradation",
            AnomalyKind::SpeedDropout => "speed_dropout",
            AnomalyKind::HeadingDisturbance => "heading_disturbance",
        }
    }

    pub fn is_speed(&self) -> bool {
        matches!(self, AnomalyKind::SpeedDegradation | AnomalyKind::SpeedDropout)
    }
}

impl std::str::FromStr for AnomalyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speed_degradation" => Ok(AnomalyKind::SpeedDegradation),
            "speed_dropout" => Ok(AnomalyKind::SpeedDropout),
            "heading_disturbance" => Ok(AnomalyKind::HeadingDisturbance),
            other => Err(Error::validation("anomaly.kind", format!("unknown kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyInjection {
    pub kind: AnomalyKind,
    pub t_start: f64,
    /// `None` leaves the anomaly active until the end of the mission.
    pub t_end: Option<f64>,
    pub magnitude: f64,
}

impl AnomalyInjection {
    pub fn active_at(&self, t: f64) -> bool {
        t >= self.t_start && self.t_end.is_none_or(|e| t < e)
    }

    fn end(&self) -> f64 {
        self.t_end.unwrap_or(f64::INFINITY)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_start.is_finite() {
            return Err(Error::validation("anomaly.t_start", "must be finite"));
        }
        if let Some(e) = self.t_end {
            if !(e > self.t_start) {
                return Err(Error::validation("anomaly.t_end", "must be after t_start"));
            }
        }
        match self.kind {
            AnomalyKind::SpeedDegradation if !(self.magnitude > 0.0 && self.magnitude <= 1.0) => Err(
                Error::validation("anomaly.magnitude", "degradation multiplier must be in (0, 1]"),
            ),
            AnomalyKind::HeadingDisturbance if !self.magnitude.is_finite() => {
                Err(Error::validation("anomaly.magnitude", "must be finite"))
            }
            _ => Ok(()),
        }
    }

    /// One-line description used in file metadata.
    pub fn describe(&self) -> String {
        match self.t_end {
            Some(e) => format!(
                "{} t_start={} t_end={} magnitude={}",
                self.kind.as_str(),
                self.t_start,
                e,
                self.magnitude
            ),
            None => format!(
                "{} t_start={} t_end=open magnitude={}",
                self.kind.as_str(),
                self.t_start,
                self.magnitude
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseConfig {
    /// Standard deviation of reported position fixes, m.
    pub position_std: f64,
    /// Standard deviation of reported headings, rad.
    pub heading_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub flow: FlowField,
    /// Nominal through-water speed, m/s.
    pub v_true: f64,
    pub heading_plan: HeadingPlan,
    pub start: Vec2,
    pub duration: f64,
    pub dt: f64,
    pub surfacing_interval: f64,
    /// Keep every k-th intra-segment heading in sparse records.
    pub segment_subsample: usize,
    pub seed: u64,
    pub noise: NoiseConfig,
    /// Maximum heading slew rate, rad/s. `None` turns instantly.
    pub turn_rate: Option<f64>,
}

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * r.abs().max(1.0) && n >= 1.0).then_some(n as usize)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::validation("simulation.dt", "must be > 0"));
        }
        if !(self.surfacing_interval.is_finite() && self.surfacing_interval > 0.0) {
            return Err(Error::validation("simulation.surfacing_interval", "must be > 0"));
        }
        if !(self.duration.is_finite() && self.duration >= self.surfacing_interval) {
            return Err(Error::validation(
                "simulation.duration",
                "must be at least one surfacing interval",
            ));
        }
        if !(self.v_true.is_finite() && self.v_true > 0.0) {
            return Err(Error::validation("simulation.v_true", "must be > 0"));
        }
        if integer_ratio(self.duration, self.dt).is_none() {
            return Err(Error::validation("simulation.duration", "must be a multiple of dt"));
        }
        if integer_ratio(self.surfacing_interval, self.dt).is_none() {
            return Err(Error::validation(
                "simulation.surfacing_interval",
                "must be a multiple of dt",
            ));
        }
        if self.segment_subsample == 0 {
            return Err(Error::validation("simulation.segment_subsample", "must be >= 1"));
        }
        if !(self.noise.position_std >= 0.0 && self.noise.heading_std >= 0.0) {
            return Err(Error::validation(
                "simulation.noise",
                "standard deviations must be >= 0",
            ));
        }
        if let Some(r) = self.turn_rate {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::validation("simulation.turn_rate", "must be > 0"));
            }
        }
        if !(self.start.x.is_finite() && self.start.y.is_finite()) {
            return Err(Error::validation("simulation.start", "must be finite"));
        }
        self.heading_plan.validate()
    }

    pub fn n_steps(&self) -> usize {
        integer_ratio(self.duration, self.dt).unwrap_or(0)
    }

    pub fn steps_per_segment(&self) -> usize {
        integer_ratio(self.surfacing_interval, self.dt).unwrap_or(1)
    }
}

/// Simulated mission, sampled at every integration step (`n_steps + 1` rows).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub times: Vec<f64>,
    pub positions: Vec<Vec2>,
    /// Commanded (and recorded) heading in effect from each time.
    pub headings: Vec<f64>,
    /// Direction of actual through-water motion.
    pub motion_headings: Vec<f64>,
    /// Effective through-water speed.
    pub speeds: Vec<f64>,
    /// True flow at each position.
    pub flows: Vec<Vec2>,
    /// Step indices of surfacings, including 0 and the final step.
    pub surfacings: Vec<usize>,
    /// Nominal speed the glider believes it is flying at.
    pub v_true: f64,
    pub injections: Vec<AnomalyInjection>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Underwater segments between consecutive surfacings as step ranges.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.surfacings.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Kinds of anomaly active at step `k`, joined with `+`, or empty.
    pub fn active_anomalies(&self, k: usize) -> String {
        let t = self.times[k];
        self.injections
            .iter()
            .filter(|a| a.active_at(t))
            .map(|a| a.kind.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }
}

fn check_injections(injections: &[AnomalyInjection]) -> Result<()> {
    for a in injections {
        a.validate()?;
    }
    for (i, a) in injections.iter().enumerate() {
        for b in &injections[i + 1..] {
            let same_family = a.kind.is_speed() == b.kind.is_speed();
            if same_family && a.t_start < b.end() && b.t_start < a.end() {
                return Err(Error::validation(
                    "anomalies",
                    format!("`{}` overlaps `{}`", a.describe(), b.describe()),
                ));
            }
        }
    }
    Ok(())
}

/// Wrap to `(-π, π]`.
fn heading_from_schedule(entries: &[(f64, f64)], t: f64) -> f64 {
    let idx = entries.partition_point(|(t0, _)| *t0 <= t);
    entries[idx.saturating_sub(1)].1
}

/// Integrate a deployment.
pub fn simulate(cfg: &SimConfig, injections: &[AnomalyInjection]) -> Result<GroundTruth> {
    cfg.validate()?;
    check_injections(injections)?;

    let n = cfg.n_steps();
    let sps = cfg.steps_per_segment();
    let mut surfacings: Vec<usize> = (0..n).step_by(sps).collect();
    surfacings.push(n);

    let mut gt = GroundTruth {
        times: Vec::with_capacity(n + 1),
        positions: Vec::with_capacity(n + 1),
        headings: Vec::with_capacity(n + 1),
        motion_headings: Vec::with_capacity(n + 1),
        speeds: Vec::with_capacity(n + 1),
        flows: Vec::with_capacity(n + 1),
        surfacings,
        v_true: cfg.v_true,
        injections: injections.to_vec(),
    };

    let mut x = cfg.start;
    let mut waypoint = 0usize;
    let mut target = 0.0;
    let mut psi = 0.0;
    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        target = match &cfg.heading_plan {
            HeadingPlan::Constant(p) => *p,
            HeadingPlan::Schedule(entries) => heading_from_schedule(entries, t),
            HeadingPlan::Waypoints { points, accept_radius } => {
                if k % sps == 0 {
                    // Advance past any waypoint already within reach, at most one lap.
                    for _ in 0..points.len() {
                        if (points[waypoint] - x).norm() < *accept_radius {
                            waypoint = (waypoint + 1) % points.len();
                        } else {
                            break;
                        }
                    }
                    let d = points[waypoint] - x;
                    d.y.atan2(d.x)
                } else {
                    target
                }
            }
        };
        psi = match cfg.turn_rate {
            Some(rate) if k > 0 => {
                let max_turn = rate * cfg.dt;
                wrap_angle(psi + wrap_angle(target - psi).clamp(-max_turn, max_turn))
            }
            _ => target,
        };
        let mut speed = cfg.v_true;
        let mut motion = psi;
        for a in injections.iter().filter(|a| a.active_at(t)) {
            match a.kind {
                AnomalyKind::SpeedDegradation => speed = cfg.v_true * a.magnitude,
                AnomalyKind::SpeedDropout => speed = 0.0,
                AnomalyKind::HeadingDisturbance => motion = psi + a.magnitude,
            }
        }
        let flow = cfg.flow.velocity(&x, t)?;

        gt.times.push(t);
        gt.positions.push(x);
        gt.headings.push(psi);
        gt.motion_headings.push(motion);
        gt.speeds.push(speed);
        gt.flows.push(flow);

        if k < n {
            x += cfg.dt * (flow + speed * heading_vector(motion));
            if !(x.norm() <= POSITION_SANITY_BOUND) {
                return Err(Error::Simulation(format!(
                    "position left the {POSITION_SANITY_BOUND} m sanity bound at t = {t} s"
                )));
            }
        }
    }
    Ok(gt)
}

/// Per-segment dead-reckoned flow `F_M`:
/// `(actual displacement - commanded displacement) / duration`, where the
/// commanded displacement integrates the nominal speed along the commanded
/// heading. Zero-length segments yield `None`.
pub fn dead_reckon_flow(gt: &GroundTruth, segments: &[(usize, usize)]) -> Vec<Option<Vec2>> {
    segments
        .iter()
        .map(|&(a, b)| {
            if b <= a || b >= gt.len() {
                log::warn!("skipping empty or out-of-range segment [{a}, {b}]");
                return None;
            }
            let duration = gt.times[b] - gt.times[a];
            if !(duration > 0.0) {
                log::warn!("skipping zero-length segment [{a}, {b}]");
                return None;
            }
            let actual = gt.positions[b] - gt.positions[a];
            let commanded = (a..b).fold(Vec2::zeros(), |acc, k| {
                acc + (gt.times[k + 1] - gt.times[k]) * gt.v_true * heading_vector(gt.headings[k])
            });
            Some((actual - commanded) / duration)
        })
        .collect()
}

/// Reported (noisy) positions and headings at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub positions: Vec<Vec2>,
    pub headings: Vec<f64>,
}

/// Apply fix and compass noise to the ground truth. The internal state is
/// never perturbed; only what the glider reports.
pub fn observe(gt: &GroundTruth, noise: &NoiseConfig, seed: u64) -> Result<Observations> {
    // Stream 1 is reserved for reporting noise so that flow draws (stream 0)
    // stay independent of it.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let pos = Normal::new(0.0, noise.position_std)
        .map_err(|e| Error::validation("simulation.noise.position_std", e.to_string()))?;
    let hdg = Normal::new(0.0, noise.heading_std)
        .map_err(|e| Error::validation("simulation.noise.heading_std", e.to_string()))?;
    let mut positions = Vec::with_capacity(gt.len());
    let mut headings = Vec::with_capacity(gt.len());
    for (p, h) in gt.positions.iter().zip(&gt.headings) {
        if noise.position_std > 0.0 {
            positions.push(p + Vec2::new(pos.sample(&mut rng), pos.sample(&mut rng)));
        } else {
            positions.push(*p);
        }
        if noise.heading_std > 0.0 {
            headings.push(h + hdg.sample(&mut rng));
        } else {
            headings.push(*h);
        }
    }
    Ok(Observations { positions, headings })
}

/// Full-resolution stream: one record per integration step.
pub fn to_dense_records(gt: &GroundTruth, obs: &Observations, meta: &Meta) -> DenseStream {
    let records = gt
        .times
        .iter()
        .zip(&obs.positions)
        .zip(&obs.headings)
        .map(|((&t, &position), &heading)| DenseRecord { t, position, heading })
        .collect();
    DenseStream {
        meta: meta.clone(),
        coords: Coords::Local,
        records,
    }
}

/// Circular mean of headings.
pub fn mean_heading(headings: &[f64]) -> f64 {
    let (s, c) = headings.iter().fold((0.0, 0.0), |(s, c), h| (s + h.sin(), c + h.cos()));
    s.atan2(c)
}

/// One record per surfacing with fixes, segment-mean heading and `F_M`. When
/// `with_samples` is set, every `segment_subsample`-th intra-segment heading is
/// attached as well.
pub fn to_sparse_records(
    gt: &GroundTruth,
    obs: &Observations,
    cfg: &SimConfig,
    meta: &Meta,
    with_samples: bool,
) -> SparseStream {
    let segments = gt.segments();
    let flows = dead_reckon_flow(gt, &segments);
    let records = segments
        .iter()
        .zip(flows)
        .filter_map(|(&(a, b), f_m)| {
            let f_m = f_m?;
            let samples = if with_samples {
                (a..b)
                    .step_by(cfg.segment_subsample)
                    .map(|k| HeadingSample {
                        t: gt.times[k],
                        heading: obs.headings[k],
                    })
                    .collect()
            } else {
                Vec::new()
            };
            Some(SparseRecord {
                start_t: gt.times[a],
                end_t: gt.times[b],
                start_fix: obs.positions[a],
                end_fix: obs.positions[b],
                mean_heading: mean_heading(&obs.headings[a..b]),
                f_m,
                samples,
            })
        })
        .collect();
    SparseStream {
        meta: meta.clone(),
        coords: Coords::Local,
        records,
    }
}

/// Draw a random θ for `basis` and rescale it so that the largest flow speed
/// over the region `[lo, hi]` and `[0, duration]` equals `flow_max`.
pub fn random_flow_parameters(
    basis: &BasisSet,
    seed: u64,
    flow_max: f64,
    lo: Vec2,
    hi: Vec2,
    duration: f64,
) -> Result<FlowParameters> {
    if !(flow_max.is_finite() && flow_max >= 0.0) {
        return Err(Error::validation("simulation.flow_max", "must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = basis.len();
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw = FlowParameters::from_rows(&u, &v)?;

    const GRID: usize = 24;
    let mut peak: f64 = 0.0;
    for i in 0..=GRID {
        for j in 0..=GRID {
            let p = Vec2::new(
                lo.x + (hi.x - lo.x) * i as f64 / GRID as f64,
                lo.y + (hi.y - lo.y) * j as f64 / GRID as f64,
            );
            for k in 0..=GRID {
                let t = duration * k as f64 / GRID as f64;
                peak = peak.max(raw.eval(basis, &p, t)?.norm());
            }
        }
    }
    let scale = if peak > 0.0 { flow_max / peak } else { 0.0 };
    FlowParameters::from_matrix(raw.matrix() * scale)
}
