//! Adaptive observer for glider speed and flow parameters.
//!
//! Given measured positions `x(t)` and commanded headings `ψ_c(t)`, the
//! observer tracks a trajectory estimate `x̂`, a through-water speed estimate
//! `V_L` and flow parameters `θ̂` for the basis model of [`crate::flow_field`].
//! With innovation `e = x - x̂` and regressor `φ = φ(x̂, t)` the update law is
//!
//! ```text
//! θ̂' = θ̂ + dt · γ̄ e φᵀ
//! V̂' = V̂ + dt · s eᵀΨ_c
//! x̂' = x̂ + dt · (θ̂' φ + V̂' Ψ_c + K e)
//! ```
//!
//! The parameter updates are applied before the trajectory update (semi-implicit
//! Euler). With the gains used in practice (`K = 0.003`, `s = 0.03`) the fully
//! explicit ordering is only stable for `dt < K / s = 0.1 s`, whereas this
//! ordering stays stable up to `dt ≈ 2 / √s ≈ 11 s`. Drivers additionally split
//! long record intervals into sub-steps of at most [`ObserverSettings::max_step`].

use log::warn;
use nalgebra::{DVector, Matrix2};

use crate::data_io::records::{wrap_angle, DenseRecord, SparseRecord};
use crate::error::{Error, Result};
use crate::flow_field::{BasisSet, FlowParameters, Vec2};

/// Unit heading vector `[cos ψ, sin ψ]`.
#[inline]
pub fn heading_vector(psi: f64) -> Vec2 {
    Vec2::new(psi.cos(), psi.sin())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorGains {
    /// Trajectory correction gain, 1/s. Symmetric positive definite.
    pub k: Matrix2<f64>,
    /// Flow parameter adaptation rate.
    pub gamma_bar: f64,
    /// Speed adaptation rate.
    pub s: f64,
}

impl Default for EstimatorGains {
    fn default() -> Self {
        Self {
            k: Matrix2::from_diagonal_element(0.003),
            gamma_bar: 5e-7,
            s: 30e-3,
        }
    }
}

impl EstimatorGains {
    pub fn new(k: Matrix2<f64>, gamma_bar: f64, s: f64) -> Result<Self> {
        let g = Self { k, gamma_bar, s };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.k;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("gains.k", "entries must be finite"));
        }
        if (k[(0, 1)] - k[(1, 0)]).abs() > 1e-12 * k.abs().max().max(1.0) {
            return Err(Error::validation("gains.k", "must be symmetric"));
        }
        // Sylvester's criterion for 2×2.
        if !(k[(0, 0)] > 0.0 && k.determinant() > 0.0) {
            return Err(Error::validation("gains.k", "must be positive definite"));
        }
        // The zero values are accepted so that adaptation can be switched off.
        if !(self.gamma_bar.is_finite() && self.gamma_bar >= 0.0) {
            return Err(Error::validation("gains.gamma_bar", "must be finite and >= 0"));
        }
        if !(self.s.is_finite() && self.s >= 0.0) {
            return Err(Error::validation("gains.s", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Numerical settings for the drivers around [`EstimatorState::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSettings {
    /// Longest single integration step, s.
    pub max_step: f64,
    /// Spacing of emitted samples in online mode, s.
    pub online_sample_interval: f64,
    /// Abort when `‖x - x̂‖` exceeds this, m.
    pub divergence_limit: f64,
}

impl Default for ObserverSettings {
    fn default() -> Self {
        Self {
            max_step: 1.0,
            online_sample_interval: 10.0,
            divergence_limit: 50e3,
        }
    }
}

impl ObserverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step.is_finite() && self.max_step > 0.0) {
            return Err(Error::validation("estimator.max_step", "must be > 0"));
        }
        if !(self.online_sample_interval.is_finite() && self.online_sample_interval > 0.0) {
            return Err(Error::validation("estimator.online_sample_interval", "must be > 0"));
        }
        if !(self.divergence_limit > 0.0) {
            return Err(Error::validation("estimator.divergence_limit", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x_hat: Vec2,
    /// Estimated through-water speed (reported as `V_L`), m/s.
    pub v_hat: f64,
    pub theta_hat: FlowParameters,
    pub t: f64,
    /// Running maximum of `‖x - x̂‖`.
    pub clle_max: f64,
    /// Running maximum of the estimated flow speed `‖θ̂ φ‖`.
    pub f_l_max: f64,
    /// Running maximum of the glider-reported flow speed.
    pub f_m_max: f64,
}

impl EstimatorState {
    pub fn init(basis: &BasisSet, x0: Vec2, v0: f64, t0: f64) -> Result<Self> {
        if !(x0.x.is_finite() && x0.y.is_finite() && v0.is_finite() && t0.is_finite()) {
            return Err(Error::Domain("initial fix, speed and time must be finite".into()));
        }
        Ok(Self {
            x_hat: x0,
            v_hat: v0,
            theta_hat: FlowParameters::zeros(basis.len()),
            t: t0,
            clle_max: 0.0,
            f_l_max: 0.0,
            f_m_max: 0.0,
        })
    }

    /// One observer update; see the module docs for the law.
    pub fn step(&self, gains: &EstimatorGains, basis: &BasisSet, x_meas: Vec2, psi: f64, dt: f64) -> Result<Self> {
        let mut next = self.clone();
        let mut phi = DVector::zeros(basis.len());
        next.step_in_place(gains, basis, &mut phi, Some(x_meas), psi, dt)?;
        Ok(next)
    }

    /// In-place update. `x_meas = None` runs prediction only (`e = 0`).
    pub(crate) fn step_in_place(
        &mut self,
        gains: &EstimatorGains,
        basis: &BasisSet,
        phi: &mut DVector<f64>,
        x_meas: Option<Vec2>,
        psi: f64,
        dt: f64,
    ) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Domain(format!("step dt must be > 0, got {dt}")));
        }
        if let Some(x) = x_meas {
            if !(x.x.is_finite() && x.y.is_finite()) {
                return Err(Error::Domain("non-finite position measurement".into()));
            }
        }
        if !psi.is_finite() {
            return Err(Error::Domain("non-finite heading".into()));
        }
        basis.eval_into(&self.x_hat, self.t, phi)?;
        let dir = heading_vector(psi);
        let e = x_meas.map_or_else(Vec2::zeros, |x| x - self.x_hat);

        if x_meas.is_some() {
            let theta = self.theta_hat.matrix_mut();
            let scale = dt * gains.gamma_bar;
            for (j, p) in phi.iter().enumerate() {
                theta[(0, j)] += scale * e.x * p;
                theta[(1, j)] += scale * e.y * p;
            }
            self.v_hat += dt * gains.s * e.dot(&dir);
        }
        let f_l = self.theta_hat.apply(phi);
        self.x_hat += dt * (f_l + self.v_hat * dir + gains.k * e);
        self.t += dt;

        self.clle_max = self.clle_max.max(e.norm());
        self.f_l_max = self.f_l_max.max(f_l.norm());

        if !(self.x_hat.iter().all(|v| v.is_finite()) && self.v_hat.is_finite() && self.theta_hat.is_finite()) {
            return Err(Error::Divergence {
                t: self.t,
                reason: "non-finite estimator state; reduce gains or step size".into(),
            });
        }
        Ok(())
    }

    /// Record a glider-reported flow sample in the running maximum.
    pub fn observe_glider_flow(&mut self, f_m: Vec2) {
        self.f_m_max = self.f_m_max.max(f_m.norm());
    }

    /// Estimated flow `θ̂ φ(x̂, t)` at the current state.
    pub fn flow_estimate(&self, basis: &BasisSet) -> Result<Vec2> {
        self.theta_hat.eval(basis, &self.x_hat, self.t)
    }
}

/// One row of an estimate series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateSample {
    pub t: f64,
    /// Measured position.
    pub x: Vec2,
    pub x_hat: Vec2,
    /// Trajectory estimation error `‖x - x̂‖`, m.
    pub clle: f64,
    /// Estimated glider speed, m/s.
    pub v_l: f64,
    /// Estimated flow `θ̂ φ(x̂, t)`, m/s.
    pub f_l: Vec2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateSeries {
    pub samples: Vec<EstimateSample>,
}

impl EstimateSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_clle(&self) -> f64 {
        self.samples.iter().map(|s| s.clle).fold(0.0, f64::max)
    }
}

/// Observer bundled with its gains, basis and numerics.
#[derive(Debug, Clone)]
pub struct AdaptiveObserver {
    gains: EstimatorGains,
    basis: BasisSet,
    settings: ObserverSettings,
    state: EstimatorState,
    phi: DVector<f64>,
}

impl AdaptiveObserver {
    pub fn new(
        gains: EstimatorGains,
        basis: BasisSet,
        settings: ObserverSettings,
        x0: Vec2,
        v0: f64,
        t0: f64,
    ) -> Result<Self> {
        gains.validate()?;
        settings.validate()?;
        let state = EstimatorState::init(&basis, x0, v0, t0)?;
        let phi = DVector::zeros(basis.len());
        Ok(Self {
            gains,
            basis,
            settings,
            state,
            phi,
        })
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn step(&mut self, x_meas: Vec2, psi: f64, dt: f64) -> Result<()> {
        self.state
            .step_in_place(&self.gains, &self.basis, &mut self.phi, Some(x_meas), psi, dt)?;
        self.check_divergence(x_meas)
    }

    fn check_divergence(&self, x_meas: Vec2) -> Result<()> {
        let err = (x_meas - self.state.x_hat).norm();
        if err > self.settings.divergence_limit {
            return Err(Error::Divergence {
                t: self.state.t,
                reason: format!(
                    "trajectory error {err:.0} m exceeds {:.0} m",
                    self.settings.divergence_limit
                ),
            });
        }
        Ok(())
    }

    /// Advance to `t_end` while the measurement moves linearly from `x_from`
    /// (at the current time) to `x_to` (at `t_end`).
    pub fn advance_linear(&mut self, t_end: f64, x_from: Vec2, x_to: Vec2, psi_at: impl Fn(f64) -> f64) -> Result<()> {
        let t0 = self.state.t;
        let span = t_end - t0;
        if !(span > 0.0) {
            return Err(Error::Input(format!("cannot advance from t = {t0} to t = {t_end}")));
        }
        let n = substeps(span, self.settings.max_step);
        let h = span / n as f64;
        for j in 0..n {
            let frac = j as f64 / n as f64;
            let tau = t0 + j as f64 * h;
            let x = x_from + (x_to - x_from) * frac;
            self.state.t = tau;
            self.step(x, psi_at(tau), h)?;
        }
        self.state.t = t_end;
        Ok(())
    }

    /// Advance to `t_end` with the measurement given by `x_at`.
    pub fn advance_along(&mut self, t_end: f64, x_at: impl Fn(f64) -> Vec2, psi_at: impl Fn(f64) -> f64) -> Result<()> {
        let t0 = self.state.t;
        let span = t_end - t0;
        if !(span > 0.0) {
            return Err(Error::Input(format!("cannot advance from t = {t0} to t = {t_end}")));
        }
        let n = substeps(span, self.settings.max_step);
        let h = span / n as f64;
        for j in 0..n {
            let tau = t0 + j as f64 * h;
            self.state.t = tau;
            self.step(x_at(tau), psi_at(tau), h)?;
        }
        self.state.t = t_end;
        Ok(())
    }

    /// Advance to `t_end` with no measurement (`e = 0`).
    pub fn predict_to(&mut self, t_end: f64, psi: f64) -> Result<()> {
        let t0 = self.state.t;
        let span = t_end - t0;
        if !(span > 0.0) {
            return Ok(());
        }
        let n = substeps(span, self.settings.max_step);
        let h = span / n as f64;
        for j in 0..n {
            self.state.t = t0 + j as f64 * h;
            self.state
                .step_in_place(&self.gains, &self.basis, &mut self.phi, None, psi, h)?;
        }
        self.state.t = t_end;
        Ok(())
    }

    pub fn observe_glider_flow(&mut self, f_m: Vec2) {
        self.state.observe_glider_flow(f_m);
    }

    pub fn sample(&mut self, x_meas: Vec2) -> Result<EstimateSample> {
        self.basis.eval_into(&self.state.x_hat, self.state.t, &mut self.phi)?;
        let f_l = self.state.theta_hat.apply(&self.phi);
        Ok(EstimateSample {
            t: self.state.t,
            x: x_meas,
            x_hat: self.state.x_hat,
            clle: (x_meas - self.state.x_hat).norm(),
            v_l: self.state.v_hat,
            f_l,
        })
    }
}

fn substeps(span: f64, max_step: f64) -> usize {
    ((span / max_step) - 1e-9).ceil().max(1.0) as usize
}

/// Feed a dense record stream (positions already in local metres) through the
/// observer, emitting one sample per record.
pub fn run_offline(
    records: &[DenseRecord],
    gains: &EstimatorGains,
    basis: &BasisSet,
    settings: &ObserverSettings,
    v0: f64,
) -> Result<EstimateSeries> {
    let Some(first) = records.first() else {
        return Ok(EstimateSeries::default());
    };
    for w in records.windows(2) {
        if !(w[1].t > w[0].t) {
            return Err(Error::Input(format!(
                "record timestamps not increasing: {} then {}",
                w[0].t, w[1].t
            )));
        }
    }
    let mut obs = AdaptiveObserver::new(
        gains.clone(),
        basis.clone(),
        settings.clone(),
        first.position,
        v0,
        first.t,
    )?;
    let mut samples = Vec::with_capacity(records.len());
    samples.push(obs.sample(first.position)?);
    for w in records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        obs.advance_linear(b.t, a.position, b.position, |_| a.heading)?;
        samples.push(obs.sample(b.position)?);
    }
    Ok(EstimateSeries { samples })
}

/// Non-fatal conditions met while consuming an online feed.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedWarning {
    /// No record covered `[from, to]`; the observer ran on prediction only.
    Gap { from: f64, to: f64 },
}

impl std::fmt::Display for FeedWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeedWarning::Gap { from, to } => write!(
                f,
                "gap in surfacing records from t = {from} s to t = {to} s ({:.2} h); prediction only",
                (to - from) / 3600.0
            ),
        }
    }
}

/// Incremental estimator over per-surfacing records.
///
/// Between consecutive fixes the measured trajectory is interpolated linearly.
/// Samples emitted by [`OnlineEstimator::push`] are final.
#[derive(Debug, Clone)]
pub struct OnlineEstimator {
    gains: EstimatorGains,
    basis: BasisSet,
    settings: ObserverSettings,
    v0: f64,
    observer: Option<AdaptiveObserver>,
    last: Option<(f64, f64)>,
    warnings: Vec<FeedWarning>,
}

impl OnlineEstimator {
    pub fn new(gains: EstimatorGains, basis: BasisSet, settings: ObserverSettings, v0: f64) -> Result<Self> {
        gains.validate()?;
        settings.validate()?;
        Ok(Self {
            gains,
            basis,
            settings,
            v0,
            observer: None,
            last: None,
            warnings: Vec::new(),
        })
    }

    pub fn warnings(&self) -> &[FeedWarning] {
        &self.warnings
    }

    pub fn state(&self) -> Option<&EstimatorState> {
        self.observer.as_ref().map(|o| o.state())
    }

    /// Consume one record (fixes in local metres) and return the new samples.
    pub fn push(&mut self, rec: &SparseRecord) -> Result<Vec<EstimateSample>> {
        if !(rec.end_t > rec.start_t) {
            return Err(Error::Input(format!(
                "segment [{}, {}] is empty",
                rec.start_t, rec.end_t
            )));
        }
        let mut out = Vec::new();
        match (&mut self.observer, self.last) {
            (None, _) => {
                let mut obs = AdaptiveObserver::new(
                    self.gains.clone(),
                    self.basis.clone(),
                    self.settings.clone(),
                    rec.start_fix,
                    self.v0,
                    rec.start_t,
                )?;
                out.push(obs.sample(rec.start_fix)?);
                self.observer = Some(obs);
            }
            (Some(obs), Some((last_t, last_psi))) => {
                if rec.start_t < last_t {
                    return Err(Error::Input(format!(
                        "record starting at t = {} overlaps previous record ending at t = {last_t}",
                        rec.start_t
                    )));
                }
                if rec.start_t > last_t {
                    let w = FeedWarning::Gap {
                        from: last_t,
                        to: rec.start_t,
                    };
                    warn!("{w}");
                    self.warnings.push(w);
                    obs.predict_to(rec.start_t, last_psi)?;
                    out.push(obs.sample(rec.start_fix)?);
                }
            }
            (Some(_), None) => unreachable!("observer exists only after a record"),
        }
        let obs = self.observer.as_mut().expect("initialised above");
        obs.observe_glider_flow(rec.f_m);

        let track = SegmentTrack::new(rec, self.v0);
        let step = self.settings.online_sample_interval;
        let mut j = 1u64;
        loop {
            let t_next = (rec.start_t + j as f64 * step).min(rec.end_t);
            obs.advance_along(t_next, |t| track.at(t), |tau| rec.heading_at(tau))?;
            let x_meas = if t_next == rec.end_t {
                rec.end_fix
            } else {
                track.at(t_next)
            };
            out.push(obs.sample(x_meas)?);
            if t_next >= rec.end_t {
                break;
            }
            j += 1;
        }
        self.last = Some((rec.end_t, rec.heading_at(rec.end_t)));
        Ok(out)
    }
}

/// Measured trajectory inside one record: nominal speed along the
/// interpolated headings plus a uniform drift that closes the gap to the end
/// fix. Without intra-segment headings this is the straight line between the
/// fixes.
struct SegmentTrack {
    start_t: f64,
    start_fix: Vec2,
    /// `(t, dead-reckoned displacement at t, unwrapped heading at t)`.
    knots: Vec<(f64, Vec2, f64)>,
    drift: Vec2,
    speed: f64,
}

/// `∫ h(ψ0 + rτ) dτ` over `[0, dt]`.
fn arc_integral(psi0: f64, rate: f64, dt: f64) -> Vec2 {
    let half = 0.5 * rate * dt;
    let sinc = if half.abs() < 1e-4 {
        1.0 - half * half / 6.0
    } else {
        half.sin() / half
    };
    dt * sinc * heading_vector(psi0 + half)
}

impl SegmentTrack {
    fn new(rec: &SparseRecord, speed: f64) -> Self {
        let mut knots = vec![(rec.start_t, Vec2::zeros(), rec.heading_at(rec.start_t))];
        for s in rec.samples.iter().filter(|s| s.t > rec.start_t && s.t < rec.end_t) {
            let &(t, d, psi) = knots.last().expect("starts non-empty");
            let next = psi + wrap_angle(s.heading - psi);
            let rate = (next - psi) / (s.t - t);
            knots.push((s.t, d + speed * arc_integral(psi, rate, s.t - t), next));
        }
        let mut track = Self {
            start_t: rec.start_t,
            start_fix: rec.start_fix,
            knots,
            drift: Vec2::zeros(),
            speed,
        };
        track.drift = (rec.end_fix - rec.start_fix - track.dead_reckoned(rec.end_t)) / rec.duration();
        track
    }

    fn dead_reckoned(&self, t: f64) -> Vec2 {
        let i = self.knots.partition_point(|k| k.0 <= t).max(1) - 1;
        let (t0, d, psi) = self.knots[i];
        let rate = self
            .knots
            .get(i + 1)
            .map_or(0.0, |&(t1, _, psi1)| (psi1 - psi) / (t1 - t0));
        d + self.speed * arc_integral(psi, rate, t - t0)
    }

    fn at(&self, t: f64) -> Vec2 {
        self.start_fix + self.dead_reckoned(t) + self.drift * (t - self.start_t)
    }
}

/// One-shot online processing of a whole feed.
pub fn run_online(
    records: &[SparseRecord],
    gains: &EstimatorGains,
    basis: &BasisSet,
    settings: &ObserverSettings,
    v0: f64,
) -> Result<(EstimateSeries, Vec<FeedWarning>)> {
    let mut est = OnlineEstimator::new(gains.clone(), basis.clone(), settings.clone(), v0)?;
    let mut samples = Vec::new();
    for r in records {
        samples.extend(est.push(r)?);
    }
    Ok((EstimateSeries { samples }, est.warnings))
}
