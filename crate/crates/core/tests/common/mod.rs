#![allow(dead_code)]

use glider_anomaly::data_io::{ConfigFile, DenseStream, Meta, RunConfig, SparseStream};
use glider_anomaly::estimator::EstimateSeries;
use glider_anomaly::flow_field::Vec2;
use glider_anomaly::simulator::{
    observe, simulate, to_dense_records, to_sparse_records, AnomalyInjection, AnomalyKind, GroundTruth,
};

pub const HOUR: f64 = 3600.0;
pub const T_ANOMALY: f64 = 72.0 * HOUR;

/// A simulated deployment with everything derived from it.
pub struct Scenario {
    pub rc: RunConfig,
    pub gt: GroundTruth,
    pub dense: DenseStream,
    pub sparse: SparseStream,
}

pub fn default_config(seed: u64) -> ConfigFile {
    let mut cf = ConfigFile::default();
    cf.simulation.seed = Some(seed);
    cf
}

pub fn degradation() -> AnomalyInjection {
    AnomalyInjection {
        kind: AnomalyKind::SpeedDegradation,
        t_start: T_ANOMALY,
        t_end: None,
        magnitude: 0.6,
    }
}

pub fn scenario(cf: &ConfigFile, injections: &[AnomalyInjection]) -> Scenario {
    let mut rc = cf.resolve().unwrap();
    rc.injections.extend_from_slice(injections);
    let gt = simulate(&rc.sim, &rc.injections).unwrap();
    let obs = observe(&gt, &rc.sim.noise, rc.sim.seed).unwrap();
    let meta = Meta {
        epoch: Some(rc.epoch),
        ..Meta::default()
    };
    let dense = to_dense_records(&gt, &obs, &meta);
    let sparse = to_sparse_records(&gt, &obs, &rc.sim, &meta, rc.sparse_samples);
    Scenario { rc, gt, dense, sparse }
}

/// Ground-truth flow at time `t` (nearest simulation step).
pub fn true_flow_at(gt: &GroundTruth, t: f64) -> Vec2 {
    let i = gt.times.partition_point(|&s| s < t).min(gt.len() - 1);
    gt.flows[i]
}

pub fn rmse(errors: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = errors.into_iter().fold((0.0, 0usize), |(s, n), e| (s + e * e, n + 1));
    (sum / n as f64).sqrt()
}

/// Largest value in `v`, scanned with independent lanes so it vectorises.
fn slice_max(v: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let chunks = v.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for (l, &x) in lanes.iter_mut().zip(c) {
            *l = if x > *l { x } else { *l };
        }
    }
    tail.iter().chain(&lanes).fold(0.0, |a, &b| if b > a { b } else { a })
}

/// p_E at every index, recomputing both maxima from the full history.
pub fn rescan_p_e(series: &EstimateSeries, f_m: &[Option<Vec2>]) -> Vec<Option<f64>> {
    // max(max a, max b) = max of the elementwise maxima, so scan one array.
    let norms: Vec<f64> = series
        .samples
        .iter()
        .zip(f_m)
        .map(|(s, m)| s.f_l.norm().max(m.map_or(0.0, |v| v.norm())))
        .collect();
    (0..series.len())
        .map(|i| {
            let m = f_m[i]?;
            let denom = 2.0 * slice_max(&norms[..=i]);
            Some(if denom > 0.0 {
                (m - series.samples[i].f_l).norm() / denom
            } else {
                0.0
            })
        })
        .collect()
}
