mod common;

use glider_anomaly::flow_field::{BasisFunction, BasisSet, FlowField, FlowParameters, Vec2};
use glider_anomaly::simulator::{
    dead_reckon_flow, simulate, AnomalyInjection, AnomalyKind, HeadingPlan, NoiseConfig, SimConfig,
};
use proptest::prelude::*;

fn one_basis(center: Vec2, width: f64, omega: f64, phase: f64, u: f64, v: f64) -> FlowField {
    let basis = BasisSet::new(vec![BasisFunction::new(center, width, omega, phase).unwrap()]).unwrap();
    FlowField::new(basis, FlowParameters::from_rows(&[u], &[v]).unwrap()).unwrap()
}

fn config(flow: FlowField, plan: HeadingPlan, duration: f64, dt: f64) -> SimConfig {
    SimConfig {
        flow,
        v_true: 0.2,
        heading_plan: plan,
        start: Vec2::zeros(),
        duration,
        dt,
        surfacing_interval: 4.0 * 3600.0,
        segment_subsample: 1,
        seed: 7,
        noise: NoiseConfig::default(),
        turn_rate: None,
    }
}

#[test]
fn trajectory_matches_refined_integration() {
    let (c, w, omega, u, v) = (
        Vec2::new(3e3, -2e3),
        13e3,
        2.0 * std::f64::consts::PI * 1e-6,
        0.12,
        -0.07,
    );
    let dt = 10.0;
    let duration = 24.0 * 3600.0;
    let psi = 0.7;
    let gt = simulate(
        &config(
            one_basis(c, w, omega, 0.3, u, v),
            HeadingPlan::Constant(psi),
            duration,
            dt,
        ),
        &[],
    )
    .unwrap();

    // Forward Euler at dt/100 with the flow written out by hand.
    let h = dt / 100.0;
    let mut x = Vec2::zeros();
    let steps = (duration / h).round() as usize;
    for k in 0..steps {
        if k % 100 == 0 {
            let err = (gt.positions[k / 100] - x).norm();
            assert!(err < 1.0, "t = {} s: {err} m", k as f64 * h);
        }
        let t = k as f64 * h;
        let phi = (-(x - c).norm() / (2.0 * w)).exp() * (omega * t + 0.3).cos();
        x += h * (Vec2::new(u * phi, v * phi) + 0.2 * Vec2::new(psi.cos(), psi.sin()));
    }
    assert!((gt.positions[gt.len() - 1] - x).norm() < 1.0);
}

#[test]
fn half_speed_degradation_shows_as_flow_deficit() {
    let flow = one_basis(Vec2::zeros(), 13e3, 0.0, 0.0, 0.0, 0.0);
    let cfg = config(flow, HeadingPlan::Constant(0.0), 8.0 * 3600.0, 10.0);
    let inj = AnomalyInjection {
        kind: AnomalyKind::SpeedDegradation,
        t_start: 0.0,
        t_end: None,
        magnitude: 0.5,
    };
    let gt = simulate(&cfg, &[inj]).unwrap();
    for f in dead_reckon_flow(&gt, &gt.segments()) {
        let f = f.unwrap();
        assert!((f - Vec2::new(-0.1, 0.0)).norm() < 1e-12, "{f:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_is_bit_identical(seed in any::<u64>()) {
        let cf = common::default_config(seed);
        let mut rc = cf.resolve().unwrap();
        rc.sim.duration = 24.0 * 3600.0;
        let a = simulate(&rc.sim, &[]).unwrap();
        let b = simulate(&rc.sim, &[]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn zero_flow_speed_equals_v_true(
        schedule in prop::collection::vec((0.0..86400.0f64, -3.2..3.2f64), 1..6),
        v_true in 0.05..0.5f64,
    ) {
        let mut schedule = schedule;
        schedule.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cfg = config(one_basis(Vec2::zeros(), 1e4, 0.0, 0.0, 0.0, 0.0), HeadingPlan::Schedule(schedule), 86400.0, 30.0);
        cfg.v_true = v_true;
        let gt = simulate(&cfg, &[]).unwrap();
        for k in 0..gt.len() - 1 {
            let speed = (gt.positions[k + 1] - gt.positions[k]).norm() / cfg.dt;
            prop_assert!((speed - v_true).abs() <= 1e-9 * v_true, "step {k}: {speed}");
        }
    }

    #[test]
    fn uniform_constant_flow_is_recovered(u in -0.3..0.3f64, v in -0.3..0.3f64, psi in -3.2..3.2f64) {
        // A single basis far wider than the track with no tide is uniform to
        // well below the tolerance.
        let flow = one_basis(Vec2::zeros(), 1e300, 0.0, 0.0, u, v);
        let cfg = config(flow, HeadingPlan::Constant(psi), 12.0 * 3600.0, 10.0);
        let gt = simulate(&cfg, &[]).unwrap();
        for f in dead_reckon_flow(&gt, &gt.segments()) {
            let f = f.unwrap();
            prop_assert!((f - Vec2::new(u, v)).norm() <= 1e-12, "{f:?} vs ({u}, {v})");
        }
    }

    #[test]
    fn step_displacement_is_bounded(seed in any::<u64>(), kind in 0usize..3, magnitude in 0.1..1.0f64) {
        let cf = common::default_config(seed);
        let mut rc = cf.resolve().unwrap();
        rc.sim.duration = 48.0 * 3600.0;
        let kind = [AnomalyKind::SpeedDegradation, AnomalyKind::SpeedDropout, AnomalyKind::HeadingDisturbance][kind];
        let inj = AnomalyInjection { kind, t_start: 12.0 * 3600.0, t_end: Some(30.0 * 3600.0), magnitude };
        let gt = simulate(&rc.sim, &[inj]).unwrap();
        let flow_max = gt.flows.iter().map(|f| f.norm()).fold(0.0, f64::max);
        let bound = rc.sim.dt * (rc.sim.v_true + flow_max) * (1.0 + 1e-12);
        for k in 0..gt.len() - 1 {
            prop_assert!((gt.positions[k + 1] - gt.positions[k]).norm() <= bound);
        }
    }
}
