//! Cross-module invariants checked on generated inputs.

use std::f64::consts::PI;

use nalgebra::{Point2, Vector3};
use proptest::prelude::*;

use quadstack::global_planner::{stitch, GlobalPath};
use quadstack::kinematics::{forward_kinematics_leg, ik_dls, IkParams, RobotModel};
use quadstack::local_planner::BodyState;
use quadstack::robot_interface::{state_machine_step, Event, InterfaceState, TimingMonitor, DEADLINE_US};
use quadstack::simulator::{run_episode, PipelineConfig, Scenario, SimConfig};
use quadstack::terrain::{HeightMap, Task};

fn flat() -> HeightMap {
    HeightMap::flat(81, 81, 0.05, (-2.0, -2.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stitched_plans_keep_the_prefix_and_uniform_spacing(
        d1 in 0.05f64..0.4, h1 in -PI..PI, d2 in 0.05f64..0.4, h2 in -PI..PI,
    ) {
        let map = flat();
        let planner = PipelineConfig::default().local_planner();
        let z = PipelineConfig::default().model.standing_height;
        let start = BodyState::at_rest(Vector3::new(0.0, 0.0, z), 0.0);
        let mid = BodyState::at_rest(Vector3::new(d1 * h1.cos(), d1 * h1.sin(), z), h1);
        let end = BodyState::at_rest(mid.position + Vector3::new(d2 * h2.cos(), d2 * h2.sin(), 0.0), h2);
        let a = planner.plan(&start, &mid, &map).unwrap();
        let b = planner.plan_from_feet(&a.last().base, Some(&a.last().feet), &end, &map).unwrap();
        let s = stitch(&a, &b, a.duration()).unwrap();
        prop_assert_eq!(s.nodes.len(), a.nodes.len() + b.nodes.len() - 1);
        prop_assert_eq!(&s.nodes[..a.nodes.len()], &a.nodes[..]);
        for (i, n) in s.nodes.iter().enumerate() {
            prop_assert!((n.t - i as f64 * s.dt).abs() < 1e-9);
        }
        prop_assert!((s.last().base.position - end.position).norm() < 1e-6);
    }

    #[test]
    fn spline_interpolates_knots_and_arc_length_is_monotone(
        steps in prop::collection::vec((0.1f64..1.0, -1.0f64..1.0), 1..6),
    ) {
        let mut knots = vec![Point2::new(0.0, 0.0)];
        for (len, turn) in steps {
            let last = knots[knots.len() - 1];
            knots.push(last + nalgebra::Vector2::new(len * turn.cos(), len * turn.sin()));
        }
        let path = GlobalPath::from_knots(knots.clone()).unwrap();
        for (i, k) in knots.iter().enumerate() {
            prop_assert!((path.point_param(path.knot_param(i)) - k).norm() < 1e-9);
        }
        prop_assert!(path.length >= path.chord_length() - 1e-9);
        let mut prev = path.point_at(0.0);
        let mut walked = 0.0;
        let n = 200;
        for i in 1..=n {
            let p = path.point_at(path.length * i as f64 / n as f64);
            walked += (p - prev).norm();
            prev = p;
        }
        // summed chords never exceed the arc length they sample
        prop_assert!(walked <= path.length + 1e-6);
        prop_assert!(walked >= 0.99 * path.length);
    }

    #[test]
    fn ik_recovers_workspace_targets(leg in 0usize..4, abd in -0.5f64..0.5, hip in -1.2f64..1.2, knee in 0.4f64..2.4) {
        let model = RobotModel::default();
        let target = forward_kinematics_leg(&model, leg, [abd, hip, knee]);
        prop_assume!(target.z < model.hip(leg).z - 0.1);
        let stand = model.standing_pose();
        let sol = ik_dls(&model, leg, &target, [stand[3 * leg], stand[3 * leg + 1], stand[3 * leg + 2]], &IkParams::default());
        prop_assert!(sol.converged);
        prop_assert!((forward_kinematics_leg(&model, leg, sol.q) - target).norm() < 1e-4);
    }

    #[test]
    fn missed_deadlines_count_late_frames(frames in prop::collection::vec(0.0f64..3000.0, 0..200)) {
        let m = TimingMonitor::new();
        for &f in &frames {
            m.record(f);
        }
        let s = m.summary();
        prop_assert_eq!(s.missed_deadlines, frames.iter().filter(|&&f| f > DEADLINE_US).count());
        prop_assert_eq!(s.frames, frames.len());
        if !frames.is_empty() {
            prop_assert!(s.p99_us <= s.max_us && s.mean_us <= s.max_us);
        }
    }

    #[test]
    fn run_is_reached_only_through_hold(events in prop::collection::vec(0usize..3, 0..12)) {
        let mut state = InterfaceState::Sweep { complete: false };
        for e in events {
            let prev = state;
            if let Ok(next) = state_machine_step(state, Event::ALL[e]) {
                if next == InterfaceState::Run {
                    prop_assert_eq!(prev, InterfaceState::Hold);
                }
                state = next;
            } else {
                prop_assert_eq!(state, prev);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn episodes_are_deterministic(seed in 0u64..1000, task in prop::sample::select(vec![Task::Walking, Task::Avoidance, Task::Climbing])) {
        let mut scenario = Scenario::task(task, seed);
        scenario.time_limit = 1.0;
        let pipe = PipelineConfig::default();
        let sim = SimConfig { seed, ..SimConfig::default() };
        let a = run_episode(&scenario, &pipe, &sim);
        let b = run_episode(&scenario, &pipe, &sim);
        prop_assert_eq!(a.to_csv(), b.to_csv());
        prop_assert_eq!(a, b);
    }
}
