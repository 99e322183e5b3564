mod common;

use crowdsense::aidc::{DevicePlacement, DeviceType, SensingOpportunity};
use crowdsense::engine::Trace;
use crowdsense::iotsim::{mode_timeline, simulate, simulate_device, Configuration, DeviceEnergy, Mode, ModeConfig, ModeInterval};
use crowdsense::pack::Pack;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn shipped() -> &'static (Pack, Trace) {
    static CELL: OnceLock<(Pack, Trace)> = OnceLock::new();
    CELL.get_or_init(|| {
        let pack = common::pack();
        let trace = common::shipped_trace(&pack, 1, 0.5);
        (pack, trace)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fast_capture_matches_brute_force(seed in any::<u64>()) {
        let case = common::random_case(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(common::check_oracle_case(&case), Ok(()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn raising_a_frequency_is_monotone(seed in any::<u64>(), model in 0usize..6) {
        let (pack, trace) = shipped();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = common::check_monotone(&mut rng, pack, trace, &pack.models[model]);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn flat_modes_ignore_threshold(seed in any::<u64>(), model in 0usize..6) {
        use rand::Rng;
        let (pack, trace) = shipped();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = common::random_configuration(&mut rng, "a");
        for m in a.devices.values_mut() {
            m.f_critical = m.f_normal;
        }
        let mut b = a.clone();
        b.theta = rng.random_range(1.0..100.0);
        b.hysteresis = rng.random_range(0.0..b.theta);
        let m = &pack.models[model];
        let ra = simulate(&pack.plan, trace, m, &a, &pack.energy, 900.0).unwrap();
        let rb = simulate(&pack.plan, trace, m, &b, &pack.energy, 900.0).unwrap();
        prop_assert_eq!(&ra.captures_per_window, &rb.captures_per_window);
        prop_assert_eq!(ra.total_energy, rb.total_energy);
    }

    #[test]
    fn device_energies_sum_to_total(seed in any::<u64>(), model in 0usize..6) {
        let (pack, trace) = shipped();
        let c = common::random_configuration(&mut ChaCha8Rng::seed_from_u64(seed), "c");
        let r = simulate(&pack.plan, trace, &pack.models[model], &c, &pack.energy, 900.0).unwrap();
        let sum: f64 = r.devices.iter().map(|d| d.energy).sum();
        prop_assert!((sum - r.total_energy).abs() <= 1e-12 * r.total_energy.abs().max(1e-300));
        let captured: u64 = r.captures_per_window.iter().sum();
        prop_assert!(captured <= r.covered_crossings);
    }

    #[test]
    fn timeline_tiles_the_horizon(series in prop::collection::vec(0u32..80, 1..300), theta in 1.0..70.0f64, h in 0.0..20.0f64) {
        let dt = 0.5;
        let horizon = series.len() as f64 * dt;
        let tl = mode_timeline(&series, dt, horizon, theta, h);
        prop_assert_eq!(tl.first().unwrap().start, 0.0);
        prop_assert_eq!(tl.last().unwrap().end, horizon);
        for w in tl.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].mode != w[1].mode);
        }
        prop_assert!(tl.iter().all(|iv| iv.end > iv.start));
    }
}

#[test]
fn off_grid_raise_can_lose_a_capture() {
    // a 0.2 s window straddling t = 1 is seen at 1 Hz but falls between the
    // 1.5 Hz grid points 0.667 and 1.333
    let opp = [SensingOpportunity {
        agent_id: 0,
        crossing: 0,
        start: 0.9,
        dwell: 0.2,
    }];
    let tl = [ModeInterval {
        start: 0.0,
        end: 3.0,
        mode: Mode::Normal,
    }];
    let e = DeviceEnergy {
        e_read: 1e-4,
        e_tx: 0.0,
        c_max: 1,
    };
    let at = |f| {
        simulate_device(
            &opp,
            &tl,
            &ModeConfig {
                f_normal: f,
                f_critical: f,
            },
            &e,
        )
        .captures
    };
    assert_eq!(at(1.0), 1);
    assert_eq!(at(1.5), 0);
    assert_eq!(at(2.0), 1);
}

#[test]
fn co_located_devices_count_a_crossing_once() {
    let (pack, trace) = shipped();
    let config: Configuration = pack.configuration("C2").unwrap().clone();
    let one = crowdsense::iotsim::ArchitectureModel {
        name: "one".into(),
        placements: vec![
            DevicePlacement::new("in", DeviceType::Rfid, "p_entry"),
            DevicePlacement::new("out", DeviceType::Rfid, "p_exit_a"),
        ],
    };
    let mut two = one.clone();
    two.placements.push(DevicePlacement::new("in2", DeviceType::Camera, "p_entry"));
    let a = simulate(&pack.plan, trace, &one, &config, &pack.energy, 900.0).unwrap();
    let b = simulate(&pack.plan, trace, &two, &config, &pack.energy, 900.0).unwrap();
    assert_eq!(a.captures_per_window, b.captures_per_window);
    assert!(b.total_energy > a.total_energy);
}

#[test]
fn shipped_point_matches_brute_force() {
    let pack = common::pack();
    let trace = common::shipped_trace(&pack, 0, 0.5);
    let m1 = pack.model("M1").unwrap();
    let c1 = pack.configuration("C1").unwrap();
    let fast = simulate(&pack.plan, &trace, m1, c1, &pack.energy, 900.0).unwrap();
    assert_eq!(fast.captures_per_window, common::brute_force_windows(&pack, &trace, m1, c1, 900.0));
}
