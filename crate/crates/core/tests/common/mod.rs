//! Helpers shared by the integration tests.
#![allow(dead_code)]

use crowdsense::aidc::SensingOpportunity;
use crowdsense::analysis::{scenario_trace, SweepSettings};
use crowdsense::engine::Trace;
use crowdsense::iotsim::{Mode, ModeConfig, ModeInterval};
use crowdsense::pack::{Pack, ROOT_SEED};
use rand::Rng;

pub fn pack() -> Pack {
    Pack::load().expect("shipped pack loads")
}

pub fn settings(dt: f64) -> SweepSettings {
    SweepSettings {
        dt,
        root_seed: ROOT_SEED,
        ..SweepSettings::default()
    }
}

/// Crowd trace of the `i`-th shipped scenario, as the sweep simulates it.
pub fn shipped_trace(pack: &Pack, i: usize, dt: f64) -> Trace {
    scenario_trace(&pack.plan, &pack.scenarios[i], &settings(dt)).expect("shipped scenario runs")
}

/// Captures by brute force: visit every grid point in time order and hand
/// the `c_max` most urgent uncaptured walkers in coverage to that sample.
/// A grid runs from the start of each stretch of constant frequency.
/// Returns the capture flags and the sample count.
pub fn oracle(opps: &[SensingOpportunity], timeline: &[ModeInterval], modes: &ModeConfig, c_max: u32) -> (Vec<bool>, u64) {
    let mut captured = vec![false; opps.len()];
    let mut samples = 0;
    for (i, iv) in timeline.iter().enumerate() {
        let f = modes.frequency(iv.mode);
        if i > 0 && modes.frequency(timeline[i - 1].mode) == f {
            continue;
        }
        let end = timeline[i..]
            .iter()
            .take_while(|w| modes.frequency(w.mode) == f)
            .last()
            .map_or(iv.end, |w| w.end);
        let mut k = 0u64;
        loop {
            let t = iv.start + k as f64 / f;
            if t >= end {
                break;
            }
            samples += 1;
            let mut live: Vec<usize> = (0..opps.len())
                .filter(|&i| !captured[i] && opps[i].start <= t && t <= opps[i].start + opps[i].dwell)
                .collect();
            live.sort_by(|&a, &b| {
                let (oa, ob) = (&opps[a], &opps[b]);
                (oa.start + oa.dwell)
                    .total_cmp(&(ob.start + ob.dwell))
                    .then(oa.start.total_cmp(&ob.start))
                    .then(a.cmp(&b))
            });
            for &i in live.iter().take(c_max as usize) {
                captured[i] = true;
            }
            k += 1;
        }
    }
    (captured, samples)
}

/// A random oracle case: a mode timeline over a short horizon, a
/// frequency pair, opportunities whose starts often sit exactly on grid
/// points, and a capacity.
pub struct Case {
    pub timeline: Vec<ModeInterval>,
    pub modes: ModeConfig,
    pub opps: Vec<SensingOpportunity>,
    pub c_max: u32,
}

pub fn random_case(rng: &mut impl Rng) -> Case {
    let horizon = rng.random_range(2.0..40.0f64);
    let mut cuts: Vec<f64> = (0..rng.random_range(0..5)).map(|_| rng.random_range(0.0..horizon)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut timeline = Vec::new();
    let mut start = 0.0;
    let mut mode = if rng.random_bool(0.5) { Mode::Normal } else { Mode::Critical };
    for end in cuts.into_iter().chain([horizon]) {
        if end > start {
            timeline.push(ModeInterval { start, end, mode });
            start = end;
            mode = if mode == Mode::Normal { Mode::Critical } else { Mode::Normal };
        }
    }
    let pick = |rng: &mut dyn rand::RngCore| -> f64 {
        const NICE: [f64; 6] = [0.5, 1.0, 2.0, 4.0, 10.0, 0.25];
        if rng.random_bool(0.5) {
            NICE[rng.random_range(0..NICE.len())]
        } else {
            rng.random_range(0.05..8.0)
        }
    };
    let a = pick(rng);
    let b = pick(rng);
    let modes = ModeConfig {
        f_normal: a.min(b),
        f_critical: a.max(b),
    };
    let n = rng.random_range(0..40);
    let mut opps: Vec<SensingOpportunity> = (0..n)
        .map(|i| {
            let start = if rng.random_bool(0.3) && !timeline.is_empty() {
                // exactly on a grid point of some interval
                let iv = timeline[rng.random_range(0..timeline.len())];
                let f = modes.frequency(iv.mode);
                (iv.start + rng.random_range(0..=((iv.end - iv.start) * f) as u64) as f64 / f).min(horizon)
            } else {
                rng.random_range(-1.0..horizon + 1.0)
            };
            let dwell = match rng.random_range(0..3) {
                0 => rng.random_range(0.01..0.5),
                1 => rng.random_range(0.5..3.0),
                // ends exactly on a later grid point when the grid allows it
                _ => 1.0 / modes.f_normal,
            };
            SensingOpportunity {
                agent_id: i,
                crossing: i as usize,
                start,
                dwell,
            }
        })
        .collect();
    opps.sort_by(|x, y| x.start.total_cmp(&y.start).then(x.crossing.cmp(&y.crossing)));
    Case {
        timeline,
        modes,
        opps,
        c_max: rng.random_range(1..5),
    }
}

/// Compares the device simulator with [`oracle`] on one case.
pub fn check_oracle_case(case: &Case) -> Result<(), String> {
    use crowdsense::iotsim::{simulate_device, DeviceEnergy};
    let energy = DeviceEnergy {
        e_read: 1e-4,
        e_tx: 5e-5,
        c_max: case.c_max,
    };
    let fast = simulate_device(&case.opps, &case.timeline, &case.modes, &energy);
    let (want, samples) = oracle(&case.opps, &case.timeline, &case.modes, case.c_max);
    if fast.captured != want {
        return Err(format!("capture flags differ: got {:?}, want {want:?}", fast.captured));
    }
    if fast.samples != samples {
        return Err(format!("samples {} != {samples}", fast.samples));
    }
    if fast.captures != want.iter().filter(|&&c| c).count() as u64 {
        return Err("capture count disagrees with flags".into());
    }
    Ok(())
}

/// Draws a random valid configuration covering every device type.
pub fn random_configuration(rng: &mut impl Rng, name: &str) -> crowdsense::iotsim::Configuration {
    use crowdsense::aidc::DeviceType;
    let devices = DeviceType::ALL
        .iter()
        .map(|&d| {
            let a = rng.random_range(0.1..12.0f64);
            let b = rng.random_range(0.1..12.0f64);
            (
                d,
                ModeConfig {
                    f_normal: a.min(b),
                    f_critical: a.max(b),
                },
            )
        })
        .collect();
    let theta = rng.random_range(5.0..60.0);
    crowdsense::iotsim::Configuration {
        name: name.to_string(),
        devices,
        theta,
        hysteresis: rng.random_range(0.0..10.0f64.min(theta)),
    }
}

/// Raises one frequency of a random configuration by an integer factor and
/// checks energy and per-window capture monotonicity for `model`. Returns
/// whether the raise added samples, in which case energy rose strictly.
///
/// Integer factors keep the faster grid a superset of the slower one; any
/// other raise can move every grid point and lose a short coverage window.
pub fn check_monotone(
    rng: &mut impl Rng,
    pack: &Pack,
    trace: &Trace,
    model: &crowdsense::iotsim::ArchitectureModel,
) -> Result<bool, String> {
    use crowdsense::aidc::DeviceType;
    use crowdsense::iotsim::{mode_timeline, samples_in, simulate};
    let base = random_configuration(rng, "base");
    let device = DeviceType::ALL[rng.random_range(0..4)];
    let factor = rng.random_range(2..4) as f64;
    let mut raised = base.clone();
    let m = raised.devices.get_mut(&device).unwrap();
    let mode = if rng.random_bool(0.5) && m.f_normal * factor < m.f_critical {
        m.f_normal *= factor;
        Mode::Normal
    } else {
        m.f_critical *= factor;
        Mode::Critical
    };
    let before = simulate(&pack.plan, trace, model, &base, &pack.energy, 900.0).map_err(|e| e.to_string())?;
    let after = simulate(&pack.plan, trace, model, &raised, &pack.energy, 900.0).map_err(|e| e.to_string())?;
    for (w, (b, a)) in before.captures_per_window.iter().zip(&after.captures_per_window).enumerate() {
        if a < b {
            return Err(format!("{device:?} {mode:?} x{factor}: window {w} fell from {b} to {a}"));
        }
    }
    // strictness needs the raised mode to gain grid points somewhere
    let old_f = base.devices[&device].frequency(mode);
    let new_f = raised.devices[&device].frequency(mode);
    let exercised = model.placements.iter().filter(|d| d.device_type == device).any(|d| {
        let upstream = pack.plan.portal_source(pack.plan.portal_idx(&d.site).unwrap());
        mode_timeline(&trace.occupancy[upstream], trace.dt, trace.horizon, base.theta, base.hysteresis)
            .iter()
            .filter(|iv| iv.mode == mode)
            .any(|iv| samples_in(iv, new_f) > samples_in(iv, old_f))
    });
    if after.total_energy < before.total_energy {
        return Err(format!("energy fell from {} to {}", before.total_energy, after.total_energy));
    }
    if exercised && after.total_energy <= before.total_energy {
        return Err(format!("{device:?} {mode:?} x{factor}: energy did not rise ({})", before.total_energy));
    }
    Ok(exercised)
}

/// Draws a rational-valued (Q_s, Q_e, w_s) triple, scores it in `f64` and
/// exactly, and compares the two.
pub fn check_score_triple(rng: &mut impl Rng) -> Result<(), String> {
    use crowdsense::analysis::{tradeoff_score, Weights};
    use crowdsense::ExactScore;
    let frac = |rng: &mut dyn rand::RngCore| {
        let d = rng.random_range(1..=10_000i64);
        ExactScore::new(rng.random_range(0..=d), d)
    };
    let (q_s, q_e, w_s) = (frac(rng), frac(rng), frac(rng));
    let w_e = ExactScore::from_integer(1) - w_s;
    let f = |r: ExactScore| *r.numer() as f64 / *r.denom() as f64;
    let exact = tradeoff_score(q_s, q_e, &Weights::new(w_s, w_e).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let float = tradeoff_score(f(q_s), f(q_e), &Weights::new(f(w_s), f(w_e)).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    if !(0.0..=1.0).contains(&float) {
        return Err(format!("t_s = {float} outside [0, 1]"));
    }
    let want = f(exact);
    if (float - want).abs() > 1e-12 * want.abs().max(f64::MIN_POSITIVE) && (float - want).abs() > 1e-15 {
        return Err(format!("t_s {float} vs exact {want}"));
    }
    Ok(())
}

/// Random rows for one scenario with distinct names.
pub fn random_rows(rng: &mut impl Rng, n: usize) -> Vec<crowdsense::analysis::TradeoffRow> {
    (0..n)
        .map(|i| crowdsense::analysis::TradeoffRow {
            model: format!("M{}", i % 7),
            configuration: format!("C{}", i / 7),
            scenario: "s".into(),
            seed: 0,
            total_energy: rng.random_range(0.0..300.0),
            min_window_captures: 0,
            mean_window_captures: 0.0,
            q_s: rng.random_range(0.0..=1.0),
            q_e: rng.random_range(0.0..=1.0),
            t_s: 0.0,
            crossings: 0,
            entered: 0,
            exited: 0,
            remaining: 0,
            mean_wait: 0.0,
        })
        .collect()
}

/// Scores `rows` with raw weights (a, b) normalized to sum to one.
pub fn rescore(
    rows: &[crowdsense::analysis::TradeoffRow],
    a: f64,
    b: f64,
) -> Result<Vec<crowdsense::analysis::TradeoffRow>, String> {
    use crowdsense::analysis::{tradeoff_score, Weights};
    let w = Weights::from_raw(a, b).map_err(|e| e.to_string())?;
    rows.iter()
        .map(|r| {
            let mut r = r.clone();
            r.t_s = tradeoff_score(r.q_s, r.q_e, &w).map_err(|e| e.to_string())?;
            Ok(r)
        })
        .collect()
}

/// Multiplying both raw weights by the same positive factor leaves the
/// selected row unchanged.
pub fn check_argmax_invariance(rng: &mut impl Rng) -> Result<(), String> {
    use crowdsense::analysis::select_optimal;
    let n = rng.random_range(1..40);
    let rows = random_rows(rng, n);
    let (a, b) = (rng.random_range(0.0..1.0f64), rng.random_range(0.0..1.0f64));
    let k = [2.0, 0.5, 8.0, 1e3, 1e-3][rng.random_range(0..5)] * rng.random_range(1..4) as f64;
    let base = rescore(&rows, a + 1e-3, b)?;
    let scaled = rescore(&rows, (a + 1e-3) * k, b * k)?;
    let x = select_optimal(&base, "s").map_err(|e| e.to_string())?;
    let y = select_optimal(&scaled, "s").map_err(|e| e.to_string())?;
    if (&x.model, &x.configuration) != (&y.model, &y.configuration) {
        return Err(format!("argmax moved from {}/{} to {}/{}", x.model, x.configuration, y.model, y.configuration));
    }
    Ok(())
}

/// Per-window captures for one sweep point, recomputed from the raw trace:
/// modes are read off each occupancy sample, every grid point of every
/// device is visited, and a crossing counts once however many devices see
/// it.
pub fn brute_force_windows(
    pack: &Pack,
    trace: &Trace,
    model: &crowdsense::iotsim::ArchitectureModel,
    config: &crowdsense::iotsim::Configuration,
    window: f64,
) -> Vec<u64> {
    use crowdsense::aidc::{DeviceType, QR_SCAN_STOP};
    let plan = &pack.plan;
    let mut hit = vec![false; trace.crossings.len()];
    for d in &model.placements {
        let portal = plan.portal_idx(&d.site).unwrap();
        let series = &trace.occupancy[plan.portal_source(portal)];
        // per-sample mode with hysteresis
        let mut modes = Vec::with_capacity(series.len());
        let mut critical = false;
        for &n in series {
            let n = f64::from(n);
            if !critical && n > config.theta {
                critical = true;
            } else if critical && n < config.theta - config.hysteresis {
                critical = false;
            }
            modes.push(critical);
        }
        let pair = config.devices[&d.device_type];
        let freq = |c: bool| if c { pair.f_critical } else { pair.f_normal };
        let c_max = pack.energy.get(d.device_type).unwrap().c_max as usize;
        let mut opps: Vec<(f64, f64, usize)> = trace
            .crossings
            .iter()
            .enumerate()
            .filter(|(_, c)| c.portal as usize == portal)
            .map(|(i, c)| {
                let mut dwell = d.coverage_length() / c.speed_at_crossing;
                if d.device_type == DeviceType::Qr {
                    dwell = dwell.max(QR_SCAN_STOP);
                }
                (c.time, c.time + dwell, i)
            })
            .collect();
        opps.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut taken = vec![false; opps.len()];
        let mut k0 = 0;
        while k0 < modes.len() {
            // one stretch of constant frequency
            let f = freq(modes[k0]);
            let mut k1 = k0 + 1;
            while k1 < modes.len() && freq(modes[k1]) == f {
                k1 += 1;
            }
            let (start, end) = (k0 as f64 * trace.dt, (k1 as f64 * trace.dt).min(trace.horizon));
            let mut j = 0u64;
            loop {
                let t = start + j as f64 / f;
                if t >= end {
                    break;
                }
                let mut live: Vec<usize> = (0..opps.len())
                    .take_while(|&i| opps[i].0 <= t)
                    .filter(|&i| !taken[i] && opps[i].1 >= t)
                    .collect();
                live.sort_by(|&a, &b| opps[a].1.total_cmp(&opps[b].1).then(opps[a].0.total_cmp(&opps[b].0)).then(a.cmp(&b)));
                for &i in live.iter().take(c_max) {
                    taken[i] = true;
                    hit[opps[i].2] = true;
                }
                j += 1;
            }
            k0 = k1;
        }
    }
    let windows = ((trace.horizon / window).ceil() as usize).max(1);
    let mut out = vec![0u64; windows];
    for (c, &h) in trace.crossings.iter().zip(&hit) {
        if h {
            out[((c.time / window) as usize).min(windows - 1)] += 1;
        }
    }
    out
}
