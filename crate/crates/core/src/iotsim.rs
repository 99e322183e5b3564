//! Device-level IoT simulation: duty modes, sampling, capture and energy.
//!
//! Each device samples on a regular grid whose rate depends on its current
//! mode. The mode follows the occupancy of the zone in front of the device's
//! portal through a hysteresis switch. A sample captures up to `c_max`
//! walkers currently inside the device's coverage; walkers whose coverage
//! window ends soonest are captured first.

use crate::aidc::{compose, ComposeError, DevicePlacement, DeviceType, SensingOpportunity};
use crate::engine::Trace;
use crate::space::FloorPlan;
use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use thiserror::Error;

pub const DEFAULT_WINDOW: f64 = 900.0;
pub const DEFAULT_THETA: f64 = 40.0;
pub const DEFAULT_HYSTERESIS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub f_normal: f64,
    pub f_critical: f64,
}

impl ModeConfig {
    pub fn frequency(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Normal => self.f_normal,
            Mode::Critical => self.f_critical,
        }
    }
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_hysteresis() -> f64 {
    DEFAULT_HYSTERESIS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    pub name: String,
    pub devices: BTreeMap<DeviceType, ModeConfig>,
    /// Occupancy above which devices switch to critical mode.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_hysteresis")]
    pub hysteresis: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureModel {
    pub name: String,
    pub placements: Vec<DevicePlacement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEnergy {
    /// Joules per sample read.
    pub e_read: f64,
    /// Joules per transmitted packet.
    pub e_tx: f64,
    /// Walkers one sample can capture.
    pub c_max: u32,
}

impl DeviceEnergy {
    pub fn per_sample(&self) -> f64 {
        self.e_read + self.e_tx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyModel(pub BTreeMap<DeviceType, DeviceEnergy>);

impl Default for EnergyModel {
    fn default() -> Self {
        let e = |e_read, c_max| DeviceEnergy {
            e_read,
            e_tx: 50e-6,
            c_max,
        };
        EnergyModel(BTreeMap::from([
            (DeviceType::Camera, e(100e-6, 20)),
            (DeviceType::Rfid, e(20e-6, 50)),
            (DeviceType::Counter, e(5e-6, 1)),
            (DeviceType::Qr, e(10e-6, 1)),
        ]))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IotError {
    #[error("configuration `{config}`: ModeConfig for {device}: {reason}")]
    InvalidMode {
        config: String,
        device: &'static str,
        reason: &'static str,
    },
    #[error("configuration `{config}`: {reason}")]
    InvalidThreshold { config: String, reason: &'static str },
    #[error("configuration `{config}` has no ModeConfig for {device} used by model `{model}`")]
    MissingMode {
        config: String,
        device: &'static str,
        model: String,
    },
    #[error("energy model has no entry for {0}")]
    MissingEnergy(&'static str),
    #[error("energy model entry for {device}: {reason}")]
    InvalidEnergy { device: &'static str, reason: &'static str },
    #[error("model `{model}`: {reason}")]
    InvalidModel { model: String, reason: &'static str },
    #[error("window must be > 0 seconds")]
    InvalidWindow,
    #[error(transparent)]
    Compose(#[from] ComposeError),
}

impl Configuration {
    pub fn validate(&self) -> Result<(), IotError> {
        for (&device, m) in &self.devices {
            let fail = |reason| IotError::InvalidMode {
                config: self.name.clone(),
                device: device.as_str(),
                reason,
            };
            if !(m.f_normal > 0.0) || !m.f_normal.is_finite() {
                return Err(fail("f_normal must be > 0"));
            }
            if !(m.f_critical >= m.f_normal) || !m.f_critical.is_finite() {
                return Err(fail("f_critical must be >= f_normal"));
            }
        }
        let fail = |reason| IotError::InvalidThreshold {
            config: self.name.clone(),
            reason,
        };
        if !(self.theta > 0.0) {
            return Err(fail("theta must be > 0"));
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis < self.theta) {
            return Err(fail("hysteresis must satisfy 0 <= h < theta"));
        }
        Ok(())
    }

    pub fn covers(&self, model: &ArchitectureModel) -> Result<(), IotError> {
        for d in &model.placements {
            if !self.devices.contains_key(&d.device_type) {
                return Err(IotError::MissingMode {
                    config: self.name.clone(),
                    device: d.device_type.as_str(),
                    model: model.name.clone(),
                });
            }
        }
        Ok(())
    }
}

impl ArchitectureModel {
    pub fn validate(&self, plan: &FloorPlan) -> Result<(), IotError> {
        let fail = |reason| IotError::InvalidModel {
            model: self.name.clone(),
            reason,
        };
        crate::aidc::validate_placements(plan, &self.placements)?;
        let portals: Vec<usize> = self
            .placements
            .iter()
            .map(|d| plan.portal_idx(&d.site).expect("validated"))
            .collect();
        if !portals.iter().any(|&p| plan.is_entrance_portal(p)) {
            return Err(fail("needs at least one device on an entrance portal"));
        }
        if !portals.iter().any(|&p| plan.is_exit_portal(p)) {
            return Err(fail("needs at least one device on an exit portal"));
        }
        Ok(())
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), IotError> {
        for (&device, e) in &self.0 {
            let fail = |reason| IotError::InvalidEnergy {
                device: device.as_str(),
                reason,
            };
            if !(e.e_read >= 0.0 && e.e_tx >= 0.0) {
                return Err(fail("energies must be >= 0"));
            }
            if e.c_max < 1 {
                return Err(fail("c_max must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn get(&self, device: DeviceType) -> Result<DeviceEnergy, IotError> {
        self.0.get(&device).copied().ok_or(IotError::MissingEnergy(device.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Normal,
    Critical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeInterval {
    pub start: f64,
    pub end: f64,
    pub mode: Mode,
}

/// Mode intervals covering `[0, horizon)` for an occupancy series sampled
/// every `dt` seconds starting at 0.
///
/// The switch starts in normal mode, goes critical at the first sample above
/// `theta` and only returns to normal at a sample below `theta - hysteresis`.
pub fn mode_timeline(series: &[u32], dt: f64, horizon: f64, theta: f64, hysteresis: f64) -> Vec<ModeInterval> {
    let mut intervals: Vec<ModeInterval> = Vec::new();
    let mut mode = Mode::Normal;
    let mut start = 0.0;
    for (k, &count) in series.iter().enumerate() {
        let occupancy = f64::from(count);
        let next = match mode {
            Mode::Normal if occupancy > theta => Mode::Critical,
            Mode::Critical if occupancy < theta - hysteresis => Mode::Normal,
            m => m,
        };
        if next != mode {
            let t = (k as f64 * dt).min(horizon);
            if t > start {
                intervals.push(ModeInterval { start, end: t, mode });
            }
            start = t;
            mode = next;
        }
    }
    if horizon > start {
        intervals.push(ModeInterval {
            start,
            end: horizon,
            mode,
        });
    }
    intervals
}

/// Time of the `k`-th sample of a grid starting at `origin`.
#[inline]
pub fn grid_time(origin: f64, frequency: f64, k: u64) -> f64 {
    origin + k as f64 / frequency
}

/// Smallest `k` with `grid_time(origin, frequency, k) >= t`.
fn first_sample_at_or_after(origin: f64, frequency: f64, t: f64) -> u64 {
    if t <= origin {
        return 0;
    }
    let mut k = ((t - origin) * frequency).ceil() as u64;
    while k > 0 && grid_time(origin, frequency, k - 1) >= t {
        k -= 1;
    }
    while grid_time(origin, frequency, k) < t {
        k += 1;
    }
    k
}

/// Number of grid samples inside `[start, end)`.
pub fn samples_in(interval: &ModeInterval, frequency: f64) -> u64 {
    first_sample_at_or_after(interval.start, frequency, interval.end)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceOutcome {
    pub samples: u64,
    pub packets: u64,
    pub captures: u64,
    pub energy: f64,
    pub critical_seconds: f64,
    /// Capture flag per input opportunity.
    pub captured: Vec<bool>,
}

#[derive(PartialEq)]
struct Pending {
    end: f64,
    start: f64,
    idx: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.end
            .total_cmp(&other.end)
            .then(self.start.total_cmp(&other.start))
            .then(self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Merges neighbouring intervals that sample at the same rate, so the grid
/// phase only resets where the frequency actually changes.
fn sampling_segments(timeline: &[ModeInterval], modes: &ModeConfig) -> Vec<ModeInterval> {
    let mut out: Vec<ModeInterval> = Vec::with_capacity(timeline.len());
    for iv in timeline {
        match out.last_mut() {
            Some(last) if last.end == iv.start && modes.frequency(last.mode) == modes.frequency(iv.mode) => last.end = iv.end,
            _ => out.push(*iv),
        }
    }
    out
}

/// Samples one device over its mode timeline.
///
/// `opportunities` must be sorted by start time. The sample grid restarts
/// at every mode switch that changes the sampling frequency.
pub fn simulate_device(
    opportunities: &[SensingOpportunity],
    timeline: &[ModeInterval],
    modes: &ModeConfig,
    energy: &DeviceEnergy,
) -> DeviceOutcome {
    debug_assert!(opportunities.windows(2).all(|w| w[0].start <= w[1].start));
    let mut captured = vec![false; opportunities.len()];
    let mut heap: BinaryHeap<Reverse<Pending>> = BinaryHeap::new();
    let mut next = 0;
    let mut samples = 0u64;
    let mut captures = 0u64;
    let mut critical_seconds = 0.0;

    for interval in timeline.iter().filter(|iv| iv.mode == Mode::Critical) {
        critical_seconds += interval.end - interval.start;
    }
    for interval in sampling_segments(timeline, modes) {
        let f = modes.frequency(interval.mode);
        let n = samples_in(&interval, f);
        samples += n;
        let mut k = 0;
        while k < n {
            let t = grid_time(interval.start, f, k);
            while next < opportunities.len() && opportunities[next].start <= t {
                let o = &opportunities[next];
                heap.push(Reverse(Pending {
                    end: o.end(),
                    start: o.start,
                    idx: next,
                }));
                next += 1;
            }
            while heap.peek().is_some_and(|p| p.0.end < t) {
                heap.pop();
            }
            if heap.is_empty() {
                if next == opportunities.len() {
                    break;
                }
                k = first_sample_at_or_after(interval.start, f, opportunities[next].start);
                continue;
            }
            for _ in 0..energy.c_max {
                match heap.pop() {
                    Some(Reverse(p)) => {
                        captured[p.idx] = true;
                        captures += 1;
                    }
                    None => break,
                }
            }
            k += 1;
        }
    }

    DeviceOutcome {
        samples,
        packets: samples,
        captures,
        energy: samples as f64 * energy.per_sample(),
        critical_seconds,
        captured,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device_id: String,
    pub device_type: DeviceType,
    pub portal: String,
    pub samples: u64,
    pub packets: u64,
    pub captures: u64,
    pub energy: f64,
    pub critical_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoTResult {
    pub total_energy: f64,
    pub window: f64,
    pub captures_per_window: Vec<u64>,
    /// Crossings at portals that carry at least one device.
    pub covered_crossings: u64,
    pub devices: Vec<DeviceReport>,
}

/// Window index for an event time, clamping the horizon into the last window.
pub fn window_index(time: f64, window: f64, windows: usize) -> usize {
    ((time / window).floor().max(0.0) as usize).min(windows.saturating_sub(1))
}

/// Composes the trace for `model` and simulates every device under
/// `configuration`; a crossing counts once however many devices catch it.
pub fn simulate(
    plan: &FloorPlan,
    trace: &Trace,
    model: &ArchitectureModel,
    configuration: &Configuration,
    energy_model: &EnergyModel,
    window: f64,
) -> Result<IoTResult, IotError> {
    if !(window > 0.0) {
        return Err(IotError::InvalidWindow);
    }
    configuration.validate()?;
    configuration.covers(model)?;
    energy_model.validate()?;
    model.validate(plan)?;
    for d in &model.placements {
        energy_model.get(d.device_type)?;
    }

    let streams = compose(plan, trace, &model.placements)?;
    let mut timelines: BTreeMap<usize, Vec<ModeInterval>> = BTreeMap::new();
    let mut movement_captured = vec![false; trace.crossings.len()];
    let mut covered = vec![false; plan.portals().len()];
    let mut devices = Vec::with_capacity(model.placements.len());

    for d in &model.placements {
        let portal = plan.portal_idx(&d.site).expect("validated");
        covered[portal] = true;
        let upstream = plan.portal_source(portal);
        let timeline = timelines.entry(upstream).or_insert_with(|| {
            mode_timeline(
                &trace.occupancy[upstream],
                trace.dt,
                trace.horizon,
                configuration.theta,
                configuration.hysteresis,
            )
        });
        let stream = &streams[&d.device_id];
        let outcome = simulate_device(
            stream,
            timeline,
            &configuration.devices[&d.device_type],
            &energy_model.get(d.device_type)?,
        );
        for (o, &hit) in stream.iter().zip(&outcome.captured) {
            movement_captured[o.crossing] |= hit;
        }
        devices.push(DeviceReport {
            device_id: d.device_id.clone(),
            device_type: d.device_type,
            portal: d.site.clone(),
            samples: outcome.samples,
            packets: outcome.packets,
            captures: outcome.captures,
            energy: outcome.energy,
            critical_seconds: outcome.critical_seconds,
        });
    }

    let windows = ((trace.horizon / window).ceil() as usize).max(1);
    let mut captures_per_window = vec![0u64; windows];
    for (c, &hit) in trace.crossings.iter().zip(&movement_captured) {
        if hit {
            captures_per_window[window_index(c.time, window, windows)] += 1;
        }
    }
    let covered_crossings = trace
        .crossings
        .iter()
        .filter(|c| covered[c.portal as usize])
        .count() as u64;

    Ok(IoTResult {
        total_energy: devices.iter().map(|d| d.energy).sum(),
        window,
        captures_per_window,
        covered_crossings,
        devices,
    })
}
