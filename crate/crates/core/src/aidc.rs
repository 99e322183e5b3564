//! Composition of crowd traces into per-device sensing streams.
//!
//! A device sits on exactly one portal. Every crossing of that portal gives
//! the device one chance to observe the walker, lasting as long as the
//! walker spends inside the device's coverage.

use crate::engine::Trace;
use crate::space::FloorPlan;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Minimum time a visitor stops in front of a QR reader to scan a ticket.
pub const QR_SCAN_STOP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceType {
    Camera,
    Rfid,
    Counter,
    Qr,
}

impl DeviceType {
    pub const ALL: [DeviceType; 4] = [DeviceType::Camera, DeviceType::Rfid, DeviceType::Counter, DeviceType::Qr];

    /// Default length of walkway the device covers, meters.
    pub fn default_coverage(self) -> f64 {
        match self {
            DeviceType::Camera => 3.0,
            DeviceType::Rfid => 2.0,
            DeviceType::Counter => 0.3,
            DeviceType::Qr => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::Camera => "camera",
            DeviceType::Rfid => "rfid",
            DeviceType::Counter => "counter",
            DeviceType::Qr => "qr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePlacement {
    pub device_id: String,
    #[serde(rename = "type")]
    pub device_type: DeviceType,
    /// Portal id the device watches.
    #[serde(rename = "portal")]
    pub site: String,
    /// Overrides the type's default coverage length when present.
    #[serde(rename = "coverage", default, skip_serializing_if = "Option::is_none")]
    pub coverage_override: Option<f64>,
}

impl DevicePlacement {
    pub fn new(device_id: &str, device_type: DeviceType, site: &str) -> Self {
        DevicePlacement {
            device_id: device_id.to_string(),
            device_type,
            site: site.to_string(),
            coverage_override: None,
        }
    }

    pub fn coverage_length(&self) -> f64 {
        self.coverage_override.unwrap_or_else(|| self.device_type.default_coverage())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingOpportunity {
    pub agent_id: u32,
    /// Index of the generating crossing in [`Trace::crossings`].
    pub crossing: usize,
    pub start: f64,
    pub dwell: f64,
}

impl SensingOpportunity {
    pub fn end(&self) -> f64 {
        self.start + self.dwell
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("placement `{device}` refers to unknown portal `{portal}`")]
    UnknownPortal { device: String, portal: String },
    #[error("duplicate device id `{0}`")]
    DuplicateDevice(String),
    #[error("placement `{0}`: coverage length must be > 0")]
    NonPositiveCoverage(String),
}

pub type Streams = BTreeMap<String, Vec<SensingOpportunity>>;

pub fn validate_placements(plan: &FloorPlan, placements: &[DevicePlacement]) -> Result<(), ComposeError> {
    let mut seen = std::collections::HashSet::new();
    for d in placements {
        if !seen.insert(d.device_id.as_str()) {
            return Err(ComposeError::DuplicateDevice(d.device_id.clone()));
        }
        if plan.portal_idx(&d.site).is_none() {
            return Err(ComposeError::UnknownPortal {
                device: d.device_id.clone(),
                portal: d.site.clone(),
            });
        }
        if !(d.coverage_length() > 0.0) {
            return Err(ComposeError::NonPositiveCoverage(d.device_id.clone()));
        }
    }
    Ok(())
}

/// Sensing opportunities per device, keyed by device id.
pub fn compose(plan: &FloorPlan, trace: &Trace, placements: &[DevicePlacement]) -> Result<Streams, ComposeError> {
    validate_placements(plan, placements)?;
    let mut by_portal: Vec<Vec<usize>> = vec![Vec::new(); plan.portals().len()];
    for (i, c) in trace.crossings.iter().enumerate() {
        by_portal[c.portal as usize].push(i);
    }
    let mut streams = Streams::new();
    for d in placements {
        let portal = plan.portal_idx(&d.site).expect("validated above");
        let coverage = d.coverage_length();
        let mut stream: Vec<SensingOpportunity> = by_portal[portal]
            .iter()
            .map(|&i| {
                let c = &trace.crossings[i];
                let mut dwell = coverage / c.speed_at_crossing;
                if d.device_type == DeviceType::Qr {
                    dwell = dwell.max(QR_SCAN_STOP);
                }
                SensingOpportunity {
                    agent_id: c.agent_id,
                    crossing: i,
                    start: c.time,
                    dwell,
                }
            })
            .collect();
        stream.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.crossing.cmp(&b.crossing)));
        streams.insert(d.device_id.clone(), stream);
    }
    Ok(streams)
}

pub fn streams_json(streams: &Streams) -> String {
    serde_json::to_string_pretty(streams).expect("streams serialize")
}
