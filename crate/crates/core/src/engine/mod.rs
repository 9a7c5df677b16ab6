//! Discrete-event core, packet trials and scenario runs.

mod queue;
mod run;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelError;
use crate::energy::EnergyError;
use crate::protocol::ProtocolError;
use crate::scenario::ScenarioError;

pub use queue::{Event, EventQueue, SimTime};
pub use run::{
    resolve_thresholds, run_scenario, run_scenario_with, MessageCount, NodeEnergy, PairReport, RelayCount, RunOptions,
    ScenarioReport, TimingPlan,
};
pub use sweep::{run_range_sweep, run_relayed_sweep};

/// Fixed turnaround added to every frame's airtime.
pub const TURNAROUND_S: f64 = 0.010;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("data rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("sent count must be at least 1")]
    NothingSent,
    #[error("received {received} exceeds sent {sent}")]
    ReceivedExceedsSent { received: u64, sent: u64 },
    #[error("radius must be non-negative, got {0}")]
    NegativeRadius(f64),
    #[error("distance entry {index} ({distance_m} m): {source}")]
    BadDistance { index: usize, distance_m: f64, source: ChannelError },
    #[error("nodes {a} and {b}: {source}")]
    Geometry { a: u32, b: u32, source: ChannelError },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Seconds on air for one frame; one baud is taken as one bit per second.
pub fn airtime(payload_bytes: u32, overhead_bytes: u32, data_rate_baud: f64) -> Result<f64, EngineError> {
    if !(data_rate_baud > 0.0) {
        return Err(EngineError::NonPositiveRate(data_rate_baud));
    }
    Ok((payload_bytes as f64 + overhead_bytes as f64) * 8.0 / data_rate_baud)
}

/// Packets received correctly over packets transmitted, in percent.
pub fn efficiency(received: u64, sent: u64) -> Result<f64, EngineError> {
    if sent == 0 {
        return Err(EngineError::NothingSent);
    }
    if received > sent {
        return Err(EngineError::ReceivedExceedsSent { received, sent });
    }
    Ok(100.0 * received as f64 / sent as f64)
}

pub fn coverage_area_km2(radius_m: f64) -> Result<f64, EngineError> {
    if !(radius_m >= 0.0) {
        return Err(EngineError::NegativeRadius(radius_m));
    }
    Ok(std::f64::consts::PI * radius_m * radius_m * 1e-6)
}

/// Outcome of a packet trial at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub distance_m: f64,
    pub sent: u64,
    pub received: u64,
    pub rssi_samples: Vec<f64>,
    pub efficiency_pct: f64,
}

impl TrialStats {
    pub fn new(distance_m: f64, sent: u64, received: u64, rssi_samples: Vec<f64>) -> Result<Self, EngineError> {
        Ok(Self { distance_m, sent, received, efficiency_pct: efficiency(received, sent)?, rssi_samples })
    }

    pub fn mean_rssi(&self) -> Option<f64> {
        if self.rssi_samples.is_empty() {
            return None;
        }
        Some(self.rssi_samples.iter().sum::<f64>() / self.rssi_samples.len() as f64)
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn rssi_variance(&self) -> f64 {
        let n = self.rssi_samples.len();
        if n < 2 {
            return 0.0;
        }
        // Shifted by the first sample so a constant series gives exactly 0.
        let x0 = self.rssi_samples[0];
        let (s, s2) = self.rssi_samples.iter().fold((0.0, 0.0), |(s, s2), x| {
            let d = x - x0;
            (s + d, s2 + d * d)
        });
        ((s2 - s * s / n as f64) / (n - 1) as f64).max(0.0)
    }
}
