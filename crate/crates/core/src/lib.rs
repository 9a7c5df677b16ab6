//! Discrete-event simulator for a BTS-coordinated device-to-device (D2D)
//! radio network.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: log-distance path loss with distance-dependent shadowing,
//!   RSSI sampling and inversion, RSSI to packet-success mapping, multi-hop
//!   composition and anchor calibration.
//! - [`protocol`]: UE and BTS state machines, mode selection and relay choice.
//! - [`engine`]: the event queue, range sweeps and full scenario runs.
//! - [`energy`]: two-state power model and battery accounting.
//! - [`scenario`]: the JSON scenario document and its validation.
//! - [`cli`]: the `sim` command implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cli;
pub mod energy;
pub mod engine;
pub mod protocol;
pub mod rng;
pub mod scenario;

pub use channel::{
    CalibrationAnchor, ChannelError, Composition, LinkKind, ProfileSet, ProfileTemplate, ProfileTemplates,
    RadioProfile, RssiSample,
};
pub use energy::{Battery, EnergyError, PowerModel, PowerState, PowerTrace};
pub use engine::{EngineError, ScenarioReport, TrialStats};
pub use protocol::{DeviceId, LinkReport, Message, MessageKind, Mode, ModeDecision, Thresholds};
pub use rng::RandomStream;
pub use scenario::{Scenario, ScenarioError};
