//! BTS-coordinated mode selection.
//!
//! UEs register with the BTS over the (reliable) control radio, beacon each
//! other on the D2D radio and report the median peer RSSI. The BTS then picks
//! direct D2D, relayed D2D or cellular fallback for every requested pair.

mod bts;
mod ue;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, LinkKind, ProfileSet};

pub use bts::{bts_decide_mode, select_relay, BtsMachine, PairOutcome};
pub use ue::{Outbound, UeEvent, UeMachine, UeState, UeTimer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub u32);

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Normalised `(low, high)` key for an unordered link.
pub fn link_key(a: DeviceId, b: DeviceId) -> (DeviceId, DeviceId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("no usable report for pair ({0}, {1}) and no relay candidates")]
    InsufficientData(DeviceId, DeviceId),
    #[error("pair ({0}, {1}) is unreachable: no D2D path and a BTS link is below the cell threshold")]
    Unreachable(DeviceId, DeviceId),
    #[error("pair endpoints must differ, got ({0}, {0})")]
    DegeneratePair(DeviceId),
    #[error("efficiency {0}% must lie strictly between 0 and 100")]
    InvalidEfficiency(f64),
    #[error("thresholds must be finite and beacon_min_samples >= 1")]
    InvalidThresholds,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    Register,
    RegisterAck,
    RssiReport,
    PeerBeacon,
    ModeAssign,
    RelayRequest,
    RelayGrant,
    Data,
    DataAck,
}

impl MessageKind {
    pub const ALL: [MessageKind; 9] = [
        MessageKind::Register,
        MessageKind::RegisterAck,
        MessageKind::RssiReport,
        MessageKind::PeerBeacon,
        MessageKind::ModeAssign,
        MessageKind::RelayRequest,
        MessageKind::RelayGrant,
        MessageKind::Data,
        MessageKind::DataAck,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Register => "Register",
            MessageKind::RegisterAck => "RegisterAck",
            MessageKind::RssiReport => "RssiReport",
            MessageKind::PeerBeacon => "PeerBeacon",
            MessageKind::ModeAssign => "ModeAssign",
            MessageKind::RelayRequest => "RelayRequest",
            MessageKind::RelayGrant => "RelayGrant",
            MessageKind::Data => "Data",
            MessageKind::DataAck => "DataAck",
        }
    }

    /// Control traffic rides the BTS radio and is never lost.
    pub fn is_control(self) -> bool {
        !matches!(self, MessageKind::PeerBeacon | MessageKind::Data | MessageKind::DataAck)
    }

    pub fn carries_rssi(self) -> bool {
        matches!(self, MessageKind::RssiReport | MessageKind::PeerBeacon)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    CellularFallback,
    D2dDirect,
    D2dRelayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeDecision {
    pub mode: Mode,
    pub relay: Option<DeviceId>,
    pub decided_at: f64,
}

/// `src` and `dst` are the end-to-end origin and destination; the hop a
/// frame travels is carried separately by [`Outbound`].
///
/// A `PeerBeacon` leaves its sender without an RSSI; the receiving radio
/// appends the measured value to the frame before the handler sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MessageKind,
    pub src: DeviceId,
    pub dst: DeviceId,
    pub seq: u64,
    pub payload_len_bytes: u32,
    pub carried_rssi: Option<f64>,
    pub assigned_mode: Option<ModeDecision>,
    /// The UE pair a ModeAssign, RelayRequest, RelayGrant or RssiReport
    /// refers to.
    pub pair: Option<(DeviceId, DeviceId)>,
}

/// Control frame payload used for airtime.
pub const CONTROL_PAYLOAD_BYTES: u32 = 8;

impl Message {
    pub fn control(kind: MessageKind, src: DeviceId, dst: DeviceId, seq: u64) -> Self {
        Self {
            kind,
            src,
            dst,
            seq,
            payload_len_bytes: CONTROL_PAYLOAD_BYTES,
            carried_rssi: None,
            assigned_mode: None,
            pair: None,
        }
    }

    /// Well-formedness of a frame as seen by a receiver.
    pub fn is_well_formed(&self) -> bool {
        let rssi_ok =
            self.carried_rssi.is_some() == self.kind.carries_rssi() && self.carried_rssi.is_none_or(f64::is_finite);
        let mode_ok = self.assigned_mode.is_some() == (self.kind == MessageKind::ModeAssign);
        rssi_ok && mode_ok
    }

    /// Canonical one-line trace rendering: `time kind src dst seq`.
    pub fn trace_line(&self, time_s: f64) -> String {
        format!("{time_s:.6} {} {} {} {}", self.kind, self.src, self.dst, self.seq)
    }
}

/// RSSI decision thresholds, all inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub direct_rssi_dbm: f64,
    pub relay_hop_rssi_dbm: f64,
    pub cell_rssi_dbm: f64,
    pub beacon_min_samples: u32,
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let finite =
            self.direct_rssi_dbm.is_finite() && self.relay_hop_rssi_dbm.is_finite() && self.cell_rssi_dbm.is_finite();
        if finite && self.beacon_min_samples >= 1 {
            Ok(())
        } else {
            Err(ProtocolError::InvalidThresholds)
        }
    }
}

pub fn d2d_feasible(rssi_ab_dbm: f64, thresholds: &Thresholds) -> bool {
    rssi_ab_dbm >= thresholds.direct_rssi_dbm
}

/// Thresholds from efficiency targets on calibrated profiles.
///
/// The relay-hop threshold is the per-attempt success whose two retried hops
/// compose to `direct_eff_pct` end to end.
pub fn derive_thresholds(
    profiles: &ProfileSet,
    direct_eff_pct: f64,
    cell_eff_pct: f64,
    retries_per_hop: u32,
    beacon_min_samples: u32,
) -> Result<Thresholds, ProtocolError> {
    for eff in [direct_eff_pct, cell_eff_pct] {
        if !(eff > 0.0 && eff < 100.0) {
            return Err(ProtocolError::InvalidEfficiency(eff));
        }
    }
    let d2d = profiles.get(LinkKind::D2d);
    let direct = direct_eff_pct / 100.0;
    let per_hop = direct.sqrt();
    let per_attempt = 1.0 - (1.0 - per_hop).powf(1.0 / (retries_per_hop as f64 + 1.0));
    let thresholds = Thresholds {
        direct_rssi_dbm: d2d.rssi_for_success(direct)?,
        relay_hop_rssi_dbm: d2d.rssi_for_success(per_attempt)?,
        cell_rssi_dbm: profiles.get(LinkKind::BtsUe).rssi_for_success(cell_eff_pct / 100.0)?,
        beacon_min_samples,
    };
    thresholds.validate()?;
    Ok(thresholds)
}

/// Aggregated RSSI knowledge about one unordered link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub a: DeviceId,
    pub b: DeviceId,
    pub rssi_ab_dbm: f64,
    pub sample_count: u32,
    pub freshness: f64,
}

/// Link reports keyed by normalised endpoint pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkTable {
    reports: BTreeMap<(DeviceId, DeviceId), LinkReport>,
}

impl LinkTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: DeviceId, b: DeviceId, rssi_dbm: f64, sample_count: u32, freshness: f64) {
        let (a, b) = link_key(a, b);
        self.reports
            .insert((a, b), LinkReport { a, b, rssi_ab_dbm: rssi_dbm, sample_count: sample_count.max(1), freshness });
    }

    pub fn get(&self, a: DeviceId, b: DeviceId) -> Option<&LinkReport> {
        self.reports.get(&link_key(a, b))
    }

    /// Report RSSI if the report has at least `min_samples` samples.
    pub fn rssi(&self, a: DeviceId, b: DeviceId, min_samples: u32) -> Option<f64> {
        self.get(a, b).filter(|r| r.sample_count >= min_samples).map(|r| r.rssi_ab_dbm)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinkReport> {
        self.reports.values()
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

impl FromIterator<LinkReport> for LinkTable {
    fn from_iter<I: IntoIterator<Item = LinkReport>>(iter: I) -> Self {
        let mut t = LinkTable::new();
        for r in iter {
            t.insert(r.a, r.b, r.rssi_ab_dbm, r.sample_count, r.freshness);
        }
        t
    }
}

/// Median of a non-empty slice.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
