//! Scenario document: a single JSON object with the keys `nodes`, `profiles`,
//! `thresholds`, `anchors`, `trial` and `power`. Everything except `nodes`
//! has defaults; unknown keys are rejected.

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::channel::{default_anchors, CalibrationAnchor, ChannelError, LinkKind, ProfileTemplate, ProfileTemplates};
use crate::energy::{Battery, EnergyError, PowerModel};
use crate::protocol::{DeviceId, Thresholds};

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// serde_json's message names the offending key with line and column.
    #[error("scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario has {0} BTS nodes, exactly one is required")]
    BtsCount(usize),
    #[error("duplicate node id {0}")]
    DuplicateId(DeviceId),
    #[error("pair ({0}, {1}) must name two distinct UEs")]
    BadPair(DeviceId, DeviceId),
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { key, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Bts,
    Ue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: DeviceId,
    pub kind: NodeKind,
    pub x: f64,
    pub y: f64,
}

impl NodeSpec {
    pub fn distance_to(&self, other: &NodeSpec) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Either explicit RSSI thresholds (all three) or efficiency targets from
/// which they are derived on the calibrated profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSpec {
    pub direct_rssi_dbm: Option<f64>,
    pub relay_hop_rssi_dbm: Option<f64>,
    pub cell_rssi_dbm: Option<f64>,
    pub direct_eff_pct: f64,
    pub cell_eff_pct: f64,
    pub beacon_min_samples: u32,
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        Self {
            direct_rssi_dbm: None,
            relay_hop_rssi_dbm: None,
            cell_rssi_dbm: None,
            direct_eff_pct: 90.0,
            cell_eff_pct: 85.0,
            beacon_min_samples: 5,
        }
    }
}

impl ThresholdSpec {
    pub fn explicit(&self) -> Option<Thresholds> {
        Some(Thresholds {
            direct_rssi_dbm: self.direct_rssi_dbm?,
            relay_hop_rssi_dbm: self.relay_hop_rssi_dbm?,
            cell_rssi_dbm: self.cell_rssi_dbm?,
            beacon_min_samples: self.beacon_min_samples,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub links: Vec<LinkKind>,
    pub start_m: f64,
    pub stop_m: f64,
    pub step_m: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { links: LinkKind::ALL.to_vec(), start_m: 10.0, stop_m: 150.0, step_m: 10.0 }
    }
}

impl SweepConfig {
    /// `start, start + step, ...` up to `stop` inclusive (within 1e-9).
    pub fn distances(&self) -> Vec<f64> {
        let n = ((self.stop_m - self.start_m) / self.step_m + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start_m + i as f64 * self.step_m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub packets_per_trial: u32,
    pub payload_bytes: u32,
    pub overhead_bytes: u32,
    pub data_rate_baud: f64,
    pub retries_per_hop: u32,
    pub seed: u64,
    pub horizon_s: f64,
    /// Beacons below this RSSI are not detected at all.
    pub beacon_floor_dbm: f64,
    /// UE pairs to connect; empty pairs consecutive UEs in id order.
    pub pairs: Vec<(DeviceId, DeviceId)>,
    pub sweep: SweepConfig,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            packets_per_trial: 50,
            payload_bytes: 64,
            overhead_bytes: 8,
            data_rate_baud: 57_600.0,
            retries_per_hop: 1,
            seed: 1,
            horizon_s: 60.0,
            beacon_floor_dbm: -110.0,
            pairs: Vec::new(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub draw_d2d_on_w: f64,
    pub draw_d2d_off_w: f64,
    pub capacity_wh: f64,
    pub nominal_voltage_v: f64,
    /// Extra duty-cycle lifetimes reported by `sim lifetime`.
    pub duty_fractions: Vec<f64>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let m = PowerModel::default();
        let b = Battery::default();
        Self {
            draw_d2d_on_w: m.draw_d2d_on_w,
            draw_d2d_off_w: m.draw_d2d_off_w,
            capacity_wh: b.capacity_wh,
            nominal_voltage_v: b.nominal_voltage_v,
            duty_fractions: vec![0.5],
        }
    }
}

impl PowerConfig {
    pub fn model(&self) -> PowerModel {
        PowerModel { draw_d2d_on_w: self.draw_d2d_on_w, draw_d2d_off_w: self.draw_d2d_off_w }
    }

    pub fn battery(&self) -> Battery {
        Battery::full(self.capacity_wh, self.nominal_voltage_v)
    }
}

/// Partial profile override; fields left out keep the link default. The
/// success fields distinguish "absent" from an explicit `null`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfilePatch {
    tx_power_dbm: Option<f64>,
    pl0_db: Option<f64>,
    ref_distance_m: Option<f64>,
    path_loss_exponent: Option<f64>,
    shadow_sigma0_db: Option<f64>,
    shadow_sigma_slope_db: Option<f64>,
    #[serde(default, deserialize_with = "present")]
    success_midpoint_dbm: Option<Option<f64>>,
    #[serde(default, deserialize_with = "present")]
    success_slope_per_db: Option<Option<f64>>,
}

fn present<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<f64>>, D::Error> {
    Option::<f64>::deserialize(d).map(Some)
}

impl ProfilePatch {
    fn apply(self, mut t: ProfileTemplate) -> ProfileTemplate {
        t.tx_power_dbm = self.tx_power_dbm.unwrap_or(t.tx_power_dbm);
        t.pl0_db = self.pl0_db.unwrap_or(t.pl0_db);
        t.ref_distance_m = self.ref_distance_m.unwrap_or(t.ref_distance_m);
        t.path_loss_exponent = self.path_loss_exponent.unwrap_or(t.path_loss_exponent);
        t.shadow_sigma0_db = self.shadow_sigma0_db.unwrap_or(t.shadow_sigma0_db);
        t.shadow_sigma_slope_db = self.shadow_sigma_slope_db.unwrap_or(t.shadow_sigma_slope_db);
        if let Some(m) = self.success_midpoint_dbm {
            t.success_midpoint_dbm = m;
        }
        if let Some(k) = self.success_slope_per_db {
            t.success_slope_per_db = k;
        }
        t
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfilesPatch {
    #[serde(default)]
    bts_ue: ProfilePatch,
    #[serde(default)]
    d2d: ProfilePatch,
}

fn profiles_with_defaults<'de, D: Deserializer<'de>>(d: D) -> Result<ProfileTemplates, D::Error> {
    let patch = ProfilesPatch::deserialize(d)?;
    Ok(ProfileTemplates {
        bts_ue: patch.bts_ue.apply(ProfileTemplate::default_bts_ue()),
        d2d: patch.d2d.apply(ProfileTemplate::default_d2d()),
    })
}

fn default_anchor_list() -> Vec<CalibrationAnchor> {
    default_anchors()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default, deserialize_with = "profiles_with_defaults")]
    pub profiles: ProfileTemplates,
    #[serde(default)]
    pub thresholds: ThresholdSpec,
    #[serde(default = "default_anchor_list")]
    pub anchors: Vec<CalibrationAnchor>,
    #[serde(default)]
    pub trial: TrialConfig,
    #[serde(default)]
    pub power: PowerConfig,
}

/// Parse without the node checks; enough for power-only queries.
pub fn parse_document(document: &str) -> Result<Scenario, ScenarioError> {
    Ok(serde_json::from_str(document)?)
}

/// Parse and validate a scenario document.
pub fn parse_scenario(document: &str) -> Result<Scenario, ScenarioError> {
    let scenario = parse_document(document)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Canonical rendering; [`parse_scenario`] reads it back unchanged.
pub fn render_scenario(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serialises")
}

impl Scenario {
    /// A scenario with default settings around the given nodes.
    pub fn with_nodes(nodes: Vec<NodeSpec>) -> Self {
        Self {
            nodes,
            profiles: ProfileTemplates::default(),
            thresholds: ThresholdSpec::default(),
            anchors: default_anchors(),
            trial: TrialConfig::default(),
            power: PowerConfig::default(),
        }
    }

    pub fn bts(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Bts)
    }

    pub fn ues(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Ue)
    }

    pub fn node(&self, id: DeviceId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Requested pairs, or consecutive UEs in id order when none are listed
    /// (an odd UE out is left free to relay).
    pub fn resolved_pairs(&self) -> Vec<(DeviceId, DeviceId)> {
        if !self.trial.pairs.is_empty() {
            return self.trial.pairs.clone();
        }
        let mut ids: Vec<DeviceId> = self.ues().map(|n| n.id).collect();
        ids.sort();
        ids.chunks_exact(2).map(|c| (c[0], c[1])).collect()
    }

    /// UEs outside every pair; these may serve as relays.
    pub fn relay_candidates(&self) -> Vec<DeviceId> {
        let in_pair: BTreeSet<DeviceId> = self.resolved_pairs().into_iter().flat_map(|(a, b)| [a, b]).collect();
        let mut ids: Vec<DeviceId> = self.ues().map(|n| n.id).filter(|id| !in_pair.contains(id)).collect();
        ids.sort();
        ids
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bts_count = self.nodes.iter().filter(|n| n.kind == NodeKind::Bts).count();
        if bts_count != 1 {
            return Err(ScenarioError::BtsCount(bts_count));
        }
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id) {
                return Err(ScenarioError::DuplicateId(n.id));
            }
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(invalid("nodes", format!("node {} has a non-finite position", n.id)));
            }
        }
        let mut paired = BTreeSet::new();
        for &(a, b) in &self.trial.pairs {
            let is_ue = |id| self.node(id).is_some_and(|n| n.kind == NodeKind::Ue);
            if a == b || !is_ue(a) || !is_ue(b) {
                return Err(ScenarioError::BadPair(a, b));
            }
            // One radio per UE: a UE belongs to at most one pair.
            if !paired.insert(a) || !paired.insert(b) {
                return Err(invalid("trial.pairs", format!("pair ({a}, {b}) reuses a UE")));
            }
        }

        for link in LinkKind::ALL {
            self.profiles.get(link).with_success(link, 0.0, 1.0).validate()?;
            if let Some(p) = self.profiles.get(link).complete(link) {
                p.validate()?;
            }
        }

        let th = &self.thresholds;
        let given = [th.direct_rssi_dbm, th.relay_hop_rssi_dbm, th.cell_rssi_dbm];
        let n_given = given.iter().filter(|v| v.is_some()).count();
        if n_given != 0 && n_given != 3 {
            return Err(invalid("thresholds", "give all three RSSI thresholds or none"));
        }
        if given.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("thresholds", "RSSI thresholds must be finite"));
        }
        for (key, eff) in
            [("thresholds.direct_eff_pct", th.direct_eff_pct), ("thresholds.cell_eff_pct", th.cell_eff_pct)]
        {
            if !(eff > 0.0 && eff < 100.0) {
                return Err(invalid(key, format!("{eff} must lie strictly between 0 and 100")));
            }
        }
        if th.beacon_min_samples < 1 {
            return Err(invalid("thresholds.beacon_min_samples", "must be >= 1"));
        }

        for a in &self.anchors {
            a.validate()?;
        }

        let t = &self.trial;
        if t.packets_per_trial < 1 {
            return Err(invalid("trial.packets_per_trial", "must be >= 1"));
        }
        if !(t.data_rate_baud > 0.0 && t.data_rate_baud.is_finite()) {
            return Err(invalid("trial.data_rate_baud", "must be > 0"));
        }
        if !(t.horizon_s > 0.0 && t.horizon_s.is_finite()) {
            return Err(invalid("trial.horizon_s", "must be > 0"));
        }
        if !t.beacon_floor_dbm.is_finite() {
            return Err(invalid("trial.beacon_floor_dbm", "must be finite"));
        }
        let s = &t.sweep;
        if !(s.step_m > 0.0 && s.start_m > 0.0 && s.stop_m >= s.start_m && s.stop_m.is_finite()) {
            return Err(invalid("trial.sweep", "needs 0 < start_m <= stop_m and step_m > 0"));
        }
        if s.distances().len() > 1_000_000 {
            return Err(invalid("trial.sweep", "too many sweep points"));
        }

        let p = &self.power;
        p.model().validate()?;
        p.battery().validate()?;
        if let Some(f) = p.duty_fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(invalid("power.duty_fractions", format!("{f} outside [0, 1]")));
        }
        Ok(())
    }
}
