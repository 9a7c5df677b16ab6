//! Full scenario run through the event queue: registration, beacon rounds,
//! reports, the BTS decision, then data transfer until the horizon.
//!
//! Radio model per frame:
//! - control frames are reliable; the receiver still measures a shadowed RSSI
//! - a beacon is heard when its sampled RSSI clears `beacon_floor_dbm`
//! - Data/DataAck succeed with the logistic probability of each attempt's
//!   sampled RSSI; hops on a multi-hop path get `retries_per_hop` retries

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{LinkKind, ProfileSet};
use crate::energy::{consume, PowerState, PowerTrace};
use crate::protocol::{
    derive_thresholds, link_key, BtsMachine, DeviceId, Message, MessageKind, ModeDecision, Outbound, PairOutcome,
    Thresholds, UeEvent, UeMachine, UeState, UeTimer, CONTROL_PAYLOAD_BYTES,
};
use crate::rng::RandomStream;
use crate::scenario::{NodeSpec, Scenario};

use super::{airtime, EngineError, EventQueue, SimTime, TrialStats, TURNAROUND_S};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep one trace line per delivered frame.
    pub trace: bool,
}

/// Phase schedule of a run, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingPlan {
    pub control_slot_s: f64,
    pub data_slot_s: f64,
    pub ack_slot_s: f64,
    pub beacon_rounds: u32,
    pub beacon_start_s: f64,
    pub round_period_s: f64,
    pub report_s: f64,
    pub decide_s: f64,
    pub data_start_s: f64,
    pub packet_interval_s: f64,
}

impl TimingPlan {
    pub fn new(scenario: &Scenario) -> Result<Self, EngineError> {
        let t = &scenario.trial;
        let control_slot_s = airtime(CONTROL_PAYLOAD_BYTES, t.overhead_bytes, t.data_rate_baud)? + TURNAROUND_S;
        let data_slot_s = airtime(t.payload_bytes, t.overhead_bytes, t.data_rate_baud)? + TURNAROUND_S;
        let ack_slot_s = airtime(0, t.overhead_bytes, t.data_rate_baud)? + TURNAROUND_S;
        let n = scenario.ues().count() as f64;
        // Each UE gets its own slot group of n frames (n - 1 beacons plus
        // one report) so rounds never overlap.
        let group = n * control_slot_s;
        let round_period_s = (n * n + 1.0) * control_slot_s;
        let beacon_start_s = (2.0 * n + 1.0) * control_slot_s;
        let beacon_rounds = scenario.thresholds.beacon_min_samples.max(5);
        let report_s = beacon_start_s + beacon_rounds as f64 * round_period_s;
        let decide_s = report_s + n * group + control_slot_s;
        let data_start_s = decide_s + 5.0 * control_slot_s;
        let attempts = (t.retries_per_hop + 1) as f64;
        let packet_interval_s = 2.0 * attempts * (data_slot_s + ack_slot_s);
        Ok(Self {
            control_slot_s,
            data_slot_s,
            ack_slot_s,
            beacon_rounds,
            beacon_start_s,
            round_period_s,
            report_s,
            decide_s,
            data_start_s,
            packet_interval_s,
        })
    }

    fn slot(&self, kind: MessageKind) -> f64 {
        match kind {
            MessageKind::Data => self.data_slot_s,
            MessageKind::DataAck => self.ack_slot_s,
            _ => self.control_slot_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub a: DeviceId,
    pub b: DeviceId,
    pub distance_m: f64,
    pub outcome: PairOutcome,
    /// Data from `a` to `b`; absent when nothing was sent.
    pub stats: Option<TrialStats>,
    pub acked: u64,
}

impl PairReport {
    pub fn decision(&self) -> Option<&ModeDecision> {
        match &self.outcome {
            PairOutcome::Decided(d) => Some(d),
            PairOutcome::Unreachable(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEnergy {
    pub id: DeviceId,
    pub final_state: String,
    pub on_time_s: f64,
    pub off_time_s: f64,
    pub consumed_wh: f64,
    pub remaining_wh: f64,
    pub depleted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCount {
    pub kind: String,
    /// Frames handed to the radio.
    pub transmitted: u64,
    /// Transmission attempts including retries.
    pub attempts: u64,
    pub delivered: u64,
    pub lost: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayCount {
    pub id: DeviceId,
    /// Data frames that reached the relay on their way elsewhere.
    pub data_addressed_through: u64,
    pub data_forwarded: u64,
    /// Data frames that arrived with a lower sequence number than one already forwarded.
    pub reordered: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub horizon_s: f64,
    pub thresholds: Thresholds,
    pub timing: TimingPlan,
    pub pairs: Vec<PairReport>,
    pub energy: Vec<NodeEnergy>,
    pub messages: Vec<MessageCount>,
    pub relays: Vec<RelayCount>,
    pub protocol_violations: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<String>,
}

#[derive(Debug, Clone)]
enum Action {
    Timer(DeviceId, UeTimer),
    Deliver { to: DeviceId, msg: Message, rx_rssi_dbm: f64 },
    Decide,
}

struct PowerTrack {
    trace: PowerTrace,
    state: PowerState,
    since: SimTime,
}

struct World<'a> {
    scenario: &'a Scenario,
    profiles: &'a ProfileSet,
    plan: TimingPlan,
    nodes: BTreeMap<DeviceId, NodeSpec>,
    bts: BtsMachine,
    ues: BTreeMap<DeviceId, UeMachine>,
    rngs: BTreeMap<DeviceId, RandomStream>,
    power: BTreeMap<DeviceId, PowerTrack>,
    queue: EventQueue<Action>,
    counts: BTreeMap<MessageKind, MessageCount>,
    relay_in: BTreeMap<DeviceId, u64>,
    relay_out: BTreeMap<DeviceId, u64>,
    pair_rssi: BTreeMap<(DeviceId, DeviceId), Vec<f64>>,
    trace: Option<Vec<String>>,
    engine_violations: u64,
}

impl World<'_> {
    fn transmit(&mut self, from: DeviceId, out: Outbound) -> Result<(), EngineError> {
        let Outbound { next_hop: to, msg } = out;
        let count = self.counts.entry(msg.kind).or_default();
        count.transmitted += 1;
        let (Some(src), Some(dst)) = (self.nodes.get(&from), self.nodes.get(&to)) else {
            count.lost += 1;
            self.engine_violations += 1;
            return Ok(());
        };
        let link = if from == self.bts.id || to == self.bts.id { LinkKind::BtsUe } else { LinkKind::D2d };
        let profile = self.profiles.get(link);
        let d = src.distance_to(dst);
        let rng = self.rngs.get_mut(&from).expect("every node has a stream");
        let trial = &self.scenario.trial;

        let multi_hop = !(from == msg.src && to == msg.dst);
        let max_attempts = match msg.kind {
            MessageKind::Data | MessageKind::DataAck if multi_hop => trial.retries_per_hop + 1,
            _ => 1,
        };
        let mut delivered = None;
        let mut attempts = 0;
        while attempts < max_attempts && delivered.is_none() {
            attempts += 1;
            let s = profile.sample_rssi(d, rng)?.value_dbm;
            let heard = match msg.kind {
                MessageKind::PeerBeacon => s >= trial.beacon_floor_dbm,
                MessageKind::Data | MessageKind::DataAck => {
                    let p = profile.packet_success_prob(s);
                    rng.uniform() < p
                }
                _ => true,
            };
            if msg.kind == MessageKind::Data {
                self.pair_rssi.entry(link_key(msg.src, msg.dst)).or_default().push(s);
            }
            if heard {
                delivered = Some(s);
            }
        }
        let count = self.counts.entry(msg.kind).or_default();
        count.attempts += attempts as u64;
        let Some(rx) = delivered else {
            count.lost += 1;
            return Ok(());
        };
        let mut msg = msg;
        if msg.kind == MessageKind::PeerBeacon {
            msg.carried_rssi = Some(rx);
        }
        let at = self.queue.now().as_secs() + attempts as f64 * self.plan.slot(msg.kind);
        self.queue.schedule(SimTime::from_secs(at), Action::Deliver { to, msg, rx_rssi_dbm: rx });
        Ok(())
    }

    fn dispatch(&mut self, action: Action) -> Result<Option<Vec<PairOutcome>>, EngineError> {
        let now = self.queue.now();
        let (from, outs) = match action {
            Action::Timer(id, timer) => {
                let Some(ue) = self.ues.get_mut(&id) else { return Ok(None) };
                (id, ue.handle(UeEvent::Timer(timer)))
            }
            Action::Deliver { to, msg, rx_rssi_dbm } => {
                self.counts.entry(msg.kind).or_default().delivered += 1;
                if let Some(trace) = self.trace.as_mut() {
                    trace.push(msg.trace_line(now.as_secs()));
                }
                if to == self.bts.id {
                    (to, self.bts.handle(now.as_secs(), msg, Some(rx_rssi_dbm)))
                } else {
                    let Some(ue) = self.ues.get_mut(&to) else { return Ok(None) };
                    let passing = msg.kind == MessageKind::Data
                        && msg.dst != to
                        && matches!(ue.state(), UeState::RelayDuty { .. });
                    if passing {
                        *self.relay_in.entry(to).or_default() += 1;
                    }
                    (to, ue.handle(UeEvent::Deliver { msg, rx_rssi_dbm: Some(rx_rssi_dbm) }))
                }
            }
            Action::Decide => {
                let pairs = self.scenario.resolved_pairs();
                let candidates = self.scenario.relay_candidates();
                let thresholds = self.thresholds()?;
                let (outcomes, outs) = self.bts.decide_pairs(now.as_secs(), &pairs, &candidates, &thresholds);
                for o in outs {
                    self.transmit(self.bts.id, o)?;
                }
                return Ok(Some(outcomes));
            }
        };
        self.track_power(from, now);
        let relaying = self.ues.get(&from).is_some_and(|u| matches!(u.state(), UeState::RelayDuty { .. }));
        for o in outs {
            if relaying && o.msg.kind == MessageKind::Data && o.msg.src != from {
                *self.relay_out.entry(from).or_default() += 1;
            }
            self.transmit(from, o)?;
        }
        Ok(None)
    }

    fn thresholds(&self) -> Result<Thresholds, EngineError> {
        resolve_thresholds(self.scenario, self.profiles)
    }

    fn track_power(&mut self, id: DeviceId, now: SimTime) {
        let (Some(ue), Some(track)) = (self.ues.get(&id), self.power.get_mut(&id)) else { return };
        let state = PowerState::for_ue_state(&ue.state());
        if state != track.state {
            let _ = track.trace.push(track.state, (now.0 - track.since.0) as f64 * 1e-9);
            track.state = state;
            track.since = now;
        }
    }
}

/// Explicit thresholds from the document, or thresholds derived from the
/// efficiency targets on `profiles`.
pub fn resolve_thresholds(scenario: &Scenario, profiles: &ProfileSet) -> Result<Thresholds, EngineError> {
    let t = match scenario.thresholds.explicit() {
        Some(t) => t,
        None => derive_thresholds(
            profiles,
            scenario.thresholds.direct_eff_pct,
            scenario.thresholds.cell_eff_pct,
            scenario.trial.retries_per_hop,
            scenario.thresholds.beacon_min_samples,
        )?,
    };
    t.validate()?;
    Ok(t)
}

fn check_geometry(scenario: &Scenario, profiles: &ProfileSet) -> Result<(), EngineError> {
    let bts = scenario.bts().expect("validated");
    let ues: Vec<&NodeSpec> = scenario.ues().collect();
    for (i, a) in ues.iter().enumerate() {
        profiles.bts_ue.mean_rssi(a.distance_to(bts)).map_err(|source| EngineError::Geometry {
            a: bts.id.0,
            b: a.id.0,
            source,
        })?;
        for b in &ues[i + 1..] {
            profiles.d2d.mean_rssi(a.distance_to(b)).map_err(|source| EngineError::Geometry {
                a: a.id.0,
                b: b.id.0,
                source,
            })?;
        }
    }
    Ok(())
}

pub fn run_scenario(scenario: &Scenario, profiles: &ProfileSet) -> Result<ScenarioReport, EngineError> {
    run_scenario_with(scenario, profiles, RunOptions::default())
}

pub fn run_scenario_with(
    scenario: &Scenario,
    profiles: &ProfileSet,
    options: RunOptions,
) -> Result<ScenarioReport, EngineError> {
    scenario.validate()?;
    profiles.validate()?;
    check_geometry(scenario, profiles)?;
    let thresholds = resolve_thresholds(scenario, profiles)?;
    let plan = TimingPlan::new(scenario)?;
    let trial = &scenario.trial;
    let bts_id = scenario.bts().expect("validated").id;
    let ue_ids: Vec<DeviceId> = {
        let mut v: Vec<DeviceId> = scenario.ues().map(|n| n.id).collect();
        v.sort();
        v
    };

    let mut world = World {
        scenario,
        profiles,
        plan,
        nodes: scenario.nodes.iter().map(|n| (n.id, *n)).collect(),
        bts: BtsMachine::new(bts_id, thresholds.beacon_min_samples),
        ues: ue_ids
            .iter()
            .map(|&id| {
                let m = UeMachine::new(id, bts_id, ue_ids.clone(), thresholds.beacon_min_samples, trial.payload_bytes);
                (id, m)
            })
            .collect(),
        rngs: scenario.nodes.iter().map(|n| (n.id, RandomStream::substream(trial.seed, n.id.0 as u64 + 1))).collect(),
        power: ue_ids
            .iter()
            .map(|&id| (id, PowerTrack { trace: PowerTrace::new(), state: PowerState::D2dOff, since: SimTime(0) }))
            .collect(),
        queue: EventQueue::new(),
        counts: MessageKind::ALL
            .iter()
            .map(|&k| (k, MessageCount { kind: k.as_str().to_string(), ..Default::default() }))
            .collect(),
        relay_in: BTreeMap::new(),
        relay_out: BTreeMap::new(),
        pair_rssi: BTreeMap::new(),
        trace: options.trace.then(Vec::new),
        engine_violations: 0,
    };

    let n = ue_ids.len() as f64;
    for (i, &id) in ue_ids.iter().enumerate() {
        let offset = i as f64 * n * plan.control_slot_s;
        world.queue.schedule(SimTime::from_secs(i as f64 * plan.control_slot_s), Action::Timer(id, UeTimer::Register));
        for r in 0..plan.beacon_rounds {
            let t = plan.beacon_start_s + r as f64 * plan.round_period_s + offset;
            world.queue.schedule(SimTime::from_secs(t), Action::Timer(id, UeTimer::Beacon));
        }
        world.queue.schedule(SimTime::from_secs(plan.report_s + offset), Action::Timer(id, UeTimer::Report));
    }
    world.queue.schedule(SimTime::from_secs(plan.decide_s), Action::Decide);

    let horizon = SimTime::from_secs(trial.horizon_s);
    let pairs = scenario.resolved_pairs();
    let mut outcomes: Option<Vec<PairOutcome>> = None;
    while let Some(t) = world.queue.peek_time() {
        if t > horizon {
            break;
        }
        let ev = world.queue.pop().expect("peeked");
        if let Some(decided) = world.dispatch(ev.action)? {
            for (&(a, _), o) in pairs.iter().zip(&decided) {
                if !matches!(o, PairOutcome::Decided(_)) {
                    continue;
                }
                for k in 0..trial.packets_per_trial {
                    let at = plan.data_start_s + k as f64 * plan.packet_interval_s;
                    world.queue.schedule(SimTime::from_secs(at), Action::Timer(a, UeTimer::SendData));
                }
            }
            outcomes = Some(decided);
        }
    }
    // A horizon that ends before the decision leaves every pair undecided.
    let outcomes = outcomes.unwrap_or_else(|| {
        pairs.iter().map(|_| PairOutcome::Unreachable("horizon ended before the decision".into())).collect()
    });

    let mut pair_reports = Vec::with_capacity(pairs.len());
    for (&(a, b), outcome) in pairs.iter().zip(outcomes) {
        let (ua, ub) = (&world.ues[&a], &world.ues[&b]);
        let sent = ua.data_sent;
        let received = ub.received.get(&a).map_or(0, |s| s.len() as u64);
        let rssi = world.pair_rssi.remove(&link_key(a, b)).unwrap_or_default();
        let distance_m = world.nodes[&a].distance_to(&world.nodes[&b]);
        let stats = if sent > 0 { Some(TrialStats::new(distance_m, sent, received, rssi)?) } else { None };
        pair_reports.push(PairReport { a, b, distance_m, outcome, stats, acked: ua.acked.len() as u64 });
    }

    let model = scenario.power.model();
    let battery = scenario.power.battery();
    let mut energy = Vec::with_capacity(ue_ids.len());
    for &id in &ue_ids {
        let track = world.power.get_mut(&id).expect("tracked");
        let tail = horizon.0.saturating_sub(track.since.0) as f64 * 1e-9;
        track.trace.push(track.state, tail)?;
        let outcome = consume(&track.trace, &model, &battery);
        energy.push(NodeEnergy {
            id,
            final_state: world.ues[&id].state().name().to_string(),
            on_time_s: track.trace.time_in(PowerState::D2dOn),
            off_time_s: track.trace.time_in(PowerState::D2dOff),
            consumed_wh: battery.remaining_wh - outcome.battery.remaining_wh,
            remaining_wh: outcome.battery.remaining_wh,
            depleted: outcome.depleted,
        });
    }

    let relays = ue_ids
        .iter()
        .filter(|id| world.relay_in.contains_key(id) || world.relay_out.contains_key(id))
        .map(|&id| RelayCount {
            id,
            data_addressed_through: world.relay_in.get(&id).copied().unwrap_or(0),
            data_forwarded: world.relay_out.get(&id).copied().unwrap_or(0),
            reordered: world.ues.get(&id).map_or(0, |u| u.reordered),
        })
        .collect();

    let protocol_violations =
        world.bts.violations + world.ues.values().map(|u| u.violations).sum::<u64>() + world.engine_violations;

    Ok(ScenarioReport {
        seed: trial.seed,
        horizon_s: trial.horizon_s,
        thresholds,
        timing: plan,
        pairs: pair_reports,
        energy,
        messages: MessageKind::ALL.iter().map(|k| world.counts[k].clone()).collect(),
        relays,
        protocol_violations,
        trace: world.trace.unwrap_or_default(),
    })
}
