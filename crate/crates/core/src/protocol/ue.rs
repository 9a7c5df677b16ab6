//! UE state machine.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{link_key, median, DeviceId, Message, MessageKind, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeState {
    Idle,
    Registered,
    Cellular { peer: DeviceId },
    D2dDirect { peer: DeviceId },
    D2dRelayed { peer: DeviceId, relay: DeviceId },
    RelayDuty { pair: (DeviceId, DeviceId) },
}

impl UeState {
    pub fn name(&self) -> &'static str {
        match self {
            UeState::Idle => "Idle",
            UeState::Registered => "Registered",
            UeState::Cellular { .. } => "Cellular",
            UeState::D2dDirect { .. } => "D2dDirect",
            UeState::D2dRelayed { .. } => "D2dRelayed",
            UeState::RelayDuty { .. } => "RelayDuty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UeTimer {
    Register,
    Beacon,
    Report,
    SendData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UeEvent {
    /// A frame arrived. `rx_rssi_dbm` is the receiving radio's measurement.
    Deliver {
        msg: Message,
        rx_rssi_dbm: Option<f64>,
    },
    Timer(UeTimer),
}

/// A frame handed to the radio for the hop to `next_hop`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub next_hop: DeviceId,
    pub msg: Message,
}

#[derive(Debug, Clone)]
pub struct UeMachine {
    pub id: DeviceId,
    pub bts: DeviceId,
    state: UeState,
    neighbors: Vec<DeviceId>,
    beacon_window: usize,
    payload_bytes: u32,
    peer_samples: BTreeMap<DeviceId, Vec<f64>>,
    bts_downlink_dbm: Option<f64>,
    seqs: BTreeMap<(DeviceId, MessageKind), u64>,
    pub violations: u64,
    pub data_sent: u64,
    pub forwarded: u64,
    pub received: BTreeMap<DeviceId, BTreeSet<u64>>,
    pub acked: BTreeSet<u64>,
    last_forwarded: BTreeMap<(DeviceId, MessageKind), u64>,
    pub reordered: u64,
}

impl UeMachine {
    pub fn new(id: DeviceId, bts: DeviceId, neighbors: Vec<DeviceId>, beacon_window: u32, payload_bytes: u32) -> Self {
        Self {
            id,
            bts,
            state: UeState::Idle,
            neighbors: neighbors.into_iter().filter(|&n| n != id && n != bts).collect(),
            beacon_window: beacon_window.max(1) as usize,
            payload_bytes,
            peer_samples: BTreeMap::new(),
            bts_downlink_dbm: None,
            seqs: BTreeMap::new(),
            violations: 0,
            data_sent: 0,
            forwarded: 0,
            received: BTreeMap::new(),
            acked: BTreeSet::new(),
            last_forwarded: BTreeMap::new(),
            reordered: 0,
        }
    }

    pub fn state(&self) -> UeState {
        self.state
    }

    pub fn peer_samples(&self, peer: DeviceId) -> &[f64] {
        self.peer_samples.get(&peer).map_or(&[], Vec::as_slice)
    }

    fn next_seq(&mut self, dst: DeviceId, kind: MessageKind) -> u64 {
        let s = self.seqs.entry((dst, kind)).or_insert(0);
        let out = *s;
        *s += 1;
        out
    }

    fn control(&mut self, kind: MessageKind, dst: DeviceId) -> Message {
        let seq = self.next_seq(dst, kind);
        Message::control(kind, self.id, dst, seq)
    }

    /// Next hop towards `peer` in the current terminal mode.
    fn hop_to_peer(&self) -> Option<(DeviceId, DeviceId)> {
        match self.state {
            UeState::D2dDirect { peer } => Some((peer, peer)),
            UeState::D2dRelayed { peer, relay } => Some((peer, relay)),
            UeState::Cellular { peer } => Some((peer, self.bts)),
            _ => None,
        }
    }

    pub fn handle(&mut self, event: UeEvent) -> Vec<Outbound> {
        match event {
            UeEvent::Timer(t) => self.on_timer(t),
            UeEvent::Deliver { msg, rx_rssi_dbm } => {
                if !msg.is_well_formed() {
                    self.violations += 1;
                    return Vec::new();
                }
                self.on_message(msg, rx_rssi_dbm)
            }
        }
    }

    fn on_timer(&mut self, timer: UeTimer) -> Vec<Outbound> {
        match (timer, self.state) {
            (UeTimer::Register, UeState::Idle) => {
                let msg = self.control(MessageKind::Register, self.bts);
                vec![Outbound { next_hop: self.bts, msg }]
            }
            (UeTimer::Beacon, s) if s != UeState::Idle => {
                let mut out = Vec::with_capacity(self.neighbors.len() + 1);
                for n in self.neighbors.clone() {
                    let msg = self.control(MessageKind::PeerBeacon, n);
                    out.push(Outbound { next_hop: n, msg });
                }
                // Keep the BTS link measured: one report of the downlink
                // RSSI per round.
                if let Some(down) = self.bts_downlink_dbm {
                    let mut msg = self.control(MessageKind::RssiReport, self.bts);
                    msg.carried_rssi = Some(down);
                    msg.pair = Some(link_key(self.id, self.bts));
                    out.push(Outbound { next_hop: self.bts, msg });
                }
                out
            }
            (UeTimer::Report, s) if s != UeState::Idle => {
                let window = self.beacon_window;
                let ready: Vec<(DeviceId, f64)> = self
                    .peer_samples
                    .iter()
                    .filter(|(_, v)| v.len() >= window)
                    .map(|(&p, v)| (p, median(&v[v.len() - window..])))
                    .collect();
                ready
                    .into_iter()
                    .map(|(peer, rssi)| {
                        let mut msg = self.control(MessageKind::RssiReport, self.bts);
                        msg.carried_rssi = Some(rssi);
                        msg.pair = Some(link_key(self.id, peer));
                        Outbound { next_hop: self.bts, msg }
                    })
                    .collect()
            }
            (UeTimer::SendData, _) => match self.hop_to_peer() {
                Some((peer, hop)) => {
                    let seq = self.next_seq(peer, MessageKind::Data);
                    let mut msg = Message::control(MessageKind::Data, self.id, peer, seq);
                    msg.payload_len_bytes = self.payload_bytes;
                    self.data_sent += 1;
                    vec![Outbound { next_hop: hop, msg }]
                }
                None => Vec::new(),
            },
            _ => Vec::new(),
        }
    }

    fn on_message(&mut self, msg: Message, rx_rssi_dbm: Option<f64>) -> Vec<Outbound> {
        use MessageKind as K;
        if msg.src == self.bts {
            if let Some(r) = rx_rssi_dbm {
                self.bts_downlink_dbm = Some(r);
            }
        }
        match (msg.kind, self.state) {
            (K::RegisterAck, UeState::Idle) if msg.dst == self.id => {
                self.state = UeState::Registered;
                Vec::new()
            }
            (K::PeerBeacon, s) if s != UeState::Idle && msg.dst == self.id => {
                let rssi = msg.carried_rssi.expect("checked by is_well_formed");
                self.peer_samples.entry(msg.src).or_default().push(rssi);
                Vec::new()
            }
            (K::ModeAssign, UeState::Registered) => self.on_mode_assign(&msg),
            (K::RelayGrant, UeState::Registered) => match msg.pair {
                Some((a, b)) if a != self.id && b != self.id && a != b => {
                    self.state = UeState::RelayDuty { pair: link_key(a, b) };
                    Vec::new()
                }
                _ => self.violation(),
            },
            (K::Data | K::DataAck, UeState::RelayDuty { pair }) => {
                let (a, b) = pair;
                let endpoints_ok = (msg.src == a && msg.dst == b) || (msg.src == b && msg.dst == a);
                if !endpoints_ok {
                    return self.violation();
                }
                let key = (msg.src, msg.kind);
                if let Some(&last) = self.last_forwarded.get(&key) {
                    if msg.seq < last && msg.kind == K::Data {
                        self.reordered += 1;
                    }
                }
                self.last_forwarded.insert(key, msg.seq);
                self.forwarded += 1;
                let next_hop = msg.dst;
                vec![Outbound { next_hop, msg }]
            }
            (K::Data, _) if msg.dst == self.id => match self.hop_to_peer() {
                Some((peer, hop)) if peer == msg.src => {
                    self.received.entry(msg.src).or_default().insert(msg.seq);
                    let mut ack = Message::control(K::DataAck, self.id, peer, msg.seq);
                    ack.payload_len_bytes = 0;
                    vec![Outbound { next_hop: hop, msg: ack }]
                }
                _ => self.violation(),
            },
            (K::DataAck, _) if msg.dst == self.id => match self.hop_to_peer() {
                Some((peer, _)) if peer == msg.src => {
                    self.acked.insert(msg.seq);
                    Vec::new()
                }
                _ => self.violation(),
            },
            _ => self.violation(),
        }
    }

    fn on_mode_assign(&mut self, msg: &Message) -> Vec<Outbound> {
        let (Some(decision), Some((a, b))) = (msg.assigned_mode, msg.pair) else {
            return self.violation();
        };
        let peer = if a == self.id {
            b
        } else if b == self.id {
            a
        } else {
            return self.violation();
        };
        match (decision.mode, decision.relay) {
            (Mode::D2dDirect, None) => {
                self.state = UeState::D2dDirect { peer };
                Vec::new()
            }
            (Mode::CellularFallback, None) => {
                self.state = UeState::Cellular { peer };
                Vec::new()
            }
            (Mode::D2dRelayed, Some(relay)) if relay != self.id && relay != peer => {
                self.state = UeState::D2dRelayed { peer, relay };
                // The first-named endpoint asks the BTS to activate the relay.
                if a == self.id {
                    let mut req = self.control(MessageKind::RelayRequest, self.bts);
                    req.pair = Some((a, b));
                    vec![Outbound { next_hop: self.bts, msg: req }]
                } else {
                    Vec::new()
                }
            }
            _ => self.violation(),
        }
    }

    fn violation(&mut self) -> Vec<Outbound> {
        self.violations += 1;
        Vec::new()
    }
}
