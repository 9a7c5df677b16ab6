//! BTS side: report aggregation, mode decision and relay selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    d2d_feasible, link_key, median, DeviceId, LinkTable, Message, MessageKind, Mode, ModeDecision, Outbound,
    ProtocolError, Thresholds,
};

/// Candidate maximising the weaker of its two hops, among those whose weaker
/// hop meets `relay_hop_rssi_dbm`. Ties go to the smaller id.
pub fn select_relay(
    pair: (DeviceId, DeviceId),
    candidates: &[DeviceId],
    reports: &LinkTable,
    thresholds: &Thresholds,
) -> Option<DeviceId> {
    let (a, b) = pair;
    let min_samples = thresholds.beacon_min_samples;
    let mut best: Option<(f64, DeviceId)> = None;
    for &r in candidates {
        if r == a || r == b {
            continue;
        }
        let (Some(ar), Some(rb)) = (reports.rssi(a, r, min_samples), reports.rssi(r, b, min_samples)) else {
            continue;
        };
        let weaker = ar.min(rb);
        if weaker < thresholds.relay_hop_rssi_dbm {
            continue;
        }
        best = match best {
            Some((s, id)) if s > weaker || (s == weaker && id < r) => Some((s, id)),
            _ => Some((weaker, r)),
        };
    }
    best.map(|(_, id)| id)
}

/// Mode for `pair`: direct if the pair link meets the direct threshold, else
/// relayed through [`select_relay`]'s choice, else cellular if both BTS links
/// meet the cell threshold.
pub fn bts_decide_mode(
    pair: (DeviceId, DeviceId),
    bts: DeviceId,
    candidates: &[DeviceId],
    reports: &LinkTable,
    thresholds: &Thresholds,
    now: f64,
) -> Result<ModeDecision, ProtocolError> {
    let (a, b) = pair;
    if a == b {
        return Err(ProtocolError::DegeneratePair(a));
    }
    let min_samples = thresholds.beacon_min_samples;
    let direct = reports.rssi(a, b, min_samples);
    if direct.is_some_and(|r| d2d_feasible(r, thresholds)) {
        return Ok(ModeDecision { mode: Mode::D2dDirect, relay: None, decided_at: now });
    }
    if let Some(relay) = select_relay(pair, candidates, reports, thresholds) {
        return Ok(ModeDecision { mode: Mode::D2dRelayed, relay: Some(relay), decided_at: now });
    }
    if direct.is_none() && candidates.iter().all(|&c| c == a || c == b) {
        return Err(ProtocolError::InsufficientData(a, b));
    }
    let cell_ok = |ue| reports.rssi(bts, ue, min_samples).is_some_and(|r| r >= thresholds.cell_rssi_dbm);
    if cell_ok(a) && cell_ok(b) {
        Ok(ModeDecision { mode: Mode::CellularFallback, relay: None, decided_at: now })
    } else {
        Err(ProtocolError::Unreachable(a, b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PairOutcome {
    Decided(ModeDecision),
    Unreachable(String),
}

#[derive(Debug, Clone)]
pub struct BtsMachine {
    pub id: DeviceId,
    window: usize,
    registered: BTreeSet<DeviceId>,
    /// Uplink (measured here) and downlink (reported) samples per UE.
    bts_link_samples: BTreeMap<DeviceId, Vec<f64>>,
    /// Directional peer medians: (reporter, peer) -> (rssi, time).
    peer_reports: BTreeMap<(DeviceId, DeviceId), (f64, f64)>,
    decisions: BTreeMap<(DeviceId, DeviceId), ModeDecision>,
    seq: u64,
    pub violations: u64,
    pub forwarded: u64,
}

impl BtsMachine {
    pub fn new(id: DeviceId, beacon_window: u32) -> Self {
        Self {
            id,
            window: beacon_window.max(1) as usize,
            registered: BTreeSet::new(),
            bts_link_samples: BTreeMap::new(),
            peer_reports: BTreeMap::new(),
            decisions: BTreeMap::new(),
            seq: 0,
            violations: 0,
            forwarded: 0,
        }
    }

    pub fn is_registered(&self, ue: DeviceId) -> bool {
        self.registered.contains(&ue)
    }

    fn control(&mut self, kind: MessageKind, dst: DeviceId) -> Message {
        let m = Message::control(kind, self.id, dst, self.seq);
        self.seq += 1;
        m
    }

    pub fn handle(&mut self, now: f64, msg: Message, rx_rssi_dbm: Option<f64>) -> Vec<Outbound> {
        use MessageKind as K;
        if !msg.is_well_formed() {
            self.violations += 1;
            return Vec::new();
        }
        if msg.dst == self.id && msg.kind.is_control() {
            if let Some(r) = rx_rssi_dbm {
                self.bts_link_samples.entry(msg.src).or_default().push(r);
            }
        }
        match msg.kind {
            K::Register if msg.dst == self.id => {
                self.registered.insert(msg.src);
                let ack = self.control(K::RegisterAck, msg.src);
                vec![Outbound { next_hop: msg.src, msg: ack }]
            }
            K::RssiReport if msg.dst == self.id && self.registered.contains(&msg.src) => {
                let rssi = msg.carried_rssi.expect("checked by is_well_formed");
                match msg.pair {
                    Some((x, y)) if link_key(x, y) == link_key(msg.src, self.id) => {
                        self.bts_link_samples.entry(msg.src).or_default().push(rssi);
                    }
                    Some((x, y)) if x == msg.src || y == msg.src => {
                        let peer = if x == msg.src { y } else { x };
                        self.peer_reports.insert((msg.src, peer), (rssi, now));
                    }
                    _ => self.violations += 1,
                }
                Vec::new()
            }
            K::RelayRequest if msg.dst == self.id => {
                let decision =
                    msg.pair.and_then(|(a, b)| self.decisions.get(&link_key(a, b)).map(|d| (link_key(a, b), *d)));
                match decision {
                    Some((pair, ModeDecision { relay: Some(relay), .. })) => {
                        let mut grant = self.control(K::RelayGrant, relay);
                        grant.pair = Some(pair);
                        vec![Outbound { next_hop: relay, msg: grant }]
                    }
                    _ => {
                        self.violations += 1;
                        Vec::new()
                    }
                }
            }
            // Cellular data path: the BTS forwards between registered UEs.
            K::Data | K::DataAck
                if msg.dst != self.id && self.registered.contains(&msg.src) && self.registered.contains(&msg.dst) =>
            {
                self.forwarded += 1;
                let next_hop = msg.dst;
                vec![Outbound { next_hop, msg }]
            }
            _ => {
                self.violations += 1;
                Vec::new()
            }
        }
    }

    /// Current link knowledge as report records.
    pub fn link_table(&self) -> LinkTable {
        let mut table = LinkTable::new();
        for (&ue, samples) in &self.bts_link_samples {
            if samples.is_empty() || !self.registered.contains(&ue) {
                continue;
            }
            let recent = &samples[samples.len().saturating_sub(self.window)..];
            table.insert(self.id, ue, median(recent), samples.len() as u32, 0.0);
        }
        let mut merged: BTreeMap<(DeviceId, DeviceId), (Vec<f64>, f64)> = BTreeMap::new();
        for (&(reporter, peer), &(rssi, t)) in &self.peer_reports {
            let e = merged.entry(link_key(reporter, peer)).or_insert((Vec::new(), t));
            e.0.push(rssi);
            e.1 = e.1.max(t);
        }
        for ((a, b), (values, t)) in merged {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let count = (values.len() * self.window) as u32;
            table.insert(a, b, mean, count, t);
        }
        table
    }

    /// Decide every pair in order. Relays taken by an earlier pair are not
    /// offered to later ones. Returns the outcomes and the ModeAssign frames.
    pub fn decide_pairs(
        &mut self,
        now: f64,
        pairs: &[(DeviceId, DeviceId)],
        candidates: &[DeviceId],
        thresholds: &Thresholds,
    ) -> (Vec<PairOutcome>, Vec<Outbound>) {
        let table = self.link_table();
        let mut free: Vec<DeviceId> = candidates.iter().copied().filter(|c| self.registered.contains(c)).collect();
        let mut outcomes = Vec::with_capacity(pairs.len());
        let mut out = Vec::new();
        for &(a, b) in pairs {
            if !self.registered.contains(&a) || !self.registered.contains(&b) {
                outcomes.push(PairOutcome::Unreachable(format!("pair ({a}, {b}) not registered")));
                continue;
            }
            match bts_decide_mode((a, b), self.id, &free, &table, thresholds, now) {
                Ok(decision) => {
                    if let Some(r) = decision.relay {
                        free.retain(|&c| c != r);
                    }
                    self.decisions.insert(link_key(a, b), decision);
                    for ue in [a, b] {
                        let mut m = self.control(MessageKind::ModeAssign, ue);
                        m.assigned_mode = Some(decision);
                        m.pair = Some((a, b));
                        out.push(Outbound { next_hop: ue, msg: m });
                    }
                    outcomes.push(PairOutcome::Decided(decision));
                }
                Err(e) => outcomes.push(PairOutcome::Unreachable(e.to_string())),
            }
        }
        (outcomes, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const BTS: DeviceId = DeviceId(0);
    const A: DeviceId = DeviceId(1);
    const B: DeviceId = DeviceId(2);

    fn thresholds() -> Thresholds {
        Thresholds { direct_rssi_dbm: -80.0, relay_hop_rssi_dbm: -65.0, cell_rssi_dbm: -88.0, beacon_min_samples: 5 }
    }

    fn table(entries: &[(u32, u32, f64)]) -> LinkTable {
        let mut t = LinkTable::new();
        for &(a, b, r) in entries {
            t.insert(DeviceId(a), DeviceId(b), r, 5, 0.0);
        }
        t
    }

    #[test]
    fn select_relay_cases() {
        let th = thresholds();
        assert_eq!(select_relay((A, B), &[], &LinkTable::new(), &th), None);
        let t = table(&[(1, 3, -70.0), (3, 2, -50.0), (1, 4, -60.0), (4, 2, -55.0)]);
        assert_eq!(select_relay((A, B), &[DeviceId(3), DeviceId(4)], &t, &th), Some(DeviceId(4)));
        let t = table(&[(1, 3, -60.0), (3, 2, -60.0), (1, 4, -60.0), (4, 2, -60.0)]);
        assert_eq!(select_relay((A, B), &[DeviceId(4), DeviceId(3)], &t, &th), Some(DeviceId(3)));
    }

    #[test]
    fn decide_direct() {
        let th = thresholds();
        let t = table(&[(1, 2, th.direct_rssi_dbm + 5.0)]);
        let d = bts_decide_mode((A, B), BTS, &[], &t, &th, 1.0).unwrap();
        assert_eq!(d.mode, Mode::D2dDirect);
        assert_eq!(d.relay, None);
    }

    #[test]
    fn decide_relayed() {
        let th = thresholds();
        let hop = th.relay_hop_rssi_dbm + 3.0;
        let t = table(&[(1, 2, th.direct_rssi_dbm - 20.0), (1, 3, hop), (2, 3, hop)]);
        let d = bts_decide_mode((A, B), BTS, &[DeviceId(3)], &t, &th, 1.0).unwrap();
        assert_eq!(d.mode, Mode::D2dRelayed);
        assert_eq!(d.relay, Some(DeviceId(3)));
    }

    #[test]
    fn decide_cellular_and_errors() {
        let th = thresholds();
        let weak = th.direct_rssi_dbm - 30.0;
        let t = table(&[(1, 2, weak), (1, 3, weak), (2, 3, weak), (0, 1, -60.0), (0, 2, -60.0)]);
        let d = bts_decide_mode((A, B), BTS, &[DeviceId(3)], &t, &th, 1.0).unwrap();
        assert_eq!(d.mode, Mode::CellularFallback);

        let t = table(&[(1, 2, weak), (0, 1, -60.0), (0, 2, -95.0)]);
        assert_eq!(bts_decide_mode((A, B), BTS, &[], &t, &th, 1.0), Err(ProtocolError::Unreachable(A, B)));
        let t = table(&[(0, 1, -60.0), (0, 2, -60.0)]);
        assert_eq!(bts_decide_mode((A, B), BTS, &[], &t, &th, 1.0), Err(ProtocolError::InsufficientData(A, B)));
    }

    #[test]
    fn under_sampled_reports_are_ignored() {
        let th = thresholds();
        let mut t = LinkTable::new();
        t.insert(A, B, -40.0, 4, 0.0);
        t.insert(BTS, A, -60.0, 5, 0.0);
        t.insert(BTS, B, -60.0, 5, 0.0);
        assert!(matches!(bts_decide_mode((A, B), BTS, &[], &t, &th, 0.0), Err(ProtocolError::InsufficientData(..))));
    }

    #[test]
    fn bts_registers_and_grants() {
        let mut bts = BtsMachine::new(BTS, 5);
        for ue in [A, B, DeviceId(3)] {
            let out = bts.handle(0.0, Message::control(MessageKind::Register, ue, BTS, 0), Some(-60.0));
            assert_eq!(out[0].msg.kind, MessageKind::RegisterAck);
        }
        let th = thresholds();
        let mut report = |src: DeviceId, peer: DeviceId, rssi: f64| {
            let mut m = Message::control(MessageKind::RssiReport, src, BTS, 0);
            m.carried_rssi = Some(rssi);
            m.pair = Some(link_key(src, peer));
            bts.handle(0.5, m, Some(-60.0));
        };
        for _ in 0..5 {
            report(A, BTS, -60.0);
            report(B, BTS, -60.0);
            report(DeviceId(3), BTS, -60.0);
        }
        report(A, B, -100.0);
        report(A, DeviceId(3), -60.0);
        report(B, DeviceId(3), -61.0);
        let (outcomes, assigns) = bts.decide_pairs(1.0, &[(A, B)], &[DeviceId(3)], &th);
        match &outcomes[0] {
            PairOutcome::Decided(d) => assert_eq!(d.relay, Some(DeviceId(3))),
            other => panic!("{other:?}"),
        }
        assert_eq!(assigns.len(), 2);
        let mut req = Message::control(MessageKind::RelayRequest, A, BTS, 0);
        req.pair = Some((A, B));
        let out = bts.handle(1.1, req, Some(-60.0));
        assert_eq!(out[0].msg.kind, MessageKind::RelayGrant);
        assert_eq!(out[0].next_hop, DeviceId(3));
    }

    fn brute_force(
        pair: (DeviceId, DeviceId),
        candidates: &[DeviceId],
        t: &LinkTable,
        th: &Thresholds,
    ) -> Option<DeviceId> {
        let mut scored: Vec<(f64, DeviceId)> = candidates
            .iter()
            .filter_map(|&r| {
                let ar = t.rssi(pair.0, r, th.beacon_min_samples)?;
                let rb = t.rssi(r, pair.1, th.beacon_min_samples)?;
                Some((ar.min(rb), r))
            })
            .filter(|(s, _)| *s >= th.relay_hop_rssi_dbm)
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored.first().map(|(_, r)| *r)
    }

    proptest! {
        #[test]
        fn decisions_are_sound_and_monotone(
            ab in -110.0..-40.0f64,
            hops in prop::collection::vec((-110.0..-40.0f64, -110.0..-40.0f64), 0..6),
            bump in 0.0..30.0f64,
        ) {
            let th = thresholds();
            let mut t = table(&[(0, 1, -60.0), (0, 2, -60.0)]);
            t.insert(A, B, ab, 5, 0.0);
            let cands: Vec<DeviceId> = (0..hops.len()).map(|i| DeviceId(10 + i as u32)).collect();
            for (c, (x, y)) in cands.iter().zip(&hops) {
                t.insert(A, *c, *x, 5, 0.0);
                t.insert(*c, B, *y, 5, 0.0);
            }
            let d = bts_decide_mode((A, B), BTS, &cands, &t, &th, 0.0).unwrap();
            match d.mode {
                Mode::D2dDirect => prop_assert!(d2d_feasible(ab, &th)),
                Mode::D2dRelayed => {
                    let r = d.relay.unwrap();
                    prop_assert!(r != A && r != B);
                    prop_assert!(t.rssi(A, r, 5).unwrap() >= th.relay_hop_rssi_dbm);
                    prop_assert!(t.rssi(r, B, 5).unwrap() >= th.relay_hop_rssi_dbm);
                }
                Mode::CellularFallback => {
                    let raised = Thresholds { direct_rssi_dbm: th.direct_rssi_dbm + bump, ..th };
                    let d2 = bts_decide_mode((A, B), BTS, &cands, &t, &raised, 0.0).unwrap();
                    prop_assert_ne!(d2.mode, Mode::D2dDirect);
                }
            }
            prop_assert_eq!(d, bts_decide_mode((A, B), BTS, &cands, &t, &th, 0.0).unwrap());
        }

        #[test]
        fn select_relay_matches_brute_force(
            hops in prop::collection::vec((-90.0..-40.0f64, -90.0..-40.0f64, any::<bool>()), 0..=8),
        ) {
            let th = thresholds();
            let mut t = LinkTable::new();
            let cands: Vec<DeviceId> = (0..hops.len()).map(|i| DeviceId(10 + i as u32)).collect();
            for (c, (x, y, present)) in cands.iter().zip(&hops) {
                if *present {
                    t.insert(A, *c, x.round(), 5, 0.0);
                }
                t.insert(*c, B, y.round(), 5, 0.0);
            }
            for mask in 0u32..(1 << cands.len()) {
                let subset: Vec<DeviceId> = cands
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, c)| *c)
                    .collect();
                prop_assert_eq!(select_relay((A, B), &subset, &t, &th), brute_force((A, B), &subset, &t, &th));
            }
        }
    }
}
