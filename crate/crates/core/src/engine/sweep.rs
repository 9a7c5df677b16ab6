//! Fixed-distance packet trials.
//!
//! Each packet draws one shadowed RSSI sample per transmission attempt and
//! succeeds with the logistic probability of that sample. Every distance uses
//! its own random substream, so results do not depend on list order beyond
//! the index.

use crate::channel::{LinkKind, ProfileSet, RadioProfile};
use crate::rng::RandomStream;
use crate::scenario::Scenario;

use super::{EngineError, TrialStats};

const SWEEP_STREAM: u64 = 1 << 40;
const RELAY_SWEEP_STREAM: u64 = 2 << 40;

fn link_index(link: LinkKind) -> u64 {
    match link {
        LinkKind::BtsUe => 0,
        LinkKind::D2d => 1,
    }
}

fn attempt(profile: &RadioProfile, d: f64, rng: &mut RandomStream, rssi: &mut Vec<f64>) -> Result<bool, EngineError> {
    let s = profile.sample_rssi(d, rng)?;
    rssi.push(s.value_dbm);
    Ok(rng.uniform() < profile.packet_success_prob(s.value_dbm))
}

/// Single-hop trial of `packets_per_trial` packets at each distance.
pub fn run_range_sweep(
    link: LinkKind,
    distances: &[f64],
    scenario: &Scenario,
    profiles: &ProfileSet,
) -> Result<Vec<TrialStats>, EngineError> {
    let profile = profiles.get(link);
    profile.validate()?;
    for (index, &d) in distances.iter().enumerate() {
        profile.mean_rssi(d).map_err(|source| EngineError::BadDistance { index, distance_m: d, source })?;
    }
    let packets = scenario.trial.packets_per_trial as u64;
    distances
        .iter()
        .enumerate()
        .map(|(index, &d)| {
            let stream = SWEEP_STREAM | (link_index(link) << 32) | index as u64;
            let mut rng = RandomStream::substream(scenario.trial.seed, stream);
            let mut rssi = Vec::with_capacity(packets as usize);
            let mut received = 0;
            for _ in 0..packets {
                if attempt(profile, d, &mut rng, &mut rssi)? {
                    received += 1;
                }
            }
            TrialStats::new(d, packets, received, rssi)
        })
        .collect()
}

/// D2D trial over two equal hops with a midpoint relay; every hop gets
/// `retries_per_hop` retransmissions.
pub fn run_relayed_sweep(
    distances: &[f64],
    scenario: &Scenario,
    profiles: &ProfileSet,
) -> Result<Vec<TrialStats>, EngineError> {
    let profile = profiles.get(LinkKind::D2d);
    profile.validate()?;
    for (index, &d) in distances.iter().enumerate() {
        profile.mean_rssi(d / 2.0).map_err(|source| EngineError::BadDistance { index, distance_m: d, source })?;
    }
    let packets = scenario.trial.packets_per_trial as u64;
    let attempts = scenario.trial.retries_per_hop + 1;
    distances
        .iter()
        .enumerate()
        .map(|(index, &d)| {
            let mut rng = RandomStream::substream(scenario.trial.seed, RELAY_SWEEP_STREAM | index as u64);
            let mut rssi = Vec::new();
            let mut received = 0;
            for _ in 0..packets {
                let mut delivered = true;
                for _hop in 0..2 {
                    let mut ok = false;
                    for _ in 0..attempts {
                        if attempt(profile, d / 2.0, &mut rng, &mut rssi)? {
                            ok = true;
                            break;
                        }
                    }
                    if !ok {
                        delivered = false;
                        break;
                    }
                }
                if delivered {
                    received += 1;
                }
            }
            TrialStats::new(d, packets, received, rssi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{calibrate, default_anchors, ProfileTemplates};
    use crate::protocol::DeviceId;
    use crate::scenario::{NodeKind, NodeSpec};

    fn scenario(packets: u32) -> Scenario {
        let mut s = Scenario::with_nodes(vec![NodeSpec { id: DeviceId(0), kind: NodeKind::Bts, x: 0.0, y: 0.0 }]);
        s.trial.packets_per_trial = packets;
        s
    }

    fn flat_certain() -> ProfileSet {
        let mut t = ProfileTemplates::default();
        for link in LinkKind::ALL {
            let p = t.get_mut(link);
            p.shadow_sigma0_db = 0.0;
            p.shadow_sigma_slope_db = 0.0;
            p.success_midpoint_dbm = Some(-400.0);
            p.success_slope_per_db = Some(1.0);
        }
        t.complete().unwrap()
    }

    #[test]
    fn degenerate_channel_delivers_everything() {
        let s = scenario(50);
        let stats = run_range_sweep(LinkKind::BtsUe, &[10.0, 50.0, 150.0], &s, &flat_certain()).unwrap();
        assert_eq!(stats.len(), 3);
        for t in &stats {
            assert_eq!(t.efficiency_pct, 100.0);
            assert_eq!(t.rssi_variance(), 0.0);
        }
        let relayed = run_relayed_sweep(&[60.0], &s, &flat_certain()).unwrap();
        assert_eq!(relayed[0].efficiency_pct, 100.0);
    }

    #[test]
    fn bad_distance_is_named() {
        let s = scenario(5);
        let err = run_range_sweep(LinkKind::D2d, &[10.0, 0.5], &s, &flat_certain()).unwrap_err();
        assert!(matches!(err, EngineError::BadDistance { index: 1, .. }));
    }

    #[test]
    fn sweep_is_reproducible() {
        let p = calibrate(&default_anchors(), &ProfileTemplates::default(), 1).unwrap();
        let s = scenario(500);
        let a = run_range_sweep(LinkKind::D2d, &[20.0, 30.0], &s, &p).unwrap();
        let b = run_range_sweep(LinkKind::D2d, &[20.0, 30.0], &s, &p).unwrap();
        assert_eq!(a, b);
        let mut other = s.clone();
        other.trial.seed = 2;
        assert_ne!(a, run_range_sweep(LinkKind::D2d, &[20.0, 30.0], &other, &p).unwrap());
    }
}
