//! Statistical radio channel.
//!
//! Mean RSSI follows the log-distance law
//! `rssi(d) = tx - pl0 - 10 n log10(d / d0)`, with zero-mean Gaussian
//! shadowing whose standard deviation grows linearly in log-distance. Each
//! received frame succeeds with a logistic probability in its RSSI.
//!
//! "Expected success" at a distance is that logistic averaged over the
//! shadowing distribution, which is what a Monte-Carlo trial of sampled
//! packets converges to. Ranges and calibration are defined against it.

mod calibrate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RandomStream;

pub use calibrate::{calibrate, calibrate_link, default_anchors};

/// Relative tolerance on efficiency (as a fraction) used to accept a
/// calibrated anchor.
pub const CALIBRATION_TOLERANCE: f64 = 1e-3;
/// Iteration cap for each bisection in the calibration solve.
pub const CALIBRATION_MAX_ITER: usize = 200;
/// Bracket width at which [`RadioProfile::range_at_threshold`] stops.
pub const RANGE_BRACKET_M: f64 = 0.01;

/// Half-width, in standard deviations, of the shadowing quadrature.
const QUAD_HALF_WIDTH: f64 = 8.0;
/// Number of Simpson intervals for the shadowing quadrature (even).
const QUAD_INTERVALS: usize = 1600;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("distance {distance_m} m is outside the model domain (reference distance {ref_distance_m} m)")]
    DistanceOutOfDomain { distance_m: f64, ref_distance_m: f64 },
    #[error("rssi {rssi_dbm} dBm exceeds the reference-distance mean {max_dbm} dBm")]
    RssiOutOfDomain { rssi_dbm: f64, max_dbm: f64 },
    #[error("invalid radio profile: {0}")]
    InvalidProfile(String),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("hop list is empty")]
    EmptyPath,
    #[error("threshold {0}% must lie strictly between 0 and 100")]
    InvalidThreshold(f64),
    #[error("expected success is already below {threshold_pct}% at the reference distance")]
    NoSolution { threshold_pct: f64 },
    #[error("calibration failed at anchor {anchor}: {reason}")]
    Calibration { anchor: CalibrationAnchor, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkKind {
    BtsUe,
    D2d,
}

impl LinkKind {
    pub const ALL: [LinkKind; 2] = [LinkKind::BtsUe, LinkKind::D2d];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::BtsUe => "BtsUe",
            LinkKind::D2d => "D2d",
        }
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Composition {
    SingleHop,
    /// Two equal hops with the relay at the midpoint. Each hop is retried.
    TwoHopMidpointRelay,
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Composition::SingleHop => f.write_str("SingleHop"),
            Composition::TwoHopMidpointRelay => f.write_str("TwoHopMidpointRelay"),
        }
    }
}

/// Channel parameters for one link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioProfile {
    pub link_kind: LinkKind,
    pub tx_power_dbm: f64,
    pub pl0_db: f64,
    pub ref_distance_m: f64,
    pub path_loss_exponent: f64,
    pub shadow_sigma0_db: f64,
    pub shadow_sigma_slope_db: f64,
    pub success_midpoint_dbm: f64,
    pub success_slope_per_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiSample {
    pub value_dbm: f64,
    pub link_kind: LinkKind,
    /// Ground truth, kept for bookkeeping only.
    pub distance_m: f64,
}

impl RadioProfile {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let finite = [
            self.tx_power_dbm,
            self.pl0_db,
            self.ref_distance_m,
            self.path_loss_exponent,
            self.shadow_sigma0_db,
            self.shadow_sigma_slope_db,
            self.success_midpoint_dbm,
            self.success_slope_per_db,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(ChannelError::InvalidProfile("all parameters must be finite".into()));
        }
        if self.ref_distance_m <= 0.0 {
            return Err(ChannelError::InvalidProfile("ref_distance_m must be > 0".into()));
        }
        if self.path_loss_exponent < 2.0 {
            return Err(ChannelError::InvalidProfile("path_loss_exponent must be >= 2".into()));
        }
        if self.shadow_sigma0_db < 0.0 || self.shadow_sigma_slope_db < 0.0 {
            return Err(ChannelError::InvalidProfile("shadowing parameters must be >= 0".into()));
        }
        if self.success_slope_per_db <= 0.0 {
            return Err(ChannelError::InvalidProfile("success_slope_per_db must be > 0".into()));
        }
        Ok(())
    }

    fn check_distance(&self, distance_m: f64) -> Result<f64, ChannelError> {
        if !distance_m.is_finite() || distance_m <= 0.0 || distance_m < self.ref_distance_m {
            return Err(ChannelError::DistanceOutOfDomain { distance_m, ref_distance_m: self.ref_distance_m });
        }
        Ok((distance_m / self.ref_distance_m).log10())
    }

    /// Mean RSSI at the reference distance.
    pub fn rssi_at_reference(&self) -> f64 {
        self.tx_power_dbm - self.pl0_db
    }

    pub fn mean_rssi(&self, distance_m: f64) -> Result<f64, ChannelError> {
        let decades = self.check_distance(distance_m)?;
        Ok(self.rssi_at_reference() - 10.0 * self.path_loss_exponent * decades)
    }

    pub fn shadow_sigma(&self, distance_m: f64) -> Result<f64, ChannelError> {
        let decades = self.check_distance(distance_m)?;
        Ok(self.shadow_sigma0_db + self.shadow_sigma_slope_db * decades)
    }

    pub fn sample_rssi(&self, distance_m: f64, rng: &mut RandomStream) -> Result<RssiSample, ChannelError> {
        let mean = self.mean_rssi(distance_m)?;
        let sigma = self.shadow_sigma(distance_m)?;
        // Draw even when sigma is zero so the stream position does not depend
        // on the profile.
        let z = rng.standard_normal();
        Ok(RssiSample { value_dbm: mean + sigma * z, link_kind: self.link_kind, distance_m })
    }

    /// Inverse of [`mean_rssi`](Self::mean_rssi).
    pub fn estimate_distance(&self, rssi_dbm: f64) -> Result<f64, ChannelError> {
        let max_dbm = self.rssi_at_reference();
        if !rssi_dbm.is_finite() || rssi_dbm > max_dbm {
            return Err(ChannelError::RssiOutOfDomain { rssi_dbm, max_dbm });
        }
        let exponent = (max_dbm - rssi_dbm) / (10.0 * self.path_loss_exponent);
        Ok(self.ref_distance_m * 10f64.powf(exponent))
    }

    pub fn packet_success_prob(&self, rssi_dbm: f64) -> f64 {
        logistic(self.success_slope_per_db * (rssi_dbm - self.success_midpoint_dbm))
    }

    /// RSSI at which the logistic equals `p`.
    pub fn rssi_for_success(&self, p: f64) -> Result<f64, ChannelError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ChannelError::InvalidProbability(p));
        }
        Ok(self.success_midpoint_dbm + (p / (1.0 - p)).ln() / self.success_slope_per_db)
    }

    /// Success probability of one frame at `distance_m`, averaged over the
    /// shadowing distribution.
    pub fn expected_success(&self, distance_m: f64) -> Result<f64, ChannelError> {
        let mean = self.mean_rssi(distance_m)?;
        let sigma = self.shadow_sigma(distance_m)?;
        Ok(self.marginal_success(mean, sigma))
    }

    fn marginal_success(&self, mean: f64, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return self.packet_success_prob(mean);
        }
        // Composite Simpson over z in [-W, W] against the standard normal pdf.
        let h = 2.0 * QUAD_HALF_WIDTH / QUAD_INTERVALS as f64;
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = 0.0;
        for i in 0..=QUAD_INTERVALS {
            let z = -QUAD_HALF_WIDTH + i as f64 * h;
            let w = if i == 0 || i == QUAD_INTERVALS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * norm * (-0.5 * z * z).exp() * self.packet_success_prob(mean + sigma * z);
        }
        (acc * h / 3.0).clamp(0.0, 1.0)
    }

    /// Expected end-to-end success over `distance_m` for a composition.
    /// `retries_per_hop` applies to the relayed hops only; a single direct
    /// hop is one attempt.
    pub fn path_success(
        &self,
        composition: Composition,
        distance_m: f64,
        retries_per_hop: u32,
    ) -> Result<f64, ChannelError> {
        match composition {
            Composition::SingleHop => self.expected_success(distance_m),
            Composition::TwoHopMidpointRelay => {
                let hop = self.expected_success(distance_m / 2.0)?;
                end_to_end_success(&[hop, hop], retries_per_hop)
            }
        }
    }

    /// Distance at which the expected path success crosses `threshold_pct`.
    pub fn range_at_threshold(
        &self,
        composition: Composition,
        threshold_pct: f64,
        retries_per_hop: u32,
    ) -> Result<f64, ChannelError> {
        if !(threshold_pct > 0.0 && threshold_pct < 100.0) {
            return Err(ChannelError::InvalidThreshold(threshold_pct));
        }
        let target = threshold_pct / 100.0;
        let min_d = match composition {
            Composition::SingleHop => self.ref_distance_m,
            Composition::TwoHopMidpointRelay => 2.0 * self.ref_distance_m,
        };
        let success = |d: f64| self.path_success(composition, d, retries_per_hop);
        if success(min_d)? < target {
            return Err(ChannelError::NoSolution { threshold_pct });
        }
        let mut lo = min_d;
        let mut hi = min_d * 2.0;
        while success(hi)? >= target {
            lo = hi;
            hi *= 2.0;
            if hi > min_d * 1e9 {
                return Err(ChannelError::NoSolution { threshold_pct });
            }
        }
        while hi - lo >= RANGE_BRACKET_M {
            let mid = 0.5 * (lo + hi);
            if success(mid)? >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Numerically stable logistic.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Product over hops of the per-hop success with `retries_per_hop`
/// retransmissions, `1 - (1 - p)^(retries + 1)`.
pub fn end_to_end_success(hop_probs: &[f64], retries_per_hop: u32) -> Result<f64, ChannelError> {
    if hop_probs.is_empty() {
        return Err(ChannelError::EmptyPath);
    }
    hop_probs.iter().try_fold(1.0, |acc, &p| {
        if !(0.0..=1.0).contains(&p) {
            return Err(ChannelError::InvalidProbability(p));
        }
        let fail = (1.0 - p).powi(retries_per_hop as i32 + 1);
        Ok(acc * (1.0 - fail))
    })
}

/// Calibration inputs for one link class. Success parameters left as `None`
/// are solved for; a success slope must be given when the class has only
/// one anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTemplate {
    pub tx_power_dbm: f64,
    pub pl0_db: f64,
    pub ref_distance_m: f64,
    pub path_loss_exponent: f64,
    pub shadow_sigma0_db: f64,
    pub shadow_sigma_slope_db: f64,
    pub success_midpoint_dbm: Option<f64>,
    pub success_slope_per_db: Option<f64>,
}

impl ProfileTemplate {
    /// Defaults for the BTS-UE radio: 18 dBm transmitter, 40 dB loss at 1 m,
    /// n = 3, shadowing 1 dB + 2 dB/decade, logistic slope fixed at 0.4/dB.
    pub fn default_bts_ue() -> Self {
        Self {
            tx_power_dbm: 18.0,
            pl0_db: 40.0,
            ref_distance_m: 1.0,
            path_loss_exponent: 3.0,
            shadow_sigma0_db: 1.0,
            shadow_sigma_slope_db: 2.0,
            success_midpoint_dbm: None,
            success_slope_per_db: Some(0.4),
        }
    }

    /// Defaults for the short-range D2D radio: 0 dBm, 40 dB at 1 m, n = 3,
    /// shadowing 0.25 dB + 0.1 dB/decade. Both success parameters are solved
    /// from the single-hop and relayed anchors.
    pub fn default_d2d() -> Self {
        Self {
            tx_power_dbm: 0.0,
            pl0_db: 40.0,
            ref_distance_m: 1.0,
            path_loss_exponent: 3.0,
            shadow_sigma0_db: 0.25,
            shadow_sigma_slope_db: 0.1,
            success_midpoint_dbm: None,
            success_slope_per_db: None,
        }
    }

    pub fn default_for(link: LinkKind) -> Self {
        match link {
            LinkKind::BtsUe => Self::default_bts_ue(),
            LinkKind::D2d => Self::default_d2d(),
        }
    }

    pub fn with_success(&self, link_kind: LinkKind, midpoint: f64, slope: f64) -> RadioProfile {
        RadioProfile {
            link_kind,
            tx_power_dbm: self.tx_power_dbm,
            pl0_db: self.pl0_db,
            ref_distance_m: self.ref_distance_m,
            path_loss_exponent: self.path_loss_exponent,
            shadow_sigma0_db: self.shadow_sigma0_db,
            shadow_sigma_slope_db: self.shadow_sigma_slope_db,
            success_midpoint_dbm: midpoint,
            success_slope_per_db: slope,
        }
    }

    /// The complete profile, if both success parameters are present.
    pub fn complete(&self, link_kind: LinkKind) -> Option<RadioProfile> {
        match (self.success_midpoint_dbm, self.success_slope_per_db) {
            (Some(m), Some(k)) => Some(self.with_success(link_kind, m, k)),
            _ => None,
        }
    }
}

impl From<RadioProfile> for ProfileTemplate {
    fn from(p: RadioProfile) -> Self {
        Self {
            tx_power_dbm: p.tx_power_dbm,
            pl0_db: p.pl0_db,
            ref_distance_m: p.ref_distance_m,
            path_loss_exponent: p.path_loss_exponent,
            shadow_sigma0_db: p.shadow_sigma0_db,
            shadow_sigma_slope_db: p.shadow_sigma_slope_db,
            success_midpoint_dbm: Some(p.success_midpoint_dbm),
            success_slope_per_db: Some(p.success_slope_per_db),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTemplates {
    pub bts_ue: ProfileTemplate,
    pub d2d: ProfileTemplate,
}

impl Default for ProfileTemplates {
    fn default() -> Self {
        Self { bts_ue: ProfileTemplate::default_bts_ue(), d2d: ProfileTemplate::default_d2d() }
    }
}

impl ProfileTemplates {
    pub fn get(&self, link: LinkKind) -> &ProfileTemplate {
        match link {
            LinkKind::BtsUe => &self.bts_ue,
            LinkKind::D2d => &self.d2d,
        }
    }

    pub fn get_mut(&mut self, link: LinkKind) -> &mut ProfileTemplate {
        match link {
            LinkKind::BtsUe => &mut self.bts_ue,
            LinkKind::D2d => &mut self.d2d,
        }
    }

    /// Complete profiles for both classes, if already calibrated.
    pub fn complete(&self) -> Option<ProfileSet> {
        Some(ProfileSet { bts_ue: self.bts_ue.complete(LinkKind::BtsUe)?, d2d: self.d2d.complete(LinkKind::D2d)? })
    }
}

/// One calibrated profile per link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSet {
    pub bts_ue: RadioProfile,
    pub d2d: RadioProfile,
}

impl ProfileSet {
    pub fn get(&self, link: LinkKind) -> &RadioProfile {
        match link {
            LinkKind::BtsUe => &self.bts_ue,
            LinkKind::D2d => &self.d2d,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for link in LinkKind::ALL {
            let p = self.get(link);
            if p.link_kind != link {
                return Err(ChannelError::InvalidProfile(format!(
                    "profile stored under {link} declares link_kind {}",
                    p.link_kind
                )));
            }
            p.validate()?;
        }
        Ok(())
    }
}

/// A (link, composition, distance, efficiency) point the calibrated model
/// must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationAnchor {
    pub link: LinkKind,
    pub composition: Composition,
    pub distance_m: f64,
    pub efficiency_pct: f64,
}

impl CalibrationAnchor {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let ok = self.distance_m.is_finite()
            && self.distance_m > 0.0
            && self.efficiency_pct > 0.0
            && self.efficiency_pct <= 100.0;
        if ok {
            Ok(())
        } else {
            Err(ChannelError::Calibration {
                anchor: *self,
                reason: "needs distance > 0 and efficiency in (0, 100]".into(),
            })
        }
    }
}

impl fmt::Display for CalibrationAnchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {} m, {}%)", self.link, self.composition, self.distance_m, self.efficiency_pct)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile() -> RadioProfile {
        RadioProfile {
            link_kind: LinkKind::BtsUe,
            tx_power_dbm: 18.0,
            pl0_db: 40.0,
            ref_distance_m: 1.0,
            path_loss_exponent: 3.0,
            shadow_sigma0_db: 1.0,
            shadow_sigma_slope_db: 2.0,
            success_midpoint_dbm: -88.0,
            success_slope_per_db: 0.5,
        }
    }

    #[test]
    fn mean_rssi_decades() {
        let p = profile();
        assert_eq!(p.mean_rssi(1.0).unwrap(), -22.0);
        assert!((p.mean_rssi(10.0).unwrap() + 52.0).abs() < 1e-12);
        assert!((p.mean_rssi(100.0).unwrap() + 82.0).abs() < 1e-12);
    }

    #[test]
    fn mean_rssi_rejects_short_distances() {
        let p = profile();
        assert!(matches!(p.mean_rssi(0.5), Err(ChannelError::DistanceOutOfDomain { .. })));
        assert!(p.mean_rssi(0.0).is_err());
        assert!(p.mean_rssi(-3.0).is_err());
        assert!(p.shadow_sigma(0.2).is_err());
    }

    #[test]
    fn shadow_sigma_cases() {
        let mut p = profile();
        p.shadow_sigma0_db = 1.0;
        p.shadow_sigma_slope_db = 2.0;
        assert_eq!(p.shadow_sigma(1.0).unwrap(), 1.0);
        assert!((p.shadow_sigma(100.0).unwrap() - 5.0).abs() < 1e-12);
        p.shadow_sigma_slope_db = 0.0;
        assert_eq!(p.shadow_sigma(37.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_variance_sample_is_mean() {
        let mut p = profile();
        p.shadow_sigma0_db = 0.0;
        p.shadow_sigma_slope_db = 0.0;
        let mut rng = RandomStream::new(3);
        let s = p.sample_rssi(40.0, &mut rng).unwrap();
        assert_eq!(s.value_dbm, p.mean_rssi(40.0).unwrap());
        assert_eq!(s.link_kind, LinkKind::BtsUe);
    }

    #[test]
    fn sample_statistics() {
        let p = profile();
        let mut rng = RandomStream::new(11);
        let stats = |d: f64, rng: &mut RandomStream| {
            let xs: Vec<f64> = (0..10_000).map(|_| p.sample_rssi(d, rng).unwrap().value_dbm).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            (mean, var)
        };
        let (m10, v10) = stats(10.0, &mut rng);
        let (m100, v100) = stats(100.0, &mut rng);
        let sigma100 = p.shadow_sigma(100.0).unwrap();
        assert!((m100 - p.mean_rssi(100.0).unwrap()).abs() < 3.0 * sigma100 / 100.0);
        assert!((m10 - p.mean_rssi(10.0).unwrap()).abs() < 3.0 * 3.0 / 100.0);
        assert!(v100 > v10);
    }

    #[test]
    fn estimate_distance_cases() {
        let p = profile();
        assert_eq!(p.estimate_distance(p.mean_rssi(1.0).unwrap()).unwrap(), 1.0);
        assert!((p.estimate_distance(-52.0).unwrap() - 10.0).abs() < 1e-9);
        // Closed form: 50 * 10^(-3/30).
        let noisy = p.mean_rssi(50.0).unwrap() + 3.0;
        let expect = 50.0 * 10f64.powf(-0.1);
        assert!((p.estimate_distance(noisy).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 39.716).abs() < 1e-3);
        assert!(matches!(p.estimate_distance(-21.0), Err(ChannelError::RssiOutOfDomain { .. })));
    }

    #[test]
    fn logistic_cases() {
        let p = profile();
        assert_eq!(p.packet_success_prob(-88.0), 0.5);
        let k = p.success_slope_per_db;
        assert!(p.packet_success_prob(-88.0 + 40.0 / k) > 1.0 - 1e-9);
        assert!(p.packet_success_prob(-88.0 - 40.0 / k) < 1e-9);
        let expect = 1.0 / (1.0 + (-2.0f64).exp());
        assert!((p.packet_success_prob(-84.0) - expect).abs() < 1e-12);
        assert!((expect - 0.8808).abs() < 1e-4);
        assert!(p.packet_success_prob(f64::INFINITY) == 1.0);
        assert!(p.packet_success_prob(f64::NEG_INFINITY) == 0.0);
    }

    #[test]
    fn rssi_for_success_inverts_logistic() {
        let p = profile();
        assert!((p.rssi_for_success(0.5).unwrap() + 88.0).abs() < 1e-12);
        assert!((p.rssi_for_success(0.9).unwrap() - (-88.0 + 9f64.ln() / 0.5)).abs() < 1e-12);
        assert!(p.rssi_for_success(1.0).is_err());
    }

    #[test]
    fn composition_cases() {
        assert_eq!(end_to_end_success(&[1.0, 1.0], 0).unwrap(), 1.0);
        assert!((end_to_end_success(&[0.9, 0.9], 0).unwrap() - 0.81).abs() < 1e-12);
        assert!((end_to_end_success(&[0.9, 0.9], 1).unwrap() - 0.9801).abs() < 1e-12);
        assert_eq!(end_to_end_success(&[], 1), Err(ChannelError::EmptyPath));
        assert!(end_to_end_success(&[1.2], 0).is_err());
    }

    #[test]
    fn zero_sigma_expected_success_is_logistic_of_mean() {
        let mut p = profile();
        p.shadow_sigma0_db = 0.0;
        p.shadow_sigma_slope_db = 0.0;
        let d = 60.0;
        assert_eq!(p.expected_success(d).unwrap(), p.packet_success_prob(p.mean_rssi(d).unwrap()));
    }

    #[test]
    fn range_threshold_errors() {
        let p = profile();
        assert!(matches!(
            p.range_at_threshold(Composition::SingleHop, 100.0, 0),
            Err(ChannelError::InvalidThreshold(_))
        ));
        let mut weak = p;
        weak.success_midpoint_dbm = 0.0;
        assert!(matches!(
            weak.range_at_threshold(Composition::SingleHop, 90.0, 0),
            Err(ChannelError::NoSolution { .. })
        ));
    }

    #[test]
    fn range_threshold_zero_sigma_closed_form() {
        let mut p = profile();
        p.shadow_sigma0_db = 0.0;
        p.shadow_sigma_slope_db = 0.0;
        let rssi = p.rssi_for_success(0.9).unwrap();
        let d = p.estimate_distance(rssi).unwrap();
        let r = p.range_at_threshold(Composition::SingleHop, 90.0, 0).unwrap();
        assert!((r - d).abs() < RANGE_BRACKET_M);
    }

    #[test]
    fn profile_validation() {
        let mut p = profile();
        assert!(p.validate().is_ok());
        p.path_loss_exponent = 1.5;
        assert!(p.validate().is_err());
        let mut p = profile();
        p.success_slope_per_db = 0.0;
        assert!(p.validate().is_err());
        let mut p = profile();
        p.ref_distance_m = 0.0;
        assert!(p.validate().is_err());
    }

    fn arb_profile() -> impl Strategy<Value = RadioProfile> {
        (
            -10.0..25.0f64,
            20.0..60.0f64,
            0.1..5.0f64,
            2.0..5.0f64,
            0.0..3.0f64,
            0.0..3.0f64,
            -110.0..-60.0f64,
            0.05..5.0f64,
        )
            .prop_map(|(tx, pl0, d0, n, s0, sl, m, k)| RadioProfile {
                link_kind: LinkKind::D2d,
                tx_power_dbm: tx,
                pl0_db: pl0,
                ref_distance_m: d0,
                path_loss_exponent: n,
                shadow_sigma0_db: s0,
                shadow_sigma_slope_db: sl,
                success_midpoint_dbm: m,
                success_slope_per_db: k,
            })
    }

    proptest! {
        #[test]
        fn monotone_in_distance(p in arb_profile(), a in 0.0..4.0f64, b in 0.0..4.0f64) {
            prop_assume!((a - b).abs() > 1e-6);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let d1 = p.ref_distance_m * 10f64.powf(lo);
            let d2 = p.ref_distance_m * 10f64.powf(hi);
            prop_assert!(p.mean_rssi(d1).unwrap() > p.mean_rssi(d2).unwrap());
            prop_assert!(p.shadow_sigma(d1).unwrap() <= p.shadow_sigma(d2).unwrap());
            for c in [Composition::SingleHop, Composition::TwoHopMidpointRelay] {
                let (d1, d2) = match c {
                    Composition::SingleHop => (d1, d2),
                    Composition::TwoHopMidpointRelay => (2.0 * d1, 2.0 * d2),
                };
                prop_assert!(p.path_success(c, d1, 1).unwrap() + 1e-12 >= p.path_success(c, d2, 1).unwrap());
            }
        }

        #[test]
        fn distance_round_trip(p in arb_profile(), e in 0.0..4.0f64) {
            let d = p.ref_distance_m * 10f64.powf(e);
            let back = p.estimate_distance(p.mean_rssi(d).unwrap()).unwrap();
            prop_assert!(((back - d) / d).abs() < 1e-6);
        }

        #[test]
        fn success_monotone_in_rssi(p in arb_profile(), a in -150.0..0.0f64, b in -150.0..0.0f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(p.packet_success_prob(lo) <= p.packet_success_prob(hi));
        }
    }
}
