//! Two-state power model and battery accounting.
//!
//! A device draws a constant power with the D2D radio on and a lower one with
//! it off. The defaults are 385.2 mW and 234 mW from a 5.3 Wh, 3.6 V cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::UeState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("power draw must be positive, got {0} W")]
    NonPositiveDraw(f64),
    #[error("D2D-on draw {on} W must exceed D2D-off draw {off} W")]
    DrawOrdering { on: f64, off: f64 },
    #[error("battery capacity must be positive, got {0} Wh")]
    NonPositiveCapacity(f64),
    #[error("remaining energy {remaining} Wh outside [0, {capacity}]")]
    RemainingOutOfRange { remaining: f64, capacity: f64 },
    #[error("duty fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("segment duration {0} s is negative")]
    NegativeDuration(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerState {
    D2dOn,
    D2dOff,
}

impl PowerState {
    /// UEs holding a D2D role have the radio on; everything else is off.
    pub fn for_ue_state(state: &UeState) -> Self {
        match state {
            UeState::D2dDirect { .. } | UeState::D2dRelayed { .. } | UeState::RelayDuty { .. } => PowerState::D2dOn,
            UeState::Idle | UeState::Registered | UeState::Cellular { .. } => PowerState::D2dOff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerModel {
    pub draw_d2d_on_w: f64,
    pub draw_d2d_off_w: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self { draw_d2d_on_w: 0.3852, draw_d2d_off_w: 0.234 }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.draw_d2d_off_w > 0.0) {
            return Err(EnergyError::NonPositiveDraw(self.draw_d2d_off_w));
        }
        if !(self.draw_d2d_on_w > self.draw_d2d_off_w) {
            return Err(EnergyError::DrawOrdering { on: self.draw_d2d_on_w, off: self.draw_d2d_off_w });
        }
        Ok(())
    }

    pub fn draw(&self, state: PowerState) -> f64 {
        match state {
            PowerState::D2dOn => self.draw_d2d_on_w,
            PowerState::D2dOff => self.draw_d2d_off_w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub capacity_wh: f64,
    pub nominal_voltage_v: f64,
    pub remaining_wh: f64,
}

impl Default for Battery {
    fn default() -> Self {
        Self::full(5.3, 3.6)
    }
}

impl Battery {
    pub fn full(capacity_wh: f64, nominal_voltage_v: f64) -> Self {
        Self { capacity_wh, nominal_voltage_v, remaining_wh: capacity_wh }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.capacity_wh > 0.0) {
            return Err(EnergyError::NonPositiveCapacity(self.capacity_wh));
        }
        if !(0.0..=self.capacity_wh).contains(&self.remaining_wh) {
            return Err(EnergyError::RemainingOutOfRange { remaining: self.remaining_wh, capacity: self.capacity_wh });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSegment {
    pub state: PowerState,
    pub duration_s: f64,
}

/// Consecutive power-state segments of one node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub segments: Vec<PowerSegment>,
}

impl PowerTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: PowerState, duration_s: f64) -> Result<(), EnergyError> {
        if !(duration_s >= 0.0) {
            return Err(EnergyError::NegativeDuration(duration_s));
        }
        match self.segments.last_mut() {
            Some(last) if last.state == state => last.duration_s += duration_s,
            _ => self.segments.push(PowerSegment { state, duration_s }),
        }
        Ok(())
    }

    pub fn concat(&self, other: &PowerTrace) -> PowerTrace {
        let mut out = self.clone();
        for s in &other.segments {
            // Durations were already checked on the way in.
            let _ = out.push(s.state, s.duration_s);
        }
        out
    }

    pub fn time_in(&self, state: PowerState) -> f64 {
        self.segments.iter().filter(|s| s.state == state).map(|s| s.duration_s).sum()
    }

    pub fn energy_wh(&self, model: &PowerModel) -> f64 {
        self.segments.iter().map(|s| model.draw(s.state) * s.duration_s / 3600.0).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsumeOutcome {
    pub battery: Battery,
    pub depleted: bool,
}

pub fn lifetime_hours(battery: &Battery, draw_w: f64) -> Result<f64, EnergyError> {
    if !(draw_w > 0.0) {
        return Err(EnergyError::NonPositiveDraw(draw_w));
    }
    Ok(battery.capacity_wh / draw_w)
}

/// Drain `battery` by the energy in `trace`, flooring at zero.
pub fn consume(trace: &PowerTrace, model: &PowerModel, battery: &Battery) -> ConsumeOutcome {
    let used = trace.energy_wh(model);
    let remaining = battery.remaining_wh - used;
    let depleted = remaining <= 0.0;
    ConsumeOutcome { battery: Battery { remaining_wh: remaining.max(0.0), ..*battery }, depleted }
}

pub fn duty_cycle_lifetime(model: &PowerModel, battery: &Battery, fraction_d2d_on: f64) -> Result<f64, EnergyError> {
    if !(0.0..=1.0).contains(&fraction_d2d_on) {
        return Err(EnergyError::InvalidFraction(fraction_d2d_on));
    }
    let draw = fraction_d2d_on * model.draw_d2d_on_w + (1.0 - fraction_d2d_on) * model.draw_d2d_off_w;
    lifetime_hours(battery, draw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_lifetimes() {
        let b = Battery::default();
        let on = lifetime_hours(&b, 0.3852).unwrap();
        let off = lifetime_hours(&b, 0.234).unwrap();
        assert!((on - 13.7591).abs() < 1e-4);
        assert!((off - 22.6496).abs() < 1e-4);
        assert!(((on - 13.75) / 13.75).abs() < 1e-3);
        assert!(((off - 22.64) / 22.64).abs() < 1e-3);
        assert_eq!(lifetime_hours(&b, 5.3).unwrap(), 1.0);
        assert!(lifetime_hours(&b, 0.0).is_err());
        assert!(lifetime_hours(&b, -1.0).is_err());
    }

    #[test]
    fn consume_cases() {
        let m = PowerModel::default();
        let b = Battery::default();
        let out = consume(&PowerTrace::new(), &m, &b);
        assert_eq!(out.battery, b);
        assert!(!out.depleted);

        let mut t = PowerTrace::new();
        t.push(PowerState::D2dOn, 3600.0).unwrap();
        let out = consume(&t, &m, &b);
        assert!((out.battery.remaining_wh - 4.9148).abs() < 1e-12);
        assert!(!out.depleted);

        let mut t = PowerTrace::new();
        t.push(PowerState::D2dOn, 13.76 * 3600.0).unwrap();
        let out = consume(&t, &m, &b);
        assert_eq!(out.battery.remaining_wh, 0.0);
        assert!(out.depleted);
    }

    #[test]
    fn duty_cycle_cases() {
        let m = PowerModel::default();
        let b = Battery::default();
        assert!((duty_cycle_lifetime(&m, &b, 1.0).unwrap() - 13.7591).abs() < 1e-4);
        assert!((duty_cycle_lifetime(&m, &b, 0.0).unwrap() - 22.6496).abs() < 1e-4);
        let half = duty_cycle_lifetime(&m, &b, 0.5).unwrap();
        assert!((half - 5.3 / 0.3096).abs() < 1e-9);
        assert!((half - 17.12).abs() < 0.01);
        assert!(duty_cycle_lifetime(&m, &b, 1.5).is_err());
    }

    #[test]
    fn validation() {
        assert!(PowerModel::default().validate().is_ok());
        assert!(PowerModel { draw_d2d_on_w: 0.2, draw_d2d_off_w: 0.3 }.validate().is_err());
        assert!(PowerModel { draw_d2d_on_w: 0.2, draw_d2d_off_w: 0.0 }.validate().is_err());
        assert!(Battery::full(0.0, 3.6).validate().is_err());
        let mut t = PowerTrace::new();
        assert!(t.push(PowerState::D2dOff, -1.0).is_err());
    }

    #[test]
    fn mode_mapping() {
        use crate::protocol::DeviceId;
        let d = DeviceId(1);
        assert_eq!(PowerState::for_ue_state(&UeState::D2dDirect { peer: d }), PowerState::D2dOn);
        assert_eq!(PowerState::for_ue_state(&UeState::RelayDuty { pair: (d, DeviceId(2)) }), PowerState::D2dOn);
        assert_eq!(PowerState::for_ue_state(&UeState::Cellular { peer: d }), PowerState::D2dOff);
        assert_eq!(PowerState::for_ue_state(&UeState::Registered), PowerState::D2dOff);
    }

    fn arb_trace() -> impl Strategy<Value = PowerTrace> {
        prop::collection::vec((any::<bool>(), 0.0..10_000.0f64), 0..12).prop_map(|v| {
            let mut t = PowerTrace::new();
            for (on, d) in v {
                t.push(if on { PowerState::D2dOn } else { PowerState::D2dOff }, d).unwrap();
            }
            t
        })
    }

    proptest! {
        #[test]
        fn consume_is_additive(a in arb_trace(), b in arb_trace()) {
            let m = PowerModel::default();
            let start = Battery::full(1000.0, 3.6);
            let step = consume(&b, &m, &consume(&a, &m, &start).battery).battery;
            let whole = consume(&a.concat(&b), &m, &start).battery;
            prop_assert!((step.remaining_wh - whole.remaining_wh).abs() < 1e-9);
        }

        #[test]
        fn duty_lifetime_bounded_and_monotone(f in 0.0..1.0f64, g in 0.0..1.0f64) {
            let m = PowerModel::default();
            let b = Battery::default();
            let lf = duty_cycle_lifetime(&m, &b, f).unwrap();
            let on = lifetime_hours(&b, m.draw_d2d_on_w).unwrap();
            let off = lifetime_hours(&b, m.draw_d2d_off_w).unwrap();
            prop_assert!(lf >= on - 1e-12 && lf <= off + 1e-12);
            if f < g {
                prop_assert!(lf > duty_cycle_lifetime(&m, &b, g).unwrap());
            }
        }

        #[test]
        fn lifetime_decreasing_in_draw(a in 0.01..10.0f64, b in 0.01..10.0f64) {
            prop_assume!(a < b);
            let bat = Battery::default();
            prop_assert!(lifetime_hours(&bat, a).unwrap() > lifetime_hours(&bat, b).unwrap());
        }
    }
}
