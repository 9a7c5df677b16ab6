//! Anchor calibration of the logistic success curve.
//!
//! Path loss and shadowing stay fixed. Per link class the logistic midpoint
//! is solved by bisection so the first single-hop anchor is met exactly; when
//! a second anchor exists the logistic slope is solved by an outer bisection
//! (on log-slope) against it. Otherwise the slope comes from the template.

use super::{
    CalibrationAnchor, ChannelError, Composition, LinkKind, ProfileSet, ProfileTemplate, ProfileTemplates,
    RadioProfile, CALIBRATION_MAX_ITER, CALIBRATION_TOLERANCE,
};

const SLOPE_MIN: f64 = 1e-3;
const SLOPE_MAX: f64 = 100.0;

/// BTS-UE 120 m at 85%, D2D single hop 30 m at 90%, D2D relayed 62 m at 90%.
pub fn default_anchors() -> Vec<CalibrationAnchor> {
    vec![
        CalibrationAnchor {
            link: LinkKind::BtsUe,
            composition: Composition::SingleHop,
            distance_m: 120.0,
            efficiency_pct: 85.0,
        },
        CalibrationAnchor {
            link: LinkKind::D2d,
            composition: Composition::SingleHop,
            distance_m: 30.0,
            efficiency_pct: 90.0,
        },
        CalibrationAnchor {
            link: LinkKind::D2d,
            composition: Composition::TwoHopMidpointRelay,
            distance_m: 62.0,
            efficiency_pct: 90.0,
        },
    ]
}

/// Calibrate both link classes. A class without anchors keeps its template,
/// which must then already be complete.
pub fn calibrate(
    anchors: &[CalibrationAnchor],
    templates: &ProfileTemplates,
    retries_per_hop: u32,
) -> Result<ProfileSet, ChannelError> {
    let solve = |link: LinkKind| {
        let own: Vec<CalibrationAnchor> = anchors.iter().copied().filter(|a| a.link == link).collect();
        calibrate_link(link, &own, templates.get(link), retries_per_hop)
    };
    Ok(ProfileSet { bts_ue: solve(LinkKind::BtsUe)?, d2d: solve(LinkKind::D2d)? })
}

pub fn calibrate_link(
    link: LinkKind,
    anchors: &[CalibrationAnchor],
    template: &ProfileTemplate,
    retries_per_hop: u32,
) -> Result<RadioProfile, ChannelError> {
    for a in anchors {
        a.validate()?;
        if a.link != link {
            return Err(ChannelError::Calibration {
                anchor: *a,
                reason: format!("anchor belongs to {}, not {link}", a.link),
            });
        }
    }
    if anchors.is_empty() {
        let profile = template.complete(link).ok_or_else(|| {
            ChannelError::InvalidProfile(format!("{link}: no calibration anchors and no fixed success parameters"))
        })?;
        profile.validate()?;
        return Ok(profile);
    }

    let primary_idx = anchors.iter().position(|a| a.composition == Composition::SingleHop).ok_or_else(|| {
        ChannelError::Calibration { anchor: anchors[0], reason: format!("{link} needs at least one single-hop anchor") }
    })?;
    let primary = anchors[primary_idx];
    let secondary = anchors.iter().enumerate().find(|(i, _)| *i != primary_idx).map(|(_, a)| *a);

    // Shape checks up front; the success parameters are placeholders.
    template.with_success(link, 0.0, 1.0).validate()?;

    let profile = match secondary {
        None => {
            let slope = template.success_slope_per_db.ok_or_else(|| ChannelError::Calibration {
                anchor: primary,
                reason: "a single anchor needs a fixed success_slope_per_db".into(),
            })?;
            let midpoint = solve_midpoint(link, template, slope, &primary, retries_per_hop)?;
            template.with_success(link, midpoint, slope)
        }
        Some(second) => solve_slope(link, template, &primary, &second, retries_per_hop)?,
    };

    for a in anchors {
        let achieved = profile.path_success(a.composition, a.distance_m, retries_per_hop)?;
        if (achieved - a.efficiency_pct / 100.0).abs() > CALIBRATION_TOLERANCE {
            return Err(ChannelError::Calibration {
                anchor: *a,
                reason: format!("calibrated model gives {:.3}% instead of {}%", achieved * 100.0, a.efficiency_pct),
            });
        }
    }
    Ok(profile)
}

/// Midpoint such that `anchor` is met with the given slope. Success is
/// strictly decreasing in the midpoint.
fn solve_midpoint(
    link: LinkKind,
    template: &ProfileTemplate,
    slope: f64,
    anchor: &CalibrationAnchor,
    retries_per_hop: u32,
) -> Result<f64, ChannelError> {
    let target = anchor.efficiency_pct / 100.0;
    let probe = template.with_success(link, 0.0, slope);
    let hop_distance = match anchor.composition {
        Composition::SingleHop => anchor.distance_m,
        Composition::TwoHopMidpointRelay => anchor.distance_m / 2.0,
    };
    let fail = |reason: String| ChannelError::Calibration { anchor: *anchor, reason };
    let mean = probe.mean_rssi(hop_distance).map_err(|e| fail(e.to_string()))?;
    let sigma = probe.shadow_sigma(hop_distance).map_err(|e| fail(e.to_string()))?;

    let residual = |midpoint: f64| -> Result<f64, ChannelError> {
        let p = template.with_success(link, midpoint, slope);
        Ok(p.path_success(anchor.composition, anchor.distance_m, retries_per_hop)? - target)
    };

    let span = 40.0 / slope + 12.0 * sigma + 10.0;
    let (mut lo, mut hi) = (mean - span, mean + span);
    let (r_lo, r_hi) = (residual(lo)?, residual(hi)?);
    if !(r_lo >= 0.0 && r_hi <= 0.0) {
        return Err(fail(format!(
            "no midpoint reaches {}% (success spans {:.4}..{:.4})",
            anchor.efficiency_pct,
            r_hi + target,
            r_lo + target
        )));
    }
    for _ in 0..CALIBRATION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if residual(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn solve_slope(
    link: LinkKind,
    template: &ProfileTemplate,
    primary: &CalibrationAnchor,
    second: &CalibrationAnchor,
    retries_per_hop: u32,
) -> Result<RadioProfile, ChannelError> {
    let target = second.efficiency_pct / 100.0;
    let fit = |log_slope: f64| -> Result<(RadioProfile, f64), ChannelError> {
        let slope = log_slope.exp();
        let midpoint = solve_midpoint(link, template, slope, primary, retries_per_hop)?;
        let p = template.with_success(link, midpoint, slope);
        let r = p.path_success(second.composition, second.distance_m, retries_per_hop)? - target;
        Ok((p, r))
    };

    let (mut lo, mut hi) = (SLOPE_MIN.ln(), SLOPE_MAX.ln());
    let (_, r_lo) = fit(lo)?;
    let (_, r_hi) = fit(hi)?;
    if r_lo.signum() == r_hi.signum() {
        return Err(ChannelError::Calibration {
            anchor: *second,
            reason: format!("no logistic slope in [{SLOPE_MIN}, {SLOPE_MAX}] per dB meets it together with {primary}"),
        });
    }
    let lo_sign = r_lo.signum();
    for _ in 0..CALIBRATION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let (_, r) = fit(mid)?;
        if r.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(fit(0.5 * (lo + hi))?.0)
}
