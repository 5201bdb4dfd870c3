//! Landing mission: phase machine and carrot-chasing heading laws.
//!
//! Coordinates are planar `(north, east)` pairs; headings are measured from
//! north toward east, so `atan2(east, north)` is a heading.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle::wrap_pi;
use crate::dynamics::{AircraftState, GliderParams};

pub type Point = Vector2<f64>;

fn bearing(v: &Point) -> f64 {
    v.y.atan2(v.x)
}

/// Mission phase. Only moves forward: Cruise, Loiter, Approach, Terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidancePhase {
    Cruise,
    Loiter,
    Approach,
    Terminal,
}

impl GuidancePhase {
    pub fn code(self) -> u8 {
        match self {
            GuidancePhase::Cruise => 0,
            GuidancePhase::Loiter => 1,
            GuidancePhase::Approach => 2,
            GuidancePhase::Terminal => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => GuidancePhase::Cruise,
            1 => GuidancePhase::Loiter,
            2 => GuidancePhase::Approach,
            3 => GuidancePhase::Terminal,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            GuidancePhase::Cruise => "cruise",
            GuidancePhase::Loiter => "loiter",
            GuidancePhase::Approach => "approach",
            GuidancePhase::Terminal => "terminal",
        }
    }
}

/// Candidate touchdown point with its runway heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandingSite {
    pub id: u32,
    pub north: f64,
    pub east: f64,
    pub elevation: f64,
    /// Runway heading, rad in (-π, π].
    pub runway_heading: f64,
}

impl LandingSite {
    pub fn position(&self) -> Point {
        Point::new(self.north, self.east)
    }

    pub fn runway_direction(&self) -> Point {
        Point::new(self.runway_heading.cos(), self.runway_heading.sin())
    }
}

/// Geometry knobs shared by every site's plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionDefaults {
    pub loiter_radius: f64,
    /// Distance of the loiter center behind the threshold along the extended
    /// runway centerline.
    pub loiter_offset: f64,
    /// Cut-off altitude above site elevation.
    pub cutoff_height: f64,
    /// Approach trigger radius as a multiple of the loiter radius.
    pub approach_trigger_factor: f64,
    pub lookahead: f64,
    /// Angular lead of the loiter carrot, rad. Near 0.7 the inward pull of the
    /// carrot geometry cancels the heading lag of the proportional roll loop
    /// and the orbit settles within a few meters of the circle.
    pub loiter_lead: f64,
}

impl Default for MissionDefaults {
    fn default() -> Self {
        Self {
            loiter_radius: 400.0,
            loiter_offset: 2100.0,
            cutoff_height: 420.0,
            approach_trigger_factor: 2.0,
            lookahead: 300.0,
            loiter_lead: 0.7,
        }
    }
}

/// Everything the heading laws need for one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub site: LandingSite,
    /// Start of the cruise segment (where the engine quit).
    pub cruise_origin: Point,
    pub loiter_center: Point,
    pub loiter_radius: f64,
    /// Cut-off altitude (absolute).
    pub cutoff_alt: f64,
    pub approach_trigger_radius: f64,
    pub lookahead: f64,
    pub loiter_lead: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("reference segment has zero length")]
    DegenerateSegment,
    #[error("aircraft is at the loiter center")]
    DegenerateCenter,
    #[error("carrot coincides with the aircraft")]
    DegenerateCarrot,
    #[error("no heading law for the terminal phase")]
    Terminal,
    #[error("invalid plan: {0}")]
    InvalidPlan(&'static str),
}

impl MissionPlan {
    pub fn for_site(site: LandingSite, origin: Point, defaults: &MissionDefaults) -> Self {
        Self {
            site,
            cruise_origin: origin,
            loiter_center: site.position() - defaults.loiter_offset * site.runway_direction(),
            loiter_radius: defaults.loiter_radius,
            cutoff_alt: site.elevation + defaults.cutoff_height,
            approach_trigger_radius: defaults.approach_trigger_factor * defaults.loiter_radius,
            lookahead: defaults.lookahead,
            loiter_lead: defaults.loiter_lead,
        }
    }

    pub fn validate(&self) -> Result<(), GuidanceError> {
        if !(self.loiter_radius > 0.0) {
            return Err(GuidanceError::InvalidPlan("loiter radius must be positive"));
        }
        if !(self.loiter_lead > 0.0 && self.loiter_lead <= std::f64::consts::FRAC_PI_2) {
            return Err(GuidanceError::InvalidPlan("loiter lead must lie in (0, pi/2]"));
        }
        if !(self.lookahead > 0.0) {
            return Err(GuidanceError::InvalidPlan("lookahead must be positive"));
        }
        if !(self.cutoff_alt > self.site.elevation) {
            return Err(GuidanceError::InvalidPlan(
                "cut-off altitude must be above the site",
            ));
        }
        Ok(())
    }
}

/// Advances the phase machine. Phases never move backward; Loiter may be
/// skipped when the aircraft is already below the cut-off altitude.
pub fn phase_transition(
    phase: GuidancePhase,
    state: &AircraftState,
    plan: &MissionPlan,
) -> GuidancePhase {
    use GuidancePhase::*;
    if phase == Terminal || state.alt <= plan.site.elevation {
        return Terminal;
    }
    let below_cutoff = state.alt < plan.cutoff_alt;
    match phase {
        Cruise if below_cutoff => Approach,
        Cruise => {
            let to_center = (plan.loiter_center - state.position()).norm();
            if to_center < plan.loiter_radius && state.alt > plan.cutoff_alt {
                Loiter
            } else {
                Cruise
            }
        }
        Loiter if below_cutoff => Approach,
        other => other,
    }
}

/// Carrot-chasing heading along the line from `start` through `end`.
///
/// Projects the aircraft onto the line, places the carrot `lookahead` meters
/// further along it and steers at the carrot.
pub fn cruise_heading(
    start: &Point,
    end: &Point,
    position: &Point,
    lookahead: f64,
) -> Result<f64, GuidanceError> {
    let segment = end - start;
    if segment.norm() == 0.0 {
        return Err(GuidanceError::DegenerateSegment);
    }
    let theta = bearing(&segment);
    let offset = position - start;
    let theta_u = bearing(&offset);
    let beta = theta - theta_u;
    let along = offset.norm() * beta.cos();
    let carrot = start + (along + lookahead) * Point::new(theta.cos(), theta.sin());
    let to_carrot = carrot - position;
    if to_carrot.norm() == 0.0 {
        return Err(GuidanceError::DegenerateCarrot);
    }
    Ok(bearing(&to_carrot))
}

/// Loiter heading and the signed radial cross-track distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoiterCommand {
    pub psi_des: f64,
    /// `|O - p| - R`, positive outside the circle.
    pub cross_track: f64,
}

/// Carrot-chasing heading around a circle: the carrot sits on the circle
/// `lead` radians ahead of the aircraft's own angular position.
pub fn loiter_heading(
    center: &Point,
    radius: f64,
    lead: f64,
    position: &Point,
) -> Result<LoiterCommand, GuidanceError> {
    let radial = position - center;
    if radial.norm() == 0.0 {
        return Err(GuidanceError::DegenerateCenter);
    }
    let theta_l = bearing(&radial);
    let angle = lead + theta_l;
    let carrot = center + radius * Point::new(angle.cos(), angle.sin());
    let to_carrot = carrot - position;
    if to_carrot.norm() == 0.0 {
        return Err(GuidanceError::DegenerateCarrot);
    }
    Ok(LoiterCommand {
        psi_des: bearing(&to_carrot),
        cross_track: radial.norm() - radius,
    })
}

/// Runway-aligned entry point on the far side of the loiter circle.
pub fn approach_start(plan: &MissionPlan, site: &LandingSite) -> Point {
    let back = site.runway_heading - std::f64::consts::PI;
    plan.loiter_center + plan.loiter_radius * Point::new(back.cos(), back.sin())
}

/// Desired heading and flight-path angle, plus cross-track bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightPathTarget {
    pub psi: f64,
    pub gamma: f64,
    /// Radial loiter error, only in the loiter phase.
    pub loiter_cross_track: Option<f64>,
}

/// Start of the final-approach reference line for the current position.
///
/// Far from the site the line starts at the loiter-circle entry point; inside
/// the trigger radius it starts on the extended centerline one trigger radius
/// out, so the reference line stays runway-aligned down to the threshold.
pub fn approach_reference_start(plan: &MissionPlan, position: &Point) -> Point {
    let site = &plan.site;
    if (position - site.position()).norm() > plan.approach_trigger_radius {
        approach_start(plan, site)
    } else {
        site.position() - plan.approach_trigger_radius * site.runway_direction()
    }
}

pub fn desired_flight_path(
    phase: GuidancePhase,
    state: &AircraftState,
    plan: &MissionPlan,
    params: &GliderParams,
) -> Result<FlightPathTarget, GuidanceError> {
    let p = state.position();
    match phase {
        GuidancePhase::Cruise => {
            let start = if (plan.loiter_center - plan.cruise_origin).norm() > 0.0 {
                plan.cruise_origin
            } else {
                // Engine quit right over the loiter center.
                plan.loiter_center - plan.site.runway_direction()
            };
            Ok(FlightPathTarget {
                psi: cruise_heading(&start, &plan.loiter_center, &p, plan.lookahead)?,
                gamma: params.gamma_opt,
                loiter_cross_track: None,
            })
        }
        GuidancePhase::Loiter => {
            let cmd = loiter_heading(&plan.loiter_center, plan.loiter_radius, plan.loiter_lead, &p)?;
            Ok(FlightPathTarget {
                psi: cmd.psi_des,
                gamma: params.gamma_opt,
                loiter_cross_track: Some(cmd.cross_track),
            })
        }
        GuidancePhase::Approach => {
            let threshold = plan.site.position();
            let start = approach_reference_start(plan, &p);
            let psi = cruise_heading(&start, &threshold, &p, plan.lookahead)?;
            let remaining = (threshold - p).norm();
            let aim = (plan.site.elevation - state.alt).atan2(remaining);
            Ok(FlightPathTarget {
                psi: wrap_pi(psi),
                gamma: aim.clamp(params.gamma_min, params.gamma_opt),
                loiter_cross_track: None,
            })
        }
        GuidancePhase::Terminal => Err(GuidanceError::Terminal),
    }
}
